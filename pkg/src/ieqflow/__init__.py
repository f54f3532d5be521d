"""Energy-stable phase-field moving contact line solver.

Fourier x Legendre spectral-Galerkin discretisation of the
Navier-Stokes-Cahn-Hilliard system with generalized Navier and dynamic
contact-line wall conditions, advanced by linear Crank-Nicolson or BDF2
schemes built on invariant energy quadratization.
"""
from .diagnostics import DiagnosticsRecord
from .model import ModelParams
from .spectral import BoundaryField, Field, Grid, grid_from_counts, make_grid
from .stepper import SchemeConfig, State, march, step

__version__ = "0.1.0"

__all__ = ["BoundaryField", "DiagnosticsRecord", "Field", "Grid", "ModelParams",
           "SchemeConfig", "State", "grid_from_counts", "make_grid", "march", "step"]
