"""Physical parameters, potentials, IEQ auxiliaries and initial conditions."""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

SQRT2_3 = math.sqrt(2.0) / 3.0


@dataclass(frozen=True)
class ModelParams:
    """Model constants.  Defaults are the shear-flow benchmark values."""

    lam: float = 20.0
    epsilon: float = 0.05
    mobility: float = 0.0125
    nu: float = 1.0 / 0.6
    gamma: float = 100.0
    ell: float = 1.0 / 0.19
    theta_s: float = math.pi / 2
    u_w_top: float = 0.0
    u_w_bottom: float = 0.0
    eta: float = 0.1
    L_x: float = 10.0

    def __post_init__(self):
        for name in ("lam", "epsilon", "mobility", "nu", "gamma", "L_x"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.ell < 0:
            raise ValueError("ell must be nonnegative")
        if not self.eta > 0:
            raise ValueError("eta must be positive so that G + C > 0")

    @property
    def C(self) -> float:
        return SQRT2_3 + self.eta

    @property
    def wall_speeds(self) -> np.ndarray:
        """(bottom, top) wall speeds in x."""
        return np.array([self.u_w_bottom, self.u_w_top])

    def slip(self, phi=None):
        """Slip coefficient ell(phi); constant for now."""
        if phi is None:
            return self.ell
        return np.full_like(np.asarray(phi, dtype=float), self.ell)

    def as_dict(self) -> dict:
        return asdict(self)


def double_well_F(phi, params: ModelParams):
    phi = np.asarray(phi, dtype=float)
    return (phi**2 - 1.0) ** 2 / (4.0 * params.epsilon)


def f_deriv(phi, params: ModelParams):
    phi = np.asarray(phi, dtype=float)
    return phi * (phi**2 - 1.0) / params.epsilon


def boundary_G(phi, params: ModelParams):
    phi = np.asarray(phi, dtype=float)
    return -SQRT2_3 * math.cos(params.theta_s) * np.sin(0.5 * math.pi * phi)


def boundary_g(phi, params: ModelParams):
    phi = np.asarray(phi, dtype=float)
    return -(math.sqrt(2.0) * math.pi / 6.0) * math.cos(params.theta_s) * np.cos(0.5 * math.pi * phi)


def Z_of(phi, params: ModelParams):
    return boundary_g(phi, params) / np.sqrt(boundary_G(phi, params) + params.C)


def init_aux(phi: np.ndarray, params: ModelParams):
    """Exact auxiliary variables: U = phi^2 - 1 and W = sqrt(G(phi|wall) + C).

    W has shape (2, n_x) with row 0 the bottom wall.
    """
    U = phi**2 - 1.0
    walls = np.stack((phi[:, 0], phi[:, -1]))
    W = np.sqrt(boundary_G(walls, params) + params.C)
    return U, W


def initial_phi_stripe(grid, params: ModelParams) -> np.ndarray:
    X, _ = grid.meshgrid()
    L = params.L_x
    return np.tanh((0.25 * L - np.abs(X - 0.5 * L)) / (math.sqrt(2.0) * params.epsilon))


def initial_velocity_couette(grid, params: ModelParams) -> np.ndarray:
    """Linear shear between the walls; returns u with shape (2, n_x, n_y)."""
    _, Y = grid.meshgrid()
    ux = params.u_w_bottom * (1.0 - Y) / 2.0 + params.u_w_top * (1.0 + Y) / 2.0
    return np.stack((ux, np.zeros_like(ux)))


def initial_phi_drop(grid, params: ModelParams, center_x=None, radius=0.5) -> np.ndarray:
    """Half-disk drop (+1 inside) sitting on the bottom wall."""
    if not 0.0 < radius < 1.0:
        raise ValueError(f"drop radius must lie in (0, 1), got {radius}")
    if center_x is None:
        center_x = 0.5 * params.L_x
    X, Y = grid.meshgrid()
    dxp = (X - center_x + 0.5 * params.L_x) % params.L_x - 0.5 * params.L_x
    r = np.hypot(dxp, Y + 1.0)
    return np.tanh((radius - r) / (math.sqrt(2.0) * params.epsilon))
