"""Energies, volume, error norms and discrete energy-law checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict, fields

import numpy as np

from .model import ModelParams, boundary_G, double_well_F


@dataclass
class DiagnosticsRecord:
    t: float
    step: int
    E_original: float
    E_ieq: float
    volume: float
    iterations: int
    energy_residual: float
    diss_mu: float
    diss_u: float
    diss_wall_relax: float
    diss_slip: float
    wall_work: float
    u_gap: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_dict(self) -> dict:
        return asdict(self)

    @property
    def dissipation(self) -> float:
        return (self.diss_mu + self.diss_u + self.diss_wall_relax + self.diss_slip
                + self.wall_work)


def ieq_energy(grid, params: ModelParams, u, phi, U, W) -> float:
    """E(u, phi, U, W) of the quadratized system, including -lam C |Gamma|."""
    lam, eps = params.lam, params.epsilon
    kin = 0.5 * (grid.inner(u[0], u[0]) + grid.inner(u[1], u[1]))
    return (kin + 0.5 * lam * eps * grid.grad_norm2(phi)
            + lam / (4 * eps) * grid.inner(U, U)
            + lam * grid.boundary_inner(W, W) - lam * params.C * grid.wall_length)


def energy_original(grid, state, params: ModelParams) -> float:
    u, phi = state.u, state.phi
    lam, eps = params.lam, params.epsilon
    kin = 0.5 * (grid.inner(u[0], u[0]) + grid.inner(u[1], u[1]))
    mix = lam * (0.5 * eps * grid.grad_norm2(phi) + grid.integral(double_well_F(phi, params)))
    walls = grid.trace(phi)
    return kin + mix + lam * grid.wx * float(np.sum(boundary_G(walls, params)))


def energy_ieq(grid, state, params: ModelParams, scheme: str, dt: float) -> float:
    """Discrete energy of the chosen scheme at the state's current level.

    cn:   E(u, phi, U, W) + dt^2/8 |grad p|^2
    bdf2: E/2 at level n + E/2 at the extrapolated level 2S^n - S^{n-1}
          + dt^2/3 |grad p|^2
    """
    p2 = grid.grad_norm2(state.p)
    E_n = ieq_energy(grid, params, state.u, state.phi, state.U, state.W)
    if scheme == "cn":
        return E_n + dt**2 / 8 * p2
    if scheme == "bdf2":
        if state.phi_prev is None:
            return E_n + dt**2 / 3 * p2
        star = lambda a, b: 2 * a - b  # noqa: E731
        E_s = ieq_energy(grid, params, star(state.u, state.u_prev),
                         star(state.phi, state.phi_prev), star(state.U, state.U_prev),
                         star(state.W, state.W_prev))
        return 0.5 * E_n + 0.5 * E_s + dt**2 / 3 * p2
    raise ValueError(f"unknown scheme {scheme!r}")


def volume(grid, state) -> float:
    return grid.integral(state.phi)


def u_gap(grid, state) -> float:
    """||U||^2 - ||phi^2 - 1||^2."""
    q = state.phi**2 - 1.0
    return grid.inner(state.U, state.U) - grid.inner(q, q)


def l2_error(grid, a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    d = a - b
    if d.ndim == 3:
        return math.sqrt(sum(grid.inner(c, c) for c in d))
    return grid.norm(d)


def dissipation_terms(grid, params: ModelParams, mu, u_mid, phidot_wall):
    """Dissipation components of one step.

    u_mid is the intermediate velocity at the time level where the scheme
    evaluates viscous and slip terms; phidot_wall the wall material derivative.
    """
    ell, nu = params.ell, params.nu
    uw = params.wall_speeds[:, None]
    us = grid.trace(u_mid[0]) - uw
    return dict(
        diss_mu=params.mobility * grid.grad_norm2(mu),
        diss_u=nu * (grid.grad_norm2(u_mid[0]) + grid.grad_norm2(u_mid[1])),
        diss_wall_relax=params.lam / params.gamma * grid.boundary_inner(phidot_wall, phidot_wall),
        diss_slip=nu * ell * grid.boundary_inner(us, us),
        wall_work=nu * ell * grid.boundary_inner(us, np.broadcast_to(uw, us.shape)),
    )


def energy_law_check(rec_n: DiagnosticsRecord, rec_np1: DiagnosticsRecord, scheme: str,
                     dt: float) -> float:
    """CN: signed residual of the energy equality.  BDF2: slack RHS - LHS."""
    d = dt * rec_np1.dissipation
    if scheme == "cn":
        return rec_np1.E_ieq - rec_n.E_ieq + d
    if scheme == "bdf2":
        return rec_n.E_ieq - d - rec_np1.E_ieq
    raise ValueError(f"unknown scheme {scheme!r}")
