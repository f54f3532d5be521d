"""Crank-Nicolson and BDF2 IEQ time steppers with pressure correction.

Each step solves one linear coupled system for (mu, phi^{n+1}, u~^{n+1})
after eliminating the auxiliary variables U and W, updates U and W, and then
projects the intermediate velocity onto the weakly divergence-free space.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import diagnostics as diag
from .model import ModelParams, Z_of, init_aux
from .solver import (CoupledOperator, Preconditioner, bdf_coeffs, bicgstab,
                     cn_coeffs, neumann_solver, project, skew_convection_B)
from .spectral import Grid

log = logging.getLogger(__name__)

SCHEMES = ("cn", "bdf2")


@dataclass
class SchemeConfig:
    scheme: str = "bdf2"
    dt: float = 0.01
    t_max: float = 1.0
    solver_tol: float = 1e-8
    solver_maxit: int = 1000
    rotational_pressure: bool = False
    dealias: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.solver_tol > 0:
            raise ValueError("solver_tol must be positive")


@dataclass
class State:
    """Solution at level n (and n-1 once a step has been taken).

    u has shape (2, n_x, n_y); W has shape (2, n_x) with row 0 the bottom wall.
    """

    t: float
    phi: np.ndarray
    u: np.ndarray
    p: np.ndarray
    U: np.ndarray
    W: np.ndarray
    phi_prev: np.ndarray | None = None
    u_prev: np.ndarray | None = None
    p_prev: np.ndarray | None = None
    U_prev: np.ndarray | None = None
    W_prev: np.ndarray | None = None
    mu: np.ndarray | None = None
    step: int = 0

    @property
    def has_prev(self) -> bool:
        return self.phi_prev is not None

    def copy(self) -> "State":
        cp = lambda a: None if a is None else a.copy()  # noqa: E731
        return State(self.t, *(cp(getattr(self, k)) for k in
                               ("phi", "u", "p", "U", "W", "phi_prev", "u_prev",
                                "p_prev", "U_prev", "W_prev", "mu")), step=self.step)


@dataclass
class CnRhs:
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    g1: np.ndarray
    g2: np.ndarray


def initial_state(grid: Grid, params: ModelParams, phi0, u0, t0=0.0) -> State:
    u0 = np.array(u0, dtype=float)
    u0[1][:, 0] = 0.0
    u0[1][:, -1] = 0.0
    U, W = init_aux(phi0, params)
    return State(t0, np.array(phi0, dtype=float), u0, np.zeros(grid.shape), U, W)


def extrapolate_star(S_n, S_nm1, kind: str = "half"):
    """3/2 S^n - 1/2 S^{n-1} ("half") or 2 S^n - S^{n-1} ("full")."""
    if kind == "half":
        return 1.5 * S_n - 0.5 * S_nm1
    if kind == "full":
        return 2.0 * S_n - S_nm1
    raise ValueError(f"unknown extrapolation kind {kind!r}")


def project_pressure(grid: Grid, u_tilde, p_old, factor: float, rotational=False, nu=0.0):
    """Pressure-correction step.

    Solves (grad psi, grad q) = (u_tilde, grad q) / factor over the Neumann
    space, then u = u_tilde - factor grad psi and p = p_old + psi (minus
    nu div u_tilde in rotational form).  Returns (u, p, psi).
    """
    g = grid
    div = g.div_weak(u_tilde)
    psi = neumann_solver(g).solve_functional(-g.W * div / factor)
    u_new = u_tilde - factor * g.grad(psi)
    p_new = p_old + psi
    if rotational:
        p_new = p_new - nu * div
        p_new -= g.mean(p_new)
    return u_new, p_new, psi


def update_aux(grid, params, phis, Zs, phi_new, phi_hat, U_hat, W_hat, dealias=False):
    """U = U_hat + 2 phis (phi_new - phi_hat), W = W_hat + Z (phi_new - phi_hat)|wall / 2."""
    dphi = phi_new - phi_hat
    U = U_hat + 2.0 * grid.product(phis, dphi, dealias)
    W = W_hat + 0.5 * grid.wall_product(Zs, grid.trace(dphi), dealias)
    return U, W


def update_aux_cn(grid, params, state: State, phi_new, dealias=False):
    phis = extrapolate_star(state.phi, state.phi_prev, "half")
    Zs = Z_of(grid.trace(phis), params)
    return update_aux(grid, params, phis, Zs, phi_new, state.phi, state.U, state.W, dealias)


def assemble_cn_rhs(grid: Grid, params: ModelParams, state: State, dt: float,
                    dealias=False) -> CnRhs:
    if not state.has_prev:
        raise ValueError("Crank-Nicolson step needs the previous time level")
    g = grid
    lam, eps, nu, gam = params.lam, params.epsilon, params.nu, params.gamma
    P = lambda a, b: g.product(a, b, dealias)  # noqa: E731
    Pw = lambda a, b: g.wall_product(a, b, dealias)  # noqa: E731
    phis = extrapolate_star(state.phi, state.phi_prev, "half")
    us = extrapolate_star(state.u, state.u_prev, "half")
    phis_w = g.trace(phis)
    Z = Z_of(phis_w, params)
    dphis = g.tangential_deriv(phis_w)
    phi, u = state.phi, state.u
    phi_w = g.trace(phi)
    ux_w = g.trace(u[0])

    f1 = phi - dt / 2 * g.div_weak(np.stack((P(u[0], phis), P(u[1], phis))))
    f2 = (lam * eps / 2 * g.laplacian(phi) - lam / eps * P(phis, state.U)
          + lam / eps * P(phis, P(phis, phi)))
    B = skew_convection_B(g, us, u, dealias)
    gp = g.grad(state.p)
    f3 = np.stack([0.5 * u[k] - dt / 4 * B[k] + nu * dt / 4 * g.laplacian(u[k]) - dt / 2 * gp[k]
                   for k in range(2)])
    relax = phi_w / dt - 0.5 * Pw(ux_w, dphis)
    g1 = (-nu * g.normal_deriv(u[0]) - nu * params.ell * (ux_w - 2 * params.wall_speeds[:, None])
          + 2 * lam / gam * Pw(relax, dphis))
    g2 = -eps * g.normal_deriv(phi) + 2 / gam * relax - 2 * Pw(Z, state.W) + 0.5 * Pw(Z, Pw(Z, phi_w))
    return CnRhs(f1, f2, f3, g1, g2)


def cn_rhs_vector(grid, params, rhs: CnRhs, dt):
    b = np.stack((rhs.f1, rhs.f2 + grid.lift(params.lam / 2 * rhs.g2),
                  rhs.f3[0] + grid.lift(dt / 4 * rhs.g1), rhs.f3[1]))
    return project(grid, b)


def _solve(grid, coeffs, b, phibar, x0, config: SchemeConfig):
    op = CoupledOperator(grid, coeffs)
    shift = np.zeros_like(b)
    shift[1] = phibar
    b_eff = project(grid, b - op.apply_raw(shift))
    pc = Preconditioner(grid, coeffs)
    # removing the mean can leave a right-hand side made of rounding noise
    floor = 1e3 * np.finfo(float).eps * np.linalg.norm(b)
    X, its = bicgstab(op, pc, b_eff, tol=config.solver_tol, maxit=config.solver_maxit,
                      x0=project(grid, x0), atol=floor)
    X[1] += phibar
    return X, its


def _initial_guess(state: State, grid):
    x0 = np.zeros((4,) + grid.shape)
    if state.mu is not None:
        x0[0] = state.mu
    if state.has_prev:
        x0[1] = 2 * state.phi - state.phi_prev
        x0[2:] = 2 * state.u - state.u_prev
    else:
        x0[1] = state.phi
        x0[2:] = state.u
    return x0


def step_cn(grid: Grid, params: ModelParams, state: State, config: SchemeConfig):
    """One Crank-Nicolson step; returns (new_state, DiagnosticsRecord)."""
    dt, dealias = config.dt, config.dealias
    phis = extrapolate_star(state.phi, state.phi_prev, "half")
    us = extrapolate_star(state.u, state.u_prev, "half")
    coeffs = cn_coeffs(grid, params, dt, phis, us, dealias)
    rhs = assemble_cn_rhs(grid, params, state, dt, dealias)
    b = cn_rhs_vector(grid, params, rhs, dt)
    phibar = grid.mean(state.phi)
    X, its = _solve(grid, coeffs, b, phibar, _initial_guess(state, grid), config)
    mu, phi_new, u_tilde = X[0], X[1], X[2:4].copy()

    U, W = update_aux(grid, params, phis, coeffs.Zs, phi_new, state.phi, state.U, state.W, dealias)
    u_new, p_new, _ = project_pressure(grid, u_tilde, state.p, dt / 2,
                                       config.rotational_pressure, params.nu)
    new = State(state.t + dt, phi_new, u_new, p_new, U, W,
                phi_prev=state.phi, u_prev=state.u, p_prev=state.p,
                U_prev=state.U, W_prev=state.W, mu=mu, step=state.step + 1)

    u_half = 0.5 * (u_tilde + state.u)
    phidot = (grid.trace(phi_new - state.phi) / dt
              + grid.wall_product(grid.trace(u_half[0]), coeffs.dphis, dealias))
    terms = diag.dissipation_terms(grid, params, mu, u_half, phidot)
    return new, _record(grid, params, new, "cn", dt, its, terms)


def _step_backward(grid, params, state: State, config: SchemeConfig, order: int):
    dt, dealias = config.dt, config.dealias
    if order == 2:
        alpha = 1.5
        star = lambda a, b: 2 * a - b  # noqa: E731
        hat = lambda a, b: (4 * a - b) / 3  # noqa: E731
        phis, us = star(state.phi, state.phi_prev), star(state.u, state.u_prev)
        phi_h, u_h = hat(state.phi, state.phi_prev), hat(state.u, state.u_prev)
        U_h, W_h = hat(state.U, state.U_prev), hat(state.W, state.W_prev)
    else:
        alpha = 1.0
        phis, us = state.phi, state.u
        phi_h, u_h, U_h, W_h = state.phi, state.u, state.U, state.W
    h = dt / alpha
    g = grid
    lam, eps = params.lam, params.epsilon
    coeffs = bdf_coeffs(g, params, dt, phis, us, alpha, dealias)
    P = lambda a, b: g.product(a, b, dealias)  # noqa: E731
    Pw = lambda a, b: g.wall_product(a, b, dealias)  # noqa: E731
    Z, dphis = coeffs.Zs, coeffs.dphis
    phi_hw = g.trace(phi_h)

    b = np.empty((4,) + g.shape)
    b[0] = phi_h
    b[1] = -lam / eps * P(phis, U_h - 2 * P(phis, phi_h)) + g.lift(
        lam / (params.gamma * h) * phi_hw - lam * Pw(Z, W_h - 0.5 * Pw(Z, phi_hw)))
    gp = g.grad(state.p)
    b[2:] = u_h - h * gp
    b[2] += g.lift(h * params.nu * params.ell * params.wall_speeds[:, None]
                   + lam / params.gamma * Pw(phi_hw, dphis))
    b = project(g, b)

    X, its = _solve(g, coeffs, b, g.mean(state.phi), _initial_guess(state, g), config)
    mu, phi_new, u_tilde = X[0], X[1], X[2:4].copy()
    U, W = update_aux(g, params, phis, Z, phi_new, phi_h, U_h, W_h, dealias)
    u_new, p_new, _ = project_pressure(g, u_tilde, state.p, h,
                                       config.rotational_pressure, params.nu)
    new = State(state.t + dt, phi_new, u_new, p_new, U, W,
                phi_prev=state.phi, u_prev=state.u, p_prev=state.p,
                U_prev=state.U, W_prev=state.W, mu=mu, step=state.step + 1)
    phidot = g.trace(phi_new - phi_h) / h + Pw(g.trace(u_tilde[0]), dphis)
    terms = diag.dissipation_terms(g, params, mu, u_tilde, phidot)
    return new, its, terms


def step_bdf2(grid: Grid, params: ModelParams, state: State, config: SchemeConfig):
    """One BDF2 step; returns (new_state, DiagnosticsRecord)."""
    if not state.has_prev:
        raise ValueError("BDF2 step needs the previous time level")
    new, its, terms = _step_backward(grid, params, state, config, order=2)
    return new, _record(grid, params, new, "bdf2", config.dt, its, terms)


def startup_first_order(grid: Grid, params: ModelParams, state0: State, config: SchemeConfig):
    """Backward-Euler IEQ step producing level 1 from level 0.

    The record's energy_residual holds the slack of the first-order law
    E^0 - dt*D - E^1 - dt^2/2 |grad p^1|^2 (nonnegative up to solver error).
    """
    new, its, terms = _step_backward(grid, params, state0, config, order=1)
    rec = _record(grid, params, new, config.scheme, config.dt, its, terms)
    E0 = diag.ieq_energy(grid, params, state0.u, state0.phi, state0.U, state0.W)
    E1 = diag.ieq_energy(grid, params, new.u, new.phi, new.U, new.W)
    dp = grid.grad_norm2(new.p - state0.p)
    rec.energy_residual = E0 - config.dt * rec.dissipation - E1 - config.dt**2 / 2 * dp
    return new, rec


def _record(grid, params, state, scheme, dt, its, terms) -> diag.DiagnosticsRecord:
    return diag.DiagnosticsRecord(
        t=state.t, step=state.step,
        E_original=diag.energy_original(grid, state, params),
        E_ieq=diag.energy_ieq(grid, state, params, scheme, dt),
        volume=diag.volume(grid, state), iterations=its,
        energy_residual=float("nan"), u_gap=diag.u_gap(grid, state), **terms)


def initial_record(grid, params, state, scheme, dt) -> diag.DiagnosticsRecord:
    zero = dict(diss_mu=0.0, diss_u=0.0, diss_wall_relax=0.0, diss_slip=0.0, wall_work=0.0)
    return _record(grid, params, state, scheme, dt, 0, zero)


def step(grid, params, state: State, config: SchemeConfig, prev_record=None):
    """Advance one step with the configured scheme (startup if needed)."""
    if not state.has_prev:
        return startup_first_order(grid, params, state, config)
    fn = step_cn if config.scheme == "cn" else step_bdf2
    new, rec = fn(grid, params, state, config)
    if prev_record is not None and prev_record.step == state.step and state.step >= 1:
        rec.energy_residual = diag.energy_law_check(prev_record, rec, config.scheme, config.dt)
    return new, rec


def march(grid, params, state: State, config: SchemeConfig, t_end=None, callback=None):
    """Step until t_end (default config.t_max); returns (state, records)."""
    t_end = config.t_max if t_end is None else t_end
    nsteps = int(round((t_end - state.t) / config.dt))
    records = []
    prev = None
    if state.has_prev:
        prev = _record(grid, params, state, config.scheme, config.dt, 0,
                       dict(diss_mu=0.0, diss_u=0.0, diss_wall_relax=0.0,
                            diss_slip=0.0, wall_work=0.0))
    for _ in range(nsteps):
        state, rec = step(grid, params, state, config, prev)
        records.append(rec)
        prev = rec
        if callback is not None:
            callback(state, rec)
    return state, records
