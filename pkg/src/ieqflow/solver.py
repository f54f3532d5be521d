"""Matrix-free coupled operator, its spectral preconditioner, BiCGSTAB and the
per-mode Neumann Poisson solve.

Unknown vectors are stacked arrays of shape ``(4, n_x, n_y)`` holding
``(mu, phi, u_x, u_y)``.  Operator images are returned as Riesz
representatives under the discrete L2 inner product, so ``grid.inner(AX, X)``
is the bilinear form evaluated at ``(X, X)``.  The mu and phi blocks live in
the zero-mean subspace and u_y vanishes on the walls; `project` enforces both.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import ModelParams, Z_of
from .spectral import Grid

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """BiCGSTAB did not reach the requested tolerance."""

    def __init__(self, msg, x=None, residual=None, iterations=None):
        super().__init__(msg)
        self.x = x
        self.residual = residual
        self.iterations = iterations


@dataclass
class CoupledCoeffs:
    """Frozen coefficients of one linear solve.

    The bilinear form is, for unknowns (mu, phi, u) and tests (w, psi, v):

      (phi, w) - a_c (u phis, grad w) + a_M (grad mu, grad w)
      -(mu, psi) + b_g (grad phi, grad psi) + b_U (phis^2 phi, psi)
          + lam_gamma (ring, psi)_G + b_Z (Z^2 phi, psi)_G
      d_m (u, v) + d_b (B(us, u), v) + d_nu (grad u, grad v)
          + d_nu ell (u_x, v_x)_G + d_c (phis grad mu, v) + d_phi (ring dphis, v_x)_G

    with ring = c_phi phi + c_u u_x dphis on the walls.
    """

    phis: np.ndarray
    us: np.ndarray
    Zs: np.ndarray
    dphis: np.ndarray
    ell: float
    lam_gamma: float
    a_c: float
    a_M: float
    b_g: float
    b_U: float
    b_Z: float
    c_phi: float
    c_u: float
    d_m: float
    d_b: float
    d_nu: float
    d_c: float
    d_phi: float
    dealias: bool = False


def _star_coeffs(grid, params, phis, us, dealias):
    walls = grid.trace(phis)
    return dict(
        phis=phis, us=us, Zs=Z_of(walls, params),
        dphis=grid.tangential_deriv(walls), ell=params.ell,
        lam_gamma=params.lam / params.gamma, dealias=dealias)


def cn_coeffs(grid: Grid, params: ModelParams, dt: float, phis, us, dealias=False):
    """Coefficients of the Crank-Nicolson solve (stars at t^{n+1/2})."""
    lam, eps = params.lam, params.epsilon
    return CoupledCoeffs(
        **_star_coeffs(grid, params, phis, us, dealias),
        a_c=dt / 2, a_M=params.mobility * dt,
        b_g=lam * eps / 2, b_U=lam / eps, b_Z=lam / 4,
        c_phi=1.0 / dt, c_u=0.5,
        d_m=0.5, d_b=dt / 4, d_nu=params.nu * dt / 4, d_c=dt / 2,
        d_phi=lam * dt / (2 * params.gamma))


def bdf_coeffs(grid: Grid, params: ModelParams, dt: float, phis, us, alpha=1.5,
               dealias=False):
    """Coefficients of a backward-difference solve.

    alpha = 3/2 gives BDF2, alpha = 1 the backward-Euler startup step.
    """
    lam, eps = params.lam, params.epsilon
    h = dt / alpha
    return CoupledCoeffs(
        **_star_coeffs(grid, params, phis, us, dealias),
        a_c=h, a_M=params.mobility * h,
        b_g=lam * eps, b_U=2 * lam / eps, b_Z=lam / 2,
        c_phi=1.0 / h, c_u=1.0,
        d_m=1.0, d_b=h, d_nu=params.nu * h, d_c=h,
        d_phi=lam * h / params.gamma)


def project(grid: Grid, X: np.ndarray) -> np.ndarray:
    """Remove the means of the mu/phi blocks and zero u_y on the walls."""
    X = X.copy()
    X[0] -= grid.mean(X[0])
    X[1] -= grid.mean(X[1])
    X[3][:, 0] = 0.0
    X[3][:, -1] = 0.0
    return X


def skew_convection_B(grid: Grid, a: np.ndarray, v: np.ndarray, dealias=False) -> np.ndarray:
    """Skew-symmetric convection (a.grad)v + (div a) v / 2 in weak form.

    Returns the Riesz representative of
    w -> ((a.grad)v, w)/2 - ((a.grad)w, v)/2, which agrees with the pointwise
    expression when a.n = 0 on the walls and satisfies (B(a, v), v) = 0
    exactly in the discrete inner product.
    """
    P = grid.product
    out = np.empty_like(v)
    for c in range(2):
        conv = P(a[0], grid.dx(v[c]), dealias) + P(a[1], grid.dy(v[c]), dealias)
        back = grid.adj_x(P(a[0], v[c], dealias)) + grid.adj_y(P(a[1], v[c], dealias))
        out[c] = 0.5 * (conv - back)
    return out


class CoupledOperator:
    """Matrix-free application of the coupled (mu, phi, u) system."""

    def __init__(self, grid: Grid, coeffs: CoupledCoeffs):
        self.grid = grid
        self.c = coeffs

    def ring(self, phi_w, ux_w):
        """Wall quantity c_phi phi + c_u u_x d_x(phis)."""
        c, g = self.c, self.grid
        return c.c_phi * phi_w + c.c_u * g.wall_product(ux_w, c.dphis, c.dealias)

    def apply_raw(self, X: np.ndarray) -> np.ndarray:
        g, c = self.grid, self.c
        P = lambda a, b: g.product(a, b, c.dealias)  # noqa: E731
        Pw = lambda a, b: g.wall_product(a, b, c.dealias)  # noqa: E731
        mu, phi = X[0], X[1]
        u = X[2:4]
        out = np.empty_like(X)

        flux = np.stack((P(u[0], c.phis), P(u[1], c.phis)))
        out[0] = phi + c.a_c * g.div_weak(flux) + c.a_M * g.stiff(mu)

        phi_w = g.trace(phi)
        ux_w = g.trace(u[0])
        ring = self.ring(phi_w, ux_w)
        out[1] = (-mu + c.b_g * g.stiff(phi) + c.b_U * P(c.phis, P(c.phis, phi))
                  + g.lift(c.lam_gamma * ring + c.b_Z * Pw(c.Zs, Pw(c.Zs, phi_w))))

        B = skew_convection_B(g, c.us, u, c.dealias)
        gm = g.grad(mu)
        for k in range(2):
            out[2 + k] = (c.d_m * u[k] + c.d_b * B[k] + c.d_nu * g.stiff(u[k])
                          + c.d_c * P(c.phis, gm[k]))
        out[2] += g.lift(c.d_nu * c.ell * ux_w + c.d_phi * Pw(ring, c.dphis))
        return out

    def apply(self, X: np.ndarray) -> np.ndarray:
        return project(self.grid, self.apply_raw(project(self.grid, X)))

    __call__ = apply


def apply_coupled_operator(grid, X, coeffs):
    return CoupledOperator(grid, coeffs).apply(X)


class Preconditioner:
    """Block upper-triangular preconditioner built from per-Fourier-mode solves.

    Velocity first: a constant-coefficient Helmholtz model of the u block
    (convection dropped, (d_x phis)^2 on the walls replaced by its mean).
    The exact velocity-to-(mu, phi) coupling is then subtracted and a
    constant-coefficient Schur complement model of the (mu, phi) block is
    solved.  In that model phis^2 and Z^2 become their domain / wall means and
    the velocity coupling phis grad(mu) enters through c1 = mean(phis^2), so
    the sign changes of phis across interfaces do not matter.
    """

    def __init__(self, grid: Grid, coeffs: CoupledCoeffs):
        self.grid = grid
        c = self.c = coeffs
        self.c1 = grid.mean(c.phis**2)
        self.c2 = float(np.mean(c.Zs**2))
        self.c3 = float(np.mean(c.dphis**2))
        self.s_phi = c.lam_gamma * c.c_phi + c.b_Z * self.c2
        self.s_u = c.d_nu * c.ell + c.d_phi * c.c_u * self.c3
        self._factor()

    def _factor(self):
        g, c = self.grid, self.c
        ny = g.ny
        wy, Dy = g.wy, g.Dy
        Ay = Dy.T * wy[None, :] / wy[:, None]
        I = np.eye(ny)
        Eb = np.zeros((ny, ny))
        Eb[0, 0] = 1.0 / wy[0]
        Eb[-1, -1] = 1.0 / wy[-1]
        kap = g.k**2
        L = kap[:, None, None] * I + (Ay @ Dy)[None]

        self.inv_ux = np.linalg.inv(c.d_m * I + c.d_nu * L + self.s_u * Eb)
        self.inv_uy = np.linalg.inv((c.d_m * I + c.d_nu * L)[:, 1:-1, 1:-1])
        # velocity Schur complement contribution to the mu block
        schur = (kap[:, None, None] * self.inv_ux
                 + Ay[None, :, 1:-1] @ self.inv_uy @ Dy[None, 1:-1, :])
        self.schur = c.a_c * c.d_c * self.c1 * schur

        A = np.zeros((len(kap), 2 * ny, 2 * ny))
        A[:, :ny, :ny] = c.a_M * L + self.schur
        A[:, :ny, ny:] = I
        A[:, ny:, :ny] = -I
        A[:, ny:, ny:] = c.b_g * L + c.b_U * self.c1 * I + self.s_phi * Eb
        self.A_mp = A
        inv_mp = np.empty_like(A)
        inv_mp[1:] = np.linalg.inv(A[1:])
        # zero mode: zero-mean constraints on mu and phi, bordered system
        nb = 2 * ny
        Bd = np.zeros((nb + 2, nb + 2))
        Bd[:nb, :nb] = A[0]
        Bd[:ny, nb] = 1.0
        Bd[ny:nb, nb + 1] = 1.0
        Bd[nb, :ny] = wy
        Bd[nb + 1, ny:nb] = wy
        inv_mp[0] = np.linalg.inv(Bd)[:nb, :nb]
        self.inv_mp = inv_mp

    def coupling(self, u: np.ndarray) -> np.ndarray:
        """Exact (mu, phi) rows of the operator applied to (0, 0, u)."""
        g, c = self.grid, self.c
        out = np.empty((2,) + g.shape)
        flux = np.stack((g.product(u[0], c.phis, c.dealias),
                         g.product(u[1], c.phis, c.dealias)))
        out[0] = c.a_c * g.div_weak(flux)
        ring = c.c_u * g.wall_product(g.trace(u[0]), c.dphis, c.dealias)
        out[1] = g.lift(c.lam_gamma * ring)
        return out

    def _modes(self, mats, F, interior=False):
        """Apply per-mode matrices to the y-profiles of the Fourier modes of F."""
        Fh = np.fft.rfft(F, axis=0)
        Xh = np.zeros_like(Fh)
        if interior:
            Xh[:, 1:-1] = np.einsum("kij,kj->ki", mats, Fh[:, 1:-1])
        else:
            Xh = np.einsum("kij,kj->ki", mats, Fh)
        return np.fft.irfft(Xh, n=self.grid.nx, axis=0)

    def _solve_mp(self, R):
        g, ny = self.grid, self.grid.ny
        Rh = np.fft.rfft(R, axis=1)
        v = np.concatenate((Rh[0], Rh[1]), axis=1)
        s = np.einsum("kij,kj->ki", self.inv_mp, v)
        return np.fft.irfft(np.stack((s[:, :ny], s[:, ny:])), n=g.nx, axis=1)

    def apply_model(self, X: np.ndarray) -> np.ndarray:
        """Image of the triangular model operator whose inverse `apply` is."""
        g, c = self.grid, self.c
        X = project(g, X)
        out = np.empty_like(X)
        Xh = np.fft.rfft(X[:2], axis=1)
        v = np.concatenate((Xh[0], Xh[1]), axis=1)
        s = np.einsum("kij,kj->ki", self.A_mp, v)
        ny = g.ny
        out[:2] = np.fft.irfft(np.stack((s[:, :ny], s[:, ny:])), n=g.nx, axis=1)
        out[:2] += self.coupling(X[2:])
        ux, uy = X[2], X[3]
        out[2] = c.d_m * ux + c.d_nu * g.stiff(ux) + g.lift(self.s_u * g.trace(ux))
        out[3] = c.d_m * uy + c.d_nu * g.stiff(uy)
        return project(g, out)

    def apply(self, R: np.ndarray) -> np.ndarray:
        g = self.grid
        R = project(g, R)
        X = np.empty_like(R)
        X[2] = self._modes(self.inv_ux, R[2])
        X[3] = self._modes(self.inv_uy, R[3], interior=True)
        Rm = project(g, np.concatenate((R[:2] - self.coupling(X[2:]), X[2:])))[:2]
        X[:2] = self._solve_mp(Rm)
        return project(g, X)

    __call__ = apply


def preconditioner_apply(grid, r, coeffs):
    return Preconditioner(grid, coeffs).apply(r)


def bicgstab(op, precond, b, tol=1e-8, maxit=500, x0=None, max_restarts=10, atol=0.0):
    """Right-preconditioned BiCGSTAB.

    Stops when ||b - A x|| <= max(tol * ||b||, atol) (Euclidean norm of the
    stacked representative).  Returns ``(x, iterations)``.  A breakdown restarts from
    the current iterate with a fresh shadow residual (at most `max_restarts`
    times); exhausting those or `maxit` raises ConvergenceError.
    """
    if precond is None:
        precond = lambda r: r  # noqa: E731
    bnorm = np.linalg.norm(b)
    if not np.isfinite(bnorm):
        raise ValueError("right-hand side is not finite")
    x = np.zeros_like(b) if x0 is None else x0.copy()
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    target = max(tol * bnorm, atol)
    restarts = 0
    it = 0

    r = b - op(x)
    if np.linalg.norm(r) <= target:
        return x, 0
    while True:
        rhat = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros_like(b)
        p = np.zeros_like(b)
        breakdown = False
        while it < maxit:
            it += 1
            rho_new = np.vdot(rhat, r)
            if abs(rho_new) < 1e-300 or omega == 0.0:
                log.debug("rho/omega breakdown: rho=%g omega=%g", abs(rho_new), omega)
                breakdown = True
                break
            beta = (rho_new / rho) * (alpha / omega)
            rho = rho_new
            p = r + beta * (p - omega * v)
            ph = precond(p)
            v = op(ph)
            denom = np.vdot(rhat, v)
            if denom == 0.0:
                breakdown = True
                break
            alpha = rho / denom
            s = r - alpha * v
            if np.linalg.norm(s) <= target:
                return x + alpha * ph, it
            sh = precond(s)
            t = op(sh)
            tt = np.vdot(t, t)
            omega = np.vdot(t, s) / tt if tt > 0 else 0.0
            x = x + alpha * ph + omega * sh
            r = s - omega * t
            rn = np.linalg.norm(r)
            if rn <= target:
                return x, it
            if not np.isfinite(rn):
                raise ConvergenceError("BiCGSTAB diverged", x, rn, it)
        if breakdown and restarts < max_restarts:
            restarts += 1
            log.debug("BiCGSTAB breakdown at iteration %d, restarting", it)
            r = b - op(x)
            if np.linalg.norm(r) <= target:
                return x, it
            continue
        res = float(np.linalg.norm(b - op(x)) / bnorm)
        why = "breakdown" if breakdown else f"no convergence in {maxit} iterations"
        raise ConvergenceError(f"BiCGSTAB {why} (relative residual {res:.3e})", x, res, it)


class NeumannSolver:
    """Poisson solves in F_m x {q in P_n : q'(+-1) = 0}, zero mean.

    The pressure and projection potential live in this space, so the
    corrected velocity keeps u_y = 0 on the walls exactly.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        g = grid
        cons = np.stack((g.Dy[0], g.Dy[-1]))
        self.Nb = scipy.linalg.null_space(cons)
        Ky = g.Dy.T @ (g.wy[:, None] * g.Dy)
        Wy = np.diag(g.wy)
        nb = self.Nb.shape[1]
        S = np.array([self.Nb.T @ (g.wx * (kk**2 * Wy + Ky)) @ self.Nb for kk in g.k])
        inv = np.empty_like(S)
        inv[1:] = np.linalg.inv(S[1:])
        Bd = np.zeros((nb + 1, nb + 1))
        Bd[:nb, :nb] = S[0]
        cvec = g.wy @ self.Nb
        Bd[:nb, nb] = cvec
        Bd[nb, :nb] = cvec
        inv[0] = np.linalg.inv(Bd)[:nb, :nb]
        self.inv = inv

    def solve_functional(self, F: np.ndarray) -> np.ndarray:
        """Solve (grad psi, grad q) = F(q) with F given on nodal test functions."""
        g = self.grid
        Fh = np.fft.rfft(F, axis=0) @ self.Nb
        c = np.einsum("kij,kj->ki", self.inv, Fh)
        return np.fft.irfft(c @ self.Nb.T, n=g.nx, axis=0)

    def poisson(self, rhs: np.ndarray) -> np.ndarray:
        """Weak solution of Laplace(psi) = rhs - mean(rhs), d_n psi = 0, mean 0."""
        g = self.grid
        rhs = rhs - g.mean(rhs)
        return self.solve_functional(-g.W * rhs)


def neumann_solver(grid: Grid) -> NeumannSolver:
    """Cached per-grid Neumann solver."""
    s = getattr(grid, "_neumann", None)
    if s is None:
        s = grid._neumann = NeumannSolver(grid)
    return s


def poisson_neumann_solve(grid: Grid, rhs: np.ndarray) -> np.ndarray:
    return neumann_solver(grid).poisson(rhs)
