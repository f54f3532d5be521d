"""Fourier (x) x Legendre (y) discretization on [0, L_x] x [-1, 1].

Fields are stored nodally as arrays of shape ``(n_x, n_y)``: axis 0 runs over
the uniform periodic x-nodes, axis 1 over the Legendre-Gauss-Lobatto nodes in
y (ascending, so column 0 is the bottom wall and column -1 the top wall).
Inner products use the trapezoid rule in x and LGL quadrature in y.  With this
choice the discrete gradient has an exact adjoint, which is what the energy
identities of the time steppers rely on.

Modal coefficients use complex Fourier modes ``|k| <= m`` in x and the
Legendre combinations ``1, y, L_k - L_{k-2}`` in y.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.special import roots_jacobi

BOTTOM = 0
TOP = 1

SPACES = ("full", "dirichlet", "pressure")


def lgl_nodes_weights(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Legendre-Gauss-Lobatto nodes and weights for polynomial degree n.

    Returns n+1 nodes in ascending order, including both endpoints.
    """
    interior, _ = roots_jacobi(n - 1, 1.0, 1.0)
    y = np.concatenate(([-1.0], np.sort(interior), [1.0]))
    Ln = npleg.legval(y, np.eye(n + 1)[n])
    w = 2.0 / (n * (n + 1) * Ln**2)
    return y, w


def lgl_diff_matrix(y: np.ndarray) -> np.ndarray:
    n = len(y) - 1
    Ln = npleg.legval(y, np.eye(n + 1)[n])
    with np.errstate(divide="ignore", invalid="ignore"):
        D = (Ln[:, None] / Ln[None, :]) / (y[:, None] - y[None, :])
    np.fill_diagonal(D, 0.0)
    D[0, 0] = -n * (n + 1) / 4.0
    D[n, n] = n * (n + 1) / 4.0
    return D


def shen_basis_eval(k: int, y, n: int | None = None):
    """Evaluate the y-basis function of index k: 1, y, then L_k - L_{k-2}."""
    if k < 0 or (n is not None and k > n):
        raise ValueError(f"basis index {k} out of range")
    y = np.asarray(y, dtype=float)
    if k == 0:
        return np.ones_like(y)
    if k == 1:
        return y.copy()
    c = np.zeros(k + 1)
    c[k] = 1.0
    c[k - 2] = -1.0
    return npleg.legval(y, c)


@dataclass(eq=False)
class Grid:
    """Tensor grid with n_x = 2m+1 Fourier nodes and n_y = n+1 LGL nodes."""

    m: int
    n: int
    L_x: float
    x: np.ndarray = dc_field(init=False, repr=False)
    y: np.ndarray = dc_field(init=False, repr=False)
    wy: np.ndarray = dc_field(init=False, repr=False)

    def __post_init__(self):
        if self.m < 4 or self.n < 4:
            raise ValueError(f"grid too small: m={self.m}, n={self.n} (need >= 4)")
        if self.L_x <= 0:
            raise ValueError("L_x must be positive")
        self.nx = 2 * self.m + 1
        self.ny = self.n + 1
        self.x = self.L_x * np.arange(self.nx) / self.nx
        self.y, self.wy = lgl_nodes_weights(self.n)
        self.wx = self.L_x / self.nx
        self.W = self.wx * self.wy[None, :]
        self.Dy = lgl_diff_matrix(self.y)
        self.k = 2.0 * np.pi / self.L_x * np.arange(self.m + 1)
        self.area = 2.0 * self.L_x
        self.wall_length = 2.0 * self.L_x
        # columns: shen basis evaluated at the LGL nodes
        self.shen_vander = np.stack(
            [shen_basis_eval(j, self.y) for j in range(self.ny)], axis=1)
        self._shen_inv = np.linalg.inv(self.shen_vander)
        self._pad_n = 3 * self.m + 1 if (3 * self.m + 1) % 2 else 3 * self.m + 2

    @property
    def shape(self):
        return (self.nx, self.ny)

    def meshgrid(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    # -- transforms ---------------------------------------------------------
    def to_modal(self, f: np.ndarray) -> np.ndarray:
        """Nodal -> modal, returned with Fourier index -m..m along axis 0."""
        f = self._check(f)
        c = np.fft.fftshift(np.fft.fft(f, axis=0), axes=0) / self.nx
        return c @ self._shen_inv.T

    def to_nodal(self, c: np.ndarray) -> np.ndarray:
        if c.shape != self.shape:
            raise ValueError(f"modal array shape {c.shape} != grid {self.shape}")
        g = c @ self.shen_vander.T
        f = np.fft.ifft(np.fft.ifftshift(g, axes=0), axis=0) * self.nx
        return f.real

    def _check(self, f):
        f = np.asarray(f, dtype=float)
        if f.shape[:2] != self.shape and f.shape[-2:] != self.shape:
            raise ValueError(f"array shape {f.shape} does not match grid {self.shape}")
        return f

    # -- differentiation ----------------------------------------------------
    def dx(self, f: np.ndarray) -> np.ndarray:
        """Spectral x-derivative along axis 0 (works for wall arrays too)."""
        fh = np.fft.rfft(f, axis=0)
        shape = (-1,) + (1,) * (fh.ndim - 1)
        return np.fft.irfft(1j * self.k.reshape(shape) * fh, n=self.nx, axis=0)

    def dy(self, f: np.ndarray) -> np.ndarray:
        return f @ self.Dy.T

    def grad(self, f):
        return np.stack((self.dx(f), self.dy(f)))

    def adj_x(self, q):
        # the Fourier derivative is skew under uniform weights
        return -self.dx(q)

    def adj_y(self, q):
        """W^{-1} D_y^T W q: the discrete adjoint of d/dy."""
        return ((q * self.wy) @ self.Dy) / self.wy

    def div_weak(self, q):
        """Negative adjoint of the discrete gradient.

        Equals the collocation divergence whenever q_y vanishes on the walls.
        """
        return -self.adj_x(q[0]) - self.adj_y(q[1])

    def stiff(self, f):
        """Riesz representative of the form (grad f, grad w)."""
        return self.adj_x(self.dx(f)) + self.adj_y(self.dy(f))

    def laplacian(self, f):
        return self.dx(self.dx(f)) + self.dy(self.dy(f))

    def normal_deriv(self, f) -> np.ndarray:
        """Outward normal derivative on the walls, shape (2, n_x)."""
        d = self.dy(f)
        return np.stack((-d[:, 0], d[:, -1]))

    # -- traces and boundary lifting -----------------------------------------
    @staticmethod
    def trace(f) -> np.ndarray:
        """Wall values, shape (2, n_x): row 0 bottom, row 1 top."""
        return np.stack((f[:, 0], f[:, -1]))

    def wall_trace(self, f, wall: str | int):
        idx = {"bottom": 0, "top": -1, BOTTOM: 0, TOP: -1}[wall]
        return f[:, idx].copy()

    def tangential_deriv(self, b):
        """d/dx of wall data of shape (n_x,) or (2, n_x)."""
        b = np.asarray(b, dtype=float)
        if b.ndim == 1:
            return self.dx(b)
        return self.dx(b.T).T

    def lift(self, g) -> np.ndarray:
        """Riesz representative of the wall functional w -> (g, w)_Gamma."""
        out = np.zeros(self.shape)
        out[:, 0] = g[0] / self.wy[0]
        out[:, -1] = g[1] / self.wy[-1]
        return out

    # -- inner products -----------------------------------------------------
    def inner(self, a, b) -> float:
        return float(np.sum(self.W * a * b))

    def boundary_inner(self, a, b) -> float:
        return float(self.wx * np.sum(np.asarray(a) * np.asarray(b)))

    def integral(self, f) -> float:
        return float(np.sum(self.W * f))

    def mean(self, f) -> float:
        return self.integral(f) / self.area

    def norm(self, f) -> float:
        return float(np.sqrt(max(self.inner(f, f), 0.0)))

    def grad_norm2(self, f) -> float:
        return self.inner(self.dx(f), self.dx(f)) + self.inner(self.dy(f), self.dy(f))

    # -- products -----------------------------------------------------------
    def product(self, a, b, dealias: bool = False):
        """Pointwise product; with dealias, 3/2-rule zero padding in x."""
        if not dealias:
            return a * b
        return self._truncate(self._pad(a) * self._pad(b))

    def wall_product(self, a, b, dealias: bool = False):
        if not dealias:
            return a * b
        return self.product(np.asarray(a).T, np.asarray(b).T, True).T

    def _pad(self, f):
        fh = np.fft.rfft(f, axis=0)
        npad = self._pad_n
        shape = (npad // 2 + 1,) + fh.shape[1:]
        gh = np.zeros(shape, dtype=complex)
        gh[: self.m + 1] = fh
        return np.fft.irfft(gh, n=npad, axis=0) * (npad / self.nx)

    def _truncate(self, g):
        gh = np.fft.rfft(g, axis=0)[: self.m + 1]
        return np.fft.irfft(gh, n=self.nx, axis=0) * (self.nx / self._pad_n)


def make_grid(m: int, n: int, L_x: float) -> Grid:
    return Grid(m, n, L_x)


def grid_from_counts(nx: int, ny: int, L_x: float) -> Grid:
    """Build a grid from physical node counts (n_x must be odd)."""
    if nx % 2 == 0:
        raise ValueError(f"n_x must be odd (2m+1), got {nx}")
    return Grid((nx - 1) // 2, ny - 1, L_x)


@dataclass(eq=False)
class Field:
    """A scalar on the grid with nodal values and a y-basis tag.

    ``space`` is ``"full"`` (P_n), ``"dirichlet"`` (P_n^0, zero on the walls)
    or ``"pressure"`` (P_{n-2} without the global constant).
    """

    grid: Grid
    values: np.ndarray
    space: str = "full"

    def __post_init__(self):
        if self.space not in SPACES:
            raise ValueError(f"unknown space {self.space!r}")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} != grid {self.grid.shape}")

    @classmethod
    def from_modal(cls, grid, coeffs, space="full"):
        return cls(grid, grid.to_nodal(coeffs), space)

    @property
    def modal(self) -> np.ndarray:
        return self.grid.to_modal(self.values)

    def trace(self, wall) -> "BoundaryField":
        return BoundaryField(self.grid, self.grid.wall_trace(self.values, wall), wall)

    def _same(self, other):
        if other.grid is not self.grid:
            raise ValueError("fields live on different grids")

    def inner(self, other: "Field") -> float:
        self._same(other)
        return self.grid.inner(self.values, other.values)


@dataclass(eq=False)
class BoundaryField:
    """Values along one wall (``"top"`` at y=+1 or ``"bottom"`` at y=-1)."""

    grid: Grid
    values: np.ndarray
    wall: str = "bottom"

    def tangential_deriv(self) -> "BoundaryField":
        return BoundaryField(self.grid, self.grid.tangential_deriv(self.values), self.wall)


def transform_forward(grid: Grid, nodal) -> np.ndarray:
    return grid.to_modal(nodal)


def transform_backward(grid: Grid, modal) -> np.ndarray:
    return grid.to_nodal(modal)


def boundary_inner_product(grid: Grid, a, b) -> float:
    """(a, b)_Gamma summed over both walls; a, b have shape (2, n_x)."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != (2, grid.nx) or b.shape != (2, grid.nx):
        raise ValueError("boundary data must have shape (2, n_x)")
    return grid.boundary_inner(a, b)


def interpolate(src: Grid, f: np.ndarray, dst: Grid) -> np.ndarray:
    """Evaluate the spectral expansion of f (on src) at the nodes of dst.

    Fourier modes beyond the destination cutoff are dropped.
    """
    if abs(src.L_x - dst.L_x) > 1e-12 * src.L_x:
        raise ValueError("grids have different periods")
    # y: polynomial interpolation through the source LGL nodes
    cy = f @ src._shen_inv.T
    Vy = np.stack([shen_basis_eval(j, dst.y) for j in range(src.ny)], axis=1)
    fy = cy @ Vy.T
    fh = np.fft.rfft(fy, axis=0) / src.nx
    gh = np.zeros((dst.m + 1, dst.ny), dtype=complex)
    k = min(src.m, dst.m)
    gh[: k + 1] = fh[: k + 1]
    return np.fft.irfft(gh * dst.nx, n=dst.nx, axis=0)
