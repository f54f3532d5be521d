"""Independent dense assembly of the coupled bilinear form.

Nothing here calls the package's differentiation, quadrature or product
routines: nodes, weights and differentiation matrices are rebuilt from
textbook formulas and every term of the form is a Kronecker-product matrix.
"""
import numpy as np
from numpy.polynomial import legendre as npleg


def lgl(deg):
    c = np.zeros(deg + 1)
    c[-1] = 1.0
    y = np.concatenate(([-1.0], np.sort(npleg.legroots(npleg.legder(c))), [1.0]))
    w = 2.0 / (deg * (deg + 1) * npleg.legval(y, c) ** 2)
    return y, w


def lagrange_diff(y):
    n = len(y)
    lam = np.array([1.0 / np.prod([y[i] - y[j] for j in range(n) if j != i]) for i in range(n)])
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                D[i, j] = lam[j] / lam[i] / (y[i] - y[j])
        D[i, i] = -D[i].sum()
    return D


def fourier_diff(N, L):
    """Periodic spectral differentiation on N (odd) uniform nodes of [0, L)."""
    assert N % 2 == 1
    D = np.zeros((N, N))
    for i in range(N):
        for j in range(N):
            if i != j:
                d = i - j
                D[i, j] = 0.5 * (-1) ** d / np.sin(np.pi * d / N)
    return D * 2 * np.pi / L


class DenseForm:
    """Dense matrices on an nx x ny grid, unknowns raveled C-order (x slow)."""

    def __init__(self, nx, ny, L):
        self.nx, self.ny, self.L = nx, ny, L
        self.y, self.wy = lgl(ny - 1)
        self.wx = L / nx
        self.Dx1 = fourier_diff(nx, L)
        self.Dy1 = lagrange_diff(self.y)
        Ix, Iy = np.eye(nx), np.eye(ny)
        self.Dx = np.kron(self.Dx1, Iy)
        self.Dy = np.kron(Ix, self.Dy1)
        self.w = np.kron(np.full(nx, self.wx), self.wy)
        self.W = np.diag(self.w)
        self.K = self.Dx.T @ self.W @ self.Dx + self.Dy.T @ self.W @ self.Dy
        N = nx * ny
        self.T = []  # trace selectors, bottom then top
        for j in (0, ny - 1):
            Tm = np.zeros((nx, N))
            Tm[np.arange(nx), np.arange(nx) * ny + j] = 1.0
            self.T.append(Tm)

    def coupled(self, c, phis, us, Zs):
        """Riesz matrix of the coupled form for coefficient set ``c``.

        phis, us, Zs are given as arrays; wall derivatives of phis are taken
        with the dense Fourier matrix.
        """
        N = self.nx * self.ny
        W, K, Dx, Dy = self.W, self.K, self.Dx, self.Dy
        dg = lambda v: np.diag(np.ravel(v))  # noqa: E731
        Ph = dg(phis)
        ax, ay = dg(us[0]), dg(us[1])
        Bsk = 0.5 * (W @ ax @ Dx + W @ ay @ Dy - Dx.T @ ax @ W - Dy.T @ ay @ W)
        Wb = self.wx * np.eye(self.nx)
        A = np.zeros((4 * N, 4 * N))
        blk = lambda i, j: (slice(i * N, (i + 1) * N), slice(j * N, (j + 1) * N))  # noqa: E731
        # mu row
        A[blk(0, 1)] += W
        A[blk(0, 2)] += -c.a_c * Dx.T @ W @ Ph
        A[blk(0, 3)] += -c.a_c * Dy.T @ W @ Ph
        A[blk(0, 0)] += c.a_M * K
        # phi row
        A[blk(1, 0)] += -W
        A[blk(1, 1)] += c.b_g * K + c.b_U * W @ Ph @ Ph
        # u rows
        for k, D in ((2, Dx), (3, Dy)):
            A[blk(k, k)] += c.d_m * W + c.d_b * Bsk + c.d_nu * K
            A[blk(k, 0)] += c.d_c * W @ Ph @ D
        for side, Tm in enumerate(self.T):
            dph = np.diag(self.Dx1 @ (Tm @ np.ravel(phis)))
            Z2 = np.diag(np.asarray(Zs)[side] ** 2)
            ring_phi = c.c_phi * Tm
            ring_u = c.c_u * dph @ Tm
            A[blk(1, 1)] += Tm.T @ Wb @ (c.lam_gamma * ring_phi + c.b_Z * Z2 @ Tm)
            A[blk(1, 2)] += Tm.T @ Wb @ (c.lam_gamma * ring_u)
            A[blk(2, 2)] += Tm.T @ Wb @ (c.d_nu * c.ell * Tm + c.d_phi * dph @ ring_u)
            A[blk(2, 1)] += Tm.T @ Wb @ (c.d_phi * dph @ ring_phi)
        riesz = A / np.tile(self.w, 4)[:, None]
        P = self.projector()
        return P @ riesz @ P

    def projector(self):
        N = self.nx * self.ny
        P = np.eye(4 * N)
        area = self.w.sum()
        for b in (0, 1):
            s = slice(b * N, (b + 1) * N)
            P[s, s] -= np.outer(np.ones(N), self.w) / area
        for Tm in self.T:
            idx = 3 * N + np.argmax(Tm, axis=1)
            P[idx, :] = 0.0
        return P

    def constraints(self):
        """Rows whose null space is the projected unknown space."""
        N = self.nx * self.ny
        rows = []
        for b in (0, 1):
            r = np.zeros(4 * N)
            r[b * N:(b + 1) * N] = self.w
            rows.append(r)
        for Tm in self.T:
            for idx in np.argmax(Tm, axis=1):
                r = np.zeros(4 * N)
                r[3 * N + idx] = 1.0
                rows.append(r)
        return np.array(rows)


def matrix_of(apply, shape):
    """Columns of a matrix-free operator acting on arrays of ``shape``."""
    n = int(np.prod(shape))
    M = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        M[:, j] = np.ravel(apply(e.reshape(shape)))
    return M
