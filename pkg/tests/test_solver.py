import numpy as np
import pytest
import scipy.linalg
from dense_oracle import DenseForm, matrix_of

from ieqflow.model import ModelParams, Z_of
from ieqflow.solver import (ConvergenceError, CoupledOperator, Preconditioner, bdf_coeffs,
                            bicgstab, cn_coeffs, poisson_neumann_solve, project,
                            skew_convection_B)
from ieqflow.spectral import grid_from_counts

PARAMS = ModelParams(theta_s=1.1, u_w_top=0.3, u_w_bottom=-0.3)


def _coeff_inputs(g, seed=0):
    rng = np.random.default_rng(seed)
    phis = np.tanh(2 * rng.standard_normal(g.shape))
    us = rng.standard_normal((2,) + g.shape)
    return phis, us


@pytest.fixture(params=[(9, 6), (17, 8)], ids=["9x6", "17x8"])
def setup(request):
    nx, ny = request.param
    g = grid_from_counts(nx, ny, PARAMS.L_x)
    return g, DenseForm(nx, ny, PARAMS.L_x)


@pytest.mark.parametrize("scheme", ["cn", "bdf2"])
def test_operator_matches_dense_assembly(setup, scheme):
    g, D = setup
    phis, us = _coeff_inputs(g)
    mk = cn_coeffs if scheme == "cn" else bdf_coeffs
    c = mk(g, PARAMS, 0.01, phis, us)
    Mf = matrix_of(CoupledOperator(g, c).apply, (4,) + g.shape)
    Md = D.coupled(c, phis, us, Z_of(np.stack((phis[:, 0], phis[:, -1])), PARAMS))
    assert np.max(np.abs(Mf - Md)) <= 1e-10


def test_bicgstab_matches_dense_solve(setup):
    g, D = setup
    phis, us = _coeff_inputs(g, 1)
    c = cn_coeffs(g, PARAMS, 0.05, phis, us)
    op = CoupledOperator(g, c)
    rng = np.random.default_rng(5)
    b = project(g, rng.standard_normal((4,) + g.shape))
    x, its = bicgstab(op, Preconditioner(g, c), b, tol=1e-12, maxit=400)
    Md = D.coupled(c, phis, us, Z_of(np.stack((phis[:, 0], phis[:, -1])), PARAMS))
    Q = scipy.linalg.null_space(D.constraints())
    y = np.linalg.solve(Q.T @ Md @ Q, Q.T @ b.ravel())
    assert its > 0
    assert np.max(np.abs(x.ravel() - Q @ y)) <= 1e-7


def test_form_is_nonnegative():
    # (A X, X) >= 0: the mu/phi and mu/u couplings cancel, convection is skew
    # and the wall terms combine into a square
    g = grid_from_counts(9, 6, PARAMS.L_x)
    D = DenseForm(9, 6, PARAMS.L_x)
    phis, us = _coeff_inputs(g, 2)
    for mk in (cn_coeffs, bdf_coeffs):
        c = mk(g, PARAMS, 0.1, phis, us)
        M = matrix_of(CoupledOperator(g, c).apply, (4,) + g.shape)
        F = np.tile(D.w, 4)[:, None] * M
        Q = scipy.linalg.null_space(D.constraints())
        S = Q.T @ (F + F.T) @ Q / 2
        assert np.min(np.linalg.eigvalsh(S)) > -1e-8 * np.max(np.abs(S))


def test_skew_convection_is_energy_neutral():
    g = grid_from_counts(17, 9, 10.0)
    rng = np.random.default_rng(3)
    a = rng.standard_normal((2,) + g.shape)
    v = rng.standard_normal((2,) + g.shape)
    B = skew_convection_B(g, a, v)
    assert abs(g.inner(B[0], v[0]) + g.inner(B[1], v[1])) < 1e-11
    # pointwise agreement with (a.grad)v + (div a)v/2 for wall-tangent a
    X, Y = g.meshgrid()
    k = 2 * np.pi / g.L_x
    a = np.stack((np.sin(k * X) * (1 - Y**2), np.cos(k * X) * (1 - Y**2) ** 2))
    v = np.stack((np.cos(k * X) * Y, np.sin(2 * k * X) * Y**2))
    B = skew_convection_B(g, a, v)
    diva = g.dx(a[0]) + g.dy(a[1])
    for comp in range(2):
        ref = a[0] * g.dx(v[comp]) + a[1] * g.dy(v[comp]) + 0.5 * diva * v[comp]
        np.testing.assert_allclose(B[comp], ref, atol=1e-9)


def test_preconditioner_inverts_its_model():
    g = grid_from_counts(17, 8, 10.0)
    phis, us = _coeff_inputs(g, 4)
    for mk in (cn_coeffs, bdf_coeffs):
        pc = Preconditioner(g, mk(g, PARAMS, 0.5, phis, us))
        X = project(g, np.random.default_rng(6).standard_normal((4,) + g.shape))
        np.testing.assert_allclose(pc.apply(pc.apply_model(X)), X, atol=1e-10)


def test_bicgstab_edge_cases():
    g = grid_from_counts(9, 6, 10.0)
    phis, us = _coeff_inputs(g)
    c = cn_coeffs(g, PARAMS, 0.01, phis, us)
    op, pc = CoupledOperator(g, c), Preconditioner(g, c)
    x, its = bicgstab(op, pc, np.zeros((4,) + g.shape))
    assert its == 0 and not x.any()
    b = project(g, np.random.default_rng(0).standard_normal((4,) + g.shape))
    with pytest.raises(ConvergenceError) as ei:
        bicgstab(op, None, b, tol=1e-14, maxit=2)
    assert ei.value.iterations == 2 and ei.value.x is not None
    with pytest.raises(ValueError):
        bicgstab(op, pc, np.full((4,) + g.shape, np.nan))


def test_bicgstab_on_small_nonsymmetric_system():
    rng = np.random.default_rng(7)
    A = np.eye(30) * 4 + rng.standard_normal((30, 30)) * 0.3
    b = rng.standard_normal(30)
    x, its = bicgstab(lambda v: A @ v, None, b, tol=1e-12, maxit=200)
    np.testing.assert_allclose(x, np.linalg.solve(A, b), atol=1e-10)


def test_neumann_poisson_manufactured():
    g = grid_from_counts(17, 12, 10.0)
    X, Y = g.meshgrid()
    k = 2 * np.pi / g.L_x
    psi = np.cos(k * X) * (Y**3 / 3 - Y)
    lap = -k**2 * psi + np.cos(k * X) * 2 * Y
    sol = poisson_neumann_solve(g, lap)
    np.testing.assert_allclose(sol, psi, atol=1e-10)
    # constant-free: the solution has zero mean
    assert abs(g.mean(sol)) < 1e-12
