import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import subspace_angles

from ffreg.errors import DegenerateFactorError, InvalidArgumentError, NearDegenerateEigenvalueWarning
from ffreg.grid import CurvePanel, Kernel, grid_from_points, make_uniform_grid
from ffreg.primitives import (
    cross_cov_kernel,
    d_kernel,
    eigen_integral_operator,
    fit_factor_model,
    orient_loadings,
    sample_mean,
)
from ffreg.simulation import DGPConfig, fourier_matrix, gen_dgp, make_rng
from oracles import column_means, cross_cov, d_from_c


def _orthonormal_modes(g, n):
    """Fourier modes re-orthonormalized in the quadrature inner product."""
    V = fourier_matrix(n, g)
    L = np.linalg.cholesky((V * g.weights) @ V.T)
    return np.linalg.solve(L, V)


def test_mean_of_identical_curves(grid200):
    c = np.sin(grid200.points)
    assert np.array_equal(sample_mean(CurvePanel(grid200, np.tile(c, (4, 1)))).values, c)


def test_mean_of_zero_and_two(grid200):
    out = sample_mean(CurvePanel(grid200, np.vstack([np.zeros(200), np.full(200, 2.0)])))
    np.testing.assert_allclose(out.values, 1.0)


def test_mean_of_empty_panel_raises(grid200):
    with pytest.raises(InvalidArgumentError):
        sample_mean(CurvePanel(grid200, np.zeros((0, 200))))


def test_constant_regressor_has_zero_cross_covariance(grid200, rng):
    X = CurvePanel(grid200, np.tile(rng.standard_normal(200), (5, 1)))
    Y = CurvePanel(grid200, rng.standard_normal((5, 200)))
    assert np.abs(cross_cov_kernel(X, Y).values).max() < 1e-14


def test_two_point_cross_covariance():
    g = make_uniform_grid(0, 1, 11)
    delta = np.cos(3 * g.points)
    mean = np.linspace(1, 2, 11)
    X = CurvePanel(g, np.vstack([mean + delta, mean - delta]))
    np.testing.assert_allclose(cross_cov_kernel(X, X).values, np.outer(delta, delta), atol=1e-14)


def test_cross_covariance_length_mismatch(grid200):
    with pytest.raises(InvalidArgumentError):
        cross_cov_kernel(CurvePanel(grid200, np.zeros((3, 200))), CurvePanel(grid200, np.zeros((4, 200))))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 7), st.integers(2, 6), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_cross_covariance_and_d_match_loop_oracles(T, Px, Py, seed):
    r = np.random.default_rng(seed)
    gx = grid_from_points(np.sort(r.uniform(0, 1, Px)) + np.arange(Px))
    gy = make_uniform_grid(-1, 2, Py)
    X, Y = r.standard_normal((T, Px)), r.standard_normal((T, Py))
    c = cross_cov_kernel(CurvePanel(gx, X), CurvePanel(gy, Y))
    np.testing.assert_allclose(c.values, cross_cov(X, Y), atol=1e-12)
    np.testing.assert_allclose(sample_mean(CurvePanel(gx, X)).values, column_means(X), atol=1e-12)
    np.testing.assert_allclose(d_kernel(c).values, d_from_c(c.values, gy.weights), atol=1e-12)


def test_zero_c_gives_zero_d(grid200):
    assert np.all(d_kernel(Kernel(grid200, grid200, np.zeros((200, 200)))).values == 0)


def test_rank_one_d(grid200):
    V = _orthonormal_modes(grid200, 3)
    psi, phi = V[1], V[2]
    d = d_kernel(Kernel(grid200, grid200, np.outer(psi, phi)))
    np.testing.assert_allclose(d.values, np.outer(psi, psi), atol=1e-12)


def test_rank_one_eigenproblem(grid200):
    psi = _orthonormal_modes(grid200, 2)[1]
    lam, V = eigen_integral_operator(Kernel(grid200, grid200, np.outer(psi, psi)), 5)
    assert lam[0] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.abs(lam[1:]) <= 1e-10)
    assert min(np.abs(V[0] - psi).max(), np.abs(V[0] + psi).max()) < 1e-10


def test_known_modes_recovered(grid200):
    V = _orthonormal_modes(grid200, 3)
    D = V.T @ np.diag([3.0, 2.0, 1.0]) @ V
    lam, E = eigen_integral_operator(Kernel(grid200, grid200, D), 3)
    np.testing.assert_allclose(lam, [3, 2, 1], atol=1e-8)
    for l in range(3):
        assert min(np.abs(E[l] - V[l]).max(), np.abs(E[l] + V[l]).max()) < 1e-6


def test_asymmetric_kernel_rejected():
    g = make_uniform_grid(0, 1, 4)
    with pytest.raises(InvalidArgumentError):
        eigen_integral_operator(Kernel(g, g, np.triu(np.ones((4, 4)))), 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 40), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_eigen_equation_residual_on_random_psd(P, rank, seed):
    r = np.random.default_rng(seed)
    g = grid_from_points(np.cumsum(r.uniform(0.1, 1, P)))
    A = r.standard_normal((P, rank))
    D = A @ A.T
    n = min(P, rank)
    lam, V = eigen_integral_operator(Kernel(g, g, D), n)
    for l in range(n):
        resid = (D * g.weights) @ V[l] - lam[l] * V[l]
        assert np.abs(resid).max() <= 1e-8 * max(1.0, lam[0])
    gram = (V * g.weights) @ V.T
    np.testing.assert_allclose(gram, np.eye(n), atol=1e-8)


def test_sign_convention():
    g = make_uniform_grid(0, 1, 5)
    V = orient_loadings(np.array([[-1.0, -1, -1, -1, -1], [0, -1, 0, 1, 0], [0, 0, 0, 0, 0]]), g.weights)
    assert V[0] @ g.weights > 0
    assert V[1][1] == 1.0
    np.testing.assert_array_equal(V[2], 0)


def _noiseless_two_factor(grid, T, seed):
    r = np.random.default_rng(seed)
    V = _orthonormal_modes(grid, 4)
    F = r.standard_normal((T, 2))
    # noise scores with zero sample covariance with F, so they carry no predictive signal
    A = np.column_stack([np.ones(T), F])
    E = r.standard_normal((T, 2))
    E -= A @ np.linalg.lstsq(A, E, rcond=None)[0]
    X = F @ V[:2] + E @ V[2:]
    Y = F @ np.array([[1.0, 0.3], [-0.2, 0.7]]) @ V[:2]
    return CurvePanel(grid, X), CurvePanel(grid, Y), V


def test_loadings_span_true_space(grid200):
    X, Y, V = _noiseless_two_factor(grid200, 80, 3)
    fm = fit_factor_model(X, Y, 2)
    sw = np.sqrt(grid200.weights)
    angles = subspace_angles((fm.loadings * sw).T, (V[:2] * sw).T)
    assert np.max(angles) < 1e-6


def test_nonpredictive_direction_absent(grid200):
    X, Y, V = _noiseless_two_factor(grid200, 80, 4)
    fm = fit_factor_model(X, Y, 2)
    proj = (fm.loadings * grid200.weights) @ V[2:].T
    assert np.abs(proj).max() < 1e-6


def test_scores_are_projections(grid200):
    X, Y, _ = _noiseless_two_factor(grid200, 50, 5)
    fm = fit_factor_model(X, Y, 2)
    np.testing.assert_allclose(fm.project(X), fm.scores, atol=1e-12)
    np.testing.assert_allclose((fm.loadings * grid200.weights) @ fm.loadings.T, np.eye(2), atol=1e-10)


def test_too_many_factors_is_degenerate(grid200):
    X, Y, _ = _noiseless_two_factor(grid200, 50, 6)
    with pytest.raises(DegenerateFactorError):
        fit_factor_model(X, Y, 3)


@pytest.mark.parametrize("K", [0, 1.5])
def test_invalid_factor_count(grid200, K):
    X, Y, _ = _noiseless_two_factor(grid200, 10, 7)
    with pytest.raises(InvalidArgumentError):
        fit_factor_model(X, Y, K)


def test_tied_eigenvalues_warn():
    g = make_uniform_grid(0, 1, 64)
    V = _orthonormal_modes(g, 2)
    # orthogonal scores with equal energy give a doubly degenerate leading eigenvalue
    F = np.array([[1.0, 0], [0, 1], [-1, 0], [0, -1]])
    X = CurvePanel(g, F @ V)
    with pytest.warns(NearDegenerateEigenvalueWarning):
        fit_factor_model(X, X, 2)


def test_flipping_a_loading_keeps_scores_consistent(grid200):
    X, Y, _ = _noiseless_two_factor(grid200, 30, 8)
    fm = fit_factor_model(X, Y, 2)
    fl = fm.with_flipped(1)
    np.testing.assert_allclose(fl.project(X), fl.scores, atol=1e-12)


def test_trailing_eigenvalue_ratio_shrinks_with_T():
    """Averaged over 100 replications the first non-predictive eigenvalue vanishes relative to the first."""
    means = []
    for T in (100, 400, 1600):
        ratios = []
        for ss in np.random.SeedSequence([5, T]).spawn(100):
            d = gen_dgp(DGPConfig(T=T, K=3, P=40), make_rng(ss))
            fm = fit_factor_model(d.X1, d.Y, 3, n_spectrum=4)
            ratios.append(fm.spectrum[3] / fm.spectrum[0])
        means.append(np.mean(ratios))
    assert means[0] > means[1] > means[2]
