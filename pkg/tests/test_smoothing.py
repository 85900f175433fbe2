import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from ffreg.errors import InvalidArgumentError, SingularFitError
from ffreg.grid import make_uniform_grid
from ffreg.smoothing import bspline_design, build_bspline_basis, passthrough_panel, smooth_panel
from oracles import bspline_recursive


@pytest.mark.parametrize("degree, n_basis", [(0, 4), (1, 5), (2, 7), (3, 12)])
def test_design_matches_recursive_oracle(degree, n_basis):
    g = make_uniform_grid(0, 1, 41)
    basis = build_bspline_basis(g, degree, n_basis)
    expect = np.array(
        [[bspline_recursive(i, degree, basis.knots, x) for i in range(n_basis)] for x in g.points]
    )
    np.testing.assert_allclose(basis.evaluation, expect, atol=1e-13)


@pytest.mark.parametrize("degree, n_basis", [(1, 5), (3, 12), (4, 9)])
def test_design_matches_scipy_inside_domain(degree, n_basis):
    basis = build_bspline_basis(make_uniform_grid(0, 1, 5), degree, n_basis)
    x = np.linspace(0, 1, 57)[:-1]
    ref = BSpline.design_matrix(x, basis.knots, degree).toarray()
    np.testing.assert_allclose(basis.evaluate(x), ref, atol=1e-13)


def test_degree_zero_gives_indicators():
    g = make_uniform_grid(0, 1, 9)
    ev = build_bspline_basis(g, 0, 4).evaluation
    assert set(np.unique(ev)) == {0.0, 1.0}
    np.testing.assert_array_equal(ev.sum(axis=1), 1.0)
    np.testing.assert_array_equal(np.argmax(ev, axis=1), [0, 0, 1, 1, 2, 2, 3, 3, 3])


@settings(max_examples=30)
@given(st.integers(0, 4), st.integers(0, 8), st.floats(0, 1))
def test_partition_of_unity(degree, extra, x):
    basis = build_bspline_basis(make_uniform_grid(0, 1, 3), degree, degree + 1 + extra)
    row = basis.evaluate([x])[0]
    assert row.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(row >= -1e-15)


def test_too_few_basis_functions_rejected():
    with pytest.raises(InvalidArgumentError):
        build_bspline_basis(make_uniform_grid(0, 1, 5), 3, 3)


def test_rows_in_span_are_reproduced(rng):
    g = make_uniform_grid(0, 1, 50)
    basis = build_bspline_basis(g, 3, 10)
    coef = rng.standard_normal((4, 10))
    obs = np.linspace(0, 1, 30)
    raw = coef @ basis.evaluate(obs).T
    out = smooth_panel(raw, obs, basis, g)
    np.testing.assert_allclose(out.values, coef @ basis.evaluation.T, atol=1e-10)


def test_noiseless_sine_is_recovered():
    target = make_uniform_grid(0, 1, 200)
    basis = build_bspline_basis(target, 3, 12)
    obs = np.linspace(0, 1, 24)
    out = smooth_panel(np.sin(2 * np.pi * obs)[None], obs, basis, target)
    assert np.max(np.abs(out.values[0] - np.sin(2 * np.pi * target.points))) < 1e-3


def test_interpolation_when_basis_matches_observation_count(rng):
    g = make_uniform_grid(0, 1, 24)
    basis = build_bspline_basis(g, 3, 24)
    raw = rng.standard_normal((3, 24))
    out = smooth_panel(raw, g.points, basis, g)
    np.testing.assert_allclose(out.values, raw, atol=1e-8)


def test_rank_deficient_design_raises():
    g = make_uniform_grid(0, 1, 20)
    basis = build_bspline_basis(g, 3, 8)
    obs = np.concatenate([np.linspace(0, 0.2, 10), [0.9]])
    with pytest.raises(SingularFitError):
        smooth_panel(np.zeros((1, obs.size)), obs, basis, g)


def test_smoothing_is_linear(rng):
    g = make_uniform_grid(0, 1, 30)
    basis = build_bspline_basis(g, 3, 8)
    obs = np.linspace(0, 1, 15)
    a, b = rng.standard_normal((2, 1, 15))
    lhs = smooth_panel(2 * a + b, obs, basis, g).values
    rhs = 2 * smooth_panel(a, obs, basis, g).values + smooth_panel(b, obs, basis, g).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_passthrough_keeps_values(rng):
    g = make_uniform_grid(0, 1, 6)
    raw = rng.standard_normal((2, 6))
    np.testing.assert_array_equal(passthrough_panel(raw, g).values, raw)


def test_bspline_design_endpoint_belongs_to_last_interval():
    knots = np.array([0, 0, 0.5, 1, 1.0])
    B = bspline_design([1.0], knots, 1)
    np.testing.assert_allclose(B, [[0, 0, 1]])
