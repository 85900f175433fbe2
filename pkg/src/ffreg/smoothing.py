"""Turn raw discrete observations into curves on a target grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ffreg.errors import InvalidArgumentError, SingularFitError
from ffreg.grid import CurvePanel, Grid

__all__ = [
    "BSplineBasis",
    "clamped_uniform_knots",
    "bspline_design",
    "build_bspline_basis",
    "smooth_panel",
    "passthrough_panel",
]


@dataclass(frozen=True, eq=False)
class BSplineBasis:
    """Clamped B-spline basis with uniform interior knots.

    Attributes
    ----------
    degree : int
    knots : ndarray
        Full knot vector of length ``n_basis + degree + 1``.
    n_basis : int
    grid : Grid
        Grid on which ``evaluation`` was computed.
    evaluation : ndarray, shape (P, n_basis)
    """

    degree: int
    knots: np.ndarray
    n_basis: int
    grid: Grid
    evaluation: np.ndarray

    def evaluate(self, x) -> np.ndarray:
        """Basis matrix at arbitrary points inside the knot span."""
        return bspline_design(x, self.knots, self.degree)


def clamped_uniform_knots(a: float, b: float, degree: int, n_basis: int) -> np.ndarray:
    """Knot vector with ``degree + 1`` repeated end knots and uniform interior knots."""
    n_interior = n_basis - degree - 1
    interior = np.linspace(a, b, n_interior + 2)[1:-1]
    return np.concatenate([np.full(degree + 1, a), interior, np.full(degree + 1, b)])


def bspline_design(x, knots, degree: int) -> np.ndarray:
    """Evaluate every B-spline of the knot vector at ``x`` by Cox-de Boor recursion.

    The right end of the domain is included in the last non-empty interval so
    that the basis is a partition of unity on the closed interval.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.asarray(knots, dtype=float)
    n_intervals = t.size - 1
    # degree-0 indicators on [t_i, t_{i+1})
    B = ((x[:, None] >= t[None, :-1]) & (x[:, None] < t[None, 1:])).astype(float)
    last = np.flatnonzero(t[1:] > t[:-1])[-1]
    B[x == t[-1], :] = 0.0
    B[x == t[-1], last] = 1.0
    for k in range(1, degree + 1):
        n = n_intervals - k
        left_den = t[k : k + n] - t[:n]
        right_den = t[k + 1 : k + 1 + n] - t[1 : 1 + n]
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(left_den > 0, (x[:, None] - t[:n]) / left_den, 0.0)
            right = np.where(right_den > 0, (t[k + 1 : k + 1 + n] - x[:, None]) / right_den, 0.0)
        B = left * B[:, :n] + right * B[:, 1 : n + 1]
    return B


def build_bspline_basis(grid: Grid, degree: int = 3, n_basis: int = 15) -> BSplineBasis:
    """Clamped uniform B-spline basis on ``[grid.a, grid.b]`` evaluated on ``grid``."""
    if degree < 0 or int(degree) != degree:
        raise InvalidArgumentError(f"degree must be a nonnegative integer, got {degree}")
    if n_basis < degree + 1:
        raise InvalidArgumentError(f"n_basis={n_basis} must be at least degree+1={degree + 1}")
    knots = clamped_uniform_knots(grid.a, grid.b, int(degree), int(n_basis))
    ev = bspline_design(grid.points, knots, int(degree))
    ev.setflags(write=False)
    knots.setflags(write=False)
    return BSplineBasis(int(degree), knots, int(n_basis), grid, ev)


def smooth_panel(raw, obs_points, basis: BSplineBasis, target: Grid) -> CurvePanel:
    """Least-squares fit of each row of ``raw`` onto ``basis``, evaluated on ``target``.

    Parameters
    ----------
    raw : array_like, shape (T, M)
    obs_points : array_like, shape (M,)
        Locations of the raw observations, inside the basis domain.
    basis : BSplineBasis
    target : Grid

    Raises
    ------
    SingularFitError
        If the basis evaluated at ``obs_points`` is rank deficient.
    """
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    obs = np.asarray(obs_points, dtype=float)
    if raw.shape[1] != obs.size:
        raise InvalidArgumentError("raw columns must match obs_points")
    if obs.size < basis.n_basis:
        raise InvalidArgumentError(
            f"{obs.size} observation points cannot identify {basis.n_basis} basis functions"
        )
    lo, hi = basis.knots[0], basis.knots[-1]
    if obs.min() < lo or obs.max() > hi or target.a < lo or target.b > hi:
        raise InvalidArgumentError("observation and target points must lie in the basis domain")
    A = basis.evaluate(obs)
    if np.linalg.matrix_rank(A) < basis.n_basis:
        raise SingularFitError(
            "basis evaluation matrix is rank deficient at the observation points"
        )
    coef, *_ = np.linalg.lstsq(A, raw.T, rcond=None)
    return CurvePanel(target, (basis.evaluate(target.points) @ coef).T)


def passthrough_panel(raw, grid: Grid) -> CurvePanel:
    """Identity smoothing: raw columns are used directly as grid values."""
    return CurvePanel(grid, np.asarray(raw, dtype=float))
