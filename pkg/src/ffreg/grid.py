"""Discretized curves on an interval and the quadrature behind every integral."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ffreg.errors import InvalidArgumentError

__all__ = [
    "Grid",
    "Curve",
    "CurvePanel",
    "Kernel",
    "make_uniform_grid",
    "grid_from_points",
    "trapezoid_weights",
    "check_same_grid",
    "inner_product",
    "l2_norm",
    "apply_kernel",
    "write_panel_csv",
    "read_panel_csv",
    "write_kernel_csv",
    "read_kernel_csv",
]


def _frozen(arr, dtype=float):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Grid:
    """Ordered evaluation points on ``[a, b]`` with quadrature weights.

    Parameters
    ----------
    points : ndarray, shape (P,)
        Strictly increasing, first point ``a`` and last point ``b``.
    weights : ndarray, shape (P,)
        Positive weights summing to ``b - a``.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points)
        wts = _frozen(self.weights)
        if pts.ndim != 1 or pts.shape != wts.shape or pts.size < 2:
            raise InvalidArgumentError("points and weights must be 1-d of equal length >= 2")
        if np.any(np.diff(pts) <= 0):
            raise InvalidArgumentError("grid points must be strictly increasing")
        if np.any(wts <= 0):
            raise InvalidArgumentError("quadrature weights must be positive")
        span = pts[-1] - pts[0]
        if abs(wts.sum() - span) > 1e-12 * max(abs(span), 1.0) * pts.size:
            raise InvalidArgumentError("weights must sum to the domain length")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    @property
    def a(self) -> float:
        return float(self.points[0])

    @property
    def b(self) -> float:
        return float(self.points[-1])

    @property
    def size(self) -> int:
        return int(self.points.size)

    def __len__(self):
        return self.size

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Grid):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(
            self.weights, other.weights
        )

    def __hash__(self):
        return hash((self.points.tobytes(), self.weights.tobytes()))

    def __repr__(self):
        return f"Grid(a={self.a:g}, b={self.b:g}, P={self.size})"


def trapezoid_weights(points) -> np.ndarray:
    """Trapezoid-rule weights for arbitrary increasing points."""
    pts = np.asarray(points, dtype=float)
    gaps = np.diff(pts)
    w = np.zeros_like(pts)
    w[:-1] += gaps / 2
    w[1:] += gaps / 2
    return w


def make_uniform_grid(a: float, b: float, P: int) -> Grid:
    """Uniform grid of ``P`` points on ``[a, b]`` with trapezoid weights.

    Examples
    --------
    >>> make_uniform_grid(0, 1, 3).weights
    array([0.25, 0.5 , 0.25])
    """
    if int(P) != P or P < 2:
        raise InvalidArgumentError(f"P must be an integer >= 2, got {P}")
    if not a < b:
        raise InvalidArgumentError(f"need a < b, got a={a}, b={b}")
    P = int(P)
    pts = np.linspace(a, b, P)
    h = (b - a) / (P - 1)
    w = np.full(P, h)
    w[0] = w[-1] = h / 2
    return Grid(pts, w)


def grid_from_points(points) -> Grid:
    """Grid over the given points, uniform or not, with trapezoid weights."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 1 or pts.size < 2:
        raise InvalidArgumentError("need at least two grid points")
    if np.any(np.diff(pts) <= 0):
        raise InvalidArgumentError("grid points must be strictly increasing")
    # exact linspace output gets the closed-form weights so uniform grids round-trip
    if np.array_equal(pts, np.linspace(pts[0], pts[-1], pts.size)):
        return make_uniform_grid(float(pts[0]), float(pts[-1]), pts.size)
    return Grid(pts, trapezoid_weights(pts))


@dataclass(frozen=True, eq=False)
class Curve:
    """A function sampled on a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.grid.size,):
            raise InvalidArgumentError(
                f"curve has shape {vals.shape}, grid expects ({self.grid.size},)"
            )
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True, eq=False)
class CurvePanel:
    """``T`` curves sharing one grid; row ``t`` is the curve at time ``t``."""

    grid: Grid
    values: np.ndarray
    label: str = field(default="")

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.ndim != 2 or vals.shape[1] != self.grid.size:
            raise InvalidArgumentError(
                f"panel has shape {vals.shape}, grid expects (T, {self.grid.size})"
            )
        object.__setattr__(self, "values", vals)

    @property
    def T(self) -> int:
        return int(self.values.shape[0])

    def __len__(self):
        return self.T

    def row(self, t: int) -> Curve:
        return Curve(self.grid, self.values[t])

    def subset(self, rows) -> "CurvePanel":
        return CurvePanel(self.grid, self.values[rows], self.label)


@dataclass(frozen=True, eq=False)
class Kernel:
    """Bivariate function ``K(r, s)``; rows follow ``row_grid``, columns ``col_grid``."""

    row_grid: Grid
    col_grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.row_grid.size, self.col_grid.size):
            raise InvalidArgumentError(
                f"kernel has shape {vals.shape}, grids expect "
                f"({self.row_grid.size}, {self.col_grid.size})"
            )
        object.__setattr__(self, "values", vals)

    @property
    def T(self):
        return Kernel(self.col_grid, self.row_grid, self.values.T)


def check_same_grid(g1: Grid, g2: Grid, what: str = "curves") -> None:
    """Raise :class:`InvalidArgumentError` unless the grids coincide."""
    if g1 != g2:
        raise InvalidArgumentError(f"{what} live on different grids: {g1!r} vs {g2!r}")


def inner_product(f: Curve, g: Curve) -> float:
    """Quadrature approximation of the L2 inner product."""
    check_same_grid(f.grid, g.grid)
    # multiply f and g first so the result is exactly symmetric in its arguments
    return float(np.sum(f.grid.weights * (f.values * g.values)))


def l2_norm(f: Curve) -> float:
    return float(np.sqrt(max(inner_product(f, f), 0.0)))


def apply_kernel(K: Kernel, f: Curve) -> Curve:
    """Integral operator ``(Kf)(r) = sum_s w_s K(r, s) f(s)``."""
    check_same_grid(K.col_grid, f.grid, "kernel columns and curve")
    return Curve(K.row_grid, K.values @ (f.grid.weights * f.values))


def _fmt(x: float) -> str:
    return repr(float(x))


def write_panel_csv(path, panel: CurvePanel, index: Sequence | None = None) -> None:
    """Write a panel as CSV: a header of grid coordinates, then one row per time.

    If ``index`` is given, it becomes a leading ``t`` column.
    """
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        head = [_fmt(p) for p in panel.grid.points]
        wr.writerow((["t"] if index is not None else []) + head)
        for t, row in enumerate(panel.values):
            lead = [str(index[t])] if index is not None else []
            wr.writerow(lead + [_fmt(v) for v in row])


def read_panel_csv(path, label: str = "") -> CurvePanel:
    """Read a panel written by :func:`write_panel_csv`.

    The header must hold the grid coordinates. A leading non-numeric header
    cell marks an index column, which is discarded.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise InvalidArgumentError(f"{path}: need a header and at least one data row")
    head = rows[0]
    skip = 0
    try:
        float(head[0])
    except ValueError:
        skip = 1
    try:
        pts = np.array([float(h) for h in head[skip:]])
        vals = np.array([[float(v) for v in r[skip:]] for r in rows[1:]])
    except ValueError as exc:
        raise InvalidArgumentError(f"{path}: non-numeric cell ({exc})") from None
    if vals.shape[1] != pts.size:
        raise InvalidArgumentError(f"{path}: ragged rows")
    if not np.all(np.isfinite(vals)):
        raise InvalidArgumentError(f"{path}: missing or non-finite values")
    return CurvePanel(grid_from_points(pts), vals, label)


def write_kernel_csv(path, kernel: Kernel) -> None:
    """Write a kernel with ``s`` coordinates in the header and ``r`` in column one."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["r\\s"] + [_fmt(s) for s in kernel.col_grid.points])
        for r, row in zip(kernel.row_grid.points, kernel.values):
            wr.writerow([_fmt(r)] + [_fmt(v) for v in row])


def read_kernel_csv(path) -> Kernel:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    s_pts = np.array([float(h) for h in rows[0][1:]])
    r_pts = np.array([float(r[0]) for r in rows[1:]])
    vals = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return Kernel(grid_from_points(r_pts), grid_from_points(s_pts), vals)
