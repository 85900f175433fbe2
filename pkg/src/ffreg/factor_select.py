"""Choice of the number of factors by the eigenvalue-difference test."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ffreg.errors import FFRError, InvalidArgumentError
from ffreg.grid import Curve, CurvePanel
from ffreg.primitives import FactorModel, predictive_spectrum
from ffreg.regression import FunctionalTerm, ModelSpec, fit_ffr

__all__ = [
    "EDResult",
    "GammaCVResult",
    "Spectrum",
    "DEFAULT_K_MAX",
    "default_gamma_grid",
    "scale_constant",
    "transform_eigenvalue",
    "eigenvalue_difference",
    "estimate_num_factors",
    "cross_validate_gamma",
    "eigen_unit_factor",
]

logger = logging.getLogger(__name__)

DEFAULT_K_MAX = 10
EIGEN_UNITS = ("grid", "l2")


def default_gamma_grid() -> np.ndarray:
    """30 log-spaced values between 0.1 and 1000."""
    return np.logspace(-1, 3, 30)


@dataclass(frozen=True)
class EDResult:
    """Outcome of the eigenvalue-difference test for one regressor.

    Attributes
    ----------
    K_hat : int
    g_sequence : ndarray, shape (K_max + 2,)
        Transformed eigenvalues with the mock endpoints 1 and 0.
    scale_c : float
    gamma : float
    hit_upper_bound : bool
        True when ``K_hat == K_max``; a larger ``K_max`` should then be tried.
    eigenvalues : ndarray
        Eigenvalues fed to the transform, in the units selected.
    eigen_units : str
    """

    K_hat: int
    g_sequence: np.ndarray
    scale_c: float
    gamma: float
    hit_upper_bound: bool
    eigenvalues: np.ndarray = field(default=None)
    eigen_units: str = "grid"

    @property
    def K_max(self) -> int:
        return int(self.g_sequence.size - 2)

    def to_dict(self) -> dict:
        return {
            "K_hat": int(self.K_hat),
            "K_max": self.K_max,
            "g_sequence": [float(g) for g in self.g_sequence],
            "g_differences": [float(d) for d in -np.diff(self.g_sequence)],
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "eigen_units": self.eigen_units,
            "scale_c": float(self.scale_c),
            "gamma": float(self.gamma),
            "hit_upper_bound": bool(self.hit_upper_bound),
        }


def scale_constant(X: CurvePanel, Y: CurvePanel) -> float:
    """Product of the root mean squared L2 norms of the centered panels."""
    def rms(panel):
        c = panel.values - panel.values.mean(axis=0)
        return np.sqrt(np.mean((c**2) @ panel.grid.weights))

    return float(rms(X) * rms(Y))


def transform_eigenvalue(lambda_hat, scale_c: float, T: int, gamma: float):
    """Arctangent map of a scaled eigenvalue into ``[0, 1)``."""
    if not scale_c > 0:
        raise InvalidArgumentError(f"scale constant must be positive, got {scale_c}")
    if not gamma > 0:
        raise InvalidArgumentError(f"gamma must be positive, got {gamma}")
    if T < 2:
        raise InvalidArgumentError(f"need T >= 2, got {T}")
    lam = np.asarray(lambda_hat, dtype=float)
    if np.any(lam < 0):
        raise InvalidArgumentError("eigenvalues must be nonnegative")
    out = (2 / np.pi) * np.arctan(gamma * np.log(T) * lam / scale_c)
    return float(out) if out.ndim == 0 else out


def eigenvalue_difference(
    eigenvalues, scale_c: float, T: int, gamma: float, K_max: int = DEFAULT_K_MAX,
    eigen_units: str = "grid",
) -> EDResult:
    """Run the test on given eigenvalues (already in the intended units).

    Missing eigenvalues beyond those supplied count as zero.
    """
    if K_max < 1:
        raise InvalidArgumentError(f"K_max must be >= 1, got {K_max}")
    lam = np.zeros(K_max)
    src = np.clip(np.asarray(eigenvalues, dtype=float)[:K_max], 0.0, None)
    lam[: src.size] = src
    g = np.empty(K_max + 2)
    g[0] = 1.0
    g[1:-1] = transform_eigenvalue(lam, scale_c, T, gamma)
    g[-1] = 0.0
    K_hat = int(np.argmax(g[:-1] - g[1:]))
    return EDResult(K_hat, g, float(scale_c), float(gamma), K_hat == K_max, lam, eigen_units)


def eigen_unit_factor(grid, eigen_units: str) -> float:
    """Multiplier turning operator eigenvalues into the requested units."""
    if eigen_units == "grid":
        return (grid.size - 1) / (grid.b - grid.a)
    if eigen_units == "l2":
        return 1.0
    raise InvalidArgumentError(f"eigen_units must be one of {EIGEN_UNITS}, got {eigen_units!r}")


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Cached eigen-decomposition of one regressor, truncatable to any K."""

    mean: Curve
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    scores: np.ndarray
    regressor_id: str = ""

    @classmethod
    def compute(cls, X: CurvePanel, Y: CurvePanel, n: int, regressor_id: str = "") -> "Spectrum":
        mu, lam, V, Xc = predictive_spectrum(X, Y, n)
        F = Xc @ (X.grid.weights[:, None] * V.T)
        return cls(mu, np.clip(lam, 0.0, None), V, F, regressor_id or X.label)

    def factor_model(self, K: int) -> FactorModel:
        return FactorModel(
            self.regressor_id, self.mean, self.eigenvalues[:K], self.eigenfunctions[:K],
            self.scores[:, :K], self.eigenvalues,
        )


def estimate_num_factors(
    X: CurvePanel,
    Y: CurvePanel,
    gamma: float = 1.0,
    K_max: int = DEFAULT_K_MAX,
    eigen_units: str = "grid",
) -> EDResult:
    """Estimate the number of predictive factors of ``X`` for ``Y``.

    Parameters
    ----------
    X, Y : CurvePanel
    gamma : float
        Tuning constant of the arctangent transform.
    K_max : int
        Largest admissible number of factors.
    eigen_units : {"grid", "l2"}
        ``"grid"`` feeds the eigenvalues of the kernel read as a plain
        ``P x P`` matrix, i.e. operator eigenvalues divided by the mean grid
        spacing. ``"l2"`` feeds the operator eigenvalues themselves. The
        transform is not scale free, so the two settings differ by a factor
        of roughly ``P`` in the effective ``gamma``.
    """
    if K_max < 1:
        raise InvalidArgumentError(f"K_max must be >= 1, got {K_max}")
    if X.T <= K_max:
        raise InvalidArgumentError(f"need T > K_max, got T={X.T}, K_max={K_max}")
    factor = eigen_unit_factor(X.grid, eigen_units)
    _, lam, _, _ = predictive_spectrum(X, Y, K_max)
    return _ed_from_spectrum(lam, X, Y, gamma, K_max, factor, eigen_units)


def _ed_from_spectrum(lam, X, Y, gamma, K_max, factor, eigen_units) -> EDResult:
    return eigenvalue_difference(
        np.clip(lam, 0.0, None) * factor, scale_constant(X, Y), X.T, gamma, K_max, eigen_units
    )


@dataclass(frozen=True)
class GammaCVResult:
    """Cross-validation outcome over a grid of tuning constants."""

    gamma: float
    gamma_grid: np.ndarray
    losses: np.ndarray
    n_validation: int

    def to_dict(self) -> dict:
        return {
            "gamma": float(self.gamma),
            "gamma_grid": [float(g) for g in self.gamma_grid],
            "losses": [float(v) for v in self.losses],
            "n_validation": int(self.n_validation),
        }


def _fit_predictor(Y_train, W_train, spectra, Ks):
    """Fit with the given factor counts; return a one-row forecasting function."""
    keep = [j for j, k in enumerate(Ks) if k > 0]
    fms = [spectra[j].factor_model(Ks[j]) for j in keep]
    if not fms and W_train.shape[1] == 1:
        mean = Y_train.values.mean(axis=0)
        return lambda w_new, x_new: mean
    Z = np.hstack([W_train] + [fm.scores for fm in fms])
    spec = ModelSpec(
        scalar_ids=("intercept",) + tuple(f"w{i}" for i in range(1, W_train.shape[1])),
        regressors=tuple(FunctionalTerm(fm.regressor_id or f"X{j}") for j, fm in zip(keep, fms)),
        n_factors=tuple(fm.K for fm in fms),
    )
    B = fit_ffr(Y_train, Z, fms, spec).B_hat

    def forecast(w_new, x_new):
        z = np.concatenate([w_new] + [fm.project(x_new[j]) for j, fm in zip(keep, fms)])
        return z @ B

    return forecast


def cross_validate_gamma(
    Y: CurvePanel,
    regressors: Sequence[CurvePanel],
    w=None,
    gamma_grid=None,
    split_fraction: float = 0.6,
    K_max: int = DEFAULT_K_MAX,
    eigen_units: str = "grid",
    refit_every: int = 1,
) -> GammaCVResult:
    """Choose one tuning constant shared by all regressors.

    The first ``split_fraction`` of the rows is the initial training window.
    For every later row, the model is refitted on all earlier rows (every
    ``refit_every`` rows), factor counts are re-estimated for each candidate
    ``gamma``, and the row is forecast. The loss is the mean integrated
    squared forecast error; ties go to the smaller ``gamma``.

    Parameters
    ----------
    Y : CurvePanel
    regressors : sequence of CurvePanel
        Aligned with ``Y`` row by row (lags already applied).
    w : array_like, shape (T, N), optional
        Scalar covariates including the intercept column; intercept only if omitted.
    """
    grid = np.sort(np.asarray(default_gamma_grid() if gamma_grid is None else gamma_grid, float))
    if grid.size == 0:
        raise InvalidArgumentError("gamma grid is empty")
    if np.any(grid <= 0):
        raise InvalidArgumentError("gamma values must be positive")
    if not 0 < split_fraction < 1:
        raise InvalidArgumentError(f"split_fraction must lie in (0, 1), got {split_fraction}")
    T = Y.T
    W = np.ones((T, 1)) if w is None else np.asarray(w, dtype=float).reshape(T, -1)
    n_train = int(np.floor(split_fraction * T))
    n_val = T - n_train
    if n_val < 5:
        raise InvalidArgumentError(f"validation window has {n_val} rows, need at least 5")
    if grid.size == 1:
        return GammaCVResult(float(grid[0]), grid, np.zeros(1), n_val)
    if n_train <= K_max + 1:
        raise InvalidArgumentError("initial training window too short for K_max")
    w_y = Y.grid.weights
    losses = np.zeros(grid.size)
    predictors: dict = {}
    for t in range(n_train, T):
        if (t - n_train) % refit_every == 0:
            rows = slice(0, t)
            Yt, Wt = Y.subset(rows), W[rows]
            spectra, ks_by_gamma = [], []
            for j, X in enumerate(regressors):
                Xt = X.subset(rows)
                spec = Spectrum.compute(Xt, Yt, K_max, X.label or f"X{j + 1}")
                spectra.append(spec)
                lam = spec.eigenvalues * eigen_unit_factor(X.grid, eigen_units)
                c = scale_constant(Xt, Yt)
                ks_by_gamma.append([eigenvalue_difference(lam, c, t, g, K_max).K_hat for g in grid])
            Ks_per_gamma = [tuple(ks[i] for ks in ks_by_gamma) for i in range(grid.size)]
            predictors = {}
        x_new = [X.values[t] for X in regressors]
        preds: dict = {}
        for i, Ks in enumerate(Ks_per_gamma):
            if Ks not in predictors:
                try:
                    predictors[Ks] = _fit_predictor(Yt, Wt, spectra, Ks)
                except FFRError as exc:
                    logger.debug("gamma CV fit failed for K=%s: %s", Ks, exc)
                    predictors[Ks] = None
            if predictors[Ks] is None:
                losses[i] = np.inf
                continue
            if Ks not in preds:
                preds[Ks] = predictors[Ks](W[t], x_new)
            losses[i] += float(((Y.values[t] - preds[Ks]) ** 2) @ w_y)
    losses /= n_val
    best = int(np.argmin(losses))
    return GammaCVResult(float(grid[best]), grid, losses, n_val)
