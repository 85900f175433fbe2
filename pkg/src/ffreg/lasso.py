"""Coordinate-descent lasso for several targets that share one design matrix."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ffreg.errors import ConvergenceWarning, InvalidArgumentError

__all__ = [
    "soft_threshold",
    "Standardizer",
    "lambda_max",
    "lambda_grid",
    "coordinate_descent",
    "lasso_path",
    "LassoModel",
    "fit_lasso",
    "cv_lasso",
]

TOL = 1e-7
MAX_SWEEPS = 100_000


def soft_threshold(rho, lam):
    """``sign(rho) * max(|rho| - lam, 0)``."""
    return np.sign(rho) * np.maximum(np.abs(rho) - lam, 0.0)


@dataclass(frozen=True)
class Standardizer:
    """Column centering and scaling; constant columns are mapped to zero."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        sd = X.std(axis=0)
        return cls(mean, np.where(sd > 1e-12 * max(1.0, float(np.abs(mean).max(initial=0))), sd, np.inf))

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale


def lambda_max(Xs, Yc) -> float:
    """Smallest penalty at which every coefficient is zero, over all targets."""
    n = Xs.shape[0]
    return float(np.abs(Xs.T @ Yc).max() / n)


def lambda_grid(lmax: float, n: int = 50, ratio: float = 1e-3) -> np.ndarray:
    """Decreasing log-spaced penalties from ``lmax`` to ``ratio * lmax``."""
    if lmax <= 0:
        return np.zeros(1)
    return np.logspace(np.log10(lmax), np.log10(lmax * ratio), n)


def coordinate_descent(G, c, lam, beta0=None, tol: float = TOL, max_sweeps: int = MAX_SWEEPS):
    """Minimize ``0.5 b'Gb - c'b + lam |b|_1`` column by column of ``c``.

    Parameters
    ----------
    G : ndarray, shape (p, p)
        Gram matrix ``X'X / n`` of the standardized design.
    c : ndarray, shape (p, H)
        ``X'Y / n`` for ``H`` centered targets.
    lam : float or ndarray, shape (H,)
        Penalty, per target if an array.
    beta0 : ndarray, shape (p, H), optional
        Warm start.

    Returns
    -------
    beta : ndarray, shape (p, H)
    sweeps : int
    converged : bool
    """
    p, H = c.shape
    beta = np.zeros((p, H)) if beta0 is None else np.array(beta0, dtype=float, copy=True)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (H,))
    diag = np.diag(G).copy()
    usable = np.flatnonzero(diag > 0)
    # residual correlation r = c - G beta, kept up to date
    r = c - G @ beta

    def sweep(coords):
        delta = 0.0
        for j in coords:
            old = beta[j]
            new = soft_threshold(r[j] + diag[j] * old, lam) / diag[j]
            step = new - old
            if np.any(step):
                r[:] -= np.outer(G[:, j], step)
                beta[j] = new
                delta = max(delta, float(np.abs(step).max()))
        return delta

    # full sweeps alternate with sweeps over the current support until a full
    # sweep no longer moves any coefficient by more than tol
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        if sweep(usable) < tol:
            return beta, sweeps, True
        active = usable[np.any(beta[usable] != 0, axis=1)]
        while sweeps < max_sweeps:
            sweeps += 1
            if sweep(active) < tol:
                break
    warnings.warn(
        f"coordinate descent stopped after {max_sweeps} sweeps", ConvergenceWarning, stacklevel=2
    )
    return beta, max_sweeps, False


def lasso_path(Xs, Yc, lambdas, tol: float = TOL, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """Warm-started solutions along a decreasing penalty path, shape (L, p, H)."""
    n = Xs.shape[0]
    G = Xs.T @ Xs / n
    c = Xs.T @ Yc / n
    beta = np.zeros((Xs.shape[1], Yc.shape[1]))
    out = np.empty((len(lambdas),) + beta.shape)
    for i, lam in enumerate(lambdas):
        beta, _, _ = coordinate_descent(G, c, lam, beta, tol, max_sweeps)
        out[i] = beta
    return out


@dataclass(frozen=True, eq=False)
class LassoModel:
    """Lasso fit on standardized features, one column of coefficients per target."""

    standardizer: Standardizer
    coef: np.ndarray
    intercept: np.ndarray
    lam: np.ndarray

    def predict(self, X) -> np.ndarray:
        return self.standardizer.transform(np.atleast_2d(X)) @ self.coef + self.intercept


def fit_lasso(X, Y, lam, beta0=None, tol: float = TOL, max_sweeps: int = MAX_SWEEPS) -> LassoModel:
    """Lasso of every column of ``Y`` on ``X`` with the objective
    ``(2n)^-1 |y - a - Xb|^2 + lam |b|_1`` on standardized ``X``.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise InvalidArgumentError("X and Y have different numbers of rows")
    st = Standardizer.fit(X)
    Xs = st.transform(X)
    ybar = Y.mean(axis=0)
    n = X.shape[0]
    beta, _, _ = coordinate_descent(Xs.T @ Xs / n, Xs.T @ (Y - ybar) / n, lam, beta0, tol, max_sweeps)
    return LassoModel(st, beta, ybar, np.broadcast_to(np.asarray(lam, float), (Y.shape[1],)).copy())


def cv_lasso(X, Y, n_folds: int = 10, n_lambda: int = 20, ratio: float = 1e-2,
             tol: float = TOL, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """Per-target penalty minimizing ``n_folds``-fold cross-validated squared error.

    Folds are contiguous blocks of rows; features are standardized within
    each training fold.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n = X.shape[0]
    if n_folds < 2 or n < 2 * n_folds:
        raise InvalidArgumentError(f"need at least {2 * n_folds} rows for {n_folds}-fold CV")
    st = Standardizer.fit(X)
    lambdas = lambda_grid(lambda_max(st.transform(X), Y - Y.mean(axis=0)), n_lambda, ratio)
    err = np.zeros((lambdas.size, Y.shape[1]))
    for idx in np.array_split(np.arange(n), n_folds):
        mask = np.ones(n, dtype=bool)
        mask[idx] = False
        st_f = Standardizer.fit(X[mask])
        ybar = Y[mask].mean(axis=0)
        path = lasso_path(st_f.transform(X[mask]), Y[mask] - ybar, lambdas, tol, max_sweeps)
        Xv = st_f.transform(X[idx])
        for i in range(lambdas.size):
            err[i] += ((Y[idx] - ybar - Xv @ path[i]) ** 2).sum(axis=0)
    return lambdas[np.argmin(err, axis=0)]
