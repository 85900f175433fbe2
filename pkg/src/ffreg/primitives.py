"""Moments, cross-covariance kernels and the predictive eigen-decomposition."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ffreg.errors import (
    DegenerateFactorError,
    InvalidArgumentError,
    NearDegenerateEigenvalueWarning,
)
from ffreg.grid import Curve, CurvePanel, Grid, Kernel, check_same_grid

__all__ = [
    "FactorModel",
    "sample_mean",
    "cross_cov_kernel",
    "d_kernel",
    "eigen_integral_operator",
    "orient_loadings",
    "fit_factor_model",
    "predictive_spectrum",
    "SIGN_CONVENTION",
]

SIGN_CONVENTION = "positive-mean, first-significant-coordinate fallback"

_SYM_TOL = 1e-10
_DEGENERATE_RATIO = 1e-12
_GAP_WARN_RATIO = 1e-8


@dataclass(frozen=True, eq=False)
class FactorModel:
    """Estimated predictive factors of one functional regressor.

    Attributes
    ----------
    regressor_id : str
    mean : Curve
        Sample mean of the regressor.
    eigenvalues : ndarray, shape (K,)
        Leading eigenvalues of the estimated operator, descending.
    loadings : ndarray, shape (K, P)
        L2-normalized loading curves on ``grid``.
    scores : ndarray, shape (T, K)
        Projections of the centered regressor curves onto the loadings.
    spectrum : ndarray
        All eigenvalues that were computed, descending; used for factor
        selection diagnostics.
    """

    regressor_id: str
    mean: Curve
    eigenvalues: np.ndarray
    loadings: np.ndarray
    scores: np.ndarray
    spectrum: np.ndarray = field(default=None)

    @property
    def K(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def grid(self) -> Grid:
        return self.mean.grid

    def loading_curves(self) -> list[Curve]:
        return [Curve(self.grid, v) for v in self.loadings]

    def project(self, X) -> np.ndarray:
        """Scores of new curves: ``<X_t - mean, psi_l>``.

        ``X`` may be a Curve, a CurvePanel or an array of shape (..., P).
        """
        if isinstance(X, (Curve, CurvePanel)):
            check_same_grid(X.grid, self.grid, "new regressor curves and loadings")
            X = X.values
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.grid.size:
            raise InvalidArgumentError("new curves do not match the loading grid")
        return (X - self.mean.values) @ (self.grid.weights[:, None] * self.loadings.T)

    def with_flipped(self, l: int) -> "FactorModel":
        """Copy with loading ``l`` and its score column negated."""
        sign = np.ones(self.K)
        sign[l] = -1.0
        return FactorModel(
            self.regressor_id,
            self.mean,
            self.eigenvalues,
            self.loadings * sign[:, None],
            self.scores * sign[None, :],
            self.spectrum,
        )

    def to_dict(self) -> dict:
        return {
            "regressor_id": self.regressor_id,
            "K": self.K,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "spectrum": [float(v) for v in self.spectrum],
            "sign_convention": SIGN_CONVENTION,
        }


def sample_mean(panel: CurvePanel) -> Curve:
    if panel.T < 1:
        raise InvalidArgumentError("cannot average an empty panel")
    return Curve(panel.grid, panel.values.mean(axis=0))


def cross_cov_kernel(X: CurvePanel, Y: CurvePanel) -> Kernel:
    """Sample cross-covariance ``c(r, s)`` with divisor ``T``; rows follow X's grid."""
    if X.T != Y.T:
        raise InvalidArgumentError(f"panels have different lengths: {X.T} vs {Y.T}")
    if X.T < 1:
        raise InvalidArgumentError("empty panels")
    Xc = X.values - X.values.mean(axis=0)
    Yc = Y.values - Y.values.mean(axis=0)
    return Kernel(X.grid, Y.grid, Xc.T @ Yc / X.T)


def d_kernel(c: Kernel) -> Kernel:
    """``d(r, s) = int c(r, q) c(s, q) dq``, integrated over the column grid of ``c``."""
    C = c.values
    return Kernel(c.row_grid, c.row_grid, (C * c.col_grid.weights) @ C.T)


def orient_loadings(V: np.ndarray, weights: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Apply the sign convention row-wise.

    Each loading gets a nonnegative integral. When the integral is below
    ``tol`` in magnitude, the first coordinate exceeding ``tol`` in magnitude
    is made positive instead.
    """
    V = np.array(V, dtype=float, copy=True)
    for l in range(V.shape[0]):
        mass = float(V[l] @ weights)
        if abs(mass) >= tol:
            sign = np.sign(mass)
        else:
            big = np.flatnonzero(np.abs(V[l]) > tol)
            sign = np.sign(V[l, big[0]]) if big.size else 1.0
        V[l] *= sign
    return V


def eigen_integral_operator(d: Kernel, n: int):
    """Leading ``n`` eigenpairs of the integral operator with symmetric kernel ``d``.

    The discretized problem is symmetrized with the square-root quadrature
    weights, solved with a dense symmetric eigensolver, mapped back and
    renormalized to unit L2 norm.

    Returns
    -------
    eigenvalues : ndarray, shape (n,)
        Descending.
    eigenfunctions : ndarray, shape (n, P)
        Row ``l`` is the ``l``-th eigenfunction on the kernel's grid.
    """
    check_same_grid(d.row_grid, d.col_grid, "kernel rows and columns")
    D = d.values
    P = D.shape[0]
    if not 1 <= n <= P:
        raise InvalidArgumentError(f"need 1 <= n <= P={P}, got n={n}")
    scale = max(1.0, float(np.abs(D).max()))
    if np.abs(D - D.T).max() > _SYM_TOL * scale:
        raise InvalidArgumentError("kernel is not symmetric")
    w = d.row_grid.weights
    sw = np.sqrt(w)
    M = sw[:, None] * (0.5 * (D + D.T)) * sw[None, :]
    lam, U = np.linalg.eigh(M)
    order = np.argsort(lam)[::-1][:n]
    lam = lam[order]
    V = (U[:, order] / sw[:, None]).T
    V /= np.sqrt((V**2) @ w)[:, None]
    return lam, orient_loadings(V, w)


def predictive_spectrum(X: CurvePanel, Y: CurvePanel, n: int):
    """Eigen-decomposition of the estimated operator for regressor ``X``.

    Returns ``(mean, eigenvalues, eigenfunctions, centered X values)``.
    """
    mu = sample_mean(X)
    D = d_kernel(cross_cov_kernel(X, Y))
    lam, V = eigen_integral_operator(D, min(n, X.grid.size))
    return mu, lam, V, X.values - mu.values


def fit_factor_model(
    X: CurvePanel, Y: CurvePanel, K: int, regressor_id: str | None = None, n_spectrum: int = 0
) -> FactorModel:
    """Estimate ``K`` predictive factors of ``X`` for the response ``Y``.

    Parameters
    ----------
    X, Y : CurvePanel
        Regressor and response panels with equal ``T``.
    K : int
        Number of factors, ``1 <= K < T``.
    regressor_id : str, optional
        Label stored on the model; defaults to ``X.label``.
    n_spectrum : int
        Number of eigenvalues to keep for diagnostics (at least ``K``).

    Raises
    ------
    DegenerateFactorError
        If the ``K``-th eigenvalue is numerically zero relative to the first.
    """
    if int(K) != K or K < 1:
        raise InvalidArgumentError(f"K must be a positive integer, got {K}")
    if X.T <= K:
        raise InvalidArgumentError(f"need T > K, got T={X.T}, K={K}")
    if K > X.grid.size:
        raise InvalidArgumentError(f"K={K} exceeds the grid size {X.grid.size}")
    mu, lam, V, Xc = predictive_spectrum(X, Y, max(K, n_spectrum))
    lead = lam[0]
    if not lead > 0 or lam[K - 1] < _DEGENERATE_RATIO * lead:
        raise DegenerateFactorError(
            f"requested K={K} factors but eigenvalue {K} is {lam[K - 1]:.3e} "
            f"against a leading eigenvalue of {lead:.3e}"
        )
    gaps = -np.diff(lam[:K])
    if gaps.size and gaps.min() < _GAP_WARN_RATIO * lead:
        warnings.warn(
            f"retained eigenvalues nearly tied (smallest gap {gaps.min():.3e})",
            NearDegenerateEigenvalueWarning,
            stacklevel=2,
        )
    Psi = V[:K]
    F = Xc @ (X.grid.weights[:, None] * Psi.T)
    spectrum = np.clip(lam, 0.0, None)
    for arr in (Psi, F, spectrum):
        arr.setflags(write=False)
    eig = spectrum[:K].copy()
    eig.setflags(write=False)
    return FactorModel(
        regressor_id if regressor_id is not None else X.label, mu, eig, Psi, F, spectrum
    )
