"""Covariance surfaces, confidence bands and p-values for coefficient surfaces.

The covariance accounts for the estimation error of the factor scores and
loadings. An uncorrected sandwich variant is available for comparison only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from ffreg.errors import InvalidArgumentError, NearDegenerateSpectrumError
from ffreg.grid import CurvePanel, Grid, Kernel
from ffreg.regression import FFRFit, coefficient_surface

__all__ = [
    "CorrectionTerms",
    "InferenceResult",
    "norm_cdf",
    "norm_ppf",
    "compute_correction_terms",
    "sandwich_covariance",
    "covariance_surface",
    "confidence_band",
    "pointwise_pvalues",
    "infer",
    "CONTOUR_LEVELS",
]

CONTOUR_LEVELS = (0.01, 0.05, 0.1)
_GAP_GUARD = 1e-10
_OMEGA_FLOOR = 1e-300


def norm_cdf(x):
    """Standard normal distribution function."""
    return special.ndtr(x)


def norm_ppf(p):
    """Standard normal quantile function."""
    return special.ndtri(p)


@dataclass(frozen=True, eq=False)
class CorrectionTerms:
    """Per-period quantities describing the estimation error of regressor ``j``.

    Attributes
    ----------
    gamma_curves : ndarray, shape (K, P_Y)
        Sample covariance between each factor and the centered response.
    y_scores : ndarray, shape (T, K)
        Projections of the centered response onto ``gamma_curves``.
    fy_bar : ndarray, shape (K, K)
        ``fy_bar[m, l]`` is the sample mean of ``f_m * y_l``.
    G : ndarray, shape (T, K, K)
        Loading perturbation coefficients with zero diagonal.
    h : ndarray, shape (T, K)
        ``y_scores`` divided by the eigenvalues.
    eps_panel : CurvePanel
        Part of the centered regressor not spanned by the loadings.
    z_bar : ndarray, shape (M,)
    zF_bar : tuple of ndarray
        ``zF_bar[k]`` has shape (M, K_k): sample mean of ``z_t F_kt'``.
    G_all : tuple of ndarray
        ``G`` for every functional regressor ``k``; ``G_all[j] is G``.
    """

    gamma_curves: np.ndarray
    y_scores: np.ndarray
    fy_bar: np.ndarray
    G: np.ndarray
    h: np.ndarray
    eps_panel: CurvePanel
    z_bar: np.ndarray
    zF_bar: tuple = ()
    G_all: tuple = ()


def _perturbation_terms(F, lam, Yc, w_y):
    T, K = F.shape
    if K > 1:
        gaps = np.abs(lam[:, None] - lam[None, :])[~np.eye(K, dtype=bool)]
        if gaps.min() < _GAP_GUARD * lam[0]:
            raise NearDegenerateSpectrumError(
                f"eigenvalue gap {gaps.min():.3e} too small relative to {lam[0]:.3e}"
            )
    gam = F.T @ Yc / T
    y = Yc @ (w_y[:, None] * gam.T)
    fy = F.T @ y / T
    # num[t, l, m] = f_m y_l - mean(f_m y_l) + f_l y_m - mean(f_l y_m)
    num = F[:, None, :] * y[:, :, None] - fy.T[None]
    num = num + num.transpose(0, 2, 1)
    den = lam[:, None] - lam[None, :]
    np.fill_diagonal(den, np.inf)
    G = num / den[None]
    return gam, y, fy, G, y / lam


def compute_correction_terms(fit: FFRFit, Y: CurvePanel | None, j: int) -> CorrectionTerms:
    """Correction quantities for functional regressor ``j`` (0-based).

    Raises
    ------
    NearDegenerateSpectrumError
        If two retained eigenvalues of any regressor are closer than
        ``1e-10`` times the leading one.
    """
    Y = fit.Y if Y is None else Y
    if not fit.regressors:
        raise InvalidArgumentError("the fit does not carry its regressor panels")
    if not 0 <= j < len(fit.factor_models):
        raise InvalidArgumentError(f"regressor index {j} out of range")
    T = fit.T
    Yc = Y.values - Y.values.mean(axis=0)
    w_y = Y.grid.weights
    Z = fit.design
    per_k = [_perturbation_terms(fm.scores, fm.eigenvalues, Yc, w_y) for fm in fit.factor_models]
    gam, y, fy, G, h = per_k[j]
    fm = fit.factor_models[j]
    X = fit.regressors[j]
    eps = X.values - fm.mean.values - fm.scores @ fm.loadings
    return CorrectionTerms(
        gamma_curves=gam,
        y_scores=y,
        fy_bar=fy,
        G=G,
        h=h,
        eps_panel=CurvePanel(X.grid, eps, "eps"),
        z_bar=Z.mean(axis=0),
        zF_bar=tuple(Z.T @ f.scores / T for f in fit.factor_models),
        G_all=tuple(p[3] for p in per_k),
    )


def _omega_from_parts(A, Psi, c=None, eps=None):
    """``T^-1 sum_t (sum_l A[t,l,r] Psi[l,s] + c[t,r] eps[t,s])^2`` without forming (T,P,P)."""
    T = A.shape[0]
    S = np.einsum("tlr,tmr->rlm", A, A)
    omega = np.einsum("rlm,ls,ms->rs", S, Psi, Psi)
    if c is not None:
        Ac = A * c[:, None, :]
        for l in range(Psi.shape[0]):
            omega += 2.0 * (Ac[:, l, :].T @ eps) * Psi[l][None, :]
        omega += (c**2).T @ (eps**2)
    return np.maximum(omega / T, 0.0)


def sandwich_covariance(Qinv_block, Z, U, Psi, row_grid: Grid, col_grid: Grid) -> Kernel:
    """Heteroskedasticity-robust covariance ignoring any estimation error in ``Z`` or ``Psi``.

    Parameters
    ----------
    Qinv_block : ndarray, shape (K, M)
        Rows of the inverse second-moment matrix belonging to the regressor.
    Z : ndarray, shape (T, M)
    U : ndarray, shape (T, P_Y)
        Residual curves.
    Psi : ndarray, shape (K, P_X)
    """
    A = (Z @ Qinv_block.T)[:, :, None] * U[:, None, :]
    return Kernel(row_grid, col_grid, _omega_from_parts(A, Psi))


def covariance_surface(
    fit: FFRFit, Y: CurvePanel | None, j: int, corrected: bool = True,
    terms: CorrectionTerms | None = None,
) -> Kernel:
    """Asymptotic covariance surface of ``sqrt(T) (beta_hat_j - beta_j)``.

    Parameters
    ----------
    fit : FFRFit
    Y : CurvePanel or None
        Response panel; the one stored on ``fit`` when ``None``.
    j : int
        Functional regressor index (0-based).
    corrected : bool
        Include the generated-regressor correction. ``False`` gives the plain
        sandwich estimator, which understates the uncertainty.
    terms : CorrectionTerms, optional
        Precomputed correction terms for ``j``.
    """
    fm = fit.factor_models[j]
    Psi = fm.loadings
    blk = fit.block(j)
    Qi = fit.Q_hat_inv[blk]
    Z = fit.design
    U = fit.residuals.values
    r_grid = fit.residuals.grid
    if not corrected:
        return sandwich_covariance(Qi, Z, U, Psi, r_grid, fm.grid)
    ct = compute_correction_terms(fit, Y, j) if terms is None else terms
    A = (Z @ Qi.T)[:, :, None] * U[:, None, :]
    # Qi zbar sum_k F_kt' B_k(r)
    lin = np.zeros_like(U)
    for k, fk in enumerate(fit.factor_models):
        lin += fk.scores @ fit.B_hat[fit.block(k)]
    A += (Qi @ ct.z_bar)[None, :, None] * lin[:, None, :]
    # - Qi zF_k G_kt B_k(r), summed over k
    for k, fk in enumerate(fit.factor_models):
        QzF = Qi @ ct.zF_bar[k]
        A -= np.einsum("al,tlm,mr->tar", QzF, ct.G_all[k], fit.B_hat[fit.block(k)])
    Bj = fit.B_hat[blk]
    A += np.einsum("tlm,mr->tlr", ct.G, Bj)
    c = ct.h @ Bj
    return Kernel(r_grid, fm.grid, _omega_from_parts(A, Psi, c, ct.eps_panel.values))


def _check_omega(beta: Kernel, omega: Kernel):
    if beta.values.shape != omega.values.shape:
        raise InvalidArgumentError("beta and omega grids differ")


def confidence_band(beta: Kernel, omega: Kernel, T: int, level: float = 0.95):
    """Pointwise normal band ``beta +- z * sqrt(omega / T)``."""
    if not 0 < level < 1:
        raise InvalidArgumentError(f"level must lie in (0, 1), got {level}")
    _check_omega(beta, omega)
    z = norm_ppf(0.5 + level / 2)
    half = z * np.sqrt(np.maximum(omega.values, 0.0) / T)
    return (
        Kernel(beta.row_grid, beta.col_grid, beta.values - half),
        Kernel(beta.row_grid, beta.col_grid, beta.values + half),
    )


def pointwise_pvalues(beta: Kernel, omega: Kernel, T: int) -> Kernel:
    """Two-sided p-values of ``beta(r, s) = 0`` at every grid point.

    Where ``omega`` is numerically zero the p-value is 0 for a nonzero
    estimate and 1 otherwise.
    """
    _check_omega(beta, omega)
    b = beta.values
    om = omega.values
    if np.any(om < -1e-12):
        raise InvalidArgumentError("omega has negative entries")
    degenerate = om < _OMEGA_FLOOR
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.abs(np.sqrt(T) * b / np.sqrt(np.where(degenerate, 1.0, om)))
    p = 2.0 * norm_cdf(-stat)
    p = np.where(degenerate, np.where(b != 0, 0.0, 1.0), p)
    return Kernel(beta.row_grid, beta.col_grid, np.clip(p, 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class InferenceResult:
    """Inference on one coefficient surface.

    Attributes
    ----------
    beta, omega, se, p_values : Kernel
        ``se`` is ``sqrt(omega / T)``.
    bands : dict
        Maps each confidence level to a ``(lower, upper)`` pair of kernels.
    corrected : bool
    """

    regressor: str
    beta: Kernel
    omega: Kernel
    se: Kernel
    p_values: Kernel
    bands: dict = field(default_factory=dict)
    corrected: bool = True


def infer(
    fit: FFRFit, j: int, Y: CurvePanel | None = None, levels=(0.95,), corrected: bool = True
) -> InferenceResult:
    """Covariance, standard errors, bands and p-values for regressor ``j``."""
    beta = coefficient_surface(fit, j)
    omega = covariance_surface(fit, Y, j, corrected=corrected)
    se = Kernel(beta.row_grid, beta.col_grid, np.sqrt(omega.values / fit.T))
    bands = {float(lv): confidence_band(beta, omega, fit.T, lv) for lv in levels}
    return InferenceResult(
        regressor=fit.spec.regressors[j].label,
        beta=beta,
        omega=omega,
        se=se,
        p_values=pointwise_pvalues(beta, omega, fit.T),
        bands=bands,
        corrected=corrected,
    )
