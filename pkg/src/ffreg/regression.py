"""Least-squares fit of the functional response on generated factor regressors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from ffreg.errors import InvalidArgumentError, MulticollinearityError
from ffreg.grid import Curve, CurvePanel, Kernel, check_same_grid
from ffreg.primitives import FactorModel

__all__ = [
    "FunctionalTerm",
    "ModelSpec",
    "FFRFit",
    "intercept_column",
    "assemble_design",
    "fit_ffr",
    "coefficient_surface",
    "reconstruct_intercept",
    "predict",
    "predict_panel",
    "MAX_CONDITION",
]

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class FunctionalTerm:
    """A functional regressor entering the model at a given lag."""

    regressor_id: str
    lag: int = 0

    @property
    def label(self) -> str:
        return self.regressor_id if self.lag == 0 else f"{self.regressor_id}[t-{self.lag}]"


@dataclass(frozen=True)
class ModelSpec:
    """Column layout of the design: scalar covariates first, then factor blocks.

    Attributes
    ----------
    response_id : str
    scalar_ids : tuple of str
        Labels of the ``N`` scalar covariates; the first is the intercept.
    regressors : tuple of FunctionalTerm
    n_factors : tuple of int
        Number of factors of each functional regressor.
    """

    response_id: str = "Y"
    scalar_ids: tuple = ("intercept",)
    regressors: tuple = ()
    n_factors: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "scalar_ids", tuple(self.scalar_ids))
        object.__setattr__(
            self,
            "regressors",
            tuple(r if isinstance(r, FunctionalTerm) else FunctionalTerm(str(r)) for r in self.regressors),
        )
        object.__setattr__(self, "n_factors", tuple(int(k) for k in self.n_factors))
        if len(self.scalar_ids) < 1:
            raise InvalidArgumentError("at least the intercept column is required")
        if len(self.n_factors) != len(self.regressors):
            raise InvalidArgumentError("n_factors must give one count per functional regressor")

    @property
    def N(self) -> int:
        return len(self.scalar_ids)

    @property
    def J(self) -> int:
        return len(self.regressors)

    @property
    def M(self) -> int:
        return self.N + sum(self.n_factors)

    def block(self, j: int) -> slice:
        """Design columns holding the factors of regressor ``j`` (0-based)."""
        if not 0 <= j < self.J:
            raise InvalidArgumentError(f"regressor index {j} out of range 0..{self.J - 1}")
        start = self.N + sum(self.n_factors[:j])
        return slice(start, start + self.n_factors[j])

    def column_labels(self) -> list[str]:
        labels = list(self.scalar_ids)
        for term, k in zip(self.regressors, self.n_factors):
            labels += [f"{term.label}:f{l + 1}" for l in range(k)]
        return labels


@dataclass(frozen=True, eq=False)
class FFRFit:
    """A fitted model.

    Attributes
    ----------
    spec : ModelSpec
    design : ndarray, shape (T, M)
    B_hat : ndarray, shape (M, P)
        Row ``m`` is the coefficient curve of design column ``m``.
    Q_hat, Q_hat_inv : ndarray, shape (M, M)
    residuals : CurvePanel
    factor_models : tuple of FactorModel
    Y : CurvePanel
    regressors : tuple of CurvePanel
        Regressor panels aligned with the rows of ``design``.
    condition_number : float
    """

    spec: ModelSpec
    design: np.ndarray
    B_hat: np.ndarray
    Q_hat: np.ndarray
    Q_hat_inv: np.ndarray
    residuals: CurvePanel
    factor_models: tuple = ()
    Y: CurvePanel = None
    regressors: tuple = ()
    condition_number: float = field(default=float("nan"))

    @property
    def T(self) -> int:
        return int(self.design.shape[0])

    def block(self, j: int) -> slice:
        return self.spec.block(j)

    def fitted(self) -> np.ndarray:
        return self.design @ self.B_hat

    def summary(self) -> dict:
        return {
            "T": self.T,
            "M": self.spec.M,
            "N": self.spec.N,
            "columns": self.spec.column_labels(),
            "n_factors": {t.label: k for t, k in zip(self.spec.regressors, self.spec.n_factors)},
            "condition_number": float(self.condition_number),
        }


def intercept_column(T: int) -> np.ndarray:
    return np.ones((T, 1))


def assemble_design(w, factor_models: Sequence[FactorModel]) -> np.ndarray:
    """Stack scalar covariates and factor scores column-wise in declaration order.

    ``w`` of ``None`` means an intercept-only scalar block.
    """
    if not factor_models and w is None:
        raise InvalidArgumentError("nothing to assemble")
    T = factor_models[0].scores.shape[0] if factor_models else np.shape(w)[0]
    W = intercept_column(T) if w is None else np.asarray(w, dtype=float)
    W = W.reshape(-1, 1) if W.ndim == 1 else W
    if W.ndim != 2 or W.shape[0] != T:
        raise InvalidArgumentError("scalar covariates and scores have different row counts")
    blocks = [W]
    for fm in factor_models:
        if fm.scores.shape[0] != T:
            raise InvalidArgumentError(
                f"scores of {fm.regressor_id!r} have {fm.scores.shape[0]} rows, expected {T}"
            )
        blocks.append(fm.scores)
    return np.hstack(blocks)


def _default_spec(M: int, factor_models) -> ModelSpec:
    ks = tuple(fm.K for fm in factor_models)
    N = M - sum(ks)
    return ModelSpec(
        scalar_ids=("intercept",) + tuple(f"w{i}" for i in range(1, N)),
        regressors=tuple(FunctionalTerm(fm.regressor_id or f"X{j + 1}") for j, fm in enumerate(factor_models)),
        n_factors=ks,
    )


def fit_ffr(
    Y: CurvePanel,
    design,
    factor_models: Sequence[FactorModel] = (),
    spec: ModelSpec | None = None,
    regressors: Sequence[CurvePanel] = (),
) -> FFRFit:
    """Solve the normal equations for every grid point with one Cholesky factorization.

    Parameters
    ----------
    Y : CurvePanel
        Response panel, ``T`` rows.
    design : array_like, shape (T, M)
    factor_models : sequence of FactorModel
        Models whose scores occupy the trailing columns of ``design``.
    spec : ModelSpec, optional
        Column layout; inferred from ``factor_models`` when omitted.
    regressors : sequence of CurvePanel
        Regressor panels the factor models were fitted on, kept for inference.

    Raises
    ------
    MulticollinearityError
        If the condition number of ``Z'Z / T`` exceeds ``MAX_CONDITION``.
    """
    Z = np.asarray(design, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != Y.T:
        raise InvalidArgumentError(f"design must have shape (T={Y.T}, M)")
    T, M = Z.shape
    if T <= M:
        raise InvalidArgumentError(f"need more observations than columns, got T={T}, M={M}")
    factor_models = tuple(factor_models)
    spec = spec if spec is not None else _default_spec(M, factor_models)
    if spec.M != M:
        raise InvalidArgumentError(f"spec describes {spec.M} columns, design has {M}")
    Q = Z.T @ Z / T
    ev, evec = np.linalg.eigh(Q)
    cond = float(ev[-1] / ev[0]) if ev[0] > 0 else float("inf")
    if not cond <= MAX_CONDITION:
        labels = spec.column_labels()
        weak = np.abs(evec[:, 0])
        cols = [labels[i] for i in np.flatnonzero(weak > 0.1 * weak.max())]
        raise MulticollinearityError(
            f"design second-moment matrix is ill-conditioned (condition {cond:.3e}); "
            f"involved columns: {', '.join(cols)}",
            condition_number=cond,
            columns=cols,
        )
    cho = linalg.cho_factor(Q)
    B = linalg.cho_solve(cho, Z.T @ Y.values / T)
    Q_inv = linalg.cho_solve(cho, np.eye(M))
    Q_inv = 0.5 * (Q_inv + Q_inv.T)
    U = Y.values - Z @ B
    return FFRFit(
        spec=spec,
        design=Z,
        B_hat=B,
        Q_hat=Q,
        Q_hat_inv=Q_inv,
        residuals=CurvePanel(Y.grid, U, "residuals"),
        factor_models=factor_models,
        Y=Y,
        regressors=tuple(regressors),
        condition_number=cond,
    )


def coefficient_surface(fit: FFRFit, j: int) -> Kernel:
    """``beta_j(r, s) = sum_l B_lj(r) psi_lj(s)``; rows follow the response grid."""
    fm = fit.factor_models[j]
    Bj = fit.B_hat[fit.block(j)]
    return Kernel(fit.residuals.grid, fm.grid, Bj.T @ fm.loadings)


def reconstruct_intercept(fit: FFRFit) -> Curve:
    """Intercept curve of the model written in terms of uncentered regressors."""
    if not np.allclose(fit.design[:, 0], 1.0):
        raise InvalidArgumentError("the first design column is not an intercept")
    alpha = fit.B_hat[0].copy()
    for j, fm in enumerate(fit.factor_models):
        beta = coefficient_surface(fit, j).values
        alpha -= beta @ (fm.grid.weights * fm.mean.values)
    return Curve(fit.residuals.grid, alpha)


def _design_row(fit: FFRFit, w_new, X_new) -> np.ndarray:
    w = np.atleast_1d(np.asarray(w_new, dtype=float))
    if w.size != fit.spec.N:
        raise InvalidArgumentError(f"expected {fit.spec.N} scalar covariates, got {w.size}")
    if len(X_new) != len(fit.factor_models):
        raise InvalidArgumentError(
            f"expected {len(fit.factor_models)} regressor curves, got {len(X_new)}"
        )
    parts = [w]
    for fm, x in zip(fit.factor_models, X_new):
        if isinstance(x, Curve):
            check_same_grid(x.grid, fm.grid, "new regressor curve and loadings")
        parts.append(fm.project(x))
    return np.concatenate(parts)


def predict(fit: FFRFit, w_new, X_new: Sequence[Curve]) -> Curve:
    """Forecast the response curve for one new period."""
    return Curve(fit.residuals.grid, _design_row(fit, w_new, X_new) @ fit.B_hat)


def predict_panel(fit: FFRFit, w_new, X_new: Sequence[CurvePanel]) -> CurvePanel:
    """Forecast several periods at once; ``w_new`` has shape (n, N)."""
    W = np.atleast_2d(np.asarray(w_new, dtype=float))
    if len(X_new) != len(fit.factor_models):
        raise InvalidArgumentError("one panel per functional regressor is required")
    parts = [W]
    for fm, x in zip(fit.factor_models, X_new):
        check_same_grid(x.grid, fm.grid, "new regressor panel and loadings")
        parts.append(fm.project(x.values))
    return CurvePanel(fit.residuals.grid, np.hstack(parts) @ fit.B_hat)
