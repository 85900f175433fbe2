"""End-to-end fitting: factor counts, factor models and the regression in one call."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ffreg.errors import InvalidArgumentError
from ffreg.factor_select import DEFAULT_K_MAX, EDResult, estimate_num_factors
from ffreg.grid import CurvePanel
from ffreg.primitives import fit_factor_model
from ffreg.regression import FFRFit, FunctionalTerm, ModelSpec, fit_ffr

__all__ = ["fit_model"]


def fit_model(
    Y: CurvePanel,
    regressors: Sequence[CurvePanel],
    w=None,
    n_factors="auto",
    gamma: float = 1.0,
    K_max: int = DEFAULT_K_MAX,
    eigen_units: str = "grid",
    terms: Sequence[FunctionalTerm] | None = None,
    scalar_ids: Sequence[str] | None = None,
) -> tuple[FFRFit, list[EDResult | None]]:
    """Fit the functional regression of ``Y`` on ``regressors``.

    Parameters
    ----------
    Y : CurvePanel
    regressors : sequence of CurvePanel
        Aligned with ``Y`` row by row.
    w : array_like, shape (T, N), optional
        Scalar covariates whose first column is the intercept.
    n_factors : "auto" or sequence of int
        ``"auto"`` runs the eigenvalue-difference test for every regressor.
        Regressors with zero factors are left out of the model.
    gamma, K_max, eigen_units
        Settings of the eigenvalue-difference test.
    terms : sequence of FunctionalTerm, optional
        Labels of the regressors; taken from the panel labels otherwise.
    scalar_ids : sequence of str, optional

    Returns
    -------
    fit : FFRFit
    ed : list
        One :class:`EDResult` per regressor, or ``None`` entries when the
        counts were given.
    """
    T = Y.T
    W = np.ones((T, 1)) if w is None else np.asarray(w, dtype=float).reshape(T, -1)
    if terms is None:
        terms = [FunctionalTerm(X.label or f"X{j + 1}") for j, X in enumerate(regressors)]
    terms = list(terms)
    if len(terms) != len(regressors):
        raise InvalidArgumentError("one term per regressor panel is required")
    if scalar_ids is None:
        scalar_ids = ("intercept",) + tuple(f"w{i}" for i in range(1, W.shape[1]))
    if len(scalar_ids) != W.shape[1]:
        raise InvalidArgumentError("one scalar label per covariate column is required")
    for X in regressors:
        if X.T != T:
            raise InvalidArgumentError(f"regressor {X.label!r} has {X.T} rows, expected {T}")

    fms, ed = [], []
    if isinstance(n_factors, str):
        if n_factors != "auto":
            raise InvalidArgumentError(f"n_factors must be 'auto' or a list, got {n_factors!r}")
        if T <= K_max:
            raise InvalidArgumentError(f"need T > K_max, got T={T}, K_max={K_max}")
        for X, term in zip(regressors, terms):
            res = estimate_num_factors(X, Y, gamma, K_max, eigen_units)
            ed.append(res)
            fms.append(fit_factor_model(X, Y, res.K_hat, term.label, K_max) if res.K_hat else None)
    else:
        ks = [int(k) for k in n_factors]
        if len(ks) != len(regressors):
            raise InvalidArgumentError("one factor count per regressor is required")
        for X, term, k in zip(regressors, terms, ks):
            fms.append(fit_factor_model(X, Y, k, term.label) if k > 0 else None)
            ed.append(None)

    keep = [j for j, fm in enumerate(fms) if fm is not None]
    kept_fms = [fms[j] for j in keep]
    spec = ModelSpec(
        response_id=Y.label or "Y",
        scalar_ids=tuple(scalar_ids),
        regressors=tuple(terms[j] for j in keep),
        n_factors=tuple(fm.K for fm in kept_fms),
    )
    Z = np.hstack([W] + [fm.scores for fm in kept_fms])
    fit = fit_ffr(Y, Z, kept_fms, spec, regressors=[regressors[j] for j in keep])
    return fit, ed
