"""Saving and loading fitted models as plain files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ffreg.errors import InvalidArgumentError
from ffreg.grid import Curve, CurvePanel, grid_from_points
from ffreg.primitives import FactorModel
from ffreg.regression import FFRFit, FunctionalTerm, ModelSpec, fit_ffr

__all__ = ["save_fit", "load_fit"]


def _save(d: Path, name: str, arr) -> None:
    np.save(d / f"{name}.npy", np.ascontiguousarray(arr), allow_pickle=False)


def _load(d: Path, name: str) -> np.ndarray:
    return np.load(d / f"{name}.npy", allow_pickle=False)


def save_fit(fit: FFRFit, directory) -> list[str]:
    """Write everything needed to rebuild ``fit``; returns the file names written."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    spec = fit.spec
    meta = {
        "response_id": spec.response_id,
        "scalar_ids": list(spec.scalar_ids),
        "regressors": [[t.regressor_id, t.lag] for t in spec.regressors],
        "n_factors": list(spec.n_factors),
    }
    (d / "spec.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    names = ["spec.json"]
    arrays = {
        "design": fit.design,
        "Y": fit.Y.values,
        "Y_grid": fit.Y.grid.points,
    }
    for j, (fm, X) in enumerate(zip(fit.factor_models, fit.regressors)):
        arrays[f"X{j}"] = X.values
        arrays[f"X{j}_grid"] = X.grid.points
        arrays[f"eig{j}"] = fm.eigenvalues
        arrays[f"spectrum{j}"] = fm.spectrum
        arrays[f"loadings{j}"] = fm.loadings
        arrays[f"mean{j}"] = fm.mean.values
    for name, arr in arrays.items():
        _save(d, name, arr)
        names.append(f"{name}.npy")
    return names


def load_fit(directory) -> FFRFit:
    """Rebuild a fit saved by :func:`save_fit` by re-solving the least-squares problem.

    Factor scores are read back from the stored design, so the rebuilt fit
    reproduces the original coefficients.
    """
    d = Path(directory)
    if not (d / "spec.json").exists():
        raise InvalidArgumentError(f"{d} does not contain a saved fit")
    meta = json.loads((d / "spec.json").read_text())
    spec = ModelSpec(
        response_id=meta["response_id"],
        scalar_ids=tuple(meta["scalar_ids"]),
        regressors=tuple(FunctionalTerm(r, int(l)) for r, l in meta["regressors"]),
        n_factors=tuple(meta["n_factors"]),
    )
    Y = CurvePanel(grid_from_points(_load(d, "Y_grid")), _load(d, "Y"), spec.response_id)
    design = _load(d, "design")
    fms, regs = [], []
    for j, term in enumerate(spec.regressors):
        grid = grid_from_points(_load(d, f"X{j}_grid"))
        X = CurvePanel(grid, _load(d, f"X{j}"), term.label)
        regs.append(X)
        fms.append(
            FactorModel(
                term.label, Curve(grid, _load(d, f"mean{j}")), _load(d, f"eig{j}"),
                _load(d, f"loadings{j}"), design[:, spec.block(j)], _load(d, f"spectrum{j}"),
            )
        )
    return fit_ffr(Y, design, fms, spec, regs)
