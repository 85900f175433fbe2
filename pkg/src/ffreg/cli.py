"""Command-line interface: ``ffreg <command> [options]``.

Every command accepts ``--config file.json``. Explicit flags override the
config file, which overrides built-in defaults. Each run writes a
``manifest.json`` next to its outputs, tying every file to the hash of the
resolved configuration and the input files.

Exit codes: 0 on success, 1 when a computation fails, 2 when the
configuration is invalid.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from ffreg import __version__
from ffreg.bundle import load_fit, save_fit
from ffreg.errors import FFRError
from ffreg.factor_select import (
    DEFAULT_K_MAX,
    cross_validate_gamma,
    default_gamma_grid,
    estimate_num_factors,
)
from ffreg.forecasting import MODELS, export_csv, ingest_csv, rolling_forecast, simulate_market
from ffreg.grid import (
    CurvePanel,
    make_uniform_grid,
    read_panel_csv,
    write_kernel_csv,
    write_panel_csv,
)
from ffreg.inference import CONTOUR_LEVELS, infer
from ffreg.pipeline import fit_model
from ffreg.regression import coefficient_surface, reconstruct_intercept
from ffreg.simulation import canonical_variant, run_factor_count_study, run_monte_carlo
from ffreg.smoothing import build_bspline_basis, passthrough_panel, smooth_panel

__all__ = ["main", "ConfigError"]

logger = logging.getLogger("ffreg")


class ConfigError(Exception):
    """Invalid run configuration (exit code 2)."""


# ---------------------------------------------------------------- options


@dataclass(frozen=True)
class Option:
    name: str
    kind: Callable
    default: Any
    help: str
    check: Callable[[Any], bool] | None = None
    rule: str = ""
    many: bool = False
    flag: bool = False


def _pos(x):
    return x > 0


def _int_ge(k):
    return lambda x: x >= k


def _gamma_value(x):
    return x == "auto" or (isinstance(x, (int, float)) and x > 0)


def _parse_gamma(x):
    if x == "auto":
        return "auto"
    try:
        return float(x)
    except (TypeError, ValueError):
        raise ConfigError(f"gamma must be 'auto' or a positive number, got {x!r}") from None


def _parse_k(x):
    if x == "auto":
        return "auto"
    if isinstance(x, list):
        return [int(v) for v in x]
    try:
        return [int(v) for v in str(x).split(",")]
    except ValueError:
        raise ConfigError(f"K must be 'auto' or comma-separated integers, got {x!r}") from None


COMMON = [
    Option("config", str, None, "JSON configuration file"),
    Option("out", str, None, "output directory"),
    Option("verbose", bool, False, "log progress", flag=True),
]

COMMANDS: dict[str, tuple[str, list[Option]]] = {
    "smooth": (
        "turn raw discrete observations into curves on a uniform grid",
        [
            Option("input", str, None, "CSV with observation locations as header"),
            Option("grid_size", int, 200, "points of the output grid", _int_ge(2), ">= 2"),
            Option("degree", int, 3, "B-spline degree", _int_ge(0), ">= 0"),
            Option("n_basis", int, None, "number of basis functions (default min(M, 15))", _int_ge(1), ">= 1"),
            Option("passthrough", bool, False, "use raw columns as grid values", flag=True),
        ],
    ),
    "factors": (
        "estimate the number of predictive factors of each regressor",
        [
            Option("y", str, None, "response panel CSV"),
            Option("x", str, None, "regressor panel CSV (repeatable)", many=True),
            Option("gamma", _parse_gamma, 1.0, "tuning constant or 'auto'", _gamma_value, "'auto' or > 0"),
            Option("k_max", int, DEFAULT_K_MAX, "largest admissible factor count", _int_ge(1), ">= 1"),
            Option("eigen_units", str, "grid", "eigenvalue units: grid or l2", lambda x: x in ("grid", "l2"), "grid|l2"),
            Option("split_fraction", float, 0.6, "training share for gamma CV", lambda x: 0 < x < 1, "in (0, 1)"),
            Option("cv_refit_every", int, 1, "rows between refits in gamma CV", _int_ge(1), ">= 1"),
        ],
    ),
    "fit": (
        "fit the functional regression and export coefficient surfaces",
        [
            Option("y", str, None, "response panel CSV"),
            Option("x", str, None, "regressor panel CSV (repeatable)", many=True),
            Option("w", str, None, "scalar covariates CSV without intercept (header = names)"),
            Option("k", _parse_k, "auto", "'auto' or comma-separated factor counts"),
            Option("gamma", _parse_gamma, 1.0, "tuning constant or 'auto'", _gamma_value, "'auto' or > 0"),
            Option("k_max", int, DEFAULT_K_MAX, "largest admissible factor count", _int_ge(1), ">= 1"),
            Option("eigen_units", str, "grid", "eigenvalue units: grid or l2", lambda x: x in ("grid", "l2"), "grid|l2"),
        ],
    ),
    "infer": (
        "covariance surfaces, bands and p-values for a saved fit",
        [
            Option("fit", str, None, "directory written by 'fit'"),
            Option("level", float, [0.95], "confidence level (repeatable)", lambda x: 0 < x < 1, "in (0, 1)", many=True),
            Option("uncorrected", bool, False, "omit the generated-regressor correction", flag=True),
        ],
    ),
    "simulate": (
        "Monte Carlo coverage study or factor-count study on synthetic data",
        [
            Option("study", str, "coverage", "coverage or factor-count", lambda x: x in ("coverage", "factor-count"), "coverage|factor-count"),
            Option("variant", str, "homoskedastic", "homo|hetero", lambda x: _variant_ok(x), "homo|hetero"),
            Option("T", int, [500], "sample size (repeatable)", _int_ge(2), ">= 2", many=True),
            Option("K", int, [3], "factor count (repeatable)", _int_ge(1), ">= 1", many=True),
            Option("reps", int, 100, "replications", _int_ge(1), ">= 1"),
            Option("seed", int, 0, "random seed", _int_ge(0), ">= 0"),
            Option("P", int, 200, "grid size", _int_ge(2), ">= 2"),
            Option("gamma", float, 1.0, "tuning constant for the factor-count study", _pos, "> 0"),
            Option("k_max", int, DEFAULT_K_MAX, "largest admissible factor count", _int_ge(1), ">= 1"),
            Option("beta1_null", bool, False, "set the first coefficient surface to zero", flag=True),
            Option("factor_correlation", float, 0.0, "correlation of the two regressors' factors", lambda x: -1 < x < 1, "in (-1, 1)"),
            Option("workers", int, 1, "worker processes", _int_ge(1), ">= 1"),
        ],
    ),
    "forecast": (
        "rolling day-ahead price forecasts and accuracy metrics",
        [
            Option("data", str, None, "market CSV"),
            Option("schema", str, "long", "long or wide CSV layout", lambda x: x in ("long", "wide"), "long|wide"),
            Option("model", str, "ffr", "ffr|lasso|expert|naive", lambda x: x in MODELS, "|".join(MODELS)),
            Option("train_days", int, None, "days in the initial training window", _int_ge(20), ">= 20"),
            Option("policy", str, "rolling", "expanding or rolling", lambda x: x in ("expanding", "rolling"), "expanding|rolling"),
            Option("refit_every", int, 1, "days between refits", _int_ge(1), ">= 1"),
            Option("gamma", _parse_gamma, "auto", "tuning constant or 'auto'", _gamma_value, "'auto' or > 0"),
            Option("k_max", int, DEFAULT_K_MAX, "largest admissible factor count", _int_ge(1), ">= 1"),
            Option("lasso_tol", float, 1e-7, "coordinate-descent tolerance", _pos, "> 0"),
            Option("lasso_max_sweeps", int, 100_000, "coordinate-descent sweep cap", _int_ge(1), ">= 1"),
        ],
    ),
    "market-data": (
        "write a synthetic market dataset",
        [
            Option("days", int, 400, "working days", _int_ge(30), ">= 30"),
            Option("seed", int, 0, "random seed", _int_ge(0), ">= 0"),
            Option("schema", str, "long", "long or wide CSV layout", lambda x: x in ("long", "wide"), "long|wide"),
        ],
    ),
}

REQUIRED = {
    "smooth": ("input", "out"),
    "factors": ("y", "x", "out"),
    "fit": ("y", "x", "out"),
    "infer": ("fit", "out"),
    "simulate": ("out",),
    "forecast": ("data", "train_days", "out"),
    "market-data": ("out",),
}

# options that do not change the artifacts and are left out of the hash
_UNHASHED = {"config", "out", "verbose", "workers"}


def _variant_ok(x):
    try:
        canonical_variant(x)
        return True
    except FFRError:
        return False


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ffreg", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, (desc, opts) in COMMANDS.items():
        p = sub.add_parser(cmd, help=desc, description=desc)
        for opt in COMMON + opts:
            flag = "--" + opt.name.replace("_", "-")
            if opt.flag:
                p.add_argument(flag, dest=opt.name, action="store_const", const=True, default=None, help=opt.help)
            elif opt.many:
                p.add_argument(flag, dest=opt.name, action="append", default=None, help=opt.help)
            else:
                p.add_argument(flag, dest=opt.name, default=None, help=opt.help)
    return parser


def _coerce(opt: Option, value):
    if value is None:
        return None
    if opt.flag:
        if not isinstance(value, bool):
            raise ConfigError(f"{opt.name} must be true or false")
        return value
    if opt.kind is _parse_k:
        return _parse_k(value)
    values = value if isinstance(value, list) else [value]
    try:
        out = [opt.kind(v) for v in values]
    except (TypeError, ValueError):
        raise ConfigError(f"{opt.name}: cannot interpret {value!r}") from None
    if opt.check is not None:
        for v in out:
            if not opt.check(v):
                raise ConfigError(f"{opt.name} must be {opt.rule}, got {v!r}")
    return out if opt.many else out[0]


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Merge flags, config file and defaults, validating every value."""
    opts = {o.name: o for o in COMMON + COMMANDS[command][1]}
    file_cfg = {}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
        unknown = sorted(set(file_cfg) - set(opts))
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
    cfg = {}
    for name, opt in opts.items():
        if name == "config":
            cfg[name] = args.config
            continue
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            cfg[name] = _coerce(opt, flag_value)
        elif name in file_cfg:
            cfg[name] = _coerce(opt, file_cfg[name])
        else:
            cfg[name] = opt.default
    missing = [r for r in REQUIRED[command] if cfg.get(r) in (None, [])]
    if missing:
        raise ConfigError(f"missing required options: {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return cfg


# ---------------------------------------------------------------- artifacts


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(command: str, cfg: dict, inputs: list[str]) -> str:
    hashed = {k: v for k, v in cfg.items() if k not in _UNHASHED}
    doc = {
        "command": command,
        "config": hashed,
        "inputs": {p: _sha256(p) for p in sorted(inputs)},
        "version": __version__,
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _write_manifest(out: Path, command: str, cfg: dict, inputs: list[str], files: list[str]) -> None:
    hashed_cfg = {k: v for k, v in cfg.items() if k not in _UNHASHED}
    manifest = {
        "command": command,
        "version": __version__,
        "config": hashed_cfg,
        "config_hash": config_hash(command, cfg, inputs),
        "inputs": {p: _sha256(p) for p in sorted(inputs)},
        "outputs": {f: _sha256(out / f) for f in sorted(files)},
    }
    _write_json(out / "manifest.json", manifest)


def _safe(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in label).strip("_")


def _read_panels(cfg) -> tuple[CurvePanel, list[CurvePanel]]:
    Y = read_panel_csv(cfg["y"], "Y")
    xs = [read_panel_csv(p, Path(p).stem) for p in cfg["x"]]
    return Y, xs


def _read_scalars(path, T) -> tuple[np.ndarray, tuple]:
    import pandas as pd

    df = pd.read_csv(path, float_precision="round_trip")
    if len(df) != T:
        raise ConfigError(f"{path} has {len(df)} rows, the response has {T}")
    W = np.column_stack([np.ones(T), df.to_numpy(dtype=float)])
    return W, ("intercept",) + tuple(str(c) for c in df.columns)


# ---------------------------------------------------------------- commands


def cmd_smooth(cfg: dict, out: Path) -> tuple[list[str], list[str]]:
    raw = read_panel_csv(cfg["input"])
    obs = raw.grid.points
    if cfg["passthrough"]:
        panel = passthrough_panel(raw.values, raw.grid)
    else:
        target = make_uniform_grid(obs[0], obs[-1], cfg["grid_size"])
        n_basis = cfg["n_basis"] or min(obs.size, 15)
        basis = build_bspline_basis(target, cfg["degree"], n_basis)
        panel = smooth_panel(raw.values, obs, basis, target)
    write_panel_csv(out / "smoothed.csv", panel)
    return [cfg["input"]], ["smoothed.csv"]


def cmd_factors(cfg: dict, out: Path):
    Y, xs = _read_panels(cfg)
    gamma = cfg["gamma"]
    files = []
    result: dict = {}
    if gamma == "auto":
        cv = cross_validate_gamma(
            Y, xs, None, default_gamma_grid(), cfg["split_fraction"], cfg["k_max"],
            cfg["eigen_units"], cfg["cv_refit_every"],
        )
        gamma = cv.gamma
        result["gamma_cv"] = cv.to_dict()
    result["gamma"] = gamma
    result["regressors"] = {}
    for X in xs:
        ed = estimate_num_factors(X, Y, gamma, cfg["k_max"], cfg["eigen_units"])
        result["regressors"][X.label] = ed.to_dict()
        name = f"scree_{_safe(X.label)}.csv"
        lines = ["l,eigenvalue,g"] + [
            f"{l},{ed.eigenvalues[l - 1]!r},{ed.g_sequence[l]!r}" for l in range(1, ed.K_max + 1)
        ]
        (out / name).write_text("\n".join(lines) + "\n")
        files.append(name)
        if ed.hit_upper_bound:
            logger.warning("%s: estimate equals K_max=%d; consider a larger K_max", X.label, ed.K_max)
    _write_json(out / "factors.json", result)
    return [cfg["y"], *cfg["x"]], ["factors.json", *files]


def cmd_fit(cfg: dict, out: Path):
    Y, xs = _read_panels(cfg)
    inputs = [cfg["y"], *cfg["x"]]
    W, scalar_ids = (None, None)
    if cfg["w"]:
        W, scalar_ids = _read_scalars(cfg["w"], Y.T)
        inputs.append(cfg["w"])
    gamma = cfg["gamma"]
    extra = {}
    if cfg["k"] == "auto" and gamma == "auto":
        cv = cross_validate_gamma(Y, xs, W, K_max=cfg["k_max"], eigen_units=cfg["eigen_units"])
        gamma = cv.gamma
        extra["gamma_cv"] = cv.to_dict()
    if cfg["k"] != "auto" and len(cfg["k"]) != len(xs):
        raise ConfigError(f"--k lists {len(cfg['k'])} counts for {len(xs)} regressors")
    fit, ed = fit_model(
        Y, xs, W, cfg["k"], gamma if gamma != "auto" else 1.0, cfg["k_max"], cfg["eigen_units"],
        scalar_ids=scalar_ids,
    )
    files = []
    state = Path("state")
    files += [str(state / f) for f in save_fit(fit, out / state)]
    labels = fit.spec.column_labels()
    write_panel_csv(out / "B_hat.csv", CurvePanel(Y.grid, fit.B_hat), index=labels)
    write_panel_csv(out / "intercept.csv", CurvePanel(Y.grid, reconstruct_intercept(fit).values[None]))
    files += ["B_hat.csv", "intercept.csv"]
    for j, (term, fm) in enumerate(zip(fit.spec.regressors, fit.factor_models)):
        tag = _safe(term.label)
        write_kernel_csv(out / f"beta_{tag}.csv", coefficient_surface(fit, j))
        write_panel_csv(out / f"loadings_{tag}.csv", CurvePanel(fm.grid, fm.loadings),
                        index=[f"psi{l + 1}" for l in range(fm.K)])
        write_panel_csv(out / f"mean_{tag}.csv", CurvePanel(fm.grid, fm.mean.values[None]))
        files += [f"beta_{tag}.csv", f"loadings_{tag}.csv", f"mean_{tag}.csv"]
    summary = fit.summary()
    summary["gamma"] = gamma
    summary["factor_models"] = [fm.to_dict() for fm in fit.factor_models]
    summary["factor_selection"] = {
        X.label: (r.to_dict() if r is not None else None) for X, r in zip(xs, ed)
    }
    summary.update(extra)
    _write_json(out / "fit_summary.json", summary)
    files.append("fit_summary.json")
    return inputs, files


def cmd_infer(cfg: dict, out: Path):
    fit_dir = Path(cfg["fit"])
    fit = load_fit(fit_dir / "state")
    inputs = sorted(str(p) for p in (fit_dir / "state").iterdir())
    files = []
    levels = cfg["level"]
    summary = {"T": fit.T, "corrected": not cfg["uncorrected"], "levels": levels, "regressors": {}}
    for j, term in enumerate(fit.spec.regressors):
        res = infer(fit, j, levels=levels, corrected=not cfg["uncorrected"])
        tag = _safe(term.label)
        written = {}
        for name, ker in (("omega", res.omega), ("se", res.se), ("pvalues", res.p_values)):
            fname = f"{name}_{tag}.csv"
            write_kernel_csv(out / fname, ker)
            written[name] = fname
        for lv, (lo, hi) in res.bands.items():
            for side, ker in (("lower", lo), ("upper", hi)):
                fname = f"{side}_{int(round(lv * 100))}_{tag}.csv"
                write_kernel_csv(out / fname, ker)
                written[f"{side}_{lv}"] = fname
        p = res.p_values.values
        contour = {
            "file": written["pvalues"],
            "thresholds": list(CONTOUR_LEVELS),
            "share_below": {str(a): float(np.mean(p < a)) for a in CONTOUR_LEVELS},
            "r_axis": "rows (response grid)",
            "s_axis": "columns (regressor grid)",
        }
        _write_json(out / f"pvalues_{tag}.json", contour)
        files += list(written.values()) + [f"pvalues_{tag}.json"]
        summary["regressors"][term.label] = {"files": written, "min_p": float(p.min())}
    _write_json(out / "inference_summary.json", summary)
    files.append("inference_summary.json")
    return inputs, files


def cmd_simulate(cfg: dict, out: Path):
    workers = cfg["workers"]
    if cfg["study"] == "coverage":
        report = run_monte_carlo(
            cfg["reps"], cfg["T"], cfg["variant"], cfg["seed"], cfg["P"], cfg["K"][0],
            cfg["beta1_null"], cfg["factor_correlation"], n_jobs=workers,
        )
        (out / "report.json").write_text(report.to_json())
        (out / "report.csv").write_text(report.to_csv())
        logger.info("simulation finished in %.1f s", report.runtime)
        return [], ["report.json", "report.csv"]
    table = run_factor_count_study(
        cfg["reps"], cfg["T"], cfg["K"], cfg["gamma"], cfg["seed"], cfg["P"], cfg["k_max"],
        n_jobs=workers,
    )
    _write_json(out / "report.json", table.to_dict())
    rows = ["K,T,share"] + [f"{K},{T},{s:.6f}" for (K, T), s in sorted(table.shares.items())]
    (out / "report.csv").write_text("\n".join(rows) + "\n")
    return [], ["report.json", "report.csv"]


def cmd_forecast(cfg: dict, out: Path):
    ds = ingest_csv(cfg["data"], cfg["schema"])
    report = rolling_forecast(
        ds, cfg["model"], cfg["train_days"], cfg["refit_every"], cfg["policy"], cfg["gamma"],
        cfg["k_max"], lasso_tol=cfg["lasso_tol"], lasso_max_sweeps=cfg["lasso_max_sweeps"],
    )
    (out / "report.json").write_text(report.to_json())
    report.predictions_frame().to_csv(out / "predictions.csv", index=False, float_format=lambda v: repr(float(v)))
    return [cfg["data"]], ["report.json", "predictions.csv"]


def cmd_market_data(cfg: dict, out: Path):
    ds = simulate_market(cfg["days"], cfg["seed"])
    export_csv(ds, out / "market.csv", cfg["schema"])
    return [], ["market.csv"]


HANDLERS = {
    "smooth": cmd_smooth,
    "factors": cmd_factors,
    "fit": cmd_fit,
    "infer": cmd_infer,
    "simulate": cmd_simulate,
    "forecast": cmd_forecast,
    "market-data": cmd_market_data,
}


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
    except ConfigError as exc:
        return _fail("ConfigError", str(exc), 2)
    logging.basicConfig(
        level=logging.INFO if cfg["verbose"] else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        inputs, files = HANDLERS[args.command](cfg, out)
        _write_manifest(out, args.command, cfg, inputs, files)
    except ConfigError as exc:
        return _fail("ConfigError", str(exc), 2)
    except FFRError as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    except (OSError, ValueError, np.linalg.LinAlgError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    print(json.dumps({"command": args.command, "out": str(out), "files": sorted(files)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
