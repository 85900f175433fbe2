"""Day-ahead forecasting of 24-hour price curves and the benchmark models."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from ffreg.errors import FallbackWarning, FFRError, IngestionError, InvalidArgumentError, LeakageError
from ffreg.factor_select import DEFAULT_K_MAX, cross_validate_gamma
from ffreg.grid import CurvePanel, make_uniform_grid
from ffreg.lasso import MAX_SWEEPS as LASSO_MAX_SWEEPS
from ffreg.lasso import TOL as LASSO_TOL
from ffreg.lasso import cv_lasso, fit_lasso
from ffreg.pipeline import fit_model
from ffreg.regression import FunctionalTerm, predict

__all__ = [
    "HOURS",
    "BLOCKS",
    "MODELS",
    "MarketDataset",
    "ElecDesign",
    "ForecastReport",
    "ingest_csv",
    "export_csv",
    "simulate_market",
    "elec_terms",
    "build_elec_spec",
    "check_no_leakage",
    "naive_forecast",
    "expert_forecast",
    "expert_features",
    "lasso_features",
    "lasso_forecast",
    "accuracy_metrics",
    "rolling_forecast",
]

logger = logging.getLogger(__name__)

HOURS = 24
BLOCKS = ("price", "load", "renew")
MODELS = ("ffr", "lasso", "expert", "naive")
NAIVE_LAG = 5
MIN_EXPERT_DAYS = 30
WEEKDAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri")
_LONG_COLUMNS = ("date", "hour", "price", "load_fc", "renew_fc")
_WIDE_PREFIX = {"price": "price", "load": "load_fc", "renew": "renew_fc"}


@dataclass(frozen=True, eq=False)
class MarketDataset:
    """Working-day market data, one row per day and one column per hour.

    Attributes
    ----------
    dates : ndarray of datetime64[D]
    prices, load_forecast, renewables_forecast : ndarray, shape (T, 24)
    weekday : ndarray of int, shape (T,)
        0 for Monday through 4 for Friday.
    """

    dates: np.ndarray
    prices: np.ndarray
    load_forecast: np.ndarray
    renewables_forecast: np.ndarray
    weekday: np.ndarray = field(default=None)

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        object.__setattr__(self, "dates", dates)
        T = dates.size
        for name in ("prices", "load_forecast", "renewables_forecast"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (T, HOURS):
                raise InvalidArgumentError(f"{name} must have shape ({T}, {HOURS}), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidArgumentError(f"{name} has missing values")
            object.__setattr__(self, name, arr)
        wd = pd.DatetimeIndex(dates).weekday.to_numpy()
        if np.any(wd > 4):
            raise InvalidArgumentError("dataset contains weekend days")
        object.__setattr__(self, "weekday", wd)

    @property
    def T(self) -> int:
        return int(self.dates.size)

    def block(self, name: str) -> np.ndarray:
        return {"price": self.prices, "load": self.load_forecast, "renew": self.renewables_forecast}[name]

    def subset(self, rows) -> "MarketDataset":
        return MarketDataset(
            self.dates[rows], self.prices[rows], self.load_forecast[rows], self.renewables_forecast[rows]
        )


def _validate_dates(dates: pd.Series):
    d = pd.to_datetime(dates).dt.normalize()
    back = np.flatnonzero(np.diff(d.to_numpy()) < np.timedelta64(0, "ns"))
    if back.size:
        bad = d.iloc[back[0] + 1].date()
        raise IngestionError(f"dates are not monotone: {bad} appears after {d.iloc[back[0]].date()}")
    return d


def ingest_csv(path, schema: str = "long") -> MarketDataset:
    """Read market data and keep working days only.

    Parameters
    ----------
    path : path-like
    schema : {"long", "wide"}
        ``long`` has columns ``date, hour, price, load_fc, renew_fc`` with
        hours 0-23. ``wide`` has a ``date`` column and ``price_h``,
        ``load_fc_h``, ``renew_fc_h`` for ``h`` in 0-23.

    Raises
    ------
    IngestionError
        On missing columns, non-monotone dates, days without exactly 24
        hours, or missing values. Offending dates are named.
    """
    df = pd.read_csv(path, float_precision="round_trip")
    if "date" not in df.columns:
        raise IngestionError("missing 'date' column")
    df["date"] = _validate_dates(df["date"])
    df = df[df["date"].dt.weekday < 5]
    if schema == "long":
        missing = [c for c in _LONG_COLUMNS if c not in df.columns]
        if missing:
            raise IngestionError(f"missing columns: {', '.join(missing)}")
        counts = df.groupby("date")["hour"].agg(lambda h: tuple(sorted(h)))
        bad = [str(d.date()) for d, h in counts.items() if h != tuple(range(HOURS))]
        if bad:
            raise IngestionError(f"days without exactly hours 0-23: {', '.join(bad)}")
        blocks = {}
        for name, col in _WIDE_PREFIX.items():
            wide = df.pivot(index="date", columns="hour", values=col).sort_index()
            blocks[name] = wide.to_numpy(dtype=float)
        dates = wide.index.to_numpy().astype("datetime64[D]")
    elif schema == "wide":
        if df["date"].duplicated().any():
            dup = df.loc[df["date"].duplicated(), "date"].dt.date.astype(str).tolist()
            raise IngestionError(f"duplicate dates: {', '.join(dup)}")
        blocks = {}
        for name, prefix in _WIDE_PREFIX.items():
            cols = [f"{prefix}_{h}" for h in range(HOURS)]
            missing = [c for c in cols if c not in df.columns]
            if missing:
                raise IngestionError(f"missing columns: {', '.join(missing[:3])}...")
            blocks[name] = df[cols].to_numpy(dtype=float)
        dates = df["date"].to_numpy().astype("datetime64[D]")
    else:
        raise InvalidArgumentError(f"schema must be 'long' or 'wide', got {schema!r}")
    for name, arr in blocks.items():
        rows = np.flatnonzero(~np.isfinite(arr).all(axis=1))
        if rows.size:
            raise IngestionError(
                f"missing {name} values on: {', '.join(str(dates[i]) for i in rows)}"
            )
    return MarketDataset(dates, blocks["price"], blocks["load"], blocks["renew"])


def export_csv(dataset: MarketDataset, path, schema: str = "long") -> None:
    """Write a dataset so that :func:`ingest_csv` reads it back exactly."""
    if schema == "long":
        df = pd.DataFrame(
            {
                "date": np.repeat(dataset.dates.astype(str), HOURS),
                "hour": np.tile(np.arange(HOURS), dataset.T),
                "price": dataset.prices.ravel(),
                "load_fc": dataset.load_forecast.ravel(),
                "renew_fc": dataset.renewables_forecast.ravel(),
            }
        )
    elif schema == "wide":
        data = {"date": dataset.dates.astype(str)}
        for name, prefix in _WIDE_PREFIX.items():
            for h in range(HOURS):
                data[f"{prefix}_{h}"] = dataset.block(name)[:, h]
        df = pd.DataFrame(data)
    else:
        raise InvalidArgumentError(f"schema must be 'long' or 'wide', got {schema!r}")
    df.to_csv(path, index=False, float_format=lambda v: repr(float(v)))


def simulate_market(n_days: int = 400, seed: int = 0, start: str = "2020-01-06") -> MarketDataset:
    """Synthetic working-day market driven by a known functional regression.

    Load and renewable forecasts follow daily profiles with persistent random
    levels. The price curve responds through low-rank surfaces to the
    previous day's price, the current load and the current renewables, plus
    a weekday effect and smooth noise.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    h = np.linspace(0.0, 1.0, HOURS)
    dates = np.busday_offset(np.datetime64(start, "D"), np.arange(n_days), roll="forward")
    wd = pd.DatetimeIndex(dates).weekday.to_numpy()
    v1 = np.ones(HOURS)
    v2 = np.sqrt(2) * np.sin(2 * np.pi * h)
    v3 = np.sqrt(2) * np.cos(2 * np.pi * h)
    load_profile = 55 + 12 * np.sin(np.pi * h) ** 2
    solar = np.exp(-((h - 0.5) ** 2) / 0.03)
    load_week = np.array([1.0, 1.5, 1.5, 1.0, -1.0])
    price_week = np.array([-3.0, 0.5, 1.0, 0.5, -1.5])

    def ar1(n, phi, sd):
        x = np.zeros(n)
        e = rng.standard_normal(n) * sd
        for t in range(1, n):
            x[t] = phi * x[t - 1] + e[t]
        return x

    load_level = ar1(n_days, 0.7, 3.0)
    wind = np.abs(ar1(n_days, 0.6, 6.0)) + 2.0
    sun = rng.uniform(0.0, 15.0, n_days)
    L = (load_profile[None] + (load_level + load_week[wd])[:, None]
         + rng.standard_normal((n_days, 2)) @ np.vstack([v2, v3]))
    G = wind[:, None] * (0.8 + 0.2 * v2[None]) / 1.2 + sun[:, None] * solar[None]
    # low-rank response surfaces, written as sums of outer products
    beta_p = 0.45 * np.outer(v1, v1) + 0.25 * np.outer(v2, v2)
    beta_l = 0.9 * np.outer(v1, v1) + 0.3 * np.outer(v3, v1)
    beta_g = -0.8 * np.outer(v1, v1) - 0.4 * np.outer(v2, v2)
    w = np.full(HOURS, 1.0 / (HOURS - 1))
    w[[0, -1]] /= 2
    noise_basis = np.vstack([v1, v2, v3])
    P = np.zeros((n_days, HOURS))
    P[0] = 40.0
    for t in range(1, n_days):
        P[t] = (
            15.0
            + price_week[wd[t]]
            + beta_p @ (w * P[t - 1])
            + beta_l @ (w * (L[t] - 55.0))
            + beta_g @ (w * G[t])
            + 2.0 * rng.standard_normal(3) @ noise_basis
            + 0.5 * rng.standard_normal(HOURS)
        )
    return MarketDataset(dates, P, L, G)


# regressor lags in working days
_ELEC_LAGS = {"price": (1, 2, 5), "load": (0, 1, 5), "renew": (0, 1, 5)}


def elec_terms() -> list[FunctionalTerm]:
    """The nine functional regressors of the day-ahead price model."""
    return [FunctionalTerm(b, lag) for b in BLOCKS for lag in _ELEC_LAGS[b]]


def _availability(term: FunctionalTerm, target: int) -> int:
    """Day on which a feature becomes known: prices after their own day,
    load and renewables forecasts one day ahead."""
    day = target - term.lag
    return day if term.regressor_id == "price" else day - 1


def check_no_leakage(terms: Sequence[FunctionalTerm], target: int) -> None:
    """Raise :class:`LeakageError` if a feature is not known before ``target``."""
    for term in terms:
        if _availability(term, target) >= target:
            raise LeakageError(
                f"feature {term.label} for day {target} is only available on day "
                f"{_availability(term, target)}"
            )


def _weekday_dummies(weekday) -> np.ndarray:
    wd = np.asarray(weekday)
    return np.column_stack([np.ones(wd.size)] + [(wd == d).astype(float) for d in range(1, 5)])


@dataclass(frozen=True, eq=False)
class ElecDesign:
    """Aligned panels of the day-ahead price model.

    ``rows[i]`` is the dataset day of row ``i``; row ``i`` of every panel and of
    ``w`` refers to that target day.
    """

    terms: list
    scalar_ids: tuple
    rows: np.ndarray
    Y: CurvePanel
    regressors: list
    w: np.ndarray

    @property
    def start(self) -> int:
        return int(self.rows[0])

    def subset(self, idx) -> "ElecDesign":
        return ElecDesign(
            self.terms, self.scalar_ids, self.rows[idx], self.Y.subset(idx),
            [X.subset(idx) for X in self.regressors], self.w[idx],
        )


def build_elec_spec(dataset: MarketDataset, terms: Sequence[FunctionalTerm] | None = None) -> ElecDesign:
    """Response, lagged functional regressors and weekday covariates.

    Rows whose lags reach before the first day are dropped, so with the
    default terms the first usable target is the sixth day (index 5).
    Monday is the reference weekday.
    """
    terms = elec_terms() if terms is None else list(terms)
    start = max(t.lag for t in terms)
    if dataset.T <= start + 1:
        raise InvalidArgumentError(f"need more than {start + 1} days, got {dataset.T}")
    rows = np.arange(start, dataset.T)
    grid = make_uniform_grid(0.0, 1.0, HOURS)
    Y = CurvePanel(grid, dataset.prices[rows], "price")
    regs = [CurvePanel(grid, dataset.block(t.regressor_id)[rows - t.lag], t.label) for t in terms]
    scalar_ids = ("intercept",) + tuple(f"is_{d}" for d in WEEKDAY_NAMES[1:])
    return ElecDesign(terms, scalar_ids, rows, Y, regs, _weekday_dummies(dataset.weekday[rows]))


def naive_forecast(prices, target: int) -> np.ndarray:
    """Price curve of the same weekday one working week earlier."""
    if target < NAIVE_LAG:
        raise InvalidArgumentError(f"naive forecast needs {NAIVE_LAG} days of history")
    return np.asarray(prices, dtype=float)[target - NAIVE_LAG].copy()


_EXPERT_TERMS = [FunctionalTerm("price", 1), FunctionalTerm("price", 2), FunctionalTerm("price", 5)]


def expert_features(prices, weekday, day: int, hour: int) -> np.ndarray:
    """Regressors of the hourly expert model for ``day``.

    Same-hour prices at lags 1, 2 and 5, the previous day's minimum, maximum
    and last-hour price, and weekday dummies with an intercept. The last-hour
    price is omitted for the last hour, where it duplicates the lag-1 price.
    """
    P = prices
    prev = P[day - 1]
    feats = [P[day - 1, hour], P[day - 2, hour], P[day - 5, hour], prev.min(), prev.max()]
    if hour != HOURS - 1:
        feats.append(prev[-1])
    return np.concatenate([feats, _weekday_dummies([weekday[day]])[0]])


def expert_forecast(dataset: MarketDataset, target: int, train_days: Sequence[int] | None = None,
                    return_coef: bool = False):
    """24 hourly least-squares forecasts for day ``target``.

    Parameters
    ----------
    dataset : MarketDataset
    target : int
        Day to forecast; only earlier days are used for training.
    train_days : sequence of int, optional
        Target days used for estimation; all admissible days before
        ``target`` by default.
    return_coef : bool
        Also return the list of hourly coefficient vectors (``None`` where
        the naive fallback was used).
    """
    P, wd = dataset.prices, dataset.weekday
    if train_days is None:
        train_days = range(NAIVE_LAG, target)
    days = np.asarray([d for d in train_days if NAIVE_LAG <= d < target])
    if days.size < MIN_EXPERT_DAYS:
        raise InvalidArgumentError(f"expert model needs {MIN_EXPERT_DAYS} training days, got {days.size}")
    check_no_leakage(_EXPERT_TERMS, target)
    out = np.empty(HOURS)
    coefs = []
    for h in range(HOURS):
        Xh = np.vstack([expert_features(P, wd, d, h) for d in days])
        coef, _, rank, _ = np.linalg.lstsq(Xh, P[days, h], rcond=None)
        if rank < Xh.shape[1]:
            warnings.warn(
                f"expert design for hour {h} is singular; using the naive forecast",
                FallbackWarning, stacklevel=2,
            )
            out[h] = P[target - NAIVE_LAG, h]
            coefs.append(None)
            continue
        out[h] = expert_features(P, wd, target, h) @ coef
        coefs.append(coef)
    return (out, coefs) if return_coef else out


def lasso_features(dataset: MarketDataset, days) -> np.ndarray:
    """All 24 hours of the nine lagged blocks plus four weekday dummies (220 columns)."""
    days = np.asarray(days)
    blocks = [dataset.block(t.regressor_id)[days - t.lag] for t in elec_terms()]
    dummies = _weekday_dummies(dataset.weekday[days])[:, 1:]
    return np.hstack(blocks + [dummies])


def lasso_forecast(dataset: MarketDataset, target: int, cv_folds: int = 10,
                   train_days: Sequence[int] | None = None, lam=None, n_lambda: int = 20,
                   tol: float = LASSO_TOL, max_sweeps: int = LASSO_MAX_SWEEPS) -> np.ndarray:
    """Hourly lasso forecasts for day ``target``.

    The penalty of each hour is tuned by ``cv_folds``-fold cross-validation
    over ``n_lambda`` values unless ``lam`` is given.
    """
    start = max(t.lag for t in elec_terms())
    if train_days is None:
        train_days = range(start, target)
    days = np.asarray([d for d in train_days if start <= d < target])
    if days.size < cv_folds * 5:
        raise InvalidArgumentError(f"lasso needs {cv_folds * 5} training days, got {days.size}")
    check_no_leakage(elec_terms(), target)
    X = lasso_features(dataset, days)
    Y = dataset.prices[days]
    if lam is None:
        lam = cv_lasso(X, Y, cv_folds, n_lambda, tol=tol, max_sweeps=max_sweeps)
    model = fit_lasso(X, Y, lam, tol=tol, max_sweeps=max_sweeps)
    return model.predict(lasso_features(dataset, [target]))[0]


def accuracy_metrics(pred, actual, naive_pred) -> tuple[float, float, float]:
    """Return ``(MAE, rMAE, RMSE)`` over all cells; rMAE is relative to ``naive_pred``."""
    pred, actual, naive_pred = (np.asarray(a, dtype=float) for a in (pred, actual, naive_pred))
    if not pred.shape == actual.shape == naive_pred.shape:
        raise InvalidArgumentError("prediction, actual and naive arrays must share a shape")
    err = pred - actual
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err**2)))
    mae_naive = float(np.mean(np.abs(naive_pred - actual)))
    rmae = mae / mae_naive if mae_naive > 0 else (1.0 if mae == 0 else float("inf"))
    return mae, rmae, rmse


@dataclass
class ForecastReport:
    """Accuracy of one model over a test period.

    Attributes
    ----------
    model : str
    mae, rmae, rmse : float
    dates : ndarray
        Test days.
    predictions, actual, naive : ndarray, shape (n_test, 24)
    daily_mae : ndarray, shape (n_test,)
    failures : list of (date, message)
        Days on which the model could not be fitted; the naive forecast
        was used there.
    config : dict
    selected : list of dict
        Per refit: tuning constant and factor counts (``ffr``) or penalties
        (``lasso``).
    """

    model: str
    mae: float
    rmae: float
    rmse: float
    dates: np.ndarray
    predictions: np.ndarray
    actual: np.ndarray
    naive: np.ndarray
    daily_mae: np.ndarray
    failures: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    selected: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "MAE": self.mae,
            "rMAE": self.rmae,
            "RMSE": self.rmse,
            "n_test_days": int(self.dates.size),
            "first_test_day": str(self.dates[0]) if self.dates.size else None,
            "last_test_day": str(self.dates[-1]) if self.dates.size else None,
            "daily_mae": [float(v) for v in self.daily_mae],
            "failures": [{"date": str(d), "error": m} for d, m in self.failures],
            "selected": self.selected,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def predictions_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.predictions, columns=[f"h{h}" for h in range(HOURS)])
        df.insert(0, "date", self.dates.astype(str))
        return df


def _window(policy: str, target: int, start: int, train_len: int) -> range:
    if policy == "expanding":
        return range(start, target)
    return range(max(start, target - (train_len - start)), target)


def rolling_forecast(
    dataset: MarketDataset,
    model: str,
    train_len: int,
    refit_every: int = 1,
    policy: str = "expanding",
    gamma="auto",
    K_max: int = DEFAULT_K_MAX,
    eigen_units: str = "grid",
    cv_folds: int = 10,
    lasso_retunes: int = 4,
    gamma_cv_refit_every: int = 5,
    terms: Sequence[FunctionalTerm] | None = None,
    lasso_n_lambda: int = 20,
    lasso_tol: float = LASSO_TOL,
    lasso_max_sweeps: int = LASSO_MAX_SWEEPS,
) -> ForecastReport:
    """One-day-ahead forecasts for every day after the first ``train_len`` days.

    Parameters
    ----------
    dataset : MarketDataset
    model : {"ffr", "lasso", "expert", "naive"}
    train_len : int
        Days (from the start of the data) in the initial training window.
    refit_every : int
        Days between re-estimations; the functional model re-selects its
        factor counts only at these points.
    policy : {"expanding", "rolling"}
        Expanding windows keep the first day; rolling windows keep a fixed length.
    gamma : float or "auto"
        Tuning constant of the factor-count test; ``"auto"`` cross-validates
        it once on the initial training window.
    lasso_retunes : int
        Number of evenly spaced penalty re-tunings over the test period.
    lasso_n_lambda, lasso_tol, lasso_max_sweeps
        Penalty grid size and coordinate-descent stopping rule.
    terms : sequence of FunctionalTerm, optional
        Functional regressors for ``ffr``; the nine default terms otherwise.
    """
    if model not in MODELS:
        raise InvalidArgumentError(f"model must be one of {MODELS}, got {model!r}")
    if policy not in ("expanding", "rolling"):
        raise InvalidArgumentError(f"policy must be 'expanding' or 'rolling', got {policy!r}")
    if not 0 < train_len < dataset.T:
        raise InvalidArgumentError(f"need 0 < train_len < T={dataset.T}, got {train_len}")
    if refit_every < 1:
        raise InvalidArgumentError("refit_every must be >= 1")
    terms = elec_terms() if terms is None else list(terms)
    start = max(max(t.lag for t in terms), NAIVE_LAG)
    if train_len <= start + 10:
        raise InvalidArgumentError(f"train_len must exceed {start + 10} days")
    targets = np.arange(train_len, dataset.T)
    n_test = targets.size
    P = dataset.prices
    naive = np.vstack([naive_forecast(P, t) for t in targets])
    preds = np.empty((n_test, HOURS))
    failures, selected = [], []
    config = {
        "model": model, "train_len": int(train_len), "refit_every": int(refit_every),
        "policy": policy, "gamma": gamma if isinstance(gamma, str) else float(gamma),
        "K_max": int(K_max), "eigen_units": eigen_units,
    }

    design = build_elec_spec(dataset, terms) if model == "ffr" else None
    if model == "ffr" and gamma == "auto":
        first = design.subset(slice(0, train_len - design.start))
        cv = cross_validate_gamma(
            first.Y, first.regressors, first.w, split_fraction=0.6, K_max=K_max,
            eigen_units=eigen_units, refit_every=gamma_cv_refit_every,
        )
        gamma = cv.gamma
        config["gamma_cv"] = cv.to_dict()
    elif model == "ffr":
        gamma = float(gamma)
    retune_every = max(1, int(np.ceil(n_test / lasso_retunes)))
    fitted = None
    lam = None

    for i, t in enumerate(targets):
        window = _window(policy, t, start, train_len)
        try:
            if model == "naive":
                preds[i] = naive[i]
                continue
            if model == "expert":
                preds[i] = expert_forecast(dataset, t, window)
                continue
            if model == "lasso":
                check_no_leakage(elec_terms(), t)
                days = np.asarray(window)
                X = lasso_features(dataset, days)
                if lam is None or i % retune_every == 0:
                    lam = cv_lasso(X, P[days], cv_folds, lasso_n_lambda,
                                   tol=lasso_tol, max_sweeps=lasso_max_sweeps)
                    selected.append({"date": str(dataset.dates[t]), "lambda": [float(v) for v in lam]})
                if fitted is None or i % refit_every == 0:
                    warm = None if fitted is None else fitted.coef
                    fitted = fit_lasso(X, P[days], lam, warm, lasso_tol, lasso_max_sweeps)
                preds[i] = fitted.predict(lasso_features(dataset, [t]))[0]
                continue
            check_no_leakage(terms, t)
            if fitted is None or i % refit_every == 0:
                idx = np.asarray(window) - design.start
                sub = design.subset(idx)
                fitted, ed = fit_model(
                    sub.Y, sub.regressors, sub.w, "auto", gamma, K_max, eigen_units,
                    terms=terms, scalar_ids=design.scalar_ids,
                )
                selected.append({
                    "date": str(dataset.dates[t]), "gamma": float(gamma),
                    "K_hat": {tm.label: r.K_hat for tm, r in zip(terms, ed)},
                })
            row = t - design.start
            kept = {tm.label for tm in fitted.spec.regressors}
            x_new = [X.row(row) for tm, X in zip(terms, design.regressors) if tm.label in kept]
            preds[i] = predict(fitted, design.w[row], x_new).values
        except LeakageError:
            raise
        except (FFRError, np.linalg.LinAlgError) as exc:
            logger.warning("%s failed on %s: %s", model, dataset.dates[t], exc)
            failures.append((dataset.dates[t], str(exc)))
            preds[i] = naive[i]
            fitted = None

    actual = P[targets]
    mae, rmae, rmse = accuracy_metrics(preds, actual, naive)
    return ForecastReport(
        model=model, mae=mae, rmae=rmae, rmse=rmse, dates=dataset.dates[targets],
        predictions=preds, actual=actual, naive=naive,
        daily_mae=np.abs(preds - actual).mean(axis=1),
        failures=failures, config=config, selected=selected,
    )
