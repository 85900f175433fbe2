"""Synthetic data with a known factor structure and Monte Carlo studies on it."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ffreg.errors import InvalidArgumentError
from ffreg.factor_select import DEFAULT_K_MAX, estimate_num_factors
from ffreg.grid import Curve, CurvePanel, Grid, Kernel, make_uniform_grid
from ffreg.inference import covariance_surface, norm_ppf, sandwich_covariance
from ffreg.primitives import fit_factor_model
from ffreg.regression import assemble_design, coefficient_surface, fit_ffr

__all__ = [
    "VARIANTS",
    "DGPConfig",
    "DGPData",
    "make_rng",
    "fourier_basis",
    "fourier_matrix",
    "bernstein_basis",
    "bernstein_matrix",
    "beta_matrices",
    "coefficient_matrices",
    "draw_innovations",
    "assemble_dgp",
    "gen_dgp",
    "replication_metrics",
    "MonteCarloRow",
    "SimulationReport",
    "run_monte_carlo",
    "FactorCountTable",
    "run_factor_count_study",
]

logger = logging.getLogger(__name__)

VARIANTS = ("homoskedastic", "heteroskedastic")
_VARIANT_ALIASES = {"homo": "homoskedastic", "hetero": "heteroskedastic", "dgp1": "homoskedastic", "dgp2": "heteroskedastic"}

_B1 = np.array([[-0.03, 0.09, 0.15], [0.11, -0.94, 0.26], [-0.30, -0.17, 0.21]])
_B2 = np.array([[-0.41, -0.29, -0.28], [-0.42, -0.26, 0.09], [-0.73, -0.12, 0.15]])
_EXTRA_DECAY = 0.9


def canonical_variant(variant: str) -> str:
    v = _VARIANT_ALIASES.get(str(variant).lower(), str(variant).lower())
    if v not in VARIANTS:
        raise InvalidArgumentError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    return v


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator; ``seed`` may be an int or a ``SeedSequence``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(ss))


def fourier_basis(l: int, grid: Grid) -> Curve:
    """``l``-th element (1-based) of the orthonormal Fourier basis on [0, 1]."""
    if l < 1:
        raise InvalidArgumentError(f"Fourier index must be >= 1, got {l}")
    s = grid.points
    if l == 1:
        vals = np.ones_like(s)
    elif l % 2 == 0:
        vals = np.sqrt(2) * np.sin(l * np.pi * s)
    else:
        vals = np.sqrt(2) * np.cos((l - 1) * np.pi * s)
    return Curve(grid, vals)


def fourier_matrix(L: int, grid: Grid) -> np.ndarray:
    """First ``L`` Fourier elements as rows of an (L, P) array."""
    return np.vstack([fourier_basis(l, grid).values for l in range(1, L + 1)])


def bernstein_basis(i: int, I: int, grid: Grid) -> Curve:
    """``C(I+1, i) r^i (1-r)^(I+1-i)`` for ``1 <= i <= I``."""
    if not 1 <= i <= I:
        raise InvalidArgumentError(f"need 1 <= i <= I, got i={i}, I={I}")
    r = grid.points
    return Curve(grid, math.comb(I + 1, i) * r**i * (1 - r) ** (I + 1 - i))


def bernstein_matrix(I: int, grid: Grid) -> np.ndarray:
    return np.vstack([bernstein_basis(i, I, grid).values for i in range(1, I + 1)])


def beta_matrices():
    """The two 3x3 coefficient matrices of the reference design (fresh copies)."""
    return _B1.copy(), _B2.copy()


def coefficient_matrices(K: int):
    """Coefficient matrices for ``K`` factors.

    For ``K <= 3`` the leading ``K x K`` blocks of the reference matrices are
    used. For ``K > 3`` each reference matrix is extended block-diagonally
    with ``sigma_min * 0.9**m`` for ``m = 1..K-3``, where ``sigma_min`` is its
    smallest singular value, so every extra factor stays predictive but
    weaker than the last reference one.
    """
    if K < 1:
        raise InvalidArgumentError(f"K must be >= 1, got {K}")
    out = []
    for B in beta_matrices():
        if K <= 3:
            out.append(B[:K, :K].copy())
            continue
        smin = np.linalg.svd(B, compute_uv=False)[-1]
        ext = np.zeros((K, K))
        ext[:3, :3] = B
        for m in range(1, K - 2):
            ext[2 + m, 2 + m] = smin * _EXTRA_DECAY**m
        out.append(ext)
    return tuple(out)


@dataclass(frozen=True)
class DGPConfig:
    """Configuration of one synthetic sample.

    Attributes
    ----------
    T : int
    K : int
        Number of predictive factors per regressor; ``3K`` Fourier modes make up each regressor.
    variant : {"homoskedastic", "heteroskedastic"}
        The heteroskedastic variant scales every response error by the first
        factor of the first regressor.
    seed : int
    P : int
        Grid size on [0, 1].
    I : int or None
        Number of Bernstein error functions; ``2K`` when ``None``.
    beta1_null : bool
        Set the first coefficient surface to zero.
    factor_correlation : float
        Correlation between matching factors of the two regressors.
    """

    T: int
    K: int = 3
    variant: str = "homoskedastic"
    seed: int = 0
    P: int = 200
    I: int | None = None
    beta1_null: bool = False
    factor_correlation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "variant", canonical_variant(self.variant))
        if self.T < 2:
            raise InvalidArgumentError(f"T must be >= 2, got {self.T}")
        if self.K < 1:
            raise InvalidArgumentError(f"K must be >= 1, got {self.K}")
        if self.P < 2:
            raise InvalidArgumentError(f"P must be >= 2, got {self.P}")
        if self.I is not None and self.I < 1:
            raise InvalidArgumentError(f"I must be >= 1, got {self.I}")
        if not -1 < self.factor_correlation < 1:
            raise InvalidArgumentError("factor_correlation must lie in (-1, 1)")

    @property
    def n_errors(self) -> int:
        return 2 * self.K if self.I is None else self.I


@dataclass(frozen=True, eq=False)
class DGPData:
    """A generated sample together with the quantities that produced it."""

    Y: CurvePanel
    X1: CurvePanel
    X2: CurvePanel
    truth: tuple
    factors: tuple
    loadings: np.ndarray
    coefficients: tuple
    errors: np.ndarray


def draw_innovations(config: DGPConfig, rng: np.random.Generator) -> dict:
    """All standard normal draws of one sample, in a fixed order."""
    T, K, I = config.T, config.K, config.n_errors
    return {
        "f1": rng.standard_normal((T, K)),
        "e1": rng.standard_normal((T, 2 * K)),
        "f2": rng.standard_normal((T, K)),
        "e2": rng.standard_normal((T, 2 * K)),
        "xi": rng.standard_normal((T, I)),
    }


def assemble_dgp(config: DGPConfig, draws: dict, grid: Grid | None = None) -> DGPData:
    """Build the sample from given innovations (deterministic)."""
    K = config.K
    grid = make_uniform_grid(0.0, 1.0, config.P) if grid is None else grid
    V = fourier_matrix(3 * K, grid)
    rho = bernstein_matrix(config.n_errors, grid)
    B1, B2 = coefficient_matrices(K)
    if config.beta1_null:
        B1 = np.zeros_like(B1)
    F2 = draws["f2"]
    a = config.factor_correlation
    F1 = a * F2 + np.sqrt(1 - a * a) * draws["f1"] if a else draws["f1"]
    X1 = F1 @ V[:K] + draws["e1"] @ V[K:]
    X2 = F2 @ V[:K] + draws["e2"] @ V[K:]
    u = draws["xi"]
    if config.variant == "heteroskedastic":
        u = u * F1[:, :1]
    Y = F1 @ B1.T @ V[:K] + F2 @ B2.T @ V[:K] + u @ rho
    truth = tuple(Kernel(grid, grid, V[:K].T @ B @ V[:K]) for B in (B1, B2))
    return DGPData(
        Y=CurvePanel(grid, Y, "Y"),
        X1=CurvePanel(grid, X1, "X1"),
        X2=CurvePanel(grid, X2, "X2"),
        truth=truth,
        factors=(F1, F2),
        loadings=V[:K],
        coefficients=(B1, B2),
        errors=u,
    )


def gen_dgp(config: DGPConfig, rng: np.random.Generator | None = None) -> DGPData:
    """Draw one sample; deterministic given ``config.seed`` or the supplied generator."""
    rng = make_rng(config.seed) if rng is None else rng
    return assemble_dgp(config, draw_innovations(config, rng))


def _coverage(beta_hat, beta, omega, T, z):
    half = z * np.sqrt(omega / T)
    return float(np.mean(np.abs(beta_hat - beta) <= half))


def replication_metrics(data: DGPData, level: float = 0.95) -> dict:
    """Bias and band coverage of the first coefficient surface in one sample.

    Three covariance modes are compared: the true-parameter regression on
    the latent factors with a robust sandwich, the estimated model with the
    uncorrected sandwich, and the estimated model with the full correction.
    """
    Y, X1, X2 = data.Y, data.X1, data.X2
    T = Y.T
    K = data.loadings.shape[0]
    z = norm_ppf(0.5 + level / 2)
    beta = data.truth[0].values

    Zt = np.hstack([np.ones((T, 1))] + list(data.factors))
    fit_t = fit_ffr(Y, Zt)
    V = data.loadings
    beta_t = fit_t.B_hat[1 : 1 + K].T @ V
    om_t = sandwich_covariance(
        fit_t.Q_hat_inv[1 : 1 + K], Zt, fit_t.residuals.values, V, Y.grid, X1.grid
    ).values

    fms = [fit_factor_model(X1, Y, K, "X1"), fit_factor_model(X2, Y, K, "X2")]
    fit = fit_ffr(Y, assemble_design(None, fms), fms, regressors=(X1, X2))
    beta_f = coefficient_surface(fit, 0).values
    om_u = covariance_surface(fit, Y, 0, corrected=False).values
    om_c = covariance_surface(fit, Y, 0, corrected=True).values
    return {
        "err_true_param": float(np.mean(beta_t - beta)),
        "err_ffr": float(np.mean(beta_f - beta)),
        "coverage_true_param": _coverage(beta_t, beta, om_t, T, z),
        "coverage_uncorrected": _coverage(beta_f, beta, om_u, T, z),
        "coverage_ffr": _coverage(beta_f, beta, om_c, T, z),
        "rejection_rate": float(np.mean(np.abs(beta_f) > z * np.sqrt(om_c / T))),
    }


@dataclass(frozen=True)
class MonteCarloRow:
    """Aggregates for one (variant, T) cell.

    ``bias_*`` is the absolute value of the estimation error averaged over the
    grid and the replications. ``rejection_rate`` is the share of grid points
    where the corrected band excludes zero.
    """

    variant: str
    T: int
    reps: int
    bias_true_param: float
    bias_ffr: float
    coverage_true_param: float
    coverage_uncorrected: float
    coverage_ffr: float
    rejection_rate: float


_METRIC_COLUMNS = (
    "bias_true_param",
    "bias_ffr",
    "coverage_true_param",
    "coverage_uncorrected",
    "coverage_ffr",
    "rejection_rate",
)


@dataclass
class SimulationReport:
    """Monte Carlo results, one row per (variant, T).

    ``runtime`` is kept in memory only so that serialized reports are
    reproducible byte for byte.
    """

    rows: list
    seed: int
    config: dict = field(default_factory=dict)
    runtime: float = 0.0

    def row(self, variant: str, T: int) -> MonteCarloRow:
        variant = canonical_variant(variant)
        for r in self.rows:
            if r.variant == variant and r.T == T:
                return r
        raise KeyError((variant, T))

    def to_dict(self) -> dict:
        return {"seed": self.seed, "config": self.config, "rows": [asdict(r) for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        names = ["variant", "T", "reps", *_METRIC_COLUMNS]
        wr.writerow(names)
        for r in self.rows:
            d = asdict(r)
            wr.writerow([d[n] if n in ("variant", "T", "reps") else f"{d[n]:.6f}" for n in names])
        return buf.getvalue()


def _variant_code(variant: str) -> int:
    return VARIANTS.index(variant)


def _one_rep(args):
    config, ss = args
    return replication_metrics(gen_dgp(config, make_rng(ss)))


def _map(fn, items, n_jobs: int):
    if n_jobs is None or n_jobs == 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * n_jobs))))


def run_monte_carlo(
    reps: int,
    T_list,
    variant: str = "homoskedastic",
    seed: int = 0,
    P: int = 200,
    K: int = 3,
    beta1_null: bool = False,
    factor_correlation: float = 0.0,
    n_jobs: int = 1,
) -> SimulationReport:
    """Bias and coverage of the first coefficient surface over replications.

    Every (T, replication) pair draws from its own substream of ``seed``, so
    results do not depend on ``n_jobs``.
    """
    if reps < 1:
        raise InvalidArgumentError(f"reps must be >= 1, got {reps}")
    variant = canonical_variant(variant)
    start = time.perf_counter()
    rows = []
    for T in T_list:
        cfg = DGPConfig(
            T=int(T), K=K, variant=variant, seed=seed, P=P,
            beta1_null=beta1_null, factor_correlation=factor_correlation,
        )
        streams = np.random.SeedSequence([seed, int(T), _variant_code(variant)]).spawn(reps)
        results = _map(_one_rep, [(cfg, ss) for ss in streams], n_jobs)
        agg = {k: np.array([r[k] for r in results]) for k in results[0]}
        rows.append(
            MonteCarloRow(
                variant=variant,
                T=int(T),
                reps=reps,
                bias_true_param=float(abs(agg["err_true_param"].mean())),
                bias_ffr=float(abs(agg["err_ffr"].mean())),
                coverage_true_param=float(agg["coverage_true_param"].mean()),
                coverage_uncorrected=float(agg["coverage_uncorrected"].mean()),
                coverage_ffr=float(agg["coverage_ffr"].mean()),
                rejection_rate=float(agg["rejection_rate"].mean()),
            )
        )
        logger.info("variant=%s T=%d done", variant, T)
    config = {
        "reps": reps, "T_list": [int(t) for t in T_list], "variant": variant, "P": P, "K": K,
        "beta1_null": beta1_null, "factor_correlation": factor_correlation,
    }
    return SimulationReport(rows, seed, config, time.perf_counter() - start)


@dataclass
class FactorCountTable:
    """Share of replications in which the estimated factor count is correct."""

    shares: dict
    counts: dict
    reps: int
    gamma: float

    def share(self, K: int, T: int) -> float:
        return self.shares[(K, T)]

    def to_dict(self) -> dict:
        return {
            "reps": self.reps,
            "gamma": self.gamma,
            "cells": [
                {"K": K, "T": T, "share": s, "K_hat_counts": {str(k): v for k, v in sorted(self.counts[(K, T)].items())}}
                for (K, T), s in sorted(self.shares.items())
            ],
        }


def _one_count(args):
    config, ss, gamma, K_max, eigen_units = args
    data = gen_dgp(config, make_rng(ss))
    return estimate_num_factors(data.X1, data.Y, gamma, K_max, eigen_units).K_hat


def run_factor_count_study(
    reps: int,
    T_list,
    K_list,
    gamma: float = 1.0,
    seed: int = 0,
    P: int = 200,
    K_max: int = DEFAULT_K_MAX,
    eigen_units: str = "grid",
    n_jobs: int = 1,
) -> FactorCountTable:
    """Estimate the factor count of the first regressor across replications."""
    if not gamma > 0:
        raise InvalidArgumentError(f"gamma must be positive, got {gamma}")
    shares, counts = {}, {}
    for K in K_list:
        for T in T_list:
            cfg = DGPConfig(T=int(T), K=int(K), seed=seed, P=P)
            streams = np.random.SeedSequence([seed, int(T), int(K), 7]).spawn(reps)
            khat = _map(_one_count, [(cfg, ss, gamma, K_max, eigen_units) for ss in streams], n_jobs)
            vals, cnt = np.unique(khat, return_counts=True)
            counts[(int(K), int(T))] = {int(v): int(c) for v, c in zip(vals, cnt)}
            shares[(int(K), int(T))] = float(np.mean(np.asarray(khat) == K))
    return FactorCountTable(shares, counts, reps, float(gamma))
