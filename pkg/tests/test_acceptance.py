"""End-to-end acceptance criteria; each test logs exactly one PASS/FAIL line."""

import os
import time

import numpy as np
import pytest

from ffreg.errors import LeakageError
from ffreg.forecasting import check_no_leakage, elec_terms, rolling_forecast, simulate_market
from ffreg.grid import CurvePanel, Kernel, grid_from_points, make_uniform_grid
from ffreg.inference import covariance_surface, infer
from ffreg.primitives import eigen_integral_operator, fit_factor_model
from ffreg.regression import FunctionalTerm, assemble_design, fit_ffr
from ffreg.simulation import DGPConfig, fourier_matrix, gen_dgp, run_factor_count_study, run_monte_carlo
from instances import small_fit
from oracles import omega_literal

pytestmark = pytest.mark.slow

N_JOBS = os.cpu_count() or 1
SEED = 2024


def _record(log, n, title, ok, detail):
    line = f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {title} | {detail}"
    log.append(line)
    print(line)
    return ok


def _quadrature_orthonormal(grid, n):
    V = fourier_matrix(n, grid)
    L = np.linalg.cholesky((V * grid.weights) @ V.T)
    return np.linalg.solve(L, V)


def test_1_coverage_table(acceptance_log):
    start = time.perf_counter()
    homo = run_monte_carlo(500, [100, 500, 1000], "homoskedastic", SEED, P=200, n_jobs=N_JOBS)
    hetero = run_monte_carlo(500, [500], "heteroskedastic", SEED, P=200, n_jobs=N_JOBS)
    elapsed = time.perf_counter() - start
    target_cov = {100: 0.894, 500: 0.936, 1000: 0.943}
    target_unc = {100: 0.419, 500: 0.346, 1000: 0.327}
    max_bias = {100: 0.008, 500: 0.003, 1000: 0.002}
    checks, parts = [], []
    for T in (100, 500, 1000):
        r = homo.row("homoskedastic", T)
        checks += [
            abs(r.coverage_ffr - target_cov[T]) <= 0.02,
            abs(r.coverage_uncorrected - target_unc[T]) <= 0.05,
            r.bias_ffr <= max_bias[T],
        ]
        parts.append(f"T={T}: ffr={r.coverage_ffr:.3f} unc={r.coverage_uncorrected:.3f} bias={r.bias_ffr:.4f}")
    h = hetero.row("heteroskedastic", 500)
    checks.append(abs(h.coverage_ffr - 0.937) <= 0.02)
    checks.append(elapsed <= 30 * 60)
    parts.append(f"DGP2 T=500 ffr={h.coverage_ffr:.3f}")
    parts.append(f"{elapsed:.0f}s on {N_JOBS} worker(s)")
    ok = _record(acceptance_log, 1, "coverage table, 500 reps", all(checks), "; ".join(parts))
    assert ok, parts


def test_2_factor_count_shares(acceptance_log):
    tab = run_factor_count_study(200, [30, 200, 500, 1000], [3, 7], gamma=1.0, seed=SEED, P=200, n_jobs=N_JOBS)
    large = [tab.share(3, T) for T in (200, 500, 1000)]
    ok = all(s >= 0.99 for s in large) and tab.share(7, 30) < tab.share(3, 30)
    detail = (
        f"K=3 shares at T=200/500/1000: {large[0]:.3f}/{large[1]:.3f}/{large[2]:.3f}; "
        f"T=30: K=3 {tab.share(3, 30):.3f} vs K=7 {tab.share(7, 30):.3f}"
    )
    _record(acceptance_log, 2, "factor-count shares, gamma=1, 200 reps", ok, detail)
    assert ok, detail


def test_3_covariance_oracle(acceptance_log):
    worst = 0.0
    for seed in range(20):
        fit = small_fit(1000 + seed)
        assert fit.T <= 10 and max(fit.spec.n_factors) <= 2
        for j in range(fit.spec.J):
            got = covariance_surface(fit, None, j).values
            worst = max(worst, float(np.abs(got - omega_literal(fit, j)).max()))
    ok = worst <= 1e-10
    _record(acceptance_log, 3, "covariance surface vs loop oracle, 20 instances", ok, f"max sup-norm gap {worst:.2e}")
    assert ok


def test_4_eigen_oracle(acceptance_log):
    g = make_uniform_grid(0, 1, 200)
    V = _quadrature_orthonormal(g, 3)
    lam, E = eigen_integral_operator(Kernel(g, g, V.T @ np.diag([3.0, 2.0, 1.0]) @ V), 3)
    val_err = float(np.abs(lam - [3, 2, 1]).max())
    fn_err = max(min(np.abs(E[l] - V[l]).max(), np.abs(E[l] + V[l]).max()) for l in range(3))
    resid = 0.0
    rng = np.random.default_rng(SEED)
    for _ in range(20):
        P = int(rng.integers(5, 80))
        grid = grid_from_points(np.cumsum(rng.uniform(0.05, 1, P)))
        A = rng.standard_normal((P, int(rng.integers(1, P + 1))))
        D = A @ A.T
        n = min(P, 5)
        lam_r, E_r = eigen_integral_operator(Kernel(grid, grid, D), n)
        for l in range(n):
            r = (D * grid.weights) @ E_r[l] - lam_r[l] * E_r[l]
            resid = max(resid, float(np.abs(r).max() / max(1.0, lam_r[0])))
    ok = val_err <= 1e-8 and fn_err <= 1e-6 and resid <= 1e-8
    detail = f"eigenvalue err {val_err:.1e}, eigenfunction err {fn_err:.1e}, max relative residual {resid:.1e}"
    _record(acceptance_log, 4, "eigen oracle", ok, detail)
    assert ok


def test_5_sign_invariance(acceptance_log):
    d = gen_dgp(DGPConfig(T=200, seed=SEED, P=60))
    base_fms = [fit_factor_model(d.X1, d.Y, 3, "X1"), fit_factor_model(d.X2, d.Y, 3, "X2")]

    def outputs(fms):
        fit = fit_ffr(d.Y, assemble_design(None, fms), fms, regressors=(d.X1, d.X2))
        return [(r.beta.values, r.omega.values, r.p_values.values) for r in (infer(fit, 0), infer(fit, 1))]

    base = outputs(base_fms)
    worst = 0.0
    for k in range(2):
        for l in range(3):
            fms = list(base_fms)
            fms[k] = fms[k].with_flipped(l)
            for a, b in zip(outputs(fms), base):
                worst = max(worst, *(float(np.abs(x - y).max()) for x, y in zip(a, b)))
    ok = worst <= 1e-12
    _record(acceptance_log, 5, "sign invariance of beta, omega, p-values", ok, f"max change {worst:.1e} over 6 flips")
    assert ok


def test_6_exact_recovery(acceptance_log):
    g = make_uniform_grid(0, 1, 101)
    worst_B = worst_U = worst_ratio = 0.0
    for K in (1, 2, 3, 4):
        rng = np.random.default_rng(SEED + K)
        T = 60
        V = _quadrature_orthonormal(g, 2 * K + 1)
        Phi = V[K : 2 * K]  # response directions
        # centered scores with orthogonal columns of distinct variance
        Q, _ = np.linalg.qr(np.column_stack([np.ones(T), rng.standard_normal((T, K))]))
        F = Q[:, 1:] * np.sqrt(T) * np.linspace(2.0, 1.0, K)
        b = np.linspace(1.5, 0.5, K)
        mu = 3.0 + np.cos(np.pi * g.points)
        alpha = V[-1]
        X = CurvePanel(g, mu + F @ V[:K])
        Y = CurvePanel(g, alpha + (F * b) @ Phi)
        fm = fit_factor_model(X, Y, K, n_spectrum=K + 1)
        fit = fit_ffr(Y, assemble_design(None, [fm]), [fm], regressors=(X,))
        signs = np.sign(np.sum(fm.loadings * V[:K] * g.weights, axis=1))
        B_true = np.vstack([alpha, (signs * b)[:, None] * Phi])
        worst_B = max(worst_B, float(np.abs(fit.B_hat - B_true).max()))
        worst_U = max(worst_U, float(np.abs(fit.residuals.values).max()))
        worst_ratio = max(worst_ratio, float(fm.spectrum[K] / fm.spectrum[0]))
    ok = worst_B <= 1e-9 and worst_U < 1e-8 and worst_ratio < 1e-10
    detail = f"max |B_hat - B| {worst_B:.1e}, residual sup {worst_U:.1e}, eigenvalue ratio {worst_ratio:.1e}"
    _record(acceptance_log, 6, "exact recovery, K=1..4", ok, detail)
    assert ok


def test_7_forecast_harness(acceptance_log):
    ds = simulate_market(300, seed=SEED)
    train = 200
    for t in range(train, ds.T):
        check_no_leakage(elec_terms(), t)
    leak_caught = False
    try:
        rolling_forecast(ds, "ffr", train, gamma=1.0, terms=elec_terms() + [FunctionalTerm("price", 0)])
    except LeakageError:
        leak_caught = True
    reports = {m: rolling_forecast(ds, m, train, gamma=1.0) for m in ("naive", "expert", "ffr")}
    naive, expert, ffr = reports["naive"], reports["expert"], reports["ffr"]
    rmse_ok = True
    for rep in reports.values():
        err = rep.predictions - rep.actual
        daily_rmse = np.sqrt(np.mean(err**2, axis=1))
        rmse_ok &= rep.rmse >= rep.mae and bool(np.all(daily_rmse >= rep.daily_mae - 1e-12))
    ok = (
        naive.rmae == 1.0 and ffr.rmae < 1 and expert.mae < naive.mae and leak_caught and rmse_ok
        and not ffr.failures
    )
    detail = (
        f"MAE naive {naive.mae:.3f} expert {expert.mae:.3f} ffr {ffr.mae:.3f}; "
        f"rMAE naive {naive.rmae} ffr {ffr.rmae:.3f}; leakage guard {'on' if leak_caught else 'off'}"
    )
    _record(acceptance_log, 7, "forecast harness on synthetic market", ok, detail)
    assert ok, detail


def test_8_size_under_null(acceptance_log):
    rep = run_monte_carlo(
        200, [1000], "homoskedastic", SEED, P=200, beta1_null=True, factor_correlation=0.5, n_jobs=N_JOBS
    )
    rate = rep.row("homoskedastic", 1000).rejection_rate
    ok = 0.03 <= rate <= 0.07
    _record(acceptance_log, 8, "size at 5% under a zero first surface, T=1000", ok, f"rejection rate {rate:.4f}")
    assert ok
