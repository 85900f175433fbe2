"""Deliberately naive reference implementations used as test oracles.

Everything here is written with explicit loops straight from the defining
sums, sharing no code with the package beyond the fitted inputs.
"""

import math

import numpy as np


def quad_apply(K, f, w):
    P_r, P_s = K.shape
    out = np.zeros(P_r)
    for r in range(P_r):
        acc = 0.0
        for s in range(P_s):
            acc += w[s] * K[r, s] * f[s]
        out[r] = acc
    return out


def column_means(X):
    T, P = X.shape
    out = np.zeros(P)
    for p in range(P):
        acc = 0.0
        for t in range(T):
            acc += X[t, p]
        out[p] = acc / T
    return out


def cross_cov(X, Y):
    T = X.shape[0]
    mx, my = column_means(X), column_means(Y)
    out = np.zeros((X.shape[1], Y.shape[1]))
    for r in range(X.shape[1]):
        for s in range(Y.shape[1]):
            acc = 0.0
            for t in range(T):
                acc += (X[t, r] - mx[r]) * (Y[t, s] - my[s])
            out[r, s] = acc / T
    return out


def d_from_c(C, w_q):
    P = C.shape[0]
    out = np.zeros((P, P))
    for r in range(P):
        for s in range(P):
            acc = 0.0
            for q in range(C.shape[1]):
                acc += w_q[q] * C[r, q] * C[s, q]
            out[r, s] = acc
    return out


def bspline_recursive(i, k, t, x):
    """Value of the i-th B-spline of degree k at x (right end closed)."""
    if k == 0:
        if t[i] <= x < t[i + 1]:
            return 1.0
        # close the last non-empty interval at the right end
        if x == t[-1] and t[i] < t[i + 1] == t[-1]:
            return 1.0
        return 0.0
    left = 0.0
    if t[i + k] > t[i]:
        left = (x - t[i]) / (t[i + k] - t[i]) * bspline_recursive(i, k - 1, t, x)
    right = 0.0
    if t[i + k + 1] > t[i + 1]:
        right = (t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1]) * bspline_recursive(i + 1, k - 1, t, x)
    return left + right


def bernstein(i, I, r):
    return math.comb(I + 1, i) * r**i * (1 - r) ** (I + 1 - i)


def correction_terms_literal(fit, j):
    """Every correction quantity of regressor j, from its defining sums."""
    T = fit.T
    Yv = fit.Y.values
    w_y = fit.Y.grid.weights
    P_y = Yv.shape[1]
    ybar = column_means(Yv)
    Z = fit.design
    M = Z.shape[1]

    def terms_for(k):
        fm = fit.factor_models[k]
        F, lam = fm.scores, fm.eigenvalues
        K = F.shape[1]
        gam = np.zeros((K, P_y))
        for l in range(K):
            for r in range(P_y):
                acc = 0.0
                for t in range(T):
                    acc += F[t, l] * (Yv[t, r] - ybar[r])
                gam[l, r] = acc / T
        y = np.zeros((T, K))
        for t in range(T):
            for l in range(K):
                acc = 0.0
                for r in range(P_y):
                    acc += w_y[r] * (Yv[t, r] - ybar[r]) * gam[l, r]
                y[t, l] = acc
        fy = np.zeros((K, K))  # fy[m, l] = mean of f_m * y_l
        for m in range(K):
            for l in range(K):
                fy[m, l] = sum(F[t, m] * y[t, l] for t in range(T)) / T
        G = np.zeros((T, K, K))
        for t in range(T):
            for l in range(K):
                for m in range(K):
                    if l != m:
                        G[t, l, m] = (
                            F[t, m] * y[t, l] - fy[m, l] + F[t, l] * y[t, m] - fy[l, m]
                        ) / (lam[l] - lam[m])
        h = np.zeros((T, K))
        for t in range(T):
            for l in range(K):
                h[t, l] = y[t, l] / lam[l]
        return gam, y, fy, G, h

    per_k = [terms_for(k) for k in range(len(fit.factor_models))]
    fm = fit.factor_models[j]
    X = fit.regressors[j].values
    mu = column_means(X)
    Psi = fm.loadings
    eps = np.zeros_like(X)
    for t in range(T):
        for s in range(X.shape[1]):
            eps[t, s] = X[t, s] - mu[s] - sum(fm.scores[t, l] * Psi[l, s] for l in range(fm.K))
    zbar = np.array([sum(Z[t, m] for t in range(T)) / T for m in range(M)])
    zF = []
    for fk in fit.factor_models:
        arr = np.zeros((M, fk.K))
        for m in range(M):
            for l in range(fk.K):
                arr[m, l] = sum(Z[t, m] * fk.scores[t, l] for t in range(T)) / T
        zF.append(arr)
    gam, y, fy, G, h = per_k[j]
    return {
        "gamma_curves": gam, "y_scores": y, "fy_bar": fy, "G": G, "h": h, "eps": eps,
        "z_bar": zbar, "zF_bar": zF, "G_all": [p[3] for p in per_k],
    }


def omega_literal(fit, j, corrected=True):
    """Covariance surface by explicit loops over (r, s, t) and every inner index."""
    T = fit.T
    ct = correction_terms_literal(fit, j)
    Z = fit.design
    U = fit.residuals.values
    B = fit.B_hat
    M = Z.shape[1]
    fms = fit.factor_models
    starts = []
    pos = fit.spec.N
    for fm in fms:
        starts.append(pos)
        pos += fm.K
    sj, Kj = starts[j], fms[j].K
    Qi = fit.Q_hat_inv[sj : sj + Kj]
    Psi = fms[j].loadings
    P_r, P_s = U.shape[1], Psi.shape[1]
    out = np.zeros((P_r, P_s))
    for r in range(P_r):
        for s in range(P_s):
            acc = 0.0
            for t in range(T):
                lead = 0.0
                for l in range(Kj):
                    v = 0.0
                    for m in range(M):
                        v += Qi[l, m] * Z[t, m] * U[t, r]
                    lead += v * Psi[l, s]
                omega = 0.0
                if corrected:
                    # Psi_j(s)' Qi_j sum_k (zbar F_kt' - zF_k G_kt) B_k(r)
                    for l in range(Kj):
                        inner_l = 0.0
                        for m in range(M):
                            vec_m = 0.0
                            for k, fk in enumerate(fms):
                                Bk = B[starts[k] : starts[k] + fk.K]
                                for a in range(fk.K):
                                    vec_m += ct["z_bar"][m] * fk.scores[t, a] * Bk[a, r]
                                    for b in range(fk.K):
                                        vec_m -= ct["zF_bar"][k][m, b] * ct["G_all"][k][t, b, a] * Bk[a, r]
                            inner_l += Qi[l, m] * vec_m
                        omega += Psi[l, s] * inner_l
                    Bj = B[sj : sj + Kj]
                    for l in range(Kj):
                        for m in range(Kj):
                            omega += Psi[l, s] * ct["G"][t, l, m] * Bj[m, r]
                    for l in range(Kj):
                        omega += ct["eps"][t, s] * ct["h"][t, l] * Bj[l, r]
                acc += (lead + omega) ** 2
            out[r, s] = acc / T
    return out
