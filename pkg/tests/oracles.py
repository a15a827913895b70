"""Independent brute-force oracles used by the tests.

Everything here is written against the definitions, not against the
implementation: exhaustive pairwise counting, full distance matrices,
high-precision special functions via mpmath, and the precision-matrix
formula for partial correlation. Keep these slow and obvious.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np


def auc_pairwise(scores, labels) -> float:
    """Exhaustive (positive, negative) pair counting with ties worth 1/2."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def knn_mean_brute(p, Q, k, exclude_index=None) -> float:
    dists = []
    for i, q in enumerate(Q):
        if exclude_index is not None and i == exclude_index:
            continue
        dists.append(math.sqrt(sum((float(a) - float(b)) ** 2 for a, b in zip(p, q))))
    dists.sort()
    return sum(dists[:k]) / k


def percentile_linear(values, pct) -> float:
    """Linear-interpolation (inclusive) percentile of a list."""
    xs = sorted(float(v) for v in values)
    if len(xs) == 1:
        return xs[0]
    pos = pct / 100.0 * (len(xs) - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, len(xs) - 1)
    frac = pos - lo
    return xs[lo] * (1 - frac) + xs[hi] * frac


def coverage_brute(A, B, k, pct):
    """Recall/precision/deltas from explicit loops over all pairs.

    Matches the package convention: within-set k-NN excludes the query;
    cross-set never does, except index-paired exclusion when the two
    matrices are value-identical.
    """
    A = [list(map(float, row)) for row in np.asarray(A)]
    B = [list(map(float, row)) for row in np.asarray(B)]
    identical = len(A) == len(B) and all(a == b for a, b in zip(A, B))

    within_b = [knn_mean_brute(B[i], B, k, exclude_index=i) for i in range(len(B))]
    within_a = [knn_mean_brute(A[i], A, k, exclude_index=i) for i in range(len(A))]
    delta_b = percentile_linear(within_b, pct)
    delta_a = percentile_linear(within_a, pct)

    if identical:
        cross_ab, cross_ba = within_b, within_a
    else:
        cross_ab = [knn_mean_brute(a, B, k) for a in A]
        cross_ba = [knn_mean_brute(b, A, k) for b in B]

    recall = sum(1 for d in cross_ab if d <= delta_b) / len(A)
    precision = sum(1 for d in cross_ba if d <= delta_a) / len(B)
    return recall, precision, delta_b, delta_a


def joint_minmax_brute(A, B):
    A = np.asarray(A, dtype=float).copy()
    B = np.asarray(B, dtype=float).copy()
    for j in range(A.shape[1]):
        lo = min(A[:, j].min(), B[:, j].min())
        hi = max(A[:, j].max(), B[:, j].max())
        if hi > lo:
            A[:, j] = (A[:, j] - lo) / (hi - lo)
            B[:, j] = (B[:, j] - lo) / (hi - lo)
        else:
            A[:, j] = 0.0
            B[:, j] = 0.0
    return A, B


def t_sf_mp(t, df) -> float:
    """One-sided upper tail of Student's t via the regularized incomplete
    beta function, evaluated at 50 digits."""
    with mpmath.workdps(50):
        t = mpmath.mpf(float(t))
        df = mpmath.mpf(int(df))
        x = df / (df + t * t)
        half = mpmath.betainc(df / 2, mpmath.mpf(1) / 2, 0, x, regularized=True) / 2
        if t >= 0:
            return float(half)
        return float(1 - half)


def t_two_sided_p_mp(r, n, k=0) -> float:
    df = n - 2 - k
    if abs(r) >= 1.0:
        return 0.0
    t = abs(r) * math.sqrt(df / (1.0 - r * r))
    return 2.0 * t_sf_mp(t, df)


def pearson_brute(x, y) -> float:
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    den = math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))
    return num / den


def partial_corr_precision(x, y, Z) -> float:
    """Partial correlation via the inverse of the correlation matrix of
    [x, y, Z...]: -P_xy / sqrt(P_xx P_yy)."""
    M = np.column_stack([x, y] + [Z[:, j] for j in range(Z.shape[1])])
    C = np.corrcoef(M, rowvar=False)
    P = np.linalg.inv(C)
    return float(-P[0, 1] / math.sqrt(P[0, 0] * P[1, 1]))


def moments_brute(values):
    """Two-pass population skewness and excess kurtosis."""
    xs = [float(v) for v in values]
    n = len(xs)
    mu = sum(xs) / n
    m2 = sum((v - mu) ** 2 for v in xs) / n
    if m2 == 0:
        return 0.0, 0.0
    m3 = sum((v - mu) ** 3 for v in xs) / n
    m4 = sum((v - mu) ** 4 for v in xs) / n
    return m3 / m2**1.5, m4 / m2**2 - 3.0


def ecdf(values, x) -> float:
    return sum(1 for v in values if v <= x) / len(values)


def grid_count_formula(g: int) -> int:
    """Closed-form configuration count of the prior search grid.

    shared = G^3 * 4 (three gridded shared params, two binaries); the type
    branch contributes 1 (mlp) + T (tree) + T*G (mix) with T = 4 * G^2.
    """
    shared = g**3 * 4
    t = 4 * g**2
    return shared * (1 + t + t * g)
