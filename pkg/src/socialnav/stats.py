"""Mann-Whitney U test with rank-biserial and common-language effect sizes.

The p-value is exact (full enumeration of group assignments, ties kept)
for pooled sizes up to EXACT_LIMIT, otherwise a normal approximation with
tie and continuity corrections.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np
from scipy.stats import norm

EXACT_LIMIT = 20


@dataclass
class UTestResult:
    U: float
    p_value: float
    RBC: float
    CLES: float
    U_a: float
    method: str


def _u_from_counts(a: np.ndarray, b: np.ndarray) -> float:
    """U statistic for sample a: wins plus half the ties."""
    gt = (a[:, None] > b[None, :]).sum()
    eq = (a[:, None] == b[None, :]).sum()
    return float(gt) + 0.5 * float(eq)


def _midranks(pooled: np.ndarray) -> np.ndarray:
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(len(pooled))
    i = 0
    sorted_vals = pooled[order]
    while i < len(pooled):
        j = i
        while j < len(pooled) and sorted_vals[j] == sorted_vals[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j - 1) + 1.0
        i = j
    return ranks


def _exact_p(pooled: np.ndarray, n_a: int, u_obs: float) -> float:
    """P(min(U_a, U_b) <= u_obs) over all assignments of the pooled values."""
    n = len(pooled)
    n_b = n - n_a
    ranks = _midranks(pooled)
    base = n_a * (n_a + 1) / 2.0
    total = comb(n, n_a)
    count = 0
    for idx in combinations(range(n), n_a):
        u_a = sum(ranks[i] for i in idx) - base
        u_min = min(u_a, n_a * n_b - u_a)
        if u_min <= u_obs + 1e-12:
            count += 1
    return count / total


def _normal_p(pooled: np.ndarray, n_a: int, u: float) -> float:
    n = len(pooled)
    n_b = n - n_a
    mean_u = n_a * n_b / 2.0
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(((tie_counts**3 - tie_counts)).sum()) / (n * (n - 1)) if n > 1 else 0.0
    var_u = n_a * n_b / 12.0 * ((n + 1) - tie_term)
    if var_u <= 0:
        return 1.0
    z = (u - mean_u + 0.5) / np.sqrt(var_u)
    return float(min(1.0, 2.0 * norm.cdf(z)))


def mann_whitney_u(sample_a, sample_b) -> UTestResult:
    """Two-sided Mann-Whitney U test; U is the smaller of the two statistics.

    RBC = 1 - 2U/(n_a n_b); CLES = P(a > b) + 0.5 P(a = b).
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    n_a, n_b = len(a), len(b)
    u_a = _u_from_counts(a, b)
    u_b = n_a * n_b - u_a
    u = min(u_a, u_b)
    pooled = np.concatenate([a, b])
    if n_a + n_b <= EXACT_LIMIT:
        p = _exact_p(pooled, n_a, u)
        method = "exact"
    else:
        p = _normal_p(pooled, n_a, u)
        method = "normal"
    p = max(p, np.finfo(float).tiny)
    return UTestResult(
        U=u,
        p_value=p,
        RBC=1.0 - 2.0 * u / (n_a * n_b),
        CLES=u_a / (n_a * n_b),
        U_a=u_a,
        method=method,
    )
