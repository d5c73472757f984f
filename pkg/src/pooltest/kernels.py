"""Probability kernels shared by the analytic evaluators and the sweep.

Everything here is a pure function of scalars (or returns a small ndarray).
The binomial pmf is delegated to scipy, whose implementation keeps the
row-sum error near machine epsilon even for very large n; a naive
exp(lgamma) construction loses two digits by n = 10**4.
"""

from __future__ import annotations

import math
from typing import Protocol

import numpy as np
from scipy import stats

__all__ = [
    "binomial_pmf",
    "binomial_pmf_row",
    "pool_positive_prob",
    "pool_sensitivity_avg",
    "pool_test_outcome_probs",
    "SensitivityModel",
    "check_prevalence",
    "check_pool_size",
    "check_retest_count",
]


class SensitivityModel(Protocol):
    """Anything exposing Se(n, k); structural so test stubs qualify too."""

    def sensitivity(self, n: int, k: int) -> float: ...

# Bounds accepted for pool size and total retest count. The upper limits are
# generous relative to anything a sweep visits; they exist to catch corrupted
# config values before they turn into gigantic allocations.
MAX_POOL_SIZE = 10_000
MAX_RETESTS = 100


def check_prevalence(p: float) -> float:
    """Validate a prevalence value, returning it unchanged."""
    p = float(p)
    if not math.isfinite(p) or not 0.0 < p < 1.0:
        raise ValueError(f"prevalence must lie strictly between 0 and 1, got {p!r}")
    return p


def check_pool_size(n: int, *, minimum: int = 1) -> int:
    """Validate a pool size, returning it as an int."""
    if n != int(n):
        raise ValueError(f"pool size must be an integer, got {n!r}")
    n = int(n)
    if not minimum <= n <= MAX_POOL_SIZE:
        raise ValueError(f"pool size must lie in [{minimum}, {MAX_POOL_SIZE}], got {n}")
    return n


def check_retest_count(r: int, *, minimum: int = 1) -> int:
    """Validate a total pool-test count, returning it as an int."""
    if r != int(r):
        raise ValueError(f"retest count must be an integer, got {r!r}")
    r = int(r)
    if not minimum <= r <= MAX_RETESTS:
        raise ValueError(f"retest count must lie in [{minimum}, {MAX_RETESTS}], got {r}")
    return r


def binomial_pmf(k: int, n: int, p: float) -> float:
    """P(K = k) for K ~ Binomial(n, p).

    Exact at the support edges (p = 0 or 1). Raises ValueError for k outside
    0..n rather than returning 0, because every caller in this package
    enumerates the support explicitly and an out-of-range k is a bug.
    """
    if n != int(n) or n < 0:
        raise ValueError(f"n must be a nonnegative integer, got {n!r}")
    if k != int(k) or not 0 <= k <= n:
        raise ValueError(f"k must be an integer in [0, {n}], got {k!r}")
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p!r}")
    if p == 0.0:
        return 1.0 if k == 0 else 0.0
    if p == 1.0:
        return 1.0 if k == n else 0.0
    return float(stats.binom.pmf(k, n, p))


def binomial_pmf_row(n: int, p: float) -> np.ndarray:
    """The whole pmf row [P(K=0), ..., P(K=n)] for K ~ Binomial(n, p)."""
    if n != int(n) or n < 0:
        raise ValueError(f"n must be a nonnegative integer, got {n!r}")
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p!r}")
    k = np.arange(n + 1)
    if p == 0.0 or p == 1.0:
        row = np.zeros(n + 1)
        row[n if p == 1.0 else 0] = 1.0
        return row
    return stats.binom.pmf(k, n, p)


def pool_positive_prob(p: float, n: int) -> float:
    """Probability 1 - (1-p)^n that a pool of n subjects contains a positive.

    Computed as -expm1(n log1p(-p)) so tiny p at large n keeps full relative
    precision; n = 1 short-circuits to p itself so the identity P_pool = p is
    exact rather than round-tripped through logs. Unlike prevalence proper,
    p = 0 and p = 1 are legal here and give the obvious limits.
    """
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p!r}")
    n = check_pool_size(n)
    if n == 1:
        return p
    if p == 0.0 or p == 1.0:
        return p
    return -math.expm1(n * math.log1p(-p))


def pool_sensitivity_avg(model: SensitivityModel, n: int, p: float) -> float:
    """Average pool sensitivity over the positive-count distribution.

    Se_P = sum_{k=1..n} Se(n,k) Pr(k; n, p) / P(pool contains a positive),
    i.e. the detection probability of a pool known to contain at least one
    positive. k = 0 carries no sensitivity, only specificity, so the sum
    starts at 1 and the weights are renormalized by p_P.
    """
    n = check_pool_size(n)
    p = check_prevalence(p)
    p_pos = pool_positive_prob(p, n)
    if p_pos == 0.0:
        raise ValueError(f"pool-positive probability is zero at p={p}, n={n}")
    pmf = binomial_pmf_row(n, p)
    weighted = sum(model.sensitivity(n, k) * pmf[k] for k in range(1, n + 1))
    return float(weighted / p_pos)


def pool_test_outcome_probs(
    model: SensitivityModel, n: int, p: float, sp: float, r: int
) -> tuple[float, float]:
    """(P(pool declared positive), P(declared negative)) under up to r reads.

    A pool with k >= 1 positives is declared positive with probability
    1 - (1 - Se(n,k))^r, a clean pool with probability 1 - sp^r; both are
    averaged over the binomial count distribution. The pair sums to one by
    construction.
    """
    n = check_pool_size(n)
    p = check_prevalence(p)
    sp = float(sp)
    if not 0.0 < sp <= 1.0:
        raise ValueError(f"sp must lie in (0, 1], got {sp!r}")
    r = check_retest_count(r)
    pmf = binomial_pmf_row(n, p)
    positive = (1.0 - sp**r) * pmf[0]
    for k in range(1, n + 1):
        se_rep = 1.0 - (1.0 - model.sensitivity(n, k)) ** r
        positive += se_rep * pmf[k]
    positive = min(1.0, max(0.0, float(positive)))
    return positive, 1.0 - positive
