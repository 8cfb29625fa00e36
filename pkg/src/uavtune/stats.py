"""Mann-Whitney U rank-sum test.

Small samples (n + m <= 12) use the exact permutation distribution of U
over the pooled values, which handles ties without approximation. Larger
samples use the normal approximation with tie and continuity corrections.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

EXACT_LIMIT = 12
ALTERNATIVES = ("less", "greater", "two-sided")


@dataclass
class MannWhitneyResult:
    u: float
    p: float
    method: str
    alternative: str
    degenerate: bool = False
    median_a: float = math.nan
    median_b: float = math.nan

    def to_dict(self) -> dict:
        return asdict(self)


def u_statistic(a, b) -> float:
    """U of ``a``: pairs with a > b, counting ties as one half."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ranks = rankdata(np.concatenate([a, b]))
    n = len(a)
    return float(ranks[:n].sum() - n * (n + 1) / 2.0)


def _exact_pvalue(pooled: np.ndarray, n: int, u_obs: float, alternative: str) -> float:
    ranks = rankdata(pooled)
    total = len(pooled)
    offset = n * (n + 1) / 2.0
    us = np.array([ranks[list(idx)].sum() - offset
                   for idx in itertools.combinations(range(total), n)])
    tol = 1e-9
    lo = np.mean(us <= u_obs + tol)
    hi = np.mean(us >= u_obs - tol)
    if alternative == "less":
        return float(lo)
    if alternative == "greater":
        return float(hi)
    return float(min(1.0, 2.0 * min(lo, hi)))


def _normal_pvalue(pooled: np.ndarray, n: int, m: int, u_obs: float, alternative: str) -> float:
    total = n + m
    _, counts = np.unique(pooled, return_counts=True)
    tie = float(np.sum(counts ** 3 - counts))
    var = n * m / 12.0 * ((total + 1) - tie / (total * (total - 1)))
    mu = n * m / 2.0
    sd = math.sqrt(var)
    if alternative == "less":
        return float(ndtr((u_obs - mu + 0.5) / sd))
    if alternative == "greater":
        return float(ndtr(-(u_obs - mu - 0.5) / sd))
    z = (abs(u_obs - mu) - 0.5) / sd
    return float(min(1.0, 2.0 * ndtr(-z)))


def mann_whitney_u(sample_a, sample_b, alternative: str = "less") -> MannWhitneyResult:
    """Test whether ``sample_a`` tends to be smaller than ``sample_b`` (by default).

    Returns U for ``sample_a``; swapping the samples maps U to n*m - U.
    A pooled sample with a single distinct value yields p = 0.5 and
    ``degenerate=True``.
    """
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    a = np.asarray(sample_a, dtype=np.float64).ravel()
    b = np.asarray(sample_b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("samples must be finite")
    n, m = a.size, b.size
    pooled = np.concatenate([a, b])
    u = u_statistic(a, b)
    medians = dict(median_a=float(np.median(a)), median_b=float(np.median(b)))
    if np.all(pooled == pooled[0]):
        return MannWhitneyResult(u, 0.5, "degenerate", alternative, True, **medians)
    if n + m <= EXACT_LIMIT:
        p = _exact_pvalue(pooled, n, u, alternative)
        method = "exact"
    else:
        p = _normal_pvalue(pooled, n, m, u, alternative)
        method = "normal"
    return MannWhitneyResult(u, p, method, alternative, False, **medians)
