"""Deterministic Monte Carlo aggregation and bound verdicts."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

Z95 = 1.96

# int64 partial sums of squares stay exact below this magnitude per chunk
_SAFE_ABS = 1 << 24
_CHUNK = 4096


class Verdict(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class SummaryStats:
    n: int
    mean: float
    stderr: float
    ci95_low: float
    ci95_high: float
    censored: int = 0
    total: int | float = 0
    total_sq: int | float = 0
    median: float | None = None
    exact: bool = False

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean": self.mean,
            "stderr": self.stderr,
            "ci95": [self.ci95_low, self.ci95_high],
            "censored": self.censored,
            "median": self.median,
        }


def _exact_int_sums(x: np.ndarray) -> tuple[int, int]:
    total = 0
    total_sq = 0
    for start in range(0, x.size, _CHUNK):
        part = x[start:start + _CHUNK]
        if part.size and int(np.abs(part).max()) < _SAFE_ABS:
            total += int(part.sum(dtype=np.int64))
            total_sq += int((part * part).sum(dtype=np.int64))
        else:
            vals = [int(v) for v in part]
            total += sum(vals)
            total_sq += sum(v * v for v in vals)
    return total, total_sq


def _from_sums(n, total, total_sq, censored, median, exact) -> SummaryStats:
    if n == 0:
        raise ValueError("cannot summarize an empty sample")
    if exact:
        mean = total / n
        if n > 1:
            var = (n * total_sq - total * total) / (n * (n - 1))
        else:
            var = math.nan
    else:
        mean = total / n
        var = (total_sq - n * mean * mean) / (n - 1) if n > 1 else math.nan
        var = max(var, 0.0)
    stderr = math.sqrt(var / n) if n > 1 else math.nan
    half = Z95 * stderr
    return SummaryStats(n=n, mean=mean, stderr=stderr,
                        ci95_low=mean - half, ci95_high=mean + half,
                        censored=censored, total=total, total_sq=total_sq,
                        median=median, exact=exact)


def summarize(samples, censored_count: int = 0, median: bool = True) -> SummaryStats:
    """Mean, standard error and 95% CI of ``samples``.

    Integer samples are summed exactly.  Real samples use ``math.fsum``,
    which is correctly rounded and therefore independent of summation order.
    ``censored_count`` is carried through for reporting only; censored
    replicates the caller wants in the mean must be in ``samples``.
    """
    x = np.asarray(samples)
    if x.size == 0:
        raise ValueError("cannot summarize an empty sample")
    x = x.ravel()
    med = float(np.median(x)) if median else None
    if np.issubdtype(x.dtype, np.integer) or x.dtype == bool:
        total, total_sq = _exact_int_sums(x.astype(np.int64))
        return _from_sums(x.size, total, total_sq, censored_count, med, True)
    xf = x.astype(np.float64)
    total = math.fsum(xf)
    mean = total / xf.size
    # centred second moment is better conditioned than raw sums of squares
    centred_sq = math.fsum((xf - mean) ** 2)
    return _from_sums(xf.size, total, centred_sq + xf.size * mean * mean,
                      censored_count, med, False)


def merge(parts: list[SummaryStats]) -> SummaryStats:
    """Combine exact integer aggregates; the result is grouping-independent."""
    if not parts:
        raise ValueError("nothing to merge")
    if not all(p.exact for p in parts):
        raise ValueError("only exact integer aggregates can be merged losslessly")
    n = sum(p.n for p in parts)
    total = sum(p.total for p in parts)
    total_sq = sum(p.total_sq for p in parts)
    censored = sum(p.censored for p in parts)
    return _from_sums(n, total, total_sq, censored, None, True)


def binomial_stats(successes: int, n: int) -> SummaryStats:
    """Proportion with the binomial standard error sqrt(p(1-p)/n)."""
    if n <= 0:
        raise ValueError("cannot summarize an empty sample")
    p = successes / n
    se = math.sqrt(p * (1 - p) / n)
    return SummaryStats(n=n, mean=p, stderr=se, ci95_low=p - Z95 * se,
                        ci95_high=p + Z95 * se, total=successes,
                        total_sq=successes, exact=True)


def one_sided_check(stats: SummaryStats, bound: float, direction: str = "<=") -> Verdict:
    """Pass when the whole 95% CI lies on the claimed side of ``bound``."""
    lo, hi = stats.ci95_low, stats.ci95_high
    if math.isnan(lo) or math.isnan(hi):
        return Verdict.INCONCLUSIVE
    if direction == "<=":
        if hi <= bound:
            return Verdict.PASS
        if lo > bound:
            return Verdict.FAIL
    elif direction == ">=":
        if lo >= bound:
            return Verdict.PASS
        if hi < bound:
            return Verdict.FAIL
    else:
        raise ValueError(f"direction must be '<=' or '>=', got {direction!r}")
    return Verdict.INCONCLUSIVE


def within_stderr(stats: SummaryStats, target: float, k: float = 3.0) -> Verdict:
    """Two-sided agreement check: |mean - target| <= k * stderr."""
    if math.isnan(stats.stderr):
        return Verdict.PASS if stats.mean == target else Verdict.INCONCLUSIVE
    return Verdict.PASS if abs(stats.mean - target) <= k * stats.stderr else Verdict.FAIL


def combine_verdicts(verdicts) -> Verdict:
    verdicts = list(verdicts)
    if any(v == Verdict.FAIL for v in verdicts):
        return Verdict.FAIL
    if any(v == Verdict.INCONCLUSIVE for v in verdicts):
        return Verdict.INCONCLUSIVE
    return Verdict.PASS
