"""Marginal law of a single Howard increment."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class IncrementPmf:
    p: float
    kmax: int
    prob: np.ndarray  # prob[k + kmax] = P(I = k)
    residual: float   # mass beyond |k| > kmax

    def __getitem__(self, k: int) -> float:
        if abs(k) > self.kmax:
            return 0.0
        return float(self.prob[k + self.kmax])

    @property
    def support(self) -> np.ndarray:
        return np.arange(-self.kmax, self.kmax + 1)

    def second_moment(self) -> float:
        k = self.support.astype(np.float64)
        return math.fsum(k * k * self.prob)


def _check_p(p: float) -> None:
    if not 0.0 < p < 1.0:
        raise ValueError(f"open probability must lie in (0, 1), got {p}")


def howard_increment_pmf(p: float, kmax: int | None = None, tol: float = 1e-15) -> IncrementPmf:
    """P(I = 0) = p and P(I = +-k) = (1-p)^(2k-1) p (2-p) / 2.

    |I| = k >= 1 needs the 2k - 1 sites within distance k - 1 closed and at
    least one of the two sites at distance k open; the tie-breaker splits the
    mass evenly between the signs.  With ``kmax=None`` the truncation grows
    until the neglected second moment falls below ``tol``.
    """
    _check_p(p)
    q = (1.0 - p) ** 2
    if kmax is None:
        kmax = 1
        while True:
            # bound on sum_{k > K} k^2 (1-p)^(2k-1) p (2-p)
            tail = ((kmax + 1) ** 2 * (1 - p) ** (2 * kmax + 1) * p * (2 - p)
                    * (1 + q) / (1 - q) ** 3)
            if tail < tol:
                break
            kmax += 1
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    k = np.arange(1, kmax + 1)
    side = (1.0 - p) ** (2 * k - 1) * p * (2.0 - p) / 2.0
    prob = np.concatenate([side[::-1], [p], side])
    residual = (1.0 - p) ** (2 * kmax + 1)
    return IncrementPmf(p=float(p), kmax=int(kmax), prob=prob, residual=float(residual))


def sigma0(p: float) -> float:
    """Diffusion constant of Howard paths: sqrt((1-p)(2-2p+p^2) / (p^2 (2-p)^2))."""
    _check_p(p)
    return math.sqrt((1 - p) * (2 - 2 * p + p * p) / (p * p * (2 - p) ** 2))


def increment_second_moment(p: float) -> float:
    """E[I^2] = sigma0(p)^2."""
    return sigma0(p) ** 2
