"""Foster-Lyapunov checks for gap chains and the Poisson-tree generator.

A chain satisfies the drift conditions with data (V, M0, M1, b, p0) when,
off M0,

    E[V(Y1) - V(Y0) | Y0 = x] <= -1 + b * 1{x in M1}
    P(Y1 in M0 | Y0 = x) >= p0            for x in M1

and then E[tau(M0) | Y0 = x] <= V(x) + b / p0.  The engine below estimates
each ingredient by simulation from a batch sampling kernel.

Chain states are position triples stored as rows of an (R, 3) array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Callable

import numpy as np

from .harness import parallel
from .harness import rng as _rng
from .harness.stats import (SummaryStats, Verdict, binomial_stats, one_sided_check,
                            summarize)
from .models import lattice, poisson
from .models.howard import increment_second_moment
from .models.ssrw import gap_increments


def gap_product(states: np.ndarray) -> np.ndarray:
    s = np.asarray(states)
    return (s[..., 1] - s[..., 0]) * (s[..., 2] - s[..., 1])


def _coalesced(states: np.ndarray) -> np.ndarray:
    return gap_product(states) == 0


def _never(states: np.ndarray) -> np.ndarray:
    return np.zeros(np.asarray(states).shape[:-1], dtype=bool)


@dataclass(frozen=True)
class ChainSpec:
    """Batch kernel plus Lyapunov data.

    ``step(states, keys, t)`` advances row ``r`` of ``states`` using stream
    key ``keys[r]`` at time ``t``; it must be a pure function of its
    arguments so the same chain can be shared across workers.
    """

    name: str
    step: Callable
    in_M0: Callable
    in_M1: Callable
    V: Callable
    b: float
    p0: float
    d1: float = 1.0
    d2: float = 0.0
    r0: int = 0
    params: dict = field(default_factory=dict)

    def bound(self, state) -> float:
        """V(x) + b / p0."""
        return float(self.V(np.asarray(state)[None, :])[0]) + self.b / self.p0


def _scheidegger_step(states, keys, t):
    return lattice.scheidegger_advance(lattice.ScheideggerEnv(keys), t, states)


def _ssrw_step(states, keys, t):
    # the gap law is all the chain needs; the left walk is pinned at 0
    d1, d2 = gap_increments(keys, np.uint64(t))
    g1 = states[:, 1] - states[:, 0] + d1
    g2 = states[:, 2] - states[:, 1] + d2
    return np.column_stack([np.zeros_like(g1), g1, g1 + g2])


def scheidegger_chain() -> ChainSpec:
    """V = g1 g2 (d1 = 1), no exceptional set, exact drift -1."""
    return ChainSpec("scheidegger", _scheidegger_step, _coalesced, _never, gap_product,
                     b=0.0, p0=1.0, d1=1.0)


def ssrw_chain() -> ChainSpec:
    """Three independent walks up to the first collision; same data as Scheidegger."""
    return ChainSpec("ssrw", _ssrw_step, _coalesced, _never, gap_product, b=0.0, p0=1.0, d1=1.0)


def howard_chain(p: float, r0: int = 2) -> ChainSpec:
    """Howard gaps with d1 = E(I^2)/2, d2 = 4 E(I^2), V = g1 g2 / d1.

    M1 holds the uncoalesced states whose smaller gap is at most ``r0``;
    b = d2 / d1 and p0 = (1 - p)^(2 r0) p.
    """
    e2 = increment_second_moment(p)
    d1 = e2 / 2
    d2 = 4 * e2
    if r0 < 1:
        raise ValueError("r0 must be >= 1")

    def step(states, keys, t):
        return lattice.howard_advance(lattice.HowardEnv(keys, p), t, states)

    def in_M1(states):
        s = np.asarray(states)
        g = np.minimum(s[..., 1] - s[..., 0], s[..., 2] - s[..., 1])
        return (g > 0) & (g <= r0)

    def V(states):
        return gap_product(states) / d1

    return ChainSpec("howard", step, _coalesced, in_M1, V, b=d2 / d1,
                     p0=(1 - p) ** (2 * r0) * p, d1=d1, d2=d2, r0=r0, params={"p": p})


def make_chain(model: str, p: float = 0.5, r0: int = 2) -> ChainSpec:
    if model == "scheidegger":
        return scheidegger_chain()
    if model == "ssrw":
        return ssrw_chain()
    if model == "howard":
        return howard_chain(p, r0)
    raise ValueError(f"no built-in chain for model {model!r}")


def state_from_gaps(g1: int, g2: int) -> np.ndarray:
    return np.array([0, g1, g1 + g2], dtype=np.int64)


def _as_state(state) -> np.ndarray:
    s = np.asarray(state)
    if s.shape != (3,):
        raise ValueError("state must be a position triple")
    return s


def _one_step(chain: ChainSpec, state, reps: int, seed: int, lo: int = 0):
    keys = _rng.stream_keys(seed, np.arange(lo, lo + reps, dtype=np.uint64))
    y0 = np.tile(state, (reps, 1))
    return y0, chain.step(y0, keys, 0)


def _observable(chain: ChainSpec, observable):
    if observable is None or observable == "V":
        return chain.V
    if observable == "product":
        return gap_product
    if callable(observable):
        return observable
    raise ValueError(f"unknown observable {observable!r}")


def estimate_drift(chain: ChainSpec, state, reps: int, seed: int = 0, observable=None,
                   threads: int = 1) -> SummaryStats:
    """Monte Carlo mean of f(Y1) - f(Y0) from ``state`` (f = V unless ``observable`` is given)."""
    state = _as_state(state)
    if chain.in_M0(state[None, :])[0]:
        raise ValueError("drift is only defined off the absorbing set M0")
    f = _observable(chain, observable)

    def run(lo, hi):
        y0, y1 = _one_step(chain, state, hi - lo, seed, lo)
        return {"d": f(y1) - f(y0)}

    return summarize(parallel.concat_chunks(run, reps, threads)["d"], median=False)


def exact_drift_scheidegger(g1: int, g2: int) -> Fraction:
    """E[Delta(g1 g2)] over the 8 equally likely sign triples, in exact arithmetic.

    A zero gap means that pair has coalesced and the product stays 0.
    """
    for g in (g1, g2):
        if int(g) != g or g < 0 or g % 2:
            raise ValueError("Scheidegger gaps are non-negative even integers")
    if g1 == 0 or g2 == 0:
        return Fraction(0)
    total = 0
    for bl, bm, br in product((-1, 1), repeat=3):
        total += (g1 + bm - bl) * (g2 + br - bm) - g1 * g2
    return Fraction(total, 8)


def estimate_hit_prob(chain: ChainSpec, state, reps: int, seed: int = 0,
                      threads: int = 1) -> SummaryStats:
    """Frequency of one-step entry into M0 from a state of M1."""
    state = _as_state(state)
    if not chain.in_M1(state[None, :])[0]:
        raise ValueError("hit probability is only checked from states of M1")

    def run(lo, hi):
        _, y1 = _one_step(chain, state, hi - lo, seed, lo)
        return {"hit": chain.in_M0(y1)}

    hits = parallel.concat_chunks(run, reps, threads)["hit"]
    return binomial_stats(int(hits.sum()), reps)


def run_entrance(chain: ChainSpec, state, reps: int, horizon: int, seed: int = 0,
                 lo: int = 0) -> dict:
    """Steps until M0 for replicates ``lo..lo+reps-1``, capped at ``horizon``."""
    keys = _rng.stream_keys(seed, np.arange(lo, lo + reps, dtype=np.uint64))
    tau = np.full(reps, horizon, dtype=np.int64)
    censored = np.ones(reps, dtype=bool)
    idx = np.arange(reps)
    y = np.tile(state, (reps, 1))
    done0 = chain.in_M0(y)
    tau[done0] = 0
    censored[done0] = False
    idx, y = idx[~done0], y[~done0]
    t = 0
    while idx.size and t < horizon:
        y = chain.step(y, keys[idx], t)
        t += 1
        hit = chain.in_M0(y)
        if hit.any():
            tau[idx[hit]] = t
            censored[idx[hit]] = False
            idx, y = idx[~hit], y[~hit]
    return {"tau": tau, "censored": censored}


@dataclass(frozen=True)
class EntranceCheck:
    tau_stats: SummaryStats
    bound: float
    verdict: Verdict
    censored_fraction: float


def verify_entrance_bound(chain: ChainSpec, state, reps: int, horizon: int | None = None,
                          seed: int = 0, threads: int = 1,
                          max_censored: float = 0.01) -> EntranceCheck:
    """One-sided check of E[tau(M0)] <= V(x) + b / p0 on tau ^ horizon.

    The default horizon is 1000 times the bound.  A pass is downgraded to
    inconclusive when more than ``max_censored`` of the replicates hit the
    horizon, since the truncated mean then understates E(tau) noticeably.
    """
    state = _as_state(state)
    if chain.in_M0(state[None, :])[0]:
        raise ValueError("entrance time from inside M0 is trivially 0")
    bound = chain.bound(state)
    H = int(horizon) if horizon is not None else int(math.ceil(1000 * max(bound, 1.0)))
    r = parallel.concat_chunks(lambda lo, hi: run_entrance(chain, state, hi - lo, H, seed, lo),
                               reps, threads)
    censored = int(r["censored"].sum())
    stats = summarize(r["tau"], censored_count=censored)
    frac = censored / reps
    if censored == reps:
        return EntranceCheck(stats, bound, Verdict.INCONCLUSIVE, frac)
    verdict = one_sided_check(stats, bound, "<=")
    if verdict == Verdict.PASS and frac > max_censored:
        verdict = Verdict.INCONCLUSIVE
    return EntranceCheck(stats, bound, verdict, frac)


@dataclass(frozen=True)
class DriftRow:
    gaps: tuple
    min_gap: int
    stats: SummaryStats
    upper_verdict: Verdict    # drift <= 4 E(I^2)


@dataclass(frozen=True)
class DriftCurve:
    p: float
    second_moment: float
    rows: list
    r0: int


def _howard_cross_term(p: float, gaps, reps: int, seed: int, lo: int):
    g1, g2 = gaps
    keys = _rng.stream_keys(seed, np.arange(lo, lo + reps, dtype=np.uint64))
    state = state_from_gaps(g1, g2)
    y1 = lattice.howard_advance(lattice.HowardEnv(keys, p), 0, np.tile(state, (reps, 1)))
    inc = y1 - state
    return (inc[:, 1] - inc[:, 0]) * (inc[:, 2] - inc[:, 1])


def howard_drift_curve(p: float, gap_list, reps: int, seed: int = 0,
                       threads: int = 1) -> DriftCurve:
    """Drift of g1 g2 for Howard paths across gap pairs.

    Uses Delta(g1 g2) = g1 dD2 + g2 dD1 + dD1 dD2 with E[dD1] = E[dD2] = 0
    (each increment is symmetric), so the drift is E[dD1 dD2]; this has
    far smaller variance than the raw product change at large gaps.

    ``r0`` is the smallest sampled level beyond which every row's CI upper
    end lies below -E(I^2)/2.
    """
    e2 = increment_second_moment(p)
    rows = []
    for g in gap_list:
        gaps = (int(g), int(g)) if np.isscalar(g) else (int(g[0]), int(g[1]))
        if min(gaps) < 1:
            raise ValueError("gaps must be positive")
        d = parallel.concat_chunks(
            lambda lo, hi: {"d": _howard_cross_term(p, gaps, hi - lo, seed, lo)}, reps, threads)["d"]
        stats = summarize(d, median=False)
        rows.append(DriftRow(gaps, min(gaps), stats, one_sided_check(stats, 4 * e2, "<=")))
    failing = [r.min_gap for r in rows if r.stats.ci95_high > -e2 / 2]
    r0 = max(failing) if failing else 0
    return DriftCurve(p, e2, rows, r0)


# -- Poisson-tree generator ----------------------------------------------------

D_POISSON = Fraction(1, 12)


def overlap_integral(a, b):
    """Integral of (s - a)(s - b) over the overlap of the tubes around a <= b.

    Exact polynomial antiderivative; returns 0 when the tubes are disjoint.
    Works with floats or Fractions.
    """
    half = Fraction(1, 2) if isinstance(a, Fraction) else 0.5
    lo, hi = b - half, a + half
    if hi <= lo:
        return lo * 0

    def F(s):
        return s * s * s / 3 - (a + b) * s * s / 2 + a * b * s

    return F(hi) - F(lo)


@dataclass(frozen=True)
class GeneratorReport:
    gv_value: float
    d: Fraction
    cross_terms: tuple
    tube_length: float
    mc_estimate: SummaryStats | None = None

    @property
    def mc_verdict(self) -> Verdict | None:
        if self.mc_estimate is None:
            return None
        ok = abs(self.mc_estimate.mean - float(self.gv_value)) <= 3 * self.mc_estimate.stderr
        return Verdict.PASS if ok else Verdict.FAIL


def generator_V_poisson(u, v, w, reps: int = 0, seed: int = 0) -> GeneratorReport:
    """G V at (u, v, w) for V = (v - u)(w - v).

    GV = |A| E[(I_v - I_u)(I_w - I_v)] = -1/12 + |A| (E[I_u I_v] + E[I_v I_w]),
    since each I has mean 0, E(I_v^2) = 1/(12 |A|) and I_u I_w vanishes
    (u and w are at least 1 apart).  With ``reps > 0`` a Monte Carlo oracle
    |A| * mean(V(after one jump) - V) is attached.
    """
    poisson.validate_state(float(u), float(v), float(w))
    if u == v or v == w:
        raise ValueError("generator is evaluated off the absorbed set")
    exact = all(isinstance(c, Fraction) for c in (u, v, w))
    length = 1 + min(1, v - u) + min(1, w - v)
    uv = overlap_integral(u, v)
    vw = overlap_integral(v, w)
    gv = (-D_POISSON if exact else -1.0 / 12.0) + uv + vw
    mc = None
    if reps > 0:
        keys = _rng.stream_keys(seed, np.arange(reps, dtype=np.uint64))
        fu, fv, fw = (np.full(reps, float(c)) for c in (u, v, w))
        nu, nv, nw, _, _ = poisson.jump_batch(fu, fv, fw, keys, np.uint64(0))
        dv = poisson.lyapunov_v(nu, nv, nw) - poisson.lyapunov_v(fu, fv, fw)
        mc = summarize(float(length) * dv, median=False)
    return GeneratorReport(gv, D_POISSON, (uv / length, vw / length), float(length), mc)
