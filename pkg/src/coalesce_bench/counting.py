"""Counting statistic eta for coalescing lattice paths and its decay curves.

eta(0, nt; 0, eps sqrt(n)) is the number of distinct positions at time
ceil(nt) among the paths started from every lattice site of [0, eps sqrt(n)]
at time 0.  Any path that started earlier occupies one of those sites at
time 0, so this count dominates the count over all earlier-started paths.

Only the frontier is simulated: sorted current positions per replicate,
with duplicates merged as soon as two paths meet.  Replicate ``r`` uses the
environment field of stream ``r``, so every epsilon sees the same
environment (common random numbers across the curve).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .collision import CollisionQuery, estimate_collision_expectation, run_collisions
from .harness import parallel
from .harness import rng as _rng
from .harness.stats import SummaryStats, Verdict, binomial_stats
from .models import lattice

ETA_MODELS = ("scheidegger", "howard")


@dataclass(frozen=True)
class EtaQuery:
    model: str
    epsilon: float
    n: int
    t: float = 1.0
    reps: int = 10_000
    master_seed: int = 0
    p: float = 0.5

    def __post_init__(self):
        if self.model not in ETA_MODELS:
            raise ValueError(f"eta is defined for {ETA_MODELS}, got {self.model!r}")
        if not (self.epsilon > 0 and self.t > 0):
            raise ValueError("epsilon and t must be positive")
        if self.n < 1 or self.reps < 1:
            raise ValueError("n and reps must be >= 1")
        if self.model == "howard" and not 0 < self.p < 1:
            raise ValueError("open probability p must lie in (0, 1)")

    @property
    def steps(self) -> int:
        return math.ceil(self.n * self.t)

    @property
    def sites(self) -> np.ndarray:
        return start_sites(self.model, self.epsilon, self.n)


def start_sites(model: str, epsilon: float, n: int) -> np.ndarray:
    """Lattice sites in [0, eps sqrt(n)] at time 0 (even ones for Scheidegger)."""
    right = math.floor(epsilon * math.sqrt(n) + 1e-12)
    stride = 2 if model == "scheidegger" else 1
    return np.arange(0, right + 1, stride, dtype=np.int64)


def _frontier_counts(model: str, p: float, keys: np.ndarray, sites: np.ndarray,
                     steps: int, drop_below: int = 0) -> np.ndarray:
    """Distinct positions after ``steps`` per replicate.

    Replicates whose count falls below ``drop_below`` stop being simulated;
    their returned count is the count at the time they were dropped (an
    upper bound on the final count, still below ``drop_below``).
    """
    R = keys.size
    env, advance = lattice.make_advance(model, keys, p)
    counts = np.full(R, sites.size, dtype=np.int64)
    if sites.size == 0:
        return counts
    rep = np.repeat(np.arange(R), sites.size)
    pos = np.tile(sites, R)
    for t in range(steps):
        if pos.size == 0:
            break
        pos = advance(env, t, pos, rows=rep)
        # paths never cross, so equal positions are adjacent within a replicate
        fresh = np.ones(pos.size, dtype=bool)
        fresh[1:] = (rep[1:] != rep[:-1]) | (pos[1:] != pos[:-1])
        if not fresh.all():
            pos, rep = pos[fresh], rep[fresh]
        c = np.bincount(rep, minlength=R)
        alive = np.unique(rep)
        counts[alive] = c[alive]
        if drop_below > 0:
            low = c[rep] < drop_below
            if low.any():
                pos, rep = pos[~low], rep[~low]
    return counts


def _independent_counts(model: str, p: float, keys: np.ndarray, sites: np.ndarray,
                        steps: int) -> np.ndarray:
    """Same count, tracking every start site separately and merging only at the end."""
    R = keys.size
    env, advance = lattice.make_advance(model, keys, p)
    pos = np.tile(sites, (R, 1))
    for t in range(steps):
        pos = advance(env, t, pos)
    return np.array([np.unique(row).size for row in pos], dtype=np.int64)


def eta_counts(query: EtaQuery, threads: int = 1, method: str = "frontier",
               drop_below: int = 0) -> np.ndarray:
    """Counts for all replicates of ``query``."""
    sites = query.sites
    if method == "frontier":
        fn = lambda lo, hi: {"c": _frontier_counts(  # noqa: E731
            query.model, query.p, _keys(query.master_seed, lo, hi), sites, query.steps, drop_below)}
    elif method == "independent":
        fn = lambda lo, hi: {"c": _independent_counts(  # noqa: E731
            query.model, query.p, _keys(query.master_seed, lo, hi), sites, query.steps)}
    else:
        raise ValueError(f"unknown method {method!r}")
    return parallel.concat_chunks(fn, query.reps, threads)["c"]


def _keys(seed: int, lo: int, hi: int) -> np.ndarray:
    return _rng.stream_keys(seed, np.arange(lo, hi, dtype=np.uint64))


def eta_sample(query: EtaQuery, replicate: int) -> int:
    if not 0 <= replicate < query.reps:
        raise ValueError("replicate index out of range")
    keys = _keys(query.master_seed, replicate, replicate + 1)
    return int(_frontier_counts(query.model, query.p, keys, query.sites, query.steps)[0])


def union_bound_envelope(sites, steps: int) -> Fraction:
    """Sum over i of E T(s_i, s_{i+1}, s_m) / steps with E T = gap product.

    Three distinct survivors force some adjacent start pair (s_i, s_{i+1})
    with i <= m - 2 to stay apart from each other and from the rightmost
    path, so P(eta >= 3) <= sum_i P(T_i > steps) and Markov's inequality
    bounds each term.  Valid for Scheidegger paths, whose three-path
    collision time has mean equal to the product of the initial gaps.
    """
    s = [int(v) for v in sites]
    m = len(s) - 1
    if m < 2:
        return Fraction(0)
    total = sum((s[i + 1] - s[i]) * (s[m] - s[i + 1]) for i in range(m - 1))
    return Fraction(total, steps)


@dataclass(frozen=True)
class CurvePoint:
    epsilon: float
    p_hat: float
    stderr: float
    k: int
    markov_envelope: float | None
    n_sites: int
    envelope_verdict: Verdict | None = None

    @property
    def ratio(self) -> float:
        return self.p_hat / self.epsilon

    @property
    def ratio_stderr(self) -> float:
        return self.stderr / self.epsilon


@dataclass(frozen=True)
class BCurve:
    model: str
    k: int
    points: list
    monotone_verdict: Verdict
    envelope_verdict: Verdict | None


def _monotone(values, stderrs) -> Verdict:
    """Each value is at most its predecessor plus 1.96 combined standard errors."""
    for a, b, sa, sb in zip(values, values[1:], stderrs, stderrs[1:]):
        if b > a + 1.96 * math.sqrt(sa * sa + sb * sb):
            return Verdict.FAIL
    return Verdict.PASS


def b_curve(model: str, k: int, epsilons, n: int, t: float = 1.0, reps: int = 10_000,
            seed: int = 0, p: float = 0.5, threads: int = 1) -> BCurve:
    """Estimate P(eta >= k) along a decreasing epsilon grid.

    For k = 3 the monotone check is on p_hat / eps, for k = 2 on p_hat.
    For Scheidegger each point is also checked one-sided against the union
    bound envelope (allowing 3 binomial standard errors).
    """
    if k not in (2, 3):
        raise ValueError("k must be 2 or 3")
    eps = [float(e) for e in epsilons]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be sorted in decreasing order")
    points = []
    for e in eps:
        q = EtaQuery(model, e, n, t, reps, seed, p)
        c = eta_counts(q, threads, drop_below=k)
        stats = binomial_stats(int((c >= k).sum()), reps)
        env = None
        ev = None
        if model == "scheidegger" and k == 3:
            env = float(union_bound_envelope(q.sites, q.steps))
            ev = Verdict.PASS if stats.mean <= env + 3 * stats.stderr else Verdict.FAIL
        points.append(CurvePoint(e, stats.mean, stats.stderr, k, env, int(q.sites.size), ev))
    if k == 3:
        mono = _monotone([pt.ratio for pt in points], [pt.ratio_stderr for pt in points])
    else:
        mono = _monotone([pt.p_hat for pt in points], [pt.stderr for pt in points])
    env_verdicts = [pt.envelope_verdict for pt in points if pt.envelope_verdict is not None]
    env_verdict = None
    if env_verdicts:
        env_verdict = Verdict.FAIL if Verdict.FAIL in env_verdicts else Verdict.PASS
    return BCurve(model, k, points, mono, env_verdict)


def no_coalescence_probability(model: str, starts, n: int, reps: int, seed: int = 0,
                               p: float = 0.5, threads: int = 1) -> CurvePoint:
    """P(x < y < z paths all still distinct after n steps) with a Markov envelope E(T) / n.

    E(T) is the exact gap product for Scheidegger; for Howard it is estimated
    from a separate collision run under the default horizon.
    """
    x, y, z = starts
    if x == y or y == z:
        return CurvePoint(0.0, 0.0, 0.0, 3, 0.0, 3)
    q = CollisionQuery(model, tuple(starts), horizon=n, reps=reps, master_seed=seed, p=p)
    r = run_collisions(q, threads)
    stats = binomial_stats(int(r["censored"].sum()), reps)
    if model == "scheidegger":
        mean_t = (y - x) * (z - y)
    else:
        full = CollisionQuery(model, tuple(starts), reps=reps, master_seed=seed + 1, p=p)
        mean_t = estimate_collision_expectation(full, threads).raw.mean
    env = mean_t / n
    verdict = Verdict.PASS if stats.mean <= env + 3 * stats.stderr else Verdict.FAIL
    return CurvePoint(0.0, stats.mean, stats.stderr, 3, env, 3, verdict)


# -- non-crossing sweeps -------------------------------------------------------

def lattice_path_pairs(model: str, pairs: int, steps: int, seed: int = 0, p: float = 0.5,
                       max_sep: int = 20) -> np.ndarray:
    """Positions of ``pairs`` path pairs, one realization each; shape (steps + 1, pairs, 2).

    Pair ``r`` starts at (0, d_r) with d_r cycling through 1..max_sep (even
    values for Scheidegger).
    """
    keys = _keys(seed, 0, pairs)
    env, advance = lattice.make_advance(model, keys, p)
    step_sep = 2 if model == "scheidegger" else 1
    d = step_sep * (1 + np.arange(pairs) % max(1, max_sep // step_sep))
    pos = np.column_stack([np.zeros(pairs, dtype=np.int64), d])
    out = np.empty((steps + 1, pairs, 2), dtype=np.int64)
    out[0] = pos
    for t in range(steps):
        pos = advance(env, t, pos)
        out[t + 1] = pos
    return out


def noncrossing_violations(paths: np.ndarray) -> int:
    """Number of pairs in a (steps + 1, pairs, 2) array whose difference changes sign."""
    return sum(not lattice.check_noncrossing(paths[:, r, 0], paths[:, r, 1])
               for r in range(paths.shape[1]))


def forest_path_pairs(forest, starts, t0: float = 0.0, grid: int = 200):
    """Positions of forest paths started at ``starts`` (pairs of x) on a shared time grid.

    Each path is piecewise constant, jumping at its vertices; the grid stops
    at the earlier censoring time of the two paths.
    """
    out = []
    for xa, xb in starts:
        pa = forest.path(xa, t0)
        pb = forest.path(xb, t0)
        if not pa or not pb:
            continue
        end = min(forest.t[pa[-1]], forest.t[pb[-1]])
        times = np.union1d(forest.t[pa], forest.t[pb])
        times = np.concatenate([[t0], times[times <= end]])

        def at(path, x0):
            tv = forest.t[path]
            i = np.searchsorted(tv, times, side="right") - 1
            return np.where(i >= 0, forest.x[np.asarray(path)[np.maximum(i, 0)]], x0)

        out.append((at(pa, xa), at(pb, xb)))
    return out


def eta_summary(query: EtaQuery, k: int = 3, threads: int = 1) -> SummaryStats:
    c = eta_counts(query, threads, drop_below=k)
    return binomial_stats(int((c >= k).sum()), query.reps)

