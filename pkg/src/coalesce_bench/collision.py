"""First-collision times of three ordered paths in every model.

The collision time is the first time any adjacent gap vanishes.  For the
independent walks and Brownian motions, D1 * D2 + t is a martingale up to
that time, so ``(n ^ tau) + D1 * D2`` evaluated at ``n ^ tau`` is an unbiased
estimator of E(tau) for every finite horizon n.  Its variance is finite even
though tau itself has an infinite second moment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sstats

from .harness import parallel
from .harness import rng as _rng
from .harness.stats import (Z95, SummaryStats, Verdict, binomial_stats, combine_verdicts,
                            one_sided_check, summarize, within_stderr)
from .models import brownian, lattice, poisson, ssrw
from .models.howard import increment_second_moment

MODELS = ("ssrw", "scheidegger", "howard", "brownian", "poisson")
LATTICE_MODELS = ("scheidegger", "howard")
_PAIR_NAMES = {0: "none", 1: "LM", 2: "MR", 3: "both"}

# default horizons as multiples of the gap product (or V for the Poisson triple)
RAW_HORIZON_FACTOR = 1000
POISSON_HORIZON_FACTOR = 200
BROWNIAN_HORIZON_FACTOR = 4.0


@dataclass(frozen=True)
class CollisionQuery:
    """Three paths started at ``starts = (x, y, z)``.

    ``horizon=None`` picks the model default; ``first_step`` switches to the
    n >= 1 convention, under which a gap that is zero at time 0 does not
    count as a collision.
    """

    model: str
    starts: tuple
    horizon: float | None = None
    reps: int = 10_000
    master_seed: int = 0
    p: float = 0.5
    dt: float = 1e-4
    first_step: bool = False

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if len(self.starts) != 3:
            raise ValueError("starts must be a triple (x, y, z)")
        x, y, z = self.starts
        if not x <= y <= z:
            raise ValueError(f"starts must satisfy x <= y <= z, got {self.starts}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.model in ("ssrw",) + LATTICE_MODELS:
            if any(int(s) != s for s in self.starts):
                raise ValueError("lattice starts must be integers")
        if self.model == "ssrw" and ((y - x) % 2 or (z - y) % 2):
            raise ValueError("SSRW gaps must be even")
        if self.model == "scheidegger" and any(int(s) % 2 for s in self.starts):
            raise ValueError("Scheidegger starts must be even sites at time 0")
        if self.model == "howard" and not 0 < self.p < 1:
            raise ValueError("open probability p must lie in (0, 1)")
        if self.model == "brownian" and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.model == "poisson":
            poisson.validate_state(x, y, z)
        if self.first_step and self.model in ("brownian", "poisson"):
            raise ValueError("the n >= 1 convention applies to discrete-time models")

    @classmethod
    def from_gaps(cls, model: str, i: int, j: int, **kwargs) -> "CollisionQuery":
        """Starts (-2i, 0, 2j), i.e. gaps (2i, 2j)."""
        return cls(model, (-2 * i, 0, 2 * j), **kwargs)

    @property
    def gaps(self) -> tuple:
        x, y, z = self.starts
        return (y - x, z - y)

    @property
    def effective_horizon(self):
        if self.horizon is not None:
            return int(self.horizon) if self.model in ("ssrw",) + LATTICE_MODELS else self.horizon
        g1, g2 = self.gaps
        prod = g1 * g2
        if self.model == "poisson":
            return POISSON_HORIZON_FACTOR * prod if prod > 0 else 1.0
        if self.model == "brownian":
            return BROWNIAN_HORIZON_FACTOR * prod
        return int(RAW_HORIZON_FACTOR * max(prod, 1))


@dataclass(frozen=True)
class CollisionSample:
    model: str
    tau: float
    censored: bool
    stopped_gaps: lattice.GapPair
    which_pair_met: str
    path: tuple | None = None

    @property
    def max_gap(self):
        """Largest adjacent gap at the stop; equals g1 + g2 when a gap is zero."""
        return max(self.stopped_gaps.g1, self.stopped_gaps.g2)


def _keys(seed: int, lo: int, hi: int) -> np.ndarray:
    return _rng.stream_keys(seed, np.arange(lo, hi, dtype=np.uint64))


def _run_range(query: CollisionQuery, lo: int, hi: int) -> dict:
    """Engine output for replicates ``lo..hi-1`` (pure in the replicate indices)."""
    keys = _keys(query.master_seed, lo, hi)
    x, y, z = query.starts
    H = query.effective_horizon
    if query.model == "ssrw":
        return ssrw.run_ssrw_collisions(keys, int(y - x), int(z - y), H, query.first_step)
    if query.model in LATTICE_MODELS:
        env, advance = lattice.make_advance(query.model, keys, query.p)
        return lattice.run_lattice_collisions(env, advance, (x, y, z), H, query.first_step)
    if query.model == "brownian":
        if x == y or y == z:
            n = hi - lo
            return {"tau": np.zeros(n), "censored": np.zeros(n, dtype=bool),
                    "g1": np.full(n, float(y - x)), "g2": np.full(n, float(z - y)),
                    "which": np.full(n, (x == y) + 2 * (y == z), dtype=np.int8)}
        return brownian.run_gap_collisions(keys, y - x, z - y, query.dt, H)
    return poisson.run_entrance_times(keys, x, y, z, H)


def run_collisions(query: CollisionQuery, threads: int = 1) -> dict:
    """Per-replicate arrays for all ``query.reps`` replicates."""
    return parallel.concat_chunks(lambda lo, hi: _run_range(query, lo, hi),
                                  query.reps, threads)


def _trace(query: CollisionQuery, replicate: int) -> tuple:
    """Full position history of one discrete replicate (same draws as the batch engines)."""
    stream = _rng.derive_stream(query.master_seed, replicate)
    triple = lattice.DiscreteTriple(*(int(s) for s in query.starts))
    if query.model == "ssrw":
        step = lambda tr: ssrw.ssrw_triple_step(tr, stream)  # noqa: E731
    elif query.model == "scheidegger":
        env = lattice.ScheideggerEnv.from_stream(stream)
        step = lambda tr: lattice.scheidegger_step(tr, env)  # noqa: E731
    else:
        env = lattice.HowardEnv.from_stream(stream, query.p)
        step = lambda tr: lattice.howard_step(tr, env)  # noqa: E731
    path = [triple.positions]
    H = query.effective_horizon
    met = lambda tr: tr.pos_L == tr.pos_M or tr.pos_M == tr.pos_R  # noqa: E731
    if met(triple) and not query.first_step:
        return tuple(path)
    while triple.time < H:
        triple = step(triple)
        path.append(triple.positions)
        if met(triple):
            break
    return tuple(path)


def run_first_collision(query: CollisionQuery, replicate: int, trace: bool = False) -> CollisionSample:
    """Collision sample of one replicate; identical to that replicate inside a batch.

    ``trace=True`` also records the positions at every step (discrete models).
    """
    if not 0 <= replicate < query.reps:
        raise ValueError("replicate index out of range")
    r = _run_range(query, replicate, replicate + 1)
    path = None
    if trace:
        if query.model in ("brownian", "poisson"):
            raise ValueError("path traces are available for discrete models only")
        path = _trace(query, replicate)
    tau = r["tau"][0]
    g1, g2 = r["g1"][0], r["g2"][0]
    discrete = query.model in ("ssrw",) + LATTICE_MODELS
    cast = int if discrete else float
    return CollisionSample(model=query.model, tau=cast(tau), censored=bool(r["censored"][0]),
                           stopped_gaps=lattice.GapPair(cast(g1), cast(g2)),
                           which_pair_met=_PAIR_NAMES[int(r["which"][0])], path=path)


def horizon_corrected_tau(sample: CollisionSample):
    """(n ^ tau) + g1 * g2 at the stop; unbiased for E(tau) under independent motion."""
    if sample.model not in ("ssrw", "brownian"):
        raise ValueError("the product-plus-time martingale is only used for ssrw and brownian")
    return sample.tau + sample.stopped_gaps.g1 * sample.stopped_gaps.g2


def corrected_values(result: dict) -> np.ndarray:
    """Vectorized :func:`horizon_corrected_tau` over engine output."""
    return result["tau"] + result["g1"] * result["g2"]


@dataclass(frozen=True)
class CollisionEstimate:
    query: CollisionQuery
    raw: SummaryStats                     # tau ^ H over all replicates
    corrected: SummaryStats | None        # horizon-corrected mean (ssrw, brownian)
    censored_fraction: float
    verdict: Verdict | None = None        # inconclusive when every replicate is censored

    @property
    def target(self):
        """Exact E(tau) where known: the gap product for independent motion."""
        if self.query.model in ("ssrw", "brownian"):
            g1, g2 = self.query.gaps
            return g1 * g2
        return None


def summarize_collisions(query: CollisionQuery, result: dict) -> CollisionEstimate:
    censored = int(result["censored"].sum())
    raw = summarize(result["tau"], censored_count=censored)
    corrected = None
    if query.model in ("ssrw", "brownian"):
        corrected = summarize(corrected_values(result), censored_count=censored)
    verdict = Verdict.INCONCLUSIVE if censored == query.reps else None
    return CollisionEstimate(query, raw, corrected, censored / query.reps, verdict)


def estimate_collision_expectation(query: CollisionQuery, threads: int = 1) -> CollisionEstimate:
    return summarize_collisions(query, run_collisions(query, threads))


def max_gap_at_collision(i: int, j: int, reps: int, horizon: int | None = None,
                         seed: int = 0, threads: int = 1) -> SummaryStats:
    """Mean of the largest gap at the collision time of three independent walks.

    Started from (-2i, 0, 2j); averaged over uncensored replicates, with the
    censored count carried in the result.
    """
    if i < 1 or j < 1:
        raise ValueError("i and j must be >= 1")
    q = CollisionQuery.from_gaps("ssrw", i, j, horizon=horizon, reps=reps, master_seed=seed)
    r = run_collisions(q, threads)
    done = ~r["censored"]
    m = np.maximum(r["g1"], r["g2"])[done]
    if m.size == 0:
        raise ValueError("every replicate was censored")
    return summarize(m, censored_count=int((~done).sum()))


@dataclass(frozen=True)
class RefinementRow:
    dt: float
    stats: SummaryStats
    bias: float


@dataclass(frozen=True)
class BrownianCollisionResult:
    stats: SummaryStats                   # horizon-corrected estimate at the base dt
    raw: SummaryStats
    target: float
    table: list = field(default_factory=list)
    refinement_verdict: Verdict | None = None


def brownian_collision_expectation(x: float, y: float, dt: float, reps: int, seed: int = 0,
                                   horizon: float | None = None, refine: int = 4,
                                   threads: int = 1) -> BrownianCollisionResult:
    """E(tau) for three Brownian motions from (-x, 0, y), at ``dt`` and ``dt / refine``.

    The refinement check passes when the finer estimate is no further from
    the exact value than the coarse one, up to the combined 95% interval
    half-width (1.96 combined standard errors).
    """
    if x <= 0 or y <= 0 or dt <= 0:
        raise ValueError("x, y and dt must be positive")
    table = []
    raw = None
    for step in ([dt, dt / refine] if refine and refine > 1 else [dt]):
        q = CollisionQuery("brownian", (-x, 0.0, y), horizon=horizon, reps=reps,
                           master_seed=seed, dt=step)
        est = estimate_collision_expectation(q, threads)
        if raw is None:
            raw = est.raw
        table.append(RefinementRow(step, est.corrected, est.corrected.mean - x * y))
    verdict = None
    if len(table) == 2:
        a, b = table
        combined = math.sqrt(a.stats.stderr ** 2 + b.stats.stderr ** 2)
        ok = abs(b.bias) <= abs(a.bias) + Z95 * combined
        verdict = Verdict.PASS if ok else Verdict.FAIL
    return BrownianCollisionResult(table[0].stats, raw, x * y, table, verdict)


# -- Poisson tree --------------------------------------------------------------

@dataclass(frozen=True)
class TailCheck:
    n: float
    p_hat: SummaryStats
    bound: float
    verdict: Verdict


@dataclass(frozen=True)
class PoissonEntranceResult:
    stats: SummaryStats
    bound: float
    verdict: Verdict
    censored_fraction: float
    tail: list = field(default_factory=list)


def tail_levels(bound: float, reps: int, fractions=(0.5, 0.2, 0.1, 0.05, 0.02, 0.01)) -> list:
    """Times n at which bound / n equals each fraction, keeping fractions resolvable at ``reps``."""
    return [bound / f for f in fractions if f * reps >= 30]


def poisson_triple_entrance(u: float, v: float, w: float, reps: int, seed: int = 0,
                            horizon: float | None = None, levels=None,
                            threads: int = 1) -> PoissonEntranceResult:
    """Entrance time of the Poisson triple into the absorbed set against 12 V(u, v, w).

    The mean check is one-sided on tau ^ H.  Tail checks compare the
    frequency of tau > n with 12 V / n.  A pass on the mean is downgraded to
    inconclusive if more than 1% of replicates were censored.
    """
    q = CollisionQuery("poisson", (u, v, w), horizon=horizon, reps=reps, master_seed=seed)
    r = run_collisions(q, threads)
    censored = int(r["censored"].sum())
    stats = summarize(r["tau"], censored_count=censored)
    bound = 12.0 * poisson.lyapunov_v(u, v, w)
    verdict = one_sided_check(stats, bound, "<=")
    frac = censored / reps
    if verdict == Verdict.PASS and frac > 0.01:
        verdict = Verdict.INCONCLUSIVE
    tail = []
    if bound > 0:
        H = q.effective_horizon
        for n in (tail_levels(bound, reps) if levels is None else levels):
            if n >= H:
                continue
            p_hat = binomial_stats(int((r["tau"] > n).sum()), reps)
            tail.append(TailCheck(n, p_hat, bound / n, one_sided_check(p_hat, bound / n, "<=")))
    return PoissonEntranceResult(stats, bound, verdict, frac, tail)


@dataclass(frozen=True)
class ForestCrossCheck:
    jump_process: SummaryStats
    forest: SummaryStats
    cap: float
    verdict: Verdict


def poisson_forest_cross_check(u: float, v: float, w: float, reps: int, seed: int = 0,
                               cap: float | None = None, spacing: float | None = None
                               ) -> ForestCrossCheck:
    """Compare E[min(tau, cap)] from the jump process and from traced forests.

    The forest side starts ``reps`` triples side by side in one large window
    whose top lies well above ``cap``.  The verdict passes when the two means
    agree within 3 combined standard errors.
    """
    poisson.validate_state(u, v, w)
    V = poisson.lyapunov_v(u, v, w)
    cap = 8.0 * 12.0 * V if cap is None else float(cap)
    spacing = (w - u) + 2.0 * math.sqrt(cap) + 10.0 if spacing is None else spacing
    q = CollisionQuery("poisson", (u, v, w), horizon=cap, reps=reps, master_seed=seed)
    jp = summarize(run_collisions(q)["tau"])
    stream = _rng.derive_stream(seed, reps)   # first stream id not used by the jump side
    x0 = -spacing / 2
    forest = poisson.build_poisson_forest((x0, x0 + reps * spacing, 0.0, cap * 1.5 + 5.0), stream)
    off = np.arange(reps) * spacing
    tau, _ = poisson.forest_entrance_times(forest, off + u, off + v, off + w, 0.0)
    fs = summarize(np.minimum(tau, cap))
    combined = math.sqrt(jp.stderr ** 2 + fs.stderr ** 2)
    ok = abs(jp.mean - fs.mean) <= 3 * combined
    return ForestCrossCheck(jp, fs, cap, Verdict.PASS if ok else Verdict.FAIL)


@dataclass(frozen=True)
class ForestJumpKS:
    displacement_pvalue: float    # jump location relative to the left path
    wait_pvalue: float
    n_forest: int
    n_jump: int
    verdict: Verdict              # on the displacement test


def forest_jump_ks(u: float, v: float, w: float, n: int, seed: int = 0,
                   alpha: float = 0.01) -> ForestJumpKS:
    """Two-sample KS tests of the first jump: forest extraction against the jump process.

    ``n`` copies of the triple sit side by side in one forest window, spaced
    so their tubes never overlap; the jump process uses streams ``0..n-1``
    and the forest the next stream id.
    """
    poisson.validate_state(u, v, w)
    if poisson.is_absorbed(brownian.ContinuousTriple(u, v, w, 0.0)):
        raise ValueError("state is absorbed")
    span = (w - u) + 2.0
    t0 = 5.0
    forest = poisson.build_poisson_forest((0.0, n * span, 0.0, t0 + 40.0),
                                          _rng.derive_stream(seed, n))
    off = np.arange(n) * span + 1.0
    dt_f, U_f, valid = poisson.forest_first_jump(forest, off + u, off + v, off + w, t0)
    keys = _keys(seed, 0, n)
    full = [np.full(n, c) for c in (u, v, w)]
    _, _, _, dt_j, U_j = poisson.jump_batch(*full, keys, np.uint64(0))
    disp = float(sstats.ks_2samp((U_f - off)[valid] - u, U_j - u).pvalue)
    wait = float(sstats.ks_2samp(dt_f[valid], dt_j).pvalue)
    return ForestJumpKS(disp, wait, int(valid.sum()), n,
                        Verdict.PASS if disp > alpha else Verdict.FAIL)


# -- Howard envelope -----------------------------------------------------------

@dataclass(frozen=True)
class Envelope:
    """E(T) <= c1 + c2 * g1 * g2."""

    c1: float
    c2: float

    def __call__(self, g1, g2):
        return self.c1 + self.c2 * g1 * g2


def howard_lyapunov_envelope(p: float, r0: int) -> Envelope:
    """Envelope from the drift constants: V = g1 g2 / d1 and b / p0 with b = d2 / d1.

    d1 = E(I^2) / 2, d2 = 4 E(I^2) and p0 = (1 - p)^(2 r0) p.
    """
    e2 = increment_second_moment(p)
    d1 = e2 / 2
    d2 = 4 * e2
    p0 = (1 - p) ** (2 * r0) * p
    return Envelope(c1=(d2 / d1) / p0, c2=1.0 / d1)


def fit_envelope(gaps, means, stderrs) -> Envelope:
    """Least-squares line in the gap product, shifted up to cover every CI upper end."""
    prod = np.array([g1 * g2 for g1, g2 in gaps], dtype=np.float64)
    m = np.asarray(means, dtype=np.float64)
    upper = m + 1.96 * np.asarray(stderrs, dtype=np.float64)
    A = np.column_stack([np.ones_like(prod), prod])
    (c1, c2), *_ = np.linalg.lstsq(A, m, rcond=None)
    c2 = max(c2, 0.0)
    c1 = max(c1, float(np.max(upper - c2 * prod)))
    return Envelope(float(c1), float(c2))


@dataclass(frozen=True)
class EnvelopeValidation:
    envelope: Envelope
    rows: list            # (gaps, stats, envelope value, verdict)
    verdict: Verdict


def validate_envelope(model: str, envelope: Envelope, gaps, reps: int, seed: int = 0,
                      p: float = 0.5, horizon: int | None = None,
                      threads: int = 1) -> EnvelopeValidation:
    """One-sided check of E(T) <= envelope at each gap pair (paths start at 0)."""
    rows = []
    verdicts = []
    for g1, g2 in gaps:
        q = CollisionQuery(model, (0, g1, g1 + g2), horizon=horizon, reps=reps,
                           master_seed=seed, p=p)
        est = estimate_collision_expectation(q, threads)
        bound = envelope(g1, g2)
        v = one_sided_check(est.raw, bound, "<=")
        rows.append(((g1, g2), est.raw, bound, v))
        verdicts.append(v)
    return EnvelopeValidation(envelope, rows, combine_verdicts(verdicts))


def fitted_howard_envelope(train_gaps, validate_gaps, reps: int, seed: int = 0,
                           p: float = 0.5, horizon: int | None = None,
                           threads: int = 1) -> EnvelopeValidation:
    """Fit c1 + c2 g1 g2 on ``train_gaps`` and validate one-sided on ``validate_gaps``."""
    if set(map(tuple, train_gaps)) & set(map(tuple, validate_gaps)):
        raise ValueError("training and validation grids must be disjoint")
    means, ses = [], []
    for g1, g2 in train_gaps:
        q = CollisionQuery("howard", (0, g1, g1 + g2), horizon=horizon, reps=reps,
                           master_seed=seed, p=p)
        est = estimate_collision_expectation(q, threads)
        means.append(est.raw.mean)
        ses.append(est.raw.stderr)
    env = fit_envelope(train_gaps, means, ses)
    # validation uses fresh streams
    return validate_envelope("howard", env, validate_gaps, reps, seed + 1, p, horizon, threads)


def within_target(est: CollisionEstimate, k: float = 3.0) -> Verdict | None:
    """Corrected estimate against the exact gap product, where known."""
    if est.corrected is None or est.target is None:
        return None
    return within_stderr(est.corrected, est.target, k)
