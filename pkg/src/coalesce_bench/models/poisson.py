"""Poisson-tree paths: the triple jump process and a direct forest builder.

Each path sits at a point of a unit-intensity Poisson process in the plane
and jumps to the first later point inside the tube of half-width 1/2 around
its current position.  For three paths at (u, v, w) the next jump happens
after an Exponential(|A|) wait, where A is the union of the three tubes, and
lands at a uniform point U of A; every coordinate within 1/2 of U moves to U.

Lane layout of one jump slot: 0 -> waiting time, 1 -> location in A.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..harness import rng as _rng
from .brownian import ContinuousTriple

HALF_WIDTH = 0.5
GAP_TOL = 1e-9

_LANE_WAIT = 0
_LANE_LOCATION = 1


def validate_state(u: float, v: float, w: float) -> None:
    """Raise unless (u, v, w) is ordered with each gap either 0 or >= 1/2.

    Gaps within GAP_TOL below 1/2 are accepted, since states built in
    floating point (e.g. v + 0.5 - v) can land one ulp short.
    """
    if not (u <= v <= w):
        raise ValueError(f"state out of order: {(u, v, w)}")
    for g in (v - u, w - v):
        if 0 < g < HALF_WIDTH - GAP_TOL:
            raise ValueError(f"gap {g} lies in (0, 1/2): not a reachable state")


def is_absorbed(state: ContinuousTriple) -> bool:
    return state.u == state.v or state.v == state.w


def lyapunov_v(u, v, w):
    """V(u, v, w) = (v - u)(w - v)."""
    return (v - u) * (w - v)


@dataclass(frozen=True)
class TubeUnion:
    intervals: tuple[tuple[float, float], ...]
    length: float
    half_width: float = HALF_WIDTH

    def contains(self, s: float) -> bool:
        return any(lo <= s < hi for lo, hi in self.intervals)


def poisson_tube_union(state: ContinuousTriple) -> TubeUnion:
    validate_state(state.u, state.v, state.w)
    merged: list[list[float]] = []
    for c in (state.u, state.v, state.w):
        lo, hi = c - HALF_WIDTH, c + HALF_WIDTH
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    intervals = tuple((lo, hi) for lo, hi in merged)
    return TubeUnion(intervals, float(tube_length(state.u, state.v, state.w)))


def tube_length(u, v, w):
    """|A| = 1 + min(1, v - u) + min(1, w - v), elementwise."""
    return 1.0 + np.minimum(1.0, np.subtract(v, u)) + np.minimum(1.0, np.subtract(w, v))


def tube_point(u, v, w, s):
    """Map s in [0, |A|) onto A, piece by piece from left to right.

    The first unit covers u's tube; the next min(1, v - u) covers the part of
    v's tube to the right of u's; the rest covers the new part of w's tube.
    Uniform s therefore gives a uniform point of A.
    """
    u, v, w, s = (np.asarray(a, dtype=np.float64) for a in (u, v, w, s))
    a2 = np.minimum(1.0, v - u)
    a3 = np.minimum(1.0, w - v)
    return np.where(s < 1.0, u - HALF_WIDTH + s,
                    np.where(s < 1.0 + a2, v + HALF_WIDTH - a2 + (s - 1.0),
                             w + HALF_WIDTH - a3 + (s - 1.0 - a2)))


def apply_jump(u, v, w, U):
    """Move every coordinate within 1/2 of U onto U exactly."""
    nu = np.where(np.abs(U - u) < HALF_WIDTH, U, u)
    nv = np.where(np.abs(U - v) < HALF_WIDTH, U, v)
    nw = np.where(np.abs(U - w) < HALF_WIDTH, U, w)
    return nu, nv, nw


def jump_batch(u, v, w, keys, counter):
    """One jump for every replicate; returns (u', v', w', dt, U)."""
    length = tube_length(u, v, w)
    dt = _rng.draw_exponential(keys, counter, _LANE_WAIT) / length
    U = tube_point(u, v, w, _rng.draw_uniform(keys, counter, _LANE_LOCATION) * length)
    nu, nv, nw = apply_jump(u, v, w, U)
    return nu, nv, nw, dt, U


@dataclass(frozen=True)
class JumpEvent:
    u_sample: float
    dt: float
    moved: frozenset


def poisson_triple_jump(state: ContinuousTriple, rng: _rng.RngStream):
    validate_state(state.u, state.v, state.w)
    if is_absorbed(state):
        raise ValueError("state is absorbed (two coordinates coincide)")
    r = rng.slot_uniform(2)
    length = float(tube_length(state.u, state.v, state.w))
    dt = float(-np.log1p(-r[_LANE_WAIT])) / length
    U = float(tube_point(state.u, state.v, state.w, r[_LANE_LOCATION] * length))
    moved = frozenset(name for name, c in zip("LMR", (state.u, state.v, state.w))
                      if abs(U - c) < HALF_WIDTH)
    nu, nv, nw = (float(a) for a in apply_jump(state.u, state.v, state.w, U))
    return ContinuousTriple(nu, nv, nw, state.time + dt), JumpEvent(U, dt, moved)


def run_entrance_times(keys, u: float, v: float, w: float, horizon: float) -> dict:
    """Time until two coordinates coincide, for every replicate, capped at ``horizon``.

    Jump ``k`` of replicate ``r`` uses counter ``k`` of stream ``keys[r]``.
    Returns ``tau``, ``censored``, ``jumps`` and the gaps ``g1``, ``g2`` and
    ``which`` (1 = LM, 2 = MR, 3 = both, 0 = censored) at the stop.
    """
    validate_state(u, v, w)
    keys = np.atleast_1d(np.asarray(keys, dtype=np.uint64))
    n = keys.size
    tau = np.zeros(n)
    censored = np.zeros(n, dtype=bool)
    jumps = np.zeros(n, dtype=np.int64)
    g1 = np.full(n, float(v - u))
    g2 = np.full(n, float(w - v))
    which = np.full(n, (u == v) + 2 * (v == w), dtype=np.int8)
    result = {"tau": tau, "censored": censored, "jumps": jumps, "g1": g1, "g2": g2,
              "which": which}
    if u == v or v == w:
        return result
    idx = np.arange(n)
    ak = keys
    au = np.full(n, float(u))
    av = np.full(n, float(v))
    aw = np.full(n, float(w))
    at = np.zeros(n)
    k = 0
    while idx.size:
        nu, nv, nw, dt, _ = jump_batch(au, av, aw, ak, np.uint64(k))
        at = at + dt
        late = at > horizon
        hit = ~late & ((nu == nv) | (nv == nw))
        done = late | hit
        if done.any():
            di = idx[done]
            tau[di] = np.where(late[done], horizon, at[done])
            censored[di] = late[done]
            jumps[di] = k + 1 - late[done]
            # a censored replicate keeps its pre-jump state
            g1[di] = np.where(late[done], av[done] - au[done], nv[done] - nu[done])
            g2[di] = np.where(late[done], aw[done] - av[done], nw[done] - nv[done])
            which[di] = np.where(late[done], 0, (nu[done] == nv[done]).astype(np.int8)
                                 + 2 * (nv[done] == nw[done]).astype(np.int8))
            keep = ~done
            idx, ak, at = idx[keep], ak[keep], at[keep]
            au, av, aw = nu[keep], nv[keep], nw[keep]
        else:
            au, av, aw = nu, nv, nw
        k += 1
    return result


class PoissonForest:
    """Unit-intensity Poisson points in a window with first-in-time ancestors.

    ``ancestor[i]`` is the index of the first point strictly later than point
    ``i`` inside its tube, or -1 when the tube leaves the window (sideways or
    through the top) before such a point is found.
    """

    def __init__(self, x, t, window):
        self.window = tuple(float(a) for a in window)
        x0, x1, t0, t1 = self.window
        order = np.argsort(t, kind="stable")
        self.x = np.asarray(x, dtype=np.float64)[order]
        self.t = np.asarray(t, dtype=np.float64)[order]
        n = self.x.size
        # points bucketed by unit-width column, sorted by time inside a column;
        # the key column * (n + 1) + time-rank is an exact integer
        self._col = np.floor(self.x - x0).astype(np.int64)
        self._stride = n + 1
        self._key = self._col * self._stride + np.arange(n)
        self._by_key = np.argsort(self._key, kind="stable")
        self._key_sorted = self._key[self._by_key]
        self.ancestor = self.ancestor_of(self.x, self.t)

    def __len__(self):
        return self.x.size

    def _first_in_column(self, col, xq, tq):
        n = self.x.size
        rank = np.searchsorted(self.t, tq, side="right")
        pos = np.searchsorted(self._key_sorted, col * self._stride + rank, side="left")
        out = np.full(xq.size, -1, dtype=np.int64)
        pending = np.arange(xq.size)
        while pending.size:
            p = pos[pending]
            valid = p < n
            pts = np.where(valid, self._by_key[np.minimum(p, n - 1)], 0)
            valid &= self._col[pts] == col[pending]
            ok = valid & (np.abs(self.x[pts] - xq[pending]) < HALF_WIDTH)
            out[pending[ok]] = pts[ok]
            again = valid & ~ok
            pos[pending[again]] += 1
            pending = pending[again]
        return out

    def ancestor_of(self, xq, tq) -> np.ndarray:
        """First point after time ``tq`` with |x' - xq| < 1/2, or -1 (censored)."""
        xq = np.atleast_1d(np.asarray(xq, dtype=np.float64))
        tq = np.broadcast_to(np.asarray(tq, dtype=np.float64), xq.shape).copy()
        x0, x1, _, _ = self.window
        out = np.full(xq.size, -1, dtype=np.int64)
        inside = (xq - HALF_WIDTH >= x0) & (xq + HALF_WIDTH <= x1)
        if not inside.any() or self.x.size == 0:
            return out
        qi = np.flatnonzero(inside)
        base = np.floor(xq[qi] - HALF_WIDTH - x0).astype(np.int64)
        best = np.full(qi.size, -1, dtype=np.int64)
        for shift in (0, 1):
            cand = self._first_in_column(base + shift, xq[qi], tq[qi])
            better = (cand >= 0) & ((best < 0) | (self.t[np.maximum(cand, 0)]
                                                  < self.t[np.maximum(best, 0)]))
            best = np.where(better, cand, best)
        out[qi] = best
        return out

    def edges(self) -> list[tuple[tuple[float, float], tuple[float, float]]]:
        i = np.flatnonzero(self.ancestor >= 0)
        a = self.ancestor[i]
        return [((float(self.x[p]), float(self.t[p])), (float(self.x[q]), float(self.t[q])))
                for p, q in zip(i, a)]

    def path(self, x: float, t: float) -> list[int]:
        """Vertex indices visited by the path started at (x, t), until censoring."""
        out = []
        cur = int(self.ancestor_of(x, t)[0])
        while cur >= 0:
            out.append(cur)
            cur = int(self.ancestor[cur])
        return out


def build_poisson_forest(window, rng: _rng.RngStream, block: int = 4096) -> PoissonForest:
    """Forest on ``window = (x0, x1, t0, t1)``.

    Points arrive in time as a Poisson process of rate ``x1 - x0`` with
    uniform x, which is a unit-intensity process on the rectangle.
    """
    x0, x1, t0, t1 = (float(a) for a in window)
    width = x1 - x0
    if width <= 0 or t1 <= t0:
        raise ValueError("window must have positive area")
    times = []
    xs = []
    clock = t0
    while clock <= t1:
        gaps = rng.exponential(block, rate=width)
        tt = clock + np.cumsum(gaps)
        xx = x0 + width * rng.uniform(block)
        keep = tt <= t1
        times.append(tt[keep])
        xs.append(xx[keep])
        clock = float(tt[-1])
    return PoissonForest(np.concatenate(xs), np.concatenate(times), (x0, x1, t0, t1))


def forest_first_jump(forest: PoissonForest, u, v, w, t0: float):
    """First jump of the triple whose paths start at (u, t0), (v, t0), (w, t0).

    Works on arrays of triples.  Returns ``(dt, U, valid)``; ``valid`` is
    False where a tube ran out of the window before any point was found.
    """
    u, v, w = (np.atleast_1d(np.asarray(a, dtype=np.float64)) for a in (u, v, w))
    anc = np.stack([forest.ancestor_of(c, t0) for c in (u, v, w)])
    valid = (anc >= 0).all(axis=0)
    safe = np.where(anc >= 0, anc, 0)
    times = np.where(anc >= 0, forest.t[safe], np.inf)
    first = np.argmin(times, axis=0)
    cols = np.arange(u.size)
    idx = safe[first, cols]
    return forest.t[idx] - t0, forest.x[idx], valid


def forest_entrance_times(forest: PoissonForest, u, v, w, t0: float):
    """Entrance time into the absorbed set for triples traced through ``forest``.

    Paths coincide from their first shared vertex on, so the pair LM meets at
    the time of the first vertex common to both paths.  Returns
    ``(tau, valid)``; ``valid`` is False when no pair met inside the window.
    """
    u, v, w = (np.atleast_1d(np.asarray(a, dtype=np.float64)) for a in (u, v, w))
    tau = np.full(u.size, np.inf)
    for i in range(u.size):
        pl, pm, pr = (forest.path(c, t0) for c in (u[i], v[i], w[i]))
        best = np.inf
        for a, b in ((pl, pm), (pm, pr)):
            shared = set(a)
            meet = next((q for q in b if q in shared), None)
            if meet is not None:
                best = min(best, float(forest.t[meet]))
        tau[i] = best - t0
    return tau, np.isfinite(tau)
