"""Three independent Brownian motions and their gap process.

The gaps D1 = B_M - B_L and D2 = B_R - B_M are a planar Gaussian process with
per-unit-time covariance [[2, -1], [-1, 2]].  A step of length dt draws the
pair from two standard normals via the Cholesky factor:

    dD1 = sqrt(2 dt) Z1
    dD2 = sqrt(dt) (-Z1 / sqrt(2) + sqrt(3/2) Z2)

Lane layout of one step slot: 0, 1 -> Box-Muller uniforms; 2, 3 -> bridge
uniforms for D1 and D2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..harness import rng as _rng

_SQRT_HALF = math.sqrt(0.5)
_SQRT_3_2 = math.sqrt(1.5)

# exp(-40) ~ 4e-18: below this the bridge crossing is never drawn
_BRIDGE_CUTOFF = 40.0


@dataclass(frozen=True)
class ContinuousTriple:
    """Positions (u, v, w) at ``time``.

    Ordering is not enforced here: free Brownian motions may cross, and the
    Poisson-tree operations validate their own state space.
    """

    u: float
    v: float
    w: float
    time: float = 0.0

    @property
    def gaps(self) -> tuple[float, float]:
        return (self.v - self.u, self.w - self.v)


def brownian_triple_at(t: float, x: float, y: float, rng: _rng.RngStream) -> ContinuousTriple:
    """Exact sample of (B_L, B_M, B_R)(t) started from (-x, 0, y)."""
    if t < 0:
        raise ValueError("time must be non-negative")
    if t == 0:
        return ContinuousTriple(-x, 0.0, y, 0.0)
    z = rng.normal(3) * math.sqrt(t)
    return ContinuousTriple(-x + float(z[0]), float(z[1]), y + float(z[2]), t)


def gap_increment(z1, z2, dt):
    s = np.sqrt(dt)
    return s * math.sqrt(2.0) * z1, s * (-_SQRT_HALF * z1 + _SQRT_3_2 * z2)


def bridge_cross_prob(a, b, dt) -> np.ndarray:
    """P(variance-2 Brownian bridge from a to b over dt touches 0), a, b > 0.

    exp(-2ab / (sigma^2 dt)) with sigma^2 = 2.  Returns 1 where an endpoint
    is already <= 0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    expo = a * b / dt
    out = np.where((a > 0) & (b > 0), np.exp(-np.minimum(expo, 745.0)), 1.0)
    return out


def brownian_gap_step(gaps, dt: float, rng: _rng.RngStream):
    """Advance (d1, d2) by one step of length ``dt``.

    Returns ``((d1', d2'), crossed)`` where ``crossed`` flags an endpoint at
    or below zero or a bridge zero-crossing of either gap.  The two bridges
    are treated as independent over the step.
    """
    d1, d2 = gaps
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = rng.slot_uniform(4)
    z1, z2 = _rng.box_muller(u[0:1], u[1:2])
    inc1, inc2 = gap_increment(z1, z2, dt)
    e1 = float(d1 + inc1[0])
    e2 = float(d2 + inc2[0])
    crossed = e1 <= 0 or e2 <= 0
    if not crossed:
        p1 = float(bridge_cross_prob(d1, e1, dt))
        p2 = float(bridge_cross_prob(d2, e2, dt))
        crossed = bool(u[2] < p1 or u[3] < p2)
    return (e1, e2), crossed


def run_gap_collisions(keys, x: float, y: float, dt: float, horizon: float,
                       adaptive: bool = True, safety: float = 8.0) -> dict:
    """Simulate the gap process of many replicates until collision or ``horizon``.

    Replicate ``r`` takes its ``k``-th step from counter ``k`` of stream
    ``keys[r]``, with the lane layout of :func:`brownian_gap_step`.

    With ``adaptive`` the step is ``max(dt, m**2 / (2 safety**2))`` where
    ``m`` is the smaller gap: far from the boundary the chance of touching
    zero within a step is at most 2 * Phi(-safety) (about 1e-15 for the
    default), so only steps near the boundary are resolved at ``dt``.  The
    bridge test uses the exact per-gap crossing law for whatever step length
    is taken.

    Returns per-replicate arrays: ``tau`` (collision time, or ``horizon``),
    ``censored``, ``g1``/``g2`` (gaps at the stop, zero for a gap that hit)
    and ``which`` (1 = LM, 2 = MR, 3 = both, 0 = censored).
    """
    if dt <= 0 or horizon <= 0:
        raise ValueError("dt and horizon must be positive")
    if x <= 0 or y <= 0:
        raise ValueError("initial gaps must be positive")
    keys = np.atleast_1d(np.asarray(keys, dtype=np.uint64))
    n = keys.size
    tau = np.empty(n)
    censored = np.zeros(n, dtype=bool)
    g1_out = np.empty(n)
    g2_out = np.empty(n)
    which = np.zeros(n, dtype=np.int8)

    idx = np.arange(n)
    ak = keys
    a1 = np.full(n, float(x))
    a2 = np.full(n, float(y))
    at = np.zeros(n)
    coarse = 1.0 / (2.0 * safety * safety)
    k = 0
    while idx.size:
        remaining = horizon - at
        if adaptive:
            step = np.maximum(dt, np.minimum(a1, a2) ** 2 * coarse)
            step = np.minimum(step, remaining)
        else:
            step = np.minimum(dt, remaining)
        ctr = np.uint64(k)
        z1, z2 = _rng.box_muller(_rng.draw_uniform(ak, ctr, 0), _rng.draw_uniform(ak, ctr, 1))
        inc1, inc2 = gap_increment(z1, z2, step)
        e1 = a1 + inc1
        e2 = a2 + inc2
        hit1 = e1 <= 0
        hit2 = e2 <= 0
        for lane, a, e, hit in ((2, a1, e1, hit1), (3, a2, e2, hit2)):
            expo = a * e / step
            need = np.flatnonzero(~hit & (expo < _BRIDGE_CUTOFF))
            if need.size:
                u = _rng.draw_uniform(ak[need], ctr, lane)
                hit[need] = u < np.exp(-expo[need])
        at = at + step
        crossed = hit1 | hit2
        timed_out = ~crossed & (at >= horizon)
        done = crossed | timed_out
        if done.any():
            di = idx[done]
            tau[di] = np.where(crossed[done], at[done], horizon)
            censored[di] = timed_out[done]
            g1_out[di] = np.where(hit1[done], 0.0, e1[done])
            g2_out[di] = np.where(hit2[done], 0.0, e2[done])
            which[di] = hit1[done].astype(np.int8) + 2 * hit2[done].astype(np.int8)
            keep = ~done
            idx, ak, a1, a2, at = idx[keep], ak[keep], e1[keep], e2[keep], at[keep]
        else:
            a1, a2 = e1, e2
        k += 1
    return {"tau": tau, "censored": censored, "g1": g1_out, "g2": g2_out, "which": which}
