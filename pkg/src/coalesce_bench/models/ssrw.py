"""Three independent simple symmetric random walks.

Step ``n`` (1-based) of replicate ``r`` reads counter ``n - 1`` of stream
``r``: bits 0, 1, 2 of the lane-0 word are the L, M, R increments.
"""

from __future__ import annotations

import numpy as np

from ..harness import rng as _rng
from .lattice import DiscreteTriple

_ONE = np.uint64(1)


def increments_from_words(words: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    w = np.asarray(words, dtype=np.uint64)
    i_l = (w & _ONE).astype(np.int64) * 2 - 1
    i_m = ((w >> _ONE) & _ONE).astype(np.int64) * 2 - 1
    i_r = ((w >> np.uint64(2)) & _ONE).astype(np.int64) * 2 - 1
    return i_l, i_m, i_r


def gap_increments(keys, counters) -> tuple[np.ndarray, np.ndarray]:
    """Changes of (D_LM, D_MR) for every key/counter pair (broadcast)."""
    i_l, i_m, i_r = increments_from_words(_rng.draw_u64(keys, counters, 0))
    return i_m - i_l, i_r - i_m


def ssrw_triple_step(triple: DiscreteTriple, rng: _rng.RngStream) -> DiscreteTriple:
    """Move each walk by an independent +-1 (valid up to the first collision)."""
    i_l, i_m, i_r = increments_from_words(rng.slot_u64(1))
    return DiscreteTriple(triple.pos_L + int(i_l[0]), triple.pos_M + int(i_m[0]),
                          triple.pos_R + int(i_r[0]), triple.time + 1)


def _coincident(n: int, g1: int, g2: int) -> dict:
    which = (1 if g1 == 0 else 0) + (2 if g2 == 0 else 0)
    return {"tau": np.zeros(n, dtype=np.int64), "censored": np.zeros(n, dtype=bool),
            "g1": np.full(n, g1, dtype=np.int64), "g2": np.full(n, g2, dtype=np.int64),
            "which": np.full(n, which, dtype=np.int8)}


def run_ssrw_collisions(keys, g1: int, g2: int, horizon: int, first_step: bool = False,
                        block_elems: int = 1 << 19) -> dict:
    """First time a gap of three independent walks is zero, capped at ``horizon`` steps.

    Steps are taken in blocks: each active replicate draws ``B`` increments
    at once and the first zero of the cumulative gaps is located inside the
    block.  ``B`` grows as replicates finish, so the heavy tail of the
    collision time costs few iterations.  With ``first_step`` a gap that is
    zero at time 0 does not count (only n >= 1 is searched).

    Returns ``tau``, ``censored``, ``g1``, ``g2`` (gaps at the stop) and
    ``which`` (1 = LM, 2 = MR, 3 = both, 0 = censored).
    """
    keys = np.atleast_1d(np.asarray(keys, dtype=np.uint64))
    n = keys.size
    horizon = int(horizon)
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    if (g1 == 0 or g2 == 0) and not first_step:
        return _coincident(n, g1, g2)
    tau = np.full(n, horizon, dtype=np.int64)
    censored = np.ones(n, dtype=bool)
    out1 = np.full(n, g1, dtype=np.int64)
    out2 = np.full(n, g2, dtype=np.int64)
    which = np.zeros(n, dtype=np.int8)

    idx = np.arange(n)
    ak = keys
    a1 = np.full(n, g1, dtype=np.int64)
    a2 = np.full(n, g2, dtype=np.int64)
    k = 0
    while idx.size and k < horizon:
        b = int(min(max(block_elems // idx.size, 16), horizon - k))
        ctr = np.arange(k, k + b, dtype=np.uint64)
        d1, d2 = gap_increments(ak[:, None], ctr[None, :])
        c1 = a1[:, None] + np.cumsum(d1, axis=1)
        c2 = a2[:, None] + np.cumsum(d2, axis=1)
        z1 = c1 == 0
        z2 = c2 == 0
        zero = z1 | z2
        hit = zero.any(axis=1)
        if hit.any():
            rows = np.flatnonzero(hit)
            first = zero[rows].argmax(axis=1)
            di = idx[rows]
            tau[di] = k + first + 1
            censored[di] = False
            out1[di] = c1[rows, first]
            out2[di] = c2[rows, first]
            which[di] = z1[rows, first].astype(np.int8) + 2 * z2[rows, first].astype(np.int8)
        keep = ~hit
        idx, ak = idx[keep], ak[keep]
        a1, a2 = c1[keep, -1], c2[keep, -1]
        k += b
    out1[idx] = a1
    out2[idx] = a2
    return {"tau": tau, "censored": censored, "g1": out1, "g2": out2, "which": which}
