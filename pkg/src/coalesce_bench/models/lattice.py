"""Coalescing lattice dynamics: Scheidegger walks and Howard's drainage network.

Both models are driven by environment fields (see ``harness.rng``): the sign
at a Scheidegger site and the openness / tie-breaker at a Howard site are
pure functions of the site, so every path in one realization reads the same
values and coalesced paths can never separate.

All advance functions are vectorized: ``x`` holds positions of any number of
paths, and ``rows`` maps each entry to its replicate (its environment).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..harness import rng as _rng

_LANE_SIGN = 0
_LANE_OPEN = 1
_LANE_TIE = 2


@dataclass(frozen=True)
class Site:
    x: int
    t: int

    @property
    def even(self) -> bool:
        return (self.x + self.t) % 2 == 0


@dataclass(frozen=True)
class GapPair:
    g1: float
    g2: float

    @property
    def in_S0(self) -> bool:
        return self.g1 * self.g2 == 0

    @property
    def product(self):
        return self.g1 * self.g2


@dataclass(frozen=True)
class DiscreteTriple:
    pos_L: int
    pos_M: int
    pos_R: int
    time: int = 0

    def __post_init__(self):
        if not self.pos_L <= self.pos_M <= self.pos_R:
            raise ValueError(f"triple out of order: {self.positions}")

    @property
    def positions(self) -> tuple[int, int, int]:
        return (self.pos_L, self.pos_M, self.pos_R)

    @property
    def gaps(self) -> GapPair:
        return GapPair(self.pos_M - self.pos_L, self.pos_R - self.pos_M)


class _FieldEnv:
    def __init__(self, keys):
        self.keys = np.atleast_1d(np.asarray(keys, dtype=np.uint64))
        self.fkeys = _rng.field_key(self.keys)

    @classmethod
    def from_stream(cls, stream, *args, **kwargs):
        """Environment for the single realization keyed by ``stream``."""
        return cls(np.uint64(stream.key), *args, **kwargs)

    @classmethod
    def from_seed(cls, master_seed: int, stream_ids, *args, **kwargs):
        return cls(_rng.stream_keys(master_seed, stream_ids), *args, **kwargs)

    def __len__(self):
        return self.keys.size

    def _fk(self, rows):
        return self.fkeys[np.asarray(rows, dtype=np.intp)]


class ScheideggerEnv(_FieldEnv):
    """Rademacher signs b_(x,t) on even sites, one field per replicate."""

    def signs(self, t, x, rows) -> np.ndarray:
        words = _rng.field_u64(self._fk(rows), t, x, _LANE_SIGN)
        return (words & np.uint64(1)).astype(np.int64) * 2 - 1


class HowardEnv(_FieldEnv):
    """Bernoulli(p) openness B_(x,t) and Rademacher tie-breakers U_(x,t)."""

    def __init__(self, keys, p: float):
        if not 0.0 < p < 1.0:
            raise ValueError(f"open probability must lie in (0, 1), got {p}")
        super().__init__(keys)
        self.p = float(p)

    def is_open(self, t, x, rows) -> np.ndarray:
        return _rng.field_uniform(self._fk(rows), t, x, _LANE_OPEN) < self.p

    def tie(self, t, x, rows) -> np.ndarray:
        words = _rng.field_u64(self._fk(rows), t, x, _LANE_TIE)
        return (words & np.uint64(1)).astype(np.int64) * 2 - 1


def _flat_rows(x: np.ndarray, rows, n_env: int) -> np.ndarray:
    if rows is not None:
        return np.broadcast_to(np.asarray(rows, dtype=np.intp), x.shape).ravel()
    if x.ndim == 0 or x.shape[0] != n_env:
        if n_env == 1:
            return np.zeros(x.size, dtype=np.intp)
        raise ValueError("positions must be aligned with environments on axis 0")
    idx = np.arange(n_env, dtype=np.intp).reshape((-1,) + (1,) * (x.ndim - 1))
    return np.broadcast_to(idx, x.shape).ravel()


def scheidegger_advance(env: ScheideggerEnv, t: int, x, rows=None) -> np.ndarray:
    """One Scheidegger step at time ``t`` for every position in ``x``."""
    x = np.asarray(x, dtype=np.int64)
    if np.any((x + t) % 2):
        raise ValueError("Scheidegger paths must sit on even sites (x + t even)")
    r = _flat_rows(x, rows, len(env))
    return x + env.signs(t, x.ravel(), r).reshape(x.shape)


def howard_advance(env: HowardEnv, t: int, x, rows=None) -> np.ndarray:
    """One Howard step from row ``t`` to row ``t + 1``.

    Each position moves to the nearest open site of the next row; when both
    x - k0 and x + k0 are open it follows its own tie-breaker U_(x,t).  The
    search widens one offset at a time, so a site is only evaluated when some
    path actually needs it.
    """
    x = np.asarray(x, dtype=np.int64)
    shape = x.shape
    flat = x.ravel()
    r = _flat_rows(x, rows, len(env))
    out = flat.copy()
    pending = np.flatnonzero(~env.is_open(t + 1, flat, r))
    k = 1
    while pending.size:
        xp = flat[pending]
        rp = r[pending]
        left = env.is_open(t + 1, xp - k, rp)
        right = env.is_open(t + 1, xp + k, rp)
        hit = left | right
        if hit.any():
            step = np.where(right, k, -k)
            both = left & right
            if both.any():
                step[both] = k * env.tie(t, xp[both], rp[both])
            out[pending[hit]] = xp[hit] + step[hit]
        pending = pending[~hit]
        k += 1
    return out.reshape(shape)


def howard_increments(p: float, reps: int, seed: int = 0) -> np.ndarray:
    """One Howard step from the origin in each of ``reps`` independent environments."""
    keys = _rng.stream_keys(seed, np.arange(reps, dtype=np.uint64))
    return howard_advance(HowardEnv(keys, p), 0, np.zeros(reps, dtype=np.int64))


def scheidegger_step(triple: DiscreteTriple, env: ScheideggerEnv) -> DiscreteTriple:
    x = np.array(triple.positions, dtype=np.int64)
    y = scheidegger_advance(env, triple.time, x, rows=np.zeros(3, dtype=np.intp))
    return DiscreteTriple(int(y[0]), int(y[1]), int(y[2]), triple.time + 1)


def howard_step(triple: DiscreteTriple, env: HowardEnv) -> DiscreteTriple:
    x = np.array(triple.positions, dtype=np.int64)
    y = howard_advance(env, triple.time, x, rows=np.zeros(3, dtype=np.intp))
    return DiscreteTriple(int(y[0]), int(y[1]), int(y[2]), triple.time + 1)


def make_advance(model: str, env_keys, p: float | None = None):
    """Return ``(env, advance)`` for a lattice model name."""
    if model == "scheidegger":
        env = ScheideggerEnv(env_keys)
        return env, scheidegger_advance
    if model == "howard":
        if p is None:
            raise ValueError("howard model needs an open probability p")
        env = HowardEnv(env_keys, p)
        return env, howard_advance
    raise ValueError(f"unknown lattice model {model!r}")


def check_noncrossing(path1, path2) -> bool:
    """True iff the difference of the two paths never strictly changes sign.

    Between integer times the paths are linear, so checking the breakpoints
    is enough.
    """
    a = np.asarray(path1)
    b = np.asarray(path2)
    if a.shape != b.shape:
        raise ValueError("paths must have equal length")
    d = np.sign(a - b)
    return not (np.any(d > 0) and np.any(d < 0))


def run_lattice_collisions(env, advance, starts, horizon: int, first_step: bool = False) -> dict:
    """First collision of three paths per replicate, replicate ``r`` in environment row ``r``.

    Same output layout as the SSRW engine: ``tau``, ``censored``, ``g1``,
    ``g2``, ``which``.
    """
    n = len(env)
    horizon = int(horizon)
    x, y, z = (int(s) for s in starts)
    tau = np.full(n, horizon, dtype=np.int64)
    censored = np.ones(n, dtype=bool)
    out1 = np.full(n, y - x, dtype=np.int64)
    out2 = np.full(n, z - y, dtype=np.int64)
    which = np.zeros(n, dtype=np.int8)
    if (x == y or y == z) and not first_step:
        tau[:] = 0
        censored[:] = False
        which[:] = (x == y) + 2 * (y == z)
        return {"tau": tau, "censored": censored, "g1": out1, "g2": out2, "which": which}
    idx = np.arange(n)
    pos = np.tile(np.array([x, y, z], dtype=np.int64), (n, 1))
    k = 0
    while idx.size and k < horizon:
        pos = advance(env, k, pos, rows=idx[:, None])
        k += 1
        g1 = pos[:, 1] - pos[:, 0]
        g2 = pos[:, 2] - pos[:, 1]
        hit = (g1 == 0) | (g2 == 0)
        if hit.any():
            di = idx[hit]
            tau[di] = k
            censored[di] = False
            out1[di] = g1[hit]
            out2[di] = g2[hit]
            which[di] = (g1[hit] == 0).astype(np.int8) + 2 * (g2[hit] == 0).astype(np.int8)
            keep = ~hit
            idx, pos = idx[keep], pos[keep]
            g1, g2 = g1[keep], g2[keep]
        out1[idx] = g1
        out2[idx] = g2
    return {"tau": tau, "censored": censored, "g1": out1, "g2": out2, "which": which}
