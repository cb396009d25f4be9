"""Counter-based random streams.

Every random number used by the toolkit is a pure function of
``(master_seed, stream_id, counter, lane)``.  A stream is keyed by
``(master_seed, stream_id)``; the replicate index is used as the stream id,
so replicate ``r`` sees the same numbers whether it runs alone, inside a
vectorized batch, or on another worker.

The output function is two rounds of the SplitMix64 finalizer, which is a
bijection on 64-bit words:

    key(seed, id)  = mix(mix(seed ^ SALT) + id * GOLDEN)
    draw(key, c)   = mix(key ^ mix(c))

For a fixed seed, ``id -> key`` is injective (GOLDEN is odd), so distinct
stream ids never share a key.  For a fixed key, ``c -> draw`` is a bijection,
so a stream never repeats within 2**64 draws.

Lattice environments (Scheidegger signs, Howard openness) are read from
*fields*: the same construction indexed by a packed ``(t, x, lane)``
coordinate instead of a sequential counter.  A site evaluated twice returns
the same value, which is what "sampled at most once per realization" means
for a lazily materialized environment.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_SEED_SALT = 0x5851F42D4C957F2D
_FIELD_SALT = 0x2545F4914F6CDD1D
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# Sequential counters are split into lanes so a single step can draw several
# independent variates without coordinating positions.
LANES = 8

_U1 = np.uint64(_M1)
_U2 = np.uint64(_M2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 2.0 ** -53

# field coordinate packing: 32 bits of time, 29 bits of space, 3 bits of lane
_X_OFFSET = 1 << 28
_X_LIMIT = 1 << 28


def mix64_int(z: int) -> int:
    """SplitMix64 finalizer on a Python int."""
    z &= MASK64
    z ^= z >> 30
    z = (z * _M1) & MASK64
    z ^= z >> 27
    z = (z * _M2) & MASK64
    z ^= z >> 31
    return z


def mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, elementwise on a uint64 array (returns a new array)."""
    z = np.array(z, dtype=np.uint64, copy=True)
    z ^= z >> _S30
    z *= _U1
    z ^= z >> _S27
    z *= _U2
    z ^= z >> _S31
    return z


def stream_key(master_seed: int, stream_id: int) -> int:
    if not (0 <= master_seed <= MASK64 and 0 <= stream_id <= MASK64):
        raise ValueError("master_seed and stream_id must be 64-bit unsigned")
    base = mix64_int(master_seed ^ _SEED_SALT)
    return mix64_int((base + stream_id * GOLDEN) & MASK64)


def stream_keys(master_seed: int, stream_ids) -> np.ndarray:
    """Vectorized :func:`stream_key` for an array of stream ids."""
    ids = np.asarray(stream_ids, dtype=np.uint64)
    if not 0 <= master_seed <= MASK64:
        raise ValueError("master_seed must be 64-bit unsigned")
    base = np.uint64(mix64_int(master_seed ^ _SEED_SALT))
    return mix64(base + ids * np.uint64(GOLDEN))


def _counter_words(counter, lane: int) -> np.ndarray:
    c = np.asarray(counter, dtype=np.uint64)
    return mix64(c * np.uint64(LANES) + np.uint64(lane))


def draw_u64(keys, counter, lane: int = 0) -> np.ndarray:
    """Raw 64-bit words at ``counter`` (scalar or broadcastable array) for each key."""
    if not 0 <= lane < LANES:
        raise ValueError(f"lane must be in [0, {LANES})")
    keys = np.asarray(keys, dtype=np.uint64)
    return mix64(keys ^ _counter_words(counter, lane))


def to_uniform(words: np.ndarray) -> np.ndarray:
    """Top 53 bits of each word mapped to [0, 1)."""
    return (words >> _S11).astype(np.float64) * _TWO_M53


def draw_uniform(keys, counter, lane: int = 0) -> np.ndarray:
    return to_uniform(draw_u64(keys, counter, lane))


def box_muller(u1: np.ndarray, u2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two independent standard normals from two independent uniforms on [0, 1)."""
    r = np.sqrt(-2.0 * np.log1p(-u1))
    theta = 2.0 * np.pi * u2
    return r * np.cos(theta), r * np.sin(theta)


def draw_normal_pair(keys, counter, lanes=(0, 1)) -> tuple[np.ndarray, np.ndarray]:
    return box_muller(draw_uniform(keys, counter, lanes[0]),
                      draw_uniform(keys, counter, lanes[1]))


def draw_exponential(keys, counter, lane: int = 0) -> np.ndarray:
    return -np.log1p(-draw_uniform(keys, counter, lane))


def field_key(keys) -> np.ndarray:
    """Derive the environment-field key from stream keys."""
    return mix64(np.asarray(keys, dtype=np.uint64) ^ np.uint64(_FIELD_SALT))


def field_u64(fkeys, t, x, lane: int = 0) -> np.ndarray:
    """Field words at lattice coordinates ``(t, x)``; all arguments broadcast."""
    t = np.asarray(t, dtype=np.int64)
    x = np.asarray(x, dtype=np.int64)
    if x.size and (np.abs(x).max() >= _X_LIMIT):
        raise OverflowError("lattice coordinate out of field range")
    if t.size and (t.min() < 0 or t.max() >= (1 << 32)):
        raise OverflowError("time out of field range")
    packed = ((t.astype(np.uint64) << np.uint64(32))
              | ((x + _X_OFFSET).astype(np.uint64) << np.uint64(3))
              | np.uint64(lane))
    return mix64(np.asarray(fkeys, dtype=np.uint64) ^ mix64(packed))


def field_uniform(fkeys, t, x, lane: int = 0) -> np.ndarray:
    return to_uniform(field_u64(fkeys, t, x, lane))


class RngStream:
    """Sequential view of one counter-based stream.

    ``position`` counts draw slots consumed; each slot yields one 64-bit word
    (lane 0).  Batch engines bypass this class and address counters directly
    through :func:`draw_u64` with :attr:`key`.
    """

    __slots__ = ("master_seed", "stream_id", "position", "key")

    def __init__(self, master_seed: int, stream_id: int, position: int = 0):
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        self.position = int(position)
        self.key = stream_key(self.master_seed, self.stream_id)

    def __repr__(self):
        return (f"RngStream(master_seed={self.master_seed}, "
                f"stream_id={self.stream_id}, position={self.position})")

    def _take(self, n: int) -> np.ndarray:
        if n < 0:
            raise ValueError("size must be non-negative")
        ctr = np.arange(self.position, self.position + n, dtype=np.uint64)
        self.position += n
        return draw_u64(np.uint64(self.key), ctr, 0)

    def u64(self, size: int) -> np.ndarray:
        return self._take(size)

    def uniform(self, size: int | None = None):
        out = to_uniform(self._take(1 if size is None else size))
        return float(out[0]) if size is None else out

    def rademacher(self, size: int) -> np.ndarray:
        return (self._take(size) & np.uint64(1)).astype(np.int64) * 2 - 1

    def normal(self, size: int) -> np.ndarray:
        m = (size + 1) // 2
        u = to_uniform(self._take(2 * m))
        z0, z1 = box_muller(u[:m], u[m:])
        return np.concatenate([z0, z1])[:size]

    def exponential(self, size: int, rate: float = 1.0) -> np.ndarray:
        return -np.log1p(-to_uniform(self._take(size))) / rate

    def slot_u64(self, lanes: int) -> np.ndarray:
        """Words for lanes ``0..lanes-1`` at the current position, then advance by one.

        Batch engines draw step ``k`` of replicate ``r`` from counter ``k`` of
        stream ``r``; this is the same slot seen from a single stream.
        """
        words = np.array([draw_u64(np.uint64(self.key), np.uint64(self.position), lane)
                          for lane in range(lanes)], dtype=np.uint64)
        self.position += 1
        return words

    def slot_uniform(self, lanes: int) -> np.ndarray:
        return to_uniform(self.slot_u64(lanes))

    def spawn_key(self) -> int:
        """One fresh 64-bit word, used to key a derived environment."""
        return int(self._take(1)[0])


def derive_stream(master_seed: int, stream_id: int) -> RngStream:
    """Stream for replicate ``stream_id`` under ``master_seed``; pure in both."""
    return RngStream(master_seed, stream_id)
