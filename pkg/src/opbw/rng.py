"""Counter-based randomness.

Every random quantity in the simulator (site openness, permutations,
capacities, walk steps) is a pure function of a 64-bit seed and integer
coordinates, obtained by chaining a splitmix64-style finalizer over the
coordinates.  This makes all fields reproducible bit-for-bit, independent
of query order, window geometry and worker scheduling.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# Stream tags keep the independent random fields on disjoint key chains.
STREAM_OMEGA = 0x51D1
STREAM_PERM = 0x52D2
STREAM_CAPACITY = 0x53D3
STREAM_WALK = 0x54D4
STREAM_REPLICA = 0x55D5


def mix64(z: int) -> int:
    """splitmix64 finalizer (python-int reference implementation)."""
    z = (z + _GAMMA) & MASK64
    z ^= z >> 30
    z = (z * _MIX1) & MASK64
    z ^= z >> 27
    z = (z * _MIX2) & MASK64
    return z ^ (z >> 31)


def chain(seed: int, *values: int) -> int:
    """Fold integer coordinates into a key: chain(s, a, b) = mix(mix(s^a)^b)."""
    h = seed & MASK64
    for v in values:
        h = mix64(h ^ (v & MASK64))
    return h


def mix64_np(z: np.ndarray) -> np.ndarray:
    """Vectorised splitmix64 finalizer over a uint64 array."""
    z = (z + np.uint64(_GAMMA)).astype(np.uint64)
    z ^= z >> np.uint64(30)
    z = (z * np.uint64(_MIX1)).astype(np.uint64)
    z ^= z >> np.uint64(27)
    z = (z * np.uint64(_MIX2)).astype(np.uint64)
    return z ^ (z >> np.uint64(31))


def replica_seed(base_seed: int, replica_id: int) -> int:
    return chain(base_seed, STREAM_REPLICA, replica_id)


def bernoulli_threshold(p: float) -> int:
    """u64 threshold t with P(hash < t) = p up to 2^-64.  p = 1 maps to all-open."""
    if p >= 1.0:
        return MASK64
    return min(MASK64, max(0, int(round(p * 2.0 ** 64))))


def uniform01(h: int) -> float:
    """Map a 64-bit hash to [0, 1) with 53-bit resolution."""
    return (h >> 11) * (2.0 ** -53)


def site_key(seed: int, stream: int, n: int, x) -> int:
    """Key for the lattice site (x, n) on the given stream.  x is a coordinate tuple."""
    h = chain(seed, stream, n)
    for c in x:
        h = mix64(h ^ (c & MASK64))
    return h


def fisher_yates(base_key: int, m: int) -> list[int]:
    """Deterministic uniform permutation of range(m) driven by the key's sub-draws."""
    order = list(range(m))
    for i in range(m - 1, 0, -1):
        j = mix64(base_key ^ (m - 1 - i)) % (i + 1)
        order[i], order[j] = order[j], order[i]
    return order


def weighted_order(base_key: int, weights: list[int]) -> list[int]:
    """Successive weighted sampling without replacement.

    Index i is listed first with probability weights[i] / sum(weights); the
    remaining positions are filled recursively from the leftover weights.
    """
    m = len(weights)
    remaining = list(range(m))
    w = list(weights)
    order = []
    for t in range(m):
        total = sum(w)
        if total <= 0:
            raise ValueError("weights must be positive")
        v = mix64(base_key ^ t) % total
        acc = 0
        for pos, idx in enumerate(remaining):
            acc += w[pos]
            if v < acc:
                order.append(idx)
                remaining.pop(pos)
                w.pop(pos)
                break
    return order
