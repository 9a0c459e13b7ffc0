"""Random environment on a finite space-time box.

The Bernoulli field omega is generated by hashing (seed, x, n); the
permutation field used by the local walk construction is never stored and
is re-derived from the same counters on demand, so environments are
immutable, cheap to share and reproducible regardless of query order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import rng
from .config import ConfigError, SimConfig

MAGIC = b"OPBW"
FORMAT_VERSION = 1

# Full boxes are stored unpacked (one byte per site); cap the size so a
# mis-sized request fails loudly instead of thrashing.
MAX_BOX_SITES = 1 << 28


class QueryError(ValueError):
    """Raised for queries outside the generated box."""


class ResourceError(RuntimeError):
    """Raised when a requested box does not fit in addressable memory."""


class SpaceTimePoint(NamedTuple):
    x: tuple[int, ...]
    n: int


def point(x, n: int) -> SpaceTimePoint:
    if isinstance(x, int):
        x = (x,)
    return SpaceTimePoint(tuple(int(c) for c in x), int(n))


@dataclass
class Environment:
    config: SimConfig
    seed: int | None
    omega_bits: np.ndarray  # uint8, shape (H+1, 2L+1, ..., 2L+1)
    capacities: np.ndarray | None = None  # int32, same shape, when configured

    @property
    def L(self) -> int:
        return (self.omega_bits.shape[1] - 1) // 2

    @property
    def H(self) -> int:
        return self.omega_bits.shape[0] - 1

    def in_box(self, pt: SpaceTimePoint) -> bool:
        if not (0 <= pt.n <= self.H) or len(pt.x) != self.config.d:
            return False
        return all(abs(c) <= self.L for c in pt.x)

    def _index(self, pt: SpaceTimePoint):
        if not self.in_box(pt):
            raise QueryError(f"point {pt} outside box (L={self.L}, H={self.H})")
        return (pt.n,) + tuple(c + self.L for c in pt.x)

    def open_fraction(self) -> float:
        return float(self.omega_bits.mean())


def _box_shape(d: int, L: int, H: int) -> tuple[int, ...]:
    return (H + 1,) + (2 * L + 1,) * d


def _check_box_size(d: int, L: int, H: int) -> None:
    sites = (H + 1) * (2 * L + 1) ** d
    if sites > MAX_BOX_SITES:
        side = 2 * L + 1
        limiting = "H" if (H + 1) >= side else "L"
        raise ResourceError(
            f"box of {sites} sites exceeds limit {MAX_BOX_SITES}; "
            f"limiting dimension is {limiting} (2L+1={side}, H+1={H + 1})"
        )


def _coordinate_grids(d: int, L: int):
    axes = [np.arange(-L, L + 1, dtype=np.int64) for _ in range(d)]
    return np.meshgrid(*axes, indexing="ij")


def _layer_field(seed: int, stream: int, n: int, grids, threshold=None):
    """Hash every site of one layer; returns u64 keys or thresholded bits."""
    h = np.full(grids[0].shape, rng.chain(seed, stream, n), dtype=np.uint64)
    for g in grids:
        h = rng.mix64_np(h ^ g.astype(np.uint64))
    if threshold is None:
        return h
    return (h < np.uint64(threshold)).astype(np.uint8)


def generate_environment(config: SimConfig, replica_id: int = 0) -> Environment:
    """Generate the Bernoulli field (and capacities, if configured) for one replica.

    The realised seed is mix(base_seed, replica_id); re-generating with the
    same arguments reproduces the fields bit-exactly.
    """
    return generate_environment_seeded(config, rng.replica_seed(config.base_seed, replica_id))


def generate_environment_seeded(config: SimConfig, seed: int) -> Environment:
    """Generate the fields for an explicitly realised seed."""
    L = config.resolved_L()
    _check_box_size(config.d, L, config.H)
    grids = _coordinate_grids(config.d, L)
    shape = _box_shape(config.d, L, config.H)

    omega = np.empty(shape, dtype=np.uint8)
    if config.p >= 1.0:
        omega.fill(1)
    else:
        thr = rng.bernoulli_threshold(config.p)
        for n in range(config.H + 1):
            omega[n] = _layer_field(seed, rng.STREAM_OMEGA, n, grids, thr)

    capacities = None
    if config.capacity_law is not None and not config.capacity_law.is_trivial:
        law = config.capacity_law
        thresholds = np.array(law.thresholds(), dtype=np.uint64)
        values = np.array(law.values, dtype=np.int32)
        capacities = np.empty(shape, dtype=np.int32)
        for n in range(config.H + 1):
            keys = _layer_field(seed, rng.STREAM_CAPACITY, n, grids)
            idx = np.searchsorted(thresholds, keys, side="left")
            capacities[n] = values[np.minimum(idx, len(values) - 1)]
    return Environment(config=config, seed=seed, omega_bits=omega, capacities=capacities)


def omega(env: Environment, pt: SpaceTimePoint) -> int:
    """The stored openness bit at pt; QueryError outside the box."""
    return int(env.omega_bits[env._index(pt)])


def capacity(env: Environment, pt: SpaceTimePoint) -> int:
    if env.capacities is None:
        env._index(pt)  # bounds check
        return 1
    return int(env.capacities[env._index(pt)])


def neighborhood(pt: SpaceTimePoint, config: SimConfig) -> list[SpaceTimePoint]:
    """Successor points {(x+u, n+1)} in canonical offset order."""
    if pt.n >= config.H:
        raise QueryError(f"no successor layer above n={pt.n} (H={config.H})")
    return [
        SpaceTimePoint(tuple(c + du for c, du in zip(pt.x, u)), pt.n + 1)
        for u in config.U_offsets
    ]


def permutation(
    env: Environment, pt: SpaceTimePoint, walker: int = 0
) -> list[SpaceTimePoint]:
    """The random ordering of pt's successor points.

    Uniform over orderings for constant capacities; with capacities it is the
    successive weighted sampling without replacement, weights K(y, n+1).  The
    `walker` salt selects independent permutation fields sharing one omega.
    """
    if env.seed is None:
        raise QueryError("environment loaded without a seed cannot serve permutations")
    if pt.n >= env.H:
        raise QueryError(f"no successor layer above n={pt.n} (H={env.H})")
    env._index(pt)
    succ = neighborhood(pt, env.config)
    key = rng.site_key(env.seed, rng.STREAM_PERM, pt.n, pt.x)
    if walker:
        key = rng.mix64(key ^ walker)
    if env.config.capacities_enabled:
        weights = [capacity(env, q) for q in succ]
        order = rng.weighted_order(key, weights)
    else:
        order = rng.fisher_yates(key, len(succ))
    return [succ[i] for i in order]


def dump_environment(env: Environment, path: str) -> None:
    """Write the omega field: 16-byte header (magic, version, d, L, H), then
    row-major bit-packed sites, little-endian.  A JSON sidecar records the
    config so the environment can be fully reconstructed."""
    L, H, d = env.L, env.H, env.config.d
    header = struct.pack("<4sBBHII", MAGIC, FORMAT_VERSION, d, 0, L, H)
    packed = np.packbits(env.omega_bits.reshape(-1), bitorder="little")
    with open(path, "wb") as f:
        f.write(header)
        f.write(packed.tobytes())
    sidecar = {
        "d": d,
        "p": env.config.p,
        "L": L,
        "H": H,
        "seed": env.seed,
        "base_seed": env.config.base_seed,
        "U_offsets": [list(u) for u in env.config.U_offsets],
    }
    with open(path + ".json", "w") as f:
        json.dump(sidecar, f, indent=1)


def load_environment(path: str) -> Environment:
    with open(path, "rb") as f:
        header = f.read(16)
        magic, version, d, _, L, H = struct.unpack("<4sBBHII", header)
        if magic != MAGIC:
            raise ConfigError(f"{path}: not an environment dump (bad magic)")
        if version != FORMAT_VERSION:
            raise ConfigError(f"{path}: unsupported format version {version}")
        payload = np.frombuffer(f.read(), dtype=np.uint8)
    shape = _box_shape(d, L, H)
    nsites = int(np.prod(shape))
    bits = np.unpackbits(payload, bitorder="little")[:nsites].reshape(shape)
    seed = None
    cfg_kwargs: dict = {"d": d, "H": H, "L": L, "p": 1.0, "walk_steps": 0}
    try:
        with open(path + ".json") as f:
            side = json.load(f)
        seed = side.get("seed")
        cfg_kwargs["p"] = side.get("p", 1.0)
        cfg_kwargs["base_seed"] = side.get("base_seed", 0)
        if "U_offsets" in side:
            cfg_kwargs["U_offsets"] = tuple(tuple(u) for u in side["U_offsets"])
    except FileNotFoundError:
        pass
    config = SimConfig(**cfg_kwargs)
    return Environment(config=config, seed=seed, omega_bits=np.ascontiguousarray(bits))
