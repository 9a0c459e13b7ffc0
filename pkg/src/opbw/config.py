"""Simulation configuration: lattice geometry, probabilities, neighbourhoods.

A SimConfig pins everything a run needs to be reproducible: dimension,
site-open probability, the (symmetric) neighbourhood offsets, box geometry,
the base seed, the intended walk length and an optional carrying-capacity
law.  Configs can be built directly, from key=value text files, or from CLI
flags.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import product

from . import rng

Offset = tuple[int, ...]


class ConfigError(ValueError):
    pass


def default_offsets(d: int) -> tuple[Offset, ...]:
    """All offsets with sup-norm at most 1, in lexicographic order (3^d of them)."""
    return tuple(sorted(product((-1, 0, 1), repeat=d)))


def two_neighbor_offsets() -> tuple[Offset, ...]:
    """The d=1 two-point neighbourhood {-1, +1} used by figure-style setups."""
    return ((-1,), (1,))


def offsets_radius(offsets) -> int:
    return max(max(abs(c) for c in u) for u in offsets)


@dataclass(frozen=True)
class CapacityLaw:
    """Distribution of the per-site carrying capacity K (positive integers).

    Represented as an explicit pmf; sampling maps a 64-bit hash through the
    cumulative thresholds, so draws are pure functions of the site key.
    """

    values: tuple[int, ...] = (1,)
    probs: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ConfigError("capacity law needs matching values/probs")
        if any(v < 1 or v != int(v) for v in self.values):
            raise ConfigError("capacities must be positive integers")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-9:
            raise ConfigError("capacity probabilities must be >= 0 and sum to 1")

    @property
    def is_trivial(self) -> bool:
        return all(v == 1 for v in self.values)

    @property
    def max_value(self) -> int:
        return max(self.values)

    def thresholds(self) -> list[int]:
        """Cumulative u64 thresholds for hash-based sampling."""
        acc = 0.0
        out = []
        for p in self.probs:
            acc += p
            out.append(rng.bernoulli_threshold(min(acc, 1.0)))
        out[-1] = rng.MASK64
        return out

    def sample(self, h: int) -> int:
        for v, t in zip(self.values, self.thresholds()):
            if h <= t:
                return v
        return self.values[-1]

    @staticmethod
    def constant(k: int = 1) -> "CapacityLaw":
        return CapacityLaw(values=(k,), probs=(1.0,))

    @staticmethod
    def uniform(lo: int, hi: int) -> "CapacityLaw":
        vals = tuple(range(lo, hi + 1))
        return CapacityLaw(values=vals, probs=tuple(1.0 / len(vals) for _ in vals))

    @staticmethod
    def parse(spec: str) -> "CapacityLaw":
        """Parse 'const:K', 'uniform:A..B' or 'pmf:v1:p1,v2:p2,...'."""
        kind, _, rest = spec.partition(":")
        if kind == "const":
            return CapacityLaw.constant(int(rest))
        if kind == "uniform":
            lo, _, hi = rest.partition("..")
            return CapacityLaw.uniform(int(lo), int(hi))
        if kind == "pmf":
            vals, probs = [], []
            for item in rest.split(","):
                v, _, p = item.partition(":")
                vals.append(int(v))
                probs.append(float(p))
            return CapacityLaw(values=tuple(vals), probs=tuple(probs))
        raise ConfigError(f"unknown capacity law {spec!r}")


def parse_offsets(spec: str, d: int) -> tuple[Offset, ...]:
    """Parse a neighbourhood spec: 'box:1', 'pm1', or '(-1),(0),(1)' style lists."""
    spec = spec.strip()
    if spec.startswith("box:"):
        r = int(spec[4:])
        return tuple(sorted(product(range(-r, r + 1), repeat=d)))
    if spec == "pm1":
        if d != 1:
            raise ConfigError("pm1 neighbourhood is d=1 only")
        return two_neighbor_offsets()
    out = []
    for part in spec.replace(" ", "").split("),("):
        part = part.strip("()")
        if not part:
            continue
        u = tuple(int(c) for c in part.split(",") if c != "")
        if len(u) != d:
            raise ConfigError(f"offset {u} has wrong dimension (expected {d})")
        out.append(u)
    if not out:
        raise ConfigError(f"could not parse neighbourhood {spec!r}")
    return tuple(sorted(set(out)))


@dataclass(frozen=True)
class SimConfig:
    d: int = 1
    p: float = 0.8
    U_offsets: tuple[Offset, ...] | None = None
    H: int = 128
    L: int | None = None
    base_seed: int = 0
    capacity_law: CapacityLaw | None = None
    walk_steps: int = 64

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError(f"d must be >= 1, got {self.d}")
        if not (0.0 < self.p <= 1.0):
            raise ConfigError(f"p must be in (0, 1], got {self.p}")
        if self.H < 1:
            raise ConfigError(f"H must be >= 1, got {self.H}")
        if self.walk_steps < 0:
            raise ConfigError("walk_steps must be >= 0")
        if self.U_offsets is None:
            object.__setattr__(self, "U_offsets", default_offsets(self.d))
        offs = tuple(tuple(u) for u in self.U_offsets)
        object.__setattr__(self, "U_offsets", offs)
        if len(set(offs)) != len(offs):
            raise ConfigError("duplicate neighbourhood offsets")
        for u in offs:
            if len(u) != self.d:
                raise ConfigError(f"offset {u} does not match d={self.d}")
            if tuple(-c for c in u) not in offs:
                raise ConfigError(f"U_offsets not symmetric: missing {tuple(-c for c in u)}")
        if self.L is not None and self.L < 1:
            raise ConfigError("L must be >= 1 when given")

    @property
    def radius(self) -> int:
        return offsets_radius(self.U_offsets)

    @property
    def capacities_enabled(self) -> bool:
        return self.capacity_law is not None and not self.capacity_law.is_trivial

    def cone_half_width(self) -> int:
        """Half-width guaranteeing an N-step walk with horizon lookahead never
        queries outside the box."""
        return (self.walk_steps + self.H) * self.radius

    def resolved_L(self) -> int:
        return self.L if self.L is not None else self.cone_half_width()

    def require_cone_sufficient(self) -> None:
        need = self.cone_half_width()
        if self.resolved_L() < need:
            raise ConfigError(
                f"L={self.resolved_L()} too small for walk_steps={self.walk_steps}, "
                f"H={self.H}: need L >= {need}"
            )

    def with_seed(self, base_seed: int) -> "SimConfig":
        return replace(self, base_seed=base_seed)


def load_config_file(path: str) -> dict:
    """Read a key=value config file ('#' starts a comment).

    Recognised keys: d, p, horizon, half_width, base_seed, steps,
    neighborhood, capacity_law.
    """
    raw: dict[str, str] = {}
    with open(path) as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"bad config line {line!r}")
            k, _, v = line.partition("=")
            raw[k.strip()] = v.strip()
    return raw


def config_from_mapping(raw: dict) -> SimConfig:
    d = int(raw.get("d", 1))
    kwargs = dict(
        d=d,
        p=float(raw.get("p", 0.8)),
        H=int(raw.get("horizon", 128)),
        base_seed=int(raw.get("base_seed", 0)),
        walk_steps=int(raw.get("steps", 64)),
    )
    if "half_width" in raw:
        kwargs["L"] = int(raw["half_width"])
    if "neighborhood" in raw:
        kwargs["U_offsets"] = parse_offsets(raw["neighborhood"], d)
    if "capacity_law" in raw:
        kwargs["capacity_law"] = CapacityLaw.parse(raw["capacity_law"])
    return SimConfig(**kwargs)
