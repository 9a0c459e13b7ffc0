"""Percolation structure on a fixed environment.

The central object is the field ell(x, n): length of the longest directed
open path from (x, n), saturated at the remaining horizon H - n.  The
backbone indicator xi is its saturation event; within the trusted part of
the box it approximates "connected to infinity" with an exponentially
small false-positive rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .config import SimConfig
from .env import Environment, QueryError, SpaceTimePoint, point
from .stats_util import wilson_interval


@dataclass
class ContactState:
    """Occupied set of one time layer (configurations identified with sets)."""

    n: int
    occupied: set[tuple[int, ...]]


@dataclass
class BackboneField:
    """ell (int32, -1 at closed sites, capped at H-n) and xi = [ell == H-n]."""

    ell: np.ndarray
    xi: np.ndarray
    horizon_slack: int
    config: SimConfig

    @property
    def L(self) -> int:
        return (self.ell.shape[1] - 1) // 2

    @property
    def H(self) -> int:
        return self.ell.shape[0] - 1

    def _index(self, pt: SpaceTimePoint):
        if not (0 <= pt.n <= self.H) or any(abs(c) > self.L for c in pt.x):
            raise QueryError(f"point {pt} outside box (L={self.L}, H={self.H})")
        return (pt.n,) + tuple(c + self.L for c in pt.x)

    def ell_at(self, pt: SpaceTimePoint) -> int:
        return int(self.ell[self._index(pt)])

    def xi_at(self, pt: SpaceTimePoint) -> bool:
        return bool(self.xi[self._index(pt)])


def _shifted_max(layer: np.ndarray, offsets, fill: int) -> np.ndarray:
    """max over u of layer shifted by -u, out-of-box treated as `fill`."""
    out = np.full(layer.shape, fill, dtype=layer.dtype)
    d = layer.ndim
    for u in offsets:
        src = []
        dst = []
        for axis in range(d):
            shift = u[axis]
            size = layer.shape[axis]
            if shift >= 0:
                src.append(slice(shift, size))
                dst.append(slice(0, size - shift))
            else:
                src.append(slice(0, size + shift))
                dst.append(slice(-shift, size))
        view = out[tuple(dst)]
        np.maximum(view, layer[tuple(src)], out=view)
    return out


def compute_backbone(env: Environment, horizon_slack: int = 0) -> BackboneField:
    """Single backward sweep n = H..0 computing ell and xi on the whole box."""
    cfg = env.config
    H = env.H
    ell = np.empty(env.omega_bits.shape, dtype=np.int32)
    ell[H] = np.where(env.omega_bits[H] == 1, 0, -1)
    for n in range(H - 1, -1, -1):
        best = _shifted_max(ell[n + 1], cfg.U_offsets, -1)
        val = np.minimum(1 + np.maximum(best, -1), H - n)
        ell[n] = np.where(env.omega_bits[n] == 1, val, -1)
    depth = (H - np.arange(H + 1)).reshape((-1,) + (1,) * cfg.d)
    xi = (ell == depth).astype(np.uint8)
    return BackboneField(ell=ell, xi=xi, horizon_slack=horizon_slack, config=cfg)


def contact_step(state: ContactState, env: Environment) -> ContactState:
    """One forward step: x occupied at n+1 iff open and some occupied y has
    x in y's neighbourhood (the symmetric offsets make this the same set)."""
    n1 = state.n + 1
    if n1 > env.H:
        raise QueryError(f"layer {n1} beyond horizon H={env.H}")
    L = env.L
    offsets = env.config.U_offsets
    nxt: set[tuple[int, ...]] = set()
    for y in state.occupied:
        for u in offsets:
            x = tuple(c + du for c, du in zip(y, u))
            if any(abs(c) > L for c in x):
                continue
            if env.omega_bits[(n1,) + tuple(c + L for c in x)]:
                nxt.add(x)
    return ContactState(n=n1, occupied=nxt)


def survival_time(env: Environment, A: set, cap: int) -> int | None:
    """First n with empty state, or None meaning "survived to cap".

    Uses the starting convention that layer-0 openness is overridden by the
    indicator of A (membership in A is what counts at n = 0).
    """
    if not A:
        raise ValueError("A must be non-empty")
    if cap > env.H + 1:
        raise ValueError(f"cap={cap} exceeds simulated horizon H={env.H}")
    occupied = {tuple(x) if not isinstance(x, tuple) else x for x in A}
    occupied = {(x,) if isinstance(x, int) else x for x in occupied}
    state = ContactState(n=0, occupied=occupied)
    n = 0
    while state.occupied:
        n += 1
        if n >= cap:
            return None
        state = contact_step(state, env)
    return state.n


def reachable(env: Environment, frm: SpaceTimePoint, to: SpaceTimePoint) -> bool:
    """BFS for a directed open path; all path sites, including the start,
    must be open."""
    if frm.n > to.n:
        raise ValueError("reachable requires frm.n <= to.n")
    from .env import omega as omega_at

    if not omega_at(env, frm):
        return False
    frontier = {frm.x}
    for n in range(frm.n, to.n):
        nxt = set()
        L = env.L
        for y in frontier:
            for u in env.config.U_offsets:
                x = tuple(c + du for c, du in zip(y, u))
                if any(abs(c) > L for c in x):
                    continue
                if env.omega_bits[(n + 1,) + tuple(c + L for c in x)]:
                    nxt.add(x)
        frontier = nxt
        if not frontier:
            return False
    return to.x in frontier


class StatisticalError(RuntimeError):
    pass


def _lattice_survival(seed: int, cfg: SimConfig, cap: int) -> int | None:
    """Survival time of the single-site cluster on the unbounded lattice,
    openness read from counters (no box storage); d = 1 runs the compiled
    row-buffer version of the same recursion."""
    if cfg.d == 1 and cfg.p < 1.0:
        import numpy as _np
        from . import kernels
        thr = rng.bernoulli_threshold(cfg.p)
        offs = _np.array([u[0] for u in cfg.U_offsets], dtype=_np.int64)
        t = int(kernels.forward_height_1d(_np.uint64(seed), _np.uint64(thr), 0,
                                          cap, offs, cfg.radius))
        return None if t >= cap else t
    return _lattice_survival_py(seed, cfg, cap)


def _lattice_survival_py(seed: int, cfg: SimConfig, cap: int) -> int | None:
    thr = rng.bernoulli_threshold(cfg.p)
    always = cfg.p >= 1.0
    occupied = {(0,) * cfg.d}
    for n in range(1, cap + 1):
        if n >= cap and occupied:
            return None
        nxt = set()
        candidates = set()
        for y in occupied:
            for u in cfg.U_offsets:
                candidates.add(tuple(c + du for c, du in zip(y, u)))
        for x in candidates:
            if always or rng.site_key(seed, rng.STREAM_OMEGA, n, x) < thr:
                nxt.add(x)
        occupied = nxt
        if not occupied:
            return n
    return None


def height_tail(
    config: SimConfig,
    samples: int,
    cap: int | None = None,
    fit_range: tuple[int, int] = (5, 40),
    min_finite: int = 50,
):
    """Monte Carlo tail of the finite-cluster height over fresh environments.

    Returns (rows, fit) where rows are (n, count, frequency, ci_lo, ci_hi)
    for P(n <= tau < cap) and fit is (rate, intercept, r2, n_range) from a
    least-squares line on the log frequencies.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    cap = cap if cap is not None else config.H
    times = []
    for rep in range(samples):
        seed = rng.replica_seed(config.base_seed, rep)
        t = _lattice_survival(seed, config, cap)
        if t is not None:
            times.append(t)
    times = np.array(times, dtype=np.int64)
    rows = []
    for n in range(0, cap + 1):
        count = int((times >= n).sum())
        freq = count / samples
        lo, hi = wilson_interval(count, samples)
        rows.append((n, count, freq, lo, hi))
    if len(times) < min_finite:
        raise StatisticalError(
            f"only {len(times)} finite survival times out of {samples}; "
            "increase samples or lower p"
        )
    lo_n, hi_n = fit_range
    xs, ys = [], []
    for n in range(lo_n, min(hi_n, cap) + 1):
        count = int((times >= n).sum())
        if count >= 5:
            xs.append(n)
            ys.append(np.log(count / samples))
    if len(xs) < 3:
        raise StatisticalError("too few populated tail points to fit")
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = np.polyval([slope, intercept], xs)
    ss_res = float(np.sum((np.array(ys) - pred) ** 2))
    ss_tot = float(np.sum((np.array(ys) - np.mean(ys)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    fit = {"rate": -float(slope), "intercept": float(intercept), "r2": r2,
           "n_range": (xs[0], xs[-1])}
    return rows, fit


def estimate_pc(config: SimConfig, p_grid, samples: int):
    """Survival-to-horizon frequency per p with Wilson intervals.

    A shared seed stream couples the grid points monotonically (a site open
    at p is open at any p' > p), so the frequencies are non-decreasing."""
    rows = []
    for p in p_grid:
        if not (0 < p <= 1):
            raise ValueError(f"grid p={p} outside (0,1]")
        cfg_p = SimConfig(
            d=config.d, p=p, U_offsets=config.U_offsets, H=config.H,
            L=config.L, base_seed=config.base_seed, walk_steps=0,
        )
        surv = 0
        for rep in range(samples):
            seed = rng.replica_seed(config.base_seed, rep)
            if _lattice_survival(seed, cfg_p, config.H) is None:
                surv += 1
        freq = surv / samples
        lo, hi = wilson_interval(surv, samples)
        rows.append((p, surv, freq, lo, hi))
    return rows
