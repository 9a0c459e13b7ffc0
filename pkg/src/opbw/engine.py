"""Walk engine on adaptive spatial windows.

Experiments at realistic scale cannot afford the cone-sufficient full box,
so walks run on a window sized to the walk's diffusive range plus a margin.
Values inside a window are certified exact by the contamination mask (see
kernels.py); any probe of an uncertified site aborts the replica and the
window is widened and the replica re-run.  Because every random field is
counter-based, re-runs reproduce the same walk, so results are invariant
to the window policy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels, rng
from .config import SimConfig

SLAB_BUDGET_BYTES = 220_000_000
ATTEMPT_SALT = 0xA77E


def gap_max_for(d: int) -> int:
    """Longest dead-branch excursion the clamped field supports; leaner for
    d >= 2 where window memory is at a premium."""
    return 250 if d == 1 else 110


def overlap_for(d: int) -> int:
    return gap_max_for(d) + 30


class WindowAbort(RuntimeError):
    """Walk probed an uncertified site; retry with a wider window."""


class EnvRejected(RuntimeError):
    """Conditioning event failed for this environment attempt."""


class RejectionCapExceeded(RuntimeError):
    pass


class BranchTooLong(RuntimeError):
    pass


@dataclass
class Window:
    d: int
    r: int
    los: np.ndarray  # (d,) interior lower corner, absolute coords
    his: np.ndarray  # (d,) inclusive
    shape_p: tuple
    coords: np.ndarray  # (S, d) int64
    interior: np.ndarray  # (S,) uint8
    nbr: np.ndarray  # (nU,) int64 flat deltas
    delta_coords: np.ndarray  # (nU, d) int64

    @property
    def S(self) -> int:
        return self.coords.shape[0]

    def flat_of(self, x) -> int:
        idx = 0
        for j in range(self.d):
            c = x[j] - (self.los[j] - self.r)
            if not (0 <= c < self.shape_p[j]):
                raise WindowAbort(f"start {x} outside window")
            idx = idx * self.shape_p[j] + c
        return idx


def build_window(d: int, offsets, los, his) -> Window:
    r = max(max(abs(c) for c in u) for u in offsets)
    los = np.asarray(los, dtype=np.int64)
    his = np.asarray(his, dtype=np.int64)
    shape_p = tuple(int(h - l + 1 + 2 * r) for l, h in zip(los, his))
    axes = [np.arange(l - r, h + r + 1, dtype=np.int64) for l, h in zip(los, his)]
    grids = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([g.reshape(-1) for g in grids], axis=1)
    interior = np.ones(coords.shape[0], dtype=np.uint8)
    for j in range(d):
        interior &= (coords[:, j] >= los[j]) & (coords[:, j] <= his[j])
    strides = np.empty(d, dtype=np.int64)
    acc = 1
    for j in range(d - 1, -1, -1):
        strides[j] = acc
        acc *= shape_p[j]
    delta_coords = np.array([list(u) for u in offsets], dtype=np.int64)
    nbr = delta_coords @ strides
    return Window(d=d, r=r, los=los, his=his, shape_p=shape_p, coords=coords,
                  interior=interior.astype(np.uint8), nbr=nbr,
                  delta_coords=delta_coords)


def plan_chunks(H: int, S: int, overlap: int):
    """Bottom-up chunk cores [(lo, hi)]; slabs extend `overlap` layers below
    their core, so the memory budget counts core + overlap rows."""
    rows_budget = int(SLAB_BUDGET_BYTES // max(1, 2 * S))
    rows_core = max(overlap + 64, rows_budget - overlap)
    chunks = []
    lo = 0
    while lo <= H:
        hi = min(H, lo + rows_core - 1)
        chunks.append((lo, hi))
        lo = hi + 1
    return chunks


@dataclass
class WalkerResult:
    path: np.ndarray  # (achieved + 1, d) absolute coords of the frozen prefix
    regen_times: np.ndarray  # int64 stages with xi at the endpoint
    achieved: int
    truncated: bool


@dataclass
class RunResult:
    walkers: list[WalkerResult]
    env_seed: int
    rejections: int
    widenings: int
    H: int
    stage_cap: int


@dataclass
class EngineParams:
    d: int
    p: float
    offsets: tuple
    base_seed: int
    capacity_law: object = None

    @staticmethod
    def from_config(cfg: SimConfig) -> "EngineParams":
        return EngineParams(d=cfg.d, p=cfg.p, offsets=cfg.U_offsets,
                            base_seed=cfg.base_seed, capacity_law=cfg.capacity_law)

    @property
    def r(self) -> int:
        return max(max(abs(c) for c in u) for u in self.offsets)

    def cap_arrays(self):
        law = self.capacity_law
        if law is None or law.is_trivial:
            return False, np.array([rng.MASK64], dtype=np.uint64), np.array([1], dtype=np.int64)
        return True, np.array(law.thresholds(), dtype=np.uint64), np.array(law.values, dtype=np.int64)


def attempt_env_seed(base_seed: int, replica: int, attempt: int) -> int:
    seed = rng.replica_seed(base_seed, replica)
    if attempt == 0:
        return seed
    return rng.chain(seed, ATTEMPT_SALT, attempt)


def default_margin(r: int, H: int, d: int = 1) -> int:
    if d == 1:
        return 16 * r + 8 + min(40 * r + 24, max(8, H // 3))
    if d == 2:
        return 12 * r + 8 + min(16 * r + 16, max(8, H // 4))
    return 6 * r + 4 + min(6 * r + 6, max(6, H // 6))


def default_half_width(n_stages: int, r: int) -> int:
    sigma_guess = 0.6 * r * r
    return int(np.ceil(4.3 * np.sqrt(max(n_stages, 1) * sigma_guess)))


def _is_box3x3(win: Window) -> bool:
    return (win.d == 2 and win.r == 1 and win.nbr.shape[0] == 9)


def _sweep_collect(win: Window, env_seed, thr, all_open, H, n_hi, n_lo,
                   top_e, top_f, has_top, ell8, flags):
    if win.d == 1:
        x0 = int(win.los[0] - win.r)
        kernels.sweep_collect_1d(np.uint64(env_seed), np.uint64(thr), all_open,
                                 H, n_hi, n_lo, x0, win.r, win.nbr,
                                 top_e, top_f, has_top, ell8, flags)
    elif _is_box3x3(win):
        x0 = int(win.los[0] - win.r)
        y0 = int(win.los[1] - win.r)
        kernels.sweep_collect_d2(np.uint64(env_seed), np.uint64(thr), all_open,
                                 H, n_hi, n_lo, x0, y0, win.shape_p[1],
                                 win.interior, top_e, top_f, has_top,
                                 ell8, flags, win.coords)
    else:
        kernels.sweep_collect(np.uint64(env_seed), np.uint64(thr), all_open,
                              H, n_hi, n_lo, win.coords, win.interior, win.nbr,
                              top_e, top_f, has_top, ell8, flags)


def _sweep_skim(win: Window, env_seed, thr, all_open, H, n_lo,
                save_layers, saved_e, saved_f):
    if win.d == 1:
        x0 = int(win.los[0] - win.r)
        kernels.sweep_skim_1d(np.uint64(env_seed), np.uint64(thr), all_open,
                              H, n_lo, x0, win.r, win.nbr,
                              save_layers, saved_e, saved_f)
    elif _is_box3x3(win):
        x0 = int(win.los[0] - win.r)
        y0 = int(win.los[1] - win.r)
        kernels.sweep_skim_d2(np.uint64(env_seed), np.uint64(thr), all_open,
                              H, n_lo, x0, y0, win.shape_p[1], win.interior,
                              win.coords, save_layers, saved_e, saved_f)
    else:
        kernels.sweep_skim(np.uint64(env_seed), np.uint64(thr), all_open,
                           H, n_lo, win.coords, win.interior, win.nbr,
                           save_layers, saved_e, saved_f)


def _window_for(starts, d, r, half: int, margin: int):
    starts_a = np.asarray(starts, dtype=np.int64).reshape(len(starts), d)
    los = starts_a.min(axis=0) - (half + margin)
    his = starts_a.max(axis=0) + (half + margin)
    return los, his


def run_gamma_walks(
    params: EngineParams,
    env_seed: int,
    starts,
    salts,
    target: int,
    *,
    slack: int = 40,
    stage_cap: int | None = None,
    condition_on_starts: bool = True,
    half_width: int | None = None,
    max_widenings: int = 5,
    gap_max: int | None = None,
) -> RunResult:
    """Run local-construction walks for all (start, salt) pairs on one
    environment realisation, certified exact, widening the window on demand.

    Raises EnvRejected when conditioning fails (callers do rejection
    sampling over attempt seeds)."""
    d, r = params.d, params.r
    if gap_max is None:
        gap_max = gap_max_for(d)
    if stage_cap is None:
        stage_cap = target + gap_max + 2
    H = stage_cap + max(1, slack)
    thr = rng.bernoulli_threshold(params.p)
    all_open = params.p >= 1.0
    cap_enabled, cap_thr, cap_vals = params.cap_arrays()

    half = half_width if half_width is not None else default_half_width(stage_cap, r)
    margin = default_margin(r, H, d)

    widenings = 0
    while True:
        try:
            los, his = _window_for(starts, d, r, half, margin)
            win = build_window(d, params.offsets, los, his)
            walkers = _run_on_window(
                params, env_seed, win, starts, salts, target, stage_cap, H,
                thr, all_open, cap_enabled, cap_thr, cap_vals, condition_on_starts,
                gap_max,
            )
            return RunResult(walkers=walkers, env_seed=env_seed, rejections=0,
                             widenings=widenings, H=H, stage_cap=stage_cap)
        except WindowAbort:
            widenings += 1
            if widenings > max_widenings:
                raise
            half = int(half * 1.6) + 8
            margin = int(margin * 1.5) + 8


def _run_on_window(
    params, env_seed, win: Window, starts, salts, target, stage_cap, H,
    thr, all_open, cap_enabled, cap_thr, cap_vals, condition_on_starts,
    gap_max,
) -> list[WalkerResult]:
    S = win.S
    overlap = gap_max + 30
    chunks = plan_chunks(H, S, overlap)
    n_walk = len(starts)

    start_flats = np.array([win.flat_of(x) for x in starts], dtype=np.int64)
    paths = [np.zeros(stage_cap + 2, dtype=np.int64) for _ in range(n_walk)]
    states = [np.zeros(3, dtype=np.int64) for _ in range(n_walk)]
    regs = [np.zeros(stage_cap + 2, dtype=np.int64) for _ in range(n_walk)]
    for w in range(n_walk):
        paths[w][0] = start_flats[w]
    done = [False] * n_walk
    truncated = [False] * n_walk

    boundary_e = boundary_f = None
    boundary_layers = None
    if len(chunks) > 1:
        # one skimming sweep records the rows each slab re-sweep starts from
        boundary_layers = np.array(
            sorted({hi + 1 for (_, hi) in chunks[:-1]}, reverse=True), dtype=np.int64
        )
        boundary_e = np.empty((len(boundary_layers), S), dtype=np.uint8)
        boundary_f = np.empty((len(boundary_layers), S), dtype=np.uint8)
        _sweep_skim(win, env_seed, thr, all_open, H, int(boundary_layers.min()),
                    boundary_layers, boundary_e, boundary_f)

    dummy = np.zeros(S, dtype=np.uint8)
    for ci, (lo, hi) in enumerate(chunks):
        sweep_lo = max(0, lo - overlap)
        rows = hi - sweep_lo + 1
        ell8 = np.empty((rows, S), dtype=np.uint8)
        flags = np.empty((rows, S), dtype=np.uint8)
        if hi == H:
            _sweep_collect(win, env_seed, thr, all_open, H, hi, sweep_lo,
                           dummy, dummy, False, ell8, flags)
        else:
            bi = int(np.where(boundary_layers == hi + 1)[0][0])
            _sweep_collect(win, env_seed, thr, all_open, H, hi, sweep_lo,
                           boundary_e[bi], boundary_f[bi], True, ell8, flags)

        if ci == 0:
            row0_f = flags[0 - sweep_lo]
            for w in range(n_walk):
                f = row0_f[start_flats[w]]
                if f & 2:
                    raise WindowAbort("start site uncertified")
                if condition_on_starts and not (f & 1):
                    raise EnvRejected()

        for w in range(n_walk):
            if done[w]:
                continue
            status = kernels.gamma_advance(
                np.uint64(env_seed), np.uint64(salts[w]), H, sweep_lo, hi,
                ell8, flags, win.coords, win.nbr, win.delta_coords,
                cap_enabled, cap_thr, cap_vals,
                paths[w], states[w], regs[w],
                target, stage_cap, gap_max,
            )
            if status == kernels.ST_TARGET:
                done[w] = True
            elif status == kernels.ST_STAGE_CAP:
                done[w] = True
                truncated[w] = states[w][1] < target
            elif status == kernels.ST_NEED_SLAB:
                pass
            elif status == kernels.ST_CONTAMINATED:
                raise WindowAbort("walk probed a contaminated site")
            elif status in (kernels.ST_CLAMP, kernels.ST_GAP):
                raise BranchTooLong(
                    "dead branch exceeded the clamped field range; "
                    "p is likely too close to criticality for this engine"
                )
            else:
                raise RuntimeError(f"unexpected walk status {status}")

    out = []
    for w in range(n_walk):
        if not done[w]:
            raise RuntimeError("walker did not finish within planned chunks")
        frozen = int(states[w][1])
        nregs = int(states[w][2])
        path_coords = win.coords[paths[w][: frozen + 1]]
        out.append(WalkerResult(
            path=np.ascontiguousarray(path_coords),
            regen_times=regs[w][:nregs].copy(),
            achieved=frozen,
            truncated=truncated[w],
        ))
    return out


def run_direct_walk(
    params: EngineParams,
    env_seed: int,
    start,
    walker_id: int,
    n_steps: int,
    *,
    slack: int = 40,
    half_width: int | None = None,
    condition_on_start: bool = True,
    max_widenings: int = 5,
) -> RunResult:
    """Direct-mode walk (uniform or capacity-weighted choice among backbone
    successors), same certification rules as the gamma walks."""
    d, r = params.d, params.r
    H = n_steps + max(1, slack)
    thr = rng.bernoulli_threshold(params.p)
    all_open = params.p >= 1.0
    cap_enabled, cap_thr, cap_vals = params.cap_arrays()
    half = half_width if half_width is not None else default_half_width(n_steps, r)
    margin = default_margin(r, H, d)
    widenings = 0
    while True:
        try:
            los, his = _window_for([start], d, r, half, margin)
            win = build_window(d, params.offsets, los, his)
            overlap = overlap_for(d)
            chunks = plan_chunks(H, win.S, overlap)
            path = np.zeros(n_steps + 1, dtype=np.int64)
            path[0] = win.flat_of(start)
            state = np.zeros(1, dtype=np.int64)
            boundary_layers = None
            boundary_e = boundary_f = None
            if len(chunks) > 1:
                boundary_layers = np.array(
                    sorted({hi + 1 for (_, hi) in chunks[:-1]}, reverse=True),
                    dtype=np.int64)
                boundary_e = np.empty((len(boundary_layers), win.S), dtype=np.uint8)
                boundary_f = np.empty((len(boundary_layers), win.S), dtype=np.uint8)
                _sweep_skim(win, env_seed, thr, all_open, H, int(boundary_layers.min()),
                            boundary_layers, boundary_e, boundary_f)
            dummy = np.zeros(win.S, dtype=np.uint8)
            finished = False
            for ci, (lo, hi) in enumerate(chunks):
                sweep_lo = max(0, lo - overlap)
                rows = hi - sweep_lo + 1
                ell8 = np.empty((rows, win.S), dtype=np.uint8)
                flags = np.empty((rows, win.S), dtype=np.uint8)
                if hi == H:
                    _sweep_collect(win, env_seed, thr, all_open, H, hi, sweep_lo,
                                   dummy, dummy, False, ell8, flags)
                else:
                    bi = int(np.where(boundary_layers == hi + 1)[0][0])
                    _sweep_collect(win, env_seed, thr, all_open, H, hi, sweep_lo,
                                   boundary_e[bi], boundary_f[bi], True,
                                   ell8, flags)
                if ci == 0:
                    f = flags[0 - sweep_lo][path[0]]
                    if f & 2:
                        raise WindowAbort("start site uncertified")
                    if condition_on_start and not (f & 1):
                        raise EnvRejected()
                status = kernels.direct_advance(
                    np.uint64(env_seed), np.uint64(walker_id), H, sweep_lo, hi,
                    flags, win.coords, win.nbr, win.delta_coords,
                    cap_enabled, cap_thr, cap_vals,
                    path, state, n_steps,
                )
                if status == kernels.ST_TARGET:
                    finished = True
                    break
                if status == kernels.ST_NEED_SLAB:
                    continue
                if status == kernels.ST_CONTAMINATED:
                    raise WindowAbort("direct walk probed a contaminated site")
                if status == kernels.ST_NO_BACKBONE_NEIGHBOR:
                    raise RuntimeError("backbone invariant violated: no xi successor")
            if not finished:
                raise RuntimeError("direct walk did not finish")
            wr = WalkerResult(path=np.ascontiguousarray(win.coords[path]),
                              regen_times=np.empty(0, dtype=np.int64),
                              achieved=n_steps, truncated=False)
            return RunResult(walkers=[wr], env_seed=env_seed, rejections=0,
                             widenings=widenings, H=H, stage_cap=n_steps)
        except WindowAbort:
            widenings += 1
            if widenings > max_widenings:
                raise
            half = int(half * 1.6) + 8
            margin = int(margin * 1.5) + 8


def conditioned_run(
    params: EngineParams,
    replica: int,
    starts,
    salts,
    target: int,
    *,
    slack: int = 40,
    stage_cap: int | None = None,
    half_width: int | None = None,
    max_rejections: int = 10_000,
    gap_max: int | None = None,
) -> RunResult:
    """Rejection-sample environments until all starts sit on the backbone,
    then run the walks.  Deterministic in (base_seed, replica)."""
    rejections = 0
    prefilter_1d = params.d == 1 and params.p < 1.0
    prefilter_2d = (params.d == 2 and params.p < 1.0 and params.r == 1
                    and len(params.offsets) == 9)
    if prefilter_1d or prefilter_2d:
        thr = np.uint64(rng.bernoulli_threshold(params.p))
    if prefilter_1d:
        offs_1d = np.array([u[0] for u in params.offsets], dtype=np.int64)
    for attempt in range(max_rejections + 1):
        env_seed = attempt_env_seed(params.base_seed, replica, attempt)
        try:
            # quick exact veto: a cluster that dies within the probe depth
            # cannot put its start on the backbone
            if prefilter_1d:
                for x in starts:
                    if not kernels.forward_survival_1d(
                        np.uint64(env_seed), thr, False, int(x[0]), 48,
                        offs_1d, params.r,
                    ):
                        raise EnvRejected()
            elif prefilter_2d:
                for x in starts:
                    if not kernels.forward_survival_d2(
                        np.uint64(env_seed), thr, int(x[0]), int(x[1]), 40,
                    ):
                        raise EnvRejected()
            res = run_gamma_walks(
                params, env_seed, starts, salts, target,
                slack=slack, stage_cap=stage_cap, half_width=half_width,
                gap_max=gap_max,
            )
            return RunResult(walkers=res.walkers, env_seed=env_seed,
                             rejections=rejections, widenings=res.widenings,
                             H=res.H, stage_cap=res.stage_cap)
        except EnvRejected:
            rejections += 1
    raise RejectionCapExceeded(
        f"{rejections} rejections without an accepted environment; "
        "p may be too close to (or below) criticality for this conditioning"
    )
