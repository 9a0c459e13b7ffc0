"""Single-walk machinery: the direct walk on the backbone, the
permutation-driven local construction, their coupling, regeneration times
and the exploration-schedule diagnostic.

Two implementations coexist deliberately.  The functions here are the plain
reference path, working on a full-box Environment/BackboneField (and on
hand-built fixtures); experiments use the windowed numba engine
(engine.py), which is tested step-for-step equal to this reference.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import engine, rng
from .config import SimConfig
from .env import Environment, QueryError, SpaceTimePoint, neighborhood, permutation, point
from .perc import BackboneField, compute_backbone


class TruncationWarning(UserWarning):
    pass


@dataclass
class WalkPath:
    start: SpaceTimePoint
    positions: np.ndarray  # (n+1, d) int64, positions[k] = X_k
    rng_stream: int  # permutation salt (gamma mode) or walker id (direct mode)

    def __len__(self) -> int:
        return self.positions.shape[0] - 1


@dataclass
class RegenerationRecord:
    """Times T_0 = 0 < T_1 < ..., their increments and displacements."""

    times: np.ndarray  # (J+1,) int64 including T_0 = 0
    taus: np.ndarray  # (J,) int64
    Ys: np.ndarray  # (J, d) int64
    tilde_positions: np.ndarray  # (J+1, d) positions at the times

    @property
    def count(self) -> int:
        return len(self.taus)


def build_record(positions: np.ndarray, regen_times: np.ndarray, radius: int) -> RegenerationRecord:
    times = np.concatenate(([0], np.asarray(regen_times, dtype=np.int64)))
    tilde = positions[times]
    taus = np.diff(times)
    Ys = np.diff(tilde, axis=0)
    if len(taus) and np.abs(Ys).max() > radius * taus.max():
        for tau, y in zip(taus, Ys):
            if np.abs(y).max() > radius * tau:
                raise AssertionError(f"increment {y} exceeds radius bound for tau={tau}")
    return RegenerationRecord(times=times, taus=taus, Ys=Ys, tilde_positions=tilde)


def default_perm_fn(env: Environment):
    def perm_fn(pt: SpaceTimePoint, salt: int):
        return permutation(env, pt, walker=salt)
    return perm_fn


def _choose_next(bb: BackboneField, succ_ordered, t: int):
    """First point of the permutation whose ell is maximal at truncation t,
    i.e. ell(z) >= min(t, max ell over the neighbourhood)."""
    ls = [bb.ell_at(q) for q in succ_ordered]
    want = min(t, max(ls))
    for q, l in zip(succ_ordered, ls):
        if l >= want:
            return q
    raise AssertionError("unreachable: maximum is always attained")


def gamma_from_definition(
    env: Environment, bb: BackboneField, start: SpaceTimePoint, k: int,
    salt: int = 0, perm_fn=None,
) -> list[SpaceTimePoint]:
    """Build the length-k locally-constructed path directly from its
    definition: step j+1 picks the permutation-first element among the
    neighbours maximising the depth-(k-j-2) truncated longest-path length."""
    perm_fn = perm_fn or default_perm_fn(env)
    path = [start]
    for j in range(k):
        succ = perm_fn(path[j], salt)
        t = k - j - 2
        path.append(succ[0] if t < 0 else _choose_next(bb, succ, t))
    return path


@dataclass
class GammaState:
    """Incrementally maintained construction: the path at the current depth
    plus the deepest position already fixed on the backbone."""

    k: int
    path: list[SpaceTimePoint]
    frozen: int  # deepest position with xi = 1 (prefix is final)
    salt: int
    regen_times: list[int] = field(default_factory=list)
    endpoint_open: bool = True  # whether omega is 1 at the current endpoint


def gamma_init(env: Environment, bb: BackboneField, start: SpaceTimePoint, salt: int = 0) -> GammaState:
    if not bb.xi_at(start):
        raise ValueError(f"start {start} is not on the backbone")
    return GammaState(k=0, path=[start], frozen=0, salt=salt)


def gamma_extend(
    state: GammaState, env: Environment, bb: BackboneField, perm_fn=None
) -> GammaState:
    """The construction at depth k+1.

    The prefix up to the deepest on-backbone position never changes (an open
    path into the backbone lies on it), so only the suffix is recomputed;
    the result agrees with gamma_from_definition at every depth."""
    perm_fn = perm_fn or default_perm_fn(env)
    new_k = state.k + 1
    path = list(state.path[: state.frozen + 1])
    frozen = state.frozen
    regs = list(state.regen_times)
    for i in range(frozen + 1, new_k + 1):
        succ = perm_fn(path[i - 1], state.salt)
        t = new_k - i - 1
        nxt = succ[0] if t < 0 else _choose_next(bb, succ, t)
        path.append(nxt)
        if bb.xi_at(nxt):
            frozen = i
    if frozen == new_k:
        regs.append(new_k)
    endpoint_open = bb.ell_at(path[-1]) >= 0
    return GammaState(k=new_k, path=path, frozen=frozen, salt=state.salt,
                      regen_times=regs, endpoint_open=endpoint_open)


def coupled_walk(
    env: Environment,
    bb: BackboneField,
    start: SpaceTimePoint,
    N: int,
    salt: int = 0,
    perm_fn=None,
) -> tuple[WalkPath, RegenerationRecord]:
    """Run the local construction until the walk is pinned down for N steps.

    Stages continue past N until the next regeneration fixes the prefix; a
    horizon too short to do so yields a TruncationWarning and the achieved
    prefix."""
    stage_cap = env.H - max(bb.horizon_slack, 0) - 1
    state = gamma_init(env, bb, start, salt)
    while state.frozen < N and state.k < stage_cap:
        state = gamma_extend(state, env, bb, perm_fn)
    if state.frozen < N:
        warnings.warn(
            f"horizon exhausted: walk fixed only {state.frozen} of {N} steps",
            TruncationWarning,
        )
    achieved = state.frozen
    positions = np.array([pt.x for pt in state.path[: achieved + 1]], dtype=np.int64)
    record = build_record(positions, np.array(state.regen_times, dtype=np.int64),
                          env.config.radius)
    path = WalkPath(start=start, positions=positions, rng_stream=salt)
    return path, record


class WalkRng:
    """Counter-based stream for the direct walk: one draw per (walker, step)."""

    def __init__(self, seed: int, walker_id: int = 0):
        self.seed = seed
        self.walker_id = walker_id

    def draw(self, step: int) -> int:
        return rng.chain(self.seed, rng.STREAM_WALK, self.walker_id, step)


def direct_step(
    bb: BackboneField, env: Environment, x: tuple, n: int, walk_rng: WalkRng
):
    """One step of the direct walk: uniform over backbone successors, or
    proportional to the capacities when the environment carries them."""
    pt = point(x, n)
    if not bb.xi_at(pt):
        raise ValueError(f"({x}, {n}) is not on the backbone")
    succ = neighborhood(pt, env.config)
    on = [q for q in succ if bb.xi_at(q)]
    if not on:
        raise AssertionError("backbone invariant violated: no xi successor")
    key = walk_rng.draw(n)
    if env.config.capacities_enabled:
        from .env import capacity
        weights = [capacity(env, q) for q in on]
        total = sum(weights)
        v = key % total
        acc = 0
        for q, w in zip(on, weights):
            acc += w
            if v < acc:
                return q.x
    return on[key % len(on)].x


def direct_walk(
    env: Environment, bb: BackboneField, start: SpaceTimePoint, N: int,
    walker_id: int = 0,
) -> WalkPath:
    rng_ = WalkRng(env.seed, walker_id)
    xs = [start.x]
    for n in range(N):
        xs.append(direct_step(bb, env, xs[-1], n, rng_))
    return WalkPath(start=start, positions=np.array(xs, dtype=np.int64),
                    rng_stream=walker_id)


def sample_conditioned_start(
    config: SimConfig, replica_id: int, max_rejections: int = 10_000,
    horizon_slack: int = 0,
) -> tuple[Environment, BackboneField, int]:
    """Rejection-sample full-box environments until the origin is on the
    backbone; returns the accepted pair plus the number of rejections.

    The attempt seeds match the window engine's, so both samplers accept the
    same environments for the same (base_seed, replica_id)."""
    from .env import generate_environment_seeded
    from .perc import StatisticalError

    config.require_cone_sufficient()
    origin = point((0,) * config.d, 0)
    for attempt in range(max_rejections + 1):
        seed = engine.attempt_env_seed(config.base_seed, replica_id, attempt)
        env = generate_environment_seeded(config, seed)
        bb = compute_backbone(env, horizon_slack=horizon_slack)
        if bb.xi_at(origin):
            return env, bb, attempt
    raise StatisticalError(
        f"no accepted environment in {max_rejections} attempts; "
        "increase p or reduce the conditioning demand"
    )


def exploration_schedule(
    env: Environment, bb: BackboneField, start: SpaceTimePoint, maxT: int,
    salt: int = 0, perm_fn=None,
):
    """Restart bookkeeping for locating the first regeneration time.

    Checks the endpoint only at the scheduled times sigma_0 = 1,
    sigma_{j+1} = sigma_j + ell(endpoint) + 2 on failures; returns the list
    of (sigma_j, restarted) pairs, the restart count and T_1."""
    state = gamma_init(env, bb, start, salt)
    schedule = []
    sigma = 1
    restarts = 0
    while sigma <= maxT:
        while state.k < sigma:
            state = gamma_extend(state, env, bb, perm_fn)
        endpoint = state.path[sigma]
        if bb.xi_at(endpoint):
            schedule.append((sigma, False))
            return schedule, restarts, sigma
        ell = bb.ell_at(endpoint)
        if ell >= env.H - endpoint.n:
            raise QueryError("dead-branch length saturated at the horizon; "
                             "increase H or the slack")
        schedule.append((sigma, True))
        restarts += 1
        sigma = sigma + ell + 2
    return schedule, restarts, None


def engine_single_walk(
    config: SimConfig, replica: int, N: int, *, slack: int = 40,
    salt: int = 0, stage_cap: int | None = None,
) -> tuple[WalkPath, RegenerationRecord, engine.RunResult]:
    """Fast path: conditioned single walk on an adaptive window."""
    params = engine.EngineParams.from_config(config)
    res = engine.conditioned_run(params, replica, [(0,) * config.d], [salt], N,
                                 slack=slack, stage_cap=stage_cap)
    w = res.walkers[0]
    if w.truncated:
        warnings.warn(
            f"horizon exhausted: walk fixed only {w.achieved} of {N} steps",
            TruncationWarning,
        )
    record = build_record(w.path, w.regen_times, config.radius)
    path = WalkPath(start=point((0,) * config.d, 0), positions=w.path, rng_stream=salt)
    return path, record, res
