"""Two walks on one cluster versus two walks on independent clusters.

Joint regenerations are the common points of the two individual
regeneration sequences; between them the pair of increment lists forms the
block chain whose transition kernel is compared across the two laws
(projected total variation), and whose difference process drives the
annulus-exit and d = 1 crossing diagnostics.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import engine, rng
from .config import ConfigError, SimConfig
from .env import Environment, SpaceTimePoint, point
from .perc import BackboneField
from .stats_util import wilson_interval
from .walk import RegenerationRecord, build_record, coupled_walk


@dataclass
class Block:
    """One piece between consecutive simultaneous regenerations."""

    incs: np.ndarray    # (k, d+1): walk-1 (Y, tau) rows inside the block
    incs_p: np.ndarray  # walk-2 rows
    hat: np.ndarray     # (d,) walk-1 position at the closing joint time
    hat_p: np.ndarray


@dataclass
class JointRegenRecord:
    rec: RegenerationRecord
    rec_p: RegenerationRecord
    J: np.ndarray       # (m+1,) indices into rec.times, J[0] = 0
    J_p: np.ndarray
    t_sim: np.ndarray   # (m+1,) simultaneous times, t_sim[0] = 0
    hat: np.ndarray     # (m+1, d) walk-1 positions at the joint times
    hat_p: np.ndarray
    blocks: list

    @property
    def count(self) -> int:
        return len(self.t_sim) - 1


def build_joint_record(rec: RegenerationRecord, rec_p: RegenerationRecord) -> JointRegenRecord:
    """Extract the simultaneous-regeneration skeleton from two individual
    records via the index recursion; the sorted-intersection identity is
    asserted as a consistency check."""
    times, times_p = rec.times, rec_p.times
    J = [0]
    J_p = [0]
    t_sim = [0]
    j, jp = 1, 1
    while j < len(times) and jp < len(times_p):
        t, tp = times[j], times_p[jp]
        if t == tp:
            J.append(j)
            J_p.append(jp)
            t_sim.append(int(t))
            j += 1
            jp += 1
        elif t < tp:
            j += 1
        else:
            jp += 1
    t_sim = np.array(t_sim, dtype=np.int64)
    common = np.intersect1d(times[1:], times_p[1:])
    if not np.array_equal(t_sim[1:], common):
        raise AssertionError("joint times disagree with the set intersection")
    J = np.array(J, dtype=np.int64)
    J_p = np.array(J_p, dtype=np.int64)
    hat = rec.tilde_positions[J]
    hat_p = rec_p.tilde_positions[J_p]
    blocks = []
    for m in range(1, len(t_sim)):
        sl = slice(J[m - 1], J[m])
        sl_p = slice(J_p[m - 1], J_p[m])
        incs = np.column_stack([rec.Ys[sl], rec.taus[sl]])
        incs_p = np.column_stack([rec_p.Ys[sl_p], rec_p.taus[sl_p]])
        blocks.append(Block(incs=incs, incs_p=incs_p, hat=hat[m], hat_p=hat_p[m]))
    return JointRegenRecord(rec=rec, rec_p=rec_p, J=J, J_p=J_p, t_sim=t_sim,
                            hat=hat, hat_p=hat_p, blocks=blocks)


def flatten_blocks(record: JointRegenRecord):
    """Reconstruct both (Y, tau) sequences from the blocks (round-trip)."""
    ys = np.concatenate([b.incs[:, :-1] for b in record.blocks]) if record.blocks else np.empty((0, 0))
    taus = np.concatenate([b.incs[:, -1] for b in record.blocks]) if record.blocks else np.empty(0)
    ys_p = np.concatenate([b.incs_p[:, :-1] for b in record.blocks]) if record.blocks else np.empty((0, 0))
    taus_p = np.concatenate([b.incs_p[:, -1] for b in record.blocks]) if record.blocks else np.empty(0)
    return ys, taus, ys_p, taus_p


def joint_walk(
    env: Environment, bb: BackboneField, x, x_p, N: int, salts=(0, 1),
) -> JointRegenRecord:
    """Two independent-step walks on the same realisation (full-box path).

    Callers condition on both starts being on the backbone (rejection as in
    sample_conditioned_start, extended to two sites)."""
    pt, pt_p = point(x, 0), point(x_p, 0)
    if not (bb.xi_at(pt) and bb.xi_at(pt_p)):
        raise ValueError("both starts must be on the backbone")
    _, rec = coupled_walk(env, bb, pt, N, salt=salts[0])
    _, rec_p = coupled_walk(env, bb, pt_p, N, salt=salts[1])
    return build_joint_record(rec, rec_p)


def independent_pair_walk(config: SimConfig, replica: int, x, x_p, N: int) -> JointRegenRecord:
    """As joint_walk but the second walk runs on a freshly generated
    environment, making the two renewal processes independent."""
    from .walk import sample_conditioned_start

    d = config.d
    env1, bb1, _ = sample_conditioned_start(config, 2 * replica)
    env2, bb2, _ = sample_conditioned_start(config, 2 * replica + 1)
    # translate so each walk starts on its environment's conditioned origin
    _, rec = coupled_walk(env1, bb1, point((0,) * d, 0), N, salt=0)
    _, rec_p = coupled_walk(env2, bb2, point((0,) * d, 0), N, salt=0)
    rec = _shift_record(rec, np.asarray(x, dtype=np.int64))
    rec_p = _shift_record(rec_p, np.asarray(x_p, dtype=np.int64))
    return build_joint_record(rec, rec_p)


def _shift_record(rec: RegenerationRecord, z: np.ndarray) -> RegenerationRecord:
    return RegenerationRecord(times=rec.times, taus=rec.taus, Ys=rec.Ys,
                              tilde_positions=rec.tilde_positions + z)


# ---------------------------------------------------------------------------
# engine-backed samplers


def _as_start(x, d):
    if isinstance(x, int):
        x = (x,) + (0,) * (d - 1)
    return tuple(int(c) for c in x)


def _run_pair(params, replica, x, x_p, target, independent, slack, gap_max):
    if independent:
        res1 = engine.conditioned_run(params, 2 * replica, [x], [0], target,
                                      slack=slack, gap_max=gap_max)
        res2 = engine.conditioned_run(params, 2 * replica + 1, [x_p], [0], target,
                                      slack=slack, gap_max=gap_max)
        return res1.walkers[0], res2.walkers[0], res1.rejections + res2.rejections
    res = engine.conditioned_run(params, replica, [x, x_p], [0, 1], target,
                                 slack=slack, gap_max=gap_max)
    w, w_p = res.walkers
    return w, w_p, res.rejections


def sample_joint_record(
    params: engine.EngineParams, replica: int, x, x_p, n_joint: int,
    *, independent: bool = False, slack: int = 40, init_target: int | None = None,
    gap_max: int | None = None,
) -> tuple[JointRegenRecord, int]:
    """Run a conditioned pair until at least n_joint simultaneous
    regenerations are on record; returns (record, rejections).

    The walks are deterministically extendable, so an insufficient first
    target (or a too-small dead-branch allowance) is retried larger,
    reproducing the same prefix."""
    d = params.d
    x, x_p = _as_start(x, d), _as_start(x_p, d)
    target = init_target if init_target is not None else max(8, int(3.1 * n_joint) + 16)
    while True:
        try:
            w, w_p, rejections = _run_pair(params, replica, x, x_p, target,
                                           independent, slack, gap_max)
        except engine.BranchTooLong:
            if gap_max is None:
                raise
            gap_max = None
            continue
        rec = build_record(w.path, w.regen_times, params.r)
        rec_p = build_record(w_p.path, w_p.regen_times, params.r)
        joint = build_joint_record(rec, rec_p)
        if joint.count >= n_joint or w.truncated or w_p.truncated:
            return joint, rejections
        target = int(target * 1.6) + 32


def first_joint_blocks(
    params: engine.EngineParams, x, x_p, samples: int,
    *, independent: bool, replica_base: int = 0, slack: int = 32,
):
    """Monte Carlo of the first block between simultaneous regenerations.

    Returns arrays: dY (walk-1 displacement over the block), dY_p, t_sim_1,
    J_1, J_1_p, and the total rejection count."""
    d = params.d
    dY = np.empty((samples, d), dtype=np.int64)
    dY_p = np.empty((samples, d), dtype=np.int64)
    tsim = np.empty(samples, dtype=np.int64)
    j1 = np.empty(samples, dtype=np.int64)
    j1p = np.empty(samples, dtype=np.int64)
    rejections = 0
    x, x_p = _as_start(x, d), _as_start(x_p, d)
    xa = np.array(x, dtype=np.int64)
    xpa = np.array(x_p, dtype=np.int64)
    for i in range(samples):
        target, gap = 12, 64
        while True:
            try:
                w, w_p, rej = _run_pair(params, replica_base + i, x, x_p,
                                        target, independent, slack, gap)
            except engine.BranchTooLong:
                gap = None
                continue
            common = np.intersect1d(w.regen_times, w_p.regen_times)
            bound = min(w.achieved, w_p.achieved)
            common = common[common <= bound]
            if len(common):
                break
            if w.truncated or w_p.truncated:
                raise RuntimeError("pair walk truncated before the first joint time")
            target = target * 2 + 8
        t1 = int(common[0])
        rejections += rej
        dY[i] = w.path[t1] - xa
        dY_p[i] = w_p.path[t1] - xpa
        tsim[i] = t1
        j1[i] = int(np.searchsorted(w.regen_times, t1)) + 1
        j1p[i] = int(np.searchsorted(w_p.regen_times, t1)) + 1
    return dY, dY_p, tsim, j1, j1p, rejections


# ---------------------------------------------------------------------------
# kernel total-variation comparison


def default_projection(dY, dY_p, tsim, x, x_p, tau_clip=24, y_clip=12):
    """Finite-alphabet statistic of a first block: clipped displacement sums,
    clipped joint time, and the sign of the separation change."""
    sep0 = np.abs(np.asarray(x) - np.asarray(x_p)).max()
    keys = []
    for i in range(len(tsim)):
        sep1 = np.abs((np.asarray(x) + dY[i]) - (np.asarray(x_p) + dY_p[i])).max()
        sign = int(np.sign(sep1 - sep0))
        ky = tuple(int(np.clip(c, -y_clip, y_clip)) for c in dY[i])
        ky_p = tuple(int(np.clip(c, -y_clip, y_clip)) for c in dY_p[i])
        kt = int(min(tsim[i], tau_clip))
        keys.append((ky, ky_p, kt, sign))
    return keys


def _tv_from_counts(ca: dict, cb: dict, na: int, nb: int) -> float:
    keys = set(ca) | set(cb)
    return 0.5 * sum(abs(ca.get(k, 0) / na - cb.get(k, 0) / nb) for k in keys)


def kernel_tv_estimate(
    config: SimConfig, x, x_p, samples: int,
    projection=None, n_boot: int = 200, seed_salt: int = 0x7701,
):
    """Empirical total variation between the projected first-block law on a
    shared cluster and on independent clusters.

    The raw plug-in TV is debiased by the same-law resampling noise
    (bootstrap under the pooled empirical law); the projected TV lower
    bounds the true kernel TV.  Returns a dict with tv_hat, ci, and
    bookkeeping."""
    d = config.d
    x, x_p = _as_start(x, d), _as_start(x_p, d)
    if x == x_p:
        raise ConfigError("coincident starts make the projected comparison degenerate")
    params = engine.EngineParams(d=config.d, p=config.p, offsets=config.U_offsets,
                                 base_seed=rng.chain(config.base_seed, seed_salt),
                                 capacity_law=config.capacity_law)
    params_ind = engine.EngineParams(d=config.d, p=config.p, offsets=config.U_offsets,
                                     base_seed=rng.chain(config.base_seed, seed_salt, 2),
                                     capacity_law=config.capacity_law)
    proj = projection or default_projection
    dY, dY_p, ts, _, _, _ = first_joint_blocks(params, x, x_p, samples, independent=False)
    keys_joint = proj(dY, dY_p, ts, x, x_p)
    dY, dY_p, ts, _, _, _ = first_joint_blocks(params_ind, x, x_p, samples, independent=True)
    keys_ind = proj(dY, dY_p, ts, x, x_p)

    def counts(keys):
        c: dict = {}
        for k in keys:
            c[k] = c.get(k, 0) + 1
        return c

    ca, cb = counts(keys_joint), counts(keys_ind)
    tv_raw = _tv_from_counts(ca, cb, samples, samples)

    pooled = keys_joint + keys_ind
    gen = np.random.default_rng(rng.chain(config.base_seed, seed_salt, 3) % (2 ** 63))
    null_tvs = np.empty(n_boot)
    boot_tvs = np.empty(n_boot)
    for b in range(n_boot):
        ia = gen.integers(0, len(pooled), samples)
        ib = gen.integers(0, len(pooled), samples)
        null_tvs[b] = _tv_from_counts(
            counts([pooled[i] for i in ia]), counts([pooled[i] for i in ib]),
            samples, samples)
        ja = gen.integers(0, samples, samples)
        jb = gen.integers(0, samples, samples)
        boot_tvs[b] = _tv_from_counts(
            counts([keys_joint[i] for i in ja]), counts([keys_ind[i] for i in jb]),
            samples, samples)
    # plug-in TV has a resampling-noise floor; subtract its null mean and
    # build a normal CI from the bootstrap spread (the spread, unlike the
    # bootstrap mean, is bias-free to first order)
    bias = float(null_tvs.mean())
    tv_hat = max(0.0, tv_raw - bias)
    se = float(boot_tvs.std(ddof=1))
    ci = (max(0.0, tv_hat - 1.96 * se), tv_hat + 1.96 * se)
    pvalue_vs_zero = float((null_tvs >= tv_raw).mean())
    n_bins = len(set(ca) | set(cb))
    undersampled = n_bins > samples / 20
    return {
        "tv_raw": tv_raw,
        "tv_hat": tv_hat,
        "noise_floor": bias,
        "se": se,
        "ci": ci,
        "pvalue_vs_zero": pvalue_vs_zero,
        "n_bins": n_bins,
        "undersampled": undersampled,
        "samples": samples,
    }


# ---------------------------------------------------------------------------
# annulus exits


def f_d_reference(d: int, r: float, r1: float, r2: float) -> float:
    """Exit law of a d-dimensional Brownian annulus started at radius r."""
    if not (r1 < r < r2):
        raise ValueError("need r1 < r < r2")
    if d >= 3:
        return (r1 ** (2 - d) - r ** (2 - d)) / (r1 ** (2 - d) - r2 ** (2 - d))
    if d == 2:
        return (math.log(r) - math.log(r1)) / (math.log(r2) - math.log(r1))
    return (r - r1) / (r2 - r1)


@dataclass
class AnnulusStats:
    r1: float
    r: float
    r2: float
    prob_outer_first: float
    ci: tuple
    reference: float
    n_decided: int
    n_censored: int


def _difference_series(rec: RegenerationRecord, rec_p: RegenerationRecord, sep_vec):
    """X-hat difference sequence along simultaneous regeneration times for a
    pair started sep_vec apart (walks simulated from the origin; spatial
    homogeneity supplies the offset)."""
    joint = build_joint_record(rec, rec_p)
    return joint.hat - joint.hat_p + np.asarray(sep_vec, dtype=np.int64), joint


def _annulus_outcome(wa, wb, sep_vec, r1, r2, radius):
    """None while undecided within the runs, else True for an outer exit."""
    common = np.intersect1d(wa.regen_times, wb.regen_times)
    bound = min(wa.achieved, wb.achieved)
    common = common[common <= bound]
    if len(common) == 0:
        return None
    diff = (wa.path[common] - wb.path[common] + sep_vec).astype(np.float64)
    norms = np.linalg.norm(diff, axis=1)
    hit_out = np.nonzero(norms >= r2)[0]
    hit_in = np.nonzero(norms <= r1)[0]
    t_out = hit_out[0] if len(hit_out) else None
    t_in = hit_in[0] if len(hit_in) else None
    if t_out is None and t_in is None:
        return None
    return t_in is None or (t_out is not None and t_out < t_in)


def annulus_exit_experiment(
    config: SimConfig, r1: float, r: float, r2: float, samples: int,
    *, pairs_per_env: int = 64, stage_budget: int | None = None,
    seed_salt: int = 0x7702, slack: int = 32,
) -> AnnulusStats:
    """Empirical P(outer radius r2 reached before inner radius r1) for the
    difference of two walks on independent clusters, started ||.||_2 = r
    apart, with the Brownian reference value.

    Pairs are pooled on shared environment pairs and run in two phases (a
    short pass decides typical excursions, stragglers are deterministically
    extended); the CI is computed over environment-level means so pooling
    never fakes precision."""
    d = config.d
    sep_vec = np.zeros(d, dtype=np.int64)
    sep_vec[0] = int(round(r))
    if abs(np.linalg.norm(sep_vec) - r) > 1e-9:
        raise ValueError("start separation must be representable on the axis")
    sigma_guess = 0.6 * config.radius ** 2
    if stage_budget is None:
        stage_budget = int(2.2 * (r2 - r1) ** 2 / sigma_guess) + 60 * int(r2) + 600
    phase_a = max(400, stage_budget // 8)
    params = engine.EngineParams(d=d, p=config.p, offsets=config.U_offsets,
                                 base_seed=rng.chain(config.base_seed, seed_salt),
                                 capacity_law=config.capacity_law)
    n_env_pairs = math.ceil(samples / pairs_per_env)
    env_means = []
    total_outer = total_decided = total_censored = 0
    origin = (0,) * d
    # window sized for the spread of a whole walker pool, not one walk
    half_a = int(1.45 * engine.default_half_width(phase_a, params.r)) + int(r2)
    half_b = int(1.45 * engine.default_half_width(stage_budget, params.r)) + int(r2)
    for e in range(n_env_pairs):
        salts = list(range(pairs_per_env))
        res_a = engine.conditioned_run(params, 2 * e, [origin] * pairs_per_env,
                                       salts, phase_a, slack=slack,
                                       half_width=half_a)
        res_b = engine.conditioned_run(params, 2 * e + 1, [origin] * pairs_per_env,
                                       salts, phase_a, slack=slack,
                                       half_width=half_a)
        outcomes = [_annulus_outcome(wa, wb, sep_vec, r1, r2, params.r)
                    for wa, wb in zip(res_a.walkers, res_b.walkers)]
        undecided = [i for i, o in enumerate(outcomes) if o is None]
        if undecided:
            ext_a = engine.run_gamma_walks(params, res_a.env_seed,
                                           [origin] * len(undecided),
                                           [salts[i] for i in undecided],
                                           stage_budget, slack=slack,
                                           half_width=half_b)
            ext_b = engine.run_gamma_walks(params, res_b.env_seed,
                                           [origin] * len(undecided),
                                           [salts[i] for i in undecided],
                                           stage_budget, slack=slack,
                                           half_width=half_b)
            for k, i in enumerate(undecided):
                outcomes[i] = _annulus_outcome(ext_a.walkers[k], ext_b.walkers[k],
                                               sep_vec, r1, r2, params.r)
        outer = sum(1 for o in outcomes if o is True)
        decided = sum(1 for o in outcomes if o is not None)
        total_censored += sum(1 for o in outcomes if o is None)
        if decided:
            env_means.append(outer / decided)
        total_outer += outer
        total_decided += decided
    if total_censored > 0.01 * samples:
        warnings.warn(f"{total_censored} annulus excursions censored; "
                      "increase stage_budget")
    p_hat = total_outer / total_decided if total_decided else float("nan")
    means = np.array(env_means)
    se = means.std(ddof=1) / np.sqrt(len(means)) if len(means) > 1 else float("inf")
    ci = (p_hat - 1.96 * se, p_hat + 1.96 * se)
    return AnnulusStats(r1=r1, r=r, r2=r2, prob_outer_first=p_hat, ci=ci,
                        reference=f_d_reference(d, r, r1, r2),
                        n_decided=total_decided, n_censored=total_censored)


def separation_time_experiment(
    config: SimConfig, n_values, samples: int, b1: float = 0.2, b2: float = 0.45,
    *, seed_salt: int = 0x7703,
):
    """For each n, the empirical probability that two walks on one cluster
    (started together) have not reached separation n^b1 within n^b2 joint
    regenerations."""
    if not (0 < b1 < 0.5 and 0 < b2 < 0.5):
        warnings.warn("b1, b2 outside (0, 1/2): outside the proven regime")
    params = engine.EngineParams(d=config.d, p=config.p, offsets=config.U_offsets,
                                 base_seed=rng.chain(config.base_seed, seed_salt),
                                 capacity_law=config.capacity_law)
    origin = (0,) * config.d
    rows = []
    rep = 0
    for n in n_values:
        radius = n ** b1
        budget = int(math.ceil(n ** b2))
        slow = 0
        for i in range(samples):
            joint, _ = sample_joint_record(params, rep, origin, origin, budget,
                                           init_target=int(3.2 * budget) + 16)
            rep += 1
            diff = joint.hat - joint.hat_p
            norms = np.abs(diff).max(axis=1)
            hits = np.nonzero(norms[: budget + 1] >= radius)[0]
            if len(hits) == 0:
                slow += 1
        freq = slow / samples
        lo, hi = wilson_interval(slow, samples)
        rows.append({"n": n, "radius": radius, "budget": budget,
                     "prob_not_separated": freq, "ci": (lo, hi)})
    return rows


# ---------------------------------------------------------------------------
# d = 1 diagnostics


@dataclass
class PhiTable:
    """One-joint-step conditional moments of the pair chain at pinned
    separations 0..s_max, estimated by Monte Carlo; the reflection symmetry
    of the lattice extends them to negative separations (phi1, phi2 odd,
    second moments even).  Beyond s_max the drifts are taken as 0 and the
    second moments as the independent-law variance."""

    s_max: int
    phi1: np.ndarray
    phi2: np.ndarray
    phi11: np.ndarray
    phi22: np.ndarray
    phi12: np.ndarray
    se1: np.ndarray
    n_samples: int
    sigma2_ind: float

    def _lookup(self, table, sep, far, odd):
        s = int(sep)
        sign = 1.0
        if s < 0:
            s = -s
            if odd:
                sign = -1.0
        if s > self.s_max:
            return far
        return sign * table[s]

    def phi1_at(self, sep):
        return self._lookup(self.phi1, sep, 0.0, odd=True)

    def phi2_at(self, sep):
        return self._lookup(self.phi2, sep, 0.0, odd=True)

    def phi11_at(self, sep):
        return self._lookup(self.phi11, sep, self.sigma2_ind, odd=False)

    def phi22_at(self, sep):
        return self._lookup(self.phi22, sep, self.sigma2_ind, odd=False)

    def phi12_at(self, sep):
        return self._lookup(self.phi12, sep, 0.0, odd=False)


def estimate_phi_table(
    config: SimConfig, s_max: int, samples_per_sep: int,
    *, seed_salt: int = 0x7704,
) -> PhiTable:
    if config.d != 1:
        raise ConfigError("phi tables are a d=1 diagnostic")
    m = s_max + 1
    phi1 = np.empty(m)
    phi2 = np.empty(m)
    phi11 = np.empty(m)
    phi22 = np.empty(m)
    phi12 = np.empty(m)
    se1 = np.empty(m)
    for s in range(m):
        params = engine.EngineParams(
            d=1, p=config.p, offsets=config.U_offsets,
            base_seed=rng.chain(config.base_seed, seed_salt, s),
            capacity_law=config.capacity_law)
        dY, dY_p, ts, _, _, _ = first_joint_blocks(
            params, (s,), (0,), samples_per_sep, independent=False)
        a = dY[:, 0].astype(np.float64)
        b = dY_p[:, 0].astype(np.float64)
        phi1[s] = a.mean()
        phi2[s] = b.mean()
        phi11[s] = a.var(ddof=1)
        phi22[s] = b.var(ddof=1)
        phi12[s] = float(np.cov(a, b, ddof=1)[0, 1])
        se1[s] = a.std(ddof=1) / np.sqrt(len(a))
    params_ind = engine.EngineParams(
        d=1, p=config.p, offsets=config.U_offsets,
        base_seed=rng.chain(config.base_seed, seed_salt, 0x99),
        capacity_law=config.capacity_law)
    dY, _, _, _, _, _ = first_joint_blocks(
        params_ind, (0,), (0,), samples_per_sep, independent=True)
    sigma2_ind = float((dY[:, 0].astype(np.float64) ** 2).mean())
    return PhiTable(s_max=s_max, phi1=phi1, phi2=phi2, phi11=phi11, phi22=phi22,
                    phi12=phi12, se1=se1, n_samples=samples_per_sep,
                    sigma2_ind=sigma2_ind)


def crossing_intervals(D: np.ndarray, hi: float, lo: float):
    """Alternating exits above hi and returns below lo of the difference
    sequence.  Yields (start, exit, w_type); w_type in 1..4 by the sign at
    the interval ends (0 when the start sign is tied)."""
    out = []
    m = len(D)
    r_prev = 0
    while True:
        d_i = None
        for t in range(r_prev + 1, m):
            if abs(D[t]) >= hi:
                d_i = t
                break
        if d_i is None:
            break
        s0 = int(np.sign(D[r_prev]))
        s1 = int(np.sign(D[d_i]))
        if s0 > 0 and s1 < 0:
            w = 1
        elif s0 > 0 and s1 > 0:
            w = 2
        elif s0 < 0 and s1 > 0:
            w = 3
        elif s0 < 0 and s1 < 0:
            w = 4
        else:
            w = 0
        out.append((r_prev, d_i, w))
        r_i = None
        for t in range(d_i + 1, m):
            if abs(D[t]) <= lo:
                r_i = t
                break
        if r_i is None:
            break
        r_prev = r_i
    return out


@dataclass
class D1Diagnostics:
    n_values: list
    K: float
    b: float
    per_n: dict            # n -> summary dict (R_n, compensators, W counts)
    phi: PhiTable
    w_counts: dict         # n -> np.ndarray counts for types 1..4
    q_eigs: dict           # n -> mean eigenvalues of the one-step covariance
    replicas: int


def d1_diagnostics(
    config: SimConfig, n_values, samples: int,
    *, K: float = 2.0, b: float = 0.4, s_max: int | None = None,
    phi_samples: int = 20_000, seed_salt: int = 0x7705,
) -> D1Diagnostics:
    """Collision counts, crossing types, compensator/martingale decomposition
    for pairs of walks on one cluster in d = 1."""
    if config.d != 1:
        raise ConfigError("d1_diagnostics requires d = 1")
    n_values = sorted(int(n) for n in n_values)
    n_max = n_values[-1]
    if s_max is None:
        s_max = int(math.ceil(K * math.log(n_max))) + 4
    phi = estimate_phi_table(config, s_max, phi_samples, seed_salt=seed_salt)

    params = engine.EngineParams(d=1, p=config.p, offsets=config.U_offsets,
                                 base_seed=rng.chain(config.base_seed, seed_salt, 1),
                                 capacity_law=config.capacity_law)
    per_n = {n: {"R_n": [], "A1_over_sqrt": [], "A11_over_n": [],
                 "A12_over_n": [], "martingale_check": []} for n in n_values}
    w_counts = {n: np.zeros(5, dtype=np.int64) for n in n_values}
    q_eigs = {n: [] for n in n_values}
    for repbase in range(samples):
        joint, _ = sample_joint_record(params, repbase, (0,), (0,), n_max)
        if joint.count < n_max:
            warnings.warn("joint trajectory truncated; skipping replica")
            continue
        D = (joint.hat[: n_max + 1, 0] - joint.hat_p[: n_max + 1, 0]).astype(np.int64)
        Xh = joint.hat[: n_max + 1, 0].astype(np.float64)
        phi1_path = np.array([phi.phi1_at(s) for s in D])
        phi11_path = np.array([phi.phi11_at(s) for s in D])
        phi12_path = np.array([phi.phi12_at(s) for s in D])
        A1 = np.concatenate(([0.0], np.cumsum(phi1_path[:-1])))
        A11 = np.concatenate(([0.0], np.cumsum(phi11_path[:-1])))
        A12 = np.concatenate(([0.0], np.cumsum(phi12_path[:-1])))
        for n in n_values:
            band = K * math.log(n)
            stats_n = per_n[n]
            stats_n["R_n"].append(int((np.abs(D[: n + 1]) <= band).sum()))
            stats_n["A1_over_sqrt"].append(abs(A1[n]) / math.sqrt(n))
            stats_n["A11_over_n"].append(A11[n] / n)
            stats_n["A12_over_n"].append(A12[n] / n)
            M_n = Xh[n] - A1[n]
            stats_n["martingale_check"].append(float(M_n + A1[n] - Xh[n]))
            hi = n ** b
            if hi > band + 2:
                for (_, _, w) in crossing_intervals(D[: n + 1], hi, band):
                    w_counts[n][w] += 1
            q = np.array([[phi.phi11_at(D[n - 1]), phi.phi12_at(D[n - 1])],
                          [phi.phi12_at(D[n - 1]), phi.phi22_at(D[n - 1])]])
            q_eigs[n].append(np.linalg.eigvalsh(q))
    summary = {}
    for n in n_values:
        s = per_n[n]
        summary[n] = {
            "mean_R_n": float(np.mean(s["R_n"])),
            "R_n_over_n": float(np.mean(s["R_n"])) / n,
            "mean_A1_over_sqrt": float(np.mean(s["A1_over_sqrt"])),
            "mean_A11_over_n": float(np.mean(s["A11_over_n"])),
            "mean_A12_over_n": float(np.mean(s["A12_over_n"])),
            "max_martingale_residual": float(np.max(np.abs(s["martingale_check"]))),
            "w_counts": w_counts[n].tolist(),
            "mean_q_eigs": (np.mean(q_eigs[n], axis=0).tolist() if q_eigs[n] else None),
        }
    return D1Diagnostics(n_values=n_values, K=K, b=b, per_n=summary, phi=phi,
                         w_counts=w_counts, q_eigs=q_eigs, replicas=samples)
