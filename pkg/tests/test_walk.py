import warnings

import numpy as np
import pytest

import opbw
from opbw import engine, rng, walk
from opbw.env import Environment, generate_environment, generate_environment_seeded, point
from opbw.perc import compute_backbone
from opbw.walk import (
    GammaState,
    TruncationWarning,
    WalkRng,
    build_record,
    coupled_walk,
    direct_step,
    direct_walk,
    exploration_schedule,
    gamma_extend,
    gamma_from_definition,
    gamma_init,
    sample_conditioned_start,
)


def make_env(d=1, p=0.8, L=40, H=40, seed=0, offsets=None):
    cfg = opbw.SimConfig(d=d, p=p, L=L, H=H, walk_steps=0, base_seed=seed,
                         U_offsets=offsets)
    e = generate_environment(cfg, 0)
    return e, compute_backbone(e)


def cached_perm_fn(env):
    cache = {}
    def fn(pt, salt):
        key = (pt, salt)
        if key not in cache:
            cache[key] = opbw.permutation(env, pt, walker=salt)
        return cache[key]
    return fn


# ---------------------------------------------------------------------------
# the two-neighbour worked example (explicit omega and permutation fields)

FIGURE_OPEN = {(0, 0), (-1, 1), (1, 1), (2, 2), (-2, 2), (-3, 3), (-1, 3)}
FIGURE_PERMS = {
    (0, 0): [1, -1],
    (-1, 1): [0, -2],
    (1, 1): [0, 2],
    (-2, 2): [-3, -1],
    (0, 2): [1, -1],
    (2, 2): [3, 1],
    (-3, 3): [-2, -4],
    (-1, 3): [0, -2],
    (1, 3): [0, 2],
    (3, 3): [4, 2],
}


def figure_fixture():
    L, H = 6, 4
    cfg = opbw.SimConfig(d=1, p=0.5, L=L, H=H, walk_steps=0,
                         U_offsets=opbw.two_neighbor_offsets())
    bits = np.zeros((H + 1, 2 * L + 1), dtype=np.uint8)
    for (x, n) in FIGURE_OPEN:
        bits[n, x + L] = 1
    env = Environment(config=cfg, seed=None, omega_bits=bits)
    bb = compute_backbone(env)

    def perm_fn(pt, salt):
        firsts = FIGURE_PERMS[(pt.x[0], pt.n)]
        return [point(x, pt.n + 1) for x in firsts]

    return env, bb, perm_fn


def test_figure_paths_reproduced():
    env, bb, perm_fn = figure_fixture()
    start = point(0, 0)
    expected = {
        1: [0, 1],
        2: [0, 1, 0],
        3: [0, 1, 2, 3],
        4: [0, -1, -2, -3, -2],
    }
    for k, xs in expected.items():
        path = gamma_from_definition(env, bb, start, k, perm_fn=perm_fn)
        assert [p.x[0] for p in path] == xs, k


def test_figure_incremental_matches_definition():
    env, bb, perm_fn = figure_fixture()
    state = GammaState(k=0, path=[point(0, 0)], frozen=0, salt=0)
    for k in range(1, 5):
        state = gamma_extend(state, env, bb, perm_fn=perm_fn)
        scratch = gamma_from_definition(env, bb, point(0, 0), k, perm_fn=perm_fn)
        assert state.path == scratch, k


# ---------------------------------------------------------------------------
# construction properties on random environments


@pytest.mark.parametrize("seed", range(10))
def test_scratch_vs_incremental_random(seed):
    e, bb = make_env(L=30, H=26, seed=seed)
    perm_fn = cached_perm_fn(e)
    start = None
    for x in range(-5, 6):
        if bb.xi_at(point(x, 0)):
            start = point(x, 0)
            break
    if start is None:
        pytest.skip("no backbone site near origin")
    state = gamma_init(e, bb, start)
    for k in range(1, 21):
        state = gamma_extend(state, e, bb, perm_fn=perm_fn)
        scratch = gamma_from_definition(e, bb, start, k, perm_fn=perm_fn)
        assert state.path == scratch, (seed, k)


def check_gamma_properties(env, bb, start, k_max, perm_fn):
    """Prefix openness, stability, fixation and dead-branch dwell of the
    locally constructed paths, asserted from scratch builds."""
    paths = {k: gamma_from_definition(env, bb, start, k, perm_fn=perm_fn)
             for k in range(1, k_max + 1)}
    H = env.H
    for k in range(1, k_max + 1):
        path = paths[k]
        # prefix sites open
        for m in range(k):
            assert opbw.omega(env, path[m]) == 1, ("open-prefix", k, m)
        # stability: open endpoint extends
        if k < k_max and opbw.omega(env, path[k]) == 1:
            assert paths[k + 1][: k + 1] == path, ("stability", k)
        # fixation of on-backbone positions
        for j in range(k + 1):
            if bb.xi_at(path[j]):
                for m in range(k + 1, k_max + 1):
                    assert paths[m][j] == path[j], ("fixation", k, j, m)
        # dwell on dead branches: endpoint off the backbone sits for
        # ell + 1 further stages, then is replaced
        if k >= 2 and bb.xi_at(path[k - 1]) and not bb.xi_at(path[k]):
            ell = bb.ell_at(path[k])
            n_end = path[k].n
            if ell < H - n_end:  # dead height measured exactly
                for j in range(k, min(k + ell + 1, k_max) + 1):
                    assert paths[j][k] == path[k], ("dwell", k, j)
                if k + ell + 2 <= k_max:
                    assert paths[k + ell + 2][k] != path[k], ("dwell-end", k)


@pytest.mark.parametrize("seed", range(12))
def test_gamma_property_suite_small(seed):
    e, bb = make_env(L=26, H=22, p=0.75, seed=100 + seed)
    perm_fn = cached_perm_fn(e)
    for x in range(-4, 5):
        if bb.xi_at(point(x, 0)):
            check_gamma_properties(e, bb, point(x, 0), 14, perm_fn)
            break


# ---------------------------------------------------------------------------
# coupled walk, records, regenerations


def test_p1_every_step_regenerates():
    e, bb = make_env(p=1.0, L=24, H=24)
    path, rec = coupled_walk(e, bb, point(0, 0), 12)
    assert np.array_equal(rec.times, np.arange(13))
    assert np.all(rec.taus == 1)
    # each step equals the permutation-first offset
    for k in range(12):
        first = opbw.permutation(e, point(int(path.positions[k][0]), k))[0]
        assert first.x[0] == path.positions[k + 1][0]


def test_walk_stays_on_backbone_and_bounded_increments():
    e, bb = make_env(L=60, H=56, seed=5)
    start = point(0, 0)
    if not bb.xi_at(start):
        e, bb, _ = sample_conditioned_start(
            opbw.SimConfig(d=1, p=0.8, H=40, L=80, walk_steps=40, base_seed=5), 0)
    path, rec = coupled_walk(e, bb, point(0, 0), 30)
    for k in range(len(path.positions)):
        assert bb.xi_at(point(int(path.positions[k][0]), k))
    assert np.all(np.abs(rec.Ys[:, 0]) <= rec.taus)


def test_truncation_warning():
    cfg = opbw.SimConfig(d=1, p=0.8, H=12, L=300, walk_steps=12, base_seed=8)
    env, bb, _ = sample_conditioned_start(cfg, 0, horizon_slack=6)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        coupled_walk(env, bb, point(0, 0), 12)
        assert any(issubclass(x.category, TruncationWarning) for x in w)


def test_direct_step_p1_uniform():
    e, bb = make_env(p=1.0, L=30, H=30)
    counts = {-1: 0, 0: 0, 1: 0}
    n_trials = 3000
    for w in range(n_trials):
        rng_ = WalkRng(e.seed, w)
        nxt = direct_step(bb, e, (0,), 0, rng_)
        counts[nxt[0]] += 1
    freqs = np.array([counts[k] / n_trials for k in (-1, 0, 1)])
    se = np.sqrt((1 / 3) * (2 / 3) / n_trials)
    assert np.all(np.abs(freqs - 1 / 3) < 3.5 * se)


def test_direct_step_capacity_weighted():
    law = opbw.CapacityLaw(values=(1, 2), probs=(0.5, 0.5))
    cfg = opbw.SimConfig(d=1, p=1.0, L=30, H=30, walk_steps=0,
                         U_offsets=opbw.two_neighbor_offsets(), capacity_law=law)
    e = generate_environment(cfg, 0)
    bb = compute_backbone(e)
    from opbw.env import capacity
    ks = [capacity(e, point(-1, 1)), capacity(e, point(1, 1))]
    n_trials = 4000
    hits = 0
    for w in range(n_trials):
        nxt = direct_step(bb, e, (0,), 0, WalkRng(e.seed, w))
        hits += nxt[0] == -1
    want = ks[0] / (ks[0] + ks[1])
    se = np.sqrt(want * (1 - want) / n_trials)
    assert abs(hits / n_trials - want) < 3.5 * se


def test_walk_law_equivalence_small():
    """Path frequencies of the local construction match the direct walk
    (two-sample chi-square over length-3 paths)."""
    from scipy.stats import chi2_contingency

    cfg = opbw.SimConfig(d=1, p=0.8, H=40, L=60, walk_steps=3, base_seed=17)
    env, bb, _ = sample_conditioned_start(cfg, 0)
    n_samp = 4000
    counts_g: dict = {}
    counts_d: dict = {}
    perm_cache = {}
    def perm_fn(pt, salt):
        key = (pt, salt)
        if key not in perm_cache:
            perm_cache[key] = opbw.permutation(env, pt, walker=salt)
        return perm_cache[key]
    for s in range(n_samp):
        st = gamma_init(env, bb, point(0, 0), salt=s + 1)
        while st.frozen < 3:
            st = gamma_extend(st, env, bb, perm_fn=perm_fn)
        key = tuple(p.x[0] for p in st.path[1:4])
        counts_g[key] = counts_g.get(key, 0) + 1
        dpath = direct_walk(env, bb, point(0, 0), 3, walker_id=s)
        key = tuple(int(v) for v in dpath.positions[1:4, 0])
        counts_d[key] = counts_d.get(key, 0) + 1
    keys = sorted(set(counts_g) | set(counts_d))
    table = np.array([[counts_g.get(k, 0) for k in keys],
                      [counts_d.get(k, 0) for k in keys]])
    keep = table.sum(axis=0) >= 10
    other = table[:, ~keep].sum(axis=1, keepdims=True)
    table = np.hstack([table[:, keep], other]) if (~keep).any() else table[:, keep]
    _, p, _, _ = chi2_contingency(table)
    assert p > 0.005, p


def test_exploration_schedule_matches_first_regeneration():
    for seed in range(20):
        cfg = opbw.SimConfig(d=1, p=0.75, H=60, L=130, walk_steps=60,
                             base_seed=200 + seed)
        try:
            env, bb, _ = sample_conditioned_start(cfg, 0, max_rejections=50)
        except Exception:
            continue
        _, rec = coupled_walk(env, bb, point(0, 0), 40)
        schedule, restarts, t1 = exploration_schedule(env, bb, point(0, 0), 50)
        assert t1 == rec.times[1], seed
        assert restarts == len(schedule) - 1
        # zero restarts exactly when the first stage already regenerates
        if rec.times[1] == 1:
            assert restarts == 0


def test_sample_conditioned_start_p1_immediate():
    cfg = opbw.SimConfig(d=1, p=1.0, H=16, L=40, walk_steps=16)
    env, bb, rejections = sample_conditioned_start(cfg, 0)
    assert rejections == 0


def test_conditioned_acceptance_matches_survival_product():
    """Acceptance frequency of the conditioning equals p times the
    single-site survival probability (two independent estimators)."""
    cfg = opbw.SimConfig(d=1, p=0.72, H=48, L=100, walk_steps=48, base_seed=31)
    n = 150
    rej = 0
    acc = 0
    for rep in range(n):
        _, _, r = sample_conditioned_start(cfg, rep)
        acc += 1
        rej += r
    accept_hat = acc / (acc + rej)
    from opbw.perc import _lattice_survival
    m = 1200
    surv = 0
    for rep in range(m):
        seed = rng.replica_seed(rng.chain(cfg.base_seed, 0xF00), rep)
        if _lattice_survival(seed, cfg, cfg.H + 1) is None:
            surv += 1
    product = cfg.p * surv / m
    se = np.sqrt(accept_hat * (1 - accept_hat) / (acc + rej)
                 + (cfg.p ** 2) * (surv / m) * (1 - surv / m) / m)
    assert abs(accept_hat - product) < 3.5 * se


def test_engine_matches_reference_paths():
    N = 60
    cfg = opbw.SimConfig(d=1, p=0.8, H=N + 252 + 41, walk_steps=N, base_seed=57)
    params = engine.EngineParams.from_config(cfg)
    for rep in range(4):
        res = engine.conditioned_run(params, rep, [(0,)], [0], N, slack=41)
        env = generate_environment_seeded(cfg, res.env_seed)
        bb = compute_backbone(env, horizon_slack=41)
        pr, rr = coupled_walk(env, bb, point(0, 0), N)
        w = res.walkers[0]
        n = min(w.achieved, len(pr.positions) - 1)
        assert np.array_equal(w.path[: n + 1], pr.positions[: n + 1])
        assert np.array_equal(w.regen_times[w.regen_times <= n],
                              rr.times[1:][rr.times[1:] <= n])


def test_engine_window_invariance():
    """Accepted values are exact, so results cannot depend on the window."""
    cfg = opbw.SimConfig(d=1, p=0.8, base_seed=67, H=1, walk_steps=0)
    params = engine.EngineParams.from_config(cfg)
    a = engine.conditioned_run(params, 3, [(0,)], [0], 200)
    b = engine.conditioned_run(params, 3, [(0,)], [0], 200, half_width=600)
    assert np.array_equal(a.walkers[0].path, b.walkers[0].path)
    assert np.array_equal(a.walkers[0].regen_times, b.walkers[0].regen_times)


def test_capacity_walk_engine_vs_reference():
    law = opbw.CapacityLaw(values=(1, 3), probs=(0.5, 0.5))
    N = 30
    cfg = opbw.SimConfig(d=1, p=0.8, H=N + 252 + 41, walk_steps=N, base_seed=71,
                         capacity_law=law)
    params = engine.EngineParams.from_config(cfg)
    res = engine.conditioned_run(params, 1, [(0,)], [0], N, slack=41)
    env = generate_environment_seeded(cfg, res.env_seed)
    bb = compute_backbone(env, horizon_slack=41)
    pr, rr = coupled_walk(env, bb, point(0, 0), N)
    w = res.walkers[0]
    n = min(w.achieved, len(pr.positions) - 1)
    assert np.array_equal(w.path[: n + 1], pr.positions[: n + 1])
