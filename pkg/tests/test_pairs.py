import math
import warnings

import numpy as np
import pytest

import opbw
from opbw import engine, pairs, rng
from opbw.config import ConfigError
from opbw.env import generate_environment, point
from opbw.pairs import (
    build_joint_record,
    crossing_intervals,
    d1_diagnostics,
    f_d_reference,
    flatten_blocks,
    independent_pair_walk,
    joint_walk,
    kernel_tv_estimate,
    sample_joint_record,
    separation_time_experiment,
)
from opbw.perc import compute_backbone
from opbw.walk import coupled_walk, sample_conditioned_start


def test_p1_every_time_is_joint():
    cfg = opbw.SimConfig(d=1, p=1.0, L=40, H=40, walk_steps=16)
    e = generate_environment(cfg, 0)
    bb = compute_backbone(e)
    rec = joint_walk(e, bb, (0,), (4,), 16)
    assert np.array_equal(rec.t_sim, np.arange(17))
    assert np.array_equal(rec.J, np.arange(17))


def test_identical_salts_give_identical_paths():
    cfg = opbw.SimConfig(d=1, p=0.8, base_seed=5, H=1, walk_steps=0)
    params = engine.EngineParams.from_config(cfg)
    res = engine.conditioned_run(params, 0, [(0,), (0,)], [0, 0], 40)
    a, b = res.walkers
    n = min(a.achieved, b.achieved)
    assert np.array_equal(a.path[: n + 1], b.path[: n + 1])
    assert np.array_equal(a.regen_times[a.regen_times <= n],
                          b.regen_times[b.regen_times <= n])


def test_joint_record_invariants_and_roundtrip():
    cfg = opbw.SimConfig(d=1, p=0.8, base_seed=15, H=1, walk_steps=0)
    params = engine.EngineParams.from_config(cfg)
    joint, _ = sample_joint_record(params, 0, (0,), (3,), 60)
    # simultaneous times strictly increasing and in both individual sets
    assert np.all(np.diff(joint.t_sim) > 0)
    set1 = set(joint.rec.times.tolist())
    set2 = set(joint.rec_p.times.tolist())
    for t in joint.t_sim[1:]:
        assert t in set1 and t in set2
    # the blocks reconstruct both increment sequences exactly
    ys, taus, ysp, tausp = flatten_blocks(joint)
    J, Jp = joint.J[-1], joint.J_p[-1]
    assert np.array_equal(ys, joint.rec.Ys[:J])
    assert np.array_equal(taus, joint.rec.taus[:J])
    assert np.array_equal(ysp, joint.rec_p.Ys[:Jp])
    assert np.array_equal(tausp, joint.rec_p.taus[:Jp])
    # hat positions agree with the paths at the joint times
    assert np.array_equal(joint.hat[1:, 0],
                          joint.rec.tilde_positions[joint.J[1:], 0])


def test_independent_pair_increment_correlation_small():
    cfg = opbw.SimConfig(d=1, p=0.8, base_seed=25, H=1, walk_steps=0)
    params = engine.EngineParams.from_config(cfg)
    n = 400
    dY, dY_p, ts, _, _, _ = pairs.first_joint_blocks(
        params, (0,), (6,), n, independent=True)
    r = np.corrcoef(dY[:, 0], dY_p[:, 0])[0, 1]
    assert abs(r) < 3.5 / math.sqrt(n)


def test_ind_tsim_law_independent_of_separation():
    from scipy.stats import ks_2samp
    cfg = opbw.SimConfig(d=1, p=0.8, base_seed=35, H=1, walk_steps=0)
    params = engine.EngineParams.from_config(cfg)
    _, _, ts_a, _, _, _ = pairs.first_joint_blocks(params, (0,), (2,), 500,
                                                   independent=True)
    params2 = engine.EngineParams.from_config(
        opbw.SimConfig(d=1, p=0.8, base_seed=36, H=1, walk_steps=0))
    _, _, ts_b, _, _, _ = pairs.first_joint_blocks(params2, (0,), (24,), 500,
                                                   independent=True)
    assert ks_2samp(ts_a, ts_b).pvalue > 0.005


def test_ind_difference_symmetric_and_tsim_gaps_iid():
    cfg = opbw.SimConfig(d=1, p=0.8, base_seed=45, H=1, walk_steps=0)
    params = engine.EngineParams.from_config(cfg)
    joint, _ = sample_joint_record(params, 0, (0,), (0,), 400, independent=True)
    diff = joint.hat[:, 0] - joint.hat_p[:, 0]
    incs = np.diff(diff)
    from opbw.stats_util import sign_test_pvalue, autocorrelations
    assert sign_test_pvalue(incs) > 0.005
    gaps = np.diff(joint.t_sim)
    rho = autocorrelations(gaps.astype(float), 1)[0]
    assert abs(rho) < 3.5 / math.sqrt(len(gaps))


def test_spatial_homogeneity_of_blocks():
    from scipy.stats import ks_2samp
    cfg = opbw.SimConfig(d=1, p=0.8, base_seed=55, H=1, walk_steps=0)
    params = engine.EngineParams.from_config(cfg)
    dY_a, _, ts_a, _, _, _ = pairs.first_joint_blocks(params, (0,), (5,), 400,
                                                      independent=False)
    params2 = engine.EngineParams.from_config(
        opbw.SimConfig(d=1, p=0.8, base_seed=56, H=1, walk_steps=0))
    dY_b, _, ts_b, _, _, _ = pairs.first_joint_blocks(params2, (7,), (12,), 400,
                                                      independent=False)
    assert ks_2samp(dY_a[:, 0], dY_b[:, 0]).pvalue > 0.005
    assert ks_2samp(ts_a, ts_b).pvalue > 0.005


def test_f_d_reference_values():
    assert f_d_reference(1, 3, 1, 5) == pytest.approx(0.5)
    assert f_d_reference(2, math.e, 1, math.e ** 2) == pytest.approx(0.5)
    assert f_d_reference(3, 2, 1, 4) == pytest.approx((1 - 0.5) / (1 - 0.25))
    assert f_d_reference(1, 16, 4, 64) == pytest.approx(0.2)


def test_tv_guard_rejects_coincident_starts():
    cfg = opbw.SimConfig(d=1, p=0.8, base_seed=1, H=1, walk_steps=0)
    with pytest.raises(ConfigError):
        kernel_tv_estimate(cfg, (0,), (0,), 100)


def test_tv_small_scale_positive_at_small_separation():
    cfg = opbw.SimConfig(d=1, p=0.8, base_seed=65, H=1, walk_steps=0)
    near = kernel_tv_estimate(cfg, (1,), (0,), 4000, n_boot=60)
    far = kernel_tv_estimate(cfg, (40,), (0,), 4000, n_boot=60)
    assert near["tv_hat"] > far["tv_hat"]
    assert far["ci"][0] <= 0.005  # consistent with zero at large separation


def test_annulus_d1_small():
    cfg = opbw.SimConfig(d=1, p=0.8, base_seed=75, H=1, walk_steps=0)
    st = pairs.annulus_exit_experiment(cfg, 2.0, 6.0, 18.0, 600,
                                       pairs_per_env=40)
    assert st.n_decided > 500
    assert abs(st.prob_outer_first - st.reference) < 0.12


def test_separation_time_guard_and_decay():
    cfg = opbw.SimConfig(d=1, p=0.8, base_seed=85, H=1, walk_steps=0)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        separation_time_experiment(cfg, [64], 5, b1=0.2, b2=0.6)
        assert any("regime" in str(x.message) for x in w)
    rows = separation_time_experiment(cfg, [100, 3000], 40, b1=0.25, b2=0.45)
    assert rows[0]["prob_not_separated"] >= rows[1]["prob_not_separated"] - 0.15


def test_crossing_intervals_types():
    D = np.array([0, 2, 5, 3, 1, -1, -2, -6, -1, 4, 6])
    out = crossing_intervals(D, hi=5, lo=1)
    # start sign 0: first interval unclassified
    assert out[0][2] == 0 and out[0][1] == 2
    assert out[1] == (4, 7, 1)  # from +1 down through -6: overcross type 1
    assert out[2] == (8, 10, 3)  # from -1 up to +6: overcross type 3


def test_d1_diagnostics_small():
    cfg = opbw.SimConfig(d=1, p=0.8, base_seed=95, H=1, walk_steps=0)
    diag = d1_diagnostics(cfg, [200, 800], 4, phi_samples=1500)
    s200 = diag.per_n[200]
    s800 = diag.per_n[800]
    assert s200["max_martingale_residual"] < 1e-9
    assert 0 < s200["mean_R_n"] <= 201
    assert s800["mean_A11_over_n"] > 0
    # phi1 at separation 0 vanishes by exchangeability+reflection
    assert abs(diag.phi.phi1[0]) < 4 * diag.phi.se1[0] + 1e-12
    assert diag.phi.sigma2_ind > 0


def test_d1_diagnostics_rejects_d2():
    cfg = opbw.SimConfig(d=2, p=0.62, base_seed=1, H=1, walk_steps=0)
    with pytest.raises(ConfigError):
        d1_diagnostics(cfg, [100], 2)


def test_public_joint_walk_matches_engine():
    from opbw.env import generate_environment_seeded
    N = 40
    cfg = opbw.SimConfig(d=1, p=0.8, H=N + 252 + 41, walk_steps=N, base_seed=105)
    params = engine.EngineParams.from_config(cfg)
    res = engine.conditioned_run(params, 0, [(0,), (3,)], [0, 1], N, slack=41)
    env = generate_environment_seeded(cfg, res.env_seed)
    bb = compute_backbone(env, horizon_slack=41)
    rec = joint_walk(env, bb, (0,), (3,), N)
    from opbw.walk import build_record
    rec_e = build_joint_record(
        build_record(res.walkers[0].path, res.walkers[0].regen_times, 1),
        build_record(res.walkers[1].path, res.walkers[1].regen_times, 1))
    m = min(rec.count, rec_e.count)
    assert np.array_equal(rec.t_sim[: m + 1], rec_e.t_sim[: m + 1])
    assert np.array_equal(rec.hat[: m + 1], rec_e.hat[: m + 1])
