"""Named verification experiments.

Each runner draws its own seed stream from (base_seed, experiment tag),
evaluates the relevant statistics at the requested scale and returns an
ExperimentReport whose `passed` field reflects the experiment's acceptance
thresholds.  Defaults reproduce the full verification scale; tests may run
them smaller."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import engine, pairs, perc, rng, stats
from .config import SimConfig
from .report import ExperimentReport, config_echo, metric
from .walk import build_record


def parallel_map(fn, items, jobs: int):
    """Order-preserving map; results never depend on the worker count."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (8 * jobs))))


def _timer():
    t0 = time.time()
    return lambda: time.time() - t0


def _exp_config(config: SimConfig, tag: int) -> SimConfig:
    return SimConfig(d=config.d, p=config.p, U_offsets=config.U_offsets,
                     H=config.H, L=None,
                     base_seed=rng.chain(config.base_seed, tag),
                     capacity_law=config.capacity_law,
                     walk_steps=config.walk_steps)


# --------------------------------------------------------------------------
# workers (module level so ProcessPoolExecutor can pickle them)


def _xn_worker(args):
    cfg, rep, n = args
    params = engine.EngineParams.from_config(cfg)
    res = engine.conditioned_run(params, rep, [(0,) * cfg.d], [0], n)
    return rep, res.walkers[0].path[n], res.rejections


def _regs_worker(args):
    cfg, rep, steps = args
    params = engine.EngineParams.from_config(cfg)
    res = engine.conditioned_run(params, rep, [(0,) * cfg.d], [0], steps)
    rec = build_record(res.walkers[0].path, res.walkers[0].regen_times, cfg.radius)
    return rep, rec.taus, rec.Ys, res.rejections


def collect_regs_parallel(cfg: SimConfig, target: int, steps_per_walk: int, jobs: int):
    """Regeneration pool over as many replicas as the target requires."""
    est_regs_per_walk = max(1, int(steps_per_walk / 2.2))
    n_walks = max(1, math.ceil(target / est_regs_per_walk))
    taus_all, ys_all = [], []
    rep = 0
    total = 0
    while total < target:
        batch = [(cfg, rep + i, steps_per_walk) for i in range(n_walks)]
        for _, taus, ys, _ in parallel_map(_regs_worker, batch, jobs):
            taus_all.append(taus)
            ys_all.append(ys)
            total += len(taus)
        rep += n_walks
        n_walks = max(1, math.ceil((target - total) / est_regs_per_walk))
    return np.concatenate(taus_all), np.concatenate(ys_all)


def _quenched_env_worker(args):
    cfg, e, n_values, walkers = args
    params = engine.EngineParams.from_config(cfg)
    n_max = max(n_values)
    res = engine.conditioned_run(
        params, e, [(0,) * cfg.d] * walkers, list(range(walkers)), n_max,
        half_width=int(1.18 * engine.default_half_width(
            n_max + engine.gap_max_for(cfg.d), cfg.radius)),
    )
    out = {}
    for n in n_values:
        out[n] = np.array([w.path[n][0] for w in res.walkers], dtype=np.float64)
    return e, out


# --------------------------------------------------------------------------
# experiments


def run_lln(config: SimConfig, *, n: int = 2000, replicas: int = 2000,
            jobs: int = 1, seed_tag: int = 0x11) -> ExperimentReport:
    done = _timer()
    cfg = _exp_config(config, seed_tag)
    rows = parallel_map(_xn_worker, [(cfg, r, n) for r in range(replicas)], jobs)
    xs = np.array([x for _, x, _ in rows], dtype=np.float64)
    mean = xs.mean(axis=0)
    se = xs.std(axis=0, ddof=1) / math.sqrt(replicas)
    z = np.abs(mean) / se
    passed = bool(np.all(z < 3.0))
    metrics = {
        "lln_mean_over_n": metric(estimate=(np.abs(mean) / n).tolist(),
                                  se=(se / n).tolist(), n=replicas,
                                  passed=passed, z=z.tolist()),
    }
    table = [(r, *xs[i].astype(int)) for i, (r, _, _) in enumerate(rows)]
    return ExperimentReport(
        experiment="lln", config=config_echo(config), seed=config.base_seed,
        metrics=metrics, passed=passed,
        csv_tables={"xn": (("replica",) + tuple(f"x{j}" for j in range(config.d)), table)},
        runtime_s=done())


def run_sigma_scan(config: SimConfig, *, p_list=(0.80, 0.82, 1.0),
                   per_p_budget: int = 100_000, jobs: int = 1,
                   seed_tag: int = 0x22) -> ExperimentReport:
    done = _timer()
    base = _exp_config(config, seed_tag)
    rows = []
    ests = {}
    for i, p in enumerate(sorted(p_list)):
        cfg_p = SimConfig(d=base.d, p=p, U_offsets=base.U_offsets, H=base.H,
                          base_seed=rng.chain(base.base_seed, i), walk_steps=base.walk_steps,
                          capacity_law=base.capacity_law)
        taus, ys = collect_regs_parallel(cfg_p, per_p_budget, 1500, jobs)
        est = stats.estimate_sigma2(taus, ys)
        ests[p] = est
        rows.append((p, est.sigma2_hat, est.se, est.n_regs, est.mean_tau))
    metrics = {}
    passed = True
    if 1.0 in ests:
        analytic = stats.analytic_sigma2_fully_open(config)
        ok = abs(ests[1.0].sigma2_hat - analytic) < 3 * ests[1.0].se
        ok_pct = abs(ests[1.0].sigma2_hat - analytic) < 0.01 * analytic
        metrics["sigma2_p1_vs_analytic"] = metric(
            estimate=ests[1.0].sigma2_hat, se=ests[1.0].se,
            n=ests[1.0].n_regs, passed=bool(ok and ok_pct), analytic=analytic)
        passed &= ok and ok_pct
    ps = sorted(p for p in ests if p < 1.0)
    for a, b in zip(ps, ps[1:]):
        ea, eb = ests[a], ests[b]
        diff = abs(ea.sigma2_hat - eb.sigma2_hat)
        comb = math.hypot(ea.se, eb.se)
        ok = diff < 3 * comb
        metrics[f"continuity_{a}_{b}"] = metric(
            estimate=diff, se=comb, passed=bool(ok),
            values={str(a): ea.sigma2_hat, str(b): eb.sigma2_hat})
        passed &= ok
    return ExperimentReport(
        experiment="sigma-scan", config=config_echo(config), seed=config.base_seed,
        metrics=metrics, passed=bool(passed),
        csv_tables={"sigma_scan": (("p", "sigma2", "se", "n_regs", "mean_tau"), rows)},
        runtime_s=done())


def run_annealed_clt(config: SimConfig, *, n: int = 10_000, replicas: int = 10_000,
                     sigma_budget: int = 100_000, jobs: int = 1,
                     seed_tag: int = 0x33) -> ExperimentReport:
    done = _timer()
    cfg = _exp_config(config, seed_tag)
    taus, ys = collect_regs_parallel(cfg, sigma_budget, 1500, jobs)
    est = stats.estimate_sigma2(taus, ys)
    rows = parallel_map(_xn_worker, [(cfg, r, n) for r in range(replicas)], jobs)
    xs = np.array([x for _, x, _ in rows], dtype=np.float64)
    scaled = xs / math.sqrt(n)
    d = config.d
    mean = xs.mean(axis=0)
    se = xs.std(axis=0, ddof=1) / math.sqrt(replicas)
    lln_ok = bool(np.all(np.abs(mean) / se < 3.0))
    sigma = math.sqrt(est.sigma2_hat)
    ks_ps = [stats._ks_median_pvalue(scaled[:, j], sigma)[0] for j in range(d)]
    ks_ok = bool(all(p > 0.01 for p in ks_ps))
    metrics = {
        "sigma2_hat": metric(estimate=est.sigma2_hat, se=est.se, n=est.n_regs),
        "lln": metric(estimate=(np.abs(mean) / n).tolist(), passed=lln_ok,
                      z=(np.abs(mean) / se).tolist(), n=replicas),
        "ks_vs_normal": metric(pvalue=ks_ps, passed=ks_ok, n=replicas,
                               scale=sigma),
        "empirical_var_over_n": metric(estimate=scaled.var(axis=0, ddof=1).tolist()),
    }
    passed = lln_ok and ks_ok
    if d >= 2:
        cov = np.cov(scaled.T)
        offdiag = cov - np.diag(np.diag(cov))
        se_cov = est.sigma2_hat / math.sqrt(replicas)
        iso_ok = bool(np.abs(offdiag).max() < 4 * se_cov)
        metrics["isotropy_offdiag"] = metric(estimate=float(np.abs(offdiag).max()),
                                             se=se_cov, passed=iso_ok)
        passed &= iso_ok
    # p = 1 control reproduces the closed-form diffusion constant
    cfg1 = SimConfig(d=config.d, p=1.0, U_offsets=config.U_offsets, H=config.H,
                     base_seed=rng.chain(cfg.base_seed, 7), walk_steps=config.walk_steps)
    taus1, ys1 = collect_regs_parallel(cfg1, min(sigma_budget, 50_000), 1500, jobs)
    est1 = stats.estimate_sigma2(taus1, ys1)
    analytic = stats.analytic_sigma2_fully_open(config)
    ctrl_ok = bool(abs(est1.sigma2_hat - analytic) < 0.01 * analytic)
    metrics["p1_control"] = metric(estimate=est1.sigma2_hat, se=est1.se,
                                   passed=ctrl_ok, analytic=analytic)
    passed &= ctrl_ok
    table = [(i, *xs[i].astype(int)) for i in range(len(xs))]
    return ExperimentReport(
        experiment="annealed-clt", config=config_echo(config), seed=config.base_seed,
        metrics=metrics, passed=bool(passed),
        csv_tables={"xn": (("replica",) + tuple(f"x{j}" for j in range(d)), table)},
        runtime_s=done())


def run_quenched_clt(config: SimConfig, *, n_values=(400, 1600, 6400),
                     env_count: int = 200, walkers_per_env: int = 400,
                     sigma_budget: int = 50_000, jobs: int = 1,
                     seed_tag: int = 0x44) -> ExperimentReport:
    done = _timer()
    cfg = _exp_config(config, seed_tag)
    taus, ys = collect_regs_parallel(cfg, sigma_budget, 1500, jobs)
    est = stats.estimate_sigma2(taus, ys)
    sigma = math.sqrt(est.sigma2_hat)
    n_values = sorted(int(v) for v in n_values)
    env_rows = parallel_map(
        _quenched_env_worker,
        [(cfg, e, tuple(n_values), walkers_per_env) for e in range(env_count)],
        jobs)
    fvals = {n: np.empty((env_count, walkers_per_env)) for n in n_values}
    ks_dist = {n: np.empty(env_count) for n in n_values}
    from scipy import stats as sps
    for e, out in env_rows:
        for n in n_values:
            z = out[n] / math.sqrt(n)
            fvals[n][e] = np.tanh(z)
            ks_dist[n][e] = sps.kstest(z, "norm", args=(0.0, sigma)).statistic
    rows = []
    vs = []
    for n in n_values:
        vals = fvals[n]
        env_means = vals.mean(axis=1)
        within = vals.var(axis=1, ddof=1).mean()
        between = env_means.var(ddof=1) - within / walkers_per_env
        vs.append(max(between, 1e-12))
        rows.append((n, between, env_means.var(ddof=1), within,
                     float(np.median(ks_dist[n]))))
    vs = np.array(vs)
    ns = np.array(n_values, dtype=np.float64)
    slope = float(np.polyfit(np.log(ns), np.log(vs), 1)[0])
    gen = np.random.default_rng(rng.chain(cfg.base_seed, 0x99) % 2 ** 63)
    slopes = []
    for _ in range(400):
        idx = gen.integers(0, env_count, env_count)
        vb = []
        for i, n in enumerate(n_values):
            vals = fvals[n][idx]
            w = vals.var(axis=1, ddof=1).mean()
            vb.append(max(vals.mean(axis=1).var(ddof=1) - w / walkers_per_env, 1e-12))
        slopes.append(np.polyfit(np.log(ns), np.log(np.array(vb)), 1)[0])
    lo, hi = np.quantile(slopes, [0.025, 0.975])
    decreasing = bool(np.all(np.diff(vs) < 0))
    slope_ok = bool(hi < 0.0)
    ks_shrink = bool(np.median(ks_dist[n_values[-1]]) < np.median(ks_dist[n_values[0]]))
    metrics = {
        "between_env_variance": metric(estimate=vs.tolist(), n=env_count,
                                       passed=decreasing,
                                       n_values=list(n_values)),
        "loglog_slope": metric(estimate=slope, ci=(float(lo), float(hi)),
                               passed=slope_ok),
        "ks_median_shrinks": metric(
            estimate={str(n): float(np.median(ks_dist[n])) for n in n_values},
            passed=ks_shrink),
        "sigma2_hat": metric(estimate=est.sigma2_hat, se=est.se, n=est.n_regs),
    }
    passed = decreasing and slope_ok
    return ExperimentReport(
        experiment="quenched-clt", config=config_echo(config), seed=config.base_seed,
        metrics=metrics, passed=bool(passed),
        csv_tables={"quenched": (
            ("n", "between_env_var", "between_env_var_raw", "within_env_var",
             "ks_median"), rows)},
        runtime_s=done())


def run_tails(config: SimConfig, *, tau_regs: int = 100_000,
              tsim_samples: int = 30_000, height_samples: int = 30_000,
              separation: int = 4, jobs: int = 1,
              seed_tag: int = 0x55) -> ExperimentReport:
    done = _timer()
    cfg = _exp_config(config, seed_tag)
    metrics = {}
    tables = {}
    passed = True
    # individual regeneration time
    taus, _ = collect_regs_parallel(cfg, tau_regs, 1500, jobs)
    fit_tau = stats.tail_fit(taus)
    ok = fit_tau["r2"] > 0.9 and fit_tau["rate"] - 1.96 * fit_tau["rate_se"] > 0
    metrics["tau1_tail"] = metric(estimate=fit_tau["rate"], se=fit_tau["rate_se"],
                                  passed=bool(ok), r2=fit_tau["r2"],
                                  n=len(taus), n_range=fit_tau["n_range"])
    passed &= ok
    # first simultaneous regeneration time
    params = engine.EngineParams.from_config(
        SimConfig(d=cfg.d, p=cfg.p, U_offsets=cfg.U_offsets, H=cfg.H,
                  base_seed=rng.chain(cfg.base_seed, 2), walk_steps=cfg.walk_steps))
    _, _, tsim, _, _, _ = pairs.first_joint_blocks(
        params, (separation,) + (0,) * (cfg.d - 1), (0,) * cfg.d,
        tsim_samples, independent=False)
    fit_tsim = stats.tail_fit(tsim)
    ok = fit_tsim["r2"] > 0.9 and fit_tsim["rate"] - 1.96 * fit_tsim["rate_se"] > 0
    metrics["tsim1_tail"] = metric(estimate=fit_tsim["rate"], se=fit_tsim["rate_se"],
                                   passed=bool(ok), r2=fit_tsim["r2"],
                                   n=len(tsim), n_range=fit_tsim["n_range"])
    passed &= ok
    # finite-cluster height
    hcfg = SimConfig(d=cfg.d, p=cfg.p, U_offsets=cfg.U_offsets, H=96,
                     base_seed=rng.chain(cfg.base_seed, 3), walk_steps=0)
    rows, fit_h = perc.height_tail(hcfg, height_samples, cap=60, fit_range=(5, 40))
    ok = fit_h["r2"] > 0.9 and fit_h["rate"] > 0
    metrics["cluster_height_tail"] = metric(estimate=fit_h["rate"],
                                            passed=bool(ok), r2=fit_h["r2"],
                                            n=height_samples,
                                            n_range=list(fit_h["n_range"]))
    passed &= ok
    tables["height_tail"] = (("n_or_p", "count", "frequency", "ci_low", "ci_high"),
                             rows)
    tau_hist = [(int(v), int(c)) for v, c in
                zip(*np.unique(taus, return_counts=True))]
    tables["tau_hist"] = (("tau", "count"), tau_hist)
    tsim_hist = [(int(v), int(c)) for v, c in
                 zip(*np.unique(tsim, return_counts=True))]
    tables["tsim_hist"] = (("tsim", "count"), tsim_hist)
    return ExperimentReport(
        experiment="tails", config=config_echo(config), seed=config.base_seed,
        metrics=metrics, passed=bool(passed), csv_tables=tables,
        runtime_s=done())


def run_regen_diagnostics(config: SimConfig, *, target_regs: int = 12_000,
                          jobs: int = 1, seed_tag: int = 0x66) -> ExperimentReport:
    """Regeneration i.i.d. and symmetry checks (lag autocorrelations, split
    halves, coordinatewise sign test)."""
    done = _timer()
    cfg = _exp_config(config, seed_tag)
    taus, ys = collect_regs_parallel(cfg, target_regs, 1500, jobs)
    diag = stats.iid_diagnostics(taus, ys)
    sign_ps = stats.symmetry_sign_test(ys)
    acf_ok = diag["max_acf_z"] < 3.0
    sym_ok = all(p > 0.01 for p in sign_ps)
    halves_ok = diag["halves_pvalue"] > 0.01
    sup = stats.support_check(taus, ys, n_max=6, radius=config.radius)
    metrics = {
        "acf_max_z": metric(estimate=diag["max_acf_z"], passed=bool(acf_ok),
                            n=diag["n"], acf=diag["acf"], se=diag["acf_se"]),
        "halves_two_sample": metric(pvalue=diag["halves_pvalue"], passed=bool(halves_ok)),
        "symmetry_sign_test": metric(pvalue=sign_ps, passed=bool(sym_ok)),
        "support_coverage": metric(estimate=sup["coverage"], n=sup["cone_size"]),
    }
    passed = acf_ok and sym_ok and halves_ok
    rows = [(i, int(taus[i]), *ys[i].astype(int).tolist()) for i in range(min(len(taus), 200000))]
    return ExperimentReport(
        experiment="regen-diag", config=config_echo(config), seed=config.base_seed,
        metrics=metrics, passed=bool(passed),
        csv_tables={"regenerations": (("i", "tau") + tuple(f"y{j}" for j in range(config.d)), rows)},
        runtime_s=done())


def run_tv_decay(config: SimConfig, *, separations=(2, 8, 32), samples: int = 100_000,
                 far_separation: int | None = 64, far_samples: int = 20_000,
                 jobs: int = 1, seed_tag: int = 0x77) -> ExperimentReport:
    done = _timer()
    cfg = _exp_config(config, seed_tag)
    rows = []
    results = {}
    for i, sep in enumerate(separations):
        r = pairs.kernel_tv_estimate(
            SimConfig(d=cfg.d, p=cfg.p, U_offsets=cfg.U_offsets, H=cfg.H,
                      base_seed=rng.chain(cfg.base_seed, i), walk_steps=cfg.walk_steps),
            (sep,) + (0,) * (cfg.d - 1), (0,) * cfg.d, samples)
        results[sep] = r
        rows.append((sep, r["tv_hat"], r["tv_raw"], r["noise_floor"],
                     r["ci"][0], r["ci"][1], r["n_bins"]))
    seps = sorted(separations)
    decreasing = all(
        results[a]["ci"][0] > results[b]["ci"][1]
        for a, b in zip(seps, seps[1:])
    )
    metrics = {
        "tv_by_separation": metric(
            estimate={str(s): results[s]["tv_hat"] for s in seps},
            ci={str(s): results[s]["ci"] for s in seps},
            n=samples, passed=bool(decreasing)),
    }
    passed = bool(decreasing)
    if far_separation is not None:
        rf = pairs.kernel_tv_estimate(
            SimConfig(d=cfg.d, p=cfg.p, U_offsets=cfg.U_offsets, H=cfg.H,
                      base_seed=rng.chain(cfg.base_seed, 0xFA), walk_steps=cfg.walk_steps),
            (far_separation,) + (0,) * (cfg.d - 1), (0,) * cfg.d, far_samples)
        metrics["tv_far"] = metric(estimate=rf["tv_hat"], ci=rf["ci"],
                                   n=far_samples,
                                   consistent_with_zero=bool(rf["ci"][0] <= 1e-9))
        rows.append((far_separation, rf["tv_hat"], rf["tv_raw"], rf["noise_floor"],
                     rf["ci"][0], rf["ci"][1], rf["n_bins"]))
    return ExperimentReport(
        experiment="tv-decay", config=config_echo(config), seed=config.base_seed,
        metrics=metrics, passed=passed,
        csv_tables={"tv": (("separation", "tv_hat", "tv_raw", "noise_floor",
                            "ci_low", "ci_high", "n_bins"), rows)},
        runtime_s=done())


def run_annulus(config: SimConfig, *, samples: int = 10_000,
                radii: tuple | None = None, tolerance: float | None = None,
                jobs: int = 1, seed_tag: int = 0x88) -> ExperimentReport:
    done = _timer()
    cfg = _exp_config(config, seed_tag)
    if radii is None:
        radii = (4.0, 16.0, 64.0) if cfg.d == 1 else (4.0, 12.0, 36.0)
    if tolerance is None:
        tolerance = 0.05 if cfg.d == 1 else 0.07
    r1, r, r2 = radii
    st = pairs.annulus_exit_experiment(cfg, r1, r, r2, samples)
    err = abs(st.prob_outer_first - st.reference)
    ok = err <= tolerance
    metrics = {
        "annulus_exit": metric(estimate=st.prob_outer_first, ci=st.ci,
                               n=st.n_decided, passed=bool(ok),
                               reference=st.reference, abs_error=err,
                               censored=st.n_censored, radii=list(radii),
                               tolerance=tolerance),
    }
    rows = [(r1, r, r2, st.prob_outer_first, st.ci[0], st.ci[1], st.reference,
             st.n_decided, st.n_censored)]
    return ExperimentReport(
        experiment="annulus", config=config_echo(config), seed=config.base_seed,
        metrics=metrics, passed=bool(ok),
        csv_tables={"annulus": (("r1", "r", "r2", "p_hat", "ci_low", "ci_high",
                                 "reference", "n_decided", "n_censored"), rows)},
        runtime_s=done())


def run_d1_diag(config: SimConfig, *, n_values=(1_000, 10_000, 100_000),
                samples: int = 30, phi_samples: int = 40_000,
                jobs: int = 1, seed_tag: int = 0x99) -> ExperimentReport:
    done = _timer()
    cfg = _exp_config(config, seed_tag)
    diag = pairs.d1_diagnostics(cfg, n_values, samples, phi_samples=phi_samples)
    n_values = diag.n_values
    n_max = n_values[-1]
    # W-type symmetry, pooled at the largest n with crossing statistics
    w = None
    for n in reversed(n_values):
        if diag.w_counts[n][1:].sum() > 0:
            w = diag.w_counts[n]
            break
    def _sym_z(a, b):
        tot = a + b
        return abs(a - b) / math.sqrt(tot) if tot else 0.0
    z13 = _sym_z(int(w[1]), int(w[3])) if w is not None else float("nan")
    z24 = _sym_z(int(w[2]), int(w[4])) if w is not None else float("nan")
    w_ok = (w is not None) and z13 < 3.0 and z24 < 3.0
    a_seq = [diag.per_n[n]["mean_A1_over_sqrt"] for n in n_values]
    a_ok = all(b < a for a, b in zip(a_seq, a_seq[1:]))
    far_sep = int(math.ceil(diag.K * math.log(n_max))) + 1
    far_sep = min(far_sep, diag.phi.s_max)
    phi1_far = diag.phi.phi1[far_sep]
    se_far = diag.phi.se1[far_sep]
    phi_ok = abs(phi1_far) < 3 * se_far
    metrics = {
        "w_symmetry": metric(estimate={"counts": w.tolist() if w is not None else None},
                             passed=bool(w_ok), z13=z13, z24=z24),
        "compensator_decay": metric(estimate=a_seq, passed=bool(a_ok),
                                    n_values=list(n_values)),
        "phi1_far": metric(estimate=float(phi1_far), se=float(se_far),
                           passed=bool(phi_ok), separation=far_sep),
        "collision_fraction": metric(estimate=[diag.per_n[n]["R_n_over_n"]
                                               for n in n_values]),
        "sigma2_ind_per_joint_step": metric(estimate=diag.phi.sigma2_ind),
    }
    passed = bool(w_ok and a_ok and phi_ok)
    rows = []
    for n in n_values:
        s = diag.per_n[n]
        rows.append((n, s["mean_R_n"], s["R_n_over_n"], s["mean_A1_over_sqrt"],
                     s["mean_A11_over_n"], s["mean_A12_over_n"],
                     *s["w_counts"][1:]))
    phi_rows = [(s, diag.phi.phi1[s], diag.phi.se1[s], diag.phi.phi11[s],
                 diag.phi.phi22[s], diag.phi.phi12[s])
                for s in range(diag.phi.s_max + 1)]
    return ExperimentReport(
        experiment="d1-diag", config=config_echo(config), seed=config.base_seed,
        metrics=metrics, passed=passed,
        csv_tables={
            "d1_diag": (("n", "mean_R_n", "R_n_over_n", "A1_over_sqrt_n",
                         "A11_over_n", "A12_over_n", "W1", "W2", "W3", "W4"), rows),
            "phi": (("separation", "phi1", "phi1_se", "phi11", "phi22", "phi12"),
                    phi_rows),
        },
        runtime_s=done())


def run_height_tail(config: SimConfig, *, samples: int = 30_000,
                    jobs: int = 1, seed_tag: int = 0xAA) -> ExperimentReport:
    done = _timer()
    cfg = _exp_config(config, seed_tag)
    hcfg = SimConfig(d=cfg.d, p=cfg.p, U_offsets=cfg.U_offsets, H=96,
                     base_seed=cfg.base_seed, walk_steps=0)
    rows, fit = perc.height_tail(hcfg, samples, cap=60, fit_range=(5, 40))
    ok = fit["r2"] > 0.9 and fit["rate"] > 0
    metrics = {"height_tail_fit": metric(estimate=fit["rate"], passed=bool(ok),
                                         r2=fit["r2"], n=samples,
                                         n_range=list(fit["n_range"]))}
    return ExperimentReport(
        experiment="height-tail", config=config_echo(config), seed=config.base_seed,
        metrics=metrics, passed=bool(ok),
        csv_tables={"height_tail": (("n_or_p", "count", "frequency", "ci_low",
                                     "ci_high"), rows)},
        runtime_s=done())


def run_pc_scan(config: SimConfig, *, p_grid=None, samples: int = 400,
                horizons=(64, 128, 256), jobs: int = 1,
                seed_tag: int = 0xBB) -> ExperimentReport:
    done = _timer()
    cfg = _exp_config(config, seed_tag)
    if p_grid is None:
        p_grid = [round(0.40 + 0.03 * i, 2) for i in range(14)]
    tables = {}
    p50s = []
    monotone_all = True
    for H in horizons:
        hcfg = SimConfig(d=cfg.d, p=cfg.p, U_offsets=cfg.U_offsets, H=H,
                         base_seed=rng.chain(cfg.base_seed, H), walk_steps=0)
        rows = perc.estimate_pc(hcfg, p_grid, samples)
        tables[f"pc_H{H}"] = (("n_or_p", "count", "frequency", "ci_low", "ci_high"),
                              rows)
        freqs = [r[2] for r in rows]
        monotone_all &= all(b >= a - 1e-12 for a, b in zip(freqs, freqs[1:]))
        p50 = None
        for (pa, _, fa, _, _), (pb, _, fb, _, _) in zip(rows, rows[1:]):
            if fa < 0.5 <= fb:
                p50 = pa + (pb - pa) * (0.5 - fa) / (fb - fa)
                break
        p50s.append((H, p50))
    cross_ok = all(
        (a[1] is None or b[1] is None or b[1] >= a[1] - 0.03)
        for a, b in zip(p50s, p50s[1:])
    )
    metrics = {
        "survival_monotone_in_p": metric(passed=bool(monotone_all)),
        "p50_by_horizon": metric(estimate={str(h): v for h, v in p50s},
                                 passed=bool(cross_ok)),
    }
    return ExperimentReport(
        experiment="pc-scan", config=config_echo(config), seed=config.base_seed,
        metrics=metrics, passed=bool(monotone_all and cross_ok),
        csv_tables=tables, runtime_s=done())


EXPERIMENTS = {
    "lln": run_lln,
    "annealed-clt": run_annealed_clt,
    "quenched-clt": run_quenched_clt,
    "tails": run_tails,
    "regen-diag": run_regen_diagnostics,
    "sigma-scan": run_sigma_scan,
    "tv-decay": run_tv_decay,
    "annulus": run_annulus,
    "d1-diag": run_d1_diag,
    "height-tail": run_height_tail,
    "pc-scan": run_pc_scan,
}
