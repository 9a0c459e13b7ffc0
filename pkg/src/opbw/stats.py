"""Estimators and hypothesis tests on regeneration records.

Turns raw walk output into the quantities the model predicts: the
diffusion constant as a ratio of regeneration moments, exponential tail
fits, i.i.d. and symmetry diagnostics, and the annealed/quenched
central-limit checks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from . import engine, rng
from .config import ConfigError, SimConfig
from .stats_util import autocorrelations, fit_log_survival, sign_test_pvalue
from .walk import build_record


class SampleSizeError(ValueError):
    pass


@dataclass
class SigmaEstimate:
    sigma2_hat: float
    se: float
    n_regs: int
    mean_tau: float
    mean_y2: float

    def within(self, other: "SigmaEstimate", z: float = 3.0) -> bool:
        combined = math.hypot(self.se, other.se)
        return abs(self.sigma2_hat - other.sigma2_hat) < z * combined


def estimate_sigma2(taus: np.ndarray, Ys: np.ndarray, coord: int = 0) -> SigmaEstimate:
    """Ratio estimator mean(Y_1,1^2) / mean(tau_1) with a delta-method SE
    that keeps the covariance term of the dependent numerator/denominator."""
    taus = np.asarray(taus, dtype=np.float64)
    y = np.asarray(Ys, dtype=np.float64)
    if y.ndim == 2:
        y = y[:, coord]
    n = len(taus)
    if n < 100:
        raise SampleSizeError(f"need >= 100 regenerations, got {n}")
    a = y ** 2
    A, B = a.mean(), taus.mean()
    R = A / B
    var_a = a.var(ddof=1)
    var_b = taus.var(ddof=1)
    cov = float(np.cov(a, taus, ddof=1)[0, 1])
    var_R = (var_a - 2 * R * cov + R * R * var_b) / (n * B * B)
    return SigmaEstimate(sigma2_hat=float(R), se=float(np.sqrt(max(var_R, 0.0))),
                        n_regs=n, mean_tau=float(B), mean_y2=float(A))


def analytic_sigma2_fully_open(config: SimConfig) -> float:
    """At p = 1 every step regenerates and the step law is uniform on the
    offsets (first coordinate)."""
    c = np.array([u[0] for u in config.U_offsets], dtype=np.float64)
    return float((c ** 2).mean())


def collect_regenerations(
    config: SimConfig, target_regs: int, *, steps_per_walk: int = 1500,
    replica_base: int = 0, slack: int = 40, seed_salt: int = 0x5A11,
):
    """Pool (tau_i, Y_i) over conditioned walks until target_regs are on
    record.  Returns (taus, Ys, walk_count, rejections)."""
    params = engine.EngineParams(d=config.d, p=config.p, offsets=config.U_offsets,
                                 base_seed=rng.chain(config.base_seed, seed_salt),
                                 capacity_law=config.capacity_law)
    taus_all, ys_all = [], []
    rep = replica_base
    total = 0
    rejections = 0
    origin = (0,) * config.d
    while total < target_regs:
        res = engine.conditioned_run(params, rep, [origin], [0], steps_per_walk,
                                     slack=slack)
        rec = build_record(res.walkers[0].path, res.walkers[0].regen_times, config.radius)
        taus_all.append(rec.taus)
        ys_all.append(rec.Ys)
        total += rec.count
        rejections += res.rejections
        rep += 1
    taus = np.concatenate(taus_all)
    ys = np.concatenate(ys_all)
    return taus, ys, rep - replica_base, rejections


def sigma_continuity_scan(
    config: SimConfig, p_list, per_p_budget: int, *, steps_per_walk: int = 1500,
):
    """sigma^2 estimates over a p grid; adjacent values should agree within
    combined error for a continuous function on a fine grid."""
    from .perc import estimate_pc

    guard = estimate_pc(
        SimConfig(d=config.d, p=config.p, U_offsets=config.U_offsets, H=96,
                  walk_steps=0, base_seed=rng.chain(config.base_seed, 0xDEAD)),
        p_list, samples=200)
    for (p, _, freq, _, hi) in guard:
        if hi < 0.05:
            raise ConfigError(f"p={p} appears subcritical (survival {freq:.3f})")
    rows = []
    for i, p in enumerate(sorted(p_list)):
        cfg_p = SimConfig(d=config.d, p=p, U_offsets=config.U_offsets,
                          H=config.H, walk_steps=config.walk_steps,
                          base_seed=rng.chain(config.base_seed, 0x51CA, i),
                          capacity_law=config.capacity_law)
        taus, ys, walks, _ = collect_regenerations(
            cfg_p, per_p_budget, steps_per_walk=steps_per_walk)
        est = estimate_sigma2(taus, ys)
        rows.append({"p": p, "sigma2": est.sigma2_hat, "se": est.se,
                     "n_regs": est.n_regs, "mean_tau": est.mean_tau})
    return rows


def tail_fit(samples, min_samples: int = 1000):
    """Exponential-rate fit of the log empirical survival over the bulk."""
    samples = np.asarray(samples)
    if len(samples) < min_samples:
        raise SampleSizeError(f"need >= {min_samples} samples, got {len(samples)}")
    if samples.min() <= 0:
        raise ValueError("samples must be positive")
    return fit_log_survival(samples)


def iid_diagnostics(taus: np.ndarray, Ys: np.ndarray, max_lag: int = 5):
    """Autocorrelations at lags 1..max_lag and a first-half/second-half
    two-sample comparison of the joint increment law."""
    taus = np.asarray(taus, dtype=np.float64)
    Ys = np.atleast_2d(np.asarray(Ys, dtype=np.float64))
    if Ys.shape[0] != len(taus):
        Ys = Ys.T
    n = len(taus)
    if n < 1000:
        raise SampleSizeError(f"need >= 1000 regenerations, got {n}")
    se = 1.0 / math.sqrt(n)
    series = {"tau": taus}
    for j in range(Ys.shape[1]):
        series[f"Y{j}"] = Ys[:, j]
    acf = {}
    max_abs_z = 0.0
    for name, x in series.items():
        rho = autocorrelations(x, max_lag)
        acf[name] = rho.tolist()
        max_abs_z = max(max_abs_z, float(np.abs(rho).max() / se))
    half = n // 2
    pvals = []
    for name, x in series.items():
        p = sps.ks_2samp(x[:half], x[half:]).pvalue
        pvals.append(float(p))
    halves_p = min(1.0, min(pvals) * len(pvals))  # Bonferroni
    return {
        "n": n,
        "acf": acf,
        "acf_se": se,
        "max_acf_z": max_abs_z,
        "halves_pvalue": halves_p,
    }


def symmetry_sign_test(Ys: np.ndarray):
    """Coordinatewise sign test for the symmetry of the regeneration
    displacement."""
    Ys = np.atleast_2d(np.asarray(Ys))
    if Ys.shape[0] < Ys.shape[1]:
        Ys = Ys.T
    return [sign_test_pvalue(Ys[:, j]) for j in range(Ys.shape[1])]


def support_check(taus: np.ndarray, Ys: np.ndarray, n_max: int = 6, radius: int = 1):
    """Coverage of the cone {(x, n): n <= n_max, |x| <= n} by observed
    (Y, tau) pairs, plus the deterministic bound |Y| <= radius * tau."""
    taus = np.asarray(taus, dtype=np.int64)
    Ys = np.atleast_2d(np.asarray(Ys, dtype=np.int64))
    if Ys.shape[0] != len(taus):
        Ys = Ys.T
    d = Ys.shape[1]
    if np.any(np.abs(Ys).max(axis=1) > radius * taus):
        raise AssertionError("observed |Y| > radius * tau")
    observed = set()
    sel = taus <= n_max
    for y, t in zip(Ys[sel], taus[sel]):
        observed.add((tuple(int(c) for c in y), int(t)))
    cone = set()
    from itertools import product
    for t in range(1, n_max + 1):
        for x in product(range(-t * radius, t * radius + 1), repeat=d):
            if max(abs(c) for c in x) <= t * radius:
                cone.add((x, t))
    hits = len(observed & cone)
    return {
        "coverage": hits / len(cone),
        "cone_size": len(cone),
        "observed_in_cone": hits,
        "bound_violations": 0,
    }


# ---------------------------------------------------------------------------
# central limit checks


def _ks_median_pvalue(values: np.ndarray, scale: float, batches: int = 3):
    """KS p-value against N(0, scale^2), median over disjoint batches to
    avoid single-draw flakiness."""
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    ps = []
    for b in range(batches):
        chunk = values[b * n // batches: (b + 1) * n // batches]
        ps.append(float(sps.kstest(chunk, "norm", args=(0.0, scale)).pvalue))
    return float(np.median(ps)), ps


def annealed_clt_core(
    config: SimConfig, n: int, replicas: int, sigma2: float,
    *, seed_salt: int = 0xA11E, slack: int = 40,
):
    """Pool X_n over fresh conditioned environments (one walk each) and test
    the normal limit; also reports the LLN statistic |mean X_n| / n."""
    params = engine.EngineParams(d=config.d, p=config.p, offsets=config.U_offsets,
                                 base_seed=rng.chain(config.base_seed, seed_salt),
                                 capacity_law=config.capacity_law)
    d = config.d
    xs = np.empty((replicas, d), dtype=np.int64)
    rejections = 0
    origin = (0,) * d
    for rep in range(replicas):
        res = engine.conditioned_run(params, rep, [origin], [0], n, slack=slack)
        xs[rep] = res.walkers[0].path[n]
        rejections += res.rejections
    scaled = xs / math.sqrt(n)
    out = {"n": n, "replicas": replicas, "rejections": rejections}
    mean = xs.mean(axis=0)
    se_mean = xs.std(axis=0, ddof=1) / math.sqrt(replicas)
    out["lln_mean_over_n"] = (np.abs(mean) / n).tolist()
    out["lln_z"] = (np.abs(mean) / se_mean).tolist()
    sigma = math.sqrt(sigma2)
    ks = [
        _ks_median_pvalue(scaled[:, j], sigma)[0]
        for j in range(d)
    ]
    out["ks_pvalues"] = ks
    out["empirical_var"] = scaled.var(axis=0, ddof=1).tolist()
    if d >= 2:
        cov = np.cov(scaled.T)
        diag = np.diag(cov)
        out["isotropy"] = {
            "offdiag_max_z": float(np.max(np.abs(
                (cov - np.diag(diag)) * math.sqrt(replicas)
            ) / sigma2)),
            "diag": diag.tolist(),
        }
    return out, xs


QUENCHED_TEST_FUNCS = {
    "tanh": (np.tanh, 1.0),
    "cos": (np.cos, 1.0),
    "clip_abs": (lambda x: np.clip(np.abs(x), 0.0, 2.0), 1.0),
}


def quenched_clt_core(
    config: SimConfig, n_values, env_count: int, walkers_per_env: int,
    sigma2: float, *, seed_salt: int = 0xC0DE, slack: int = 40,
    funcs=("tanh",),
):
    """Across-environment variance of the quenched means E_w[f(X_n/sqrt n)]
    over the n grid, with the walker-noise component removed (one-way
    ANOVA); also per-environment KS distances.

    The walk-step functions are bounded Lipschitz; constants recorded."""
    if walkers_per_env < 100:
        warnings.warn("walkers_per_env < 100: quenched means will be noisy")
    n_values = sorted(int(v) for v in n_values)
    n_max = n_values[-1]
    params = engine.EngineParams(d=config.d, p=config.p, offsets=config.U_offsets,
                                 base_seed=rng.chain(config.base_seed, seed_salt),
                                 capacity_law=config.capacity_law)
    d = config.d
    origin = (0,) * d
    sigma = math.sqrt(sigma2)
    fvals = {f: {n: np.empty((env_count, walkers_per_env)) for n in n_values}
             for f in funcs}
    ks_dist = {n: [] for n in n_values}
    for e in range(env_count):
        res = engine.conditioned_run(
            params, e, [origin] * walkers_per_env, list(range(walkers_per_env)),
            n_max, slack=slack,
            half_width=int(1.18 * engine.default_half_width(n_max + engine.gap_max_for(d), config.radius)),
        )
        for n in n_values:
            xn = np.array([w.path[n][0] for w in res.walkers], dtype=np.float64)
            z = xn / math.sqrt(n)
            for f in funcs:
                fvals[f][n][e] = QUENCHED_TEST_FUNCS[f][0](z)
            ks_dist[n].append(float(sps.kstest(z, "norm", args=(0.0, sigma)).statistic))
    out = {"n_values": n_values, "env_count": env_count,
           "walkers_per_env": walkers_per_env, "funcs": {}}
    for f in funcs:
        rows = []
        for n in n_values:
            vals = fvals[f][n]
            env_means = vals.mean(axis=1)
            within = vals.var(axis=1, ddof=1).mean()
            between_raw = env_means.var(ddof=1)
            between = between_raw - within / walkers_per_env
            rows.append({
                "n": n,
                "between_env_var": float(between),
                "between_env_var_raw": float(between_raw),
                "within_env_var": float(within),
            })
        vs = np.array([max(r["between_env_var"], 1e-12) for r in rows])
        ns = np.array(n_values, dtype=np.float64)
        slope, intercept = np.polyfit(np.log(ns), np.log(vs), 1)
        # bootstrap the slope CI over environments
        gen = np.random.default_rng(rng.chain(config.base_seed, seed_salt, 99) % 2 ** 63)
        slopes = []
        for _ in range(400):
            idx = gen.integers(0, env_count, env_count)
            vb = []
            for n in n_values:
                vals = fvals[f][n][idx]
                em = vals.mean(axis=1)
                w = vals.var(axis=1, ddof=1).mean()
                vb.append(max(em.var(ddof=1) - w / walkers_per_env, 1e-12))
            slopes.append(np.polyfit(np.log(ns), np.log(np.array(vb)), 1)[0])
        lo, hi = np.quantile(slopes, [0.025, 0.975])
        out["funcs"][f] = {
            "rows": rows,
            "loglog_slope": float(slope),
            "slope_ci": (float(lo), float(hi)),
            "strictly_decreasing": bool(np.all(np.diff(vs) < 0)),
        }
    out["ks_median"] = {n: float(np.median(ks_dist[n])) for n in n_values}
    return out
