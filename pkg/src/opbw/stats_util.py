"""Small shared statistical helpers (kept separate to avoid import cycles)."""

from __future__ import annotations

import numpy as np


def wilson_interval(successes: int, total: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if total == 0:
        return (0.0, 1.0)
    phat = successes / total
    denom = 1 + z * z / total
    center = (phat + z * z / (2 * total)) / denom
    half = z * np.sqrt(phat * (1 - phat) / total + z * z / (4 * total * total)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def sign_test_pvalue(values: np.ndarray) -> float:
    """Two-sided sign test that the distribution is symmetric about zero
    (zeros are discarded)."""
    from scipy import stats

    pos = int((values > 0).sum())
    neg = int((values < 0).sum())
    n = pos + neg
    if n == 0:
        return 1.0
    return float(stats.binomtest(pos, n, 0.5).pvalue)


def autocorrelations(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags 1..max_lag."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    if denom == 0:
        return np.zeros(max_lag)
    out = np.empty(max_lag)
    for lag in range(1, max_lag + 1):
        out[lag - 1] = float(np.dot(xc[:-lag], xc[lag:])) / denom
    return out


def loglog_slope_ci(x: np.ndarray, y: np.ndarray, n_boot: int, seed: int):
    """Least-squares slope of log y vs log x with a bootstrap CI over the
    (x, y) pairs is meaningless for 3 points; instead y is assumed to carry
    per-point standard errors elsewhere.  Here: plain slope plus normal CI
    from the regression residuals."""
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)


def fit_log_survival(samples: np.ndarray, min_tail: int = 30, drop_top: float = 0.01):
    """Least-squares exponential-rate fit on the log empirical survival.

    Uses survival levels n with at least `min_tail` exceedances, after
    dropping the extreme top fraction.  Returns dict with rate, intercept,
    r2, n_range, rate_se.
    """
    samples = np.asarray(samples)
    if len(samples) < 10 or samples.min() <= 0:
        raise ValueError("need >= 10 positive samples")
    if samples.max() == samples.min():
        raise ValueError("degenerate sample (zero variance)")
    n_total = len(samples)
    hi_cut = np.quantile(samples, 1.0 - drop_top)
    xs, ys = [], []
    for n in range(int(samples.min()), int(samples.max()) + 1):
        if n > hi_cut:
            break
        count = int((samples > n).sum())
        if count < min_tail:
            break
        xs.append(n)
        ys.append(np.log(count / n_total))
    if len(xs) < 3:
        raise ValueError("too few tail points to fit")
    xs_a, ys_a = np.array(xs, dtype=float), np.array(ys)
    slope, intercept = np.polyfit(xs_a, ys_a, 1)
    pred = slope * xs_a + intercept
    ss_res = float(np.sum((ys_a - pred) ** 2))
    ss_tot = float(np.sum((ys_a - ys_a.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    dof = max(1, len(xs_a) - 2)
    sigma2 = ss_res / dof
    sxx = float(np.sum((xs_a - xs_a.mean()) ** 2))
    rate_se = float(np.sqrt(sigma2 / sxx)) if sxx > 0 else float("inf")
    return {
        "rate": -float(slope),
        "intercept": float(intercept),
        "r2": r2,
        "n_range": (int(xs_a[0]), int(xs_a[-1])),
        "rate_se": rate_se,
    }
