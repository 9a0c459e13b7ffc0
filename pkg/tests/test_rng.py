import numpy as np
import pytest

from opbw import rng
from opbw import kernels


def test_mix64_python_numpy_numba_agree():
    gen = np.random.default_rng(1)
    for _ in range(200):
        z = int(gen.integers(0, 2 ** 63)) * 2 + int(gen.integers(0, 2))
        py = rng.mix64(z)
        np_ = int(rng.mix64_np(np.array([z], dtype=np.uint64))[0])
        nb = int(kernels.mix64(np.uint64(z)))
        assert py == np_ == nb


def test_site_key_matches_kernel_chain():
    seed = 0xDEADBEEF12345678
    for n in (0, 1, 17, 5000):
        for x in (-3, 0, 1, 250):
            py = rng.site_key(seed, rng.STREAM_OMEGA, n, (x,))
            nb = int(kernels.mix64(
                kernels.stream_key(np.uint64(seed), np.uint64(rng.STREAM_OMEGA), n)
                ^ np.uint64(np.int64(x))))
            assert py == nb


def test_bernoulli_threshold_edges():
    assert rng.bernoulli_threshold(1.0) == rng.MASK64
    assert rng.bernoulli_threshold(0.5) == pytest.approx(2 ** 63, rel=1e-12)


def test_fisher_yates_uniform_chi2():
    # all 6 orderings of 3 elements appear with equal frequency
    from scipy.stats import chisquare
    counts = {}
    for i in range(30000):
        key = rng.chain(42, 0x1234, i)
        order = tuple(rng.fisher_yates(key, 3))
        counts[order] = counts.get(order, 0) + 1
    assert len(counts) == 6
    stat, p = chisquare(list(counts.values()))
    assert p > 1e-4


def test_weighted_order_two_elements():
    # weights (3, 1): first element listed first with probability 3/4
    hits = 0
    n = 40000
    for i in range(n):
        key = rng.chain(7, 0x77, i)
        order = rng.weighted_order(key, [3, 1])
        hits += order[0] == 0
    se = (0.75 * 0.25 / n) ** 0.5
    assert abs(hits / n - 0.75) < 3 * se


def test_weighted_order_uniform_case_matches_law():
    # equal weights give each of the two orderings probability 1/2
    hits = 0
    n = 20000
    for i in range(n):
        order = rng.weighted_order(rng.chain(3, i), [2, 2])
        hits += order[0] == 0
    se = (0.25 / n) ** 0.5
    assert abs(hits / n - 0.5) < 4 * se
