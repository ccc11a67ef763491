import math

import numpy as np
import pytest
from scipy import special, stats

from vaemhn.numerics import make_rng
from vaemhn.stats import betainc, bonferroni, t_sf_two_sided, welch_t


def test_welch_matches_scipy_on_100_pairs():
    rng = make_rng(0)
    for _ in range(100):
        na, nb = rng.integers(2, 300, size=2)
        a = rng.normal(rng.uniform(-1, 1), rng.uniform(0.1, 3), na)
        b = rng.normal(rng.uniform(-1, 1), rng.uniform(0.1, 3), nb)
        t, p, _ = welch_t(a, b)
        ref = stats.ttest_ind(a, b, equal_var=False)
        assert t == pytest.approx(ref.statistic, rel=1e-8, abs=1e-12)
        assert p == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-300)


def test_tiny_p_values_match_scipy():
    rng = make_rng(1)
    a, b = rng.normal(0, 1, 128), rng.normal(3, 1, 128)
    t, p, _ = welch_t(a, b)
    ref = stats.ttest_ind(a, b, equal_var=False)
    assert p < 1e-30
    assert p == pytest.approx(ref.pvalue, rel=1e-8)


def test_identical_samples():
    x = make_rng(2).standard_normal(50)
    t, p, _ = welch_t(x, x.copy())
    assert t == 0.0 and p == 1.0


def test_zero_variance_cases():
    assert welch_t([1.0, 1.0, 1.0], [1.0, 1.0])[:2] == (0.0, 1.0)
    t, p, _ = welch_t([2.0, 2.0], [1.0, 1.0, 1.0])
    assert t == math.inf and p == 0.0


def test_too_few_observations():
    with pytest.raises(ValueError):
        welch_t([1.0], [1.0, 2.0])


def test_betainc_matches_scipy():
    rng = make_rng(3)
    for _ in range(300):
        a, b, x = rng.uniform(0.05, 200), rng.uniform(0.05, 50), rng.uniform()
        assert betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), rel=1e-10, abs=1e-300)
    assert betainc(2, 3, 0.0) == 0.0 and betainc(2, 3, 1.0) == 1.0
    with pytest.raises(ValueError):
        betainc(0, 1, 0.5)


def test_t_tail_matches_scipy():
    for df in (1, 2.5, 10, 126.3, 1000):
        for t in (0.0, 0.5, 2.0, 8.0, -3.0):
            assert t_sf_two_sided(t, df) == pytest.approx(2 * stats.t.sf(abs(t), df), rel=1e-9)


def test_bonferroni():
    assert bonferroni([1e-5, 0.01, 0.5], 30).tolist() == pytest.approx([3e-4, 0.3, 1.0])
    assert bonferroni([0.1, 0.2]).tolist() == pytest.approx([0.2, 0.4])


def test_extreme_separation():
    jitter = make_rng(4).uniform(-1e-6, 1e-6, 8)
    _, p, _ = welch_t(np.zeros(4) + jitter[:4], np.ones(4) + jitter[4:])
    assert p < 1e-6


def test_bonferroni_never_below_raw():
    p = make_rng(5).uniform(size=200) ** 3
    corr = bonferroni(p, 30)
    assert np.all(corr >= p) and np.all(corr <= 1.0)
