import math

import numpy as np
import pytest
from scipy import stats

from vrgrad import sampling
from vrgrad.errors import NonPositiveConstant


def test_uniform():
    assert np.array_equal(sampling.uniform(4).p, [0.25] * 4)
    assert np.array_equal(sampling.uniform(1).p, [1.0])
    assert sampling.uniform(7).p.sum() == pytest.approx(1.0, abs=1e-12)


def test_lipschitz():
    assert np.allclose(sampling.lipschitz([1, 3]).p, [0.25, 0.75], rtol=0, atol=1e-15)
    assert np.allclose(sampling.lipschitz([2, 2, 4]).p, [0.25, 0.25, 0.5], rtol=0, atol=1e-15)
    assert np.array_equal(sampling.lipschitz([5.0] * 3).p, sampling.uniform(3).p)
    with pytest.raises(NonPositiveConstant):
        sampling.lipschitz([1.0, 0.0])


def test_improved_saga():
    d, S = sampling.improved_saga([1.0, 1.0], 1.0)
    assert np.array_equal(d.p, [0.5, 0.5])
    assert S == pytest.approx(6 + math.sqrt(20), rel=1e-15)
    d, _ = sampling.improved_saga([0.3] * 5, 2.0)
    assert np.array_equal(d.p, sampling.uniform(5).p)
    L = np.array([1.0, 2.0, 5.0])
    d, _ = sampling.improved_saga(L, 1e-12)
    assert np.allclose(d.p, L / L.sum(), rtol=1e-9)
    with pytest.raises(NonPositiveConstant):
        sampling.improved_saga([1.0], 0.0)


def test_extreme_weight_ratio():
    # n mu and L_i six orders apart must still normalize cleanly
    L = np.array([1e-6, 1.0, 1e6])
    d, _ = sampling.improved_saga(L, 1e-3)
    assert np.all(d.p > 0) and d.p.sum() == pytest.approx(1.0, abs=1e-12)


def test_single_index_always_zero():
    d = sampling.uniform(1)
    rng = np.random.default_rng(0)
    assert all(d.draw(rng) == 0 for _ in range(100))


@pytest.mark.parametrize("p", [[0.5, 0.5], [0.25, 0.75]])
def test_monte_carlo_frequencies(p):
    d = sampling.PrimalDistribution(p)
    N = 10**6
    draws = d.draw_many(np.random.default_rng(1), N)
    freq = np.bincount(draws, minlength=2) / N
    sigma = np.sqrt(np.array(p) * (1 - np.array(p)) / N)
    assert np.all(np.abs(freq - p) <= 3 * sigma)


def test_chi_square_goodness_of_fit():
    p = np.random.default_rng(3).uniform(0.1, 1.0, 12)
    d = sampling.PrimalDistribution(p)
    N = 10**6
    counts = np.bincount(d.draw_many(np.random.default_rng(4), N), minlength=12)
    _, pvalue = stats.chisquare(counts, N * d.p)
    assert pvalue > 1e-3


def test_scalar_and_batch_draws_agree():
    d = sampling.PrimalDistribution([0.1, 0.2, 0.3, 0.4])
    a = [d.draw(np.random.default_rng(9)) for _ in range(1)]
    rng = np.random.default_rng(9)
    seq = [d.draw(rng) for _ in range(500)]
    batch = d.draw_many(np.random.default_rng(9), 500)
    assert seq == list(batch)
    assert a[0] == seq[0]


def test_rejects_bad_weights():
    with pytest.raises(NonPositiveConstant):
        sampling.PrimalDistribution([1.0, -1.0])
    with pytest.raises(ValueError):
        sampling.PrimalDistribution([])
