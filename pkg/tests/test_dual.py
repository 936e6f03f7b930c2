import math

import numpy as np
import pytest

from vrgrad import dual, sampling
from vrgrad.errors import IncoherentUpdate

from conftest import random_least_squares


def test_saga_set_is_primal_index():
    s = dual.saga(5)
    rng = np.random.default_rng(0)
    assert all(list(s.draw_update_set(3, rng)) == [3] for _ in range(20))


def test_lsvrg_certain_coin():
    s = dual.lsvrg(4, 1.0)
    rng = np.random.default_rng(0)
    assert all(list(s.draw_update_set(0, rng)) == [0, 1, 2, 3] for _ in range(20))


def test_lsvrg_sets_all_or_nothing():
    s = dual.lsvrg(6, 0.3)
    rng = np.random.default_rng(1)
    sizes = {len(s.draw_update_set(2, rng)) for _ in range(2000)}
    assert sizes == {0, 6}
    assert s.coherent
    assert not any(dual.DualStrategy(k, 6, 0.3 if k != "qsaga" else 1).coherent for k in ("saga", "ilsvrg", "qsaga"))


def test_ilsvrg_independent_coins():
    s = dual.ilsvrg(2, 0.5)
    rng = np.random.default_rng(2)
    N = 10**6
    U = rng.random((N, 2)) < 0.5  # same rule as the strategy, vectorized
    masks = np.array([np.isin([0, 1], s.update_set_from_uniforms(0, u)) for u in rng.random((2000, 2))])
    assert masks.shape == (2000, 2)
    freq = U.mean(axis=0)
    assert np.all(np.abs(freq - 0.5) <= 3 * math.sqrt(0.25 / N))
    assert abs(np.corrcoef(U[:, 0], U[:, 1])[0, 1]) < 0.005
    rows, cols = s.update_pairs_from_uniforms(np.zeros(N, dtype=np.intp), rng.random((N, 2)))
    counts = np.bincount(cols, minlength=2) / N
    assert np.all(np.abs(counts - 0.5) <= 3 * math.sqrt(0.25 / N))


def test_expected_frequencies():
    p = sampling.PrimalDistribution([0.25, 0.75])
    assert np.allclose(dual.expected_update_frequency(dual.saga(2), p), [0.25, 0.75])
    assert np.array_equal(dual.lsvrg(5, 0.1).eta(), [0.1] * 5)
    assert dual.qsaga(4, 2, replacement=True).eta()[0] == pytest.approx(0.4375, abs=1e-15)
    assert dual.qsaga(4, 2).eta()[0] == 0.5


def test_with_replacement_frequency_by_enumeration():
    s = dual.qsaga(4, 2, replacement=True)
    incl = np.zeros(4)
    for prob, U in s.outcomes(0):
        incl[U] += prob
    assert np.allclose(incl, s.eta(), atol=1e-15)
    assert s.outcome_count() == 16


@pytest.mark.parametrize(
    "strategy",
    [dual.saga(5), dual.lsvrg(5, 0.3), dual.ilsvrg(5, 0.2), dual.qsaga(5, 2), dual.qsaga(5, 3, True)],
    ids=lambda s: s.label,
)
def test_empirical_frequency_matches_eta(strategy):
    p = sampling.PrimalDistribution([0.1, 0.15, 0.2, 0.25, 0.3])
    rng = np.random.default_rng(5)
    K = 10**5
    counts = np.zeros(5)
    for _ in range(K):
        counts[strategy.draw_update_set(p.draw(rng), rng)] += 1
    eta = strategy.eta(p)
    sigma = np.sqrt(eta * (1 - eta) / K)
    # 25 index/strategy comparisons: 4 sigma keeps the family-wise false alarm rate near 0.2%
    assert np.all(np.abs(counts / K - eta) <= 4 * sigma + 1e-12)


def test_outcomes_are_distributions():
    for s in (dual.saga(3), dual.lsvrg(3, 0.4), dual.ilsvrg(3, 0.4), dual.qsaga(3, 2), dual.qsaga(3, 2, True)):
        total = sum(prob for prob, _ in s.outcomes(1))
        assert total == pytest.approx(1.0, abs=1e-14)
        assert sum(1 for _ in s.outcomes(1)) == s.outcome_count()


def test_qsaga_without_replacement_subsets_uniform():
    s = dual.qsaga(4, 2)
    rng = np.random.default_rng(6)
    seen = {}
    for _ in range(60000):
        key = tuple(s.draw_update_set(0, rng))
        assert len(key) == 2
        seen[key] = seen.get(key, 0) + 1
    assert len(seen) == 6
    freq = np.array(list(seen.values())) / 60000
    assert np.all(np.abs(freq - 1 / 6) < 0.01)


def test_q_from_eta():
    assert dual.q_from_eta(2.4 / 100, 100) == 2
    assert dual.q_from_eta(1e-9, 100) == 1
    assert dual.q_from_eta(1.0, 7) == 7


def test_full_table_updates(rng):
    prob = random_least_squares(rng, 4, 2)
    x0, x1 = rng.standard_normal(2), rng.standard_normal(2)
    st, evals = dual.init_storage("full_table", prob, x0)
    assert evals == 4
    before = st.table.copy()
    assert dual.apply_dual_update(st, dual.saga(4), np.empty(0, dtype=np.intp), prob, x1) == 0
    assert np.array_equal(st.table, before)
    old_sum = st.total.copy()
    assert dual.apply_dual_update(st, dual.saga(4), np.array([2]), prob, x1) == 1
    g = prob.gradient(2, x1)
    assert np.array_equal(dual.dual_read(st, prob, 2)[0], g)
    assert np.allclose(st.total - old_sum, g - before[2], atol=1e-14)
    assert dual.apply_dual_update(st, dual.lsvrg(4, 1.0), np.arange(4), prob, x1) == 4
    assert np.allclose(st.total, 4 * prob.full_gradient(x1), atol=1e-12)


def test_cached_gradient_is_reused(rng):
    prob = random_least_squares(rng, 4, 2)
    x = rng.standard_normal(2)
    st, _ = dual.init_storage("full_table", prob, np.zeros(2))
    g = prob.gradient(1, x)
    assert st.apply(prob, np.array([1]), x, cached=(1, g)) == 0
    assert st.apply(prob, np.array([0, 1, 3]), x, cached=(1, g)) == 2


def test_anchor_layout(rng):
    prob = random_least_squares(rng, 5, 3)
    xh = rng.standard_normal(3)
    an, evals = dual.init_storage("anchor", prob, xh)
    ft, _ = dual.init_storage("full_table", prob, xh)
    assert evals == 5
    for i in range(5):
        y, cost = dual.dual_read(an, prob, i)
        assert cost == 1
        assert np.allclose(y, ft.read(prob, i)[0], rtol=0, atol=1e-15)
    assert np.allclose(an.total, ft.total, atol=1e-13)
    with pytest.raises(IncoherentUpdate):
        an.apply(prob, np.array([0, 2]), xh)
    assert an.apply(prob, np.empty(0, dtype=np.intp), xh) == 0
    x = rng.standard_normal(3)
    assert an.apply(prob, np.arange(5), x) == 5
    assert np.allclose(an.total, 5 * prob.full_gradient(x), atol=1e-12)


def test_running_sum_drift(rng):
    prob = random_least_squares(rng, 30, 3)
    st, _ = dual.init_storage("full_table", prob, np.zeros(3))
    s = dual.saga(30)
    for k in range(10**4):
        x = rng.standard_normal(3)
        st.apply(prob, s.draw_update_set(int(rng.integers(30)), rng), x)
    assert np.max(np.abs(st.total - st.table.sum(axis=0))) < 1e-8


def test_strategy_validation():
    with pytest.raises(ValueError):
        dual.lsvrg(3, 0.0)
    with pytest.raises(ValueError):
        dual.qsaga(3, 4)
    with pytest.raises(ValueError):
        dual.DualStrategy("svrg", 3)
    with pytest.raises(ValueError):
        dual.saga(3).eta()
