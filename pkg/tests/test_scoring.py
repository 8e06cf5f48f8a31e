import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from smdl import synth
from smdl.core import Dataset, ObjectiveWeights, SelectionConfig
from smdl.scoring import (
    cache_is_stale,
    feature_match_modular,
    feature_match_set_gain,
    mean_closeness,
    refresh,
    uncertainty,
    uncertainty_all,
)


class TestUncertainty:
    def test_certain_prediction(self):
        assert uncertainty([1.0, 0.0, 0.0]) == 0.0

    def test_uniform_four(self):
        assert uncertainty([0.25] * 4) == pytest.approx(math.log(4))

    def test_fair_coin(self):
        assert uncertainty([0.5, 0.5]) == pytest.approx(math.log(2))

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=2, max_size=10))
    def test_entropy_bounds(self, raw):
        total = sum(raw)
        if total == 0:
            raw = [1.0] * len(raw)
            total = float(len(raw))
        p = np.asarray(raw) / total
        h = uncertainty(p)
        assert -1e-12 <= h <= math.log(len(p)) + 1e-12

    def test_maximum_exactly_at_uniform(self):
        for c in (2, 3, 7):
            assert uncertainty([1.0 / c] * c) == pytest.approx(math.log(c))
            gen = np.random.default_rng(c)
            for _ in range(20):
                p = gen.dirichlet(np.ones(c))
                if np.allclose(p, 1.0 / c):
                    continue
                assert uncertainty(p) < math.log(c)

    def test_batch_matches_scalar(self):
        gen = np.random.default_rng(0)
        probs = gen.dirichlet(np.ones(5), size=20)
        batch = uncertainty_all(probs)
        for k in range(20):
            assert batch[k] == pytest.approx(uncertainty(probs[k]))
            assert batch[k] == pytest.approx(oracles.entropy(probs[k].tolist()))


class TestMeanCloseness:
    def test_parallel(self):
        mu = np.array([1.0, 2.0])
        assert mean_closeness(mu, mu) == pytest.approx(1.0)

    def test_antiparallel(self):
        mu = np.array([1.0, 2.0])
        assert mean_closeness(-mu, mu) == pytest.approx(0.0)

    def test_orthogonal(self):
        assert mean_closeness([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.5)

    def test_zero_norm_neutral(self):
        assert mean_closeness([0.0, 0.0], [1.0, 1.0]) == 0.5
        assert mean_closeness([1.0, 1.0], [0.0, 0.0]) == 0.5


class TestFeatureMatch:
    def test_all_zeros(self):
        assert feature_match_modular([0.0, 0.0]) == 0.0

    def test_single_entry(self):
        assert feature_match_modular([4.0]) == pytest.approx(2.0)

    def test_three_squares(self):
        assert feature_match_modular([1.0, 4.0, 9.0]) == pytest.approx(6.0)

    def test_set_gain_first_pick_equals_modular(self):
        row = np.array([1.0, 4.0, 9.0])
        assert feature_match_set_gain(np.zeros(3), row) == pytest.approx(6.0)

    def test_set_gain_example(self):
        assert feature_match_set_gain(np.array([4.0]), np.array([5.0])) == pytest.approx(1.0)

    def test_accumulator_untouched(self):
        acc = np.array([4.0, 1.0])
        feature_match_set_gain(acc, np.array([1.0, 1.0]))
        np.testing.assert_array_equal(acc, [4.0, 1.0])

    def test_gain_never_exceeds_first_pick(self):
        # brute-force recomputation of the sqrt sums over random sequences
        gen = np.random.default_rng(4)
        for _ in range(30):
            rows = np.abs(gen.normal(size=(6, 3)))
            first = float(np.sqrt(rows[-1]).sum())
            acc = np.zeros(3)
            for r in rows[:-1]:
                acc += r
                total_with = sum(math.sqrt(a + b) for a, b in zip(acc, rows[-1]))
                total_without = sum(math.sqrt(a) for a in acc)
                gain = feature_match_set_gain(acc, rows[-1])
                assert gain == pytest.approx(total_with - total_without, abs=1e-12)
                assert gain <= first + 1e-12

    @settings(max_examples=150, deadline=None)
    @given(st.data())
    def test_diminishing_in_accumulator(self, data):
        dims = data.draw(st.integers(1, 5))
        nonneg = st.floats(min_value=0.0, max_value=100.0, allow_nan=False)
        a = np.array(data.draw(st.lists(nonneg, min_size=dims, max_size=dims)))
        extra = np.array(data.draw(st.lists(nonneg, min_size=dims, max_size=dims)))
        row = np.array(data.draw(st.lists(nonneg, min_size=dims, max_size=dims)))
        bigger = a + extra  # element-wise >= a
        assert feature_match_set_gain(a, row) >= feature_match_set_gain(bigger, row) - 1e-12


class TestRefresh:
    def cfg(self, rate=5, seed=0):
        return SelectionConfig(batch_size=2, partitions=2, refresh_rate=rate, seed=seed)

    def test_refresh_window(self):
        ds = synth.random_instance(2, 12)
        w = ObjectiveWeights()
        cache = None
        stamps = []
        for it in range(10):
            cache = refresh(cache, ds, it, self.cfg(5), w)
            stamps.append(cache.model_stamp)
        # one recomputation at the start of each window of five
        assert stamps == [0, 0, 0, 0, 0, 5, 5, 5, 5, 5]
        assert cache.refresh_count == 2

    def test_refresh_rate_one_recomputes_every_call(self):
        ds = synth.random_instance(2, 12)
        w = ObjectiveWeights()
        cache = None
        for it in range(4):
            cache = refresh(cache, ds, it, self.cfg(1), w)
            assert cache.model_stamp == it
        assert cache.refresh_count == 4

    def test_recomputation_count_over_iterations(self):
        ds = synth.random_instance(2, 12)
        w = ObjectiveWeights()
        for rate, iters in ((5, 100), (5, 101), (3, 10), (7, 7)):
            cache = None
            for it in range(iters):
                cache = refresh(cache, ds, it, self.cfg(rate), w)
            assert cache.refresh_count == math.ceil(iters / rate)

    def test_deterministic_contents(self):
        ds = synth.random_instance(2, 12)
        w = ObjectiveWeights(metric="gaussian")
        a = refresh(None, ds, 0, self.cfg(), w)
        b = refresh(None, ds, 0, self.cfg(), w)
        np.testing.assert_array_equal(a.u_scores, b.u_scores)
        np.testing.assert_array_equal(a.mc_scores, b.mc_scores)
        np.testing.assert_array_equal(a.fm_scores, b.fm_scores)
        assert a.redundancy_scale == b.redundancy_scale
        assert a.metric == b.metric

    def test_age_invariant_when_consumed(self):
        ds = synth.random_instance(2, 12)
        w = ObjectiveWeights()
        cache = None
        for it in range(25):
            cache = refresh(cache, ds, it, self.cfg(5), w)
            assert cache.age < 5

    def test_scores_normalized_and_ranking_preserved(self):
        ds = synth.random_instance(3, 30)
        w = ObjectiveWeights()
        cache = refresh(None, ds, 0, self.cfg(), w)
        for vec in (cache.u_scores, cache.mc_scores, cache.fm_scores):
            assert (vec >= 0.0).all() and (vec <= 1.0).all()
        raw = uncertainty_all(ds.probs)
        order_raw = np.argsort(raw, kind="stable")
        order_norm = np.argsort(cache.u_scores, kind="stable")
        np.testing.assert_array_equal(order_raw, order_norm)

    def test_scores_match_independent_recomputation(self):
        ds = synth.random_instance(4, 15)
        w = ObjectiveWeights()
        cache = refresh(None, ds, 0, self.cfg(), w)
        table = oracles.ScoreTable(ds, w)
        np.testing.assert_allclose(cache.u_scores, table.u, atol=1e-12)
        np.testing.assert_allclose(cache.mc_scores, table.mc, atol=1e-12)
        np.testing.assert_allclose(cache.fm_scores, table.fm, atol=1e-12)
        assert cache.redundancy_scale == pytest.approx(table.scale)

    def test_missing_fixed_features_gives_zero_fm(self):
        ds = synth.random_instance(4, 15)
        ds = Dataset(ds.features, ds.probs, ds.labels, fixed_features=None)
        cache = refresh(None, ds, 0, self.cfg(), ObjectiveWeights())
        np.testing.assert_array_equal(cache.fm_scores, np.zeros(15))

    def test_cache_is_stale(self):
        assert cache_is_stale(None, 5)
        ds = synth.random_instance(2, 12)
        cache = refresh(None, ds, 0, self.cfg(5), ObjectiveWeights())
        assert not cache_is_stale(cache, 5)
        assert cache_is_stale(cache, 1)
