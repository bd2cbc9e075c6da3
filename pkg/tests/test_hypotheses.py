"""Linear models, gradient updates, the finite class, candidate pruning, and
the two disagreement tests."""
from __future__ import annotations

import math

import numpy as np
import pytest

from idbal.data import Example, FeatureVector, LoggedTriple
from idbal.estimators import WeightedSample
from idbal.hypotheses import (
    CandidateSetExact,
    FiniteClass,
    LinearModel,
    approx_dis_mask,
    approx_dis_test,
    classification_error,
    erm_weighted,
    exact_dis_test,
    ogd_stepsize,
    ogd_update,
    update_candidates,
)


def _weighted_squared_loss(weights: np.ndarray, x: FeatureVector, y: int, u: float) -> float:
    """Independent restatement of the surrogate the update descends."""
    score = weights[0] + sum(weights[i] * v for i, v in x.items)
    target = 2.0 * y - 1.0
    return u * (score - target) ** 2


class TestLinearModel:
    def test_score_with_bias(self):
        model = LinearModel(np.array([0.5, 2.0, -1.0]))
        x = FeatureVector({1: 3.0, 2: 1.0})
        assert model.raw_score(x) == 0.5 + 6.0 - 1.0

    def test_predict_tie_goes_positive(self):
        model = LinearModel(np.zeros(3))
        assert model.predict(FeatureVector({1: 1.0})) == 1

    def test_margin_normalizes_by_weight_norm(self):
        model = LinearModel(np.array([0.0, 3.0, 4.0]))
        x = FeatureVector({1: 1.0})
        np.testing.assert_allclose(model.margin(x), 3.0 / 5.0)

    def test_margin_zero_weights(self):
        model = LinearModel(np.zeros(2))
        assert model.margin(FeatureVector({1: 5.0})) == 0.0

    def test_index_beyond_dimension_rejected(self):
        model = LinearModel.zeros(2)
        with pytest.raises(ValueError):
            model.raw_score(FeatureVector({3: 1.0}))

    def test_csv_round_trip(self):
        model = LinearModel(np.array([0.125, -2.5, 1e-9]))
        back = LinearModel.from_csv_line(model.to_csv_line())
        np.testing.assert_array_equal(back.weights, model.weights)


class TestStepsizeSchedule:
    def test_first_update_value(self):
        np.testing.assert_allclose(ogd_stepsize(1, 1.0), math.sqrt(0.5))

    def test_decreasing(self):
        values = [ogd_stepsize(t, 0.25) for t in range(1, 50)]
        assert values == sorted(values, reverse=True)

    def test_validation(self):
        with pytest.raises(ValueError):
            ogd_stepsize(1, 0.0)
        with pytest.raises(ValueError):
            ogd_stepsize(-1, 1.0)


class TestOgdUpdate:
    def test_hand_value(self):
        # eta = 1, first update: stepsize sqrt(1/2); residual 0 - 1 = -1;
        # scale = sqrt(1/2) * 1 * 2 * (-1); bias and the active coordinate
        # both move by +sqrt(2)
        model = ogd_update(LinearModel.zeros(1), FeatureVector({1: 1.0}), 1, 1.0, 1.0)
        np.testing.assert_allclose(model.weights, [math.sqrt(2.0), math.sqrt(2.0)])
        assert model.steps == 1

    def test_zero_weight_advances_clock_only(self):
        start = LinearModel(np.array([1.0, 2.0]))
        model = ogd_update(start, FeatureVector({1: 1.0}), 0, 0.0, 1.0)
        np.testing.assert_array_equal(model.weights, start.weights)
        assert model.steps == 1

    def test_label_domain(self):
        with pytest.raises(ValueError):
            ogd_update(LinearModel.zeros(1), FeatureVector({1: 1.0}), 2, 1.0, 1.0)

    def test_descends_the_weighted_surrogate(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            dim = int(rng.integers(1, 6))
            weights = rng.normal(size=dim + 1)
            x = FeatureVector({i + 1: float(v) for i, v in enumerate(rng.uniform(-1, 1, dim))})
            y = int(rng.integers(0, 2))
            u = float(rng.uniform(0.1, 5.0))
            model = LinearModel(weights.copy(), steps=int(rng.integers(0, 200)))
            before = _weighted_squared_loss(model.weights, x, y, u)
            if before < 1e-12:
                continue
            after_model = ogd_update(model, x, y, u, 0.01)
            after = _weighted_squared_loss(after_model.weights, x, y, u)
            assert after < before

    def test_gradient_matches_finite_differences(self):
        # central differences on the weighted surrogate, coordinate by
        # coordinate, against the analytic step the update takes
        rng = np.random.default_rng(17)
        for _ in range(25):
            dim = int(rng.integers(1, 7))
            weights = rng.normal(size=dim + 1)
            entries = {
                int(i): float(v)
                for i, v in zip(
                    rng.choice(np.arange(1, dim + 1), size=rng.integers(1, dim + 1), replace=False),
                    rng.uniform(-2, 2, dim),
                )
            }
            x = FeatureVector(entries)
            y = int(rng.integers(0, 2))
            u = float(rng.uniform(0.2, 3.0))
            steps = int(rng.integers(0, 50))
            model = LinearModel(weights.copy(), steps=steps)
            updated = ogd_update(model, x, y, u, 0.5)
            stepsize = ogd_stepsize(steps + 1, 0.5)
            analytic = (weights - updated.weights) / stepsize
            h = 1e-6
            for coord in range(dim + 1):
                bump = np.zeros(dim + 1)
                bump[coord] = h
                numeric = (
                    _weighted_squared_loss(weights + bump, x, y, u)
                    - _weighted_squared_loss(weights - bump, x, y, u)
                ) / (2 * h)
                np.testing.assert_allclose(analytic[coord], numeric, rtol=1e-5, atol=1e-7)


def _tiny_class() -> tuple[FiniteClass, list[FeatureVector]]:
    pool = [FeatureVector({1: float(i + 1)}) for i in range(4)]
    labels = np.array(
        [
            [0, 0, 0, 0],
            [1, 1, 1, 1],
            [0, 1, 1, 0],
            [0, 0, 1, 1],
        ],
        dtype=np.int8,
    )
    return FiniteClass(pool, labels), pool


class TestFiniteClass:
    def test_member_prediction(self):
        hclass, pool = _tiny_class()
        assert hclass.member(2).predict(pool[1]) == 1
        assert hclass.member(0).predict(pool[1]) == 0

    def test_unknown_instance_rejected(self):
        hclass, _ = _tiny_class()
        with pytest.raises(ValueError):
            hclass.pool_position(FeatureVector({1: 99.0}))

    def test_predictions_matrix(self):
        hclass, pool = _tiny_class()
        preds = hclass.predictions([pool[3], pool[0]])
        np.testing.assert_array_equal(preds[:, 0], [0, 1, 0, 1])
        np.testing.assert_array_equal(preds[:, 1], [0, 1, 0, 0])

    def test_from_classifiers(self):
        pool = [FeatureVector({1: 1.0}), FeatureVector({1: 2.0})]
        members = [LinearModel(np.array([0.0, 1.0])), LinearModel(np.array([1.5, -1.0]))]
        hclass = FiniteClass.from_classifiers(pool, members)
        np.testing.assert_array_equal(hclass.labels, [[1, 1], [1, 0]])


class TestErmAndCandidates:
    def _sample(self, labels: list[int], q0: float = 0.5) -> WeightedSample:
        _, pool = _tiny_class()
        triples = [LoggedTriple(pool[i], 1, y) for i, y in enumerate(labels)]
        count = len(labels)
        return WeightedSample.balanced(triples, [q0] * count, [0.0] * count, m=count, n=0)

    def test_erm_picks_minimum(self):
        hclass, _ = _tiny_class()
        sample = self._sample([0, 1, 1, 0])  # member 2 matches exactly
        index, value = erm_weighted(hclass, sample)
        assert index == 2
        assert value == 0.0

    def test_erm_tie_breaks_low_index(self):
        hclass, _ = _tiny_class()
        sample = self._sample([0, 0, 1, 1])  # members 0 and 3 both make 1 mistake... member 3 matches
        index, _ = erm_weighted(hclass, sample)
        assert index == 3
        # force an exact tie: empty sample makes every loss zero
        empty = WeightedSample(records=(), m=1, n=0)
        index, value = erm_weighted(hclass, empty)
        assert index == 0 and value == 0.0

    def test_erm_respects_restriction(self):
        hclass, _ = _tiny_class()
        sample = self._sample([0, 1, 1, 0])
        index, _ = erm_weighted(hclass, sample, CandidateSetExact((1, 3)))
        assert index in (1, 3)

    def test_update_keeps_within_threshold(self):
        hclass, _ = _tiny_class()
        sample = self._sample([0, 1, 1, 0])
        current = CandidateSetExact.full(hclass)
        # per-mistake cost is 1/(4*0.5) = 0.5; member 2 has loss 0,
        # members 0 and 3 have loss 1.0, member 1 has loss 1.0
        kept = update_candidates(hclass, sample, current, lambda i, best: 0.6)
        assert kept.active == (2,)
        kept = update_candidates(hclass, sample, current, lambda i, best: 1.0)
        assert kept.active == (0, 1, 2, 3)

    def test_best_survives_negative_threshold(self):
        hclass, _ = _tiny_class()
        sample = self._sample([0, 1, 1, 0])
        kept = update_candidates(hclass, sample, CandidateSetExact.full(hclass), lambda i, best: -5.0)
        assert kept.active == (2,)

    def test_candidate_set_validation(self):
        with pytest.raises(ValueError):
            CandidateSetExact(())
        with pytest.raises(ValueError):
            CandidateSetExact((1, 1))


class TestExactDisagreement:
    def test_detects_split_predictions(self):
        hclass, pool = _tiny_class()
        candidates = CandidateSetExact((0, 2))
        assert exact_dis_test(hclass, candidates, pool[1]) == 1  # 0 vs 1
        assert exact_dis_test(hclass, candidates, pool[0]) == 0  # both say 0

    def test_singleton_never_disagrees(self):
        hclass, pool = _tiny_class()
        candidates = CandidateSetExact((1,))
        assert all(exact_dis_test(hclass, candidates, x) == 0 for x in pool)


class TestApproxDisagreement:
    def test_frozen_decision(self):
        model = LinearModel(np.array([0.0, 1.0, 0.0]))
        x = FeatureVector({1: 1.0, 2: 1.0})  # score 1, x~ . x~ = 3
        # gap = 2 / (0.1 * 3) = 6.667 against rhs ~ 0.0218: outside
        assert approx_dis_test(model, x, 0.1, 0.01, 0.25, 9.0, 100) == 0
        # capacity large enough flips the decision
        assert approx_dis_test(model, x, 0.1, 500.0, 0.25, 9.0, 100) == 1

    def test_zero_margin_always_inside(self):
        model = LinearModel(np.array([0.0, 1.0, 0.0]))
        x = FeatureVector({2: 1.0})  # score 0
        assert approx_dis_test(model, x, 0.01, 0.01, 0.0, 100.0, 100) == 1

    def test_mask_agrees_with_pointwise(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            dim = int(rng.integers(2, 6))
            model = LinearModel(rng.normal(size=dim + 1), steps=int(rng.integers(1, 30)))
            xs = [
                FeatureVector({i + 1: float(v) for i, v in enumerate(rng.uniform(-1, 1, dim))})
                for _ in range(15)
            ]
            dense = np.array([[1.0] + [dict(x.items).get(i + 1, 0.0) for i in range(dim)] for x in xs])
            stepsize = float(rng.uniform(0.01, 0.5))
            capacity = float(rng.choice([0.01, 0.64, 40.96]))
            loss = float(rng.uniform(0.0, 0.5))
            effective = float(rng.uniform(0.5, 50.0))
            count = int(rng.integers(2, 500))
            mask = approx_dis_mask(model, dense, stepsize, capacity, loss, effective, count)
            pointwise = [approx_dis_test(model, x, stepsize, capacity, loss, effective, count) for x in xs]
            np.testing.assert_array_equal(mask.astype(int), pointwise)


class TestClassificationError:
    def test_hand_value(self):
        examples = [
            Example(FeatureVector({1: 1.0}), 1),
            Example(FeatureVector({1: -1.0}), 1),
            Example(FeatureVector({1: 2.0}), 0),
            Example(FeatureVector({1: -2.0}), 0),
        ]
        model = LinearModel(np.array([0.0, 1.0]))
        assert classification_error(model, examples) == 0.5
