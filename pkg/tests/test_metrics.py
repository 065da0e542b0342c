"""Evaluation metrics: hand-computed oracles, a brute-force AUROC twin,
and the ordering/transform invariances of the retention machinery."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eaucal import metrics
from eaucal.metrics import (EvalConfig, EvaluationRecord, ade, auroc,
                            error_retention_curve, evaluation_report,
                            f1_retention_curve, pearson_r, softmax_weights,
                            weighted_ade_from_parts)


def _traj(points):
    return np.asarray(points, dtype=np.float64)


class TestAde:
    def test_identity(self):
        t = _traj([[1.0, 2.0], [3.0, 4.0]])
        assert ade(t, t) == 0.0

    def test_constant_offset(self):
        gt = _traj([[0, 0], [1, 1], [2, 2]])
        pred = gt + np.array([3.0, 4.0])
        assert ade(pred, gt) == 5.0

    def test_hand_computed_two_steps(self):
        gt = _traj([[0, 0], [0, 0]])
        pred = _traj([[1, 0], [0, 0]])
        assert ade(pred, gt) == 0.5

    def test_horizon_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shapes"):
            ade(_traj([[0, 0]]), _traj([[0, 0], [1, 1]]))

    def test_symmetry_and_nonnegativity(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
        assert ade(a, b) == ade(b, a) >= 0.0


class TestWeightedAde:
    def test_single_plan(self):
        assert weighted_ade_from_parts([2.7], [13.0]) == 2.7

    def test_uniform_weights(self):
        assert weighted_ade_from_parts([1.0, 3.0], [5.0, 5.0]) == 2.0

    def test_softmax_hand_evaluation(self):
        # softmax(log 3, log 1) = (0.75, 0.25)
        w = weighted_ade_from_parts([1.0, 3.0], [math.log(3.0), math.log(1.0)])
        assert abs(w - 1.5) < 1e-12

    def test_plan_set_interface(self):
        class Plans:
            plans = [_traj([[1, 0], [1, 0]]), _traj([[3, 0], [3, 0]])]
            certainties = np.array([0.0, 0.0])
        gt = _traj([[0, 0], [0, 0]])
        assert metrics.weighted_ade(Plans(), gt) == 2.0

    @given(st.lists(st.tuples(st.floats(0, 10), st.floats(-5, 5)), min_size=1, max_size=8))
    @settings(max_examples=80, deadline=None)
    def test_bounded_by_plan_extremes(self, pairs):
        ades = [p[0] for p in pairs]
        certs = [p[1] for p in pairs]
        w = weighted_ade_from_parts(ades, certs)
        assert min(ades) - 1e-12 <= w <= max(ades) + 1e-12

    def test_weights_sum_to_one(self):
        w = softmax_weights([1.0, -2.0, 0.3])
        assert abs(w.sum() - 1.0) < 1e-12


class TestPearson:
    def test_affine_increasing(self):
        a = np.array([1.0, 2.0, 5.0, 7.0])
        assert abs(pearson_r(a, 2 * a + 1) - 1.0) < 1e-12

    def test_negation(self):
        a = np.array([1.0, 2.0, 5.0])
        assert abs(pearson_r(a, -a) + 1.0) < 1e-12

    def test_hand_computed(self):
        assert abs(pearson_r([1, 2, 3], [1, 3, 2]) - 0.5) < 1e-12

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError, match="variance"):
            pearson_r([1, 1, 1], [1, 2, 3])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            pearson_r([1, 2], [1, 2, 3])


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc([4.0, 3.0, 2.0, 1.0], [True, True, False, False]) == 1.0

    def test_all_ties(self):
        assert auroc([5.0, 5.0, 5.0, 5.0], [True, False, True, False]) == 0.5

    def test_hand_enumerated_pairs(self):
        # pairs: (3 vs 2) win, (1 vs 2) loss -> 0.5
        assert auroc([3.0, 2.0, 1.0], [True, False, True]) == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            auroc([1.0, 2.0], [True, True])

    def test_increasing_transform_invariance(self):
        rng = np.random.default_rng(1)
        scores = rng.normal(size=30)
        labels = rng.uniform(size=30) < 0.4
        if labels.all() or not labels.any():
            labels[0] = True
            labels[1] = False
        assert auroc(scores, labels) == auroc(np.exp(scores), labels)

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = int(rng.integers(4, 40))
            # coarse grid forces plenty of score ties
            scores = rng.integers(0, 6, n).astype(float)
            labels = rng.uniform(size=n) < 0.5
            if labels.all() or not labels.any():
                labels[0] = True
                labels[1] = False
            wins = 0.0
            pos = scores[labels]
            neg = scores[~labels]
            for p in pos:
                for q in neg:
                    wins += 1.0 if p > q else (0.5 if p == q else 0.0)
            assert auroc(scores, labels) == wins / (len(pos) * len(neg))


class TestErrorRetention:
    def test_identical_errors_closed_form(self):
        e = 2.0
        n = 8
        curve = error_retention_curve(np.full(n, e), np.arange(n, dtype=float), grid=101)
        expected = np.ceil(curve.fractions * n) / n * e
        np.testing.assert_allclose(curve.values, expected, rtol=1e-15)

    def test_auc_converges_to_half_mean_error(self):
        # staircase area is e*(N+1)/(2N): grid refinement converges to that,
        # and it tends to e/2 as N grows
        e = 2.0
        for n in (50, 500):
            errors = np.full(n, e)
            u = np.arange(n, dtype=float)
            fine = error_retention_curve(errors, u, grid=10 * n + 1).auc
            # trapezoids shave e/(2*(grid-1)) off the exact staircase area
            assert abs(fine - e * (n + 1) / (2 * n)) < e / (10 * n)
        assert abs(fine - e / 2) < 0.01

    def test_identical_errors_independent_of_ordering(self):
        errors = np.full(20, 1.3)
        u1 = np.arange(20, dtype=float)
        u2 = u1[::-1].copy()
        c1 = error_retention_curve(errors, u1)
        c2 = error_retention_curve(errors, u2)
        np.testing.assert_array_equal(c1.values, c2.values)

    def test_oracle_beats_anti_oracle(self):
        rng = np.random.default_rng(3)
        errors = rng.uniform(0, 5, 40)
        oracle = error_retention_curve(errors, errors).auc
        anti = error_retention_curve(errors, -errors).auc
        assert oracle <= anti

    def test_full_retention_is_plain_mean(self):
        rng = np.random.default_rng(4)
        errors = rng.uniform(0, 5, 17)
        curve = error_retention_curve(errors, rng.normal(size=17))
        assert abs(curve.values[-1] - errors.mean()) < 1e-12

    def test_increasing_transform_of_u_invariance(self):
        rng = np.random.default_rng(5)
        errors = rng.uniform(0, 5, 25)
        u = rng.normal(size=25)
        c1 = error_retention_curve(errors, u)
        c2 = error_retention_curve(errors, np.tanh(u) * 3 + 7)
        np.testing.assert_array_equal(c1.values, c2.values)

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            error_retention_curve(np.array([]), np.array([]))

    def test_fractions_cover_unit_interval(self):
        curve = error_retention_curve(np.ones(3), np.arange(3.0))
        assert curve.fractions[0] == 0.0 and curve.fractions[-1] == 1.0
        assert np.all(np.diff(curve.fractions) > 0)


class TestF1Retention:
    def test_all_accurate_full_retention(self):
        curve, _, _ = f1_retention_curve(np.zeros(10), np.arange(10.0), 1.6)
        assert curve.values[-1] == 1.0

    def test_all_accurate_half_retention(self):
        curve, _, _ = f1_retention_curve(np.zeros(10), np.arange(10.0), 1.6)
        mid = np.argmin(np.abs(curve.fractions - 0.5))
        # TP = N/2, FP = 0, FN = N/2 -> F1 = 2/3
        assert abs(curve.values[mid] - 2.0 / 3.0) < 1e-12

    def test_all_inaccurate_is_zero_everywhere(self):
        curve, auc, at95 = f1_retention_curve(np.full(10, 9.9), np.arange(10.0), 1.6)
        assert np.all(curve.values == 0.0) and auc == 0.0 and at95 == 0.0

    def test_at95_reads_grid_point_below(self):
        errors = np.array([0.0, 0.0, 9.0, 9.0])
        u = np.array([0.0, 1.0, 2.0, 3.0])
        curve, _, at95 = f1_retention_curve(errors, u, 1.6, grid=11)
        # grid is 0.0,0.1,...,1.0; nearest point <= 0.95 is 0.9
        idx = int(np.searchsorted(curve.fractions, 0.95 + 1e-12) - 1)
        assert curve.fractions[idx] == 0.9
        assert at95 == curve.values[idx]


class TestEvaluationReport:
    def _record(self, i, wade, unc, accurate, shifted=None):
        return EvaluationRecord(f"s{i}", np.array([wade]), np.array([0.0]),
                                unc, wade, accurate, shifted)

    def test_all_perfect_predictions(self):
        records = [self._record(i, 0.0, 0.1 * i, True) for i in range(6)]
        bundle = evaluation_report(records, EvalConfig())["full"]
        assert bundle["weighted_ade"] == 0.0
        assert bundle["r_auc"] == 0.0
        # constant errors / single class: correlation metrics degenerate
        assert math.isnan(bundle["pearson_r"]) and math.isnan(bundle["auroc"])

    def test_duplication_invariance(self):
        rng = np.random.default_rng(6)
        records = [self._record(i, float(rng.uniform(0, 3)), float(rng.normal()),
                                bool(rng.uniform() < 0.5)) for i in range(8)]
        if all(r.accurate for r in records) or not any(r.accurate for r in records):
            records[0] = self._record(0, 0.1, 0.0, True)
            records[1] = self._record(1, 2.9, 0.0, False)
        full = evaluation_report(records, EvalConfig())["full"]
        doubled = evaluation_report(records + records, EvalConfig())["full"]
        for key in ("weighted_ade", "pearson_r", "auroc", "accurate_fraction"):
            assert abs(full[key] - doubled[key]) < 1e-9

    def test_partitions_emitted_when_flagged(self):
        records = [self._record(i, 1.0 + i, float(i), i < 3, shifted=(i >= 3))
                   for i in range(6)]
        report = evaluation_report(records, EvalConfig())
        assert set(report) == {"full", "in_domain", "shifted"}
        assert report["in_domain"]["count"] == 3
        assert report["shifted"]["count"] == 3

    def test_no_records_rejected(self):
        with pytest.raises(ValueError):
            evaluation_report([], EvalConfig())

    def test_record_validation(self):
        with pytest.raises(ValueError):
            EvaluationRecord("x", np.array([1.0, 2.0]), np.array([0.0]), 0.0, 1.0, True)
        with pytest.raises(ValueError):
            EvaluationRecord("x", np.array([1.0]), np.array([0.0]), 0.0, -1.0, True)
