import warnings

import numpy as np
import pytest
import torch

from foprokd.data import ShotGrouping, shot_grouping
from foprokd.exceptions import InvalidInputError
from foprokd.metrics import (
    MetricsReport,
    accuracy,
    balanced_accuracy,
    compute_report,
    confusion_matrix,
    grouped_accuracy,
    macro_f1,
    mcc,
)

from oracles import metric_oracle


class TestConfusionMatrix:
    def test_hand_case(self):
        cm = confusion_matrix([0, 0, 1, 2, 2], [0, 1, 1, 2, 0], 3)
        expected = torch.tensor([[1, 1, 0], [0, 1, 0], [1, 0, 1]])
        assert torch.equal(cm, expected)

    def test_validation(self):
        with pytest.raises(InvalidInputError):
            confusion_matrix([], [], 3)
        with pytest.raises(InvalidInputError):
            confusion_matrix([0, 1], [0], 2)
        with pytest.raises(InvalidInputError):
            confusion_matrix([0, 3], [0, 0], 3)


class TestMcc:
    def test_perfect_and_antiperfect(self):
        perfect = confusion_matrix([0, 1, 0, 1], [0, 1, 0, 1], 2)
        assert mcc(perfect) == pytest.approx(1.0)
        anti = confusion_matrix([0, 1, 0, 1], [1, 0, 1, 0], 2)
        assert mcc(anti) == pytest.approx(-1.0)

    def test_constant_predictor_scores_zero(self):
        cm = confusion_matrix([0, 1, 2, 1], [0, 0, 0, 0], 3)
        assert mcc(cm) == 0.0

    def test_binary_closed_form(self):
        # tp=5, fn=2, fp=1, tn=4
        cm = torch.tensor([[4, 1], [2, 5]])
        expected = (5 * 4 - 1 * 2) / np.sqrt((5 + 1) * (5 + 2) * (4 + 1) * (4 + 2))
        assert mcc(cm) == pytest.approx(expected, abs=1e-12)

    def test_permutation_invariance_spot_check(self):
        gen = torch.Generator().manual_seed(0)
        cm = torch.randint(0, 9, (4, 4), generator=gen)
        perm = torch.tensor([2, 0, 3, 1])
        assert mcc(cm[perm][:, perm]) == pytest.approx(mcc(cm), abs=1e-12)


class TestBalancedAccuracy:
    def test_mean_of_recalls(self):
        cm = torch.tensor([[8, 2], [3, 7]])
        assert balanced_accuracy(cm) == pytest.approx((0.8 + 0.7) / 2)

    def test_absent_class_excluded_with_warning(self):
        cm = torch.tensor([[4, 0, 0], [1, 3, 0], [0, 0, 0]])
        with pytest.warns(UserWarning, match="no true samples"):
            value = balanced_accuracy(cm)
        assert value == pytest.approx((1.0 + 0.75) / 2)


class TestMacroF1:
    def test_degenerate_class_contributes_zero(self):
        # class 2 never appears in truth or predictions
        cm = torch.tensor([[3, 1, 0], [1, 3, 0], [0, 0, 0]])
        per_class = 2 * 3 / (4 + 4)
        assert macro_f1(cm) == pytest.approx((per_class + per_class + 0.0) / 3)

    def test_perfect_is_one(self):
        assert macro_f1(torch.eye(4) * 5) == pytest.approx(1.0)


class TestGroupedAccuracy:
    def test_hand_case(self):
        cm = torch.tensor([[9, 1, 0], [2, 8, 0], [0, 5, 5]])
        grouping = ShotGrouping(("head", "medium", "tail"), 700, 70)
        out = grouped_accuracy(cm, grouping)
        assert out["head"] == pytest.approx(0.9)
        assert out["medium"] == pytest.approx(0.8)
        assert out["tail"] == pytest.approx(0.5)
        assert out["all"] == pytest.approx((0.9 + 0.8 + 0.5) / 3)

    def test_empty_group_reports_none(self):
        cm = torch.tensor([[9, 1], [2, 8]])
        grouping = ShotGrouping(("medium", "medium"), 700, 70)
        with pytest.warns(UserWarning, match="no evaluable"):
            out = grouped_accuracy(cm, grouping)
        assert out["head"] is None and out["tail"] is None
        assert out["all"] == pytest.approx(out["medium"])

    def test_matches_recompute_from_raw_predictions(self, rng):
        true_labels = rng.integers(0, 4, 200)
        predicted = rng.integers(0, 4, 200)
        counts = [800, 300, 50, 10]
        grouping = shot_grouping(counts)
        cm = confusion_matrix(true_labels, predicted, 4)
        out = grouped_accuracy(cm, grouping)
        for name in ShotGrouping.GROUP_NAMES:
            members = grouping.indices(name)
            recalls = [
                (predicted[true_labels == k] == k).mean()
                for k in members if (true_labels == k).sum() > 0
            ]
            assert out[name] == pytest.approx(float(np.mean(recalls)), abs=1e-12)

    def test_grouping_size_mismatch_rejected(self):
        cm = torch.eye(3)
        with pytest.raises(InvalidInputError):
            grouped_accuracy(cm, ShotGrouping(("head", "tail"), 700, 70))


class TestOracleEquivalence:
    def test_random_trials(self, rng):
        for _ in range(200):
            n = int(rng.integers(5, 60))
            k = int(rng.integers(2, 6))
            true_labels = rng.integers(0, k, n)
            predicted = rng.integers(0, k, n)
            cm = confusion_matrix(true_labels, predicted, k)
            ref_mcc, ref_bacc, ref_f1, ref_acc = metric_oracle(true_labels, predicted, k)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                assert mcc(cm) == pytest.approx(ref_mcc, abs=1e-10)
                assert balanced_accuracy(cm) == pytest.approx(ref_bacc, abs=1e-10)
                assert macro_f1(cm) == pytest.approx(ref_f1, abs=1e-10)
                assert accuracy(cm) == pytest.approx(ref_acc, abs=1e-10)


class TestReport:
    def test_round_trips_through_dict(self):
        with pytest.warns(UserWarning, match="no evaluable"):
            report = compute_report([0, 1, 1, 0], [0, 1, 0, 0], 2,
                                    shot_grouping([800, 20]))
        again = MetricsReport.from_dict(report.to_dict())
        assert again == report
        assert report.num_samples == 4
        assert set(report.grouped) == {"head", "medium", "tail", "all"}

    def test_perfect_report(self):
        report = compute_report([0, 1, 2], [0, 1, 2], 3)
        assert (report.mcc, report.accuracy, report.balanced_accuracy,
                report.macro_f1) == (1.0, 1.0, 1.0, 1.0)
