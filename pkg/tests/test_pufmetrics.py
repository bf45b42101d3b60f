"""Tests for PUF metrics."""

import numpy as np
import pytest

from rfpuf.pufmetrics import (
    DEVICE_COLUMNS,
    PAIR_COLUMNS,
    PufDistanceReport,
    crp_count,
    distance_report,
    evaluate,
    feature_distance_ppm,
    identifiability,
    inter_puf,
    intra_distances,
    intra_puf,
    population_scales,
    report_from_predictions,
)


class TestEvaluate:
    """Tests for classification metrics."""

    def test_confusion_and_p_false(self):
        """Test the confusion matrix layout and error rate."""
        report = report_from_predictions([0, 0, 1, 1, 2, 2], [0, 1, 1, 1, 2, 0], n_classes=3)
        assert report.confusion_matrix.tolist() == [[1, 1, 0], [0, 2, 0], [1, 0, 1]]
        assert report.p_false == pytest.approx(2 / 6)
        assert report.per_class_accuracy.tolist() == [0.5, 1.0, 0.5]
        assert report.total == 6

    def test_perfect_classifier(self):
        """Test an oracle classifier has zero error."""
        y = np.array([0, 1, 2, 1])
        report = evaluate(lambda x: x[:, 0].astype(int), np.c_[y, y], y, n_classes=3)
        assert report.p_false == 0.0

    def test_unseen_class_has_zero_accuracy(self):
        """Test a class with no evaluations reports 0 rather than NaN."""
        report = report_from_predictions([0, 0], [0, 0], n_classes=2)
        assert report.per_class_accuracy.tolist() == [1.0, 0.0]

    def test_empty_rejected(self):
        """Test an empty evaluation raises."""
        with pytest.raises(ValueError):
            report_from_predictions([], [])

    def test_confusion_frame_columns(self):
        """Test the CSV layout of the confusion matrix."""
        frame = report_from_predictions([0, 1], [1, 1]).confusion_frame()
        assert list(frame.columns) == ["true_class", "pred_0", "pred_1"]
        assert frame["pred_1"].tolist() == [1, 1]


class TestDistance:
    """Tests for the response distance."""

    def test_identical_responses(self):
        """Test identical responses are at distance ~0."""
        v = np.array([1.0, 2.0, 3.0])
        assert feature_distance_ppm(v, v, np.ones(3)) == pytest.approx(0.0, abs=1e-9)

    def test_one_scale_unit_is_a_million_ppm(self):
        """Test a one-sigma shift on every feature is 1e6 ppm."""
        scales = np.array([0.5, 2.0, 10.0])
        assert feature_distance_ppm(np.zeros(3), scales, scales) == pytest.approx(1e6)

    def test_symmetric(self):
        """Test d(a, b) == d(b, a)."""
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(2, 9))
        scales = np.ones(9)
        assert feature_distance_ppm(a, b, scales) == feature_distance_ppm(b, a, scales)

    def test_one_matching_feature_does_not_zero(self):
        """Test the guard keeps a single exact match from collapsing the mean."""
        assert feature_distance_ppm(np.array([0.0, 0.0]), np.array([0.0, 1.0]), np.ones(2)) > 0.0

    def test_length_mismatch(self):
        """Test mismatched lengths raise."""
        with pytest.raises(ValueError):
            feature_distance_ppm(np.zeros(2), np.zeros(3), np.ones(2))

    def test_scales_floored(self):
        """Test constant features get the floor instead of zero."""
        scales = population_scales(np.ones((4, 2)))
        assert np.all(scales > 0)


def _groups():
    # two tight clusters far apart
    return {
        0: np.array([[0.0, 0.0], [0.1, 0.1], [0.05, 0.0]]),
        1: np.array([[5.0, 5.0], [5.1, 4.9], [5.0, 5.05]]),
    }


class TestPufDistances:
    """Tests for reliability, uniqueness and identifiability."""

    def test_intra_modes(self):
        """Test all-pairs is never smaller than comparing the first two."""
        groups = _groups()
        scales = np.ones(2)
        single = intra_distances(groups, scales, mode="single")
        every = intra_distances(groups, scales, mode="all_pairs")
        for device in groups:
            assert every[device] >= single[device]

    def test_unknown_intra_mode_rejected(self):
        """Test an unrecognised intra mode raises instead of comparing two rows."""
        with pytest.raises(ValueError, match="intra mode"):
            intra_distances(_groups(), np.ones(2), mode="pairs")
        with pytest.raises(ValueError):
            intra_puf(_groups(), np.ones(2), mode="first_two")

    def test_worst_cases_by_hand(self):
        """Test reliability is the largest intra distance and uniqueness the smallest inter distance."""
        groups = {
            0: np.array([[0.0], [0.2], [0.5]]),
            1: np.array([[3.0], [3.1]]),
            2: np.array([[10.0], [10.3]]),
        }
        report = distance_report(groups, np.ones(1), cfo_column=None)

        # one feature at unit scale: distance is |delta| * 1e6
        assert report.per_device["d_intra_ppm"].tolist() == pytest.approx([0.5e6, 0.1e6, 0.3e6])
        assert report.d_intra_worst_ppm == pytest.approx(0.5e6)
        centroids = [0.7 / 3, 3.05, 10.15]
        assert report.d_inter_worst_ppm == pytest.approx((centroids[1] - centroids[0]) * 1e6)
        assert report.per_pair["d_inter_ppm"].max() == pytest.approx((centroids[2] - centroids[0]) * 1e6)
        assert report.identifiable

    def test_identifiable_population(self):
        """Test well-separated devices are identifiable."""
        report = distance_report(_groups(), np.ones(2), cfo_column=None)
        assert report.identifiable
        assert report.d_intra_worst_ppm == pytest.approx(intra_puf(_groups(), np.ones(2)))
        ok, margin = identifiability(report)
        assert ok and margin > 0

    def test_clones_not_identifiable(self):
        """Test devices with the same response cloud are not identifiable."""
        same = _groups()[0]
        report = distance_report({0: same, 1: same.copy()}, np.ones(2), inter_mode="single", cfo_column=None)
        assert not report.identifiable

    def test_tables(self):
        """Test per-device and per-pair tables and the cfo columns."""
        groups = {
            0: np.array([[10.0, 0.0], [12.0, 0.1]]),
            1: np.array([[20.0, 5.0], [21.0, 5.1]]),
            2: np.array([[40.0, 9.0], [40.5, 9.1]]),
        }
        report = distance_report(groups, np.ones(2), cfo_column=0)
        assert list(report.per_device.columns) == list(DEVICE_COLUMNS)
        assert list(report.per_pair.columns) == list(PAIR_COLUMNS)
        assert report.per_device["n_evaluations"].tolist() == [2, 2, 2]
        assert list(zip(report.per_pair["device_a"], report.per_pair["device_b"])) == [(0, 1), (0, 2), (1, 2)]
        assert report.cfo_intra_worst_ppm == pytest.approx(2.0)
        assert report.cfo_inter_worst_ppm == pytest.approx(9.5)

    def test_feature_subset(self):
        """Test restricting features ignores the dropped columns."""
        groups = {
            0: np.array([[0.0, 0.0], [0.0, 100.0]]),
            1: np.array([[1.0, 0.0], [1.0, 100.0]]),
        }
        report = distance_report(groups, np.ones(2), feature_index=[0], cfo_column=None)
        assert report.d_intra_worst_ppm == pytest.approx(0.0, abs=1e-9)
        assert report.identifiable

    def test_single_evaluation_rejected(self):
        """Test devices need two evaluations for reliability."""
        with pytest.raises(ValueError):
            intra_puf({0: np.zeros((1, 2))}, np.ones(2))

    def test_inter_needs_two_devices(self):
        """Test uniqueness needs a pair."""
        with pytest.raises(ValueError):
            inter_puf({0: np.zeros(2)}, np.ones(2))

    def test_negative_distance_rejected(self):
        """Test reports cannot hold negative distances."""
        with pytest.raises(ValueError):
            PufDistanceReport(d_intra_worst_ppm=-1.0, d_inter_worst_ppm=1.0, identifiable=False)


class TestCrpCount:
    """Tests for the challenge-response space size."""

    def test_three_features(self):
        """Test 3 features at 16 bits give 2^48 and 3.55e-15."""
        count, probability = crp_count(3)
        assert count == 2**48
        assert probability == "3.55e-15"

    def test_nine_features_is_exact(self):
        """Test large spaces stay exact integers."""
        count, probability = crp_count(9)
        assert count == 2**144
        assert probability.endswith("e-44")

    def test_two_bytes(self):
        """Test two 8-bit features give 65536 responses and a 1.53e-05 guess."""
        assert crp_count(2, bits_per_feature=8) == (65536, "1.53e-05")

    def test_invalid(self):
        """Test zero features raise."""
        with pytest.raises(ValueError):
            crp_count(0)


def test_distances_match_brute_force():
    """Test reliability and uniqueness equal an explicit all-pairs recomputation."""
    rng = np.random.default_rng(7)
    groups = {device: rng.normal(device, 0.3, size=(4, 5)) for device in range(10)}
    scales = population_scales(np.concatenate(list(groups.values())))

    worst_intra = 0.0
    for rows in groups.values():
        for i in range(len(rows)):
            for j in range(i + 1, len(rows)):
                worst_intra = max(worst_intra, feature_distance_ppm(rows[i], rows[j], scales))
    centroids = {device: rows.mean(axis=0) for device, rows in groups.items()}
    closest = min(
        feature_distance_ppm(centroids[a], centroids[b], scales)
        for a in range(10)
        for b in range(a + 1, 10)
    )

    assert intra_puf(groups, scales) == worst_intra
    assert inter_puf(centroids, scales) == closest
    report = distance_report(groups, scales, cfo_column=None)
    assert report.d_intra_worst_ppm == worst_intra
    assert report.d_inter_worst_ppm == closest
