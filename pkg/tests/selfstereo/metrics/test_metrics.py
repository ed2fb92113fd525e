import csv
import math

import numpy as np
import pytest

from selfstereo.errors import ShapeError
from selfstereo.metrics import METRICS_HEADER, EvalReport, bad_t, d1_rate, epe, sample_metrics


class TestEpe:
    def test_exact_prediction(self):
        gt = np.random.default_rng(0).uniform(0, 20, size=(4, 6))
        assert epe(gt.copy(), gt) == 0.0

    def test_constant_offset(self):
        assert epe(np.full((3, 3), 1.5), np.zeros((3, 3))) == pytest.approx(1.5)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        pred, gt = rng.uniform(0, 10, size=(5, 7)), rng.uniform(0, 10, size=(5, 7))
        mask = rng.uniform(size=(5, 7)) > 0.4
        expected = sum(abs(p - g) for p, g, m in zip(pred.flat, gt.flat, mask.flat) if m) / mask.sum()
        assert epe(pred, gt, mask) == pytest.approx(expected, rel=1e-12)

    def test_empty_mask_is_rejected(self):
        with pytest.raises(ValueError):
            epe(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2), dtype=bool))

    def test_non_finite_ground_truth_is_ignored(self):
        gt = np.array([[1.0, np.inf]])
        assert epe(np.array([[2.0, 0.0]]), gt) == pytest.approx(1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            epe(np.zeros((2, 3)), np.zeros((3, 2)))

    def test_permutation_invariant(self):
        rng = np.random.default_rng(2)
        pred, gt = rng.uniform(0, 10, size=20), rng.uniform(0, 10, size=20)
        order = rng.permutation(20)
        assert epe(pred[order], gt[order]) == pytest.approx(epe(pred, gt), rel=1e-12)


class TestBadT:
    def test_half_off_by_five(self):
        gt = np.zeros((2, 4))
        pred = gt.copy()
        pred[0] = 5.0
        assert bad_t(pred, gt, t=3) == 0.5

    def test_threshold_is_strict(self):
        gt = np.zeros((1, 2))
        assert bad_t(np.array([[3.0, 3.0]]), gt, t=3) == 0.0
        assert bad_t(np.array([[3.0, 3.5]]), gt, t=3) == 0.5

    def test_rejects_non_positive_threshold(self):
        with pytest.raises(ValueError):
            bad_t(np.zeros((1, 1)), np.zeros((1, 1)), t=0)


class TestD1:
    def test_outlier_in_both_modes(self):
        assert d1_rate(np.array([[13.1]]), np.array([[10.0]]), mode="and") == 1.0

    def test_modes_differ_on_large_disparity(self):
        pred, gt = np.array([[104.0]]), np.array([[100.0]])
        assert d1_rate(pred, gt, mode="and") == 0.0
        assert d1_rate(pred, gt, mode="or") == 1.0

    def test_exact_prediction(self):
        gt = np.full((2, 2), 7.0)
        assert d1_rate(gt, gt, mode="and") == 0.0
        assert d1_rate(gt, gt, mode="or") == 0.0

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            d1_rate(np.zeros((1, 1)), np.zeros((1, 1)), mode="xor")

    def test_matches_bad3_on_small_disparities(self):
        # below 60 px the relative threshold is under 3 px, so only the absolute one decides
        rng = np.random.default_rng(3)
        gt = rng.uniform(0, 50, size=(8, 8))
        pred = gt + rng.normal(scale=4.0, size=gt.shape)
        assert d1_rate(pred, gt, mode="and") == bad_t(pred, gt, t=3)


class TestEvalReport:
    def _report(self):
        gt = np.full((4, 4), 8.0)
        noc = np.ones((4, 4), dtype=bool)
        noc[:, 0] = False
        a = gt.copy()
        a[:, 0] += 10.0
        b = gt + 0.5
        return EvalReport([sample_metrics("0", a, gt, noc), sample_metrics("1", b, gt, noc)])

    def test_aggregates_are_means_of_rows(self):
        report = self._report()
        mean = report.mean()
        for name in METRICS_HEADER[1:]:
            values = [getattr(s, name) for s in report.samples]
            assert getattr(mean, name) == pytest.approx(sum(values) / len(values), abs=1e-9)
        assert report.samples[0].epe_noc == 0.0
        assert report.samples[0].epe_all == pytest.approx(2.5)
        assert report.masks == ("all", "noc")

    def test_rates_are_fractions(self):
        for s in self._report().samples:
            for rate in (s.bad1, s.bad2, s.bad3, s.d1):
                assert 0.0 <= rate <= 1.0

    def test_missing_occlusion_reports_all_only(self):
        gt = np.ones((2, 2))
        report = EvalReport([sample_metrics("pair", gt + 1.0, gt)])
        assert math.isnan(report.samples[0].epe_noc)
        assert math.isnan(report.mean().epe_noc)
        assert report.masks == ("all",)

    def test_csv_layout(self, tmp_path):
        path = self._report().write_csv(tmp_path / "metrics.csv")
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
        assert tuple(rows[0]) == METRICS_HEADER
        assert [r[0] for r in rows[1:]] == ["0", "1", "mean"]

    def test_table_has_row_per_sample_plus_mean(self):
        table = self._report().to_table()
        assert table.row_count == 3
        assert [c.header for c in table.columns] == list(METRICS_HEADER)

    def test_empty_report_has_no_mean(self):
        with pytest.raises(ValueError):
            EvalReport().mean()
