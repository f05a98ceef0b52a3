"""Unit tests for time-saving metrics and sweeps."""

from __future__ import annotations

import math

import pytest

from cadt_queue.errors import ChainStructureError
from cadt_queue.metrics import (
    assess,
    binormal_roc,
    delta_w,
    diseased_wait,
    evaluate_point,
    nondiseased_wait,
    optimal_operating_point,
    roc_point,
    roc_sweep,
    stroke_outcomes,
    sweep,
    sweep_scenario,
)
from cadt_queue.models import evaluate
from cadt_queue.scenario import ClinicalScenario

from ..conftest import CLINIC, ROC_A, ROC_B


class TestWaits:
    """Test diseased and non-diseased wait mixing."""

    def test_diseased_wait(self):
        assert diseased_wait(10.0, 50.0, 0.9) == pytest.approx(14.0)

    def test_nondiseased_wait(self):
        assert nondiseased_wait(10.0, 50.0, 0.9) == pytest.approx(46.0)

    def test_delta_w_signs(self, clinic):
        result = evaluate(clinic)
        report = delta_w(result.without_cadt, result.with_cadt, 0.95, 0.89)
        assert report.delta_w_d < 0.0
        assert report.delta_w_nd > 0.0
        assert report.w_d_without == report.w_nd_without == pytest.approx(40.0)
        assert report.stroke is None

    def test_assess_attaches_stroke(self, clinic):
        _, report = assess(clinic, with_stroke=True)
        assert report.stroke is not None
        assert report.stroke.percent_less_disability > 0.0


class TestStrokeOutcomes:
    """Test the stroke outcome conversion."""

    def test_fifteen_minutes(self):
        outcome = stroke_outcomes(-15.0)
        assert outcome.percent_less_disability == pytest.approx(3.9)
        assert outcome.nntb == pytest.approx(100.0 / 3.9)
        assert outcome.mnt == pytest.approx(1.4 * 15.0 / 40.0)
        assert not outcome.no_saving

    def test_linear_in_minutes(self):
        assert stroke_outcomes(-30.0).percent_less_disability == pytest.approx(7.8)

    def test_positive_delta_is_no_saving(self):
        outcome = stroke_outcomes(5.0)
        assert outcome.no_saving
        assert outcome.percent_less_disability == outcome.nntb == 0.0

    def test_zero_delta(self):
        outcome = stroke_outcomes(0.0)
        assert not outcome.no_saving
        assert outcome.percent_less_disability == 0.0


class TestRoc:
    """Test ROC curves and sweeps."""

    def test_binormal_endpoints(self):
        points = binormal_roc(ROC_A, ROC_B, 11)
        assert points[0] == (0.0, 0.0)
        assert points[-1] == (1.0, 1.0)
        assert len(points) == 11

    def test_binormal_is_increasing(self):
        tpr = [y for _, y in binormal_roc(ROC_A, ROC_B, 21)]
        assert all(b >= a for a, b in zip(tpr, tpr[1:], strict=False))

    def test_binormal_needs_two_points(self):
        with pytest.raises(ValueError, match="n_points"):
            binormal_roc(1.0, 1.0, 1)

    def test_roc_point(self, clinic):
        s = roc_point(clinic, 0.2, 0.9)
        assert s.sensitivity == 0.9
        assert s.specificity == pytest.approx(0.8)

    def test_roc_point_outside_square(self, clinic):
        with pytest.raises(ValueError, match="unit square"):
            roc_point(clinic, 1.2, 0.5)

    def test_corners_are_exactly_zero(self, busy_clinic):
        rows = roc_sweep(busy_clinic, [(0.0, 0.0), (1.0, 1.0)])
        for row in rows:
            assert row.report is not None
            assert row.report.delta_w_d == 0.0
            assert row.report.delta_w_nd == 0.0

    def test_sweep_value_is_fpr(self, clinic):
        rows = roc_sweep(clinic, [(0.1, 0.8)])
        assert rows[0].sweep_value == 0.1
        assert (rows[0].fpr, rows[0].tpr) == (0.1, 0.8)

    def test_optimal_point_beats_neighbours(self, clinic):
        rows = roc_sweep(clinic, binormal_roc(ROC_A, ROC_B, 21))
        best = optimal_operating_point(rows)
        assert best.report is not None
        assert all(best.report.delta_w_d <= r.report.delta_w_d for r in rows if r.report)
        assert 0.0 < best.fpr < 1.0

    def test_optimal_needs_rows(self):
        with pytest.raises(ValueError, match="no evaluated rows"):
            optimal_operating_point([])


class TestSweep:
    """Test parameter sweeps."""

    def test_traffic_sweep_in_order(self, clinic):
        rows = sweep(clinic, "traffic", [0.3, 0.5, 0.8])
        assert [r.sweep_value for r in rows] == [0.3, 0.5, 0.8]
        deltas = [r.report.delta_w_d for r in rows]
        assert deltas[0] > deltas[1] > deltas[2]

    def test_unstable_point_is_flagged(self, clinic):
        rows = sweep(clinic, "traffic", [0.5, 0.995])
        assert rows[0].ok
        assert not rows[1].ok
        assert rows[1].flags == ["error:unstable-system"]
        assert rows[1].report is None

    def test_not_covered_is_flagged(self):
        s = ClinicalScenario(n_radiologists=2, **{**CLINIC, "read_time_nondiseased": 12.0})
        row = evaluate_point(0.5, s)
        assert row.flags == ["error:not-covered"]

    def test_broken_chain_is_flagged(self, clinic, monkeypatch):
        def broken(s):
            msg = "local blocks do not repeat from level 2"
            raise ChainStructureError(msg)

        monkeypatch.setattr("cadt_queue.metrics.evaluate", broken)
        rows = sweep(clinic, "traffic", [0.5, 0.6])
        assert [r.flags for r in rows] == [["error:chain-structure"]] * 2
        assert all(r.report is None for r in rows)

    def test_empty_class_flag(self, clinic):
        row = evaluate_point(None, clinic.replace(sensitivity=0.0, specificity=1.0))
        assert row.ok
        assert "empty:ai_positive" in row.flags

    def test_emergency_fraction_field(self, clinic):
        assert sweep_scenario(clinic, "emergency_fraction", 0.4).fraction_emergent == 0.4

    def test_unknown_variable(self, clinic):
        with pytest.raises(ValueError, match="unknown sweep variable"):
            sweep_scenario(clinic, "roc", 0.5)  # type: ignore[arg-type]

    def test_stroke_outcome_on_rows(self, clinic):
        row = evaluate_point(0.8, clinic)
        assert row.report is not None
        assert row.report.stroke is not None
        assert not math.isnan(row.report.stroke.nntb)
