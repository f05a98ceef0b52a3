"""Unit tests for the analytic models A-D."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from cadt_queue.errors import ModelNotCoveredError, ScenarioError, UnstableSystemError
from cadt_queue.models import (
    ModelId,
    class_state_pdf,
    evaluate,
    model_a_without,
    model_c_without,
    select_model,
)
from cadt_queue.scenario import ClinicalScenario, PatientClass, derive_rates

from ..conftest import CLINIC
from ..oracles import (
    clinic_rates,
    erlang_c_wait,
    exponential,
    mixture,
    preemptive_waits,
)

EM = PatientClass.EMERGENT
NON_EM = PatientClass.NON_EMERGENT
PLUS = PatientClass.AI_POSITIVE
MINUS = PatientClass.AI_NEGATIVE

# (traffic, fraction emergent) points checked against the closed forms
OPERATING_POINTS = [(0.3, 0.2), (0.5, 0.0), (0.6, 0.4), (0.75, 0.1), (0.85, 0.3)]


class TestSelectModel:
    """Test model dispatch."""

    def test_model_a(self):
        assert select_model(ClinicalScenario()) is ModelId.A

    def test_model_b(self):
        assert select_model(ClinicalScenario(fraction_emergent=0.2)) is ModelId.B

    @pytest.mark.parametrize("f_em", [0.0, 0.3])
    def test_model_c(self, f_em):
        s = ClinicalScenario(n_radiologists=2, fraction_emergent=f_em)
        assert select_model(s) is ModelId.C

    def test_model_d(self):
        assert select_model(ClinicalScenario(read_time_nondiseased=15.0)) is ModelId.D

    def test_two_radiologists_unequal_reads_not_covered(self):
        s = ClinicalScenario(n_radiologists=2, read_time_nondiseased=15.0)
        with pytest.raises(ModelNotCoveredError) as exc:
            select_model(s)
        assert exc.value.nearest == ModelId.C

    def test_tiny_emergent_fraction_dispatches_to_a(self):
        assert select_model(ClinicalScenario(fraction_emergent=1e-13)) is ModelId.A


class TestModelA:
    """Test the single-radiologist model without emergent images."""

    def test_without_cadt_is_mm1(self):
        result = evaluate(ClinicalScenario(traffic=0.8))
        assert result.model is ModelId.A
        assert result.without_cadt.w_non_em == pytest.approx(40.0, abs=1e-9)

    def test_without_cadt_is_instant(self):
        r = derive_rates(ClinicalScenario(traffic=0.8))
        best = math.inf
        for _ in range(20):
            start = time.perf_counter()
            model_a_without(r)
            best = min(best, time.perf_counter() - start)
        assert best < 1e-3

    @pytest.mark.parametrize("traffic", [0.3, 0.5, 0.8, 0.95])
    def test_with_cadt_matches_priority_formula(self, traffic):
        s = ClinicalScenario(traffic=traffic, **CLINIC)
        rates = clinic_rates(traffic)
        expected = preemptive_waits(
            [exponential(rates["plus"], 10.0), exponential(rates["minus"], 10.0)]
        )
        result = evaluate(s)
        assert result.with_cadt.w_plus == pytest.approx(expected[0], abs=1e-6)
        assert result.with_cadt.w_minus == pytest.approx(expected[1], abs=1e-6)

    def test_state_pdf_is_geometric(self):
        result = evaluate(ClinicalScenario(traffic=0.5))
        pdf = class_state_pdf(result, NON_EM, 5)
        np.testing.assert_allclose(pdf, 0.5 * 0.5 ** np.arange(6))

    def test_state_pdf_of_negative_class_sums_to_one(self):
        result = evaluate(ClinicalScenario(traffic=0.6))
        assert class_state_pdf(result, MINUS, 400).sum() == pytest.approx(1.0, abs=1e-8)

    def test_state_pdf_unknown_class(self):
        result = evaluate(ClinicalScenario(traffic=0.6))
        with pytest.raises(KeyError):
            class_state_pdf(result, EM, 5)


class TestModelB:
    """Test the single-radiologist model with emergent images."""

    @pytest.mark.parametrize(("traffic", "f_em"), OPERATING_POINTS)
    def test_without_cadt_matches_two_class_formula(self, traffic, f_em):
        s = ClinicalScenario(traffic=traffic, fraction_emergent=f_em, **CLINIC)
        rates = clinic_rates(traffic, fraction_emergent=f_em)
        expected = preemptive_waits([exponential(rates["em"], 5.0), exponential(rates["non_em"], 10.0)])
        waits = evaluate(s).without_cadt
        if f_em > 0.0:
            assert waits.w_em == pytest.approx(expected[0], abs=1e-6)
        assert waits.w_non_em == pytest.approx(expected[1], abs=1e-6)

    @pytest.mark.parametrize(("traffic", "f_em"), OPERATING_POINTS)
    def test_with_cadt_matches_three_class_formula(self, traffic, f_em):
        s = ClinicalScenario(traffic=traffic, fraction_emergent=f_em, **CLINIC)
        rates = clinic_rates(traffic, fraction_emergent=f_em)
        expected = preemptive_waits(
            [
                exponential(rates["em"], 5.0),
                exponential(rates["plus"], 10.0),
                exponential(rates["minus"], 10.0),
            ]
        )
        waits = evaluate(s).with_cadt
        assert waits.w_plus == pytest.approx(expected[1], abs=1e-6)
        assert waits.w_minus == pytest.approx(expected[2], abs=1e-6)

    def test_emergent_wait_same_in_both_worlds(self, busy_clinic):
        result = evaluate(busy_clinic)
        assert result.without_cadt.w_em == result.with_cadt.w_em

    def test_phases_per_negative_level(self, busy_clinic):
        result = evaluate(busy_clinic)
        assert result.with_cadt.solutions[MINUS].chain.level_size == 5

    def test_conservation(self, busy_clinic):
        result = evaluate(busy_clinic)
        before = result.without_cadt.weighted_sum((NON_EM,))
        after = result.with_cadt.weighted_sum((PLUS, MINUS))
        assert after == pytest.approx(before, rel=1e-6)

    def test_busy_periods_symmetric_when_classes_match(self):
        # Emergent and AI-positive images arrive and read alike
        positive = 0.1 * 0.95 + 0.9 * (1.0 - 0.89)
        s = ClinicalScenario(
            traffic=0.7,
            fraction_emergent=positive / (1.0 + positive),
            **{**CLINIC, "read_time_emergent": 10.0},
        )
        r = derive_rates(s)
        assert r.lambda_em == pytest.approx(r.lambda_plus, rel=1e-12)
        assert r.mu_em == pytest.approx(r.mu_plus, rel=1e-12)

        first, second = evaluate(s).with_cadt.busy_periods
        (end,) = first.reachable_ends
        assert second.reachable_ends == [end]
        assert first.moments[end] == pytest.approx(second.moments[end], rel=1e-10)


class TestModelD:
    """Test disease-dependent reading rates on one radiologist."""

    @pytest.mark.parametrize(("traffic", "f_em"), OPERATING_POINTS)
    def test_matches_priority_formula(self, traffic, f_em):
        s = ClinicalScenario(
            traffic=traffic, fraction_emergent=f_em, **{**CLINIC, "read_time_nondiseased": 15.0}
        )
        rates = clinic_rates(traffic, fraction_emergent=f_em, read_nd=15.0)
        em = exponential(rates["em"], 5.0)
        non_em = mixture(rates["non_em"], [(0.1, 10.0), (0.9, 15.0)])
        plus = mixture(rates["plus"], [(rates["ppv"], 10.0), (1.0 - rates["ppv"], 15.0)])
        minus = mixture(rates["minus"], [(rates["fnr"], 10.0), (1.0 - rates["fnr"], 15.0)])

        result = evaluate(s)
        assert result.model is ModelId.D
        assert result.without_cadt.w_non_em == pytest.approx(
            preemptive_waits([em, non_em])[1], abs=1e-6
        )
        expected = preemptive_waits([em, plus, minus])
        assert result.with_cadt.w_plus == pytest.approx(expected[1], abs=1e-6)
        assert result.with_cadt.w_minus == pytest.approx(expected[2], abs=1e-6)

    def test_phases_per_level(self):
        s = ClinicalScenario(
            traffic=0.8, fraction_emergent=0.5, **{**CLINIC, "read_time_nondiseased": 15.0}
        )
        result = evaluate(s)
        assert result.without_cadt.solutions[NON_EM].chain.level_size == 6
        assert result.with_cadt.solutions[MINUS].chain.level_size == 14


class TestModelC:
    """Test two radiologists."""

    def test_without_cadt_no_emergent_is_erlang_c(self):
        s = ClinicalScenario(n_radiologists=2, traffic=0.8, **CLINIC)
        result = evaluate(s)
        assert result.model is ModelId.C
        expected = erlang_c_wait(0.16, 0.1, 2)
        assert result.without_cadt.w_non_em == pytest.approx(expected, rel=1e-9)

    def test_positive_class_is_erlang_c(self):
        s = ClinicalScenario(n_radiologists=2, traffic=0.7, **CLINIC)
        r = derive_rates(s)
        result = evaluate(s)
        expected = erlang_c_wait(r.lambda_plus, 0.1, 2)
        assert result.with_cadt.w_plus == pytest.approx(expected, rel=1e-9)

    def test_emergent_is_erlang_c(self):
        s = ClinicalScenario(n_radiologists=2, traffic=0.7, fraction_emergent=0.3, **CLINIC)
        r = derive_rates(s)
        result = evaluate(s)
        assert result.without_cadt.w_em == pytest.approx(erlang_c_wait(r.lambda_em, 0.2, 2))

    @pytest.mark.parametrize(("traffic", "f_em"), [(0.5, 0.0), (0.8, 0.0), (0.7, 0.5)])
    def test_conservation_is_close(self, traffic, f_em):
        s = ClinicalScenario(n_radiologists=2, traffic=traffic, fraction_emergent=f_em, **CLINIC)
        result = evaluate(s)
        before = result.without_cadt.weighted_sum((NON_EM,))
        after = result.with_cadt.weighted_sum((PLUS, MINUS))
        assert after == pytest.approx(before, rel=0.02)

    def test_negative_environment_layout(self):
        s = ClinicalScenario(n_radiologists=2, traffic=0.8, fraction_emergent=0.5, **CLINIC)
        waits = evaluate(s).with_cadt
        phases = sum(e.fit.n_ec for e in waits.excursions)
        size = waits.solutions[MINUS].chain.level_size
        assert size > phases
        assert any(e.fit.n_ec >= 3 for e in waits.excursions)

    def test_model_guard(self):
        r = derive_rates(ClinicalScenario(traffic=0.5))
        with pytest.raises(ScenarioError, match="two radiologists"):
            model_c_without(r)


class TestEdgeCases:
    """Test degenerate inputs."""

    def test_traffic_cap(self):
        with pytest.raises(UnstableSystemError):
            evaluate(ClinicalScenario(traffic=0.995))

    def test_device_flags_nothing(self):
        s = ClinicalScenario(sensitivity=0.0, specificity=1.0)
        result = evaluate(s)
        assert result.with_cadt.w_plus == 0.0
        assert result.with_cadt.w_minus == pytest.approx(result.without_cadt.w_non_em)
        assert PLUS in result.with_cadt.empty_classes

    def test_device_flags_everything(self):
        s = ClinicalScenario(sensitivity=1.0, specificity=0.0, fraction_emergent=0.3)
        result = evaluate(s)
        assert result.with_cadt.w_plus == pytest.approx(result.without_cadt.w_non_em)
        assert MINUS in result.with_cadt.empty_classes

    def test_summary_mentions_every_class(self, busy_clinic):
        text = evaluate(busy_clinic).summary()
        assert "Model B" in text
        for cls in (EM, NON_EM, PLUS, MINUS):
            assert str(cls) in text


CONTINUITY_MODELS = {
    "A": lambda rng: {},
    "B": lambda rng: {"fraction_emergent": rng.uniform(0.05, 0.5)},
    "C": lambda rng: {"n_radiologists": 2, "fraction_emergent": rng.uniform(0.0, 0.5)},
    "D": lambda rng: {
        "fraction_emergent": rng.uniform(0.0, 0.5),
        "read_time_nondiseased": rng.uniform(12.0, 20.0),
    },
}


@pytest.mark.slow
class TestContinuity:
    """Small input changes give small changes in every wait."""

    @pytest.mark.parametrize("name", sorted(CONTINUITY_MODELS))
    def test_small_perturbation(self, name):
        rng = np.random.default_rng(sorted(CONTINUITY_MODELS).index(name) + 101)
        for _ in range(20):
            s = ClinicalScenario(
                traffic=rng.uniform(0.2, 0.85), **{**CLINIC, **CONTINUITY_MODELS[name](rng)}
            )
            base = evaluate(s)
            assert base.model is ModelId(name)
            for field in ("traffic", "specificity"):
                moved = evaluate(s.replace(**{field: getattr(s, field) * 1.001}))
                for world in ("without_cadt", "with_cadt"):
                    before = getattr(base, world).waits
                    after = getattr(moved, world).waits
                    for cls, w in before.items():
                        assert abs(after[cls] - w) <= 0.01 * max(abs(w), 1e-6), (s, field, cls)
