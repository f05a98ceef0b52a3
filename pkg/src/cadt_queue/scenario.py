"""Clinical workflow parameters and the rates derived from them."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from enum import StrEnum
from typing import Any

from cadt_queue.errors import ScenarioError

__all__ = [
    "ClinicalScenario",
    "DerivedRates",
    "PatientClass",
    "derive_rates",
    "effective_service_rate",
]

logger = logging.getLogger(__name__)


class PatientClass(StrEnum):
    """Priority classes of the reading queue."""

    EMERGENT = "emergent"
    NON_EMERGENT = "non_emergent"
    AI_POSITIVE = "ai_positive"
    AI_NEGATIVE = "ai_negative"


def _check_fraction(name: str, value: float, *, low_open: bool, high_open: bool) -> None:
    too_low = value <= 0.0 if low_open else value < 0.0
    too_high = value >= 1.0 if high_open else value > 1.0
    if too_low or too_high:
        lo = "(" if low_open else "["
        hi = ")" if high_open else "]"
        msg = f"{name} must be in {lo}0,1{hi}, got {value!r}"
        raise ScenarioError(msg, field=name)


@dataclass(slots=True, frozen=True)
class ClinicalScenario:
    """Workflow of one reading site.

    Reading times are mean minutes per image; they are inverted to rates
    internally. Defaults describe a single-radiologist site with no emergent
    traffic, a 10% prevalent disease and a 0.95/0.89 triage device.

    Example:
        ClinicalScenario(traffic=0.8)
        ClinicalScenario(fraction_emergent=0.5, n_radiologists=2)
    """

    fraction_emergent: float = 0.0
    prevalence: float = 0.1
    traffic: float = 0.8
    read_time_emergent: float = 5.0
    read_time_diseased: float = 10.0
    read_time_nondiseased: float = 10.0
    n_radiologists: int = 1
    sensitivity: float = 0.95
    specificity: float = 0.89

    def __post_init__(self) -> None:
        f_em = self.fraction_emergent
        _check_fraction("fraction_emergent", f_em, low_open=False, high_open=False)
        _check_fraction("prevalence", self.prevalence, low_open=True, high_open=True)
        _check_fraction("traffic", self.traffic, low_open=True, high_open=True)
        _check_fraction("sensitivity", self.sensitivity, low_open=False, high_open=False)
        _check_fraction("specificity", self.specificity, low_open=False, high_open=False)
        for name in ("read_time_emergent", "read_time_diseased", "read_time_nondiseased"):
            value = getattr(self, name)
            if not value > 0.0:
                msg = f"{name} must be > 0 minutes, got {value!r}"
                raise ScenarioError(msg, field=name)
        if self.n_radiologists not in (1, 2):
            msg = f"n_radiologists must be 1 or 2, got {self.n_radiologists!r}"
            raise ScenarioError(msg, field="n_radiologists")

    def replace(self, **changes: Any) -> ClinicalScenario:
        """Return a validated copy with some fields changed."""
        return dataclasses.replace(self, **changes)


@dataclass(slots=True, frozen=True)
class DerivedRates:
    """Arrival rates (per minute), reading rates (per minute) and predictive values.

    ``ppv`` falls back to the prevalence when nothing is AI-positive and
    ``npv`` to ``1 - prevalence`` when nothing is AI-negative; the matching
    ``no_positive_class`` / ``no_negative_class`` flag is set in that case.
    """

    arrival_rate: float
    lambda_em: float
    lambda_non_em: float
    lambda_plus: float
    lambda_minus: float
    mu_em: float
    mu_d: float
    mu_nd: float
    mu_non_em: float
    mu_plus: float
    mu_minus: float
    ppv: float
    npv: float
    prevalence: float
    sensitivity: float
    specificity: float
    n_radiologists: int
    no_positive_class: bool = False
    no_negative_class: bool = False

    def arrival(self, cls: PatientClass) -> float:
        return {
            PatientClass.EMERGENT: self.lambda_em,
            PatientClass.NON_EMERGENT: self.lambda_non_em,
            PatientClass.AI_POSITIVE: self.lambda_plus,
            PatientClass.AI_NEGATIVE: self.lambda_minus,
        }[cls]

    def service(self, cls: PatientClass) -> float:
        """Mean reading rate of a class (reciprocal of its mean reading time)."""
        return {
            PatientClass.EMERGENT: self.mu_em,
            PatientClass.NON_EMERGENT: self.mu_non_em,
            PatientClass.AI_POSITIVE: self.mu_plus,
            PatientClass.AI_NEGATIVE: self.mu_minus,
        }[cls]

    def diseased_fraction(self, cls: PatientClass) -> float:
        """Probability that an image of ``cls`` is diseased (0 for emergent)."""
        return {
            PatientClass.EMERGENT: 0.0,
            PatientClass.NON_EMERGENT: self.prevalence,
            PatientClass.AI_POSITIVE: self.ppv,
            PatientClass.AI_NEGATIVE: 1.0 - self.npv,
        }[cls]

    def service_types(self, cls: PatientClass) -> list[tuple[float, float]]:
        """Reading-time mixture of a class as ``[(probability, rate), ...]``.

        Emergent reads are a single exponential; every other class is a
        two-point mixture of diseased and non-diseased reads. Zero-weight
        components are dropped.
        """
        if cls is PatientClass.EMERGENT:
            return [(1.0, self.mu_em)]
        p_d = self.diseased_fraction(cls)
        mix = [(p_d, self.mu_d), (1.0 - p_d, self.mu_nd)]
        return [(p, mu) for p, mu in mix if p > 0.0]

    def service_moments(self, cls: PatientClass) -> tuple[float, float]:
        """First two moments ``(E[S], E[S^2])`` of the reading time of ``cls``."""
        types = self.service_types(cls)
        first = sum(p / mu for p, mu in types)
        second = sum(2.0 * p / mu**2 for p, mu in types)
        return first, second

    @property
    def class_loads(self) -> dict[PatientClass, float]:
        """Per-class utilisation ``lambda_c / (n_rad * mu_c)``."""
        return {
            cls: self.arrival(cls) / (self.n_radiologists * self.service(cls))
            for cls in PatientClass
        }


def effective_service_rate(s: ClinicalScenario) -> float:
    """Reading capacity of the site in images per minute.

    The harmonic mix of the emergent and non-emergent mean reading times,
    times the number of radiologists.
    """
    mean_non_em = (
        s.prevalence * s.read_time_diseased + (1.0 - s.prevalence) * s.read_time_nondiseased
    )
    f_em = s.fraction_emergent
    mean_read = f_em * s.read_time_emergent + (1.0 - f_em) * mean_non_em
    return s.n_radiologists / mean_read


def derive_rates(s: ClinicalScenario) -> DerivedRates:
    """Compute every arrival and service rate used by the models and the simulator.

    Args:
        s: Validated scenario.

    Returns:
        DerivedRates with total and per-class rates, PPV and NPV.

    Example:
        r = derive_rates(ClinicalScenario(traffic=0.8))
        r.arrival_rate  # 0.08 per minute with 10-minute reads
    """
    mu_em = 1.0 / s.read_time_emergent
    mu_d = 1.0 / s.read_time_diseased
    mu_nd = 1.0 / s.read_time_nondiseased
    pi, se, sp = s.prevalence, s.sensitivity, s.specificity

    arrival_rate = s.traffic * effective_service_rate(s)
    lambda_em = s.fraction_emergent * arrival_rate
    lambda_non_em = (1.0 - s.fraction_emergent) * arrival_rate

    true_pos, false_pos = pi * se, (1.0 - pi) * (1.0 - sp)
    false_neg, true_neg = pi * (1.0 - se), (1.0 - pi) * sp
    positive, negative = true_pos + false_pos, false_neg + true_neg

    no_positive = positive <= 0.0
    no_negative = negative <= 0.0
    ppv = pi if no_positive else true_pos / positive
    npv = 1.0 - pi if no_negative else true_neg / negative
    if no_positive:
        logger.debug("No AI-positive images (se=%s, sp=%s); PPV falls back to prevalence", se, sp)
    if no_negative:
        logger.debug("No AI-negative images (se=%s, sp=%s); NPV falls back to 1-prevalence", se, sp)

    lambda_plus = 0.0 if no_positive else lambda_non_em * positive
    lambda_minus = 0.0 if no_negative else lambda_non_em * negative

    return DerivedRates(
        arrival_rate=arrival_rate,
        lambda_em=lambda_em,
        lambda_non_em=lambda_non_em,
        lambda_plus=lambda_plus,
        lambda_minus=lambda_minus,
        mu_em=mu_em,
        mu_d=mu_d,
        mu_nd=mu_nd,
        mu_non_em=1.0 / (pi / mu_d + (1.0 - pi) / mu_nd),
        mu_plus=1.0 / (ppv / mu_d + (1.0 - ppv) / mu_nd),
        mu_minus=1.0 / ((1.0 - npv) / mu_d + npv / mu_nd),
        ppv=ppv,
        npv=npv,
        prevalence=pi,
        sensitivity=se,
        specificity=sp,
        n_radiologists=s.n_radiologists,
        no_positive_class=no_positive,
        no_negative_class=no_negative,
    )
