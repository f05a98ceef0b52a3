"""Time-saving metrics, ROC sweeps and parameter sweeps."""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from importlib import resources
from typing import TYPE_CHECKING, Any, Literal

import numpy as np
import scipy.stats
import yaml

from cadt_queue.errors import CadtQueueError, ModelNotCoveredError, NumericalError
from cadt_queue.models import ModelResult, evaluate
from cadt_queue.scenario import PatientClass

if TYPE_CHECKING:
    from collections.abc import Sequence

    from cadt_queue.models import ClassWaits
    from cadt_queue.scenario import ClinicalScenario

__all__ = [
    "EffectivenessReport",
    "StrokeOutcome",
    "SweepRow",
    "SweepVariable",
    "assess",
    "binormal_roc",
    "delta_w",
    "diseased_wait",
    "evaluate_point",
    "nondiseased_wait",
    "optimal_operating_point",
    "roc_point",
    "roc_sweep",
    "stroke_outcomes",
    "sweep",
    "sweep_scenario",
]

logger = logging.getLogger(__name__)

SWEEP_VARIABLES = ("traffic", "prevalence", "emergency_fraction", "roc")
SweepVariable = Literal["traffic", "prevalence", "emergency_fraction", "roc"]

SWEEP_FIELDS = {
    "traffic": "traffic",
    "prevalence": "prevalence",
    "emergency_fraction": "fraction_emergent",
}


# ── Effectiveness ──


@dataclass(slots=True, frozen=True)
class StrokeOutcome:
    """Stroke outcomes implied by a diseased-image time saving.

    Attributes:
        percent_less_disability: Share of treated patients with less disability.
        nntb: Number needed to treat for one more patient with less disability.
        mnt: Minutes-faster-needed-to-treat figure.
        no_saving: True when the device does not save time; all values are 0.
    """

    percent_less_disability: float
    nntb: float
    mnt: float
    no_saving: bool = False


@dataclass(slots=True)
class EffectivenessReport:
    """Diseased and non-diseased mean waits with and without CADt (minutes).

    Negative deltas are time saved.
    """

    w_d_without: float
    w_d_with: float
    w_nd_without: float
    w_nd_with: float
    stroke: StrokeOutcome | None = None

    @property
    def delta_w_d(self) -> float:
        return self.w_d_with - self.w_d_without

    @property
    def delta_w_nd(self) -> float:
        return self.w_nd_with - self.w_nd_without


def diseased_wait(w_plus: float, w_minus: float, sensitivity: float) -> float:
    """Mean wait of a diseased image with CADt: TP at ``W+``, FN at ``W-``."""
    return w_plus * sensitivity + w_minus * (1.0 - sensitivity)


def nondiseased_wait(w_plus: float, w_minus: float, specificity: float) -> float:
    """Mean wait of a non-diseased image with CADt: FP at ``W+``, TN at ``W-``."""
    return w_plus * (1.0 - specificity) + w_minus * specificity


def delta_w(
    without: ClassWaits,
    with_: ClassWaits,
    sensitivity: float,
    specificity: float,
    *,
    with_stroke: bool = False,
) -> EffectivenessReport:
    """Effectiveness of triage from the class waits of both worlds.

    Without CADt diseased and non-diseased images share the non-emergent
    wait.
    """
    base = without.waits[PatientClass.NON_EMERGENT]
    w_plus = with_.waits[PatientClass.AI_POSITIVE]
    w_minus = with_.waits[PatientClass.AI_NEGATIVE]
    report = EffectivenessReport(
        w_d_without=base,
        w_d_with=diseased_wait(w_plus, w_minus, sensitivity),
        w_nd_without=base,
        w_nd_with=nondiseased_wait(w_plus, w_minus, specificity),
    )
    if with_stroke:
        report.stroke = stroke_outcomes(report.delta_w_d)
    return report


def assess(
    s: ClinicalScenario, *, with_stroke: bool = False
) -> tuple[ModelResult, EffectivenessReport]:
    """Evaluate a scenario and summarise its time savings."""
    result = evaluate(s)
    report = delta_w(
        result.without_cadt,
        result.with_cadt,
        s.sensitivity,
        s.specificity,
        with_stroke=with_stroke,
    )
    return result, report


# ── Stroke outcomes ──


@functools.cache
def _stroke_constants() -> dict[str, Any]:
    text = resources.files("cadt_queue").joinpath("data/stroke_outcomes.yaml").read_text("utf-8")
    return yaml.safe_load(text)


def stroke_outcomes(delta_w_d: float) -> StrokeOutcome:
    """Translate a diseased-image time saving into stroke outcomes.

    All three outcomes scale linearly with the minutes saved; the slopes
    live in the packaged ``stroke_outcomes.yaml``. A non-negative delta saves
    nothing and returns zeros with ``no_saving`` set.

    Example:
        stroke_outcomes(-15.0).percent_less_disability  # 3.9
    """
    saved = -delta_w_d
    if saved <= 0.0:
        return StrokeOutcome(0.0, 0.0, 0.0, no_saving=delta_w_d > 0.0)
    constants = _stroke_constants()
    pld = constants["percent_less_disability"]
    mpi = constants["mnt"]
    percent = pld["value"] * saved / pld["per_minutes"]
    return StrokeOutcome(
        percent_less_disability=percent,
        nntb=100.0 / percent,
        mnt=mpi["value"] * saved / mpi["per_minutes"],
    )


# ── Sweeps ──


@dataclass(slots=True)
class SweepRow:
    """One evaluated point of a sweep.

    ``flags`` lists why a point has no (or partial) results, e.g.
    ``unstable`` or ``not-covered``; the sweep carries on past flagged rows.
    """

    sweep_value: float | None
    scenario: ClinicalScenario
    result: ModelResult | None = None
    report: EffectivenessReport | None = None
    flags: list[str] = field(default_factory=list)
    fpr: float | None = None
    tpr: float | None = None

    @property
    def ok(self) -> bool:
        return self.report is not None and not any(f.startswith("error") for f in self.flags)


def evaluate_point(
    value: float | None,
    s: ClinicalScenario,
    *,
    fpr: float | None = None,
    tpr: float | None = None,
) -> SweepRow:
    """Evaluate one sweep point, turning model failures into row flags.

    At the ROC corners ``(0, 0)`` and ``(1, 1)`` nothing is triaged, so the
    with-CADt waits are pinned to the without-CADt wait.
    """
    row = SweepRow(sweep_value=value, scenario=s, fpr=fpr, tpr=tpr)
    try:
        result, report = assess(s, with_stroke=True)
    except ModelNotCoveredError as exc:
        row.flags.append("error:not-covered")
        logger.warning("Sweep point %s not covered: %s", value, exc)
        return row
    except NumericalError as exc:
        row.flags.append(f"error:{_error_tag(exc)}")
        logger.warning("Sweep point %s failed: %s", value, exc)
        return row
    row.result, row.report = result, report
    for waits in (result.without_cadt, result.with_cadt):
        row.flags.extend(f"empty:{cls}" for cls in sorted(waits.empty_classes))
    if any(e.fit.n_ec > 2 for e in result.with_cadt.excursions):
        row.flags.append("erlang-padded")
    if (fpr, tpr) in ((0.0, 0.0), (1.0, 1.0)):
        report.w_d_with = report.w_nd_with = report.w_d_without
        report.stroke = stroke_outcomes(0.0)
    return row


def _error_tag(exc: CadtQueueError) -> str:
    name = type(exc).__name__.removesuffix("Error")
    return "".join(f"-{c.lower()}" if c.isupper() else c for c in name).lstrip("-")


def roc_point(s: ClinicalScenario, fpr: float, tpr: float) -> ClinicalScenario:
    """Scenario operating at ``(FPR, TPR)``: ``Se = TPR``, ``Sp = 1 - FPR``."""
    if not (0.0 <= fpr <= 1.0 and 0.0 <= tpr <= 1.0):
        msg = f"ROC point ({fpr}, {tpr}) is outside the unit square"
        raise ValueError(msg)
    return s.replace(sensitivity=tpr, specificity=1.0 - fpr)


def roc_sweep(s: ClinicalScenario, points: Sequence[tuple[float, float]]) -> list[SweepRow]:
    """Evaluate ``(FPR, TPR)`` operating points; the sweep value of each row is its FPR.

    The corners ``(0, 0)`` and ``(1, 1)`` give a delta of exactly zero.
    """
    rows = []
    for fpr, tpr in points:
        rows.append(evaluate_point(fpr, roc_point(s, fpr, tpr), fpr=fpr, tpr=tpr))
        logger.info("Evaluated ROC point (%.4f, %.4f)", fpr, tpr)
    return rows


def binormal_roc(a: float, b: float, n_points: int) -> list[tuple[float, float]]:
    """Points ``(FPR, TPR)`` of the binormal curve ``TPR = Phi(a + b Phi^{-1}(FPR))``.

    FPR is evenly spaced on ``[0, 1]``; the endpoints are exactly
    ``(0, 0)`` and ``(1, 1)``.
    """
    if n_points < 2:
        msg = f"n_points must be >= 2, got {n_points}"
        raise ValueError(msg)
    fpr = np.linspace(0.0, 1.0, n_points)
    with np.errstate(divide="ignore"):
        tpr = scipy.stats.norm.cdf(a + b * scipy.stats.norm.ppf(fpr))
    tpr[0], tpr[-1] = 0.0, 1.0
    return [(float(x), float(y)) for x, y in zip(fpr, tpr, strict=True)]


def optimal_operating_point(rows: Sequence[SweepRow]) -> SweepRow:
    """Row with the largest diseased-image time saving (most negative delta)."""
    candidates = [row for row in rows if row.report is not None]
    if not candidates:
        msg = "no evaluated rows to choose from"
        raise ValueError(msg)
    return min(candidates, key=lambda row: row.report.delta_w_d)  # type: ignore[union-attr]


def sweep_scenario(s: ClinicalScenario, variable: SweepVariable, value: float) -> ClinicalScenario:
    if variable not in SWEEP_FIELDS:
        msg = f"unknown sweep variable {variable!r}; expected one of {sorted(SWEEP_FIELDS)}"
        raise ValueError(msg)
    return s.replace(**{SWEEP_FIELDS[variable]: float(value)})


def sweep(s: ClinicalScenario, variable: SweepVariable, values: Sequence[float]) -> list[SweepRow]:
    """Evaluate ``s`` at every value of one parameter, in order.

    Args:
        s: Base scenario.
        variable: ``traffic``, ``prevalence`` or ``emergency_fraction``.
        values: Parameter values.

    Raises:
        ValueError: Unknown variable.
        ScenarioError: A value is outside the parameter's domain.
    """
    rows = []
    for value in values:
        rows.append(evaluate_point(float(value), sweep_scenario(s, variable, value)))
        logger.info("Evaluated %s=%g", variable, value)
    return rows
