"""Shared types and helpers of the analytic models."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import StrEnum
from typing import TYPE_CHECKING

from cadt_queue.errors import ModelNotCoveredError, UnstableSystemError
from cadt_queue.models.structure import TrackedChain, busy_period_environment
from cadt_queue.qbd import (
    QueueWait,
    StationarySolution,
    mean_level,
    solve_boundary,
    solve_R,
    waiting_time,
)
from cadt_queue.scenario import ClinicalScenario, DerivedRates, PatientClass

if TYPE_CHECKING:
    from cadt_queue.models.structure import Environment, Excursion
    from cadt_queue.rdr import BusyPeriod

__all__ = [
    "ClassWaits",
    "ModelId",
    "ModelResult",
    "World",
    "mmc_wait",
    "service_mix",
    "select_model",
    "tracked_wait",
    "with_cadt_waits",
    "without_cadt_waits",
]

logger = logging.getLogger(__name__)

MAX_TRAFFIC = 0.99
DISPATCH_TOL = 1e-12


class ModelId(StrEnum):
    """Workflow models.

    A: one radiologist, no emergent images, equal reading rates.
    B: adds emergent images.
    C: two radiologists.
    D: one radiologist, disease-dependent reading rates.
    """

    A = "A"
    B = "B"
    C = "C"
    D = "D"


class World(StrEnum):
    WITHOUT_CADT = "without_cadt"
    WITH_CADT = "with_cadt"


@dataclass(slots=True)
class ClassWaits:
    """Mean waits (minutes) of every class in one world.

    Without CADt only ``emergent`` and ``non_emergent`` are populated; with
    CADt ``ai_positive`` and ``ai_negative`` replace ``non_emergent``.
    Classes without arrivals have wait 0 and appear in ``empty_classes``.
    """

    model: ModelId
    world: World
    waits: dict[PatientClass, float]
    arrival_rates: dict[PatientClass, float]
    service_rates: dict[PatientClass, float]
    empty_classes: frozenset[PatientClass] = frozenset()
    excursions: tuple[Excursion, ...] = ()
    busy_periods: tuple[BusyPeriod, ...] = ()
    solutions: dict[PatientClass, StationarySolution] = field(default_factory=dict, repr=False)

    def wait(self, cls: PatientClass) -> float:
        return self.waits[cls]

    @property
    def w_em(self) -> float | None:
        return self.waits.get(PatientClass.EMERGENT)

    @property
    def w_non_em(self) -> float | None:
        return self.waits.get(PatientClass.NON_EMERGENT)

    @property
    def w_plus(self) -> float | None:
        return self.waits.get(PatientClass.AI_POSITIVE)

    @property
    def w_minus(self) -> float | None:
        return self.waits.get(PatientClass.AI_NEGATIVE)

    def weighted_sum(self, classes: tuple[PatientClass, ...]) -> float:
        """``sum lambda_c W_c`` over ``classes`` (the mean number waiting, by Little's law)."""
        return sum(self.arrival_rates[c] * self.waits[c] for c in classes)


@dataclass(slots=True)
class ModelResult:
    """Both worlds of one scenario."""

    model: ModelId
    scenario: ClinicalScenario
    without_cadt: ClassWaits
    with_cadt: ClassWaits

    def summary(self) -> str:
        lines = [f"Model {self.model} (traffic {self.scenario.traffic:g})"]
        for waits in (self.without_cadt, self.with_cadt):
            for cls, w in waits.waits.items():
                flag = " (empty)" if cls in waits.empty_classes else ""
                lines.append(f"  {waits.world:<13} {cls:<13} {w:10.4f} min{flag}")
        return "\n".join(lines)


def select_model(s: ClinicalScenario) -> ModelId:
    """Pick the analytic model that covers a scenario.

    Emergent fractions and reading-rate differences within 1e-12 count as
    zero, so near-degenerate inputs use the simpler model.

    Raises:
        ModelNotCoveredError: Two radiologists with disease-dependent reading rates.
    """
    equal_reads = math.isclose(
        s.read_time_diseased, s.read_time_nondiseased, rel_tol=DISPATCH_TOL, abs_tol=0.0
    )
    if s.n_radiologists == 2:
        if not equal_reads:
            msg = "two radiologists with disease-dependent reading rates are not modelled"
            raise ModelNotCoveredError(msg, nearest=ModelId.C)
        return ModelId.C
    if not equal_reads:
        return ModelId.D
    if s.fraction_emergent <= DISPATCH_TOL:
        return ModelId.A
    return ModelId.B


def check_traffic(s: ClinicalScenario) -> None:
    if s.traffic >= MAX_TRAFFIC:
        msg = f"traffic {s.traffic} is at or above the supported limit {MAX_TRAFFIC}"
        raise UnstableSystemError(msg)


def mmc_wait(arrival_rate: float, service_rate: float, servers: int) -> QueueWait:
    """Erlang-C mean wait of an M/M/c FIFO queue.

    Raises:
        UnstableSystemError: ``lambda >= c mu``.
    """
    if arrival_rate <= 0.0:
        return QueueWait(0.0, empty=True)
    a = arrival_rate / service_rate
    rho = a / servers
    if rho >= 1.0:
        msg = f"M/M/{servers} queue is unstable (rho={rho:.6f})"
        raise UnstableSystemError(msg)
    head = sum(a**k / math.factorial(k) for k in range(servers))
    tail = a**servers / (math.factorial(servers) * (1.0 - rho))
    erlang_c = tail / (head + tail)
    return QueueWait(erlang_c / (servers * service_rate - arrival_rate))


def tracked_wait(
    env: Environment,
    arrival_rate: float,
    service_types: list[tuple[float, float]],
) -> tuple[QueueWait, StationarySolution | None]:
    """Mean wait of a class riding on ``env``, from its QBD and Little's law."""

    if arrival_rate <= 0.0:
        return QueueWait(0.0, empty=True), None
    chain = TrackedChain(env, arrival_rate, service_types)
    qbd = chain.to_qbd()
    sol = solve_boundary(qbd, solve_R(qbd))
    count = mean_level(sol)
    logger.debug(
        "QBD with %d phases per level: L=%.9f, sp(R)=%.6f",
        qbd.level_size,
        count,
        sol.spectral_radius,
    )
    return waiting_time(count, arrival_rate, chain.mean_service_rate), sol


def _emergent_entry(
    r: DerivedRates,
) -> tuple[dict[PatientClass, float], dict[PatientClass, float], dict[PatientClass, float]]:
    if r.lambda_em <= 0.0:
        return {}, {}, {}
    wait = mmc_wait(r.lambda_em, r.mu_em, r.n_radiologists)
    em = PatientClass.EMERGENT
    return {em: wait.minutes}, {em: r.lambda_em}, {em: r.mu_em}


def service_mix(r: DerivedRates, cls: PatientClass, *, typed: bool) -> list[tuple[float, float]]:
    """Reading-time mixture of a class; a single exponential at the mean rate unless ``typed``."""
    if typed:
        return r.service_types(cls)
    return [(1.0, r.service(cls))]


def without_cadt_waits(
    model: ModelId,
    r: DerivedRates,
    env: Environment,
    *,
    typed: bool = False,
) -> ClassWaits:
    """Waits of the emergent and non-emergent classes when nothing is triaged."""
    waits, arrivals, services = _emergent_entry(r)
    non_em = PatientClass.NON_EMERGENT
    wait, sol = tracked_wait(env, r.lambda_non_em, service_mix(r, non_em, typed=typed))
    waits[non_em] = wait.minutes
    arrivals[non_em] = r.lambda_non_em
    services[non_em] = r.mu_non_em
    return ClassWaits(
        model=model,
        world=World.WITHOUT_CADT,
        waits=waits,
        arrival_rates=arrivals,
        service_rates=services,
        empty_classes=frozenset({non_em}) if wait.empty else frozenset(),
        excursions=env.excursions,
        solutions={non_em: sol} if sol is not None else {},
    )


def with_cadt_waits(
    model: ModelId,
    r: DerivedRates,
    env: Environment,
    without: ClassWaits,
    *,
    typed: bool = False,
) -> ClassWaits:
    """Waits with the AI-positive class moved ahead of the AI-negative class.

    The AI-positive class rides on ``env``. Its busy periods, together with
    the higher classes, form the environment of the AI-negative class. When
    one of the two classes is empty, the other is the whole non-emergent
    stream and keeps the wait it has without triage.
    """
    plus, minus = PatientClass.AI_POSITIVE, PatientClass.AI_NEGATIVE
    waits, arrivals, services = _emergent_entry(r)
    arrivals.update({plus: r.lambda_plus, minus: r.lambda_minus})
    services.update({plus: r.mu_plus, minus: r.mu_minus})
    base_wait = without.waits[PatientClass.NON_EMERGENT]

    if r.lambda_plus <= 0.0:
        waits.update({plus: 0.0, minus: base_wait})
        empty = frozenset({plus})
        return ClassWaits(model, World.WITH_CADT, waits, arrivals, services, empty)
    if r.lambda_minus <= 0.0:
        waits.update({plus: base_wait, minus: 0.0})
        empty = frozenset({minus})
        return ClassWaits(model, World.WITH_CADT, waits, arrivals, services, empty)

    plus_types = service_mix(r, plus, typed=typed)
    minus_types = service_mix(r, minus, typed=typed)
    w_plus, sol_plus = tracked_wait(env, r.lambda_plus, plus_types)
    busy_env, periods = busy_period_environment(TrackedChain(env, r.lambda_plus, plus_types))
    w_minus, sol_minus = tracked_wait(busy_env, r.lambda_minus, minus_types)
    logger.debug(
        "Model %s with CADt: %d busy periods, %d phases per AI-negative level",
        model,
        len(busy_env.excursions),
        busy_env.size * len(minus_types),
    )
    waits.update({plus: w_plus.minutes, minus: w_minus.minutes})
    solutions = {c: s for c, s in ((plus, sol_plus), (minus, sol_minus)) if s is not None}
    return ClassWaits(
        model=model,
        world=World.WITH_CADT,
        waits=waits,
        arrival_rates=arrivals,
        service_rates=services,
        excursions=busy_env.excursions,
        busy_periods=tuple(periods),
        solutions=solutions,
    )
