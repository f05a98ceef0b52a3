"""Model A: one radiologist, no emergent images, equal reading rates.

Without triage the reading queue is M/M/1 FIFO. With triage the
AI-positive class is an M/M/1 queue of its own and the AI-negative class
sees it only through its busy periods.
"""

from __future__ import annotations

from cadt_queue.models.base import (
    ClassWaits,
    ModelId,
    World,
    mmc_wait,
    tracked_wait,
)
from cadt_queue.models.structure import single_class_environment
from cadt_queue.scenario import DerivedRates, PatientClass

__all__ = ["model_a_with", "model_a_without"]


def model_a_without(r: DerivedRates) -> ClassWaits:
    """M/M/1 FIFO wait ``rho / (mu - lambda)`` of the non-emergent stream."""
    non_em = PatientClass.NON_EMERGENT
    wait = mmc_wait(r.lambda_non_em, r.mu_non_em, 1)
    return ClassWaits(
        model=ModelId.A,
        world=World.WITHOUT_CADT,
        waits={non_em: wait.minutes},
        arrival_rates={non_em: r.lambda_non_em},
        service_rates={non_em: r.mu_non_em},
        empty_classes=frozenset({non_em}) if wait.empty else frozenset(),
    )


def model_a_with(r: DerivedRates, without: ClassWaits | None = None) -> ClassWaits:
    """Waits of the AI-positive and AI-negative classes.

    The AI-negative chain replaces each AI-positive busy period by a
    two-phase Coxian matched to the M/M/1 busy-period moments.
    """
    if without is None:
        without = model_a_without(r)
    plus, minus = PatientClass.AI_POSITIVE, PatientClass.AI_NEGATIVE
    arrivals = {plus: r.lambda_plus, minus: r.lambda_minus}
    services = {plus: r.mu_plus, minus: r.mu_minus}
    base_wait = without.waits[PatientClass.NON_EMERGENT]

    if r.lambda_plus <= 0.0:
        waits = {plus: 0.0, minus: base_wait}
        return ClassWaits(ModelId.A, World.WITH_CADT, waits, arrivals, services, frozenset({plus}))
    if r.lambda_minus <= 0.0:
        waits = {plus: base_wait, minus: 0.0}
        return ClassWaits(ModelId.A, World.WITH_CADT, waits, arrivals, services, frozenset({minus}))

    w_plus = mmc_wait(r.lambda_plus, r.mu_plus, 1)
    env = single_class_environment(r.lambda_plus, r.mu_plus, 1)
    w_minus, sol = tracked_wait(env, r.lambda_minus, [(1.0, r.mu_minus)])
    return ClassWaits(
        model=ModelId.A,
        world=World.WITH_CADT,
        waits={plus: w_plus.minutes, minus: w_minus.minutes},
        arrival_rates=arrivals,
        service_rates=services,
        excursions=env.excursions,
        solutions={minus: sol} if sol is not None else {},
    )
