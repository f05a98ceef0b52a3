"""Analytic models A-D of the reading queue, with and without CADt."""

from __future__ import annotations

import logging
from collections.abc import Callable

import numpy as np

from cadt_queue.models.base import (
    ClassWaits,
    ModelId,
    ModelResult,
    World,
    check_traffic,
    mmc_wait,
    select_model,
)
from cadt_queue.models.model_a import model_a_with, model_a_without
from cadt_queue.models.model_b import model_b_with, model_b_without
from cadt_queue.models.model_c import model_c_with, model_c_without
from cadt_queue.models.model_d import model_d_with, model_d_without
from cadt_queue.models.structure import (
    Environment,
    Excursion,
    TrackedChain,
    busy_period_environment,
    idle_environment,
    single_class_environment,
)
from cadt_queue.qbd import level_probabilities
from cadt_queue.scenario import ClinicalScenario, DerivedRates, PatientClass, derive_rates

__all__ = [
    "ClassWaits",
    "Environment",
    "Excursion",
    "ModelId",
    "ModelResult",
    "TrackedChain",
    "World",
    "busy_period_environment",
    "class_state_pdf",
    "evaluate",
    "idle_environment",
    "mmc_wait",
    "model_a_with",
    "model_a_without",
    "model_b_with",
    "model_b_without",
    "model_c_with",
    "model_c_without",
    "model_d_with",
    "model_d_without",
    "select_model",
    "single_class_environment",
]

logger = logging.getLogger(__name__)

_BUILDERS: dict[
    ModelId,
    tuple[Callable[[DerivedRates], ClassWaits], Callable[[DerivedRates, ClassWaits], ClassWaits]],
] = {
    ModelId.A: (model_a_without, model_a_with),
    ModelId.B: (model_b_without, model_b_with),
    ModelId.C: (model_c_without, model_c_with),
    ModelId.D: (model_d_without, model_d_with),
}


def evaluate(s: ClinicalScenario) -> ModelResult:
    """Mean waits of every class in both worlds.

    Args:
        s: Scenario to evaluate.

    Returns:
        ModelResult of the model chosen by ``select_model``.

    Raises:
        ModelNotCoveredError: No model covers the scenario.
        UnstableSystemError: Traffic at or above 0.99, or an unstable class.
        MomentInfeasibleError: A busy-period fit failed.

    Example:
        result = evaluate(ClinicalScenario(traffic=0.8))
        result.without_cadt.w_non_em  # 40.0
    """
    model = select_model(s)
    check_traffic(s)
    r = derive_rates(s)
    without_fn, with_fn = _BUILDERS[model]
    without = without_fn(r)
    with_ = with_fn(r, without)
    logger.debug("Evaluated model %s at traffic %.4f", model, s.traffic)
    return ModelResult(model=model, scenario=s, without_cadt=without, with_cadt=with_)


def class_state_pdf(result: ModelResult, cls: PatientClass, max_level: int) -> np.ndarray:
    """Stationary distribution of the number of ``cls`` images in the system.

    Available for every class solved through a QBD (the emergent class is
    not) and for the non-emergent class of Model A.

    Raises:
        KeyError: The class has no stationary solution in ``result``.
    """
    if result.model is ModelId.A and cls is PatientClass.NON_EMERGENT:
        r = derive_rates(result.scenario)
        rho = r.lambda_non_em / r.mu_non_em
        return (1.0 - rho) * rho ** np.arange(max_level + 1)
    for waits in (result.without_cadt, result.with_cadt):
        if cls in waits.solutions:
            return level_probabilities(waits.solutions[cls], max_level)
    msg = f"no stationary solution for {cls} in model {result.model}"
    raise KeyError(msg)
