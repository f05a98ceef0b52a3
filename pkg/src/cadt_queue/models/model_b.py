"""Model B: one radiologist with emergent images on top.

Emergent images preempt everything. Their busy periods are folded into
Erlang-Coxian phases, and with triage the AI-positive class forms two
kinds of busy periods with them: those started by an emergent image and
those started by an AI-positive image.
"""

from __future__ import annotations

from cadt_queue.models.base import ClassWaits, ModelId, with_cadt_waits, without_cadt_waits
from cadt_queue.models.structure import Environment, single_class_environment
from cadt_queue.scenario import DerivedRates

__all__ = ["emergent_environment", "model_b_with", "model_b_without"]


def emergent_environment(r: DerivedRates) -> Environment:
    """Phase process of the emergent class on all radiologists of the site."""
    return single_class_environment(r.lambda_em, r.mu_em, r.n_radiologists)


def model_b_without(r: DerivedRates) -> ClassWaits:
    return without_cadt_waits(ModelId.B, r, emergent_environment(r))


def model_b_with(r: DerivedRates, without: ClassWaits | None = None) -> ClassWaits:
    if without is None:
        without = model_b_without(r)
    return with_cadt_waits(ModelId.B, r, emergent_environment(r), without)
