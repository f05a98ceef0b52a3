"""Model D: one radiologist with disease-dependent reading rates.

The chain keeps the disease status of the image being read, because it
selects the reading rate. Emergent busy periods share one fitted set of
phases across both statuses. With triage the AI-positive class is a
mixture weighted by PPV and the AI-negative class by NPV, giving three
distinct busy periods for the AI-negative class: started by an emergent
image, by a diseased AI-positive image or by a non-diseased one.
"""

from __future__ import annotations

from cadt_queue.errors import ScenarioError
from cadt_queue.models.base import ClassWaits, ModelId, with_cadt_waits, without_cadt_waits
from cadt_queue.models.model_b import emergent_environment
from cadt_queue.scenario import DerivedRates

__all__ = ["model_d_with", "model_d_without"]


def _require_one(r: DerivedRates) -> None:
    if r.n_radiologists != 1:
        msg = f"Model D needs one radiologist, got {r.n_radiologists}"
        raise ScenarioError(msg, field="n_radiologists")


def model_d_without(r: DerivedRates) -> ClassWaits:
    _require_one(r)
    return without_cadt_waits(ModelId.D, r, emergent_environment(r), typed=True)


def model_d_with(r: DerivedRates, without: ClassWaits | None = None) -> ClassWaits:
    _require_one(r)
    if without is None:
        without = model_d_without(r)
    return with_cadt_waits(ModelId.D, r, emergent_environment(r), without, typed=True)
