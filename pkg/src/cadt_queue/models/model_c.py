"""Model C: two radiologists, emergent images on top, equal reading rates.

A busy period starts when both radiologists are taken by higher-priority
work. With triage it can start from three states (an emergent image
arrives while the other radiologist reads an emergent image, or either
kind of image arrives while the other radiologist reads an AI-positive
image) and end with either kind of image still being read, so there are up
to six busy periods. Some of them need an extra Erlang phase to match
their low variability.
"""

from __future__ import annotations

from cadt_queue.errors import ScenarioError
from cadt_queue.models.base import ClassWaits, ModelId, with_cadt_waits, without_cadt_waits
from cadt_queue.models.model_b import emergent_environment
from cadt_queue.scenario import DerivedRates

__all__ = ["model_c_with", "model_c_without"]


def _require_two(r: DerivedRates) -> None:
    if r.n_radiologists != 2:
        msg = f"Model C needs two radiologists, got {r.n_radiologists}"
        raise ScenarioError(msg, field="n_radiologists")


def model_c_without(r: DerivedRates) -> ClassWaits:
    """Non-emergent wait on two radiologists; service rate ``min(n, free) mu``."""
    _require_two(r)
    return without_cadt_waits(ModelId.C, r, emergent_environment(r))


def model_c_with(r: DerivedRates, without: ClassWaits | None = None) -> ClassWaits:
    _require_two(r)
    if without is None:
        without = model_c_without(r)
    return with_cadt_waits(ModelId.C, r, emergent_environment(r), without)
