"""Shared fixtures and constants for tests."""

from __future__ import annotations

import pytest

from cadt_queue import ClinicalScenario

# Reading site used throughout the acceptance checks
CLINIC = {
    "prevalence": 0.1,
    "sensitivity": 0.95,
    "specificity": 0.89,
    "read_time_emergent": 5.0,
    "read_time_diseased": 10.0,
    "read_time_nondiseased": 10.0,
}

# Traffic levels checked against simulation
TRAFFIC_POINTS: tuple[float, ...] = (0.3, 0.5, 0.8)

# Monte Carlo study size
SIM_REPLICATIONS: int = 200
SIM_PATIENTS: int = 2000
SIM_SEED: int = 20240611

# Binormal ROC parameters of a device with AUC ~0.98
ROC_A: float = 2.81984
ROC_B: float = 1.0


@pytest.fixture
def clinic() -> ClinicalScenario:
    """Single radiologist, no emergent images, traffic 0.8."""
    return ClinicalScenario(traffic=0.8, **CLINIC)


@pytest.fixture
def busy_clinic() -> ClinicalScenario:
    """Single radiologist, half of the images emergent, traffic 0.8."""
    return ClinicalScenario(traffic=0.8, fraction_emergent=0.5, **CLINIC)
