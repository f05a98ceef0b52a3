"""cadt-queue: time savings of computer-aided triage in a radiology reading queue.

Analytic waits come from priority-queue Markov chains solved with the
matrix-geometric method, with lower classes reduced through fitted busy
periods. A paired-world discrete-event simulator cross-checks them.

Example:
    from cadt_queue import ClinicalScenario, assess

    result, report = assess(ClinicalScenario(traffic=0.8))
    report.delta_w_d  # minutes saved per diseased image (negative)
"""

from __future__ import annotations

from cadt_queue.config import OutputSpec, RunSpec, SweepSpec, parse_config
from cadt_queue.errors import (
    AbsorbingStructureError,
    CadtQueueError,
    ChainStructureError,
    ConfigError,
    ConvergenceError,
    DegenerateBoundaryError,
    ModelNotCoveredError,
    MomentInfeasibleError,
    NumericalError,
    ScenarioError,
    UnstableSystemError,
)
from cadt_queue.metrics import (
    EffectivenessReport,
    StrokeOutcome,
    SweepRow,
    assess,
    binormal_roc,
    delta_w,
    optimal_operating_point,
    roc_sweep,
    stroke_outcomes,
    sweep,
)
from cadt_queue.models import ClassWaits, ModelId, ModelResult, World, evaluate, select_model
from cadt_queue.scenario import ClinicalScenario, DerivedRates, PatientClass, derive_rates
from cadt_queue.simulator import Estimate, SimConfig, SimReport, run_replication, run_study

__all__ = [
    "AbsorbingStructureError",
    "CadtQueueError",
    "ChainStructureError",
    "ClassWaits",
    "ClinicalScenario",
    "ConfigError",
    "ConvergenceError",
    "DegenerateBoundaryError",
    "DerivedRates",
    "EffectivenessReport",
    "Estimate",
    "ModelId",
    "ModelNotCoveredError",
    "ModelResult",
    "MomentInfeasibleError",
    "NumericalError",
    "OutputSpec",
    "PatientClass",
    "RunSpec",
    "ScenarioError",
    "SimConfig",
    "SimReport",
    "StrokeOutcome",
    "SweepRow",
    "SweepSpec",
    "UnstableSystemError",
    "World",
    "assess",
    "binormal_roc",
    "delta_w",
    "derive_rates",
    "evaluate",
    "optimal_operating_point",
    "parse_config",
    "roc_sweep",
    "run_replication",
    "run_study",
    "select_model",
    "stroke_outcomes",
    "sweep",
]
