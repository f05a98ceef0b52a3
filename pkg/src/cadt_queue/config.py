"""Flat key-value run configuration.

A run config is a YAML document holding a single flat mapping; section
prefixes are part of the key (``sweep.variable``, ``sim.seed``)::

    traffic: 0.8
    num_radiologists: 1
    mode: both
    sweep.variable: traffic
    sweep.min: 0.3
    sweep.max: 0.9
    sweep.steps: 13
    sim.replications: 200

Unknown keys, nested mappings and sequences are rejected with the line they
appear on. ``--override key=value`` values follow the same YAML scalar rules.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from typing import Any, Literal

import numpy as np
import yaml

from cadt_queue.errors import ConfigError, ScenarioError
from cadt_queue.metrics import SWEEP_FIELDS, SWEEP_VARIABLES, binormal_roc
from cadt_queue.scenario import ClinicalScenario
from cadt_queue.simulator import SimConfig

__all__ = [
    "CONFIG_KEYS",
    "FORMATS",
    "MODES",
    "OutputSpec",
    "RunSpec",
    "SweepSpec",
    "apply_overrides",
    "parse_config",
]

logger = logging.getLogger(__name__)

Mode = Literal["analytic", "simulate", "both"]
MODES = ("analytic", "simulate", "both")
FORMATS = ("csv", "json")

# key -> (section, field, type)
CONFIG_KEYS: dict[str, tuple[str, str, type]] = {
    "fraction_emergent": ("scenario", "fraction_emergent", float),
    "prevalence": ("scenario", "prevalence", float),
    "traffic": ("scenario", "traffic", float),
    "read_time_emergent_min": ("scenario", "read_time_emergent", float),
    "read_time_diseased_min": ("scenario", "read_time_diseased", float),
    "read_time_nondiseased_min": ("scenario", "read_time_nondiseased", float),
    "num_radiologists": ("scenario", "n_radiologists", int),
    "sensitivity": ("scenario", "sensitivity", float),
    "specificity": ("scenario", "specificity", float),
    "mode": ("run", "mode", str),
    "sweep.variable": ("sweep", "variable", str),
    "sweep.min": ("sweep", "min", float),
    "sweep.max": ("sweep", "max", float),
    "sweep.steps": ("sweep", "steps", int),
    "sweep.a": ("sweep", "a", float),
    "sweep.b": ("sweep", "b", float),
    "sim.seed": ("sim", "seed", int),
    "sim.replications": ("sim", "n_replications", int),
    "sim.patients": ("sim", "patients_per_replication", int),
    "sim.warmup_fraction": ("sim", "warmup_fraction", float),
    "sim.workers": ("sim", "n_workers", int),
    "sim.ci_method": ("sim", "ci_method", str),
    "output.path": ("output", "path", str),
    "output.format": ("output", "format", str),
}

_FIELD_KEYS = {(section, name): key for key, (section, name, _) in CONFIG_KEYS.items()}


# ── Specs ──


@dataclass(slots=True, frozen=True)
class SweepSpec:
    """One swept parameter.

    ``roc`` walks the binormal ROC curve with parameters ``a`` and ``b``;
    ``min`` and ``max`` are unused for it.
    """

    variable: str
    min: float = 0.0
    max: float = 1.0
    steps: int = 2
    a: float = 2.0
    b: float = 1.0

    def __post_init__(self) -> None:
        if self.variable not in SWEEP_VARIABLES:
            msg = f"sweep.variable must be one of {list(SWEEP_VARIABLES)}, got {self.variable!r}"
            raise ConfigError(msg, key="sweep.variable")
        if self.steps < 2:
            msg = f"sweep.steps must be >= 2, got {self.steps}"
            raise ConfigError(msg, key="sweep.steps")
        if self.min > self.max:
            msg = f"sweep.min ({self.min}) must not exceed sweep.max ({self.max})"
            raise ConfigError(msg, key="sweep.min")

    @property
    def is_roc(self) -> bool:
        return self.variable == "roc"

    def values(self) -> list[float]:
        return [float(v) for v in np.linspace(self.min, self.max, self.steps)]

    def roc_points(self) -> list[tuple[float, float]]:
        return binormal_roc(self.a, self.b, self.steps)


@dataclass(slots=True, frozen=True)
class OutputSpec:
    path: str | None = None
    format: str = "csv"

    def __post_init__(self) -> None:
        if self.format not in FORMATS:
            msg = f"output.format must be one of {list(FORMATS)}, got {self.format!r}"
            raise ConfigError(msg, key="output.format")


@dataclass(slots=True, frozen=True)
class RunSpec:
    """Everything one CLI run needs."""

    scenario: ClinicalScenario = field(default_factory=ClinicalScenario)
    mode: Mode = "analytic"
    sweep: SweepSpec | None = None
    sim: SimConfig = field(default_factory=SimConfig)
    output: OutputSpec = field(default_factory=OutputSpec)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            msg = f"mode must be one of {list(MODES)}, got {self.mode!r}"
            raise ConfigError(msg, key="mode")
        if self.sweep is not None and not self.sweep.is_roc:
            name = SWEEP_FIELDS[self.sweep.variable]
            for key, bound in (("sweep.min", self.sweep.min), ("sweep.max", self.sweep.max)):
                try:
                    self.scenario.replace(**{name: bound})
                except ScenarioError as exc:
                    raise ConfigError(str(exc), key=key) from exc

    @property
    def simulates(self) -> bool:
        return self.mode in ("simulate", "both")

    def to_mapping(self) -> dict[str, Any]:
        """The flat key-value form of this spec, in documented key order."""
        sections: dict[str, Any] = {
            "scenario": self.scenario,
            "run": self,
            "sweep": self.sweep,
            "sim": self.sim,
            "output": self.output,
        }
        out: dict[str, Any] = {}
        for key, (section, name, _) in CONFIG_KEYS.items():
            source = sections[section]
            if source is None:
                continue
            value = getattr(source, name)
            if value is not None:
                out[key] = value
        return out

    def to_config_text(self) -> str:
        """Canonical config text; ``parse_config`` of it gives back an equal spec."""
        return yaml.safe_dump(self.to_mapping(), sort_keys=False, default_flow_style=False)


# ── Parsing ──


def _line(node: yaml.Node) -> int:
    return node.start_mark.line + 1


def _read_entries(text: str) -> tuple[dict[str, Any], dict[str, int]]:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(exc, "problem", None) or str(exc)
        msg = f"malformed config: {problem}"
        raise ConfigError(msg, line=line) from exc
    if root is None:
        return {}, {}
    if not isinstance(root, yaml.MappingNode):
        msg = "config must be a flat mapping of key: value lines"
        raise ConfigError(msg, line=_line(root))

    values: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for key_node, value_node in root.value:
        line = _line(key_node)
        if not isinstance(key_node, yaml.ScalarNode):
            msg = "config keys must be plain scalars"
            raise ConfigError(msg, line=line)
        key = str(key_node.value)
        if key not in CONFIG_KEYS:
            msg = f"unknown config key {key!r}"
            raise ConfigError(msg, line=line, key=key)
        if key in values:
            msg = f"duplicate config key {key!r} (first on line {lines[key]})"
            raise ConfigError(msg, line=line, key=key)
        if not isinstance(value_node, yaml.ScalarNode):
            msg = f"value of {key!r} must be a scalar, not a nested mapping or list"
            raise ConfigError(msg, line=_line(value_node), key=key)
        values[key] = yaml.safe_load(yaml.serialize(value_node))
        lines[key] = line
    return values, lines


def _coerce(key: str, value: Any, line: int | None) -> Any:
    expected = CONFIG_KEYS[key][2]
    if value is None and key == "output.path":
        return None
    if isinstance(value, bool):
        ok = False
    elif expected is float:
        ok = isinstance(value, int | float)
        value = float(value) if ok else value
    else:
        ok = isinstance(value, expected)
    if not ok:
        msg = f"{key} must be {expected.__name__}, got {value!r}"
        raise ConfigError(msg, line=line, key=key)
    return value


def _build(values: dict[str, Any], lines: dict[str, int]) -> RunSpec:
    names = ("scenario", "run", "sweep", "sim", "output")
    sections: dict[str, dict[str, Any]] = {name: {} for name in names}
    for key, value in values.items():
        section, name, _ = CONFIG_KEYS[key]
        sections[section][name] = _coerce(key, value, lines.get(key))

    def located(exc: ConfigError) -> ConfigError:
        line = lines.get(exc.key) if exc.key else None
        if line is None or exc.line is not None:
            return exc
        return ConfigError(str(exc), line=line, key=exc.key)

    try:
        scenario = ClinicalScenario(**sections["scenario"])
    except ScenarioError as exc:
        key = _FIELD_KEYS.get(("scenario", exc.field or ""))
        raise ConfigError(str(exc), line=lines.get(key or ""), key=key) from exc
    try:
        sweep = None
        if sections["sweep"]:
            if "variable" not in sections["sweep"]:
                msg = "sweep.variable is required when other sweep keys are given"
                raise ConfigError(msg, key="sweep.variable")
            sweep = SweepSpec(**sections["sweep"])
        return RunSpec(
            scenario=scenario,
            sweep=sweep,
            sim=SimConfig(**sections["sim"]),
            output=OutputSpec(**sections["output"]),
            **sections["run"],
        )
    except ConfigError as exc:
        raise located(exc) from exc


def parse_config(text: str, overrides: list[str] | tuple[str, ...] = ()) -> RunSpec:
    """Parse and validate a run config.

    Args:
        text: Config text; empty text gives the all-defaults spec.
        overrides: ``key=value`` strings applied on top of ``text``.

    Returns:
        Fully validated RunSpec.

    Raises:
        ConfigError: Malformed text, unknown key, wrong type or out-of-range
            value. The message starts with the offending line when known.

    Example:
        spec = parse_config("traffic: 0.5\\nmode: both\\n")
        spec.sim.n_replications  # 200
    """
    values, lines = _read_entries(text)
    for key, value in apply_overrides({}, overrides).items():
        values[key] = value
        lines.pop(key, None)
    spec = _build(values, lines)
    logger.debug("Parsed config with %d key(s) and %d override(s)", len(values), len(overrides))
    return spec


def apply_overrides(
    values: dict[str, Any], overrides: list[str] | tuple[str, ...]
) -> dict[str, Any]:
    """Return ``values`` updated with ``key=value`` overrides typed as YAML scalars.

    Raises:
        ConfigError: Missing ``=``, unknown key or non-scalar value.
    """
    out = dict(values)
    for item in overrides:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep:
            msg = f"override {item!r} must look like key=value"
            raise ConfigError(msg, key=key or None)
        if key not in CONFIG_KEYS:
            msg = f"unknown config key {key!r} in override"
            raise ConfigError(msg, key=key)
        try:
            value = yaml.safe_load(raw.strip()) if raw.strip() else None
        except yaml.YAMLError as exc:
            msg = f"override {item!r} has an unparseable value"
            raise ConfigError(msg, key=key) from exc
        if isinstance(value, dict | list):
            msg = f"override value of {key!r} must be a scalar"
            raise ConfigError(msg, key=key)
        out[key] = value
    return out
