"""Paired-world discrete-event simulation of the reading queue.

Every generated image is read in two worlds at once: one without CADt
(emergent ahead of non-emergent) and one with CADt (emergent ahead of
AI-positive ahead of AI-negative). Both worlds see the same arrival times
and the same reading times, so per-image differences isolate the effect of
triage. Radiologists are a ``simpy.PreemptiveResource``; an image bumped by a
higher class resumes later with its remaining reading time.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal

import numpy as np
import scipy.stats
import simpy

from cadt_queue.errors import ConfigError
from cadt_queue.models import World
from cadt_queue.scenario import PatientClass, derive_rates

if TYPE_CHECKING:
    from collections.abc import Generator, Iterable

    from cadt_queue.scenario import ClinicalScenario

__all__ = [
    "Estimate",
    "PatientImage",
    "ReadingRoom",
    "ReplicationRecord",
    "SimConfig",
    "SimReport",
    "Subgroup",
    "generate_patients",
    "run_replication",
    "run_study",
]

logger = logging.getLogger(__name__)

CiMethod = Literal["replication", "pooled"]

WORLD_CLASSES: dict[World, tuple[PatientClass, ...]] = {
    World.WITHOUT_CADT: (PatientClass.EMERGENT, PatientClass.NON_EMERGENT),
    World.WITH_CADT: (
        PatientClass.EMERGENT,
        PatientClass.AI_POSITIVE,
        PatientClass.AI_NEGATIVE,
    ),
}

Z_95 = float(scipy.stats.norm.ppf(0.975))
Z_68 = float(scipy.stats.norm.ppf(0.84))


class Subgroup:
    """Image subgroups by emergency status, disease and AI call."""

    EMERGENT = "emergent"
    TRUE_POSITIVE = "TP"
    FALSE_NEGATIVE = "FN"
    FALSE_POSITIVE = "FP"
    TRUE_NEGATIVE = "TN"

    ALL = (EMERGENT, TRUE_POSITIVE, FALSE_NEGATIVE, FALSE_POSITIVE, TRUE_NEGATIVE)


# ── Inputs ──


@dataclass(slots=True, frozen=True)
class PatientImage:
    """One image, shared by both worlds.

    Emergent images carry ``diseased = ai_positive = False``; the device does
    not analyse them.
    """

    index: int
    arrival_time: float
    emergent: bool
    diseased: bool
    ai_positive: bool
    reading_time: float

    def patient_class(self, world: World) -> PatientClass:
        if self.emergent:
            return PatientClass.EMERGENT
        if world is World.WITHOUT_CADT:
            return PatientClass.NON_EMERGENT
        return PatientClass.AI_POSITIVE if self.ai_positive else PatientClass.AI_NEGATIVE

    @property
    def subgroup(self) -> str:
        if self.emergent:
            return Subgroup.EMERGENT
        if self.diseased:
            return Subgroup.TRUE_POSITIVE if self.ai_positive else Subgroup.FALSE_NEGATIVE
        return Subgroup.FALSE_POSITIVE if self.ai_positive else Subgroup.TRUE_NEGATIVE


@dataclass(slots=True, frozen=True)
class SimConfig:
    """Monte Carlo study settings.

    Attributes:
        n_replications: Independent replications.
        patients_per_replication: Images generated per replication.
        seed: Root seed; replication streams are spawned from it.
        warmup_fraction: Leading share of each replication's images left out
            of the statistics.
        n_workers: Worker processes; results do not depend on it.
        ci_method: ``replication`` (across replication means) or ``pooled``
            (across all per-image values).
    """

    n_replications: int = 200
    patients_per_replication: int = 2000
    seed: int = 0
    warmup_fraction: float = 0.0
    n_workers: int = 1
    ci_method: CiMethod = "replication"

    def __post_init__(self) -> None:
        for key, value in (
            ("sim.replications", self.n_replications),
            ("sim.patients", self.patients_per_replication),
            ("sim.workers", self.n_workers),
        ):
            if value < 1:
                msg = f"{key} must be >= 1, got {value}"
                raise ConfigError(msg, key=key)
        if not 0.0 <= self.warmup_fraction < 1.0:
            msg = f"sim.warmup_fraction must be in [0,1), got {self.warmup_fraction}"
            raise ConfigError(msg, key="sim.warmup_fraction")
        if self.seed < 0:
            msg = f"sim.seed must be non-negative, got {self.seed}"
            raise ConfigError(msg, key="sim.seed")
        if self.ci_method not in ("replication", "pooled"):
            msg = f"sim.ci_method must be 'replication' or 'pooled', got {self.ci_method!r}"
            raise ConfigError(msg, key="sim.ci_method")


def generate_patients(
    s: ClinicalScenario, rng: np.random.Generator, n_patients: int
) -> list[PatientImage]:
    """Draw Poisson arrivals with their labels and exponential reading times (minutes)."""
    r = derive_rates(s)
    arrivals = np.cumsum(rng.exponential(1.0 / r.arrival_rate, n_patients))
    emergent = rng.random(n_patients) < s.fraction_emergent
    diseased = (rng.random(n_patients) < s.prevalence) & ~emergent
    u = rng.random(n_patients)
    ai_positive = np.where(diseased, u < s.sensitivity, u < 1.0 - s.specificity) & ~emergent
    mean_read = np.where(
        emergent,
        s.read_time_emergent,
        np.where(diseased, s.read_time_diseased, s.read_time_nondiseased),
    )
    reading = rng.exponential(mean_read)
    return [
        PatientImage(
            index=i,
            arrival_time=float(arrivals[i]),
            emergent=bool(emergent[i]),
            diseased=bool(diseased[i]),
            ai_positive=bool(ai_positive[i]),
            reading_time=float(reading[i]),
        )
        for i in range(n_patients)
    ]


# ── One world ──


class ReadingRoom:
    """Radiologists reading one world's queue under preemptive-resume priority.

    Requests are ordered by ``(class rank, arrival time, index)``, so a
    preempted image re-enters ahead of later images of its own class.
    """

    def __init__(self, env: simpy.Environment, n_radiologists: int, world: World, n: int) -> None:
        self.env = env
        self.world = world
        self.classes = WORLD_CLASSES[world]
        self.rank = {cls: i for i, cls in enumerate(self.classes)}
        self.radiologists = simpy.PreemptiveResource(env, capacity=n_radiologists)
        self.in_system = dict.fromkeys(self.classes, 0)
        self.waits = np.zeros(n)
        self.service_received = np.zeros(n)
        self.states = np.zeros((n, len(self.classes)), dtype=np.int64)
        self.busy_time = 0.0
        self.preemptions = 0

    def arrivals(self, patients: Iterable[PatientImage]) -> Generator[simpy.Event, None, None]:
        for image in patients:
            yield self.env.timeout(image.arrival_time - self.env.now)
            cls = image.patient_class(self.world)
            self.states[image.index] = [self.in_system[c] for c in self.classes]
            self.in_system[cls] += 1
            self.env.process(self.read(image, cls))

    def read(self, image: PatientImage, cls: PatientClass) -> Generator[simpy.Event, None, None]:
        remaining = image.reading_time
        priority = (self.rank[cls], image.arrival_time, image.index)
        while remaining > 0.0:
            with self.radiologists.request(priority=priority, preempt=True) as req:
                start = None
                try:
                    yield req
                    start = self.env.now
                    yield self.env.timeout(remaining)
                except simpy.Interrupt:
                    self.preemptions += 1
                    served = 0.0 if start is None else self.env.now - start
                    remaining -= served
                else:
                    served = self.env.now - start
                    remaining = 0.0
                self.service_received[image.index] += served
                self.busy_time += served
        self.in_system[cls] -= 1
        self.waits[image.index] = self.env.now - image.arrival_time - image.reading_time


# ── Replications ──


@dataclass(slots=True)
class ReplicationRecord:
    """Per-image results of one replication in both worlds.

    ``states[world]`` holds, per image, the number of images of each class of
    ``WORLD_CLASSES[world]`` in the system just before its arrival.
    """

    arrival_time: np.ndarray
    reading_time: np.ndarray
    emergent: np.ndarray
    diseased: np.ndarray
    ai_positive: np.ndarray
    waits: dict[World, np.ndarray]
    service_received: dict[World, np.ndarray]
    states: dict[World, np.ndarray]
    busy_time: dict[World, float]
    preemptions: dict[World, int]

    @property
    def n_images(self) -> int:
        return len(self.arrival_time)

    @property
    def delta(self) -> np.ndarray:
        """Per-image wait with CADt minus wait without."""
        return self.waits[World.WITH_CADT] - self.waits[World.WITHOUT_CADT]

    def subgroup_mask(self, subgroup: str) -> np.ndarray:
        non_em = ~self.emergent
        masks = {
            Subgroup.EMERGENT: self.emergent,
            Subgroup.TRUE_POSITIVE: non_em & self.diseased & self.ai_positive,
            Subgroup.FALSE_NEGATIVE: non_em & self.diseased & ~self.ai_positive,
            Subgroup.FALSE_POSITIVE: non_em & ~self.diseased & self.ai_positive,
            Subgroup.TRUE_NEGATIVE: non_em & ~self.diseased & ~self.ai_positive,
        }
        return masks[subgroup]

    def class_mask(self, cls: PatientClass) -> np.ndarray:
        non_em = ~self.emergent
        masks = {
            PatientClass.EMERGENT: self.emergent,
            PatientClass.NON_EMERGENT: non_em,
            PatientClass.AI_POSITIVE: non_em & self.ai_positive,
            PatientClass.AI_NEGATIVE: non_em & ~self.ai_positive,
        }
        return masks[cls]

    def diseased_mask(self) -> np.ndarray:
        return ~self.emergent & self.diseased

    def nondiseased_mask(self) -> np.ndarray:
        return ~self.emergent & ~self.diseased


def run_replication(
    s: ClinicalScenario,
    seed: int | np.random.SeedSequence,
    n_patients: int = 2000,
) -> ReplicationRecord:
    """Simulate one replication of ``n_patients`` images in both worlds.

    The generator is numpy's PCG64 seeded with ``seed``. Each world runs until
    its last image is read.

    Example:
        record = run_replication(ClinicalScenario(traffic=0.5), seed=7, n_patients=500)
        record.delta[record.diseased_mask()].mean()
    """
    rng = np.random.default_rng(seed)
    patients = generate_patients(s, rng, n_patients)
    rooms = {}
    for world in WORLD_CLASSES:
        env = simpy.Environment()
        room = ReadingRoom(env, s.n_radiologists, world, n_patients)
        env.process(room.arrivals(patients))
        env.run()
        rooms[world] = room
    return ReplicationRecord(
        arrival_time=np.array([p.arrival_time for p in patients]),
        reading_time=np.array([p.reading_time for p in patients]),
        emergent=np.array([p.emergent for p in patients], dtype=bool),
        diseased=np.array([p.diseased for p in patients], dtype=bool),
        ai_positive=np.array([p.ai_positive for p in patients], dtype=bool),
        waits={w: room.waits for w, room in rooms.items()},
        service_received={w: room.service_received for w, room in rooms.items()},
        states={w: room.states for w, room in rooms.items()},
        busy_time={w: room.busy_time for w, room in rooms.items()},
        preemptions={w: room.preemptions for w, room in rooms.items()},
    )


# ── Aggregation ──


@dataclass(slots=True, frozen=True)
class Estimate:
    """Sample mean with normal-approximation confidence half-widths.

    With fewer than two samples the half-widths are infinite; with none the
    mean is NaN.
    """

    mean: float
    half_width_95: float
    half_width_68: float
    n: int

    @property
    def ci_lo(self) -> float:
        return self.mean - self.half_width_95

    @property
    def ci_hi(self) -> float:
        return self.mean + self.half_width_95

    @property
    def ci68(self) -> tuple[float, float]:
        return self.mean - self.half_width_68, self.mean + self.half_width_68

    def contains(self, value: float, *, widen: float = 1.0) -> bool:
        return abs(value - self.mean) <= widen * self.half_width_95

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> Estimate:
        samples = samples[~np.isnan(samples)]
        n = len(samples)
        if n == 0:
            return cls(math.nan, math.nan, math.nan, 0)
        mean = float(samples.mean())
        if n < 2:
            return cls(mean, math.inf, math.inf, n)
        se = float(samples.std(ddof=1)) / math.sqrt(n)
        return cls(mean, Z_95 * se, Z_68 * se, n)


def _masked_mean(values: np.ndarray, mask: np.ndarray) -> float:
    return float(values[mask].mean()) if mask.any() else math.nan


def _estimate(
    values: list[np.ndarray],
    masks: list[np.ndarray],
    method: CiMethod,
) -> Estimate:
    if method == "pooled":
        pooled = [v[m] for v, m in zip(values, masks, strict=True)]
        return Estimate.from_samples(np.concatenate(pooled))
    means = np.array([_masked_mean(v, m) for v, m in zip(values, masks, strict=True)])
    return Estimate.from_samples(means)


@dataclass(slots=True)
class SimReport:
    """Aggregated study results (minutes).

    Attributes:
        class_waits: Per world, mean wait of each class it has.
        subgroup_waits: Per world, mean wait of emergent, TP, FN, FP and TN images.
        w_d: Per world, mean wait of diseased non-emergent images.
        w_nd: Per world, mean wait of non-diseased non-emergent images.
        delta_w_d: Mean per-image change for diseased images (negative is time saved).
        delta_w_nd: Mean per-image change for non-diseased images.
        state_histograms: Per world and class, the distribution of that
            class's count in the system seen by arriving images.
    """

    scenario: ClinicalScenario
    config: SimConfig
    class_waits: dict[World, dict[PatientClass, Estimate]]
    subgroup_waits: dict[World, dict[str, Estimate]]
    w_d: dict[World, Estimate]
    w_nd: dict[World, Estimate]
    delta_w_d: Estimate
    delta_w_nd: Estimate
    state_histograms: dict[World, dict[PatientClass, np.ndarray]]
    n_images: int
    records: list[ReplicationRecord] = field(default_factory=list, repr=False)

    def summary(self) -> str:
        d = self.delta_w_d
        lines = [
            f"{self.config.n_replications} replications x "
            f"{self.config.patients_per_replication} images ({self.config.ci_method} CI)",
            f"  dW_D  {d.mean:10.4f} min  95% CI [{d.ci_lo:.4f}, {d.ci_hi:.4f}]",
            f"  dW_ND {self.delta_w_nd.mean:10.4f} min",
        ]
        for world, waits in self.class_waits.items():
            for cls, est in waits.items():
                hw = est.half_width_95
                lines.append(f"  {world:<13} {cls:<13} {est.mean:10.4f} +/- {hw:.4f}")
        return "\n".join(lines)


def _histogram(counts: list[np.ndarray]) -> np.ndarray:
    pooled = np.concatenate(counts)
    if pooled.size == 0:
        return np.zeros(1)
    freq = np.bincount(pooled).astype(float)
    return freq / freq.sum()


def _aggregate(s: ClinicalScenario, cfg: SimConfig, records: list[ReplicationRecord]) -> SimReport:
    method = cfg.ci_method
    skip = int(cfg.warmup_fraction * cfg.patients_per_replication)
    kept = []
    for rec in records:
        keep = np.zeros(rec.n_images, dtype=bool)
        keep[skip:] = True
        kept.append(keep)

    def est(values: list[np.ndarray], masks: list[np.ndarray]) -> Estimate:
        return _estimate(values, [m & k for m, k in zip(masks, kept, strict=True)], method)

    class_waits: dict[World, dict[PatientClass, Estimate]] = {}
    subgroup_waits: dict[World, dict[str, Estimate]] = {}
    w_d: dict[World, Estimate] = {}
    w_nd: dict[World, Estimate] = {}
    histograms: dict[World, dict[PatientClass, np.ndarray]] = {}
    for world, classes in WORLD_CLASSES.items():
        waits = [rec.waits[world] for rec in records]
        class_waits[world] = {
            cls: est(waits, [rec.class_mask(cls) for rec in records]) for cls in classes
        }
        subgroup_waits[world] = {
            g: est(waits, [rec.subgroup_mask(g) for rec in records]) for g in Subgroup.ALL
        }
        w_d[world] = est(waits, [rec.diseased_mask() for rec in records])
        w_nd[world] = est(waits, [rec.nondiseased_mask() for rec in records])
        histograms[world] = {
            cls: _histogram([rec.states[world][k, i] for rec, k in zip(records, kept, strict=True)])
            for i, cls in enumerate(classes)
        }

    deltas = [rec.delta for rec in records]
    return SimReport(
        scenario=s,
        config=cfg,
        class_waits=class_waits,
        subgroup_waits=subgroup_waits,
        w_d=w_d,
        w_nd=w_nd,
        delta_w_d=est(deltas, [rec.diseased_mask() for rec in records]),
        delta_w_nd=est(deltas, [rec.nondiseased_mask() for rec in records]),
        state_histograms=histograms,
        n_images=int(sum(k.sum() for k in kept)),
        records=records,
    )


def run_study(s: ClinicalScenario, cfg: SimConfig | None = None) -> SimReport:
    """Run ``cfg.n_replications`` paired-world replications and aggregate them.

    Replication ``i`` uses the ``i``-th stream spawned from
    ``SeedSequence(cfg.seed)``, and results are reduced in replication order,
    so the report is the same for any worker count.

    Args:
        s: Scenario to simulate.
        cfg: Study settings; defaults to ``SimConfig()``.

    Returns:
        SimReport with means and 95%/68% confidence bands.
    """
    cfg = cfg or SimConfig()
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.n_replications)
    n = cfg.patients_per_replication
    logger.info(
        "Simulating %d replications x %d images (traffic %.3f, %d worker(s))",
        cfg.n_replications,
        n,
        s.traffic,
        cfg.n_workers,
    )
    if cfg.n_workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.n_workers) as executor:
            k = len(streams)
            records = list(executor.map(run_replication, [s] * k, streams, [n] * k))
    else:
        records = []
        for i, stream in enumerate(streams):
            records.append(run_replication(s, stream, n))
            if (i + 1) % 50 == 0:
                logger.info("Finished %d/%d replications", i + 1, cfg.n_replications)
    report = _aggregate(s, cfg, records)
    logger.debug("Study done: dW_D=%.4f (n=%d)", report.delta_w_d.mean, report.delta_w_d.n)
    return report
