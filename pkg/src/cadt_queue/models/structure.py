"""Chains of one priority class running on top of higher-priority work.

Every analytic model is assembled from two pieces:

* an ``Environment``: a finite phase process describing the higher-priority
  classes, with the number of radiologists left free in each phase. Busy
  periods in which no radiologist is free are replaced by fitted
  Erlang-Coxian phases;
* a ``TrackedChain``: the environment times the count of the tracked class
  (and, for a single radiologist, the disease status of the image being
  read).

A tracked chain yields the QBD of its own class (levels are the class
count) and the level process of its busy periods as seen by the next class
down (levels are the number of images occupying radiologists).
"""

from __future__ import annotations

import logging
from collections import defaultdict
from collections.abc import Hashable, Sequence
from dataclasses import dataclass, field

import numpy as np

from cadt_queue.errors import ChainStructureError
from cadt_queue.qbd import QbdChain
from cadt_queue.rdr import (
    BusyPeriod,
    EcFit,
    LevelProcess,
    fit_ec,
    mm1_busy_period_moments,
    passage_analysis,
)

__all__ = [
    "Environment",
    "Excursion",
    "TrackedChain",
    "busy_period_environment",
    "idle_environment",
    "single_class_environment",
]

logger = logging.getLogger(__name__)

State = tuple[int, int, int]
"""``(phase, count, tag)``; tag is -1 when the class is absent."""

NO_TAG = -1
BLOCK_TOL = 1e-12


@dataclass(slots=True, frozen=True)
class Excursion:
    """A fitted busy period embedded in an environment."""

    start: Hashable
    end: Hashable
    probability: float
    moments: tuple[float, float, float]
    fit: EcFit
    first_phase: int

    @property
    def phases(self) -> range:
        return range(self.first_phase, self.first_phase + self.fit.n_ec)


@dataclass(slots=True, frozen=True)
class Environment:
    """Finite phase process of the higher-priority classes.

    Attributes:
        rates: Off-diagonal transition rates between phases.
        free: Radiologists available to lower classes in each phase.
        n_servers: Number of radiologists.
        labels: Human-readable phase names.
        excursions: Busy periods whose phases live in this environment.
    """

    rates: np.ndarray
    free: tuple[int, ...]
    n_servers: int
    labels: tuple[str, ...]
    excursions: tuple[Excursion, ...] = ()

    def __post_init__(self) -> None:
        m = len(self.free)
        if self.rates.shape != (m, m):
            msg = f"rates has shape {self.rates.shape} for {m} phases"
            raise ValueError(msg)
        if len(self.labels) != m:
            msg = f"{len(self.labels)} labels for {m} phases"
            raise ValueError(msg)
        if np.any(self.rates < 0.0) or np.any(np.diag(self.rates) != 0.0):
            msg = "environment rates must be nonnegative with a zero diagonal"
            raise ValueError(msg)
        if any(not 0 <= f <= self.n_servers for f in self.free):
            msg = f"free servers must lie in [0, {self.n_servers}]"
            raise ValueError(msg)

    @property
    def size(self) -> int:
        return len(self.free)

    def occupied(self, phase: int) -> int:
        return self.n_servers - self.free[phase]


def idle_environment(n_servers: int) -> Environment:
    """Environment with no higher-priority work at all."""
    return Environment(
        rates=np.zeros((1, 1)),
        free=(n_servers,),
        n_servers=n_servers,
        labels=("idle",),
    )


def _embed(
    rates: np.ndarray,
    free: list[int],
    labels: list[str],
    entries: Sequence[tuple[int, float]],
    end: int,
    fit: EcFit,
    name: str,
) -> tuple[np.ndarray, int]:
    """Append the phases of ``fit`` to an environment under construction.

    ``entries`` lists ``(phase, rate)`` transitions that start the busy
    period. A fraction ``1 - p_ec`` of each entry has zero duration and goes
    straight to ``end``.
    """
    first = rates.shape[0]
    n = fit.n_ec
    grown = np.zeros((first + n, first + n))
    grown[:first, :first] = rates
    alpha, S = fit.phase_type()
    exit_rates = -S.sum(axis=1)
    for phase, rate in entries:
        grown[phase, first : first + n] += rate * alpha
        if end != phase:
            grown[phase, end] += rate * (1.0 - fit.p_ec)
    block = S.copy()
    np.fill_diagonal(block, 0.0)
    grown[first : first + n, first : first + n] = block
    grown[first : first + n, end] += exit_rates
    free.extend([0] * n)
    labels.extend(f"{name}[{i}]" for i in range(n))
    return grown, first


def single_class_environment(
    arrival_rate: float, service_rate: float, n_servers: int
) -> Environment:
    """Top-priority class with exponential reads on ``n_servers`` radiologists.

    Phases ``0..n-1`` count the class while a radiologist is still free.
    Reaching ``n`` starts a busy period of the M/M/1 queue with rate
    ``n * mu``, which is replaced by its Erlang-Coxian fit and ends back in
    phase ``n - 1``.
    """
    if arrival_rate <= 0.0:
        return idle_environment(n_servers)
    n = n_servers
    rates = np.zeros((n, n))
    for k in range(n - 1):
        rates[k, k + 1] = arrival_rate
        rates[k + 1, k] = (k + 1) * service_rate
    free = [n - k for k in range(n)]
    labels = [f"top={k}" for k in range(n)]

    moments = mm1_busy_period_moments(arrival_rate, service_rate, n)
    fit = fit_ec(*moments)
    rates, first = _embed(rates, free, labels, [(n - 1, arrival_rate)], n - 1, fit, "busy")
    excursion = Excursion(
        start=f"top={n}",
        end=f"top={n - 1}",
        probability=1.0,
        moments=moments,
        fit=fit,
        first_phase=first,
    )
    return Environment(
        rates=rates,
        free=tuple(free),
        n_servers=n,
        labels=tuple(labels),
        excursions=(excursion,),
    )


@dataclass(slots=True)
class TrackedChain:
    """One priority class on top of an environment.

    With several ``service_types`` the head-of-line image carries a tag that
    selects its reading rate; the tag of a new head is drawn when it starts.
    Typed service is only supported for a single radiologist.

    Example:
        env = single_class_environment(0.04, 0.2, 1)
        chain = TrackedChain(env, 0.04, [(0.1, 0.1), (0.9, 1 / 15)])
        qbd = chain.to_qbd()
    """

    env: Environment
    arrival_rate: float
    service_types: list[tuple[float, float]]
    _transitions: dict[State, list[tuple[State, float]]] = field(
        default_factory=dict, init=False, repr=False
    )

    def __post_init__(self) -> None:
        if not self.service_types:
            msg = "at least one service type is required"
            raise ValueError(msg)
        total = sum(p for p, _ in self.service_types)
        if abs(total - 1.0) > 1e-12:
            msg = f"service type probabilities sum to {total}, expected 1"
            raise ValueError(msg)
        if any(p <= 0.0 or mu <= 0.0 for p, mu in self.service_types):
            msg = "service types need positive probabilities and rates"
            raise ValueError(msg)
        if self.typed and self.env.n_servers != 1:
            msg = "typed service is only supported with one radiologist"
            raise ValueError(msg)

    @property
    def typed(self) -> bool:
        return len(self.service_types) > 1

    @property
    def n_servers(self) -> int:
        return self.env.n_servers

    @property
    def mean_service_rate(self) -> float:
        return 1.0 / sum(p / mu for p, mu in self.service_types)

    @property
    def first_repeating_level(self) -> int:
        """Smallest count from which the QBD blocks repeat."""
        return 1 if self.typed else self.n_servers

    def tags(self, count: int) -> range:
        if count == 0:
            return range(NO_TAG, NO_TAG + 1)
        return range(len(self.service_types))

    # ── Transition table ──

    def outgoing(self, state: State) -> list[tuple[State, float]]:
        """Transitions ``(target, rate)`` leaving ``state``."""
        cached = self._transitions.get(state)
        if cached is not None:
            return cached
        h, n, tag = state
        moves: list[tuple[State, float]] = []
        for h2 in np.flatnonzero(self.env.rates[h]):
            moves.append(((int(h2), n, tag), float(self.env.rates[h, h2])))

        if self.arrival_rate > 0.0:
            if n == 0:
                for t, (p, _) in enumerate(self.service_types):
                    moves.append(((h, 1, t), self.arrival_rate * p))
            else:
                moves.append(((h, n + 1, tag), self.arrival_rate))

        busy = min(n, self.env.free[h])
        if busy > 0:
            rate = busy * self.service_types[tag][1]
            if n == 1:
                moves.append(((h, 0, NO_TAG), rate))
            else:
                for t, (p, _) in enumerate(self.service_types):
                    moves.append(((h, n - 1, t), rate * p))
        self._transitions[state] = moves
        return moves

    def states_with_count(self, count: int) -> list[State]:
        return [(h, count, t) for h in range(self.env.size) for t in self.tags(count)]

    def _block(self, rows: Sequence[State], cols: Sequence[State]) -> np.ndarray:
        index = {s: j for j, s in enumerate(cols)}
        block = np.zeros((len(rows), len(cols)))
        for i, s in enumerate(rows):
            for target, rate in self.outgoing(s):
                j = index.get(target)
                if j is not None and target != s:
                    block[i, j] += rate
        return block

    # ── QBD of the tracked class ──

    def to_qbd(self) -> QbdChain:
        """QBD whose level is the number of tracked-class images."""
        b = self.first_repeating_level
        boundary = [s for level in range(b) for s in self.states_with_count(level)]
        first = self.states_with_count(b)
        second = self.states_with_count(b + 1)
        third = self.states_with_count(b + 2)

        B00 = self._block(boundary, boundary)
        B01 = self._block(boundary, first)
        B10 = self._block(first, boundary)
        A1 = self._block(first, first)
        A2 = self._block(first, second)
        A0 = self._block(second, first)
        for name, a, c in (
            ("local", A1, self._block(second, second)),
            ("up", A2, self._block(second, third)),
        ):
            if not np.allclose(a, c, rtol=0.0, atol=BLOCK_TOL):
                msg = f"{name} blocks do not repeat from level {b}"
                raise ChainStructureError(msg)

        np.fill_diagonal(B00, -(B00.sum(axis=1) + B01.sum(axis=1)))
        np.fill_diagonal(A1, -(A0.sum(axis=1) + A1.sum(axis=1) + A2.sum(axis=1)))
        return QbdChain(
            B00=B00,
            B01=B01,
            B10=B10,
            A0=A0,
            A1=A1,
            A2=A2,
            boundary_levels=tuple(s[1] for s in boundary),
            first_level=b,
        )

    # ── Busy periods seen by the next class down ──

    def occupancy_level(self, state: State) -> int:
        """``1 +`` radiologists-worth of higher work, counting queued images too."""
        h, n, _ = state
        return n + self.env.occupied(h) + 1

    def states_at_occupancy(self, level: int) -> list[State]:
        states = []
        for h in range(self.env.size):
            n = level - 1 - self.env.occupied(h)
            if n < 0:
                continue
            states.extend((h, n, t) for t in self.tags(n))
        return states

    @property
    def busy_repeat_level(self) -> int:
        return self.n_servers + 2 + (1 if self.typed else 0)

    def to_level_process(self) -> LevelProcess:
        """Level process of the busy periods this class forms with its environment.

        Level ``n_servers`` is the passage target: one radiologist is free
        again for the next class down. Levels from ``n_servers + 1`` up to
        ``busy_repeat_level`` carry transition blocks.
        """
        low, top = self.n_servers, self.busy_repeat_level
        levels = {lv: self.states_at_occupancy(lv) for lv in range(low - 1, top + 3)}
        for lv in range(low, top + 2):
            for s in levels[lv]:
                for target, _ in self.outgoing(s):
                    if abs(self.occupancy_level(target) - lv) > 1:
                        msg = f"transition {s} -> {target} skips an occupancy level"
                        raise ChainStructureError(msg)

        down, local, up = [], [], []
        for lv in range(low + 1, top + 1):
            down.append(self._block(levels[lv], levels[lv - 1]))
            local.append(self._block(levels[lv], levels[lv]))
            up.append(self._block(levels[lv], levels[lv + 1]))

        upper = levels[top + 1]
        if [s[0::2] for s in upper] != [s[0::2] for s in levels[top]]:
            msg = "occupancy levels do not share a phase layout above the repeat level"
            raise ChainStructureError(msg)
        checks = (
            ("down", down[-1], self._block(upper, levels[top])),
            ("local", local[-1], self._block(upper, upper)),
            ("up", up[-1], self._block(upper, levels[top + 2])),
        )
        for name, a, c in checks:
            if not np.allclose(a, c, rtol=0.0, atol=BLOCK_TOL):
                msg = f"{name} blocks do not repeat from occupancy level {top}"
                raise ChainStructureError(msg)

        labels = [levels[lv] for lv in range(low, top + 1)]
        return LevelProcess.from_rates(labels, down, local, up)

    def base_states(self) -> list[State]:
        """States in which at least one radiologist is free for lower classes."""
        return [s for lv in range(1, self.n_servers + 1) for s in self.states_at_occupancy(lv)]

    def busy_entries(self) -> list[tuple[State, State, float]]:
        """Transitions ``(base state, start state, rate)`` that start a busy period."""
        top = self.n_servers
        entries = []
        for s in self.states_at_occupancy(top):
            for target, rate in self.outgoing(s):
                if self.occupancy_level(target) == top + 1:
                    entries.append((s, target, rate))
        return entries


def busy_period_environment(chain: TrackedChain) -> tuple[Environment, list[BusyPeriod]]:
    """Environment of the next class down, with fitted busy periods.

    Base phases are the states of ``chain`` in which a radiologist is free.
    Every distinct start state of a busy period, paired with every end state
    it can reach, becomes one excursion.

    Returns:
        The environment and the busy periods it was built from.
    """
    base = chain.base_states()
    index = {s: i for i, s in enumerate(base)}
    rates = np.zeros((len(base), len(base)))
    for s in base:
        for target, rate in chain.outgoing(s):
            j = index.get(target)
            if j is not None and target != s:
                rates[index[s], j] += rate
    free = [chain.n_servers - (chain.occupancy_level(s) - 1) for s in base]
    labels = [_state_label(chain, s) for s in base]

    entries = chain.busy_entries()
    if not entries:
        env = Environment(
            rates=rates, free=tuple(free), n_servers=chain.n_servers, labels=tuple(labels)
        )
        return env, []

    by_start: dict[State, list[tuple[State, float]]] = defaultdict(list)
    for s, target, rate in entries:
        by_start[target].append((s, rate))
    level_order = chain.states_at_occupancy(chain.n_servers + 1)
    starts = [s for s in level_order if s in by_start]
    ends = chain.states_at_occupancy(chain.n_servers)

    periods = passage_analysis(chain.to_level_process(), starts, ends)
    excursions = []
    for period in periods:
        reachable = period.reachable_ends
        mass = sum(period.end_probs[e] for e in reachable)
        for end in reachable:
            prob = period.end_probs[end] / mass
            fit = period.fit(end)
            name = f"busy {_state_label(chain, period.start_state)}->{_state_label(chain, end)}"
            weighted = [(index[s], rate * prob) for s, rate in by_start[period.start_state]]
            rates, first = _embed(rates, free, labels, weighted, index[end], fit, name)
            excursions.append(
                Excursion(
                    start=period.start_state,
                    end=end,
                    probability=prob,
                    moments=period.moments[end],
                    fit=fit,
                    first_phase=first,
                )
            )
            logger.debug("%s: p=%.6f, %d phases", name, prob, fit.n_ec)

    env = Environment(
        rates=rates,
        free=tuple(free),
        n_servers=chain.n_servers,
        labels=tuple(labels),
        excursions=tuple(excursions),
    )
    return env, periods


def _state_label(chain: TrackedChain, state: State) -> str:
    h, n, tag = state
    text = f"{chain.env.labels[h]},n={n}"
    if chain.typed and tag != NO_TAG:
        text += f",type={tag}"
    return f"({text})"
