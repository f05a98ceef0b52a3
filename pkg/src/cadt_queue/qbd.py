"""Quasi-birth-death chains and their matrix-geometric solution.

A chain is described by a (possibly multi-level) boundary and three
repeating blocks. ``A0`` moves one level down, ``A1`` stays within a level
and ``A2`` moves one level up. Levels ``first_level, first_level + 1, ...``
all share the repeating blocks, so the stationary vector of level
``first_level + k`` is ``pi_1 R^k``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from cadt_queue.errors import (
    ChainStructureError,
    ConvergenceError,
    DegenerateBoundaryError,
    UnstableSystemError,
)

__all__ = [
    "QbdChain",
    "QueueWait",
    "StationarySolution",
    "is_stable",
    "level_probabilities",
    "mean_level",
    "solve_R",
    "solve_boundary",
    "truncated_generator",
    "waiting_time",
]

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-10
R_UPDATE_TOL = 1e-13
R_RESIDUAL_TOL = 1e-12
MAX_ITERATIONS = 1_000_000
NEGATIVE_WAIT_TOL = 1e-9


@dataclass(slots=True, frozen=True)
class QbdChain:
    """Block-tridiagonal generator of a level-independent QBD.

    Diagonal entries of ``B00`` and ``A1`` hold the negated total outflow of
    each state, so every assembled generator row sums to zero.

    Attributes:
        boundary_levels: Level (tracked-class count) of every boundary state.
        first_level: Count carried by the first repeating level.
    """

    B00: np.ndarray
    B01: np.ndarray
    B10: np.ndarray
    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    boundary_levels: tuple[int, ...] = (0,)
    first_level: int = 1

    def __post_init__(self) -> None:
        m, b = self.level_size, self.boundary_size
        expected = {
            "B00": (b, b),
            "B01": (b, m),
            "B10": (m, b),
            "A0": (m, m),
            "A1": (m, m),
            "A2": (m, m),
        }
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                msg = f"{name} has shape {actual}, expected {shape}"
                raise ValueError(msg)
        if len(self.boundary_levels) != b:
            msg = f"boundary_levels has {len(self.boundary_levels)} entries for {b} boundary states"
            raise ValueError(msg)

        for name in ("B01", "B10", "A0", "A2"):
            if np.any(getattr(self, name) < 0.0):
                msg = f"{name} has negative entries"
                raise ValueError(msg)
        for name in ("B00", "A1"):
            block = getattr(self, name)
            off = block - np.diag(np.diag(block))
            if np.any(off < 0.0):
                msg = f"{name} has negative off-diagonal entries"
                raise ValueError(msg)

        rows = {
            "boundary": self.B00.sum(axis=1) + self.B01.sum(axis=1),
            "first level": self.B10.sum(axis=1) + self.A1.sum(axis=1) + self.A2.sum(axis=1),
            "repeating": self.A0.sum(axis=1) + self.A1.sum(axis=1) + self.A2.sum(axis=1),
        }
        for where, sums in rows.items():
            worst = float(np.max(np.abs(sums))) if sums.size else 0.0
            if worst > ROW_SUM_TOL:
                msg = f"{where} generator rows do not sum to zero (max |sum| = {worst:.3e})"
                raise ValueError(msg)

    @property
    def level_size(self) -> int:
        return self.A1.shape[0]

    @property
    def boundary_size(self) -> int:
        return self.B00.shape[0]


@dataclass(slots=True)
class StationarySolution:
    """Stationary distribution of a QBD in matrix-geometric form."""

    chain: QbdChain
    boundary_probs: np.ndarray
    level1_probs: np.ndarray
    rate_matrix: np.ndarray
    spectral_radius: float

    @property
    def R(self) -> np.ndarray:
        return self.rate_matrix

    @property
    def total_probability(self) -> float:
        tail = _tail_inverse(self.rate_matrix)
        return float(self.boundary_probs.sum() + self.level1_probs @ tail @ np.ones(len(tail)))


@dataclass(slots=True)
class QueueWait:
    """Mean queueing delay of one class.

    ``empty`` marks a class with no arrivals; its wait is reported as 0.
    """

    minutes: float
    empty: bool = False


def _tail_inverse(R: np.ndarray) -> np.ndarray:
    return scipy.linalg.inv(np.eye(len(R)) - R)


def _stationary_of_generator(Q: np.ndarray) -> np.ndarray:
    """Stationary vector of a finite irreducible generator (one column replaced by ones)."""
    n = Q.shape[0]
    M = Q.copy()
    M[:, -1] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    return scipy.linalg.solve(M.T, rhs)


def is_stable(chain: QbdChain) -> bool:
    """Mean-drift test: expected upward rate below downward rate under the phase process."""
    if not np.any(chain.A2):
        return True
    A = chain.A0 + chain.A1 + chain.A2
    try:
        alpha = _stationary_of_generator(A)
    except np.linalg.LinAlgError:
        logger.debug("Phase generator is singular; falling back to the R spectral check")
        return True
    up = float(alpha @ chain.A2.sum(axis=1))
    down = float(alpha @ chain.A0.sum(axis=1))
    return up < down


def solve_R(chain: QbdChain) -> np.ndarray:
    """Minimal nonnegative solution of ``A2 + R A1 + R^2 A0 = 0``.

    Uses the natural fixed-point iteration ``R <- -(A2 + R^2 A0) A1^{-1}``
    started from zero.

    Raises:
        UnstableSystemError: Drift condition fails or ``sp(R) >= 1``.
        ConvergenceError: Iteration cap reached.
    """
    m = chain.level_size
    if not np.any(chain.A2):
        return np.zeros((m, m))
    if not is_stable(chain):
        msg = "QBD drift condition fails: upward rate is not below downward rate"
        raise UnstableSystemError(msg)

    a1_inv = scipy.linalg.inv(chain.A1)
    R = np.zeros((m, m))
    update = np.inf
    iterations = 0
    while iterations < MAX_ITERATIONS:
        iterations += 1
        nxt = -(chain.A2 + R @ R @ chain.A0) @ a1_inv
        update = float(np.max(np.abs(nxt - R)))
        R = nxt
        if update < R_UPDATE_TOL:
            residual = _residual(chain, R)
            if residual < R_RESIDUAL_TOL:
                break
    else:
        msg = "R iteration did not converge; chain is unstable or ill-conditioned"
        raise ConvergenceError(msg, residual=_residual(chain, R), iterations=iterations)

    radius = float(np.max(np.abs(np.linalg.eigvals(R))))
    if radius >= 1.0:
        msg = f"spectral radius of R is {radius:.6f} >= 1"
        raise UnstableSystemError(msg)
    logger.debug("R converged after %d iterations (sp(R)=%.6f)", iterations, radius)
    return np.maximum(R, 0.0)


def _residual(chain: QbdChain, R: np.ndarray) -> float:
    return float(np.max(np.abs(chain.A2 + R @ chain.A1 + R @ R @ chain.A0)))


def solve_boundary(chain: QbdChain, R: np.ndarray) -> StationarySolution:
    """Solve the boundary balance equations and normalise with the geometric tail.

    Unknowns are the boundary vector ``pi_0`` and the first repeating level
    ``pi_1``; one balance equation is replaced by the normalisation
    ``pi_0 1 + pi_1 (I - R)^{-1} 1 = 1``.

    Raises:
        DegenerateBoundaryError: The boundary system is singular.
    """
    b, m = chain.boundary_size, chain.level_size
    M = np.block([[chain.B00, chain.B01], [chain.B10, chain.A1 + R @ chain.A0]])
    norm = np.concatenate([np.ones(b), _tail_inverse(R) @ np.ones(m)])
    M[:, 0] = norm
    rhs = np.zeros(b + m)
    rhs[0] = 1.0
    try:
        x = scipy.linalg.solve(M.T, rhs)
    except np.linalg.LinAlgError as exc:
        msg = f"boundary system is singular: {exc}"
        raise DegenerateBoundaryError(msg) from exc
    if not np.all(np.isfinite(x)):
        msg = "boundary system produced non-finite probabilities"
        raise DegenerateBoundaryError(msg)

    # Round-off can leave tiny negatives on transient states.
    x = np.where(np.abs(x) < 1e-15, 0.0, x)
    radius = float(np.max(np.abs(np.linalg.eigvals(R)))) if m else 0.0
    return StationarySolution(
        chain=chain,
        boundary_probs=x[:b],
        level1_probs=x[b:],
        rate_matrix=R,
        spectral_radius=radius,
    )


def mean_level(sol: StationarySolution) -> float:
    """Expected tracked-class count ``sum_n n P(level = n)`` in closed form."""
    chain, R = sol.chain, sol.rate_matrix
    ones = np.ones(chain.level_size)
    inv = _tail_inverse(R)
    boundary = float(np.dot(sol.boundary_probs, np.asarray(chain.boundary_levels, dtype=float)))
    at_first = chain.first_level * float(sol.level1_probs @ inv @ ones)
    beyond = float(sol.level1_probs @ R @ inv @ inv @ ones)
    return boundary + at_first + beyond


def level_probabilities(sol: StationarySolution, max_level: int) -> np.ndarray:
    """Probabilities of tracked-class counts ``0..max_level``."""
    chain = sol.chain
    probs = np.zeros(max_level + 1)
    for level, p in zip(chain.boundary_levels, sol.boundary_probs, strict=True):
        if level <= max_level:
            probs[level] += p
    vec = sol.level1_probs.copy()
    for level in range(chain.first_level, max_level + 1):
        probs[level] += vec.sum()
        vec = vec @ sol.rate_matrix
    return probs


def truncated_generator(chain: QbdChain, levels: int) -> np.ndarray:
    """Dense generator of the chain cut after ``levels`` repeating levels.

    The top level loses its up-block and its diagonal is adjusted so rows
    still sum to zero. Used as a brute-force check of the matrix-geometric
    solution.
    """
    if levels < 1:
        msg = f"levels must be >= 1, got {levels}"
        raise ValueError(msg)
    b, m = chain.boundary_size, chain.level_size
    n = b + levels * m
    Q = np.zeros((n, n))
    Q[:b, :b] = chain.B00
    Q[:b, b : b + m] = chain.B01
    Q[b : b + m, :b] = chain.B10
    for k in range(levels):
        lo = b + k * m
        Q[lo : lo + m, lo : lo + m] = chain.A1
        if k > 0:
            Q[lo : lo + m, lo - m : lo] = chain.A0
        if k < levels - 1:
            Q[lo : lo + m, lo + m : lo + 2 * m] = chain.A2
    top = b + (levels - 1) * m
    Q[top:, top:] += np.diag(chain.A2.sum(axis=1))
    return Q


def waiting_time(mean_count: float, arrival_rate: float, service_rate: float) -> QueueWait:
    """Mean queueing delay by Little's law, ``L / lambda - 1 / mu``.

    A class without arrivals has wait 0 and ``empty=True``. Results within
    1e-9 minutes below zero are clamped to 0.

    Raises:
        ChainStructureError: The formula gives a clearly negative wait.
    """
    if arrival_rate <= 0.0:
        return QueueWait(0.0, empty=True)
    wait = mean_count / arrival_rate - 1.0 / service_rate
    if wait < 0.0:
        if wait < -NEGATIVE_WAIT_TOL:
            msg = f"negative waiting time {wait:.3e} min (L={mean_count}, lambda={arrival_rate})"
            raise ChainStructureError(msg)
        wait = 0.0
    return QueueWait(wait)
