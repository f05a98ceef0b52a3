"""Busy-period passage analysis and Erlang-Coxian moment matching.

Higher-priority work is summarised by the busy periods it causes. This
module computes, for a level process, the probability of ending a
level-down passage in each end state together with the first three
conditional moments of its duration, and fits an Erlang-Coxian
phase-type distribution to each moment triple so the busy period can be
replaced by a few exponential phases.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Hashable, Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from cadt_queue.errors import (
    AbsorbingStructureError,
    ConvergenceError,
    MomentInfeasibleError,
    UnstableSystemError,
)

__all__ = [
    "BusyPeriod",
    "EcFit",
    "LevelProcess",
    "coxian_moments",
    "fit_ec",
    "mm1_busy_period_moments",
    "passage_analysis",
]

logger = logging.getLogger(__name__)

Moments = tuple[float, float, float]

ROW_SUM_TOL = 1e-12
G_UPDATE_TOL = 1e-13
MAX_ITERATIONS = 1_000_000
MASS_TOL = 1e-10
PROB_TOL = 1e-12
EXPONENTIAL_TOL = 1e-9
EDGE_TOL = 1e-9


# ── Level processes ──


@dataclass(slots=True, frozen=True)
class LevelProcess:
    """Embedded jump chain of a process organised in levels.

    Level index 0 is the target level of a passage and only carries labels.
    Levels ``1..repeat_level`` carry probability blocks: ``down[i - 1]``
    moves from level ``i`` to ``i - 1``, ``local[i - 1]`` stays on level
    ``i`` and ``up[i - 1]`` moves to ``i + 1``. Every level above
    ``repeat_level`` repeats the blocks of ``repeat_level``.

    Attributes:
        labels: State labels of levels ``0..repeat_level``.
        outflow: Total leaving rate of every state of levels ``1..repeat_level``.
    """

    labels: tuple[tuple[Hashable, ...], ...]
    down: tuple[np.ndarray, ...]
    local: tuple[np.ndarray, ...]
    up: tuple[np.ndarray, ...]
    outflow: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        k = len(self.down)
        if k < 1:
            msg = "a level process needs at least one level above its target"
            raise ValueError(msg)
        if not (len(self.local) == len(self.up) == len(self.outflow) == k):
            msg = "down, local, up and outflow must list the same number of levels"
            raise ValueError(msg)
        if len(self.labels) != k + 1:
            msg = f"expected labels for {k + 1} levels, got {len(self.labels)}"
            raise ValueError(msg)

        sizes = [len(level) for level in self.labels]
        for i in range(1, k + 1):
            above = sizes[i + 1] if i < k else sizes[k]
            shapes = {
                "down": (self.down[i - 1].shape, (sizes[i], sizes[i - 1])),
                "local": (self.local[i - 1].shape, (sizes[i], sizes[i])),
                "up": (self.up[i - 1].shape, (sizes[i], above)),
            }
            for name, (actual, expected) in shapes.items():
                if actual != expected:
                    msg = f"{name} block of level {i} has shape {actual}, expected {expected}"
                    raise ValueError(msg)
            sums = (
                self.down[i - 1].sum(axis=1)
                + self.local[i - 1].sum(axis=1)
                + self.up[i - 1].sum(axis=1)
            )
            worst = float(np.max(np.abs(sums - 1.0)))
            if worst > ROW_SUM_TOL:
                msg = f"transition probabilities of level {i} do not sum to 1 (off by {worst:.3e})"
                raise ValueError(msg)
        if sizes[k - 1] != sizes[k]:
            msg = "the level below the repeating level must have the repeating level's size"
            raise ValueError(msg)

    @property
    def repeat_level(self) -> int:
        return len(self.down)

    @classmethod
    def from_rates(
        cls,
        labels: Sequence[Sequence[Hashable]],
        down: Sequence[np.ndarray],
        local: Sequence[np.ndarray],
        up: Sequence[np.ndarray],
    ) -> LevelProcess:
        """Build the embedded chain from transition-rate blocks.

        Diagonals of the local blocks are ignored; the total leaving rate of
        each state becomes its ``outflow``.
        """
        p_down, p_local, p_up, outflow = [], [], [], []
        for i, (d, loc, u) in enumerate(zip(down, local, up, strict=True), start=1):
            loc = np.array(loc, dtype=float)
            np.fill_diagonal(loc, 0.0)
            gamma = d.sum(axis=1) + loc.sum(axis=1) + u.sum(axis=1)
            if np.any(gamma <= 0.0):
                msg = f"level {i} has a state with no outgoing transitions"
                raise AbsorbingStructureError(msg)
            p_down.append(d / gamma[:, None])
            p_local.append(loc / gamma[:, None])
            p_up.append(u / gamma[:, None])
            outflow.append(gamma)
        return cls(
            labels=tuple(tuple(level) for level in labels),
            down=tuple(p_down),
            local=tuple(p_local),
            up=tuple(p_up),
            outflow=tuple(outflow),
        )


@dataclass(slots=True)
class BusyPeriod:
    """One family of busy periods sharing a start state.

    ``end_probs`` maps every requested end state to the probability that the
    passage ends there. ``moments`` holds the conditional ``(m1, m2, m3)`` for
    each end state with positive probability.
    """

    start_state: Hashable
    end_probs: dict[Hashable, float]
    moments: dict[Hashable, Moments] = field(default_factory=dict)

    @property
    def reachable_ends(self) -> list[Hashable]:
        return [end for end in self.end_probs if end in self.moments]

    def fit(self, end: Hashable) -> EcFit:
        """Erlang-Coxian fit of the busy period that ends in ``end``."""
        if end not in self.moments:
            msg = f"busy period from {self.start_state!r} never ends in {end!r}"
            raise AbsorbingStructureError(msg)
        return fit_ec(*self.moments[end])


def _solve_g(down: np.ndarray, local: np.ndarray, up: np.ndarray) -> np.ndarray:
    """Minimal solution of ``G = B + L G + F G G`` for the repeating levels."""
    n = local.shape[0]
    eye = np.eye(n)
    G = np.zeros_like(down)
    update = np.inf
    for iteration in range(1, MAX_ITERATIONS + 1):
        nxt = scipy.linalg.solve(eye - local - up @ G, down)
        update = float(np.max(np.abs(nxt - G)))
        G = nxt
        if update < G_UPDATE_TOL:
            logger.debug("G converged after %d iterations", iteration)
            return G
    residual = float(np.max(np.abs(down + local @ G + up @ G @ G - G)))
    msg = "G iteration for the repeating levels did not converge"
    raise ConvergenceError(msg, residual=residual, iterations=MAX_ITERATIONS)


def _sojourn(gamma: np.ndarray, m: int) -> np.ndarray:
    """Diagonal of ``E[tau^m]`` for exponential sojourns with rates ``gamma``."""
    return math.factorial(m) / gamma**m


def passage_analysis(
    lp: LevelProcess,
    starts: Sequence[Hashable],
    ends: Sequence[Hashable],
) -> list[BusyPeriod]:
    """First passage from level 1 down to level 0.

    Folds the repeating levels with the fixed-point G recursion, then walks
    down the non-repeating levels. Moments of order ``r`` follow from
    conditioning on the first sojourn and jump:
    ``G^(r) = sum_m C(r,m) D_m [delta B + L G^(r-m) + F H^(r-m)]`` where
    ``H`` convolves the passage up one level with the passage back.

    Args:
        lp: Level process.
        starts: Labels of level-1 states that begin a busy period.
        ends: Labels of level-0 states at which a busy period may end.

    Returns:
        One BusyPeriod per start label, in the order given.

    Raises:
        AbsorbingStructureError: A start state is unknown, or its passage
            does not end in ``ends`` with probability one.
        ConvergenceError: The repeating-level iteration does not converge.
    """
    K = lp.repeat_level
    G: dict[int, list[np.ndarray]] = {}

    down, local, up = lp.down[K - 1], lp.local[K - 1], lp.up[K - 1]
    g0 = _solve_g(down, local, up)
    G[K] = [g0]
    n = local.shape[0]
    eye = np.eye(n)
    fg = up @ g0
    kron = np.eye(n * n) - np.kron(eye, local) - np.kron(eye, fg) - np.kron(g0.T, up)
    gamma = lp.outflow[K - 1]
    for r in range(1, 4):
        rhs = _moment_rhs(r, down, local, up, gamma, G[K], G[K], include_top=False)
        x = scipy.linalg.solve(kron, rhs.flatten(order="F"))
        G[K].append(x.reshape((n, n), order="F"))

    for level in range(K - 1, 0, -1):
        down, local, up = lp.down[level - 1], lp.local[level - 1], lp.up[level - 1]
        gamma = lp.outflow[level - 1]
        above = G[level + 1]
        lhs = np.eye(local.shape[0]) - local - up @ above[0]
        G[level] = [scipy.linalg.solve(lhs, down)]
        for r in range(1, 4):
            rhs = _moment_rhs(r, down, local, up, gamma, G[level], above, include_top=True)
            G[level].append(scipy.linalg.solve(lhs, rhs))

    g1 = G[1]
    start_index = {label: i for i, label in enumerate(lp.labels[1])}
    end_index = {label: j for j, label in enumerate(lp.labels[0])}
    missing = [e for e in ends if e not in end_index]
    if missing:
        msg = f"unknown end states {missing!r}"
        raise AbsorbingStructureError(msg)

    periods = []
    for start in starts:
        if start not in start_index:
            msg = f"unknown start state {start!r}"
            raise AbsorbingStructureError(msg)
        i = start_index[start]
        probs = {end: float(g1[0][i, end_index[end]]) for end in ends}
        mass = sum(probs.values())
        if mass < 1.0 - MASS_TOL:
            msg = f"passage from {start!r} reaches the end states with probability {mass:.12f}"
            raise AbsorbingStructureError(msg)
        moments: dict[Hashable, Moments] = {}
        for end, p in probs.items():
            if p > PROB_TOL:
                j = end_index[end]
                moments[end] = (
                    float(g1[1][i, j] / p),
                    float(g1[2][i, j] / p),
                    float(g1[3][i, j] / p),
                )
        periods.append(BusyPeriod(start_state=start, end_probs=probs, moments=moments))
    return periods


def _moment_rhs(
    r: int,
    down: np.ndarray,
    local: np.ndarray,
    up: np.ndarray,
    gamma: np.ndarray,
    here: list[np.ndarray],
    above: list[np.ndarray],
    *,
    include_top: bool,
) -> np.ndarray:
    """Known part of the order-``r`` moment equation of one level.

    ``here`` holds ``G^(0..r-1)`` of the level, ``above`` holds the moments
    of the level above. With ``include_top=False`` the level repeats and the
    ``G^(r)_{above} G`` term stays on the left-hand side.
    """

    def convolved(q: int) -> np.ndarray:
        return sum(math.comb(q, a) * above[a] @ here[q - a] for a in range(q + 1))

    top = r if include_top else r - 1
    rhs = up @ sum(
        (math.comb(r, a) * above[a] @ here[r - a] for a in range(1, top + 1)),
        np.zeros((up.shape[1], here[0].shape[1])),
    )
    for m in range(1, r + 1):
        q = r - m
        term = local @ here[q] + up @ convolved(q)
        if q == 0:
            term = term + down
        rhs = rhs + math.comb(r, m) * _sojourn(gamma, m)[:, None] * term
    return rhs


def mm1_busy_period_moments(arrival_rate: float, service_rate: float, servers: int = 1) -> Moments:
    """First three moments of a busy period of a top-priority M/M/n class.

    While all ``servers`` are busy the class drains at ``servers * mu``, so
    the period is an M/M/1 busy period with that service rate.

    Raises:
        UnstableSystemError: ``lambda >= servers * mu``.
    """
    b = servers * service_rate
    rho = arrival_rate / b
    if rho >= 1.0:
        msg = f"top class is unstable (lambda={arrival_rate}, capacity={b})"
        raise UnstableSystemError(msg)
    gap = 1.0 - rho
    return (
        1.0 / (b * gap),
        2.0 / (b**2 * gap**3),
        6.0 * (1.0 + rho) / (b**3 * gap**5),
    )


# ── Erlang-Coxian fitting ──


@dataclass(slots=True, frozen=True)
class EcFit:
    """Erlang-Coxian distribution matched to three moments.

    With probability ``1 - p_ec`` the duration is zero. Otherwise it is
    ``n_ec - 2`` Erlang phases of rate ``lambda_y`` followed by a two-phase
    Coxian: phase X1 at ``lambda_x1``, then with probability ``p_x`` phase X2
    at ``lambda_x2``. A plain two-phase Coxian has ``p_ec = 1``,
    ``n_ec = 2`` and ``lambda_y = 0``.
    """

    p_ec: float
    n_ec: int
    lambda_y: float
    p_x: float
    lambda_x1: float
    lambda_x2: float

    def __post_init__(self) -> None:
        for name in ("p_ec", "p_x"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                msg = f"{name} must be a probability, got {value!r}"
                raise ValueError(msg)
        if self.n_ec < 2:
            msg = f"n_ec must be >= 2, got {self.n_ec}"
            raise ValueError(msg)
        if self.lambda_x1 <= 0.0 or self.lambda_x2 <= 0.0:
            msg = "Coxian rates must be positive"
            raise ValueError(msg)
        if self.erlang_phases > 0 and self.lambda_y <= 0.0:
            msg = "Erlang phases need a positive rate"
            raise ValueError(msg)

    @property
    def erlang_phases(self) -> int:
        return self.n_ec - 2

    @property
    def t_params(self) -> dict[str, float]:
        """Exponential rates of the fitted phases, keyed ``t0, t01, t1, t12, t2``."""
        return {
            "t0": (1.0 - self.p_ec) * self.lambda_y,
            "t01": self.p_ec * self.lambda_y,
            "t1": (1.0 - self.p_x) * self.lambda_x1,
            "t12": self.p_x * self.lambda_x1,
            "t2": self.lambda_x2,
        }

    def phase_type(self) -> tuple[np.ndarray, np.ndarray]:
        """Initial vector and sub-generator ``(alpha, S)``; ``alpha`` sums to ``p_ec``."""
        k, n = self.erlang_phases, self.n_ec
        S = np.zeros((n, n))
        for i in range(k):
            S[i, i] = -self.lambda_y
            S[i, i + 1] = self.lambda_y
        S[k, k] = -self.lambda_x1
        S[k, k + 1] = self.p_x * self.lambda_x1
        S[k + 1, k + 1] = -self.lambda_x2
        alpha = np.zeros(n)
        alpha[0] = self.p_ec
        return alpha, S

    def moments(self) -> Moments:
        return coxian_moments(self)


def _coxian2_moments(lambda1: float, lambda2: float, p: float) -> Moments:
    a, c = 1.0 / lambda1, 1.0 / lambda2
    return (
        a + p * c,
        2.0 * (a**2 + p * a * c + p * c**2),
        6.0 * (a**3 + p * a**2 * c + p * a * c**2 + p * c**3),
    )


def _erlang_moments(k: int, rate: float) -> Moments:
    if k == 0:
        return 0.0, 0.0, 0.0
    y = 1.0 / rate
    return k * y, k * (k + 1) * y**2, k * (k + 1) * (k + 2) * y**3


def coxian_moments(fit: EcFit) -> Moments:
    """Closed-form first three moments of an EcFit."""
    x1, x2, x3 = _coxian2_moments(fit.lambda_x1, fit.lambda_x2, fit.p_x)
    y1, y2, y3 = _erlang_moments(fit.erlang_phases, fit.lambda_y)
    w1 = y1 + x1
    w2 = y2 + 2.0 * y1 * x1 + x2
    w3 = y3 + 3.0 * y2 * x1 + 3.0 * y1 * x2 + x3
    return fit.p_ec * w1, fit.p_ec * w2, fit.p_ec * w3


def _near(a: float, b: float) -> bool:
    return abs(a - b) <= EXPONENTIAL_TOL * max(1.0, abs(b))


def _fit_coxian2(
    m1: float, n2: float, n3: float, moments: Sequence[float]
) -> tuple[float, float, float]:
    """Rates and branching probability ``(lambda1, lambda2, p)`` of a two-phase Coxian.

    With ``x = 1 / (lambda1 m1)`` the normalised moments reduce to
    ``(6 - 12/n2) x^2 + (6 - 2 n3) x + (2 n3 - 3 n2) = 0``.
    """
    if _near(n2, 2.0) and _near(n3, 3.0):
        return 1.0 / m1, 1.0 / m1, 0.0
    a = 6.0 - 12.0 / n2
    b = 6.0 - 2.0 * n3
    c = 2.0 * n3 - 3.0 * n2
    roots: list[float] = []
    if abs(a) < 1e-14:
        if b != 0.0:
            roots.append(-c / b)
    else:
        disc = b * b - 4.0 * a * c
        if disc >= 0.0:
            sq = math.sqrt(disc)
            q = -0.5 * (b + math.copysign(sq, b))
            if q != 0.0:
                roots.extend([q / a, c / q])
            else:
                roots.append(0.0)

    best: tuple[float, float, float] | None = None
    for x in roots:
        if not 0.0 < x < 1.0:
            continue
        y = (0.5 * n2 - x) / (1.0 - x)
        if y <= 0.0:
            continue
        p = (1.0 - x) / y
        if not 0.0 <= p <= 1.0:
            continue
        candidate = (1.0 / (m1 * x), 1.0 / (m1 * y), p)
        if best is None or candidate[0] < best[0]:
            best = candidate
    if best is None:
        msg = "no two-phase Coxian matches the normalised moments"
        raise MomentInfeasibleError(msg, moments=moments)
    return best


def fit_ec(m1: float, m2: float, m3: float) -> EcFit:
    """Match an Erlang-Coxian distribution to three moments.

    A plain two-phase Coxian is used when the normalised moments allow it
    (``n2 > 2`` and ``n3 > 1.5 n2``, or the exponential point). Otherwise
    the fewest Erlang phases are prepended, and a probability mass at zero
    is added when the third moment is too small for any Erlang padding.

    Args:
        m1: Mean.
        m2: Second raw moment.
        m3: Third raw moment.

    Returns:
        EcFit reproducing all three moments.

    Raises:
        MomentInfeasibleError: The triple violates ``m1 > 0``,
            ``m2 > m1^2`` or ``m3 m1 > m2^2``.

    Example:
        fit = fit_ec(10.0, 200.0, 6000.0)   # exponential, rate 0.1
        fit.n_ec  # 2
    """
    moments = (m1, m2, m3)
    if not all(math.isfinite(m) for m in moments) or m1 <= 0.0:
        msg = "mean must be positive and finite"
        raise MomentInfeasibleError(msg, moments=moments)
    n2 = m2 / m1**2
    n3 = m3 / (m1 * m2) if m2 > 0.0 else 0.0
    if not (n2 > 1.0 and n3 > n2):
        msg = "normalised moments must satisfy n3 > n2 > 1"
        raise MomentInfeasibleError(msg, moments=moments)

    if (_near(n2, 2.0) and _near(n3, 3.0)) or (n2 > 2.0 and n3 > 1.5 * n2):
        lambda1, lambda2, p_x = _fit_coxian2(m1, n2, n3, moments)
        return EcFit(p_ec=1.0, n_ec=2, lambda_y=0.0, p_x=p_x, lambda_x1=lambda1, lambda_x2=lambda2)

    p = 1.0 if n3 >= 2.0 * n2 - 1.0 else 1.0 / (2.0 * n2 - n3)
    w2, w3 = p * n2, p * n3

    ratio = 1.0 / (w2 - 1.0)
    k = math.floor(ratio)
    if k >= 1 and ratio - k < EDGE_TOL:
        k -= 1
    d = (w2 - 1.0) / (1.0 - k * (w2 - 1.0))
    s = k * d + 1.0
    # Normalised moments of the Coxian tail, from cumulants in units of its mean.
    nx2 = 1.0 + d
    kappa3 = s**3 * (w3 * w2 - 3.0 * w2 + 2.0) - 2.0 * k * d**3
    nx3 = (kappa3 + 3.0 * nx2 - 2.0) / nx2
    x1 = m1 / (p * s)
    if not ((_near(nx2, 2.0) and _near(nx3, 3.0)) or (nx2 > 2.0 and nx3 > 1.5 * nx2)):
        msg = "moments lie on an Erlang-Coxian fitting boundary"
        raise MomentInfeasibleError(msg, moments=moments)
    lambda1, lambda2, p_x = _fit_coxian2(x1, nx2, nx3, moments)

    fit = EcFit(
        p_ec=p,
        n_ec=k + 2,
        lambda_y=1.0 / (x1 * d) if k > 0 else 0.0,
        p_x=p_x,
        lambda_x1=lambda1,
        lambda_x2=lambda2,
    )
    logger.debug("Erlang-Coxian fit with %d phases (p_ec=%.6f)", fit.n_ec, fit.p_ec)
    return fit
