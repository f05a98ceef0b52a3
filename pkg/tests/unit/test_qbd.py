"""Unit tests for the matrix-geometric QBD solver."""

from __future__ import annotations

import numpy as np
import pytest

from cadt_queue.errors import ChainStructureError, NumericalError, UnstableSystemError
from cadt_queue.qbd import (
    QbdChain,
    is_stable,
    level_probabilities,
    mean_level,
    solve_boundary,
    solve_R,
    truncated_generator,
    waiting_time,
)

from ..oracles import brute_force_mean_level, erlang_c_wait


def mm1_chain(lam: float, mu: float) -> QbdChain:
    return QbdChain(
        B00=np.array([[-lam]]),
        B01=np.array([[lam]]),
        B10=np.array([[mu]]),
        A0=np.array([[mu]]),
        A1=np.array([[-(lam + mu)]]),
        A2=np.array([[lam]]),
    )


def mm2_chain(lam: float, mu: float) -> QbdChain:
    return QbdChain(
        B00=np.array([[-lam, lam], [mu, -(lam + mu)]]),
        B01=np.array([[0.0], [lam]]),
        B10=np.array([[0.0, 2.0 * mu]]),
        A0=np.array([[2.0 * mu]]),
        A1=np.array([[-(lam + 2.0 * mu)]]),
        A2=np.array([[lam]]),
        boundary_levels=(0, 1),
        first_level=2,
    )


class TestChainValidation:
    """Test QbdChain construction checks."""

    def test_valid_chain(self):
        chain = mm1_chain(0.08, 0.1)
        assert chain.level_size == 1
        assert chain.boundary_size == 1

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="A2 has shape"):
            QbdChain(
                B00=np.array([[-1.0]]),
                B01=np.array([[1.0]]),
                B10=np.array([[1.0]]),
                A0=np.array([[1.0]]),
                A1=np.array([[-2.0]]),
                A2=np.zeros((2, 2)),
            )

    def test_negative_rate(self):
        with pytest.raises(ValueError, match="negative"):
            QbdChain(
                B00=np.array([[1.0]]),
                B01=np.array([[-1.0]]),
                B10=np.array([[1.0]]),
                A0=np.array([[1.0]]),
                A1=np.array([[-2.0]]),
                A2=np.array([[1.0]]),
            )

    def test_rows_must_sum_to_zero(self):
        with pytest.raises(ValueError, match="do not sum to zero"):
            QbdChain(
                B00=np.array([[-1.0]]),
                B01=np.array([[1.0]]),
                B10=np.array([[1.0]]),
                A0=np.array([[1.0]]),
                A1=np.array([[-1.5]]),
                A2=np.array([[1.0]]),
            )

    def test_boundary_levels_length(self):
        with pytest.raises(ValueError, match="boundary_levels"):
            QbdChain(
                B00=np.array([[-1.0]]),
                B01=np.array([[1.0]]),
                B10=np.array([[1.0]]),
                A0=np.array([[1.0]]),
                A1=np.array([[-2.0]]),
                A2=np.array([[1.0]]),
                boundary_levels=(0, 1),
            )


class TestMM1:
    """Test the solver against the M/M/1 queue."""

    def test_rate_matrix_is_rho(self):
        R = solve_R(mm1_chain(0.08, 0.1))
        assert R[0, 0] == pytest.approx(0.8, abs=1e-12)

    def test_mean_level_and_wait(self):
        chain = mm1_chain(0.08, 0.1)
        sol = solve_boundary(chain, solve_R(chain))
        assert sol.total_probability == pytest.approx(1.0, abs=1e-12)
        assert mean_level(sol) == pytest.approx(4.0, abs=1e-9)
        wait = waiting_time(mean_level(sol), 0.08, 0.1)
        assert wait.minutes == pytest.approx(40.0, abs=1e-9)

    def test_level_probabilities_are_geometric(self):
        chain = mm1_chain(0.05, 0.1)
        sol = solve_boundary(chain, solve_R(chain))
        probs = level_probabilities(sol, 6)
        expected = 0.5 * 0.5 ** np.arange(7)
        np.testing.assert_allclose(probs, expected, atol=1e-12)

    def test_unstable_chain(self):
        chain = mm1_chain(0.1, 0.1)
        assert not is_stable(chain)
        with pytest.raises(UnstableSystemError):
            solve_R(chain)


class TestMultiLevelBoundary:
    """Test a boundary spanning more than one level."""

    def test_mm2_matches_erlang_c(self):
        lam, mu = 0.16, 0.1
        chain = mm2_chain(lam, mu)
        sol = solve_boundary(chain, solve_R(chain))
        wait = waiting_time(mean_level(sol), lam, mu)
        assert wait.minutes == pytest.approx(erlang_c_wait(lam, mu, 2), rel=1e-9)

    def test_level_probabilities_sum_to_one(self):
        chain = mm2_chain(0.1, 0.1)
        sol = solve_boundary(chain, solve_R(chain))
        assert level_probabilities(sol, 200).sum() == pytest.approx(1.0, abs=1e-10)


class TestTruncatedGenerator:
    """Test the dense truncation used for brute-force checks."""

    def test_rows_sum_to_zero(self):
        Q = truncated_generator(mm2_chain(0.1, 0.1), 5)
        assert Q.shape == (7, 7)
        np.testing.assert_allclose(Q.sum(axis=1), 0.0, atol=1e-14)

    def test_brute_force_agrees(self):
        chain = mm1_chain(0.06, 0.1)
        sol = solve_boundary(chain, solve_R(chain))
        mean, tail = brute_force_mean_level(chain, 80)
        assert tail < 1e-12
        assert mean == pytest.approx(mean_level(sol), abs=1e-9)

    def test_levels_must_be_positive(self):
        with pytest.raises(ValueError):
            truncated_generator(mm1_chain(0.06, 0.1), 0)


class TestWaitingTime:
    """Test Little's-law conversion."""

    def test_empty_class(self):
        wait = waiting_time(0.0, 0.0, 0.1)
        assert wait.empty
        assert wait.minutes == 0.0

    def test_round_off_clamped(self):
        assert waiting_time(0.5 - 1e-12, 0.05, 0.1).minutes == 0.0

    def test_clearly_negative_raises(self):
        with pytest.raises(ChainStructureError, match="negative waiting time"):
            waiting_time(0.1, 0.05, 0.1)

    def test_negative_wait_is_a_numerical_error(self):
        with pytest.raises(NumericalError):
            waiting_time(0.0, 0.05, 0.1)
