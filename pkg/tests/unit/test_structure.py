"""Unit tests for environments and tracked-class chains."""

from __future__ import annotations

import numpy as np
import pytest

from cadt_queue.models.structure import (
    Environment,
    TrackedChain,
    busy_period_environment,
    idle_environment,
    single_class_environment,
)
from cadt_queue.qbd import mean_level, solve_boundary, solve_R
from cadt_queue.rdr import fit_ec, mm1_busy_period_moments

from ..oracles import erlang_c_wait, mm1_wait


def _wait(chain: TrackedChain) -> float:
    qbd = chain.to_qbd()
    sol = solve_boundary(qbd, solve_R(qbd))
    return mean_level(sol) / chain.arrival_rate - 1.0 / chain.mean_service_rate


class TestEnvironment:
    """Test environment construction."""

    def test_idle(self):
        env = idle_environment(2)
        assert env.size == 1
        assert env.free == (2,)
        assert env.occupied(0) == 0

    def test_rates_shape_checked(self):
        with pytest.raises(ValueError, match="rates has shape"):
            Environment(rates=np.zeros((2, 2)), free=(1,), n_servers=1, labels=("a",))

    def test_free_servers_bounded(self):
        with pytest.raises(ValueError, match="free servers"):
            Environment(rates=np.zeros((1, 1)), free=(3,), n_servers=2, labels=("a",))

    def test_single_class_one_server(self):
        env = single_class_environment(0.04, 0.2, 1)
        (excursion,) = env.excursions
        assert env.size == 1 + excursion.fit.n_ec
        assert env.free[0] == 1
        assert all(env.free[p] == 0 for p in excursion.phases)

    def test_single_class_two_servers(self):
        env = single_class_environment(0.04, 0.2, 2)
        assert env.free[:2] == (2, 1)
        assert env.excursions[0].end == "top=1"

    def test_zero_arrivals_is_idle(self):
        assert single_class_environment(0.0, 0.2, 1).size == 1


class TestTrackedChain:
    """Test tracked-class QBDs."""

    def test_mm1_on_idle_environment(self):
        chain = TrackedChain(idle_environment(1), 0.08, [(1.0, 0.1)])
        assert _wait(chain) == pytest.approx(mm1_wait(0.08, 0.1), abs=1e-9)

    def test_mm2_on_idle_environment(self):
        chain = TrackedChain(idle_environment(2), 0.16, [(1.0, 0.1)])
        assert chain.first_repeating_level == 2
        assert _wait(chain) == pytest.approx(erlang_c_wait(0.16, 0.1, 2), rel=1e-9)

    def test_typed_service_is_mg1(self):
        types = [(0.1, 0.1), (0.9, 1.0 / 15.0)]
        chain = TrackedChain(idle_environment(1), 0.05, types)
        mean = 0.1 * 10.0 + 0.9 * 15.0
        second = 2.0 * (0.1 * 100.0 + 0.9 * 225.0)
        rho = 0.05 * mean
        assert _wait(chain) == pytest.approx(0.05 * second / (2.0 * (1.0 - rho)), rel=1e-9)

    def test_typed_needs_one_server(self):
        with pytest.raises(ValueError, match="one radiologist"):
            TrackedChain(idle_environment(2), 0.1, [(0.5, 0.1), (0.5, 0.2)])

    def test_probabilities_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to"):
            TrackedChain(idle_environment(1), 0.1, [(0.5, 0.1)])

    def test_occupancy_levels(self):
        env = single_class_environment(0.04, 0.2, 1)
        chain = TrackedChain(env, 0.02, [(1.0, 0.1)])
        assert chain.occupancy_level((0, 0, -1)) == 1
        assert chain.occupancy_level((1, 0, -1)) == 2
        assert chain.occupancy_level((0, 2, 0)) == 3

    def test_negative_class_blocks_written_out(self):
        lam_p, mu_p, lam_m, mu_m = 0.03, 0.1, 0.05, 0.1
        fit = fit_ec(*mm1_busy_period_moments(lam_p, mu_p))
        assert fit.n_ec == 2
        l1, l2, p = fit.lambda_x1, fit.lambda_x2, fit.p_x
        qbd = TrackedChain(single_class_environment(lam_p, mu_p, 1), lam_m, [(1.0, mu_m)]).to_qbd()

        # phases: radiologist free, busy-period phase 1, busy-period phase 2
        B00 = np.array(
            [
                [-(lam_p + lam_m), lam_p, 0.0],
                [(1 - p) * l1, -(l1 + lam_m), p * l1],
                [l2, 0.0, -(l2 + lam_m)],
            ]
        )
        A1 = B00.copy()
        A1[0, 0] -= mu_m
        down = np.diag([mu_m, 0.0, 0.0])
        up = lam_m * np.eye(3)

        assert qbd.boundary_levels == (0, 0, 0)
        assert qbd.first_level == 1
        for actual, expected in (
            (qbd.B00, B00),
            (qbd.B01, up),
            (qbd.B10, down),
            (qbd.A0, down),
            (qbd.A1, A1),
            (qbd.A2, up),
        ):
            np.testing.assert_allclose(actual, expected, rtol=1e-14, atol=1e-15)


class TestBusyPeriodEnvironment:
    """Test busy periods handed to the next class down."""

    def test_single_class_busy_period_matches_mm1(self):
        chain = TrackedChain(idle_environment(1), 0.04, [(1.0, 0.1)])
        env, periods = busy_period_environment(chain)
        assert len(periods) == 1
        (excursion,) = env.excursions
        direct = single_class_environment(0.04, 0.1, 1).excursions[0]
        assert excursion.moments == pytest.approx(direct.moments, rel=1e-9)

    def test_two_top_classes_give_two_starts(self):
        top = single_class_environment(0.03, 0.2, 1)
        chain = TrackedChain(top, 0.02, [(1.0, 0.1)])
        env, periods = busy_period_environment(chain)
        assert len(periods) == 2
        assert env.size == 1 + sum(e.fit.n_ec for e in env.excursions)
        for period in periods:
            assert sum(period.end_probs.values()) == pytest.approx(1.0, abs=1e-10)

    def test_no_arrivals_means_no_busy_periods(self):
        chain = TrackedChain(idle_environment(1), 0.0, [(1.0, 0.1)])
        env, periods = busy_period_environment(chain)
        assert periods == []
        assert env.excursions == ()
