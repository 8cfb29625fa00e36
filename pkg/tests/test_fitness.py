import math

import numpy as np
import pytest

from uavtune.controller import Waypoint
from uavtune.dynamics import H, P, PE, PHI, PN, PSI, Q, THETA, VE, VH, VN
from uavtune.fitness import (
    CYCLE_MAX, FitnessBreakdown, FitnessConfigError, FitnessLimits, accumulate, cycle_fitness,
    kernel, max_fitness, score_trajectory, wrap,
)


def kernel_oracle(e, l, lc):
    # straight transcription of the piecewise definition
    if e > lc:
        return max((l - e) / (4 * (l - lc)), 0.0)
    return 3 * (lc - e) / (4 * lc) + 0.25


def perfect_estimate(sp=(0.0, 0.0, 0.2, 0.0)):
    est = np.zeros(12)
    est[PN], est[PE], est[H] = sp[0], sp[1], sp[2]
    est[PSI] = math.radians(sp[3])
    return est


class TestKernel:
    def test_zero_error_scores_one(self):
        assert kernel(0.0, 0.2, 0.07) == 1.0

    def test_core_boundary_continuous(self):
        l, lc = 30.0, 10.0
        assert kernel(lc, l, lc) == pytest.approx(0.25, abs=1e-12)
        assert kernel(lc + 1e-12, l, lc) == pytest.approx(0.25, abs=1e-9)

    def test_beyond_range_is_zero(self):
        assert kernel(0.2, 0.2, 0.07) == 0.0
        assert kernel(5.0, 0.2, 0.07) == 0.0

    def test_midpoint_of_upper_branch(self):
        l, lc = 0.2, 0.03
        assert kernel((l + lc) / 2, l, lc) == pytest.approx(0.125, abs=1e-12)

    @pytest.mark.parametrize("l,lc", FitnessLimits().pairs())
    def test_matches_oracle(self, l, lc):
        for e in np.linspace(0, 1.5 * l, 301):
            assert kernel(e, l, lc) == pytest.approx(kernel_oracle(e, l, lc), abs=1e-12)

    @pytest.mark.parametrize("l,lc", [(1.0, 1.0), (1.0, 2.0), (1.0, 0.0), (1.0, -0.5)])
    def test_bad_ranges_rejected(self, l, lc):
        with pytest.raises(FitnessConfigError):
            kernel(0.1, l, lc)

    def test_negative_error_rejected(self):
        with pytest.raises(FitnessConfigError):
            kernel(-0.1, 1.0, 0.5)


class TestWrap:
    def test_examples(self):
        assert wrap(0.0) == 0.0
        assert math.degrees(wrap(math.radians(190))) == pytest.approx(-170.0, abs=1e-9)
        assert wrap(math.radians(-360)) == pytest.approx(0.0, abs=1e-12)

    def test_half_turn_maps_to_plus_pi(self):
        assert wrap(math.pi) == pytest.approx(math.pi)
        assert wrap(-math.pi) == pytest.approx(math.pi)


class TestLimits:
    def test_defaults(self):
        lim = FitnessLimits()
        assert lim.pairs()[0] == (0.2, 0.07)
        assert len(lim.pairs()) == 7

    def test_core_must_be_below_full(self):
        with pytest.raises(FitnessConfigError):
            FitnessLimits(l_p=0.05, l_pc=0.07)


class TestCycle:
    def test_perfect_hover_scores_ten(self):
        br = cycle_fitness(perfect_estimate(), Waypoint(0, 0, 0.2, 0))
        assert br.total == CYCLE_MAX
        assert isinstance(br, FitnessBreakdown)

    def test_everything_wrong_scores_zero(self):
        est = perfect_estimate()
        est[PN] = 1.0
        est[H] = 1.0
        est[PSI] = math.radians(60)
        est[PHI] = est[THETA] = math.radians(20)
        est[VN] = 2.0
        est[VH] = 2.0
        est[P] = est[Q] = math.radians(300)
        br = cycle_fitness(est, Waypoint(0, 0, 0.2, 0), saturated=(True,) * 4)
        assert br.total == 0.0

    def test_yaw_at_core_range(self):
        est = perfect_estimate((0, 0, 0.2, 10.0))
        br = cycle_fitness(est, Waypoint(0, 0, 0.2, 0.0))
        assert br.total == pytest.approx(9.25, abs=1e-12)

    def test_saturation_counts_quarter_each(self):
        br = cycle_fitness(perfect_estimate(), Waypoint(0, 0, 0.2, 0), saturated=(True, False, True, False))
        assert br.f_l == 0.5

    def test_attitude_scored_against_setpoint(self):
        est = perfect_estimate()
        est[PHI] = math.radians(5)
        br = cycle_fitness(est, Waypoint(0, 0, 0.2, 0), attitude_setpoint=(5.0, 0.0))
        assert br.f_a == pytest.approx(2.0)

    def test_components_use_horizontal_distance(self):
        est = perfect_estimate()
        est[PN], est[PE] = 0.03, 0.04
        br = cycle_fitness(est, Waypoint(0, 0, 0.2, 0))
        assert br.f_p == pytest.approx(kernel_oracle(0.05, 0.2, 0.07))

    def test_yaw_representation_invariance(self):
        est = perfect_estimate((0, 0, 0.2, 20.0))
        a = cycle_fitness(est, Waypoint(0, 0, 0.2, 0.0)).total
        est[PSI] += 2 * math.pi
        b = cycle_fitness(est, Waypoint(0, 0, 0.2, 360.0)).total
        assert a == pytest.approx(b, abs=1e-12)


class TestAccumulate:
    def test_sixty_seconds_perfect(self):
        assert max_fitness(60.0) == 150000.0
        total = 0.0
        br = cycle_fitness(perfect_estimate(), Waypoint(0, 0, 0.2, 0))
        for _ in range(250 * 60):
            total = accumulate(total, br)
        assert total == 150000.0

    def test_thirty_seconds_perfect(self):
        n = 30 * 250
        est = np.tile(perfect_estimate(), (n, 1))
        assert score_trajectory(est, [[0, 0, 0.2, 0]]) == 75000.0

    def test_empty_trial(self):
        assert score_trajectory(np.zeros((0, 12)), np.zeros((0, 4))) == 0.0

    def test_negative_total_rejected(self):
        with pytest.raises(ValueError):
            accumulate(-1.0, 1.0)
