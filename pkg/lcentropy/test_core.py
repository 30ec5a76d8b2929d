"""
Tests for trajectories, metric spaces and radius helpers.
"""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lcentropy.core import (
    CheckResult,
    EpsilonGrid,
    InfeasibleParameterError,
    OrbitEscapedError,
    TrajectoryBuffer,
    WindowError,
    as_fraction,
    diameter_estimate,
    ensure_increasing,
    first_disagreement,
    float_radius,
    orbit_segment,
    real_line,
    shift_space,
)


def test_shift_space_distance():
    """First disagreement k gives 2^-k; agreement on the horizon gives 0."""
    space = shift_space([0, 1, 0, 1, 1], horizon=2)
    assert space.distance(0, 2) == 0
    assert space.distance(0, 1) == 1
    assert space.distance(1, 3) == Fraction(1, 2)
    assert space.distance(3, 3) == 0


def test_shift_space_window_past_end():
    space = shift_space([0, 1, 0, 1, 1], horizon=2)
    with pytest.raises(WindowError):
        space.distance(0, 4)


def test_shift_space_rejects_bad_horizon():
    with pytest.raises(ValueError):
        shift_space([0, 1], horizon=0)


def test_first_disagreement():
    assert first_disagreement(np.array([1, 2, 3]), np.array([1, 2, 3])) is None
    assert first_disagreement(np.array([1, 2, 3]), np.array([1, 0, 3])) == 1


def test_trajectory_subsample_and_shift():
    traj = TrajectoryBuffer(tuple(float(i) for i in range(10)), real_line(), "ramp")
    assert traj.subsample(3).states == (0.0, 3.0, 6.0, 9.0)
    assert traj.subsample(3, 1).states == (1.0, 4.0, 7.0)
    assert traj.shifted(8).states == (8.0, 9.0)
    assert len(traj) == 10


def test_trajectory_require():
    traj = TrajectoryBuffer((0.0, 0.5, 1.0), real_line())
    traj.require(2, 2)
    with pytest.raises(InfeasibleParameterError, match="n \\+ m - 1"):
        traj.require(3, 2)
    with pytest.raises(InfeasibleParameterError):
        traj.require(0, 1)


def test_trajectory_values_read_only():
    traj = TrajectoryBuffer((0.25, 0.5), real_line())
    values = traj.values()
    assert values.dtype == np.float64
    with pytest.raises(ValueError):
        values[0] = 1.0


def test_epsilon_grid_dyadic_is_exact():
    grid = EpsilonGrid.dyadic(1, 3)
    assert grid.values == (Fraction(1, 2), Fraction(1, 4), Fraction(1, 8))
    assert EpsilonGrid.dyadic(0, 1, scale=0.5).values == (0.5, 0.25)


@pytest.mark.parametrize("values", [(), (Fraction(1, 4), Fraction(1, 2)), (Fraction(1, 2), 0)])
def test_epsilon_grid_rejects(values):
    with pytest.raises(ValueError):
        EpsilonGrid(values)


def test_orbit_segment_and_escape():
    traj = orbit_segment(lambda x: 2 * x, 1, 4)
    assert traj.states == (1, 2, 4, 8)
    with pytest.raises(OrbitEscapedError) as info:
        orbit_segment(lambda x: x * 1e200, 1.0, 5)
    assert info.value.index == 2


def test_orbit_segment_projection_keeps_exact_iteration():
    traj = orbit_segment(lambda x: 2 * min(x, 1 - x), Fraction(1, 3), 3, project=float)
    assert traj.states == (1 / 3, 2 / 3, 2 / 3)


def test_diameter_estimate():
    assert diameter_estimate(TrajectoryBuffer((0.0, 0.5, 0.25), real_line())) == 0.5
    symbols = [0, 0, 0, 1, 0, 0, 0, 1]
    traj = TrajectoryBuffer((0, 4), shift_space(symbols, 4))
    assert diameter_estimate(traj) == 0
    traj = TrajectoryBuffer((0, 1, 2), shift_space(symbols, 4))
    assert diameter_estimate(traj) == Fraction(1, 2)


@given(st.fractions(min_value=Fraction(1, 10 ** 6), max_value=10, max_denominator=10 ** 9))
def test_float_radius_never_exceeds(eps):
    radius = float_radius(eps)
    assert Fraction(radius) <= eps
    assert Fraction(math.nextafter(radius, math.inf)) > eps or Fraction(radius) == eps


def test_as_fraction():
    assert as_fraction("1/4") == Fraction(1, 4)
    assert as_fraction(" 0.25 ") == Fraction(1, 4)
    assert as_fraction(2) == 2


def test_ensure_increasing():
    assert ensure_increasing([1, 3, 7], "m") == (1, 3, 7)
    with pytest.raises(InfeasibleParameterError, match="m must be"):
        ensure_increasing([1, 1], "m")


def test_check_result_defaults():
    result = CheckResult(name="x", passed=True)
    assert result.values == {} and result.detail == ""
