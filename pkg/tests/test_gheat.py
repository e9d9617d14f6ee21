import math

import numpy as np
import pytest

from gexpect.gcore import GParams
from gexpect.gheat import Grid1D, gnormal_expect, make_grid, solve_gheat
from gexpect.payoff import parse

PARAMS = GParams(sigma_lower_sq=0.25, sigma_upper_sq=1.0)
CLASSICAL = GParams(sigma_lower_sq=1.0, sigma_upper_sq=1.0)  # degenerate band

TOL = 2e-3


def test_degenerate_band_recovers_gaussian_moments():
    # with a collapsed band the solver marches the classical heat equation
    assert gnormal_expect(parse("x1"), 1.0, CLASSICAL) == pytest.approx(0.0, abs=TOL)
    assert gnormal_expect(parse("x1^2"), 1.0, CLASSICAL) == pytest.approx(1.0, abs=TOL)
    # E|Z| = sqrt(2/pi) for a standard normal
    assert gnormal_expect(parse("abs(x1)"), 1.0, CLASSICAL) == pytest.approx(
        math.sqrt(2.0 / math.pi), abs=TOL
    )
    # E max(Z, 0) = 1/sqrt(2 pi)
    assert gnormal_expect(parse("max(x1, 0)"), 1.0, CLASSICAL) == pytest.approx(
        1.0 / math.sqrt(2.0 * math.pi), abs=TOL
    )


def test_band_selects_extreme_volatility_by_convexity():
    # convex payoffs propagate at the top of the band, concave at the bottom
    assert gnormal_expect(parse("abs(x1)"), 1.0, PARAMS) == pytest.approx(
        math.sqrt(2.0 / math.pi), abs=TOL
    )
    assert gnormal_expect(parse("-abs(x1)"), 1.0, PARAMS) == pytest.approx(
        -0.5 * math.sqrt(2.0 / math.pi), abs=TOL
    )
    assert gnormal_expect(parse("x1^2"), 1.0, PARAMS) == pytest.approx(1.0, abs=TOL)
    assert gnormal_expect(parse("-(x1^2)"), 1.0, PARAMS) == pytest.approx(
        -0.25, abs=TOL
    )


def test_time_scaling():
    # variance scales linearly in the horizon
    assert gnormal_expect(parse("x1^2"), 0.25, PARAMS) == pytest.approx(
        0.25, abs=TOL
    )


def test_affine_payoff_is_exact():
    # boundary extension is exact for affine data: no truncation error at all
    v = gnormal_expect(parse("3*x1 + 2"), 1.0, PARAMS)
    assert v == pytest.approx(2.0, abs=1e-12)


def test_zero_horizon_returns_initial_data():
    grid = make_grid(1.0, PARAMS)
    sol = solve_gheat(parse("x1^2"), 0.0, grid, PARAMS)
    np.testing.assert_allclose(sol.values, grid.x**2)
    assert sol.time == 0.0


def test_cfl_violation_raises():
    grid = make_grid(1.0, PARAMS)
    bad = Grid1D(grid.x_min, grid.x_max, grid.nx, dt=grid.dx**2 * 10, nt=5)
    with pytest.raises(ValueError, match="CFL"):
        solve_gheat(parse("x1^2"), 1.0, bad, PARAMS)


def test_make_grid_is_cfl_stable_and_even():
    grid = make_grid(1.0, PARAMS, nx=201)
    assert grid.cfl_valid(PARAMS)
    assert grid.nt * grid.dt == pytest.approx(1.0)
    assert grid.x_min == -grid.x_max


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid1D(1.0, -1.0, 11, 0.1, 1)
    with pytest.raises(ValueError):
        Grid1D(-1.0, 1.0, 2, 0.1, 1)
    with pytest.raises(ValueError):
        Grid1D(-1.0, 1.0, 11, -0.1, 1)
