import math

import numpy as np
import pytest

from gexpect.gcore import ConstantPolicy, GParams, default_scenario_family
from gexpect.glattice import build_lattice, sample_paths
from gexpect.stochastic import (
    StepProcess,
    g_compensated,
    integrate_qv,
    ito_integral,
    mg_norm,
    qv_identity_gap,
    quadratic_variation,
)

PARAMS = GParams(sigma_lower_sq=0.25, sigma_upper_sq=1.0)
LAT = build_lattice(1.0, 50, PARAMS)
ENS = sample_paths(LAT, ConstantPolicy(1.0, name="const-max"), 300, seed=5)
ENS_MIN = sample_paths(LAT, ConstantPolicy(0.25, name="const-min"), 300, seed=6)


def test_step_process_validation():
    with pytest.raises(ValueError):
        StepProcess((1,), (1.0,))
    with pytest.raises(ValueError):
        StepProcess((0, 3, 2), (1.0, 2.0, 3.0))
    with pytest.raises(ValueError):
        StepProcess((0, 3), (1.0,))


def test_step_process_values():
    ind = StepProcess.indicator(10, 30)
    vals = ind.level_values(50)
    assert vals[9] == 0.0 and vals[10] == 1.0 and vals[29] == 1.0 and vals[30] == 0.0
    const = StepProcess.constant(2.5)
    assert np.all(const.values_on(ENS) == 2.5)
    adapted = StepProcess.adapted(lambda x: np.abs(x), 50)
    np.testing.assert_allclose(adapted.values_on(ENS), np.abs(ENS.B[:, :50]))
    with pytest.raises(ValueError):
        adapted.level_values(50)


def test_ito_integral_of_constant_is_the_path():
    I = ito_integral(StepProcess.constant(1.0), ENS)
    np.testing.assert_allclose(I, ENS.B - ENS.B[:, :1], atol=1e-15)


def test_ito_integral_of_indicator_is_a_window_increment():
    I = ito_integral(StepProcess.indicator(10, 30), ENS)
    np.testing.assert_allclose(I[:, -1], ENS.B[:, 30] - ENS.B[:, 10], atol=1e-14)
    assert np.all(I[:, :11] == 0.0)


def test_quadratic_variation_matches_policy():
    qv = quadratic_variation(ENS.B)
    np.testing.assert_allclose(qv, ENS.qv, atol=1e-13)
    np.testing.assert_allclose(quadratic_variation(ENS_MIN.B), ENS_MIN.qv,
                               atol=1e-13)


def test_qv_identity_is_machine_exact():
    assert qv_identity_gap(ENS.B, ENS) < 1e-13
    M = ito_integral(StepProcess.adapted(lambda x: x, 50, name="B"), ENS)
    assert qv_identity_gap(M, ENS) < 1e-13


def test_integrate_qv_and_monotonicity_guard():
    total = integrate_qv(StepProcess.constant(1.0), ENS)
    np.testing.assert_allclose(total, ENS.qv, atol=1e-14)
    bad = -np.cumsum(np.ones_like(ENS.B), axis=1)
    with pytest.raises(ValueError, match="nondecreasing"):
        integrate_qv(StepProcess.constant(1.0), ENS, A=bad)


def test_breakpoint_beyond_horizon_rejected():
    with pytest.raises(ValueError):
        ito_integral(StepProcess.indicator(0, 60), ENS)


def test_mg_norm_of_unit_integrand():
    # int 1 d<B> is sigma^2 T exactly per scenario; the max is at the top
    norm = mg_norm(StepProcess.constant(1.0), [ENS, ENS_MIN], p=2.0)
    assert norm == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        mg_norm(StepProcess.constant(1.0), [ENS], p=0.5)


def test_g_compensated_nonincreasing_everywhere():
    fam = default_scenario_family(PARAMS)
    for i, pol in enumerate(fam):
        ens = sample_paths(LAT, pol, 200, seed=20 + i)
        for f in (StepProcess.constant(1.0), StepProcess.constant(-1.0),
                  StepProcess.adapted(lambda x: x, 50, name="B")):
            Xc = g_compensated(f, ens, PARAMS)
            assert np.max(np.diff(Xc, axis=1)) <= 1e-15
            assert np.all(Xc[:, 0] == 0.0)


def test_g_compensated_extreme_scenarios_are_flat_or_linear():
    # under const-max with f = 1: d<B> = dt and 2G(1) = 1, so the process is 0
    Xc = g_compensated(StepProcess.constant(1.0), ENS, PARAMS)
    np.testing.assert_allclose(Xc, 0.0, atol=1e-14)
    # under const-min it decreases at rate sigma_lo^2 - sigma_up^2 = -0.75
    Xc2 = g_compensated(StepProcess.constant(1.0), ENS_MIN, PARAMS)
    np.testing.assert_allclose(Xc2[:, -1], -0.75, atol=1e-13)


def test_g_compensated_dominance_guard():
    A = np.broadcast_to(0.5 * ENS.times, ENS.B.shape)
    with pytest.raises(ValueError, match="dominance"):
        g_compensated(StepProcess.constant(1.0), ENS, PARAMS, A=A)
