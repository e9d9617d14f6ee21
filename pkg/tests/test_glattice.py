import csv
import math

import numpy as np
import pytest

from gexpect.gcore import ConstantPolicy, GParams
from gexpect.glattice import (
    CylinderFunctional,
    Lattice,
    build_lattice,
    conditional_expect,
    conditional_tables,
    ensemble_to_csv,
    eval_tables_on_paths,
    extract_worst_policy,
    lattice_expect,
    policy_to_csv,
    sample_paths,
)
from gexpect.payoff import eval_expr, parse

PARAMS = GParams(sigma_lower_sq=0.25, sigma_upper_sq=1.0)


def brute_expect(lat, X):
    """Independent oracle: exhaustive recursion over (volatility, sign) choices."""
    sqdt = math.sqrt(lat.dt)
    anchors = (0,) + X.levels

    def terminal(incs):
        path = np.concatenate([[0.0], np.cumsum(incs)])
        if X.mode == "increments":
            args = [path[b] - path[a] for a, b in zip(anchors, anchors[1:])]
        else:
            args = [path[l] for l in X.levels]
        return float(eval_expr(X.phi, args))

    def rec(k, incs):
        if k == X.levels[-1]:
            return terminal(incs)
        best = -math.inf
        for sv in lat.sigma_values:
            up = rec(k + 1, incs + [sv * sqdt])
            dn = rec(k + 1, incs + [-sv * sqdt])
            best = max(best, 0.5 * (up + dn))
        return best

    return rec(0, [])


# --- construction ---------------------------------------------------------------


def test_lattice_validation():
    with pytest.raises(ValueError):
        Lattice(T=1.0, n_steps=4, params=PARAMS, sigma_grid=(1.0, 0.25))
    with pytest.raises(ValueError):
        Lattice(T=1.0, n_steps=4, params=PARAMS, sigma_grid=(0.25,))
    with pytest.raises(ValueError):
        Lattice(T=-1.0, n_steps=4, params=PARAMS, sigma_grid=(0.25, 1.0))
    with pytest.raises(ValueError):
        build_lattice(1.0, 4, PARAMS, sigma_refinement=-1)


def test_build_lattice_grids():
    lat = build_lattice(1.0, 4, PARAMS)
    assert lat.sigma_grid == (0.25, 1.0)
    assert lat.dt == 0.25
    lat3 = build_lattice(1.0, 4, PARAMS, sigma_refinement=2)
    assert lat3.n_sigma == 4
    degenerate = build_lattice(1.0, 4, GParams(1.0, 1.0))
    assert degenerate.sigma_grid == (1.0,)
    assert lat.level_of_time(0.5) == 2
    with pytest.raises(ValueError):
        lat.level_of_time(0.3)


def test_functional_validation():
    with pytest.raises(ValueError):
        CylinderFunctional((4, 2), parse("x1"))
    with pytest.raises(ValueError):
        CylinderFunctional((0,), parse("x1"))
    with pytest.raises(ValueError):
        CylinderFunctional((4,), parse("x2"))
    with pytest.raises(ValueError):
        CylinderFunctional((4,), parse("x1"), mode="paths")
    assert CylinderFunctional((2, 5), parse("x1 + x2")).segment_lengths == (2, 3)


# --- exact values ------------------------------------------------------------------


def test_quadratic_moments_are_exact():
    lat = build_lattice(1.0, 8, PARAMS)
    up = lattice_expect(lat, CylinderFunctional((8,), parse("x1^2")))
    lo = -lattice_expect(lat, CylinderFunctional((8,), parse("-(x1^2)")))
    assert up == pytest.approx(1.0, abs=1e-14)
    assert lo == pytest.approx(0.25, abs=1e-14)


def test_abs_payoff_matches_closed_form():
    # worst case for |x| is the top volatility: a scaled simple random walk
    # with E|S_4| = 3/2, so the value is 1.5 * sqrt(dt)
    lat = build_lattice(1.0, 4, PARAMS)
    v = lattice_expect(lat, CylinderFunctional((4,), parse("abs(x1)")))
    assert v == pytest.approx(1.5 * 0.5, abs=1e-14)


@pytest.mark.parametrize(
    "levels, text, mode",
    [
        ((4,), "abs(x1)", "increments"),
        ((4,), "max(x1 - 0.3, 0)", "increments"),
        ((2, 4), "x1 * x2", "increments"),
        ((2, 4), "x2^2 - x1", "levels"),
        ((1, 3, 4), "max(x1, x2, x3)", "levels"),
    ],
)
def test_expectation_matches_brute_force(levels, text, mode):
    lat = build_lattice(1.0, 4, PARAMS)
    X = CylinderFunctional(levels, parse(text), mode=mode)
    assert lattice_expect(lat, X) == pytest.approx(brute_expect(lat, X), abs=1e-13)


def test_increment_and_level_modes_agree_for_single_anchor():
    lat = build_lattice(1.0, 6, PARAMS)
    phi = parse("max(x1 - 0.5, 0)")
    a = lattice_expect(lat, CylinderFunctional((6,), phi, mode="increments"))
    b = lattice_expect(lat, CylinderFunctional((6,), phi, mode="levels"))
    assert a == b


# --- conditional tables --------------------------------------------------------------


def test_conditioning_to_zero_matches_expectation():
    lat = build_lattice(1.0, 6, PARAMS)
    X = CylinderFunctional((3, 6), parse("x1^2 + abs(x2)"))
    table = conditional_expect(lat, X, 0)
    assert table.value_at_origin() == pytest.approx(lattice_expect(lat, X))


def test_tower_through_intermediate_level():
    lat = build_lattice(1.0, 6, PARAMS)
    X = CylinderFunctional((6,), parse("abs(x1)"), mode="levels")
    caps = conditional_tables(lat, X, (1, 4))
    direct = caps[1]
    via4 = caps[4].condition_to(1)
    mask = direct.valid_mask()
    np.testing.assert_allclose(via4.values[mask], direct.values[mask], atol=1e-14)


def test_valid_mask_counts_and_positions():
    lat = build_lattice(1.0, 4, PARAMS)
    X = CylinderFunctional((4,), parse("x1"))
    table = conditional_expect(lat, X, 2)
    mask = table.valid_mask()
    # two steps, two volatilities: (c1, c2) with |c1| + |c2| = 2 or 0 -> 9 nodes
    assert int(mask.sum()) == 9
    pos = table.positions()
    sqdt = 0.5
    expected = {
        round(c1 * 0.5 * sqdt + c2 * 1.0 * sqdt, 12)
        for c1 in range(-2, 3)
        for c2 in range(-2, 3)
        if abs(c1) + abs(c2) in (0, 2)
    }
    assert {round(float(p), 12) for p in pos[mask]} == expected


def test_conditional_level_beyond_horizon_raises():
    lat = build_lattice(1.0, 4, PARAMS)
    X = CylinderFunctional((4,), parse("x1"))
    with pytest.raises(ValueError):
        conditional_expect(lat, X, 5)


# --- policies and sampling --------------------------------------------------------------


def test_worst_policy_for_convex_payoff_is_max_volatility():
    lat = build_lattice(1.0, 10, PARAMS)
    pol = extract_worst_policy(lat, CylinderFunctional((10,), parse("x1^2")))
    ens = sample_paths(lat, pol, 500, seed=7)
    assert np.all(ens.sigma_sq == 1.0)
    assert ens.policy_name == "worst:x1^2"


def test_worst_policy_for_concave_payoff_is_min_volatility():
    lat = build_lattice(1.0, 10, PARAMS)
    pol = extract_worst_policy(lat, CylinderFunctional((10,), parse("-(x1^2)")))
    ens = sample_paths(lat, pol, 500, seed=7)
    assert np.all(ens.sigma_sq == 0.25)


def test_sampling_is_reproducible_and_on_grid():
    lat = build_lattice(1.0, 20, PARAMS)
    pol = ConstantPolicy(1.0, name="const-max")
    a = sample_paths(lat, pol, 100, seed=3)
    b = sample_paths(lat, pol, 100, seed=3)
    np.testing.assert_array_equal(a.B, b.B)
    c = sample_paths(lat, pol, 100, seed=4)
    assert not np.array_equal(a.B, c.B)
    # increments are exactly +-sigma*sqrt(dt)
    np.testing.assert_allclose(np.abs(np.diff(a.B, axis=1)),
                               math.sqrt(lat.dt), atol=1e-15)
    np.testing.assert_allclose(a.qv[:, -1], 1.0, atol=1e-12)


def test_out_of_band_policy_rejected():
    lat = build_lattice(1.0, 5, PARAMS)
    with pytest.raises(ValueError, match="band"):
        sample_paths(lat, ConstantPolicy(2.0), 10, seed=0)


def test_track_coords_requires_grid_alignment():
    lat = build_lattice(1.0, 5, PARAMS)
    with pytest.raises(ValueError, match="grid-aligned"):
        sample_paths(lat, ConstantPolicy(0.625), 10, seed=0, track_coords=True)


def test_eval_tables_on_paths_reconstructs_terminal_payoff():
    n = 8
    lat = build_lattice(1.0, n, PARAMS)
    X = CylinderFunctional((n,), parse("x1^2"), mode="levels")
    tables = conditional_tables(lat, X, range(n + 1))
    ens = sample_paths(lat, ConstantPolicy(0.25, name="const-min"), 200,
                       seed=11, track_coords=True)
    v = eval_tables_on_paths(tables, ens)
    np.testing.assert_allclose(v[:, n], ens.B[:, n] ** 2, atol=1e-12)
    assert np.all(v[:, 0] == tables[0].value_at_origin())


def test_csv_exports(tmp_path):
    lat = build_lattice(1.0, 4, PARAMS)
    ens = sample_paths(lat, ConstantPolicy(1.0, name="const-max"), 3, seed=0)
    p1 = tmp_path / "paths.csv"
    ensemble_to_csv(ens, str(p1))
    with open(p1, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["path_id", "step", "t", "B", "sigma_sq", "qv"]
    assert len(rows) == 1 + 3 * 5

    pol = extract_worst_policy(lat, CylinderFunctional((4,), parse("x1^2")))
    p2 = tmp_path / "policy.csv"
    policy_to_csv(pol, str(p2))
    with open(p2, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["level", "node_position", "sigma_sq"]
    assert all(float(r[2]) == 1.0 for r in rows[1:])
