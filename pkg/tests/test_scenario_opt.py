import json
from dataclasses import replace

import numpy as np
import pytest

from ccopf.case_io import Generator, bundled_case_path, parse_case
from ccopf.polytope import build_feasibility_polytope, check_feasible
from ccopf.redundancy import build_outer_polytope
from ccopf.scenario_opt import (ScenarioLpError, ScenarioRampError, build_scenario_lp, solve_deterministic_dcopf,
                                solve_scenario_lp)
from ccopf.uncertainty import AgcPolicy, ScenarioSet, UncertaintyModel, sample_mc_scenarios, simulate_agc


def parts(case, delta=0.0):
    poly, cost = build_feasibility_polytope(case)
    ramps = np.array([g.ramp_limit for g in case.generators])
    return poly, cost, ramps, AgcPolicy.proportional(ramps, delta)


def solve(case, scen, mode="fixed", aggregate=True, delta=0.0, outer=None):
    poly, cost, ramps, pol = parts(case, delta)
    return solve_scenario_lp(build_scenario_lp(poly, cost, scen, pol, ramps, mode, outer=outer,
                                               aggregate=aggregate))


def test_empty_scenario_set_rejected():
    with pytest.raises(ValueError):
        ScenarioSet(np.zeros((0, 2)), "mc", 0)


def test_zero_scenario_equals_dcopf(toy, case14):
    for case in (toy, case14):
        dc = solve_deterministic_dcopf(case)
        zero = ScenarioSet(np.zeros((1, 3)), "mc", 0)
        for mode in ("fixed", "box"):
            sol = solve(case, zero, mode, delta=0.05)
            assert sol.objective == pytest.approx(dc.objective, abs=1e-9)


def test_row_count_enumeration(toy):
    poly, cost, ramps, pol = parts(toy)
    scen = sample_mc_scenarios(UncertaintyModel([2.0, 2.0]), 2, 1)
    slp = build_scenario_lp(poly, cost, scen, pol, ramps, "fixed", aggregate=False)
    assert slp.lp.n_rows == (2 + 1) * poly.J * 2
    poly, cost, ramps, pol = parts(toy, 0.1)
    slp = build_scenario_lp(poly, cost, scen, pol, ramps, "box", aggregate=False)
    # security blocks, one ramp row per (scenario, step, generator), two simplex rows
    assert slp.lp.n_rows == 3 * poly.J * 2 + poly.n_g * 2 * 2 + 2


@pytest.mark.parametrize("mode", ["fixed", "box"])
def test_aggregation_is_exact(case14, mode):
    model = UncertaintyModel.linear_growth(3, 0.01, 5, 100.0)
    for seed in range(5):
        scen = sample_mc_scenarios(model, 15, seed)
        a = solve(case14, scen, mode, aggregate=True, delta=0.05)
        b = solve(case14, scen, mode, aggregate=False, delta=0.05)
        assert a.objective == pytest.approx(b.objective, abs=1e-7)


def test_monotone_and_permutation_invariant(case14):
    model = UncertaintyModel.linear_growth(5, 0.01, 5, 100.0)
    scen = sample_mc_scenarios(model, 200, 3)
    prev = solve_deterministic_dcopf(case14).objective
    for n in (1, 5, 20, 80, 200):
        obj = solve(case14, ScenarioSet(scen.zeta[:n], "mc", 3)).objective
        assert obj >= prev - 1e-9
        prev = obj
    perm = np.random.default_rng(0).permutation(200)
    assert solve(case14, ScenarioSet(scen.zeta[perm], "mc", 3)).objective == pytest.approx(prev, abs=1e-9)


@pytest.mark.parametrize("mode", ["fixed", "box"])
def test_in_sample_trajectories_stay_feasible(case14, mode):
    poly, _, _, _ = parts(case14)
    scen = sample_mc_scenarios(UncertaintyModel.linear_growth(5, 0.01, 5, 100.0), 50, 4)
    sol = solve(case14, scen, mode, delta=0.05)
    assert sol.ok and check_feasible(poly, sol.p0)
    pol = AgcPolicy(sol.alpha)
    for z in scen.zeta:
        traj = simulate_agc(sol.dispatch_mw, pol, z)
        for p_full in traj[1:]:
            shifted = poly.W_full @ (p_full / poly.base_mva)
            # W_full acts on full generation; compare against the pre-reduction bound
            assert np.all(shifted <= poly.b_full + 1e-7)


def test_box_mode_not_worse_than_fixed(case14):
    scen = sample_mc_scenarios(UncertaintyModel.linear_growth(5, 0.01, 5, 100.0), 100, 5)
    fixed = solve(case14, scen, "fixed")
    box = solve(case14, scen, "box", delta=0.05)
    assert box.objective <= fixed.objective + 1e-9
    assert box.alpha.sum() == pytest.approx(1.0)
    assert np.max(np.abs(box.alpha - parts(case14)[3].alpha)) <= 0.05 + 1e-9


def test_box_needs_deviation(case14):
    poly, cost, ramps, pol = parts(case14)
    with pytest.raises(ScenarioLpError):
        build_scenario_lp(poly, cost, ScenarioSet(np.zeros((1, 1)), "mc", 0), pol, ramps, "box")


def test_ramp_violation_named(toy):
    poly, cost, ramps, pol = parts(toy)
    z = np.array([[0.0, 1.0], [0.0, 150.0]])      # second scenario jumps 149 MW at step 2
    with pytest.raises(ScenarioRampError) as exc:
        build_scenario_lp(poly, cost, ScenarioSet(z, "mc", 0), pol, ramps)
    assert (exc.value.scenario, exc.value.step) == (1, 2)
    assert "scenario 2, step 2, generator 1" in str(exc.value)


def test_outer_rows_only_tighten(case14):
    poly, cost, ramps, pol = parts(case14)
    model = UncertaintyModel.linear_growth(5, 0.01, 5, 100.0)
    scen = sample_mc_scenarios(model, 30, 6)
    outer = build_outer_polytope(poly, pol, model, 0.01)
    a = solve(case14, scen)
    b = solve(case14, scen, outer=outer)
    assert b.objective >= a.objective - 1e-9


def test_dcopf_14_bus_cost(case14):
    dc = solve_deterministic_dcopf(case14)
    assert dc.solution.ok
    assert abs(dc.objective - 5.2e3) <= 0.05 * 5.2e3
    assert dc.dispatch_mw.sum() == pytest.approx(case14.total_demand)


def test_dcopf_toy_cheapest_first(toy):
    dc = solve_deterministic_dcopf(toy)
    assert np.allclose(dc.dispatch_mw, [20.0, 80.0])
    assert dc.objective == pytest.approx(30 * 20 + 10 * 80)


def test_dcopf_equal_costs_unique_objective(toy):
    gens = tuple(replace(g, cost_linear=15.0) for g in toy.generators)
    dc = solve_deterministic_dcopf(replace(toy, generators=gens))
    assert dc.objective == pytest.approx(15.0 * 100)


def test_dcopf_infeasible_reports_row():
    doc = json.loads(bundled_case_path("case3").read_text())
    for br in doc["branches"]:
        br["angle_limit"] = 0.01
    dc = solve_deterministic_dcopf(parse_case(json.dumps(doc)))
    assert dc.solution.status == "infeasible"
    assert dc.most_violated.startswith("angle")
