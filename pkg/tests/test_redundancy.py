import numpy as np
import pytest

from ccopf.normal import norm_ppf
from ccopf.polytope import build_feasibility_polytope
from ccopf.redundancy import (active_rows, build_outer_polytope, build_redundancy_system, is_redundant,
                              redundant_mask)
from ccopf.uncertainty import AgcPolicy, UncertaintyModel


@pytest.fixture
def toy_parts(toy):
    poly, cost = build_feasibility_polytope(toy)
    ramps = np.array([g.ramp_limit for g in toy.generators])
    pol = AgcPolicy.proportional(ramps)
    return poly, cost, ramps, pol


def test_outer_at_half_is_original(toy_parts):
    poly, _, _, pol = toy_parts
    out = build_outer_polytope(poly, pol, UncertaintyModel([3.0, 4.0]), 0.5)
    assert np.allclose(out.effective_b, poly.b)


def test_outer_tightening_monotone(toy_parts):
    poly, _, _, pol = toy_parts
    model = UncertaintyModel([3.0, 4.0, 1.0])
    out = build_outer_polytope(poly, pol, model, 0.01)
    assert np.all(out.thresholds <= poly.b[:, None] + 1e-15)
    assert np.all(np.diff(out.thresholds, axis=1) <= 1e-15)
    assert np.array_equal(out.effective_b, out.thresholds[:, -1])
    a = poly.agc_sensitivity(pol.alpha)
    expected = poly.b - 2.3263478740408408 * model.sigma_cum[-1] / poly.base_mva * np.abs(a)
    assert np.allclose(out.effective_b, expected)


def test_eta_range(toy_parts):
    poly, _, ramps, pol = toy_parts
    for eta in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            build_outer_polytope(poly, pol, UncertaintyModel([1.0]), eta)


def test_row_count_by_enumeration(toy_parts):
    poly, _, ramps, pol = toy_parts
    T = 3
    sys_ = build_redundancy_system(poly, pol, UncertaintyModel([1.0] * T), ramps, 0.05)
    a = poly.agc_sensitivity(pol.alpha)
    j_active = sum(1 for x in a if abs(x) > 1e-12)
    assert len(sys_.rows) == j_active * T + 2 * poly.n_g * T
    for r in sys_.rows:
        if r.kind == "security":
            assert np.count_nonzero(r.normal) == 1 and abs(r.normal[r.t - 1]) == 1


def test_zero_sensitivity_rows_skipped(toy_parts):
    poly, _, ramps, _ = toy_parts
    # generator 1 (slack) takes all of the imbalance: line flows do not move
    pol = AgcPolicy(np.array([1.0, 0.0]))
    sys_ = build_redundancy_system(poly, pol, UncertaintyModel([1.0]), ramps, 0.05)
    act = active_rows(poly, pol)
    sources = {r.source for r in sys_.rows if r.kind == "security"}
    assert sources == set(np.flatnonzero(act))
    assert not act[:6].any()          # angle rows
    # and alpha_k = 0 ramp rows are vacuous
    vac = [r for r in sys_.rows if r.kind != "security" and r.source == 1]
    assert all(np.isinf(r.threshold) for r in vac)


def test_single_row_T1(toy_parts):
    poly, _, ramps, pol = toy_parts
    sys_ = build_redundancy_system(poly, pol, UncertaintyModel([2.0]), ramps, 0.05)
    q = float(norm_ppf(0.95))
    for r in sys_.rows:
        if r.kind == "security":
            assert r.threshold == pytest.approx(q * 2.0)


def test_classification(toy_parts):
    poly, _, ramps, pol = toy_parts
    model = UncertaintyModel([2.0, 1.0])
    sys_ = build_redundancy_system(poly, pol, model, ramps, 0.05)
    q = float(norm_ppf(0.95))
    assert is_redundant(np.zeros(2), sys_)
    assert not is_redundant(np.array([q * 2.0 + 1.0, 0.0]), sys_)
    assert not is_redundant(np.array([-(q * 2.0 + 1.0), 0.0]), sys_)
    with pytest.raises(ValueError):
        is_redundant(np.zeros(3), sys_)


def test_ramp_rows_detect_large_steps(toy_parts):
    poly, _, ramps, pol = toy_parts
    sys_ = build_redundancy_system(poly, pol, UncertaintyModel([1000.0, 1000.0]), ramps, 0.4)
    big_step = ramps[0] / pol.alpha[0] + 1.0
    assert redundant_mask(np.array([[0.0, 0.0], [1.0, 2.0]]), sys_).all()
    z = np.array([[0.0, big_step]])
    # the step from 0 to big_step breaks the ramp row even though zeta^2 is within the security band
    sec = max(r.threshold for r in sys_.rows if r.kind == "security")
    assert big_step < sec
    assert not redundant_mask(z, sys_)[0]


def test_rescaling_invariance(toy_parts):
    poly, _, ramps, pol = toy_parts
    from dataclasses import replace
    poly2 = replace(poly, W=3.0 * poly.W, b=3.0 * poly.b, W_full=3.0 * poly.W_full)
    model = UncertaintyModel([2.0, 1.0])
    z = np.random.default_rng(0).normal(0, 4, (500, 2))
    s1 = build_redundancy_system(poly, pol, model, ramps, 0.05)
    s2 = build_redundancy_system(poly2, pol, model, ramps, 0.05)
    assert np.array_equal(redundant_mask(z, s1), redundant_mask(z, s2))


def test_csv_dump(toy_parts):
    poly, _, ramps, pol = toy_parts
    sys_ = build_redundancy_system(poly, pol, UncertaintyModel([1.0, 1.0]), ramps, 0.05)
    text = sys_.to_csv()
    assert text.splitlines()[0] == "kind,t,source,n_1,n_2,threshold"
    assert len(text.splitlines()) == len(sys_.rows) + 1


def test_quantile_scaled_ramp_mode(toy_parts):
    poly, _, ramps, pol = toy_parts
    sys_ = build_redundancy_system(poly, pol, UncertaintyModel([1.0]), ramps, 0.05, ramp_mode="quantile_scaled")
    q = float(norm_ppf(0.95))
    ramp = [r for r in sys_.rows if r.kind != "security"]
    assert all(r.threshold == pytest.approx(q * ramps[r.source]) for r in ramp)
    with pytest.raises(ValueError):
        build_redundancy_system(poly, pol, UncertaintyModel([1.0]), ramps, 0.05, ramp_mode="other")
