import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccopf.case_io import (Bus, Generator, GridCase, CaseParseError, CaseValidationError, load_bundled_case,
                           merge_generators, parse_case, resolve_case, serialize_case, validate_case)


def toy_doc():
    from ccopf.case_io import bundled_case_path
    return json.loads(bundled_case_path("case3").read_text())


def test_toy_counts(toy):
    assert (toy.n, toy.m, toy.n_g) == (3, 3, 2)
    assert toy.slack_bus == 1
    assert validate_case(toy) == []


def test_bundled_14_bus(case14):
    assert case14.n == 14
    assert case14.m == 20
    assert case14.n_g == 5
    assert case14.total_demand == pytest.approx(259.0)
    assert validate_case(case14) == []


def test_p_min_above_p_max_names_generator_2():
    doc = toy_doc()
    doc["generators"][1]["p_min"] = 90.0
    with pytest.raises(CaseValidationError) as exc:
        parse_case(json.dumps(doc))
    assert any("generator 2" in str(v) for v in exc.value.violations)


def test_two_slack_buses(toy):
    from dataclasses import replace
    bad = replace(toy, slack_buses=(1, 2))
    assert [str(v) for v in validate_case(bad)] == ["multiple slack buses"]


def test_insufficient_capacity(toy):
    from dataclasses import replace
    buses = tuple(Bus(b.id, 300.0 if b.id == 3 else 0.0) for b in toy.buses)
    msgs = [str(v) for v in validate_case(replace(toy, buses=buses))]
    assert msgs == ["insufficient generation capacity"]


def test_disconnected_bus_named():
    doc = toy_doc()
    doc["buses"].append({"id": 7, "demand": 0.0})
    with pytest.raises(CaseValidationError) as exc:
        parse_case(json.dumps(doc))
    assert "disconnected bus 7" in str(exc.value)


def test_parse_error_has_line_number():
    with pytest.raises(CaseParseError) as exc:
        parse_case('{\n "buses": [\n oops\n]}')
    assert exc.value.line == 3


def test_matpower_parse_error_line():
    text = "function mpc = x\nmpc.baseMVA = 100;\nmpc.bus = [\n1 3 0;\n2 1 abc;\n];\n"
    with pytest.raises(CaseParseError) as exc:
        parse_case(text, "matpower")
    assert exc.value.line == 5


def test_round_trip_canonical(toy, case14):
    for case in (toy, case14):
        text = serialize_case(case)
        again = parse_case(text, name=case.name)
        assert again == case
        assert serialize_case(again) == text


def test_merge_generators_on_shared_bus():
    doc = toy_doc()
    doc["generators"].append({"bus": 2, "p_min": 0.0, "p_max": 20.0, "ramp_limit": 10.0,
                              "cost_linear": 20.0, "cost_const": 5.0})
    case = parse_case(json.dumps(doc))
    assert case.n_g == 2
    g2 = case.generators[1]
    assert g2.p_max == 100.0 and g2.ramp_limit == 60.0 and g2.cost_const == 5.0
    assert g2.cost_linear == pytest.approx((10 * 80 + 20 * 20) / 100)


def test_resolve_missing_case():
    with pytest.raises(FileNotFoundError):
        resolve_case("no_such_case_anywhere")


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 50, allow_nan=False), min_size=3, max_size=3),
       st.floats(0.1, 5.0), st.floats(1.0, 300.0))
def test_round_trip_property(demands, susc, cap):
    doc = toy_doc()
    for b, d in zip(doc["buses"], demands):
        b["demand"] = d
    for br in doc["branches"]:
        br["susceptance"] = susc
    doc["generators"][0]["p_max"] = cap + sum(demands)
    case = parse_case(json.dumps(doc))
    assert parse_case(serialize_case(case)) == case
    assert validate_case(case) == []
