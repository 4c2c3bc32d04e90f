import json
import math
from importlib import resources

import pytest

from feederplan.case_model import (CaseParseError, CaseSchemaError, CaseValidationError,
                                   ZIPCoefficients, builtin_case, case_to_dict, dump_case,
                                   load_case, read_case, replace_profile, truncate_horizon,
                                   validate_case)
from feederplan.oracle import count_spanning_trees

from conftest import branch, bus, case_doc


def _closed_is_forest(case):
    parent = list(range(case.n_nodes))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    idx = case.bus_index
    for br in case.branches:
        if br.initially_closed:
            a, b = find(idx[br.from_bus]), find(idx[br.to_bus])
            if a == b:
                return False
            parent[a] = b
    return True


def test_ieee33_shape(ieee33):
    assert ieee33.n_nodes == 33
    assert ieee33.n_substations == 1
    assert len(ieee33.branches) == 37
    assert sum(not br.initially_closed for br in ieee33.branches) == 5
    assert validate_case(ieee33)
    assert _closed_is_forest(ieee33)
    assert ieee33.horizon == 24


def test_ieee33_open_ties_are_the_standard_ones(ieee33):
    ties = {frozenset((br.from_bus, br.to_bus)) for br in ieee33.branches if not br.initially_closed}
    assert ties == {frozenset(p) for p in [("8", "21"), ("9", "15"), ("12", "22"),
                                           ("18", "33"), ("25", "29")]}


def test_ieee123_validates(ieee123):
    assert validate_case(ieee123)
    closed = sum(br.initially_closed for br in ieee123.branches)
    assert closed == ieee123.n_nodes - ieee123.n_substations
    assert _closed_is_forest(ieee123)


def test_unknown_builtin():
    with pytest.raises(KeyError):
        builtin_case("ieee9999")


def test_dangling_branch_reference():
    doc = case_doc([bus("1", "substation"), bus("2", p=0.1)],
                   [branch("a", "1", "2", 0.01, 0.01), branch("b", "2", "99", 0.01, 0.01)])
    with pytest.raises(CaseSchemaError, match="99"):
        load_case(json.dumps(doc))


def test_closed_cycle_rejected():
    doc = case_doc([bus("1", "substation"), bus("2", p=0.1), bus("3", p=0.1)],
                   [branch("a", "1", "2", 0.01, 0.01), branch("b", "2", "3", 0.01, 0.01),
                    branch("c", "3", "1", 0.01, 0.01)])
    with pytest.raises(CaseValidationError, match="cycle"):
        load_case(json.dumps(doc))


def test_malformed_text():
    with pytest.raises(CaseParseError):
        load_case("{not json")


def test_unknown_key_strict_and_lenient():
    doc = case_doc([bus("1", "substation"), bus("2", p=0.1, colour="red")],
                   [branch("a", "1", "2", 0.01, 0.01)])
    with pytest.raises(CaseSchemaError, match="colour"):
        load_case(json.dumps(doc))
    case = load_case(json.dumps(doc), lenient=True)
    assert case.n_nodes == 2


def test_inverted_voltage_bounds_reported():
    doc = case_doc([bus("1", "substation"), bus("2", p=0.1, v_min=1.1, v_max=0.9)],
                   [branch("a", "1", "2", 0.01, 0.01)])
    case = load_case(json.dumps(doc), validate=False)
    report = validate_case(case)
    assert len(report) == 1
    assert "2" in report.violations[0].entity


def test_zip_sum_violation_reported():
    bad = {"kz_p": 0.5, "ki_p": 0.3, "kp_p": 0.1, "kz_q": 0.0, "ki_q": 0.0, "kp_q": 1.0}
    doc = case_doc([bus("1", "substation"), bus("2", p=0.1, zip=bad)],
                   [branch("a", "1", "2", 0.01, 0.01)])
    case = load_case(json.dumps(doc), validate=False)
    report = validate_case(case)
    assert len(report) == 1


def test_closed_count_reported_for_disconnected_bus():
    doc = case_doc([bus("1", "substation"), bus("2", p=0.1), bus("3", p=0.1)],
                   [branch("a", "1", "2", 0.01, 0.01), branch("b", "2", "3", 0.01, 0.01,
                                                            switchable=True, closed=False)])
    case = load_case(json.dumps(doc), validate=False)
    report = validate_case(case)
    assert not report
    assert "unreachable" in report.codes()


@pytest.mark.parametrize("name", ["ieee33", "ieee123"])
def test_round_trip(name):
    case = builtin_case(name)
    again = load_case(dump_case(case))
    assert again == case


def test_per_unit_round_trip(ieee33):
    doc = json.loads(resources.files("feederplan.data").joinpath("ieee33.json").read_text())
    back = case_to_dict(ieee33)
    for raw, out in zip(doc["branches"], back["branches"]):
        for key in ("r_ohm", "x_ohm", "i_max_a"):
            assert math.isclose(raw[key], out[key], rel_tol=1e-12)
    for raw, out in zip(doc["buses"], back["buses"]):
        for key in ("p_kw", "q_kvar"):
            if key in raw:
                assert math.isclose(raw[key], out[key], rel_tol=1e-12)


def test_zip_models():
    assert ZIPCoefficients.from_model("ci").p_triple == (1.0, 0.0, 0.0)
    assert ZIPCoefficients.from_model("CC").q_triple == (0.0, 1.0, 0.0)
    assert ZIPCoefficients.from_model("cp").p_triple == (0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        ZIPCoefficients.from_model("exp")


def test_bus_zip_override(ieee33):
    b = ieee33.buses[5]
    assert ieee33.bus_zip(b, "CI") == ZIPCoefficients.from_model("CI")
    assert ieee33.bus_zip(b, "custom") == ieee33.zip_default


def test_demand_scales_with_profile(ieee33):
    p0, _ = ieee33.demand(0)
    nominal = sum(b.p_demand for b in ieee33.buses)
    assert math.isclose(p0.sum(), nominal * ieee33.load_profile[0], rel_tol=1e-12)
    # nominal Baran-Wu feeder load: 3715 kW / 2300 kvar
    assert math.isclose(nominal * ieee33.s_base, 3.715, rel_tol=1e-9)
    assert math.isclose(sum(b.q_demand for b in ieee33.buses) * ieee33.s_base, 2.3, rel_tol=1e-9)


def test_truncate_and_replace(ieee33):
    short = truncate_horizon(ieee33, 3)
    assert short.horizon == 3
    assert all(len(p.available) == 3 for p in short.pv_units)
    flat = replace_profile(ieee33, [1.0])
    assert flat.horizon == 1
    with pytest.raises(ValueError):
        truncate_horizon(ieee33, 30)


def test_read_case_file(tmp_path, two_bus):
    path = tmp_path / "c.json"
    path.write_text(dump_case(two_bus))
    assert read_case(path) == two_bus
    assert read_case("ieee33").n_nodes == 33
    with pytest.raises(CaseParseError):
        read_case(tmp_path / "missing.json")


def test_matrix_tree_counts(ieee33, ieee123):
    # 50751 spanning trees is the standard count for the 33-bus meshed graph
    assert count_spanning_trees(ieee33) == 50751
    assert count_spanning_trees(ieee123) == 353


def test_battery_limits(ieee33):
    bt = ieee33.batteries[0]
    assert math.isclose(bt.p_chg_max, bt.e_cap / bt.c_duration)
    assert math.isclose(bt.p_dchg_max, bt.e_cap / bt.d_duration)
    assert bt.soc_min * bt.e_cap <= bt.e_init <= bt.soc_max * bt.e_cap


def test_two_bus_units(two_bus):
    assert math.isclose(two_bus.branches[0].r, 0.02)
    assert math.isclose(two_bus.branches[0].i_max, 2.0)
    assert math.isclose(two_bus.buses[1].p_demand, 0.5)


def test_case_is_immutable(two_bus):
    with pytest.raises(Exception):
        two_bus.name = "x"
