import json
import math

import pytest

from feederplan.case_model import builtin_case, load_case

# unit bases: 1 MVA, 1 kV, so ohms are per-unit and 1 p.u. current = 1000/sqrt(3) A
I_BASE_A = 1e3 / math.sqrt(3.0)


def case_doc(buses, branches, profile=(1.0,), **extra):
    doc = {
        "meta": {"name": extra.pop("name", "tiny"), "s_base_mva": 1.0, "v_base_kv": 1.0,
                 "horizon": len(profile)},
        "buses": buses,
        "branches": branches,
        "load_profile": list(profile),
    }
    doc.update(extra)
    return doc


def bus(bid, kind="load", p=0.0, q=0.0, **kw):
    d = {"id": bid, "kind": kind, "v_min": kw.pop("v_min", 0.9), "v_max": kw.pop("v_max", 1.1)}
    if kind == "substation":
        d["v_setpoint"] = kw.pop("v_setpoint", 1.05)
    else:
        d["p_kw"] = p * 1e3
        d["q_kvar"] = q * 1e3
    d.update(kw)
    return d


def branch(bid, f, t, r, x, i_max=2.0, switchable=False, closed=True):
    return {"id": bid, "from": f, "to": t, "r_ohm": r, "x_ohm": x, "i_max_a": i_max * I_BASE_A,
            "switchable": switchable, "closed": closed}


def make_case(*args, **kw):
    return load_case(json.dumps(case_doc(*args, **kw)))


@pytest.fixture
def two_bus():
    """2-bus feeder: r = 0.02, x = 0.01, constant-power load 0.5 + j0.2."""
    return make_case([bus("1", "substation"), bus("2", p=0.5, q=0.2)],
                     [branch("a", "1", "2", 0.02, 0.01)])


@pytest.fixture
def triangle():
    """Substation 1 with loads 2, 3; all three edges switchable, edge c open."""
    return make_case(
        [bus("1", "substation"), bus("2", p=0.3, q=0.1), bus("3", p=0.2, q=0.1)],
        [branch("a", "1", "2", 0.01, 0.01, switchable=True),
         branch("b", "2", "3", 0.03, 0.02, switchable=True),
         branch("c", "1", "3", 0.02, 0.02, switchable=True, closed=False)])


@pytest.fixture(scope="session")
def ieee33():
    return builtin_case("ieee33")


@pytest.fixture(scope="session")
def ieee123():
    return builtin_case("ieee123")
