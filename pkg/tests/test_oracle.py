import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from feederplan.case_model import replace_profile
from feederplan.oracle import (EnumerationRefused, NonConvergenceError, Topology, TopologyError,
                               brute_force_best_topology, count_spanning_trees,
                               enumerate_radial_topologies, sweep_powerflow)

from conftest import branch, bus, make_case


def two_bus_closed_form(r, x, p, q, v1):
    """Receiving-end voltage and loss of a single DistFlow branch feeding p + jq."""
    # v1^2 = y + 2(rp + xq) + (r^2 + x^2)(p^2 + q^2)/y,  y = v2^2
    b = 2.0 * (r * p + x * q) - v1**2
    c = (r * r + x * x) * (p * p + q * q)
    y = (-b + math.sqrt(b * b - 4.0 * c)) / 2.0
    return math.sqrt(y), r * (p * p + q * q) / y


def test_two_bus_matches_closed_form(two_bus):
    pf = sweep_powerflow(two_bus, Topology.base(two_bus), 0, 1.05, load_model="CP")
    v2, loss = two_bus_closed_form(0.02, 0.01, 0.5, 0.2, 1.05)
    assert pf.converged
    assert pf.v[1] == pytest.approx(v2, abs=1e-10)
    assert pf.loss == pytest.approx(loss, abs=1e-10)
    assert pf.p_from[0] == pytest.approx(0.5 + loss, abs=1e-10)


def test_zero_demand():
    case = make_case([bus("1", "substation"), bus("2"), bus("3")],
                     [branch("a", "1", "2", 0.01, 0.02), branch("b", "2", "3", 0.01, 0.02)])
    pf = sweep_powerflow(case, Topology.base(case), 0, 1.02)
    assert np.all(pf.v == 1.02)
    assert pf.loss == 0.0
    assert pf.iterations == 1


def test_ieee33_nominal_load_flow(ieee33):
    # widely reproduced base-case loss of the Baran-Wu feeder: about 202.7 kW
    flat = replace_profile(ieee33, [1.0])
    pf = sweep_powerflow(flat, Topology.base(flat), 0, 1.0, load_model="CP")
    assert pf.loss * flat.s_base == pytest.approx(0.2027, rel=0.01)
    assert pf.v.min() == pytest.approx(0.9131, abs=5e-4)


def test_loss_two_ways(ieee33):
    pf = sweep_powerflow(ieee33, Topology.base(ieee33), 17, load_model="CI")
    r = np.array([br.r for br in ieee33.branches])
    assert float(np.sum(r * pf.i_mag**2)) == pytest.approx(pf.loss, abs=1e-12)
    assert pf.loss_balance(np.zeros(ieee33.n_nodes)) == pytest.approx(pf.loss, abs=1e-9)


def test_fixed_injections_and_mapping_forms(two_bus):
    arr = sweep_powerflow(two_bus, Topology.base(two_bus), 0, {"1": 1.0},
                          (np.array([0.0, 0.2]), np.array([0.0, 0.1])), load_model="CP")
    dct = sweep_powerflow(two_bus, Topology.base(two_bus), 0, 1.0, {"2": (0.2, 0.1)},
                          load_model="CP")
    v2, loss = two_bus_closed_form(0.02, 0.01, 0.3, 0.1, 1.0)
    for pf in (arr, dct):
        assert pf.loss == pytest.approx(loss, abs=1e-10)
        assert pf.v[1] == pytest.approx(v2, abs=1e-10)
        assert pf.loss_balance(np.array([0.0, 0.2])) == pytest.approx(pf.loss, abs=1e-9)


def test_exact_zip_in_sweep():
    case = make_case([bus("1", "substation"), bus("2", p=0.5, q=0.2)],
                     [branch("a", "1", "2", 0.02, 0.01)])
    pf = sweep_powerflow(case, Topology.base(case), 0, 1.0, load_model="CI")
    # constant impedance: served load = nominal * v^2
    assert pf.p_load[1] == pytest.approx(0.5 * pf.v[1] ** 2, abs=1e-10)
    assert pf.q_load[1] == pytest.approx(0.2 * pf.v[1] ** 2, abs=1e-10)


def test_topology_errors(triangle):
    with pytest.raises(TopologyError):
        sweep_powerflow(triangle, frozenset({"a", "b", "c"}))
    with pytest.raises(TopologyError):
        sweep_powerflow(triangle, frozenset({"a"}))


def test_non_convergence():
    case = make_case([bus("1", "substation"), bus("2", p=30.0, q=20.0)],
                     [branch("a", "1", "2", 0.05, 0.05)])
    with pytest.raises(NonConvergenceError) as err:
        sweep_powerflow(case, Topology.base(case), 0, 1.0, load_model="CP")
    assert not err.value.result.converged
    res = sweep_powerflow(case, Topology.base(case), 0, 1.0, load_model="CP",
                          raise_on_failure=False)
    assert not res.converged


def test_triangle_enumeration(triangle):
    topos = list(enumerate_radial_topologies(triangle))
    assert len(topos) == 3 == count_spanning_trees(triangle)
    assert {t.closed for t in topos} == {frozenset(p) for p in [("a", "b"), ("a", "c"), ("b", "c")]}


def test_bridge_in_every_topology():
    case = make_case(
        [bus("1", "substation"), bus("2", p=0.1), bus("3", p=0.1), bus("4", p=0.1)],
        [branch("a", "1", "2", 0.01, 0.01, switchable=True),
         branch("b", "2", "3", 0.01, 0.01, switchable=True),
         branch("c", "1", "3", 0.01, 0.01, switchable=True, closed=False),
         branch("bridge", "3", "4", 0.01, 0.01)])
    topos = list(enumerate_radial_topologies(case))
    assert len(topos) == 3 == count_spanning_trees(case)
    assert all("bridge" in t.closed for t in topos)


def test_enumeration_unique_and_complete_on_ieee123(ieee123):
    topos = [t.closed for t in enumerate_radial_topologies(ieee123)]
    assert len(topos) == len(set(topos)) == count_spanning_trees(ieee123) == 353


def test_brute_force_two_bus(two_bus):
    topo, loss = brute_force_best_topology(two_bus, 0, 1.05, load_model="CP")
    assert topo.closed == frozenset({"a"})
    assert loss == pytest.approx(two_bus_closed_form(0.02, 0.01, 0.5, 0.2, 1.05)[1], abs=1e-10)


def test_brute_force_prefers_lossless_path():
    case = make_case(
        [bus("1", "substation"), bus("2", p=0.3, q=0.1), bus("3", p=0.2, q=0.1)],
        [branch("a", "1", "2", 0.0, 0.01, switchable=True),
         branch("b", "2", "3", 0.0, 0.01, switchable=True, closed=False),
         branch("c", "1", "3", 0.05, 0.02, switchable=True)])
    res = brute_force_best_topology(case, 0, 1.0)
    assert res.topology.closed == frozenset({"a", "b"})
    assert res.loss == 0.0
    assert res.total == res.evaluated == 3


def test_brute_force_ceiling(ieee33):
    with pytest.raises(EnumerationRefused):
        brute_force_best_topology(ieee33, 0, ceiling=1000)


def test_ieee33_known_best_topology(ieee33):
    # optimum found by exhaustive enumeration, frozen here
    best = frozenset(ieee33.branch_index) - {"7", "9", "14", "32", "37"}
    cp = sweep_powerflow(ieee33, best, 17, load_model="CP")
    base = sweep_powerflow(ieee33, Topology.base(ieee33), 17, load_model="CP")
    assert cp.loss == pytest.approx(0.0017187459169, rel=1e-9)
    assert base.loss > cp.loss
    ci = sweep_powerflow(ieee33, best, 17, load_model="CI")
    assert ci.loss == pytest.approx(0.0019653876, rel=1e-7)


def _random_topology(case, seed):
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(case.branches))
    parent = list(range(case.n_nodes))

    def find(a):
        while parent[a] != a:
            a = parent[a]
        return a

    subs = case.substations
    for s in subs[1:]:
        parent[s] = subs[0]
    closed = set()
    idx = case.bus_index
    for k in order:
        br = case.branches[k]
        a, b = find(idx[br.from_bus]), find(idx[br.to_bus])
        if a != b:
            parent[a] = b
            closed.add(br.id)
    return frozenset(closed)


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(0, 10**6), st.sampled_from(["CI", "CC", "CP"]), st.integers(0, 23))
def test_loss_identity_on_random_trees(ieee33, seed, model, hour):
    topo = _random_topology(ieee33, seed)
    pf = sweep_powerflow(ieee33, topo, hour, load_model=model, raise_on_failure=False)
    if not pf.converged:
        return
    r = np.array([br.r for br in ieee33.branches])
    assert float(np.sum(r * pf.i_mag**2)) == pytest.approx(pf.loss, abs=1e-9)
    assert pf.loss_balance(np.zeros(ieee33.n_nodes)) == pytest.approx(pf.loss, abs=1e-9)
    assert pf.max_mismatch <= 1e-8
