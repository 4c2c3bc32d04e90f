import json
import math

import numpy as np
import pytest

from feederplan.mi_solver import solve_relaxation
from feederplan.opt_model import (ExtractionError, ModelOptions, ScenarioConfig, build_model,
                                  extract_solution, fix_binaries, program_to_json)

from conftest import branch, bus, make_case


def _cfg(scenario, **kw):
    kw.setdefault("der_enabled", False)
    kw.setdefault("load_model", "cp")
    return ScenarioConfig(scenario, **kw)


def test_two_bus_counts(two_bus):
    prog, vm = build_model(two_bus, _cfg("SDN"), ModelOptions())
    assert vm.counts() == {"V_sq": 2, "I_sq": 1, "P_flow": 1, "Q_flow": 1, "P_sub": 1,
                           "Q_sub": 1, "P_inj": 2, "Q_inj": 2}
    assert prog.n_vars == len(vm) == 11
    assert prog.integrality == ()
    assert prog.cones.shape == (1, 4)


def test_variable_map_is_bijective(ieee33):
    prog, vm = build_model(ieee33, _cfg("CEDNTR", der_enabled=True), ModelOptions(hours=(0, 1)))
    keys = [vm.key(k) for k in range(len(vm))]
    assert len(set(keys)) == len(vm) == prog.n_vars == sum(vm.counts().values())
    for k, key in enumerate(keys):
        assert vm.index(*key) == k
    assert vm.get("V_sq", "nope", 0) is None


def test_ieee33_sdn_has_no_binaries(ieee33):
    prog, _ = build_model(ieee33, _cfg("SDN"), ModelOptions())
    assert prog.integrality == ()
    # open ties keep their (zeroed) cones: one per branch-hour
    assert len(prog.cones) == 24 * 37


def test_ieee33_cedntr_counts(ieee33):
    assert all(br.switchable for br in ieee33.branches)
    prog, vm = build_model(ieee33, _cfg("CEDNTR"), ModelOptions(hours=(17,)))
    sw = set(vm.block("switch", 17).tolist())
    assert len(prog.integrality) == 37 and set(prog.integrality) == sw
    assert len(prog.cones) == 37
    # counting row: only switch columns with unit coefficients
    rows = [i for i in range(prog.n_eq)
            if set(prog.A[i].indices.tolist()) == sw and np.all(prog.A[i].data == 1.0)]
    assert len(rows) == 1
    assert prog.b[rows[0]] == 32.0
    assert not set(prog.integrality) & set(prog.all_cones().ravel().tolist())


def test_static_mode_shares_switches(ieee33):
    prog, vm = build_model(ieee33, _cfg("SDNTR", topology_mode="static"), ModelOptions(hours=(0, 1, 2)))
    assert len(vm.block("switch", None)) == 37
    assert len(prog.integrality) == 37


def test_battery_binaries(ieee33):
    prog, _ = build_model(ieee33, _cfg("CEDN", der_enabled=True), ModelOptions(hours=(0, 1, 2)))
    assert len(prog.integrality) == 2 * 3 * len(ieee33.batteries)
    kinds = set(prog.meta.binary_kind.values())
    assert kinds == {"charge", "discharge"}
    assert len(prog.meta.battery_pairs) == 3 * len(ieee33.batteries)


def test_config_rules():
    assert ScenarioConfig("sdn", cvr_factor=0.08).theta == 0.0
    assert ScenarioConfig("cedn", cvr_factor=0.08).theta == 0.08
    assert not ScenarioConfig("cedn").reconfigurable
    with pytest.raises(ValueError):
        ScenarioConfig("XYZ")
    with pytest.raises(ValueError):
        ScenarioConfig("SDN", cvr_factor=0.5)
    with pytest.raises(ValueError):
        ScenarioConfig("SDN", topology_mode="weekly")
    with pytest.raises(ValueError):
        ScenarioConfig("SDN", load_model="exp")


def test_hour_options(ieee33):
    with pytest.raises(ValueError):
        ModelOptions(hours=(24,)).hour_list(ieee33)
    with pytest.raises(ValueError):
        ModelOptions(hours=()).hour_list(ieee33)
    with pytest.raises(ValueError):
        ModelOptions(hours=(1, 1)).hour_list(ieee33)


def test_cedn_substation_box(ieee33):
    prog, vm = build_model(ieee33, _cfg("CEDN", cvr_factor=0.05), ModelOptions(hours=(0,)))
    k = vm.index("V_sq", "1", 0)
    assert prog.lb[k] == pytest.approx(0.95 * 0.95**2)
    assert prog.ub[k] == pytest.approx(1.05**2)
    prog2, vm2 = build_model(ieee33, _cfg("SDN"), ModelOptions(hours=(0,)))
    k2 = vm2.index("V_sq", "1", 0)
    assert prog2.lb[k2] == prog2.ub[k2] == pytest.approx(1.05**2)


def test_fix_binaries_empty_and_bad_index(ieee33):
    prog, vm = build_model(ieee33, _cfg("CEDNTR"), ModelOptions(hours=(0,)))
    assert fix_binaries(prog, {}) is prog
    with pytest.raises(ValueError):
        fix_binaries(prog, {int(prog.cones[0, 0]): 1})
    with pytest.raises(ValueError):
        fix_binaries(prog, {prog.integrality[0]: 0.5})
    fixed = fix_binaries(prog, {prog.integrality[0]: 1})
    assert len(fixed.integrality) == len(prog.integrality) - 1


def test_base_assignment_equals_cedn(ieee33):
    cedntr, vm = build_model(ieee33, _cfg("CEDNTR", load_model="ci"), ModelOptions(hours=(17,)))
    cedn, _ = build_model(ieee33, _cfg("CEDN", load_model="ci"), ModelOptions(hours=(17,)))
    base = {int(c): int(vm.key(int(c))[1] in ieee33.base_closed) for c in vm.block("switch", 17)}
    a = solve_relaxation(fix_binaries(cedntr, base))
    b = solve_relaxation(cedn)
    assert a.ok and b.ok
    assert a.objective == pytest.approx(b.objective, rel=1e-7)


def test_cedntr_theta0_fixed_equals_sdn(ieee33):
    # theta = 0 and switches at base: only the substation voltage differs
    cfg = _cfg("CEDNTR", cvr_factor=0.0)
    prog, vm = build_model(ieee33, cfg, ModelOptions(hours=(17,)))
    base = {int(c): int(vm.key(int(c))[1] in ieee33.base_closed) for c in vm.block("switch", 17)}
    sdn, _ = build_model(ieee33, _cfg("SDN"), ModelOptions(hours=(17,)))
    a = solve_relaxation(fix_binaries(prog, base))
    b = solve_relaxation(sdn)
    # CP load: the substation voltage sits at its upper limit in both
    assert a.objective == pytest.approx(b.objective, rel=1e-6)


def test_zero_load_extraction():
    case = make_case([bus("1", "substation"), bus("2")], [branch("a", "1", "2", 0.02, 0.01)])
    cfg = _cfg("SDN")
    prog, vm = build_model(case, cfg, ModelOptions())
    res = solve_relaxation(prog)
    frame = extract_solution(vm, res.primal, case, cfg)
    s = frame.hour(0)
    assert s.v == pytest.approx([1.05, 1.05], abs=1e-7)
    assert s.loss == pytest.approx(0.0, abs=1e-9)
    assert np.max(np.abs(s.cone_slack)) <= 1e-7


def test_extraction_errors(two_bus):
    cfg = _cfg("SDN")
    prog, vm = build_model(two_bus, cfg, ModelOptions())
    with pytest.raises(ExtractionError):
        extract_solution(vm, np.zeros(3), two_bus, cfg)
    z = solve_relaxation(prog).primal.copy()
    z[vm.index("V_sq", "2", 0)] = -1e-3
    with pytest.raises(ExtractionError):
        extract_solution(vm, z, two_bus, cfg)


def test_sdn_loss_recomputed(ieee33):
    cfg = _cfg("SDN")
    prog, vm = build_model(ieee33, cfg, ModelOptions(hours=(17,)))
    res = solve_relaxation(prog)
    frame = extract_solution(vm, res.primal, ieee33, cfg)
    r = np.array([br.r for br in ieee33.branches])
    i_sq = res.primal[vm.block("I_sq", 17)]
    assert frame.hour(17).loss == pytest.approx(float(r @ i_sq), abs=1e-10)
    assert frame.objective == pytest.approx(res.objective, abs=1e-9)


def test_two_bus_relaxation_is_exact(two_bus):
    from feederplan.oracle import Topology, sweep_powerflow

    cfg = _cfg("SDN")
    prog, vm = build_model(two_bus, cfg, ModelOptions())
    res = solve_relaxation(prog)
    s = extract_solution(vm, res.primal, two_bus, cfg).hour(0)
    pf = sweep_powerflow(two_bus, Topology.base(two_bus), 0, 1.05, load_model="CP")
    assert s.loss == pytest.approx(pf.loss, abs=1e-6)
    assert abs(s.cone_slack[0]) <= 1e-6


def test_solved_reconfiguration_invariants(ieee33):
    from feederplan.mi_solver import MIOptions, solve_misocp

    cfg = _cfg("SDNTR", load_model="ci")
    prog, vm = build_model(ieee33, cfg, ModelOptions(hours=(17,)))
    base = {int(c): int(vm.key(int(c))[1] in ieee33.base_closed) for c in vm.block("switch", 17)}
    sol = solve_misocp(prog, MIOptions(node_limit=5, local_search_budget=60), candidates=[base])
    assert sol.has_incumbent
    s = extract_solution(vm, sol.incumbent, ieee33, cfg).hour(17)
    off = ~s.closed
    assert np.all(np.abs(s.p_flow[off]) <= 1e-7)
    assert np.all(np.abs(s.q_flow[off]) <= 1e-7)
    assert np.all(s.i_sq[off] <= 1e-7)
    assert s.closed.sum() == 32
    # closed switchable branches: the disjunctive voltage drop is an equality
    r = np.array([br.r for br in ieee33.branches])
    x = np.array([br.x for br in ieee33.branches])
    f, t = ieee33.branch_ends
    drop = s.v_sq[f] - s.v_sq[t] - 2 * (r * s.p_flow + x * s.q_flow) + (r**2 + x**2) * s.i_sq
    assert np.max(np.abs(drop[s.closed])) <= 1e-8
    lo = np.array([b.v_min for b in ieee33.buses])
    hi = np.array([b.v_max for b in ieee33.buses])
    assert np.all(s.v >= lo - 1e-6) and np.all(s.v <= hi + 1e-6)


def test_program_json(two_bus):
    prog, _ = build_model(two_bus, _cfg("SDN"), ModelOptions())
    doc = json.loads(program_to_json(prog))
    assert doc["n_vars"] == 11
    assert len(doc["bounds"]) == 11
    assert len(doc["cones"]) == 1
    assert doc["integrality"] == []
    assert program_to_json(prog) == program_to_json(prog)


def test_infeasible_build_warning():
    case = make_case([bus("1", "substation", v_setpoint=0.95, v_min=0.9, v_max=1.0),
                      bus("2", p=0.1, v_min=0.97, v_max=1.05)],
                     [branch("a", "1", "2", 0.0, 0.0)])
    prog, _ = build_model(case, _cfg("SDN"), ModelOptions())
    assert prog.meta.warnings
    assert math.isfinite(prog.c.sum())


def test_default_band_covers_cvr_floor(ieee33):
    lo, hi = ModelOptions().band(ieee33, 0.05)
    assert lo == pytest.approx(0.95 * math.sqrt(0.95))
    assert hi == pytest.approx(1.05)
    assert ModelOptions().band(ieee33) == pytest.approx((0.95, 1.05))
    assert ModelOptions(zip_band=(0.9, 1.1)).band(ieee33, 0.05) == (0.9, 1.1)
