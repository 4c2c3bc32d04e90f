"""Mixed-integer conic branch-flow model for loss-minimising CVR/NTR planning.

The program is kept in a canonical form that any conic backend can consume:

    minimise    c @ z
    subject to  A @ z == b
                lb <= z <= ub
                P**2 + Q**2 <= I * V        for each (P, Q, I, V) in ``cones``
                z[k] in {0, 1}              for k in ``integrality``

Inequalities other than the cones are written as equalities with a
non-negative slack variable, so the linear part is purely ``A z = b`` plus
boxes.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .case_model import NetworkCase, ZIPCoefficients
from .zip_load import linearize_zip_in_vsq

__all__ = [
    "SCENARIOS",
    "ConicProgram",
    "ExtractionError",
    "HourSolution",
    "ModelOptions",
    "ProgramMeta",
    "RadialGroup",
    "ScenarioConfig",
    "SolutionFrame",
    "VariableMap",
    "build_model",
    "extract_solution",
    "fix_binaries",
    "program_to_json",
]

logger = logging.getLogger(__name__)

SCENARIOS = ("SDN", "SDNTR", "CEDN", "CEDNTR")
LOAD_MODELS = ("CI", "CC", "CP", "CUSTOM")
INF = math.inf


class ExtractionError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "SDN"
    cvr_factor: float = 0.05
    topology_mode: str = "hourly"
    der_enabled: bool = True
    load_model: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "scenario", self.scenario.upper())
        object.__setattr__(self, "load_model", self.load_model.upper())
        object.__setattr__(self, "topology_mode", self.topology_mode.lower())
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.load_model not in LOAD_MODELS:
            raise ValueError(f"unknown load model {self.load_model!r}")
        if self.topology_mode not in ("hourly", "static"):
            raise ValueError(f"unknown topology mode {self.topology_mode!r}")
        if not (0.0 <= self.cvr_factor <= 0.1):
            raise ValueError("cvr_factor must lie in [0, 0.1]")

    @property
    def reconfigurable(self) -> bool:
        return self.scenario in ("SDNTR", "CEDNTR")

    @property
    def cvr_enabled(self) -> bool:
        return self.scenario in ("CEDN", "CEDNTR")

    @property
    def theta(self) -> float:
        """Effective CVR factor (zero for scenarios without CVR)."""
        return self.cvr_factor if self.cvr_enabled else 0.0

    @property
    def zip_override(self) -> str | None:
        return None if self.load_model == "CUSTOM" else self.load_model


@dataclass(frozen=True)
class ModelOptions:
    hours: tuple[int, ...] | None = None
    # voltage band for the constant-current linearisation; None means the
    # scenario's own reachable band (see ``band``)
    zip_band: tuple[float, float] | None = None

    def hour_list(self, case: NetworkCase) -> tuple[int, ...]:
        hours = tuple(range(case.horizon)) if self.hours is None else tuple(self.hours)
        if not hours:
            raise ValueError("at least one hour is required")
        bad = [h for h in hours if not 0 <= h < case.horizon]
        if bad:
            raise ValueError(f"hours outside the case horizon: {bad}")
        if len(set(hours)) != len(hours):
            raise ValueError("hours must be distinct")
        return hours

    def band(self, case: NetworkCase, cvr_factor: float = 0.0) -> tuple[float, float]:
        """The explicit band, else ``[sqrt(1 - cvr) * min v_min, max v_max]``."""
        if self.zip_band is not None:
            return tuple(map(float, self.zip_band))
        lo = min(b.v_min for b in case.buses) * math.sqrt(1.0 - cvr_factor)
        return (lo, max(b.v_max for b in case.buses))


class VariableMap:
    """Lookup ``(quantity, entity, hour) -> column``; ``hour`` is None for
    hour-independent variables (static switches)."""

    def __init__(self):
        self._index: dict[tuple[str, str, int | None], int] = {}
        self._keys: list[tuple[str, str, int | None]] = []
        self._blocks: dict[tuple[str, int | None], np.ndarray] = {}
        self.lb: list[float] = []
        self.ub: list[float] = []

    def add(self, quantity: str, entities: Sequence[str], hour: int | None,
            lb: float | Sequence[float] = -INF, ub: float | Sequence[float] = INF) -> np.ndarray:
        n = len(entities)
        lbs = [lb] * n if np.isscalar(lb) else list(lb)
        ubs = [ub] * n if np.isscalar(ub) else list(ub)
        start = len(self._keys)
        for e, lo, hi in zip(entities, lbs, ubs):
            key = (quantity, e, hour)
            if key in self._index:
                raise KeyError(f"duplicate variable {key}")
            self._index[key] = len(self._keys)
            self._keys.append(key)
            self.lb.append(float(lo))
            self.ub.append(float(hi))
        idx = np.arange(start, start + n)
        bkey = (quantity, hour)
        if bkey in self._blocks:
            self._blocks[bkey] = np.concatenate([self._blocks[bkey], idx])
        else:
            self._blocks[bkey] = idx
        return idx

    def index(self, quantity: str, entity: str, hour: int | None = None) -> int:
        return self._index[(quantity, entity, hour)]

    def get(self, quantity: str, entity: str, hour: int | None = None) -> int | None:
        return self._index.get((quantity, entity, hour))

    def block(self, quantity: str, hour: int | None = None) -> np.ndarray:
        return self._blocks.get((quantity, hour), np.zeros(0, dtype=int))

    def key(self, k: int) -> tuple[str, str, int | None]:
        return self._keys[k]

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for q, _, _ in self._keys:
            out[q] = out.get(q, 0) + 1
        return out

    def quantities(self) -> list[str]:
        return sorted(self.counts())

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, key) -> bool:
        return key in self._index


@dataclass(frozen=True)
class RadialGroup:
    """Switch variables whose joint status must form one radial topology."""

    hours: tuple[int, ...]
    edges: tuple[tuple[int, int, int, str], ...]  # (from, to, column or -1 if fixed closed, branch id)


@dataclass(frozen=True)
class ProgramMeta:
    n_nodes: int
    substations: tuple[int, ...]
    hours: tuple[int, ...]
    radial_groups: tuple[RadialGroup, ...] = ()
    binary_kind: Mapping[int, str] = field(default_factory=dict)
    impact: Mapping[int, float] = field(default_factory=dict)
    battery_pairs: tuple[tuple[int, int], ...] = ()
    binaries: tuple[int, ...] = ()
    warnings: tuple[str, ...] = ()
    big_m: Mapping[tuple[str, int | None], float] = field(default_factory=dict)
    # columns forced to zero whenever the binary is fixed to 0
    links: Mapping[int, tuple[int, ...]] = field(default_factory=dict)


@dataclass(frozen=True)
class ConicProgram:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    cones: np.ndarray  # (m, 4) columns: P, Q, I_sq, V_sq
    integrality: tuple[int, ...]
    meta: ProgramMeta
    # valid rotated cones (P, Q, I_sq, W) with W = v_max**2 * j on switchable
    # branches; implied by ``cones`` at integral j, they tighten relaxations
    aux_cones: np.ndarray = field(default_factory=lambda: np.zeros((0, 4), dtype=int))

    def all_cones(self) -> np.ndarray:
        return np.vstack([self.cones, self.aux_cones]) if len(self.aux_cones) else self.cones

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_eq(self) -> int:
        return self.A.shape[0]


class _Rows:
    def __init__(self):
        self.r: list[int] = []
        self.c: list[int] = []
        self.v: list[float] = []
        self.b: list[float] = []

    def add(self, terms: Iterable[tuple[int, float]], rhs: float) -> int:
        k = len(self.b)
        for col, val in terms:
            if val != 0.0:
                self.r.append(k)
                self.c.append(int(col))
                self.v.append(float(val))
        self.b.append(float(rhs))
        return k

    def matrix(self, n: int) -> sp.csr_matrix:
        a = sp.coo_matrix((self.v, (self.r, self.c)), shape=(len(self.b), n))
        a = a.tocsr()
        a.sum_duplicates()
        return a


def build_model(case: NetworkCase, config: ScenarioConfig,
                options: ModelOptions | None = None) -> tuple[ConicProgram, VariableMap]:
    options = options or ModelOptions()
    hours = options.hour_list(case)
    band = options.band(case, config.theta)
    theta = config.theta
    vm = VariableMap()
    rows = _Rows()
    warnings: list[str] = []
    binary_kind: dict[int, str] = {}
    impact: dict[int, float] = {}
    big_m: dict[tuple[str, int | None], float] = {}
    pairs: list[tuple[int, int]] = []
    links: dict[int, list[int]] = {}
    cones: list[tuple[int, int, int, int]] = []
    aux: list[tuple[int, int, int, int]] = []
    obj: dict[int, float] = {}

    bus_ids = [b.id for b in case.buses]
    br_ids = [br.id for br in case.branches]
    f_idx, t_idx = case.branch_ends
    subs = case.substations
    sub_ids = [bus_ids[s] for s in subs]
    n_target = case.n_nodes - case.n_substations

    # branch status classes
    switch_vars = config.reconfigurable
    variable_br = [k for k, br in enumerate(case.branches) if br.switchable and switch_vars]
    var_set = set(variable_br)
    var_pos = {k: pos for pos, k in enumerate(variable_br)}
    fixed_closed = [k for k, br in enumerate(case.branches)
                    if k not in var_set and br.initially_closed]
    fixed_open = {k for k, br in enumerate(case.branches)
                  if k not in var_set and not br.initially_closed}

    # voltage boxes
    v_lo = np.array([(1.0 - theta) * b.v_min**2 for b in case.buses])
    v_hi = np.array([b.v_max**2 for b in case.buses])
    for s in subs:
        b = case.buses[s]
        if config.cvr_enabled:
            continue
        v_lo[s] = v_hi[s] = b.v_setpoint**2
        if not (b.v_min**2 - 1e-12 <= b.v_setpoint**2 <= b.v_max**2 + 1e-12):
            warnings.append(f"substation {b.id} setpoint lies outside its own voltage band")
    for k in fixed_closed:
        br = case.branches[k]
        i, j = f_idx[k], t_idx[k]
        if br.r == 0 and br.x == 0 and (v_lo[i] > v_hi[j] or v_lo[j] > v_hi[i]):
            warnings.append(f"branch {br.id} has zero impedance but disjoint end voltage bands")
    for s in subs:
        if not config.cvr_enabled:
            for k in range(case.n_nodes):
                if v_lo[k] > v_hi[s] + 1e-12 and case.buses[k].kind != "substation":
                    warnings.append(
                        f"bus {bus_ids[k]} lower voltage bound exceeds the substation setpoint")
                    break

    zips = [case.bus_zip(b, config.zip_override) for b in case.buses]
    lin: dict[ZIPCoefficients, tuple] = {}
    for z in zips:
        if z not in lin:
            lin[z] = linearize_zip_in_vsq(z, case.v_rated, band)

    der = config.der_enabled
    gens = case.generators if der else ()
    pvs = case.pv_units if der else ()
    bats = case.batteries if der else ()

    # hour-independent switch columns
    static = config.topology_mode == "static"
    m_flow = float(n_target)
    switch_cols: dict[int | None, np.ndarray] = {}
    flow_cols: dict[int | None, np.ndarray] = {}
    switch_hours = [None] if static else list(hours)
    if variable_br:
        for h in switch_hours:
            cols = vm.add("switch", [br_ids[k] for k in variable_br], h, 0.0, 1.0)
            switch_cols[h] = cols
            for col, k in zip(cols, variable_br):
                binary_kind[int(col)] = "switch"
        # connectivity flow, one group per switch-hour key
        conn = variable_br + fixed_closed
        for h in switch_hours:
            cols = vm.add("flow", [br_ids[k] for k in conn], h, -m_flow, m_flow)
            flow_cols[h] = cols
            inflow: dict[int, list[tuple[int, float]]] = {k: [] for k in range(case.n_nodes)}
            for col, k in zip(cols, conn):
                inflow[int(t_idx[k])].append((col, 1.0))
                inflow[int(f_idx[k])].append((col, -1.0))
            for n in range(case.n_nodes):
                if n in subs:
                    continue
                rows.add(inflow[n], 1.0)
            for pos, k in enumerate(variable_br):
                fc = cols[pos]
                jc = switch_cols[h][pos]
                s1, s2 = vm.add("slack", [f"flow-lo:{br_ids[k]}", f"flow-hi:{br_ids[k]}"], h, 0.0, INF)
                rows.add([(fc, 1.0), (jc, m_flow), (s1, -1.0)], 0.0)
                rows.add([(jc, m_flow), (fc, -1.0), (s2, -1.0)], 0.0)
                links.setdefault(int(jc), []).extend([int(fc), int(s1), int(s2)])
            # counting constraint, fixed closed branches move to the right-hand side
            rows.add([(c, 1.0) for c in switch_cols[h]], n_target - len(fixed_closed))

    i_max_sq = np.array([br.i_max**2 for br in case.branches])
    prev_energy: dict[str, int] = {}
    for t in hours:
        pd_, qd_ = case.demand(t)
        vsq = vm.add("V_sq", bus_ids, t, v_lo, v_hi)
        i_ub = [0.0 if k in fixed_open else i_max_sq[k] for k in range(len(br_ids))]
        isq = vm.add("I_sq", br_ids, t, 0.0, i_ub)
        pf_lb = [0.0 if k in fixed_open else -INF for k in range(len(br_ids))]
        pf_ub = [0.0 if k in fixed_open else INF for k in range(len(br_ids))]
        pf = vm.add("P_flow", br_ids, t, pf_lb, pf_ub)
        qf = vm.add("Q_flow", br_ids, t, pf_lb, pf_ub)
        psub = vm.add("P_sub", sub_ids, t)
        qsub = vm.add("Q_sub", sub_ids, t)
        pinj = vm.add("P_inj", bus_ids, t)
        qinj = vm.add("Q_inj", bus_ids, t)

        for k, br in enumerate(case.branches):
            obj[int(isq[k])] = obj.get(int(isq[k]), 0.0) + br.r
            cones.append((int(pf[k]), int(qf[k]), int(isq[k]), int(vsq[f_idx[k]])))

        # nodal balance
        bal_p: dict[int, list[tuple[int, float]]] = {n: [(pinj[n], 1.0)] for n in range(case.n_nodes)}
        bal_q: dict[int, list[tuple[int, float]]] = {n: [(qinj[n], 1.0)] for n in range(case.n_nodes)}
        for k, br in enumerate(case.branches):
            if k in fixed_open:
                continue
            i, j = int(f_idx[k]), int(t_idx[k])
            bal_p[j] += [(pf[k], 1.0), (isq[k], -br.r)]
            bal_q[j] += [(qf[k], 1.0), (isq[k], -br.x)]
            bal_p[i].append((pf[k], -1.0))
            bal_q[i].append((qf[k], -1.0))
        for n in range(case.n_nodes):
            rows.add(bal_p[n], 0.0)
            rows.add(bal_q[n], 0.0)

        # injections with affine ZIP load in V_sq
        inj_p: dict[int, list[tuple[int, float]]] = {n: [(pinj[n], 1.0)] for n in range(case.n_nodes)}
        inj_q: dict[int, list[tuple[int, float]]] = {n: [(qinj[n], 1.0)] for n in range(case.n_nodes)}
        rhs_p = np.zeros(case.n_nodes)
        rhs_q = np.zeros(case.n_nodes)
        for n in range(case.n_nodes):
            ap, aq = lin[zips[n]]
            if pd_[n] != 0.0:
                inj_p[n].append((vsq[n], pd_[n] * ap.slope))
                rhs_p[n] -= pd_[n] * ap.intercept
            if qd_[n] != 0.0:
                inj_q[n].append((vsq[n], qd_[n] * aq.slope))
                rhs_q[n] -= qd_[n] * aq.intercept
        for pos, s in enumerate(subs):
            inj_p[s].append((psub[pos], -1.0))
            inj_q[s].append((qsub[pos], -1.0))
        if gens:
            pg = vm.add("P_gen", [g.id for g in gens], t, [g.p_min for g in gens], [g.p_max for g in gens])
            qg = vm.add("Q_gen", [g.id for g in gens], t, [g.q_min for g in gens], [g.q_max for g in gens])
            for pos, g in enumerate(gens):
                n = case.bus_index[g.bus]
                inj_p[n].append((pg[pos], -1.0))
                inj_q[n].append((qg[pos], -1.0))
        if pvs:
            avail = [u.available[t] for u in pvs]
            ids = [u.id for u in pvs]
            ppv = vm.add("P_pv", ids, t, avail, avail)
            pcu = vm.add("P_curt", ids, t, 0.0, INF)
            sl = vm.add("slack", [f"curt:{i}" for i in ids], t, 0.0, INF)
            for pos, u in enumerate(pvs):
                n = case.bus_index[u.bus]
                inj_p[n] += [(ppv[pos], -1.0), (pcu[pos], 1.0)]
                rows.add([(pcu[pos], 1.0), (sl[pos], 1.0), (ppv[pos], -1.0)], 0.0)
        for bat in bats:
            n = case.bus_index[bat.bus]
            e_lo, e_hi = bat.soc_min * bat.e_cap, bat.soc_max * bat.e_cap
            (pc,) = vm.add("P_chg", [bat.id], t, 0.0, INF)
            (pdc,) = vm.add("P_dchg", [bat.id], t, 0.0, INF)
            (qc,) = vm.add("Q_chg", [bat.id], t, 0.0, bat.q_rating)
            (qdc,) = vm.add("Q_dchg", [bat.id], t, 0.0, bat.q_rating)
            (ee,) = vm.add("E_ene", [bat.id], t, e_lo, e_hi)
            (cc,) = vm.add("c", [bat.id], t, 0.0, 1.0)
            (dd,) = vm.add("d", [bat.id], t, 0.0, 1.0)
            binary_kind[int(cc)] = "charge"
            binary_kind[int(dd)] = "discharge"
            pairs.append((int(cc), int(dd)))
            s_c, s_d, s_x = vm.add("slack", [f"chg:{bat.id}", f"dchg:{bat.id}", f"cd:{bat.id}"],
                                   t, 0.0, INF)
            rows.add([(pc, 1.0), (cc, -bat.p_chg_max), (s_c, 1.0)], 0.0)
            rows.add([(pdc, 1.0), (dd, -bat.p_dchg_max), (s_d, 1.0)], 0.0)
            rows.add([(cc, 1.0), (dd, 1.0), (s_x, 1.0)], 1.0)
            links[int(cc)] = [int(pc), int(s_c)]
            links[int(dd)] = [int(pdc), int(s_d)]
            # energy recursion
            terms = [(ee, 1.0), (pc, -bat.eta_chg), (pdc, 1.0 / bat.eta_dchg)]
            if bat.id in prev_energy:
                rows.add(terms + [(prev_energy[bat.id], -1.0)], 0.0)
            else:
                rows.add(terms, bat.e_init)
            prev_energy[bat.id] = ee
            inj_p[n] += [(pdc, -1.0), (pc, 1.0)]
            inj_q[n] += [(qdc, -1.0), (qc, 1.0)]
        for n in range(case.n_nodes):
            rows.add(inj_p[n], rhs_p[n])
            rows.add(inj_q[n], rhs_q[n])

        # voltage drop: exact on fixed closed branches, big-M on switchable
        for k, br in enumerate(case.branches):
            if k in fixed_open:
                continue
            i, j = int(f_idx[k]), int(t_idx[k])
            z2 = br.r**2 + br.x**2
            drop = [(vsq[i], 1.0), (vsq[j], -1.0), (pf[k], -2.0 * br.r),
                    (qf[k], -2.0 * br.x), (isq[k], z2)]
            if k not in var_set:
                rows.add(drop, 0.0)
                continue
            h = None if static else t
            jc = switch_cols[h][var_pos[k]]
            cap = br.i_max * math.sqrt(max(v_hi[i], v_hi[j]))
            m = (max(v_hi[i], v_hi[j]) - min(v_lo[i], v_lo[j])
                 + 2.0 * (br.r + br.x) * cap + z2 * i_max_sq[k])
            big_m[(br.id, t)] = m
            s1, s2, s3 = vm.add("slack", [f"vd-hi:{br.id}", f"vd-lo:{br.id}", f"imax:{br.id}"],
                                t, 0.0, INF)
            rows.add(drop + [(s1, 1.0), (jc, m)], m)
            rows.add([(c, -v) for c, v in drop] + [(s2, 1.0), (jc, m)], m)
            rows.add([(isq[k], 1.0), (jc, -i_max_sq[k]), (s3, 1.0)], 0.0)
            (w,) = vm.add("W_persp", [br.id], t, 0.0, v_hi[i])
            rows.add([(w, 1.0), (jc, -v_hi[i])], 0.0)
            aux.append((int(pf[k]), int(qf[k]), int(isq[k]), int(w)))
            links.setdefault(int(jc), []).extend(
                [int(isq[k]), int(pf[k]), int(qf[k]), int(s3), int(w)])
            impact[int(jc)] = impact.get(int(jc), 0.0) + br.r * i_max_sq[k]

    for bat in bats:
        # terminal energy equals the initial energy
        rows.add([(prev_energy[bat.id], 1.0)], bat.e_init)

    n = len(vm)
    c = np.zeros(n)
    for k, v in obj.items():
        c[k] = v
    groups = []
    for h in switch_hours if variable_br else []:
        edges = [(int(f_idx[k]), int(t_idx[k]), int(col), br_ids[k])
                 for col, k in zip(switch_cols[h], variable_br)]
        edges += [(int(f_idx[k]), int(t_idx[k]), -1, br_ids[k]) for k in fixed_closed]
        groups.append(RadialGroup(tuple(hours) if h is None else (h,), tuple(edges)))
    if not variable_br:
        edges = tuple((int(f_idx[k]), int(t_idx[k]), -1, br_ids[k]) for k in fixed_closed)
        groups.append(RadialGroup(tuple(hours), edges))
    for k in impact:
        impact[k] = float(impact[k])
    for w in warnings:
        logger.warning("build: %s", w)
    binaries = tuple(sorted(binary_kind))
    meta = ProgramMeta(
        n_nodes=case.n_nodes, substations=tuple(subs), hours=tuple(hours),
        radial_groups=tuple(groups), binary_kind=binary_kind, impact=impact,
        battery_pairs=tuple(pairs), binaries=binaries, warnings=tuple(warnings), big_m=big_m,
        links={k: tuple(v) for k, v in links.items()},
    )
    program = ConicProgram(
        c=c, A=rows.matrix(n), b=np.array(rows.b), lb=np.array(vm.lb), ub=np.array(vm.ub),
        cones=np.array(cones, dtype=int).reshape(-1, 4), integrality=binaries, meta=meta,
        aux_cones=np.array(aux, dtype=int).reshape(-1, 4),
    )
    return program, vm


def fix_binaries(program: ConicProgram, assignment: Mapping[int, int | float]) -> ConicProgram:
    """Collapse the boxes of the given binaries to their 0/1 values.

    A binary fixed to 0 also collapses the boxes of the variables it gates
    (current, flows, connectivity flow, battery power and their slacks), which
    only restates what the gating rows already force.
    """
    if not assignment:
        return program
    integ = set(program.integrality)
    bad = [k for k in assignment if k not in integ]
    if bad:
        raise ValueError(f"indices {sorted(bad)[:5]} are not free binaries of this program")
    lb = program.lb.copy()
    ub = program.ub.copy()
    for k, val in assignment.items():
        if val not in (0, 1):
            raise ValueError(f"binary value must be 0 or 1, got {val!r}")
        lb[k] = ub[k] = float(val)
        if val == 0:
            for col in program.meta.links.get(k, ()):
                lb[col] = ub[col] = 0.0
    remaining = tuple(k for k in program.integrality if k not in assignment)
    return replace(program, lb=lb, ub=ub, integrality=remaining)


# --------------------------------------------------------------------------
# solution extraction


@dataclass(frozen=True)
class HourSolution:
    hour: int
    v_sq: np.ndarray
    v: np.ndarray
    i_sq: np.ndarray
    p_flow: np.ndarray
    q_flow: np.ndarray
    closed: np.ndarray
    open_branches: tuple[str, ...]
    cone_slack: np.ndarray
    p_sub: np.ndarray
    q_sub: np.ndarray
    p_inj: np.ndarray
    q_inj: np.ndarray
    p_gen: np.ndarray
    q_gen: np.ndarray
    p_pv: np.ndarray
    p_curt: np.ndarray
    p_chg: np.ndarray
    p_dchg: np.ndarray
    q_chg: np.ndarray
    q_dchg: np.ndarray
    energy: np.ndarray
    charging: np.ndarray
    discharging: np.ndarray
    der_p: np.ndarray  # net DER/storage active injection per bus
    der_q: np.ndarray
    loss: float


@dataclass(frozen=True)
class SolutionFrame:
    hours: tuple[HourSolution, ...]
    objective: float
    scenario: str

    def hour(self, h: int) -> HourSolution:
        for s in self.hours:
            if s.hour == h:
                return s
        raise KeyError(h)


def extract_solution(varmap: VariableMap, raw, case: NetworkCase,
                     config: ScenarioConfig) -> SolutionFrame:
    z = np.asarray(raw, dtype=float)
    if z.shape != (len(varmap),):
        raise ExtractionError(f"solution vector has length {z.size}, expected {len(varmap)}")
    hours = sorted({h for (_, _, h) in varmap._keys if h is not None})
    r = np.array([br.r for br in case.branches])
    der = config.der_enabled
    nb = case.n_nodes
    out = []
    total = 0.0
    for t in hours:
        v_sq = z[varmap.block("V_sq", t)]
        if np.any(v_sq < -1e-9):
            raise ExtractionError(f"negative squared voltage at hour {t} (backend failure)")
        v_sq = np.maximum(v_sq, 0.0)
        i_sq = z[varmap.block("I_sq", t)]
        p = z[varmap.block("P_flow", t)]
        q = z[varmap.block("Q_flow", t)]
        f_idx, _ = case.branch_ends
        slack = i_sq * v_sq[f_idx] - (p**2 + q**2)
        sw_hour = None if config.topology_mode == "static" else t
        closed = np.array([br.initially_closed for br in case.branches])
        sw = varmap.block("switch", sw_hour)
        for col in sw:
            _, bid, _ = varmap.key(int(col))
            closed[case.branch_index[bid]] = z[col] >= 0.5
        open_ids = tuple(br.id for k, br in enumerate(case.branches) if not closed[k])

        def grab(qty):
            return z[varmap.block(qty, t)]

        der_p = np.zeros(nb)
        der_q = np.zeros(nb)
        gens = case.generators if der else ()
        pvs = case.pv_units if der else ()
        bats = case.batteries if der else ()
        p_gen, q_gen = grab("P_gen"), grab("Q_gen")
        for pos, g in enumerate(gens):
            der_p[case.bus_index[g.bus]] += p_gen[pos]
            der_q[case.bus_index[g.bus]] += q_gen[pos]
        p_pv, p_curt = grab("P_pv"), grab("P_curt")
        for pos, u in enumerate(pvs):
            der_p[case.bus_index[u.bus]] += p_pv[pos] - p_curt[pos]
        pc, pdc, qc, qdc = grab("P_chg"), grab("P_dchg"), grab("Q_chg"), grab("Q_dchg")
        for pos, b in enumerate(bats):
            der_p[case.bus_index[b.bus]] += pdc[pos] - pc[pos]
            der_q[case.bus_index[b.bus]] += qdc[pos] - qc[pos]
        loss = float(r @ i_sq)
        total += loss
        out.append(HourSolution(
            hour=t, v_sq=v_sq, v=np.sqrt(v_sq), i_sq=i_sq, p_flow=p, q_flow=q,
            closed=closed, open_branches=open_ids, cone_slack=slack,
            p_sub=grab("P_sub"), q_sub=grab("Q_sub"), p_inj=grab("P_inj"), q_inj=grab("Q_inj"),
            p_gen=p_gen, q_gen=q_gen, p_pv=p_pv, p_curt=p_curt,
            p_chg=pc, p_dchg=pdc, q_chg=qc, q_dchg=qdc, energy=grab("E_ene"),
            charging=grab("c"), discharging=grab("d"), der_p=der_p, der_q=der_q, loss=loss,
        ))
    return SolutionFrame(tuple(out), total, config.scenario)


def program_to_json(program: ConicProgram) -> str:
    """Debug dump: objective, triplet equalities, bounds, cones, integrality."""
    a = program.A.tocoo()

    def num(x):
        return None if not math.isfinite(x) else float(x)

    doc = {
        "n_vars": program.n_vars,
        "objective": [[int(k), float(v)] for k, v in enumerate(program.c) if v != 0.0],
        "equalities": {
            "rows": a.row.tolist(), "cols": a.col.tolist(), "vals": a.data.tolist(),
            "rhs": program.b.tolist(),
        },
        "bounds": [[num(lo), num(hi)] for lo, hi in zip(program.lb, program.ub)],
        "cones": program.cones.tolist(),
        "aux_cones": program.aux_cones.tolist(),
        "integrality": list(program.integrality),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))
