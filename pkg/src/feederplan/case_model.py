"""Network data model, case-file I/O and the bundled IEEE feeders.

All electrical quantities held by :class:`NetworkCase` are per-unit on the
case's ``(s_base, v_base)``. The JSON case file carries physical units
(kW, kvar, ohm, A, kWh); :func:`load_case` converts on the way in and
:func:`dump_case` converts back.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

__all__ = [
    "BUILTIN_CASES",
    "BatterySpec",
    "BranchSpec",
    "BusSpec",
    "CaseError",
    "CaseParseError",
    "CaseSchemaError",
    "CaseValidationError",
    "GeneratorSpec",
    "NetworkCase",
    "PVUnitSpec",
    "ValidationReport",
    "Violation",
    "ZIPCoefficients",
    "builtin_case",
    "dump_case",
    "load_case",
    "read_case",
    "validate_case",
]

BUILTIN_CASES = ("ieee33", "ieee123")
BUS_KINDS = ("substation", "load", "non-load")
_SUM_TOL = 1e-9


class CaseError(ValueError):
    """Base class for case-file problems."""


class CaseParseError(CaseError):
    """Malformed case text."""


class CaseSchemaError(CaseError):
    """Missing/unknown field or dangling reference."""


class CaseValidationError(CaseError):
    """The case parsed but violates a model invariant."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("; ".join(str(v) for v in report.violations))


@dataclass(frozen=True)
class ZIPCoefficients:
    kz_p: float = 0.0
    ki_p: float = 0.0
    kp_p: float = 1.0
    kz_q: float = 0.0
    ki_q: float = 0.0
    kp_q: float = 1.0

    @classmethod
    def from_model(cls, name: str) -> "ZIPCoefficients":
        """Pure constant-impedance, constant-current or constant-power triple."""
        key = name.upper()
        if key == "CI":
            return cls(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)
        if key == "CC":
            return cls(0.0, 1.0, 0.0, 0.0, 1.0, 0.0)
        if key == "CP":
            return cls(0.0, 0.0, 1.0, 0.0, 0.0, 1.0)
        raise ValueError(f"unknown load model {name!r}")

    @property
    def p_triple(self) -> tuple[float, float, float]:
        return (self.kz_p, self.ki_p, self.kp_p)

    @property
    def q_triple(self) -> tuple[float, float, float]:
        return (self.kz_q, self.ki_q, self.kp_q)

    def as_dict(self) -> dict[str, float]:
        return {
            "kz_p": self.kz_p, "ki_p": self.ki_p, "kp_p": self.kp_p,
            "kz_q": self.kz_q, "ki_q": self.ki_q, "kp_q": self.kp_q,
        }


@dataclass(frozen=True)
class BusSpec:
    id: str
    kind: str
    p_demand: float = 0.0
    q_demand: float = 0.0
    v_min: float = 0.95
    v_max: float = 1.05
    v_setpoint: float | None = None
    zip: ZIPCoefficients | None = None


@dataclass(frozen=True)
class BranchSpec:
    id: str
    from_bus: str
    to_bus: str
    r: float
    x: float
    i_max: float
    switchable: bool = False
    initially_closed: bool = True


@dataclass(frozen=True)
class GeneratorSpec:
    id: str
    bus: str
    p_min: float
    p_max: float
    q_min: float
    q_max: float


@dataclass(frozen=True)
class PVUnitSpec:
    id: str
    bus: str
    available: tuple[float, ...]


@dataclass(frozen=True)
class BatterySpec:
    id: str
    bus: str
    e_cap: float
    soc_min: float
    soc_max: float
    c_duration: float
    d_duration: float
    eta_chg: float
    eta_dchg: float
    e_init: float
    q_rating: float = 0.0

    @property
    def p_chg_max(self) -> float:
        return self.e_cap / self.c_duration

    @property
    def p_dchg_max(self) -> float:
        return self.e_cap / self.d_duration


@dataclass(frozen=True)
class Violation:
    entity: str
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.entity}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    def __bool__(self) -> bool:
        # truthy when the case is valid
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


@dataclass(frozen=True)
class NetworkCase:
    """Immutable feeder description in per-unit."""

    name: str
    buses: tuple[BusSpec, ...]
    branches: tuple[BranchSpec, ...]
    generators: tuple[GeneratorSpec, ...] = ()
    pv_units: tuple[PVUnitSpec, ...] = ()
    batteries: tuple[BatterySpec, ...] = ()
    load_profile: tuple[float, ...] = (1.0,)
    zip_default: ZIPCoefficients = field(default_factory=ZIPCoefficients)
    s_base: float = 1.0
    v_base: float = 1.0
    v_rated: float = 1.0
    note: str = ""

    @property
    def horizon(self) -> int:
        return len(self.load_profile)

    @property
    def n_nodes(self) -> int:
        return len(self.buses)

    @property
    def n_substations(self) -> int:
        return len(self.substations)

    @cached_property
    def bus_index(self) -> dict[str, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    @cached_property
    def branch_index(self) -> dict[str, int]:
        return {br.id: k for k, br in enumerate(self.branches)}

    @cached_property
    def substations(self) -> tuple[int, ...]:
        return tuple(k for k, b in enumerate(self.buses) if b.kind == "substation")

    @cached_property
    def branch_ends(self) -> tuple[np.ndarray, np.ndarray]:
        f = np.array([self.bus_index[br.from_bus] for br in self.branches], dtype=int)
        t = np.array([self.bus_index[br.to_bus] for br in self.branches], dtype=int)
        return f, t

    @property
    def base_closed(self) -> frozenset[str]:
        return frozenset(br.id for br in self.branches if br.initially_closed)

    @property
    def i_base_amps(self) -> float:
        return self.s_base * 1e3 / (math.sqrt(3.0) * self.v_base)

    @property
    def z_base_ohm(self) -> float:
        return self.v_base**2 / self.s_base

    def bus_zip(self, bus: BusSpec, load_model: str | None = None) -> ZIPCoefficients:
        if load_model is not None and load_model.upper() != "CUSTOM":
            return ZIPCoefficients.from_model(load_model)
        return bus.zip if bus.zip is not None else self.zip_default

    def demand(self, hour: int) -> tuple[np.ndarray, np.ndarray]:
        """Nominal (rated-voltage) bus demand for one hour, p.u."""
        m = self.load_profile[hour]
        p = np.array([b.p_demand for b in self.buses]) * m
        q = np.array([b.q_demand for b in self.buses]) * m
        return p, q


# --------------------------------------------------------------------------
# validation


class _DSU:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def _forest_path(adj: dict[int, list[tuple[int, str]]], src: int, dst: int) -> list[str]:
    """Branch ids along the unique forest path src -> dst."""
    prev: dict[int, tuple[int, str] | None] = {src: None}
    stack = [src]
    while stack:
        u = stack.pop()
        if u == dst:
            break
        for v, bid in adj.get(u, ()):
            if v not in prev:
                prev[v] = (u, bid)
                stack.append(v)
    path = []
    node = dst
    while prev.get(node) is not None:
        u, bid = prev[node]
        path.append(bid)
        node = u
    return path[::-1]


def _zip_violations(entity: str, z: ZIPCoefficients) -> list[Violation]:
    out = []
    for tag, triple in (("active", z.p_triple), ("reactive", z.q_triple)):
        if any(c < 0 for c in triple):
            out.append(Violation(entity, "zip_negative", f"{tag} ZIP coefficient negative"))
        if abs(sum(triple) - 1.0) > _SUM_TOL:
            out.append(Violation(entity, "zip_sum",
                                 f"{tag} ZIP coefficients sum ≠ 1 ({sum(triple):.6g})"))
    return out


def validate_case(case: NetworkCase) -> ValidationReport:
    """List every violated invariant; an empty report means the case is valid."""
    out: list[Violation] = []
    T = case.horizon
    ids = [b.id for b in case.buses]
    if len(set(ids)) != len(ids):
        out.append(Violation("buses", "duplicate_bus", "duplicate bus identifiers"))
    if case.n_substations < 1:
        out.append(Violation("buses", "no_substation", "no substation bus"))

    for b in case.buses:
        if b.kind not in BUS_KINDS:
            out.append(Violation(b.id, "bus_kind", f"unknown bus kind {b.kind!r}"))
        if not (0 < b.v_min < b.v_max):
            out.append(Violation(b.id, "voltage_bounds", "voltage bounds inverted"))
        if b.kind == "non-load" and (b.p_demand != 0 or b.q_demand != 0):
            out.append(Violation(b.id, "nonload_demand", "non-load bus has nonzero demand"))
        if b.kind == "substation":
            if b.v_setpoint is None or b.v_setpoint <= 0:
                out.append(Violation(b.id, "setpoint", "substation lacks a positive setpoint"))
        if b.zip is not None:
            out.extend(_zip_violations(b.id, b.zip))
    out.extend(_zip_violations("zip_defaults", case.zip_default))

    if T < 1:
        out.append(Violation("load_profile", "horizon", "empty load profile"))
    if any(m < 0 or not math.isfinite(m) for m in case.load_profile):
        out.append(Violation("load_profile", "profile_negative", "load profile value < 0"))

    seen_pairs: dict[frozenset[str], str] = {}
    valid_refs = True
    for br in case.branches:
        if br.from_bus not in case.bus_index or br.to_bus not in case.bus_index:
            out.append(Violation(br.id, "dangling_bus", "branch references undeclared bus"))
            valid_refs = False
            continue
        if br.from_bus == br.to_bus:
            out.append(Violation(br.id, "self_loop", "from_bus equals to_bus"))
        if br.r < 0 or br.x < 0:
            out.append(Violation(br.id, "impedance", "negative resistance or reactance"))
        if not br.i_max > 0:
            out.append(Violation(br.id, "i_max", "current limit must be positive"))
        pair = frozenset((br.from_bus, br.to_bus))
        if pair in seen_pairs:
            out.append(Violation(br.id, "duplicate_branch",
                                 f"duplicates branch {seen_pairs[pair]}"))
        else:
            seen_pairs[pair] = br.id

    for g in case.generators:
        if g.bus not in case.bus_index:
            out.append(Violation(g.id, "dangling_bus", "generator at undeclared bus"))
        if g.p_min > g.p_max or g.q_min > g.q_max:
            out.append(Violation(g.id, "gen_limits", "generator limits inverted"))
    for pv in case.pv_units:
        if pv.bus not in case.bus_index:
            out.append(Violation(pv.id, "dangling_bus", "PV unit at undeclared bus"))
        if len(pv.available) != T:
            out.append(Violation(pv.id, "pv_profile", "availability length ≠ horizon"))
        if any(a < 0 for a in pv.available):
            out.append(Violation(pv.id, "pv_negative", "PV availability < 0"))
    for bt in case.batteries:
        if bt.bus not in case.bus_index:
            out.append(Violation(bt.id, "dangling_bus", "battery at undeclared bus"))
        if not (0 <= bt.soc_min < bt.soc_max <= 1):
            out.append(Violation(bt.id, "soc_bounds", "SoC bounds must satisfy 0 ≤ min < max ≤ 1"))
        if bt.e_cap <= 0:
            out.append(Violation(bt.id, "capacity", "energy capacity must be positive"))
        elif not (bt.soc_min * bt.e_cap - 1e-12 <= bt.e_init <= bt.soc_max * bt.e_cap + 1e-12):
            out.append(Violation(bt.id, "e_init", "initial energy outside SoC window"))
        if bt.c_duration <= 0 or bt.d_duration <= 0:
            out.append(Violation(bt.id, "duration", "durations must be positive"))
        if not (0 < bt.eta_chg <= 1 and 0 < bt.eta_dchg <= 1):
            out.append(Violation(bt.id, "efficiency", "efficiencies must lie in (0, 1]"))
        if bt.q_rating < 0:
            out.append(Violation(bt.id, "q_rating", "reactive rating must be ≥ 0"))

    if valid_refs and case.n_substations >= 1 and not any(
            v.code == "duplicate_bus" for v in out):
        out.extend(_topology_violations(case))
    return ValidationReport(tuple(out))


def _topology_violations(case: NetworkCase) -> list[Violation]:
    out: list[Violation] = []
    n = case.n_nodes
    idx = case.bus_index
    full = _DSU(n)
    for br in case.branches:
        full.union(idx[br.from_bus], idx[br.to_bus])
    if len({full.find(k) for k in range(n)}) != 1:
        out.append(Violation("branches", "disconnected", "branch graph is not connected"))

    # substations share one virtual root so each tree must hold exactly one
    root = n
    dsu = _DSU(n + 1)
    subs = case.substations
    for s in subs:
        dsu.union(s, root)
    adj: dict[int, list[tuple[int, str]]] = {root: [(s, "<root>") for s in subs]}
    for s in subs:
        adj.setdefault(s, []).append((root, "<root>"))
    closed = 0
    for br in case.branches:
        if not br.initially_closed:
            continue
        closed += 1
        u, v = idx[br.from_bus], idx[br.to_bus]
        if dsu.union(u, v):
            adj.setdefault(u, []).append((v, br.id))
            adj.setdefault(v, []).append((u, br.id))
        else:
            path = _forest_path(adj, u, v)
            loop = [b for b in path if b != "<root>"] + [br.id]
            if "<root>" in path:
                msg = f"closed branches join substations through {', '.join(loop)}"
            else:
                msg = f"closed branches form a cycle: {', '.join(loop)}"
            out.append(Violation(br.id, "cycle", msg))
    unreached = [case.buses[k].id for k in range(n) if dsu.find(k) != dsu.find(root)]
    if unreached:
        out.append(Violation(",".join(unreached[:10]), "unreachable",
                             "bus not reachable from a substation via closed branches"))
    expected = case.n_nodes - case.n_substations
    if closed != expected:
        out.append(Violation("branches", "closed_count",
                             f"{closed} closed branches, expected N_n - N_s = {expected}"))
    return out


# --------------------------------------------------------------------------
# JSON case format

_META_KEYS = {"name", "s_base_mva", "v_base_kv", "horizon", "v_rated_pu", "note"}
_TOP_KEYS = {"meta", "buses", "branches", "generators", "pv", "batteries",
             "zip_defaults", "load_profile"}
_BUS_KEYS = {"id", "kind", "p_kw", "q_kvar", "v_min", "v_max", "v_setpoint", "zip"}
_BRANCH_KEYS = {"id", "from", "to", "r_ohm", "x_ohm", "i_max_a", "switchable", "closed"}
_GEN_KEYS = {"id", "bus", "p_min_kw", "p_max_kw", "q_min_kvar", "q_max_kvar"}
_PV_KEYS = {"id", "bus", "available_kw"}
_BAT_KEYS = {"id", "bus", "e_cap_kwh", "soc_min", "soc_max", "c_duration_h",
             "d_duration_h", "eta_chg", "eta_dchg", "e_init_kwh", "q_rating_kvar"}
_ZIP_KEYS = {"kz_p", "ki_p", "kp_p", "kz_q", "ki_q", "kp_q"}


def _check_keys(obj: Any, allowed: set[str], required: set[str], where: str,
                lenient: bool) -> Mapping[str, Any]:
    if not isinstance(obj, dict):
        raise CaseSchemaError(f"{where}: expected an object")
    missing = required - obj.keys()
    if missing:
        raise CaseSchemaError(f"{where}: missing field(s) {sorted(missing)}")
    unknown = obj.keys() - allowed
    if unknown and not lenient:
        raise CaseSchemaError(f"{where}: unknown field(s) {sorted(unknown)}")
    return obj


def _num(obj: Mapping[str, Any], key: str, where: str, default: float | None = None) -> float:
    if key not in obj:
        if default is None:
            raise CaseSchemaError(f"{where}: missing field {key!r}")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise CaseSchemaError(f"{where}: field {key!r} must be a number")
    return float(val)


def _entity_id(obj: Mapping[str, Any], where: str) -> str:
    val = obj.get("id")
    if not isinstance(val, str) or not val:
        raise CaseSchemaError(f"{where}: 'id' must be a non-empty string")
    return val


def _parse_zip(obj: Any, where: str, lenient: bool) -> ZIPCoefficients:
    _check_keys(obj, _ZIP_KEYS, _ZIP_KEYS, where, lenient)
    return ZIPCoefficients(**{k: _num(obj, k, where) for k in sorted(_ZIP_KEYS)})


def load_case(source: str, *, lenient: bool = False, validate: bool = True) -> NetworkCase:
    """Parse case-file text into a validated per-unit :class:`NetworkCase`."""
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise CaseParseError(f"malformed case text: {exc}") from None
    _check_keys(doc, _TOP_KEYS, {"meta", "buses", "branches", "load_profile"}, "case", lenient)
    meta = _check_keys(doc["meta"], _META_KEYS, {"s_base_mva", "v_base_kv"}, "meta", lenient)
    s_base = _num(meta, "s_base_mva", "meta")
    v_base = _num(meta, "v_base_kv", "meta")
    if s_base <= 0 or v_base <= 0:
        raise CaseSchemaError("meta: bases must be positive")
    kw = 1e3 * s_base
    z_base = v_base**2 / s_base
    i_base = s_base * 1e3 / (math.sqrt(3.0) * v_base)

    profile = doc["load_profile"]
    if not isinstance(profile, list) or not all(
            isinstance(m, (int, float)) and not isinstance(m, bool) for m in profile):
        raise CaseSchemaError("load_profile: expected a list of numbers")
    if "horizon" in meta and int(_num(meta, "horizon", "meta")) != len(profile):
        raise CaseSchemaError("meta: horizon does not match load_profile length")

    zip_default = ZIPCoefficients()
    if "zip_defaults" in doc:
        zip_default = _parse_zip(doc["zip_defaults"], "zip_defaults", lenient)

    buses = []
    for k, raw in enumerate(_list(doc, "buses")):
        where = f"buses[{k}]"
        _check_keys(raw, _BUS_KEYS, {"id", "kind"}, where, lenient)
        bid = _entity_id(raw, where)
        where = f"bus {bid}"
        if raw["kind"] not in BUS_KINDS:
            raise CaseSchemaError(f"{where}: unknown kind {raw['kind']!r}")
        buses.append(BusSpec(
            id=bid,
            kind=raw["kind"],
            p_demand=_num(raw, "p_kw", where, 0.0) / kw,
            q_demand=_num(raw, "q_kvar", where, 0.0) / kw,
            v_min=_num(raw, "v_min", where, 0.95),
            v_max=_num(raw, "v_max", where, 1.05),
            v_setpoint=_num(raw, "v_setpoint", where) if "v_setpoint" in raw else None,
            zip=_parse_zip(raw["zip"], f"{where} zip", lenient) if "zip" in raw else None,
        ))
    bus_ids = {b.id for b in buses}

    def _ref(raw: Mapping[str, Any], key: str, where: str) -> str:
        val = raw.get(key)
        if val not in bus_ids:
            raise CaseSchemaError(f"{where}: unknown bus reference {val!r}")
        return val

    branches = []
    for k, raw in enumerate(_list(doc, "branches")):
        where = f"branches[{k}]"
        _check_keys(raw, _BRANCH_KEYS, {"id", "from", "to", "r_ohm", "x_ohm", "i_max_a"},
                    where, lenient)
        bid = _entity_id(raw, where)
        where = f"branch {bid}"
        branches.append(BranchSpec(
            id=bid,
            from_bus=_ref(raw, "from", where),
            to_bus=_ref(raw, "to", where),
            r=_num(raw, "r_ohm", where) / z_base,
            x=_num(raw, "x_ohm", where) / z_base,
            i_max=_num(raw, "i_max_a", where) / i_base,
            switchable=bool(raw.get("switchable", False)),
            initially_closed=bool(raw.get("closed", True)),
        ))

    generators = []
    for k, raw in enumerate(_list(doc, "generators")):
        where = f"generators[{k}]"
        _check_keys(raw, _GEN_KEYS, _GEN_KEYS, where, lenient)
        gid = _entity_id(raw, where)
        where = f"generator {gid}"
        generators.append(GeneratorSpec(
            id=gid, bus=_ref(raw, "bus", where),
            p_min=_num(raw, "p_min_kw", where) / kw, p_max=_num(raw, "p_max_kw", where) / kw,
            q_min=_num(raw, "q_min_kvar", where) / kw, q_max=_num(raw, "q_max_kvar", where) / kw,
        ))

    pv_units = []
    for k, raw in enumerate(_list(doc, "pv")):
        where = f"pv[{k}]"
        _check_keys(raw, _PV_KEYS, _PV_KEYS, where, lenient)
        pid = _entity_id(raw, where)
        avail = raw["available_kw"]
        if not isinstance(avail, list):
            raise CaseSchemaError(f"pv {pid}: available_kw must be a list")
        pv_units.append(PVUnitSpec(
            id=pid, bus=_ref(raw, "bus", f"pv {pid}"),
            available=tuple(float(a) / kw for a in avail),
        ))

    batteries = []
    for k, raw in enumerate(_list(doc, "batteries")):
        where = f"batteries[{k}]"
        _check_keys(raw, _BAT_KEYS, _BAT_KEYS - {"q_rating_kvar"}, where, lenient)
        bid = _entity_id(raw, where)
        where = f"battery {bid}"
        batteries.append(BatterySpec(
            id=bid, bus=_ref(raw, "bus", where),
            e_cap=_num(raw, "e_cap_kwh", where) / kw,
            soc_min=_num(raw, "soc_min", where), soc_max=_num(raw, "soc_max", where),
            c_duration=_num(raw, "c_duration_h", where),
            d_duration=_num(raw, "d_duration_h", where),
            eta_chg=_num(raw, "eta_chg", where), eta_dchg=_num(raw, "eta_dchg", where),
            e_init=_num(raw, "e_init_kwh", where) / kw,
            q_rating=_num(raw, "q_rating_kvar", where, 0.0) / kw,
        ))

    case = NetworkCase(
        name=str(meta.get("name", "case")),
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(generators),
        pv_units=tuple(pv_units),
        batteries=tuple(batteries),
        load_profile=tuple(float(m) for m in profile),
        zip_default=zip_default,
        s_base=s_base,
        v_base=v_base,
        v_rated=_num(meta, "v_rated_pu", "meta", 1.0),
        note=str(meta.get("note", "")),
    )
    if validate:
        report = validate_case(case)
        if report.violations:
            raise CaseValidationError(report)
    return case


def _list(doc: Mapping[str, Any], key: str) -> list:
    val = doc.get(key, [])
    if not isinstance(val, list):
        raise CaseSchemaError(f"{key}: expected a list")
    return val


def case_to_dict(case: NetworkCase) -> dict[str, Any]:
    """Physical-unit document for ``case`` (inverse of :func:`load_case`)."""
    kw = 1e3 * case.s_base
    z_base = case.z_base_ohm
    i_base = case.i_base_amps
    meta: dict[str, Any] = {
        "name": case.name,
        "s_base_mva": case.s_base,
        "v_base_kv": case.v_base,
        "v_rated_pu": case.v_rated,
        "horizon": case.horizon,
    }
    if case.note:
        meta["note"] = case.note
    buses = []
    for b in case.buses:
        e: dict[str, Any] = {"id": b.id, "kind": b.kind}
        if b.p_demand or b.q_demand:
            e["p_kw"] = b.p_demand * kw
            e["q_kvar"] = b.q_demand * kw
        e["v_min"] = b.v_min
        e["v_max"] = b.v_max
        if b.v_setpoint is not None:
            e["v_setpoint"] = b.v_setpoint
        if b.zip is not None:
            e["zip"] = b.zip.as_dict()
        buses.append(e)
    return {
        "meta": meta,
        "buses": buses,
        "branches": [
            {"id": br.id, "from": br.from_bus, "to": br.to_bus,
             "r_ohm": br.r * z_base, "x_ohm": br.x * z_base, "i_max_a": br.i_max * i_base,
             "switchable": br.switchable, "closed": br.initially_closed}
            for br in case.branches
        ],
        "generators": [
            {"id": g.id, "bus": g.bus, "p_min_kw": g.p_min * kw, "p_max_kw": g.p_max * kw,
             "q_min_kvar": g.q_min * kw, "q_max_kvar": g.q_max * kw}
            for g in case.generators
        ],
        "pv": [
            {"id": p.id, "bus": p.bus, "available_kw": [a * kw for a in p.available]}
            for p in case.pv_units
        ],
        "batteries": [
            {"id": bt.id, "bus": bt.bus, "e_cap_kwh": bt.e_cap * kw,
             "soc_min": bt.soc_min, "soc_max": bt.soc_max,
             "c_duration_h": bt.c_duration, "d_duration_h": bt.d_duration,
             "eta_chg": bt.eta_chg, "eta_dchg": bt.eta_dchg,
             "e_init_kwh": bt.e_init * kw, "q_rating_kvar": bt.q_rating * kw}
            for bt in case.batteries
        ],
        "zip_defaults": case.zip_default.as_dict(),
        "load_profile": list(case.load_profile),
    }


def dump_case(case: NetworkCase, indent: int | None = 1) -> str:
    return json.dumps(case_to_dict(case), indent=indent) + "\n"


def read_case(path: str | Path, *, lenient: bool = False) -> NetworkCase:
    """Load a case from a file path or a built-in name."""
    if str(path) in BUILTIN_CASES:
        return builtin_case(str(path))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CaseParseError(f"cannot read case file {path}: {exc}") from None
    return load_case(text, lenient=lenient)


def builtin_case(name: str) -> NetworkCase:
    """Bundled feeder by name (``ieee33`` or ``ieee123``).

    Both carry a default 24 h load shape and DER/storage placements that are
    documented approximations; see the ``note`` field.
    """
    if name not in BUILTIN_CASES:
        raise KeyError(f"unknown built-in case {name!r}; choose from {BUILTIN_CASES}")
    text = resources.files("feederplan.data").joinpath(f"{name}.json").read_text()
    return load_case(text)


def replace_profile(case: NetworkCase, profile: Sequence[float]) -> NetworkCase:
    """Copy of ``case`` truncated/replaced to a new load profile length."""
    from dataclasses import replace

    T = len(profile)
    pv = tuple(replace(p, available=tuple(p.available[:T])) for p in case.pv_units)
    return replace(case, load_profile=tuple(float(m) for m in profile), pv_units=pv)


def truncate_horizon(case: NetworkCase, hours: int) -> NetworkCase:
    """First ``hours`` hours of the case."""
    if not 0 <= hours <= case.horizon:
        raise ValueError(f"hours must lie in [0, {case.horizon}]")
    return replace_profile(case, case.load_profile[:hours])
