"""Scenario orchestration, metrics, reports and the ``feederplan`` CLI."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .case_model import CaseError, NetworkCase, builtin_case, read_case
from .mi_solver import MIOptions, ViolationReport, check_feasibility, solve_misocp
from .opt_model import (ConicProgram, ModelOptions, ScenarioConfig, SolutionFrame, VariableMap,
                        build_model, extract_solution)
from .oracle import (EnumerationRefused, Topology, TopologyError, brute_force_best_topology,
                     sweep_powerflow)

__all__ = [
    "ComparisonTable",
    "HourRecord",
    "RunOptions",
    "ScenarioFailure",
    "ScheduleReport",
    "compare_scenarios",
    "emit_report",
    "format_open_lines",
    "main",
    "run_scenario",
]

logger = logging.getLogger(__name__)

NESTING_TOL = 1e-6
# (wider, narrower): the first scenario's feasible set contains the second's
NESTED_PAIRS = (("SDNTR", "SDN"), ("CEDN", "SDN"), ("CEDNTR", "SDNTR"), ("CEDNTR", "CEDN"))


class ScenarioFailure(RuntimeError):
    """A block of hours produced no acceptable solution."""

    def __init__(self, hours: Sequence[int], status: str, report: ViolationReport | None = None):
        self.hours = tuple(hours)
        self.status = status
        self.report = report
        detail = "" if report is None else "; ".join(str(v) for v in report.violations[:5])
        super().__init__(f"hours {list(self.hours)}: {status}{': ' + detail if detail else ''}")


@dataclass(frozen=True)
class RunOptions:
    hours: tuple[int, ...] | None = None
    rel_gap_tol: float = 1e-4
    node_limit: int = 2000
    time_limit: float | None = None
    backend: str = "clarabel"
    zip_band: tuple[float, float] | None = None
    local_search_budget: int = 200
    check_tol: float = 1e-5
    exactness_tol: float = 5e-3

    def mi_options(self) -> MIOptions:
        return MIOptions(rel_gap_tol=self.rel_gap_tol, node_limit=self.node_limit,
                         time_limit=self.time_limit, backend=self.backend,
                         local_search_budget=self.local_search_budget)


@dataclass(frozen=True)
class HourRecord:
    hour: int
    loss_mw: float
    load_mw: float
    v_min: float
    v_max: float
    substation_v: tuple[float, ...]
    open_lines: tuple[str, ...]
    battery_mwh: Mapping[str, float]
    loading_pct: tuple[float, ...]
    max_cone_slack: float
    oracle_loss_mw: float
    oracle_rel_diff: float
    exact: bool


@dataclass(frozen=True)
class BlockRecord:
    hours: tuple[int, ...]
    status: str
    objective: float
    bound: float
    rel_gap: float
    node_count: int


@dataclass(frozen=True)
class ScheduleReport:
    case_name: str
    config: ScenarioConfig
    branch_ids: tuple[str, ...]
    hours: tuple[HourRecord, ...]
    blocks: tuple[BlockRecord, ...]
    s_base: float
    solutions: tuple[tuple[tuple[int, ...], tuple[float, ...]], ...] = field(default=(), repr=False)

    @property
    def total_loss_mwh(self) -> float:
        return float(sum(h.loss_mw for h in self.hours))

    @property
    def total_load_mwh(self) -> float:
        return float(sum(h.load_mw for h in self.hours))

    @property
    def loss_pct(self) -> float:
        load = self.total_load_mwh
        return 100.0 * self.total_loss_mwh / load if load > 0 else 0.0

    @property
    def objective_pu(self) -> float:
        return self.total_loss_mwh / self.s_base

    @property
    def max_loading_pct(self) -> float:
        return max((max(h.loading_pct, default=0.0) for h in self.hours), default=0.0)

    def topology(self, hour: int) -> frozenset[str]:
        for h in self.hours:
            if h.hour == hour:
                return frozenset(self.branch_ids) - frozenset(h.open_lines)
        raise KeyError(hour)


def _natural(s: str):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", s)]


def format_open_lines(ids: Sequence[str]) -> str:
    """``"8, 28, 29, 33"`` style listing, numerically ordered."""
    return ", ".join(sorted(ids, key=_natural))


def hour_blocks(case: NetworkCase, config: ScenarioConfig, hours: Sequence[int]) -> list[tuple[int, ...]]:
    """Independent solve blocks: batteries or a shared topology couple the hours."""
    coupled = (config.der_enabled and bool(case.batteries)) or \
        (config.topology_mode == "static" and config.reconfigurable)
    return [tuple(hours)] if coupled else [(h,) for h in hours]


def _assignment(program: ConicProgram, vm: VariableMap, case: NetworkCase,
                config: ScenarioConfig, closed_by_hour: Mapping[int, frozenset[str]]) -> dict[int, int]:
    out: dict[int, int] = {}
    keys = [None] if config.topology_mode == "static" else list(program.meta.hours)
    for h in keys:
        ref = closed_by_hour.get(program.meta.hours[0] if h is None else h)
        if ref is None:
            continue
        for col in vm.block("switch", h):
            bid = vm.key(int(col))[1]
            out[int(col)] = 1 if bid in ref else 0
    return out


def _solve_block(case, config, block, opts: RunOptions, warm: Sequence[Mapping[int, frozenset[str]]]):
    program, vm = build_model(case, config, ModelOptions(hours=block, zip_band=opts.zip_band))
    candidates = []
    if config.reconfigurable:
        base = {h: case.base_closed for h in block}
        for topo in [base, *warm]:
            cand = _assignment(program, vm, case, config, topo)
            if cand:
                candidates.append(cand)
    sol = solve_misocp(program, opts.mi_options(), candidates=candidates)
    if not sol.has_incumbent:
        raise ScenarioFailure(block, sol.status)
    report = check_feasibility(sol, program, opts.check_tol)
    if not report:
        raise ScenarioFailure(block, "infeasible", report)
    frame = extract_solution(vm, sol.incumbent, case, config)
    block_rec = BlockRecord(tuple(block), sol.status, sol.objective, sol.bound, sol.rel_gap,
                            sol.node_count)
    return frame, block_rec, tuple(float(x) for x in sol.incumbent)


def _hour_record(case: NetworkCase, config: ScenarioConfig, frame: SolutionFrame, hour: int,
                 opts: RunOptions, band) -> HourRecord:
    from .zip_load import linearize_zip_in_vsq

    s = frame.hour(hour)
    sb = case.s_base
    pd_, _ = case.demand(hour)
    load = 0.0
    for k, b in enumerate(case.buses):
        if pd_[k] == 0.0:
            continue
        ap, _ = linearize_zip_in_vsq(case.bus_zip(b, config.zip_override), case.v_rated, band)
        load += pd_[k] * float(ap(s.v_sq[k]))
    load_bus = [k for k, b in enumerate(case.buses) if b.kind != "substation"]
    i_max = np.array([br.i_max for br in case.branches])
    loading = 100.0 * np.sqrt(np.maximum(s.i_sq, 0.0)) / i_max
    closed = frozenset(br.id for k, br in enumerate(case.branches) if s.closed[k])
    slack = float(np.max(np.abs(s.cone_slack[s.closed]), initial=0.0))
    sub_v = {case.buses[k].id: float(s.v[k]) for k in case.substations}
    try:
        pf = sweep_powerflow(case, Topology(closed), hour, sub_v, (s.der_p, s.der_q),
                             load_model=config.zip_override)
        oracle = pf.loss
        rel = abs(oracle - s.loss) / max(abs(oracle), 1e-12)
    except (TopologyError, RuntimeError) as exc:
        logger.warning("oracle check failed at hour %d: %s", hour, exc)
        oracle, rel = math.nan, math.inf
    exact = rel <= opts.exactness_tol and slack <= 1e-5
    if not exact:
        logger.warning("hour %d: relaxation inexact (cone slack %.2e, oracle diff %.2e)",
                       hour, slack, rel)
    bats = case.batteries if config.der_enabled else ()
    return HourRecord(
        hour=hour, loss_mw=s.loss * sb, load_mw=load * sb,
        v_min=float(s.v[load_bus].min()) if load_bus else float(s.v.min()),
        v_max=float(s.v[load_bus].max()) if load_bus else float(s.v.max()),
        substation_v=tuple(sub_v.values()),
        open_lines=tuple(sorted(s.open_branches, key=_natural)),
        battery_mwh={b.id: float(s.energy[pos]) * sb for pos, b in enumerate(bats)},
        loading_pct=tuple(float(x) for x in loading), max_cone_slack=slack,
        oracle_loss_mw=oracle * sb, oracle_rel_diff=rel, exact=exact,
    )


def run_scenario(case: NetworkCase, config: ScenarioConfig, opts: RunOptions | None = None, *,
                 warm_start: Sequence[Mapping[int, frozenset[str]]] = ()) -> ScheduleReport:
    """Solve one scenario over the horizon and assemble its metrics.

    ``warm_start`` holds topologies (hour -> closed branch ids) offered to the
    search as extra incumbent candidates.
    """
    opts = opts or RunOptions()
    hours = ModelOptions(hours=opts.hours).hour_list(case)
    band = ModelOptions(zip_band=opts.zip_band).band(case, config.theta)
    records: list[HourRecord] = []
    blocks: list[BlockRecord] = []
    raw = []
    for block in hour_blocks(case, config, hours):
        frame, brec, x = _solve_block(case, config, block, opts, warm_start)
        blocks.append(brec)
        raw.append((tuple(block), x))
        for h in block:
            records.append(_hour_record(case, config, frame, h, opts, band))
    return ScheduleReport(case.name, config, tuple(br.id for br in case.branches),
                          tuple(records), tuple(blocks), case.s_base, tuple(raw))


# --------------------------------------------------------------------------
# comparisons


@dataclass(frozen=True)
class ComparisonRow:
    scenario: str
    loss_mwh: float
    load_mwh: float
    loss_pct: float
    reduction_mwh: float
    reduction_pct: float
    max_loading_pct: float


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[ComparisonRow, ...]
    reports: tuple[ScheduleReport, ...]
    nesting_violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.nesting_violations

    def row(self, scenario: str) -> ComparisonRow:
        for r in self.rows:
            if r.scenario == scenario:
                return r
        raise KeyError(scenario)


def compare_scenarios(case: NetworkCase, scenarios: Sequence[ScenarioConfig | str],
                      opts: RunOptions | None = None, *,
                      template: ScenarioConfig | None = None) -> ComparisonTable:
    """Run each scenario on identical inputs; the first entry is the baseline."""
    if len(scenarios) < 2:
        raise ValueError("compare_scenarios needs at least two scenarios")
    template = template or ScenarioConfig()
    configs = [replace(template, scenario=s) if isinstance(s, str) else s for s in scenarios]
    opts = opts or RunOptions()
    if opts.zip_band is None:
        # one linearisation for every scenario keeps their feasible sets nested
        bands = [ModelOptions().band(case, cfg.theta) for cfg in configs]
        opts = replace(opts, zip_band=(min(b[0] for b in bands), max(b[1] for b in bands)))
    reports: list[ScheduleReport] = []
    topologies: dict[str, dict[int, frozenset[str]]] = {}
    for cfg in configs:
        warm = []
        if cfg.scenario == "CEDNTR" and "SDNTR" in topologies:
            warm.append(topologies["SDNTR"])
        rep = run_scenario(case, cfg, opts, warm_start=warm)
        reports.append(rep)
        topologies.setdefault(cfg.scenario, {h.hour: rep.topology(h.hour) for h in rep.hours})
    base = reports[0]
    rows = []
    for cfg, rep in zip(configs, reports):
        red = base.total_loss_mwh - rep.total_loss_mwh
        pct = 100.0 * red / base.total_loss_mwh if base.total_loss_mwh > 0 else 0.0
        rows.append(ComparisonRow(cfg.scenario, rep.total_loss_mwh, rep.total_load_mwh,
                                  rep.loss_pct, red, pct, rep.max_loading_pct))
    violations = []
    by_name: dict[str, ScheduleReport] = {}
    for rep in reports:
        by_name.setdefault(rep.config.scenario, rep)
    for wide, narrow in NESTED_PAIRS:
        if wide in by_name and narrow in by_name:
            lw, ln = by_name[wide].objective_pu, by_name[narrow].objective_pu
            if lw > ln + NESTING_TOL:
                violations.append(f"loss({wide}) = {lw:.9g} exceeds loss({narrow}) = {ln:.9g}")
    for v in violations:
        logger.error("solver-quality failure: %s", v)
    return ComparisonTable(tuple(rows), tuple(reports), tuple(violations))


# --------------------------------------------------------------------------
# emission


def _g(x: float) -> float | None:
    if x is None or not math.isfinite(x):
        return None
    return float(f"{x:.6g}")


def _fmt(x: float) -> str:
    return "nan" if x is None or not math.isfinite(x) else f"{x:.6g}"


def report_to_dict(report: ScheduleReport) -> dict:
    cfg = report.config
    return {
        "case": report.case_name,
        "scenario": {
            "scenario": cfg.scenario, "cvr_factor": cfg.cvr_factor,
            "topology_mode": cfg.topology_mode, "der_enabled": cfg.der_enabled,
            "load_model": cfg.load_model,
        },
        "summary": {
            "total_load_mwh": _g(report.total_load_mwh),
            "total_loss_mwh": _g(report.total_loss_mwh),
            "loss_pct": _g(report.loss_pct),
            "max_loading_pct": _g(report.max_loading_pct),
        },
        "blocks": [
            {"hours": list(b.hours), "status": b.status, "objective_pu": _g(b.objective),
             "bound_pu": _g(b.bound), "rel_gap": _g(b.rel_gap), "nodes": b.node_count}
            for b in report.blocks
        ],
        "hours": [
            {
                "hour": h.hour, "loss_mw": _g(h.loss_mw), "load_mw": _g(h.load_mw),
                "v_min": round(h.v_min, 6), "v_max": round(h.v_max, 6),
                "substation_v": [round(v, 6) for v in h.substation_v],
                "open_lines": format_open_lines(h.open_lines),
                "battery_mwh": {k: _g(v) for k, v in sorted(h.battery_mwh.items())},
                "max_cone_slack": _g(h.max_cone_slack),
                "oracle_loss_mw": _g(h.oracle_loss_mw),
                "oracle_rel_diff": _g(h.oracle_rel_diff),
                "exact": h.exact,
            }
            for h in report.hours
        ],
    }


def comparison_to_dict(table: ComparisonTable) -> dict:
    return {
        "baseline": table.rows[0].scenario,
        "rows": [
            {"scenario": r.scenario, "loss_mwh": _g(r.loss_mwh), "load_mwh": _g(r.load_mwh),
             "loss_pct": _g(r.loss_pct), "reduction_mwh": _g(r.reduction_mwh),
             "reduction_pct": _g(r.reduction_pct), "max_loading_pct": _g(r.max_loading_pct)}
            for r in table.rows
        ],
        "nesting_violations": list(table.nesting_violations),
        "reports": [report_to_dict(r) for r in table.reports],
    }


HOUR_COLUMNS = ("hour", "loss_mw", "load_mw", "v_min", "v_max", "open_lines", "battery_mwh")


def _hour_csv(report: ScheduleReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HOUR_COLUMNS)
    for h in report.hours:
        bat = ";".join(f"{k}={_fmt(v)}" for k, v in sorted(h.battery_mwh.items()))
        w.writerow([h.hour, _fmt(h.loss_mw), _fmt(h.load_mw), f"{h.v_min:.6f}", f"{h.v_max:.6f}",
                    format_open_lines(h.open_lines), bat])
    return buf.getvalue()


def _heatmap_csv(report: ScheduleReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["branch"] + [f"h{h.hour}" for h in report.hours])
    if report.hours:
        for k, bid in enumerate(report.branch_ids):
            w.writerow([bid] + [_fmt(h.loading_pct[k]) for h in report.hours])
    return buf.getvalue()


def _comparison_csv(table: ComparisonTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "load_mwh", "loss_mwh", "loss_pct", "reduction_mwh", "reduction_pct",
                "max_loading_pct"])
    for r in table.rows:
        w.writerow([r.scenario, _fmt(r.load_mwh), _fmt(r.loss_mwh), _fmt(r.loss_pct),
                    _fmt(r.reduction_mwh), _fmt(r.reduction_pct), _fmt(r.max_loading_pct)])
    return buf.getvalue()


def render_report(report: ScheduleReport | ComparisonTable, fmt: str) -> str:
    fmt = fmt.lower()
    if isinstance(report, ComparisonTable):
        if fmt == "json":
            return json.dumps(comparison_to_dict(report), sort_keys=True, indent=1) + "\n"
        if fmt == "csv":
            return _comparison_csv(report)
        if fmt == "heatmap-csv":
            return "".join(_heatmap_csv(r) for r in report.reports)
    else:
        if fmt == "json":
            return json.dumps(report_to_dict(report), sort_keys=True, indent=1) + "\n"
        if fmt == "csv":
            return _hour_csv(report)
        if fmt == "heatmap-csv":
            return _heatmap_csv(report)
    raise ValueError(f"unknown report format {fmt!r}")


_EXT = {"json": "json", "csv": "csv", "heatmap-csv": "heatmap.csv"}


def emit_report(report: ScheduleReport | ComparisonTable, fmt: str, destination) -> Path:
    """Write the report; ``destination`` is a file path or an existing directory."""
    text = render_report(report, fmt)
    dest = Path(destination)
    if dest.is_dir():
        if isinstance(report, ComparisonTable):
            stem = f"{report.reports[0].case_name}_compare"
        else:
            stem = f"{report.case_name}_{report.config.scenario.lower()}"
        dest = dest / f"{stem}.{_EXT[fmt.lower()]}"
    try:
        with open(dest, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {dest}: {exc}") from exc
    return dest


def solution_to_dict(report: ScheduleReport, case_ref: str, opts: RunOptions) -> dict:
    cfg = report.config
    return {
        "case": case_ref,
        "scenario": {"scenario": cfg.scenario, "cvr_factor": cfg.cvr_factor,
                     "topology_mode": cfg.topology_mode, "der_enabled": cfg.der_enabled,
                     "load_model": cfg.load_model},
        "zip_band": list(opts.zip_band) if opts.zip_band else None,
        "blocks": [{"hours": list(h), "primal": [repr(v) for v in x]} for h, x in report.solutions],
    }


def verify_solution(doc: Mapping, *, lenient: bool = False, tol: float = 1e-5,
                    exactness_tol: float = 5e-3) -> tuple[bool, list[str]]:
    """Rebuild the program for a saved solution; re-check constraints and physics."""
    case = _load_case_ref(doc["case"], lenient)
    cfg = ScenarioConfig(**doc["scenario"])
    band = tuple(doc["zip_band"]) if doc.get("zip_band") else None
    messages: list[str] = []
    ok = True
    for block in doc["blocks"]:
        hours = tuple(block["hours"])
        program, vm = build_model(case, cfg, ModelOptions(hours=hours, zip_band=band))
        x = np.array([float(v) for v in block["primal"]])
        if x.size != program.n_vars:
            return False, [f"hours {list(hours)}: vector length {x.size} != {program.n_vars}"]
        rep = check_feasibility(x, program, tol)
        if not rep:
            ok = False
            messages += [f"hours {list(hours)}: {v}" for v in rep.violations[:20]]
        frame = extract_solution(vm, x, case, cfg)
        for s in frame.hours:
            closed = frozenset(br.id for k, br in enumerate(case.branches) if s.closed[k])
            sub_v = {case.buses[k].id: float(s.v[k]) for k in case.substations}
            try:
                pf = sweep_powerflow(case, Topology(closed), s.hour, sub_v, (s.der_p, s.der_q),
                                     load_model=cfg.zip_override)
            except (TopologyError, RuntimeError) as exc:
                ok = False
                messages.append(f"hour {s.hour}: oracle failed: {exc}")
                continue
            rel = abs(pf.loss - s.loss) / max(pf.loss, 1e-12)
            flag = "ok" if rel <= exactness_tol else "INEXACT"
            messages.append(f"hour {s.hour}: loss {s.loss:.6g} oracle {pf.loss:.6g} "
                            f"rel {rel:.2e} {flag}")
            if rel > exactness_tol:
                ok = False
    return ok, messages


# --------------------------------------------------------------------------
# CLI


EXIT_OK, EXIT_INFEASIBLE, EXIT_NO_INCUMBENT, EXIT_INPUT = 0, 2, 3, 4


def _load_case_ref(ref: str, lenient: bool = False) -> NetworkCase:
    if ref in ("ieee33", "ieee123"):
        return builtin_case(ref)
    return read_case(ref, lenient=lenient)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case", required=True, help="case file path, or ieee33 / ieee123")
    p.add_argument("--cvr", type=float, default=0.05, help="CVR factor for CEDN scenarios")
    p.add_argument("--hours", type=int, default=None, help="solve the first T hours")
    p.add_argument("--topology-mode", choices=["hourly", "static"], default="hourly")
    p.add_argument("--load-model", choices=["ci", "cc", "cp", "custom"], default="custom")
    p.add_argument("--der", choices=["on", "off"], default="on")
    p.add_argument("--gap", type=float, default=1e-4, help="relative optimality gap")
    p.add_argument("--node-limit", type=int, default=2000)
    p.add_argument("--time-limit", type=float, default=None,
                   help="seconds per block (makes results timing dependent)")
    p.add_argument("--backend", default="clarabel")
    p.add_argument("--out", default=None, help="output directory (stdout if omitted)")
    p.add_argument("--format", choices=["json", "csv", "heatmap-csv"], default="json")
    p.add_argument("--lenient", action="store_true", help="ignore unknown keys in case files")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="feederplan",
                                 description="Day-ahead loss-minimising CVR / reconfiguration planner")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("plan", help="solve one scenario")
    _add_common(p)
    p.add_argument("--scenario", choices=["sdn", "sdntr", "cedn", "cedntr"], default="sdn")
    p.add_argument("--save-solution", default=None, help="write the raw solution for `verify`")
    c = sub.add_parser("compare", help="solve several scenarios against the first")
    _add_common(c)
    c.add_argument("--scenarios", default="sdn,sdntr,cedn,cedntr")
    v = sub.add_parser("verify", help="re-check a saved solution")
    v.add_argument("--solution", required=True)
    v.add_argument("--lenient", action="store_true")
    b = sub.add_parser("brute", help="exhaustive best radial topology for one hour")
    b.add_argument("--case", required=True)
    b.add_argument("--hour", type=int, default=0)
    b.add_argument("--load-model", choices=["ci", "cc", "cp", "custom"], default="custom")
    b.add_argument("--substation-v", type=float, default=None)
    b.add_argument("--ceiling", type=int, default=10**6)
    b.add_argument("--lenient", action="store_true")
    return ap


def _run_options(args, case: NetworkCase) -> RunOptions:
    hours = None
    if args.hours is not None:
        if not 1 <= args.hours <= case.horizon:
            raise ValueError(f"--hours must lie in [1, {case.horizon}]")
        hours = tuple(range(args.hours))
    return RunOptions(hours=hours, rel_gap_tol=args.gap, node_limit=args.node_limit,
                      time_limit=args.time_limit, backend=args.backend)


def _write(text: str, out: str | None, name: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / name, "w", newline="") as fh:
        fh.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            doc = json.loads(Path(args.solution).read_text())
            ok, msgs = verify_solution(doc, lenient=args.lenient)
            sys.stdout.write("\n".join(msgs) + "\n")
            return EXIT_OK if ok else EXIT_INFEASIBLE
        case = _load_case_ref(args.case, args.lenient)
        if args.command == "brute":
            res = brute_force_best_topology(case, args.hour, args.substation_v,
                                            load_model=None if args.load_model == "custom"
                                            else args.load_model.upper(),
                                            ceiling=args.ceiling)
            doc = {"case": case.name, "hour": args.hour, "loss_mw": _g(res.loss * case.s_base),
                   "open_lines": format_open_lines(res.topology.open_branches(case)),
                   "topologies": res.total, "nonconverged": res.nonconverged,
                   "outside_limits": res.limit_violations}
            sys.stdout.write(json.dumps(doc, sort_keys=True, indent=1) + "\n")
            return EXIT_OK
        opts = _run_options(args, case)
        template = ScenarioConfig(cvr_factor=args.cvr, topology_mode=args.topology_mode,
                                  der_enabled=args.der == "on", load_model=args.load_model)
        ext = _EXT[args.format]
        if args.command == "plan":
            cfg = replace(template, scenario=args.scenario.upper())
            report = run_scenario(case, cfg, opts)
            _write(render_report(report, args.format), args.out,
                   f"{case.name}_{cfg.scenario.lower()}.{ext}")
            if args.save_solution:
                Path(args.save_solution).write_text(
                    json.dumps(solution_to_dict(report, args.case, opts), sort_keys=True) + "\n")
            return EXIT_OK
        names = [s.strip().upper() for s in args.scenarios.split(",") if s.strip()]
        table = compare_scenarios(case, names, opts, template=template)
        _write(render_report(table, args.format), args.out, f"{case.name}_compare.{ext}")
        return EXIT_OK if table.ok else EXIT_INFEASIBLE
    except ScenarioFailure as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_NO_INCUMBENT if exc.status in ("no_incumbent", "node_limit", "time_limit") \
            else EXIT_INFEASIBLE
    except (CaseError, KeyError, ValueError, OSError, EnumerationRefused) as exc:
        sys.stderr.write(f"input error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
