"""Branch-and-bound over the binaries of a :class:`ConicProgram`.

Continuous relaxations go to a named conic backend (``clarabel`` by default,
``cvxopt`` as an alternative). Every relaxation a backend calls optimal is
re-checked here against the canonical program before it is trusted.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .opt_model import ConicProgram, fix_binaries

__all__ = [
    "BackendCapabilities",
    "BackendError",
    "ClarabelBackend",
    "CvxoptBackend",
    "FeasibilityViolation",
    "MIOptions",
    "MISolution",
    "RelaxResult",
    "ViolationReport",
    "available_backends",
    "check_feasibility",
    "constraint_violation",
    "get_backend",
    "polish_cones",
    "register_backend",
    "solve_misocp",
    "solve_relaxation",
]

logger = logging.getLogger(__name__)

RECHECK_TOL = 1e-6


class BackendError(RuntimeError):
    """Configuration problem with a conic backend."""


@dataclass(frozen=True)
class BackendCapabilities:
    rotated_soc: bool = True
    free_variables: bool = True
    box_bounds: bool = True
    equalities: bool = True


@dataclass(frozen=True)
class RelaxResult:
    status: str  # optimal | infeasible | unbounded | numerical_failure
    objective: float
    primal: np.ndarray | None
    max_constraint_violation: float
    diagnostics: Mapping[str, object] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


# --------------------------------------------------------------------------
# independent constraint evaluation


def constraint_violation(program: ConicProgram, z: np.ndarray) -> dict[str, float]:
    """Max violation per constraint family, computed from the canonical program."""
    z = np.asarray(z, dtype=float)
    eq = np.abs(program.A @ z - program.b)
    lo = np.where(np.isfinite(program.lb), program.lb - z, 0.0)
    hi = np.where(np.isfinite(program.ub), z - program.ub, 0.0)
    out = {
        "equality": float(eq.max(initial=0.0)),
        "bound": float(max(lo.max(initial=0.0), hi.max(initial=0.0), 0.0)),
        "cone": 0.0,
    }
    cones = program.all_cones()
    if len(cones):
        p, q, i, v = (z[cones[:, k]] for k in range(4))
        norm = np.sqrt(4 * p**2 + 4 * q**2 + (i - v) ** 2)
        out["cone"] = float(max(0.0, (0.5 * (norm - i - v)).max()))
    return out


def polish_cones(program: ConicProgram, z: np.ndarray) -> np.ndarray:
    """Move each branch cone onto its boundary by lowering ``I_sq``.

    Interior-point optima leave a little slack where current is nearly free
    (near-zero resistance). Setting ``I_sq = (P**2 + Q**2) / V_sq`` there is
    what an exact solver would return; the projection is kept only if the
    objective does not rise and no constraint family gets worse than the
    re-check tolerance.
    """
    z = np.asarray(z, dtype=float)
    cones = program.cones
    if not len(cones):
        return z
    p, q, i, v = (z[cones[:, k]] for k in range(4))
    target = np.where(v > 1e-9, (p * p + q * q) / np.maximum(v, 1e-9), i)
    cols = cones[:, 2]
    new_i = np.clip(np.minimum(i, target), program.lb[cols], program.ub[cols])
    if np.array_equal(new_i, i):
        return z
    out = z.copy()
    out[cols] = new_i
    # rows that carry a private slack column absorb the change through it
    delta = program.A @ (out - z)
    changed = np.flatnonzero(delta != 0.0)
    if changed.size:
        A = program.A
        counts = np.bincount(A.indices, minlength=program.n_vars)
        locked = np.zeros(program.n_vars, dtype=bool)
        locked[program.all_cones().ravel()] = True
        locked[list(program.meta.binaries)] = True
        for r in changed:
            lo_, hi_ = A.indptr[r], A.indptr[r + 1]
            for col, val in zip(A.indices[lo_:hi_], A.data[lo_:hi_]):
                if counts[col] == 1 and not locked[col]:
                    out[col] -= delta[r] / val
                    break
    before = constraint_violation(program, z)
    after = constraint_violation(program, out)
    if float(program.c @ out) > float(program.c @ z) + 1e-15:
        return z
    if any(after[k] > max(before[k], RECHECK_TOL) for k in after):
        return z
    return out


# --------------------------------------------------------------------------
# presolve shared by the backends


@dataclass
class _Reduced:
    free: np.ndarray          # columns kept
    values: np.ndarray        # full-length vector holding fixed values
    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    cone_rows: np.ndarray     # (nnz,) row within the stacked cone block
    cone_cols: np.ndarray     # (nnz,) reduced column
    cone_vals: np.ndarray
    cone_const: np.ndarray    # (4 m,)
    n_cones: int
    offset: float
    infeasible: str | None = None

    def expand(self, x: np.ndarray) -> np.ndarray:
        z = self.values.copy()
        z[self.free] = x
        return z


def _infeasible(program: ConicProgram, why: str) -> _Reduced:
    e = np.zeros(0)
    return _Reduced(np.zeros(0, dtype=int), np.zeros(program.n_vars), program.A, program.b,
                    program.c, program.lb, program.ub, e, e, e, e, 0, 0.0, infeasible=why)


def _presolve(program: ConicProgram, tol: float = 1e-12) -> _Reduced:
    """Eliminate fixed columns, singleton rows and forcing rows.

    Only implications of the program itself are applied, so the reduced
    problem has the same feasible set restricted to the remaining columns.
    """
    n = program.n_vars
    lb = program.lb.astype(float).copy()
    ub = program.ub.astype(float).copy()
    if np.any(lb > ub + 1e-12):
        return _infeasible(program, f"empty box at column {int(np.argmax(lb - ub))}")
    a = program.A.tocsr()
    a_csc = a.tocsc()
    a_pos = a.maximum(0).tocsr()
    a_neg = a.minimum(0).tocsr()
    a_bool = (a != 0).astype(float).tocsr()
    pos_bool = (a_pos != 0).astype(float)
    neg_bool = (a_neg != 0).astype(float)
    cones = program.all_cones()
    fixed = lb == ub
    for _ in range(100):
        changed = False
        if len(cones):
            pq = cones[:, :2]
            pinned = (fixed[cones[:, 2]] & (ub[cones[:, 2]] == 0.0)) | \
                     (fixed[cones[:, 3]] & (ub[cones[:, 3]] == 0.0))
            cols = np.unique(pq[pinned].ravel())
            cols = cols[~fixed[cols]]
            if len(cols):
                if np.any((lb[cols] > 0) | (ub[cols] < 0)):
                    return _infeasible(program, "cone with zero current and nonzero flow")
                lb[cols] = ub[cols] = 0.0
                fixed[cols] = True
                changed = True
        vals = np.where(fixed, lb, 0.0)
        resid = program.b - a_csc @ vals
        freef = (~fixed).astype(float)
        count = a_bool @ freef
        # singleton rows
        single = np.flatnonzero(count == 1)
        if len(single):
            sub = a[single].multiply(freef[None, :]).tocsr()
            sub.eliminate_zeros()
            cols = sub.indices
            coef = sub.data
            x = resid[single] / coef
            order = np.unique(cols, return_index=True)[1]
            cols, x = cols[order], x[order]
            if np.any((x < lb[cols] - 1e-9) | (x > ub[cols] + 1e-9)):
                return _infeasible(program, "singleton row forces a column out of bounds")
            x = np.clip(x, lb[cols], ub[cols])
            lb[cols] = ub[cols] = x
            fixed[cols] = True
            continue
        # forcing rows: minimum (or maximum) activity equals the right-hand side
        lbf = np.where(fixed, 0.0, lb)
        ubf = np.where(fixed, 0.0, ub)
        inf_lb = (~fixed & ~np.isfinite(lb)).astype(float)
        inf_ub = (~fixed & ~np.isfinite(ub)).astype(float)
        lbz = np.where(np.isfinite(lbf), lbf, 0.0)
        ubz = np.where(np.isfinite(ubf), ubf, 0.0)
        min_act = a_pos @ lbz + a_neg @ ubz
        max_act = a_pos @ ubz + a_neg @ lbz
        min_inf = pos_bool @ inf_lb + neg_bool @ inf_ub
        max_inf = pos_bool @ inf_ub + neg_bool @ inf_lb
        active = count > 0
        at_min = active & (min_inf == 0) & (np.abs(min_act - resid) <= tol)
        at_max = active & (max_inf == 0) & (np.abs(max_act - resid) <= tol) & ~at_min
        for rows_, to_low in ((np.flatnonzero(at_min), True), (np.flatnonzero(at_max), False)):
            if not len(rows_):
                continue
            sub = a[rows_].multiply(freef[None, :]).tocsr()
            sub.eliminate_zeros()
            cols, coef = sub.indices, sub.data
            low_side = (coef > 0) == to_low
            target = np.where(low_side, lb[cols], ub[cols])
            lb[cols] = ub[cols] = target
            fixed[cols] = True
            changed = True
        if not changed:
            break

    values = np.where(fixed, lb, 0.0)
    free = np.flatnonzero(~fixed)
    resid = program.b - a_csc @ values
    a_free = a[:, free].tocsr()
    a_free.eliminate_zeros()
    empty = np.diff(a_free.indptr) == 0
    if np.any(np.abs(resid[empty]) > 1e-9):
        r = int(np.flatnonzero(empty)[np.argmax(np.abs(resid[empty]))])
        return _infeasible(program, f"row {r} inconsistent after fixing ({resid[r]:.3e})")
    keep = ~empty
    pos = -np.ones(n, dtype=int)
    pos[free] = np.arange(len(free))

    # cone block s = (I + V, 2P, 2Q, I - V); cones with P = Q = 0 fixed hold trivially
    if len(cones):
        trivial = fixed[cones[:, 0]] & fixed[cones[:, 1]] & \
            (values[cones[:, 0]] == 0.0) & (values[cones[:, 1]] == 0.0)
        cz = cones[~trivial]
    else:
        cz = cones
    m = len(cz)
    base = 4 * np.arange(m)
    p_, q_, i_, v_ = (cz[:, k] for k in range(4)) if m else (np.zeros(0, dtype=int),) * 4
    rows_ = np.concatenate([base, base, base + 1, base + 2, base + 3, base + 3])
    cols_ = np.concatenate([i_, v_, p_, q_, i_, v_])
    vals_ = np.concatenate([np.ones(m), np.ones(m), 2 * np.ones(m), 2 * np.ones(m),
                            np.ones(m), -np.ones(m)])
    is_fixed = fixed[cols_] if m else np.zeros(0, dtype=bool)
    const = np.zeros(4 * m)
    np.add.at(const, rows_[is_fixed], vals_[is_fixed] * values[cols_[is_fixed]])
    return _Reduced(free, values, a_free[keep], resid[keep], program.c[free], lb[free], ub[free],
                    rows_[~is_fixed], pos[cols_[~is_fixed]], vals_[~is_fixed], const, m,
                    float(program.c @ values))


def _conic_rows(red: _Reduced) -> tuple[sp.csc_matrix, np.ndarray, int, int, list[int]]:
    """Inequality rows ``G x + s = h`` with s in (R+^l x SOC_4^m)."""
    nf = len(red.free)
    has_lb = np.flatnonzero(np.isfinite(red.lb))
    has_ub = np.flatnonzero(np.isfinite(red.ub))
    n_lin = len(has_lb) + len(has_ub)
    rows = np.concatenate([np.arange(len(has_lb)), len(has_lb) + np.arange(len(has_ub)),
                           n_lin + red.cone_rows])
    cols = np.concatenate([has_lb, has_ub, red.cone_cols])
    vals = np.concatenate([-np.ones(len(has_lb)), np.ones(len(has_ub)), -red.cone_vals])
    h = np.concatenate([-red.lb[has_lb], red.ub[has_ub], red.cone_const])
    g = sp.csc_matrix((vals, (rows, cols)), shape=(n_lin + 4 * red.n_cones, nf))
    return g, h, n_lin, red.n_cones, [4] * red.n_cones


class ClarabelBackend:
    name = "clarabel"
    capabilities = BackendCapabilities()

    def __init__(self, **settings):
        self.settings = {"verbose": False, "tol_gap_abs": 1e-10, "tol_gap_rel": 1e-10,
                         "tol_feas": 1e-10, "max_iter": 300}
        self.settings.update(settings)

    def solve(self, program: ConicProgram) -> RelaxResult:
        import clarabel

        red = _presolve(program)
        if red.infeasible:
            return RelaxResult("infeasible", math.inf, None, math.inf, {"presolve": red.infeasible})
        nf = len(red.free)
        if nf == 0:
            return RelaxResult("optimal", red.offset, red.values.copy(), 0.0, {"presolve": "all fixed"})
        g, h, n_lin, n_soc, _ = _conic_rows(red)
        a = sp.vstack([red.A, g]).tocsc()
        rhs = np.concatenate([red.b, h])
        cones = [clarabel.ZeroConeT(red.A.shape[0])]
        if n_lin:
            cones.append(clarabel.NonnegativeConeT(n_lin))
        cones += [clarabel.SecondOrderConeT(4)] * n_soc
        settings = clarabel.DefaultSettings()
        for k, v in self.settings.items():
            setattr(settings, k, v)
        p = sp.csc_matrix((nf, nf))
        solver = clarabel.DefaultSolver(p, red.c, a, rhs, cones, settings)
        sol = solver.solve()
        status = str(sol.status)
        diag = {"backend_status": status, "iterations": int(sol.iterations)}
        if status in ("Solved", "AlmostSolved"):
            z = red.expand(np.array(sol.x))
            return RelaxResult("optimal", float(program.c @ z), z, 0.0, diag)
        if "PrimalInfeasible" in status:
            return RelaxResult("infeasible", math.inf, None, math.inf, diag)
        if "DualInfeasible" in status:
            return RelaxResult("unbounded", -math.inf, None, math.inf, diag)
        return RelaxResult("numerical_failure", math.nan, None, math.inf, diag)


class CvxoptBackend:
    name = "cvxopt"
    capabilities = BackendCapabilities()

    def __init__(self, **options):
        self.options = {"show_progress": False, "abstol": 1e-10, "reltol": 1e-10,
                        "feastol": 1e-10, "maxiters": 200}
        self.options.update(options)

    def solve(self, program: ConicProgram) -> RelaxResult:
        import cvxopt
        from cvxopt import solvers

        red = _presolve(program)
        if red.infeasible:
            return RelaxResult("infeasible", math.inf, None, math.inf, {"presolve": red.infeasible})
        if len(red.free) == 0:
            return RelaxResult("optimal", red.offset, red.values.copy(), 0.0, {"presolve": "all fixed"})
        g, h, n_lin, n_soc, q_dims = _conic_rows(red)

        def spm(m):
            m = m.tocoo()
            return cvxopt.spmatrix(m.data.tolist(), m.row.tolist(), m.col.tolist(), m.shape)

        dims = {"l": n_lin, "q": q_dims, "s": []}
        try:
            sol = solvers.conelp(cvxopt.matrix(red.c), spm(g), cvxopt.matrix(h), dims,
                                 spm(red.A), cvxopt.matrix(red.b), options=dict(self.options))
        except (ValueError, ArithmeticError) as exc:
            return RelaxResult("numerical_failure", math.nan, None, math.inf, {"error": str(exc)})
        status = sol["status"]
        diag = {"backend_status": status, "iterations": int(sol.get("iterations") or 0)}
        if status == "optimal" or (status == "unknown" and sol["x"] is not None
                                   and (sol.get("relative gap") or 1.0) < 1e-6):
            z = red.expand(np.array(sol["x"]).ravel())
            return RelaxResult("optimal", float(program.c @ z), z, 0.0, diag)
        if status == "primal infeasible":
            return RelaxResult("infeasible", math.inf, None, math.inf, diag)
        if status == "dual infeasible":
            return RelaxResult("unbounded", -math.inf, None, math.inf, diag)
        return RelaxResult("numerical_failure", math.nan, None, math.inf, diag)


_REGISTRY: dict[str, Callable[[], object]] = {
    "clarabel": ClarabelBackend,
    "cvxopt": CvxoptBackend,
}


def register_backend(name: str, factory: Callable[[], object]) -> None:
    _REGISTRY[name.lower()] = factory


def available_backends() -> list[str]:
    return sorted(_REGISTRY)


def get_backend(name_or_backend="clarabel"):
    if not isinstance(name_or_backend, str):
        backend = name_or_backend
    else:
        try:
            backend = _REGISTRY[name_or_backend.lower()]()
        except KeyError:
            raise BackendError(f"unknown backend {name_or_backend!r}; "
                               f"available: {available_backends()}") from None
    caps = getattr(backend, "capabilities", None)
    if caps is None or not (caps.rotated_soc and caps.free_variables and caps.box_bounds
                            and caps.equalities):
        raise BackendError(f"backend {getattr(backend, 'name', backend)!r} lacks required capabilities")
    return backend


def solve_relaxation(program: ConicProgram, backend="clarabel") -> RelaxResult:
    """Solve with integrality dropped; an optimal verdict is re-checked at 1e-6."""
    be = get_backend(backend)
    res = be.solve(program)
    if res.status != "optimal":
        return res
    viol = constraint_violation(program, res.primal)
    worst = max(viol.values())
    diag = dict(res.diagnostics)
    diag["violation"] = viol
    if worst > RECHECK_TOL:
        logger.warning("backend %s reported optimal but re-check found violation %.2e",
                       getattr(be, "name", be), worst)
        return RelaxResult("numerical_failure", res.objective, res.primal, worst, diag)
    return RelaxResult("optimal", res.objective, res.primal, worst, diag)


# --------------------------------------------------------------------------
# branch and bound


@dataclass(frozen=True)
class MIOptions:
    rel_gap_tol: float = 1e-4
    node_limit: int = 20000
    time_limit: float | None = None
    int_tol: float = 1e-6
    heuristic_every: int = 25
    local_search_budget: int = 200
    backend: str = "clarabel"


@dataclass(frozen=True)
class MISolution:
    status: str  # optimal | node_limit | time_limit | infeasible | no_incumbent | numerical_failure
    incumbent: np.ndarray | None
    objective: float
    bound: float
    rel_gap: float
    node_count: int
    wall_time: float
    log: tuple[str, ...] = ()

    @property
    def has_incumbent(self) -> bool:
        return self.incumbent is not None


def _gap(obj: float, bound: float) -> float:
    if not math.isfinite(obj):
        return math.inf
    return max(0.0, (obj - bound) / max(abs(obj), 1e-12))


class _DSU:
    def __init__(self, n):
        self.p = list(range(n))

    def find(self, a):
        while self.p[a] != a:
            self.p[a] = self.p[self.p[a]]
            a = self.p[a]
        return a

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.p[ra] = rb
        return True


def _bridges(nodes: set[int], edges: list[tuple[int, int, int]]) -> tuple[list[int], bool]:
    """Bridge edge ids of a multigraph and whether it is connected."""
    adj: dict[int, list[tuple[int, int]]] = {n: [] for n in nodes}
    for a, b, eid in edges:
        adj[a].append((b, eid))
        adj[b].append((a, eid))
    order: dict[int, int] = {}
    low: dict[int, int] = {}
    out: list[int] = []
    start = min(nodes)
    order[start] = low[start] = 0
    counter = 1
    stack = [(start, -1, iter(adj[start]))]
    while stack:
        node, via, it = stack[-1]
        for nxt, eid in it:
            if eid == via:
                continue
            if nxt in order:
                low[node] = min(low[node], order[nxt])
            else:
                order[nxt] = low[nxt] = counter
                counter += 1
                stack.append((nxt, eid, iter(adj[nxt])))
                break
        else:
            stack.pop()
            if stack:
                parent = stack[-1][0]
                low[parent] = min(low[parent], low[node])
                if low[node] > order[parent]:
                    out.append(via)
    return out, len(order) == len(nodes)


def _loop_edges(n: int, subs: Sequence[int], closed: list[tuple[int, int, int]],
                u: int, v: int) -> list[int]:
    """Columns of the closed edges on the path u..v (substations merged)."""
    root = subs[0]
    alias = {s: root for s in subs}
    adj: dict[int, list[tuple[int, int]]] = {}
    for a, b, col in closed:
        a, b = alias.get(a, a), alias.get(b, b)
        adj.setdefault(a, []).append((b, col))
        adj.setdefault(b, []).append((a, col))
    u, v = alias.get(u, u), alias.get(v, v)
    prev: dict[int, tuple[int, int] | None] = {u: None}
    queue = [u]
    for node in queue:
        if node == v:
            break
        for nxt, col in adj.get(node, ()):
            if nxt not in prev:
                prev[nxt] = (node, col)
                queue.append(nxt)
    if v not in prev:
        return []
    path = []
    node = v
    while prev[node] is not None:
        node, col = prev[node]
        path.append(col)
    return path


class _Search:
    def __init__(self, program: ConicProgram, opts: MIOptions):
        self.program = program
        self.opts = opts
        self.backend = get_backend(opts.backend)
        # second attempt at looser interior-point tolerances
        self.fallback = ClarabelBackend(tol_gap_abs=1e-8, tol_gap_rel=1e-8, tol_feas=1e-8) \
            if getattr(self.backend, "name", "") == "clarabel" else None
        # bounds of subtrees whose relaxation could not be solved reliably
        self.unresolved_floor = math.inf
        self.unresolved = 0
        self.binaries = frozenset(program.integrality)
        meta = program.meta
        self.rank = {k: (0 if meta.binary_kind.get(k) == "switch" else 1) for k in self.binaries}
        self.impact = {k: meta.impact.get(k, 0.0) for k in self.binaries}
        self.inc_obj = math.inf
        self.inc_x: np.ndarray | None = None
        self.nodes = 0
        self.seq = 0
        self.heap: list = []
        self.dive: list = []
        self.pruned_floor = math.inf
        self.plunging = True
        self.log: list[str] = []
        self.t0 = time.perf_counter()
        self.reported_bound = -math.inf

    # relaxation helpers -------------------------------------------------
    def relax(self, fixes: Mapping[int, int]) -> RelaxResult:
        prog = fix_binaries(self.program, dict(fixes))
        res = solve_relaxation(prog, self.backend)
        if res.status == "numerical_failure" and self.fallback is not None:
            res = solve_relaxation(prog, self.fallback)
        return res

    def fractional(self, x: np.ndarray, fixes: Mapping[int, int]) -> list[int]:
        tol = self.opts.int_tol
        return [k for k in self.program.integrality
                if k not in fixes and tol < x[k] < 1.0 - tol]

    def accept(self, fixes: Mapping[int, int]) -> bool:
        """Solve with every binary fixed; keep as incumbent if it improves."""
        if set(fixes) != self.binaries:
            return False
        res = self.relax(fixes)
        if not res.ok:
            return False
        x = res.primal.copy()
        for k, v in fixes.items():
            x[k] = float(v)
        x = polish_cones(self.program, x)
        obj = float(self.program.c @ x)
        if obj < self.inc_obj - 1e-12:
            self.inc_obj = obj
            self.inc_x = x
            self.plunging = True
            return True
        return False

    def round_assignment(self, x: np.ndarray, fixes: Mapping[int, int]) -> dict[int, int] | None:
        meta = self.program.meta
        out: dict[int, int] = dict(fixes)
        n_target = meta.n_nodes - len(meta.substations)
        for group in meta.radial_groups:
            dsu = _DSU(meta.n_nodes)
            for s in meta.substations[1:]:
                dsu.union(meta.substations[0], s)
            count = 0
            candidates = []
            for u, v, col, _ in group.edges:
                if col < 0 or out.get(col) == 1:
                    if not dsu.union(u, v):
                        return None
                    count += 1
                elif col in self.binaries and col not in out:
                    candidates.append((-x[col], col, u, v))
            candidates.sort()
            for _, col, u, v in candidates:
                if count < n_target and dsu.union(u, v):
                    out[col] = 1
                    count += 1
                else:
                    out[col] = 0
            if count != n_target:
                return None
        for c, d in meta.battery_pairs:
            if c not in self.binaries:
                continue
            fc, fd = out.get(c), out.get(d)
            if fc is None and fd is None:
                out[c], out[d] = (1, 0) if x[c] >= x[d] else (0, 1)
            elif fc is None:
                out[c] = 0 if fd == 1 else 1
            elif fd is None:
                out[d] = 0 if fc == 1 else 1
        for k in self.binaries:
            out.setdefault(k, int(round(x[k])))
        return out

    def heuristic(self, x: np.ndarray, fixes: Mapping[int, int]) -> bool:
        assignment = self.round_assignment(x, fixes)
        return assignment is not None and self.accept(assignment)

    def try_candidate(self, partial: Mapping[int, int]) -> bool:
        partial = {k: int(v) for k, v in partial.items() if k in self.binaries}
        if set(partial) == self.binaries:
            return self.accept(partial)
        res = self.relax(partial)
        if not res.ok:
            return False
        if not self.fractional(res.primal, partial):
            return self.accept({**partial, **{k: int(round(res.primal[k]))
                                              for k in self.binaries if k not in partial}})
        return self.heuristic(res.primal, partial)

    # radiality propagation ----------------------------------------------
    def propagate(self, fixes: Mapping[int, int]) -> dict[int, int] | None:
        """Extend ``fixes`` by what radiality implies; ``None`` if infeasible.

        A free switch joining two already-connected pieces must be open; a
        free switch that is a bridge of the non-open graph must be closed;
        once enough switches are closed the rest must be open.
        """
        meta = self.program.meta
        out = dict(fixes)
        n_target = meta.n_nodes - len(meta.substations)
        for group in meta.radial_groups:
            while True:
                dsu = _DSU(meta.n_nodes)
                for sub in meta.substations[1:]:
                    dsu.union(meta.substations[0], sub)
                count = 0
                free = []
                for u, v, col, _ in group.edges:
                    state = 1 if col < 0 else out.get(col)
                    if state == 1:
                        if not dsu.union(u, v):
                            return None
                        count += 1
                    elif state is None and col in self.binaries:
                        free.append((u, v, col))
                if count > n_target:
                    return None
                new: dict[int, int] = {}
                if count == n_target:
                    new = {col: 0 for _, _, col in free}
                else:
                    live = []
                    for u, v, col in free:
                        a, b = dsu.find(u), dsu.find(v)
                        if a == b:
                            new[col] = 0
                        else:
                            live.append((a, b, col))
                    comps = {dsu.find(k) for k in range(meta.n_nodes)}
                    bridges, connected = _bridges(comps, live)
                    if not connected:
                        return None
                    for col in bridges:
                        new[col] = 1
                if not new:
                    break
                out.update(new)
        for c, d in meta.battery_pairs:
            if out.get(c) == 1 and d in self.binaries and d not in out:
                out[d] = 0
            if out.get(d) == 1 and c in self.binaries and c not in out:
                out[c] = 0
            if out.get(c) == 1 and out.get(d) == 1:
                return None
        return out

    def local_search(self, budget: int) -> None:
        """Branch exchange around the incumbent: close an open switch, open
        another switch on the loop it creates; keep improvements."""
        if self.inc_x is None or budget <= 0:
            return
        meta = self.program.meta
        solves = 0
        improved = True
        while improved and solves < budget:
            improved = False
            base = {k: int(round(self.inc_x[k])) for k in self.binaries}
            for group in meta.radial_groups:
                closed = [(u, v, col) for u, v, col, _ in group.edges
                          if col < 0 or base.get(col) == 1]
                opened = [(u, v, col) for u, v, col, _ in group.edges
                          if col >= 0 and col in self.binaries and base.get(col) == 0]
                for u, v, col in opened:
                    for f in _loop_edges(meta.n_nodes, meta.substations, closed, u, v):
                        if f < 0 or f not in self.binaries:
                            continue
                        trial = dict(base)
                        trial[col], trial[f] = 1, 0
                        solves += 1
                        if self.accept(trial):
                            improved = True
                            break
                        if solves >= budget:
                            return
                    if improved:
                        break
                if improved:
                    break

    # bookkeeping --------------------------------------------------------
    def prune_level(self) -> float:
        if not math.isfinite(self.inc_obj):
            return math.inf
        return self.inc_obj - self.opts.rel_gap_tol * max(abs(self.inc_obj), 1e-12)

    def global_bound(self) -> float:
        open_min = min([e[0] for e in self.heap] + [e[0] for e in self.dive], default=math.inf)
        b = min(open_min, self.pruned_floor, self.unresolved_floor, self.inc_obj)
        self.reported_bound = max(self.reported_bound, b) if math.isfinite(b) else self.reported_bound
        return b if not math.isfinite(b) else self.reported_bound

    def emit(self, depth: int) -> None:
        b = self.global_bound()
        line = (f"node={self.nodes} bound={b:.10g} incumbent={self.inc_obj:.10g} "
                f"gap={_gap(self.inc_obj, b):.4e} depth={depth}")
        self.log.append(line)
        logger.debug(line)

    def push(self, bound: float, depth: int, fixes: dict[int, int], res: RelaxResult,
             dive: bool = False) -> None:
        self.seq += 1
        entry = (bound, self.seq, depth, fixes, res)
        if dive:
            self.dive.append(entry)
        else:
            heapq.heappush(self.heap, entry)

    def limits_hit(self) -> str | None:
        if self.nodes >= self.opts.node_limit:
            return "node_limit"
        if self.opts.time_limit is not None and time.perf_counter() - self.t0 > self.opts.time_limit:
            return "time_limit"
        return None

    def pick_branch(self, x: np.ndarray, frac: list[int]) -> int:
        def key(k):
            return (self.rank[k], -min(x[k], 1.0 - x[k]), -self.impact[k], k)
        return min(frac, key=key)

    # main loop ----------------------------------------------------------
    def run(self, candidates: Iterable[Mapping[int, int]]) -> MISolution:
        root = self.relax({})
        self.nodes = 1
        if not root.ok:
            status = "infeasible" if root.status == "infeasible" else root.status
            return self.finish(status, root.objective if root.status == "unbounded" else math.nan)
        for cand in candidates:
            self.try_candidate(cand)
        self.heuristic(root.primal, {})
        self.local_search(self.opts.local_search_budget)
        self.push(root.objective, 0, {}, root)
        self.emit(0)
        limit = None
        expanded = 0
        while self.heap or self.dive:
            limit = self.limits_hit()
            if limit:
                break
            if self.plunging and self.dive:
                bound, _, depth, fixes, res = self.dive.pop()
            else:
                # the dive stack is folded back into the best-first queue
                for e in self.dive:
                    heapq.heappush(self.heap, e)
                self.dive.clear()
                if not self.heap:
                    break
                bound, _, depth, fixes, res = heapq.heappop(self.heap)
            if bound >= self.prune_level():
                self.pruned_floor = min(self.pruned_floor, bound)
                continue
            x = res.primal
            frac = self.fractional(x, fixes)
            if not frac:
                self.accept({**fixes, **{k: int(round(x[k])) for k in self.binaries if k not in fixes}})
                self.emit(depth)
                continue
            if expanded and expanded % self.opts.heuristic_every == 0:
                self.heuristic(x, fixes)
            expanded += 1
            k = self.pick_branch(x, frac)
            children = []
            for val in (1, 0) if x[k] >= 0.5 else (0, 1):
                child_fix = self.propagate({**fixes, k: val})
                if child_fix is None:
                    continue
                if set(child_fix) == self.binaries:
                    self.nodes += 1
                    self.accept(child_fix)
                    continue
                cres = self.relax(child_fix)
                self.nodes += 1
                if cres.status == "numerical_failure":
                    # the subtree is abandoned but its bound stays on the books
                    self.unresolved += 1
                    self.unresolved_floor = min(self.unresolved_floor, bound)
                    continue
                if not cres.ok:
                    continue
                cb = max(bound, cres.objective)
                if cb >= self.prune_level():
                    self.pruned_floor = min(self.pruned_floor, cb)
                    continue
                children.append((cb, child_fix, cres))
            self.plunging = self.plunging and bool(children)
            if self.plunging:
                children.sort(key=lambda e: e[0])
                # best child on top of the dive stack, sibling to the queue
                for cb, cf, cr in children[1:]:
                    self.push(cb, depth + 1, cf, cr)
                cb, cf, cr = children[0]
                self.push(cb, depth + 1, cf, cr, dive=True)
            else:
                for cb, cf, cr in children:
                    self.push(cb, depth + 1, cf, cr)
            self.emit(depth + 1)
        if limit is None:
            if self.inc_x is None:
                return self.finish("infeasible", math.nan)
            return self.finish("optimal", None)
        return self.finish(limit if self.inc_x is not None else "no_incumbent", None)

    def finish(self, status: str, objective: float | None) -> MISolution:
        wall = time.perf_counter() - self.t0
        if self.inc_x is None:
            b = self.global_bound() if status in ("node_limit", "time_limit", "no_incumbent") else math.nan
            return MISolution(status, None, math.nan if objective is None else objective, b,
                              math.inf, self.nodes, wall, tuple(self.log))
        bound = self.global_bound()
        return MISolution(status, self.inc_x, self.inc_obj, bound, _gap(self.inc_obj, bound),
                          self.nodes, wall, tuple(self.log))


def solve_misocp(program: ConicProgram, opts: MIOptions | None = None, *,
                 candidates: Sequence[Mapping[int, int]] = ()) -> MISolution:
    """Best-first branch and bound with plunging and a radial rounding heuristic.

    ``candidates`` are partial 0/1 assignments tried as incumbents before the
    search (completed by the rounding heuristic when partial).
    """
    opts = opts or MIOptions()
    if not program.integrality:
        t0 = time.perf_counter()
        res = solve_relaxation(program, opts.backend)
        wall = time.perf_counter() - t0
        if res.ok:
            x = polish_cones(program, res.primal)
            obj = float(program.c @ x)
            line = f"node=1 bound={obj:.10g} incumbent={obj:.10g} gap=0.0000e+00 depth=0"
            return MISolution("optimal", x, obj, obj, 0.0, 1, wall, (line,))
        return MISolution(res.status, None, math.nan, math.nan, math.inf, 1, wall)
    return _Search(program, opts).run(candidates)


# --------------------------------------------------------------------------
# post-solution verification


@dataclass(frozen=True)
class FeasibilityViolation:
    kind: str  # equality | bound | cone | integrality | radiality
    where: str
    magnitude: float

    def __str__(self) -> str:
        return f"{self.kind} at {self.where}: {self.magnitude:.3e}"


@dataclass(frozen=True)
class ViolationReport:
    violations: tuple[FeasibilityViolation, ...] = ()

    def __bool__(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


def _radiality(program: ConicProgram, z: np.ndarray) -> list[FeasibilityViolation]:
    meta = program.meta
    out = []
    n_target = meta.n_nodes - len(meta.substations)
    for group in meta.radial_groups:
        label = f"hours {group.hours[0]}" if len(group.hours) == 1 else \
            f"hours {group.hours[0]}-{group.hours[-1]}"
        dsu = _DSU(meta.n_nodes)
        for s in meta.substations[1:]:
            dsu.union(meta.substations[0], s)
        closed = 0
        cycles = []
        for u, v, col, bid in group.edges:
            if col >= 0 and z[col] < 0.5:
                continue
            closed += 1
            if not dsu.union(u, v):
                cycles.append(bid)
        if closed != n_target:
            out.append(FeasibilityViolation("radiality", f"{label}: {closed} closed branches, "
                                            f"expected {n_target}", float(abs(closed - n_target))))
        if cycles:
            out.append(FeasibilityViolation("radiality", f"{label}: loop closed by {cycles}",
                                            float(len(cycles))))
        root = dsu.find(meta.substations[0])
        lost = [k for k in range(meta.n_nodes) if dsu.find(k) != root]
        if lost:
            out.append(FeasibilityViolation("radiality", f"{label}: {len(lost)} buses not served",
                                            float(len(lost))))
    return out


def check_feasibility(solution: MISolution | np.ndarray, program: ConicProgram,
                      tol: float = 1e-5) -> ViolationReport:
    """Re-evaluate every constraint of ``program`` at the solution, backend-free."""
    z = solution.incumbent if isinstance(solution, MISolution) else solution
    if z is None:
        return ViolationReport((FeasibilityViolation("incumbent", "none", math.inf),))
    z = np.asarray(z, dtype=float)
    out: list[FeasibilityViolation] = []
    res = np.abs(program.A @ z - program.b)
    for r in np.flatnonzero(res > tol):
        out.append(FeasibilityViolation("equality", f"row {r}", float(res[r])))
    lo = np.where(np.isfinite(program.lb), program.lb - z, 0.0)
    hi = np.where(np.isfinite(program.ub), z - program.ub, 0.0)
    for k in np.flatnonzero(np.maximum(lo, hi) > tol):
        out.append(FeasibilityViolation("bound", f"column {k}", float(max(lo[k], hi[k]))))
    cones = program.all_cones()
    if len(cones):
        p, q, i, v = (z[cones[:, k]] for k in range(4))
        excess = 0.5 * (np.sqrt(4 * p**2 + 4 * q**2 + (i - v) ** 2) - i - v)
        for m in np.flatnonzero(excess > tol):
            out.append(FeasibilityViolation("cone", f"cone {m}", float(excess[m])))
    # integrality is checked on every binary of the original build, fixed or not
    for k in program.meta.binaries:
        dev = min(abs(z[k]), abs(1.0 - z[k]))
        if dev > tol:
            out.append(FeasibilityViolation("integrality", f"column {k}", float(dev)))
    out.extend(_radiality(program, z))
    return ViolationReport(tuple(out))
