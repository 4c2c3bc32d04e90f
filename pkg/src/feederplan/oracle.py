"""Backend-free ground truth for radial feeders.

* :func:`sweep_powerflow` -- backward/forward sweep on a fixed radial
  topology with exact (non-linearised) ZIP loads.
* :func:`enumerate_radial_topologies` -- every spanning forest of the branch
  graph, one tree per substation.
* :func:`count_spanning_trees` -- Kirchhoff matrix-tree count, exact integer.
* :func:`brute_force_best_topology` -- minimum-loss topology by exhaustion.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .case_model import NetworkCase

__all__ = [
    "BruteForceResult",
    "EnumerationRefused",
    "NonConvergenceError",
    "PFResult",
    "Topology",
    "TopologyError",
    "brute_force_best_topology",
    "count_spanning_trees",
    "enumerate_radial_topologies",
    "sweep_powerflow",
]

logger = logging.getLogger(__name__)


class TopologyError(ValueError):
    """Closed set is not a spanning forest rooted at the substations."""


class NonConvergenceError(RuntimeError):
    def __init__(self, result: "PFResult"):
        self.result = result
        super().__init__(
            f"sweep did not converge after {result.iterations} iterations "
            f"(last |dV| = {result.last_delta:.3e})")


class EnumerationRefused(RuntimeError):
    """Topology count exceeds the configured ceiling."""


@dataclass(frozen=True)
class Topology:
    closed: frozenset[str]

    @classmethod
    def base(cls, case: NetworkCase) -> "Topology":
        return cls(case.base_closed)

    def open_branches(self, case: NetworkCase) -> list[str]:
        return [br.id for br in case.branches if br.id not in self.closed]

    def sort_key(self) -> tuple[str, ...]:
        return tuple(sorted(self.closed))


@dataclass(frozen=True)
class PFResult:
    v: np.ndarray            # per bus magnitude
    p_from: np.ndarray       # per branch, from-end, from->to sign
    q_from: np.ndarray
    i_mag: np.ndarray        # per branch current magnitude (0 if open)
    loss: float
    p_load: np.ndarray       # served ZIP load per bus
    q_load: np.ndarray
    p_substation: np.ndarray  # per substation (case.substations order)
    q_substation: np.ndarray
    iterations: int
    converged: bool
    max_mismatch: float
    last_delta: float

    def loss_balance(self, p_injection: np.ndarray) -> float:
        """Loss from the energy balance: supply + injections - served load."""
        return float(self.p_substation.sum() + np.sum(p_injection) - self.p_load.sum())


@dataclass(frozen=True)
class _Tree:
    order: tuple[int, ...]   # buses, parents before children
    parent: tuple[int, ...]  # -1 for substations
    via: tuple[int, ...]     # branch index to parent, -1 for substations
    reversed_: tuple[bool, ...]  # branch stored to->from relative to parent->child


def _orient(case: NetworkCase, closed: frozenset[str]) -> _Tree:
    n = case.n_nodes
    f, t = case.branch_ends
    adj: list[list[tuple[int, int, bool]]] = [[] for _ in range(n)]
    n_closed = 0
    for k, br in enumerate(case.branches):
        if br.id in closed:
            n_closed += 1
            adj[f[k]].append((t[k], k, False))
            adj[t[k]].append((f[k], k, True))
    unknown = closed - set(case.branch_index)
    if unknown:
        raise TopologyError(f"unknown branch ids {sorted(unknown)}")
    parent = [-2] * n
    via = [-1] * n
    rev = [False] * n
    order: list[int] = []
    queue: deque[int] = deque()
    for s in case.substations:
        parent[s] = -1
        queue.append(s)
    while queue:
        u = queue.popleft()
        order.append(u)
        for v, k, r in adj[u]:
            if k == via[u]:
                continue
            if parent[v] != -2:
                raise TopologyError(f"closed branch {case.branches[k].id} closes a loop")
            parent[v] = u
            via[v] = k
            rev[v] = r
            queue.append(v)
    if len(order) != n:
        missing = [case.buses[k].id for k in range(n) if parent[k] == -2]
        raise TopologyError(f"buses not served under this topology: {missing[:10]}")
    if n_closed != n - case.n_substations:
        raise TopologyError(f"{n_closed} closed branches, expected {n - case.n_substations}")
    return _Tree(tuple(order), tuple(parent), tuple(via), tuple(rev))


class _Sweeper:
    """Precomputed per-hour data for repeated sweeps on one case."""

    def __init__(self, case: NetworkCase, hour: int, load_model: str | None,
                 p_injection: np.ndarray, q_injection: np.ndarray):
        self.case = case
        pd_, qd_ = case.demand(hour)
        self.pd = pd_.tolist()
        self.qd = qd_.tolist()
        zips = [case.bus_zip(b, load_model) for b in case.buses]
        self.zp = [z.p_triple for z in zips]
        self.zq = [z.q_triple for z in zips]
        self.vr = case.v_rated
        self.pinj = [float(x) for x in p_injection]
        self.qinj = [float(x) for x in q_injection]
        self.r = [br.r for br in case.branches]
        self.x = [br.x for br in case.branches]

    def loads(self, v: Sequence[float]) -> tuple[list[float], list[float]]:
        pl, ql = [], []
        vr = self.vr
        for k, vk in enumerate(v):
            a = vk / vr
            kz, ki, kp = self.zp[k]
            pl.append(self.pd[k] * (kz * a * a + ki * a + kp))
            kz, ki, kp = self.zq[k]
            ql.append(self.qd[k] * (kz * a * a + ki * a + kp))
        return pl, ql

    def run(self, tree: _Tree, v_sub: Mapping[int, float], tol: float,
            max_iter: int) -> PFResult:
        case = self.case
        n = case.n_nodes
        order, parent, via = tree.order, tree.parent, tree.via
        children_first = order[::-1]
        r, x = self.r, self.x
        v = [0.0] * n
        for u in order:
            v[u] = v_sub[u] if parent[u] == -1 else v[parent[u]]
        el = [0.0] * n       # squared current of the branch feeding each bus
        ps = [0.0] * n       # sending-end flows of that branch
        qs = [0.0] * n
        converged = False
        delta = math.inf
        it = 0
        positive = True
        for it in range(1, max_iter + 1):
            pl, ql = self.loads(v)
            acc_p = [pl[k] - self.pinj[k] for k in range(n)]
            acc_q = [ql[k] - self.qinj[k] for k in range(n)]
            for u in children_first:
                p = parent[u]
                if p < 0:
                    continue
                k = via[u]
                ps[u] = acc_p[u] + r[k] * el[u]
                qs[u] = acc_q[u] + x[k] * el[u]
                acc_p[p] += ps[u]
                acc_q[p] += qs[u]
            delta = 0.0
            for u in order:
                p = parent[u]
                if p < 0:
                    continue
                k = via[u]
                vp2 = v[p] * v[p]
                l_new = (ps[u] * ps[u] + qs[u] * qs[u]) / vp2
                v2 = vp2 - 2.0 * (r[k] * ps[u] + x[k] * qs[u]) + (r[k] ** 2 + x[k] ** 2) * l_new
                if not (v2 > 0.0 and math.isfinite(v2) and math.isfinite(l_new)):
                    positive = False
                    break
                vn = math.sqrt(v2)
                delta = max(delta, abs(vn - v[u]), abs(l_new - el[u]))
                v[u] = vn
                el[u] = l_new
            if not positive:
                delta = math.inf
                break
            if delta <= tol:
                converged = True
                break

        # final quantities at the last iterate
        pl, ql = self.loads(v) if positive else ([0.0] * n, [0.0] * n)
        nb = len(case.branches)
        p_from = np.zeros(nb)
        q_from = np.zeros(nb)
        i_mag = np.zeros(nb)
        loss = 0.0
        child_p = [0.0] * n
        child_q = [0.0] * n
        for u in order:
            p = parent[u]
            if p < 0:
                continue
            k = via[u]
            child_p[p] += ps[u]
            child_q[p] += qs[u]
            loss += r[k] * el[u]
            i_mag[k] = math.sqrt(max(el[u], 0.0))
            if tree.reversed_[u]:
                # stored orientation child -> parent: from-end is the child end
                p_from[k] = -(ps[u] - r[k] * el[u])
                q_from[k] = -(qs[u] - x[k] * el[u])
            else:
                p_from[k] = ps[u]
                q_from[k] = qs[u]
        mismatch = 0.0
        for u in order:
            if parent[u] < 0:
                continue
            k = via[u]
            res_p = (ps[u] - r[k] * el[u]) - child_p[u] - (pl[u] - self.pinj[u])
            res_q = (qs[u] - x[k] * el[u]) - child_q[u] - (ql[u] - self.qinj[u])
            mismatch = max(mismatch, abs(res_p), abs(res_q))
        subs = case.substations
        p_sub = np.array([child_p[s] + pl[s] - self.pinj[s] for s in subs])
        q_sub = np.array([child_q[s] + ql[s] - self.qinj[s] for s in subs])
        return PFResult(
            v=np.array(v), p_from=p_from, q_from=q_from, i_mag=i_mag, loss=loss,
            p_load=np.array(pl), q_load=np.array(ql),
            p_substation=p_sub, q_substation=q_sub,
            iterations=it, converged=converged and positive,
            max_mismatch=mismatch if positive else math.inf, last_delta=delta,
        )


def _substation_voltages(case: NetworkCase, substation_v) -> dict[int, float]:
    if substation_v is None:
        out = {s: case.buses[s].v_setpoint for s in case.substations}
    elif isinstance(substation_v, Mapping):
        out = {case.bus_index[b]: float(val) for b, val in substation_v.items()}
        for s in case.substations:
            out.setdefault(s, case.buses[s].v_setpoint)
    else:
        out = {s: float(substation_v) for s in case.substations}
    if any(val is None or val <= 0 for val in out.values()):
        raise ValueError("substation voltage must be positive")
    return out


def _injections(case: NetworkCase, fixed_injections) -> tuple[np.ndarray, np.ndarray]:
    n = case.n_nodes
    if fixed_injections is None:
        return np.zeros(n), np.zeros(n)
    if isinstance(fixed_injections, Mapping):
        p = np.zeros(n)
        q = np.zeros(n)
        for b, (pp, qq) in fixed_injections.items():
            p[case.bus_index[b]] += pp
            q[case.bus_index[b]] += qq
        return p, q
    p, q = fixed_injections
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != (n,) or q.shape != (n,):
        raise ValueError("fixed injections must have one entry per bus")
    return p, q


def sweep_powerflow(case: NetworkCase, topology: Topology | frozenset[str], hour: int = 0,
                    substation_v=None, fixed_injections=None, *,
                    load_model: str | None = None, tol: float = 1e-10,
                    max_iter: int = 200, raise_on_failure: bool = True) -> PFResult:
    """Exact radial power flow on a fixed topology.

    ``substation_v`` is a scalar, a ``{bus_id: v}`` mapping, or ``None`` for
    the case setpoints. ``fixed_injections`` is ``(p, q)`` arrays per bus or a
    ``{bus_id: (p, q)}`` mapping of DER/storage net injections (p.u.).
    """
    closed = topology.closed if isinstance(topology, Topology) else frozenset(topology)
    tree = _orient(case, closed)
    p_inj, q_inj = _injections(case, fixed_injections)
    sweeper = _Sweeper(case, hour, load_model, p_inj, q_inj)
    result = sweeper.run(tree, _substation_voltages(case, substation_v), tol, max_iter)
    if not result.converged and raise_on_failure:
        raise NonConvergenceError(result)
    return result


# --------------------------------------------------------------------------
# enumeration


def _merged_graph(case: NetworkCase) -> tuple[int, list[tuple[int, int, int]]]:
    """Graph with all substations merged into node 0; self-loops dropped."""
    subs = set(case.substations)
    remap = {}
    nxt = 1
    for k in range(case.n_nodes):
        if k in subs:
            remap[k] = 0
        else:
            remap[k] = nxt
            nxt += 1
    f, t = case.branch_ends
    edges = []
    for k in range(len(case.branches)):
        u, v = remap[int(f[k])], remap[int(t[k])]
        if u != v:
            edges.append((u, v, k))
    return nxt, edges


def _bareiss_det(m: list[list[int]]) -> int:
    n = len(m)
    if n == 0:
        return 1
    a = [row[:] for row in m]
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for i in range(k + 1, n):
                if a[i][k] != 0:
                    a[k], a[i] = a[i], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def count_spanning_trees(case: NetworkCase) -> int:
    """Number of radial topologies, by the matrix-tree theorem (exact)."""
    n, edges = _merged_graph(case)
    lap = [[0] * n for _ in range(n)]
    for u, v, _ in edges:
        lap[u][u] += 1
        lap[v][v] += 1
        lap[u][v] -= 1
        lap[v][u] -= 1
    reduced = [row[1:] for row in lap[1:]]
    return _bareiss_det(reduced)


def enumerate_radial_topologies(case: NetworkCase) -> Iterator[Topology]:
    """Yield every spanning forest (one tree per substation) exactly once.

    Include/exclude recursion over the branch list on a union-find with
    rollback: a branch is included only if it joins two components, and a
    path stops as soon as ``N_n - N_s`` branches are held.
    """
    n, edges = _merged_graph(case)
    ids = [br.id for br in case.branches]
    needed = n - 1
    m = len(edges)
    parent = list(range(n))
    rank = [0] * n

    def find(a: int) -> int:
        while parent[a] != a:
            a = parent[a]
        return a

    chosen: list[int] = []

    def rec(k: int) -> Iterator[Topology]:
        if len(chosen) == needed:
            yield Topology(frozenset(ids[edges[j][2]] for j in chosen))
            return
        if len(chosen) + (m - k) < needed:
            return
        u, v, _ = edges[k]
        ru, rv = find(u), find(v)
        if ru != rv:
            if rank[ru] > rank[rv]:
                ru, rv = rv, ru
            bumped = rank[ru] == rank[rv]
            parent[ru] = rv
            if bumped:
                rank[rv] += 1
            chosen.append(k)
            yield from rec(k + 1)
            chosen.pop()
            parent[ru] = ru
            if bumped:
                rank[rv] -= 1
        yield from rec(k + 1)

    yield from rec(0)


# --------------------------------------------------------------------------
# brute force


@dataclass(frozen=True)
class BruteForceResult:
    topology: Topology
    loss: float
    pf: PFResult
    total: int
    evaluated: int
    nonconverged: int = 0
    limit_violations: int = 0
    skipped: dict = field(default_factory=dict)

    def __iter__(self):
        # allows ``topology, loss = brute_force_best_topology(...)``
        return iter((self.topology, self.loss))


def _within_limits(case: NetworkCase, pf: PFResult, tol: float = 1e-9) -> bool:
    for k, b in enumerate(case.buses):
        if b.kind == "substation":
            continue
        if pf.v[k] < b.v_min - tol or pf.v[k] > b.v_max + tol:
            return False
    for k, br in enumerate(case.branches):
        if pf.i_mag[k] > br.i_max + tol:
            return False
    return True


def brute_force_best_topology(case: NetworkCase, hour: int = 0, substation_v=None,
                              fixed_injections=None, *, load_model: str | None = None,
                              ceiling: int = 10**6, enforce_limits: bool = True,
                              tol: float = 1e-10) -> BruteForceResult:
    """Sweep every radial topology and keep the minimum-loss converged one.

    Non-converged topologies, and with ``enforce_limits`` those that breach a
    voltage or current limit, are skipped and counted. Ties go to the
    lexicographically smallest closed set.
    """
    total = count_spanning_trees(case)
    if total > ceiling:
        raise EnumerationRefused(
            f"{total} radial topologies exceed the ceiling of {ceiling}")
    p_inj, q_inj = _injections(case, fixed_injections)
    sweeper = _Sweeper(case, hour, load_model, p_inj, q_inj)
    v_sub = _substation_voltages(case, substation_v)
    best: tuple[float, tuple[str, ...]] | None = None
    best_pf = None
    best_topo = None
    evaluated = nonconv = violations = 0
    for topo in enumerate_radial_topologies(case):
        tree = _orient(case, topo.closed)
        pf = sweeper.run(tree, v_sub, tol, 200)
        evaluated += 1
        if not pf.converged:
            nonconv += 1
            continue
        if enforce_limits and not _within_limits(case, pf):
            violations += 1
            continue
        key = (pf.loss, topo.sort_key())
        if best is None or key < best:
            best, best_pf, best_topo = key, pf, topo
    if evaluated != total:
        raise RuntimeError(f"enumerated {evaluated} topologies, matrix-tree count {total}")
    if best_topo is None:
        raise RuntimeError("no converged, limit-feasible topology found")
    logger.info("brute force: %d topologies, %d non-converged, %d outside limits",
                total, nonconv, violations)
    return BruteForceResult(best_topo, best[0], best_pf, total, evaluated, nonconv, violations,
                            {"nonconverged": nonconv, "limits": violations})
