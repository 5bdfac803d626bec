"""Brute-force reference implementations.

Everything here favors transparency over speed and stays independent of the
production flow solvers: the prox oracle is plain cyclic block-coordinate
minimization of the dual, the max-flow oracle is textbook Edmonds-Karp on an
adjacency map, and the dual-norm oracle is bisection over the budget scale.
They generate golden values for the test suite and power the acceptance
cross-checks; production code never calls them.
"""

from __future__ import annotations

import collections

import numpy as np

from .flowgraph import FlowGraph
from .groups import GroupStructure
from .prox import ProxResult


def oracle_sorted_l1_projection(v: np.ndarray, radius: float) -> np.ndarray:
    """Sort-based projection of a non-negative vector onto the l1 ball."""
    v = np.asarray(v, dtype=np.float64)
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if v.sum() <= radius:
        return v.copy()
    if radius == 0:
        return np.zeros_like(v)
    srt = np.sort(v)[::-1]
    csum = np.cumsum(srt)
    ks = np.arange(1, len(v) + 1)
    rho = int(np.max(np.nonzero(srt - (csum - radius) / ks > 0)[0])) + 1
    # pairwise re-summation of the support keeps theta accurate at scale
    theta = (np.sum(srt[:rho]) - radius) / rho
    return np.maximum(v - theta, 0.0)


def _project_signed(x: np.ndarray, radius: float) -> np.ndarray:
    mag = oracle_sorted_l1_projection(np.abs(x), radius)
    return np.sign(x) * mag


def oracle_prox_dual(u: np.ndarray, gs: GroupStructure, lam: float,
                     iters: int = 10**6, tol: float = 1e-12) -> ProxResult:
    """Prox by cyclic block minimization of the dual.

    Each sweep projects every group's residual onto its l1 budget; the dual
    objective is non-increasing per block update, and the iteration stops
    when no block moved more than ``tol`` (or after ``iters`` sweeps).
    """
    u = np.asarray(u, dtype=np.float64)
    xi = {g: np.zeros(len(gs.groups[g])) for g in range(gs.n_groups)}
    idx = {g: np.asarray(gs.groups[g]) - 1 for g in range(gs.n_groups)}
    total = np.zeros(gs.p)
    if lam > 0:
        for _ in range(iters):
            delta = 0.0
            for g in range(gs.n_groups):
                ig = idx[g]
                resid = u[ig] - (total[ig] - xi[g])
                new = _project_signed(resid, lam * gs.weights[g])
                step = new - xi[g]
                change = np.max(np.abs(step)) if len(step) else 0.0
                if change > 0:
                    total[ig] += step
                    xi[g] = new
                delta = max(delta, change)
            if delta < tol:
                break
    return ProxResult(w=u - total, xi_bar=total.copy(), per_group_flows=xi)


def oracle_dual_objective(u: np.ndarray, xi: dict[int, np.ndarray],
                          gs: GroupStructure) -> float:
    """The dual objective 0.5 * ||u - sum_g xi^g||^2 at a feasible point."""
    total = np.zeros(gs.p)
    for g, vec in xi.items():
        total[np.asarray(gs.groups[g]) - 1] += vec
    return 0.5 * float(np.sum((u - total) ** 2))


def _edge_list(graph: FlowGraph, sink_caps, source_caps=None):
    nv, ng = graph.n_vars, graph.n_groups
    s, t = nv + ng, nv + ng + 1
    src = graph.source_cap if source_caps is None else np.asarray(source_caps)
    big = float(src.sum() + np.sum(sink_caps) + 1.0)
    edges = [(s, nv + g, float(src[g])) for g in range(ng)]
    parent = graph.entry_parent()
    for e in range(graph.n_entries):
        edges.append((nv + int(parent[e]), int(graph.child[e]), big))
    for j in range(nv):
        edges.append((j, t, float(sink_caps[j])))
    return s, t, edges


def oracle_max_flow_ek(graph: FlowGraph, sink_caps, source_caps=None,
                       tol: float = 1e-12) -> float:
    """Edmonds-Karp max-flow value (BFS augmenting paths)."""
    s, t, edges = _edge_list(graph, sink_caps, source_caps)
    cap = collections.defaultdict(float)
    adj: dict[int, set[int]] = collections.defaultdict(set)
    for a, b, c in edges:
        cap[(a, b)] += c
        adj[a].add(b)
        adj[b].add(a)
    flow = collections.defaultdict(float)
    value = 0.0
    while True:
        parent = {s: None}
        queue = collections.deque([s])
        while queue and t not in parent:
            x = queue.popleft()
            for y in adj[x]:
                if y not in parent and cap[(x, y)] - flow[(x, y)] > tol:
                    parent[y] = x
                    queue.append(y)
        if t not in parent:
            return value
        bottleneck = np.inf
        y = t
        while parent[y] is not None:
            x = parent[y]
            bottleneck = min(bottleneck, cap[(x, y)] - flow[(x, y)])
            y = x
        y = t
        while parent[y] is not None:
            x = parent[y]
            flow[(x, y)] += bottleneck
            flow[(y, x)] -= bottleneck
            y = x
        value += bottleneck


def oracle_dual_norm_bisect(kappa: np.ndarray, gs: GroupStructure,
                            tol: float = 1e-10) -> float:
    """Dual norm by bisection on the smallest feasible budget scale.

    A scale tau is feasible when a max-flow with source capacities
    ``tau * eta_g`` saturates every sink demand ``|kappa_j|``.
    """
    from .flowgraph import build_canonical  # local import to keep layering flat

    kappa = np.abs(np.asarray(kappa, dtype=np.float64))
    if gs.n_groups == 0:
        raise ValueError("dual norm needs at least one group")
    demand = kappa.sum()
    if demand == 0:
        return 0.0
    covered = np.zeros(gs.p, dtype=bool)
    for g in gs.groups:
        covered[np.asarray(g) - 1] = True
    if np.any(kappa[~covered] > 0):
        return np.inf
    graph = build_canonical(gs, kappa, 1.0)
    lo = 0.0
    hi = float(demand / gs.weights.min())
    feas_tol = 1e-9 * (1.0 + demand)

    def feasible(tau: float) -> bool:
        value = oracle_max_flow_ek(graph, kappa, source_caps=tau * gs.weights)
        return value >= demand - feas_tol

    # hi is always feasible: some group can carry each covered coordinate.
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
