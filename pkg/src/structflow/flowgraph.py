"""Source/sink flow networks for group-structured quadratic flow problems.

The network has one vertex per variable index and one per group, a source s
feeding every group through an arc of capacity ``lam * eta_g``, uncapacitated
arcs from each group to its members (or, after nested simplification, to a
contained group), and one capacitated arc per variable into the sink t.  The
quadratic cost ``(u_j - xibar_j)^2 / 2`` lives only on the sink arcs; max-flow
subroutines receive the sink capacities per call.

Local vertex numbering inside a graph: variables ``0..n_vars-1``, groups
``n_vars..n_vars+n_groups-1``, then s and t.  ``var_ids`` / ``grp_ids`` map
local positions back to the ambient problem, so subgraphs (connected
components, cut sides) stay self-describing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._kernels import union_labels
from .groups import GroupStructure

INF = np.inf


@dataclass
class _Compiled:
    """Flat arc arrays consumed by the push-relabel kernel."""

    n: int
    s: int
    t: int
    adj_ptr: np.ndarray
    adj_arc: np.ndarray
    arc_to: np.ndarray
    cap_template: np.ndarray
    source_arc: np.ndarray  # forward arc id per group
    entry_arc: np.ndarray   # forward arc id per (group, child) entry
    sink_arc: np.ndarray    # forward arc id per variable


@dataclass
class SubgraphMap:
    """Parent-local positions of the vertices/entries kept by a subgraph."""

    var_idx: np.ndarray
    grp_idx: np.ndarray
    entry_idx: np.ndarray


class FlowGraph:
    """Immutable topology + static capacities of one flow network."""

    def __init__(self, var_ids, grp_ids, source_cap, u, child_ptr, child,
                 entry_gid, n_entry_gids):
        self.var_ids = np.asarray(var_ids, dtype=np.int64)
        self.grp_ids = np.asarray(grp_ids, dtype=np.int64)
        self.source_cap = np.asarray(source_cap, dtype=np.float64)
        self.u = np.asarray(u, dtype=np.float64)
        self.child_ptr = np.asarray(child_ptr, dtype=np.int64)
        self.child = np.asarray(child, dtype=np.int64)
        self.entry_gid = np.asarray(entry_gid, dtype=np.int64)
        self.n_entry_gids = int(n_entry_gids)
        self._compiled: _Compiled | None = None
        self._entry_parent: np.ndarray | None = None

    @property
    def n_vars(self) -> int:
        return len(self.var_ids)

    @property
    def n_groups(self) -> int:
        return len(self.grp_ids)

    @property
    def n_vertices(self) -> int:
        """Variables + groups + source + sink."""
        return self.n_vars + self.n_groups + 2

    @property
    def n_entries(self) -> int:
        return len(self.child)

    @property
    def n_edges(self) -> int:
        return self.n_groups + self.n_entries + self.n_vars

    def entry_parent(self) -> np.ndarray:
        """Local group index owning each (group, child) entry."""
        if self._entry_parent is None:
            self._entry_parent = np.repeat(
                np.arange(self.n_groups, dtype=np.int64),
                np.diff(self.child_ptr))
        return self._entry_parent

    # -- compiled arc arrays ------------------------------------------------

    def compiled(self) -> _Compiled:
        if self._compiled is None:
            self._compiled = self._compile()
        return self._compiled

    def _compile(self) -> _Compiled:
        nv, ng, ne = self.n_vars, self.n_groups, self.n_entries
        s = nv + ng
        t = s + 1
        n = t + 1
        n_edges = ng + ne + nv
        efrom = np.empty(n_edges, dtype=np.int64)
        eto = np.empty(n_edges, dtype=np.int64)
        ecap = np.empty(n_edges, dtype=np.float64)
        # source -> group
        efrom[:ng] = s
        eto[:ng] = nv + np.arange(ng)
        ecap[:ng] = self.source_cap
        # group -> child (variable or group); child codes are vertex ids
        efrom[ng:ng + ne] = nv + self.entry_parent()
        eto[ng:ng + ne] = self.child
        ecap[ng:ng + ne] = INF
        # variable -> sink; capacity set per max-flow call
        efrom[ng + ne:] = np.arange(nv)
        eto[ng + ne:] = t
        ecap[ng + ne:] = 0.0

        m = 2 * n_edges
        arc_from = np.empty(m, dtype=np.int64)
        arc_to = np.empty(m, dtype=np.int32)
        cap = np.zeros(m, dtype=np.float64)
        arc_from[0::2] = efrom
        arc_from[1::2] = eto
        arc_to[0::2] = eto
        arc_to[1::2] = efrom
        cap[0::2] = ecap

        counts = np.bincount(arc_from, minlength=n)
        adj_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=adj_ptr[1:])
        adj_arc = np.argsort(arc_from, kind="stable").astype(np.int32)

        fwd = 2 * np.arange(n_edges, dtype=np.int64)
        return _Compiled(n=n, s=s, t=t, adj_ptr=adj_ptr, adj_arc=adj_arc,
                         arc_to=arc_to, cap_template=cap,
                         source_arc=fwd[:ng], entry_arc=fwd[ng:ng + ne],
                         sink_arc=fwd[ng + ne:])

    # -- restriction --------------------------------------------------------

    def subgraph(self, var_keep: np.ndarray, grp_keep: np.ndarray
                 ) -> tuple["FlowGraph", SubgraphMap]:
        """Restrict to a vertex subset, keeping arcs with both ends inside."""
        nv = self.n_vars
        var_idx = np.flatnonzero(var_keep)
        grp_idx = np.flatnonzero(grp_keep)
        new_var = np.full(nv, -1, dtype=np.int64)
        new_var[var_idx] = np.arange(len(var_idx))
        new_grp = np.full(self.n_groups, -1, dtype=np.int64)
        new_grp[grp_idx] = np.arange(len(grp_idx))

        parent = self.entry_parent()
        child_is_var = self.child < nv
        child_ok = np.empty(self.n_entries, dtype=bool)
        child_ok[child_is_var] = var_keep[self.child[child_is_var]]
        child_ok[~child_is_var] = grp_keep[self.child[~child_is_var] - nv]
        keep = grp_keep[parent] & child_ok
        entry_idx = np.flatnonzero(keep)

        kept_child = self.child[entry_idx]
        kept_is_var = kept_child < nv
        new_child = np.empty(len(entry_idx), dtype=np.int64)
        new_child[kept_is_var] = new_var[kept_child[kept_is_var]]
        new_child[~kept_is_var] = len(var_idx) + new_grp[kept_child[~kept_is_var] - nv]
        kept_parent = new_grp[parent[entry_idx]]
        order = np.argsort(kept_parent, kind="stable")
        counts = np.bincount(kept_parent, minlength=len(grp_idx))
        child_ptr = np.zeros(len(grp_idx) + 1, dtype=np.int64)
        np.cumsum(counts, out=child_ptr[1:])
        entry_idx = entry_idx[order]

        sub = FlowGraph(
            var_ids=self.var_ids[var_idx],
            grp_ids=self.grp_ids[grp_idx],
            source_cap=self.source_cap[grp_idx],
            u=self.u[var_idx],
            child_ptr=child_ptr,
            child=new_child[order],
            entry_gid=self.entry_gid[entry_idx],
            n_entry_gids=self.n_entry_gids,
        )
        return sub, SubgraphMap(var_idx=var_idx, grp_idx=grp_idx,
                                entry_idx=entry_idx)

    def component_labels(self) -> tuple[int, np.ndarray]:
        """Component id per local vertex (vars then groups), ignoring s, t."""
        nv = self.n_vars
        n = nv + self.n_groups
        if self.n_entries == 0:
            return n, np.arange(n)
        rows = nv + self.entry_parent()
        return union_labels(n, rows, self.child)


def build_canonical(gs: GroupStructure, u: np.ndarray, lam: float) -> FlowGraph:
    """The network whose min-cost flow solves the prox dual for (gs, lam, u).

    One vertex per index and per group; p + |G| + 2 vertices in total.
    ``u`` must be non-negative (callers flip signs first).  Identical inputs
    produce identical arc orderings.
    """
    if lam <= 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (gs.p,):
        raise ValueError(f"u has shape {u.shape}, expected ({gs.p},)")
    if not np.all(np.isfinite(u)) or np.any(u < 0):
        raise ValueError("u must be finite and non-negative")
    ptr, members = gs.member_arrays()
    return FlowGraph(
        var_ids=np.arange(gs.p, dtype=np.int64),
        grp_ids=np.arange(gs.n_groups, dtype=np.int64),
        source_cap=lam * gs.weights,
        u=u,
        child_ptr=ptr.copy(),
        child=members.copy(),
        entry_gid=np.arange(len(members), dtype=np.int64),
        n_entry_gids=len(members),
    )


def simplify_nested(graph: FlowGraph, gs: GroupStructure) -> FlowGraph:
    """Collapse arcs into nested groups: one arc (g, h) replaces the arcs
    from g to every member of h.

    Containment pairs come from the structure's declared hints, falling back
    to pairwise auto-detection.  Pairs are applied in declaration order; a
    pair whose members were already rerouted through another containment is
    skipped, so any chain/lattice yields a graph with a unique group-to-index
    path per original arc.  Flows on the sink arcs, and hence the prox, are
    unchanged.
    """
    if graph.n_vars != gs.p or graph.n_groups != gs.n_groups:
        raise ValueError("graph does not match the group structure")
    hints = gs.detect_nesting()
    if not hints:
        return graph
    nv = graph.n_vars
    sets = [frozenset(g) for g in gs.groups]
    # Current direct children per group, seeded from the incoming graph.
    var_children: list[set[int]] = []
    grp_children: list[list[int]] = []
    var_gids: list[dict[int, int]] = []
    for g in range(graph.n_groups):
        lo, hi = graph.child_ptr[g], graph.child_ptr[g + 1]
        kids = graph.child[lo:hi]
        gids = graph.entry_gid[lo:hi]
        vmask = kids < nv
        var_children.append(set(int(c) for c in kids[vmask]))
        var_gids.append({int(c): int(i) for c, i in zip(kids[vmask], gids[vmask])})
        grp_children.append([int(c) for c in kids[~vmask]])

    next_gid = graph.n_entry_gids
    new_grp_gid: dict[tuple[int, int], int] = {}
    for parent, child in hints:
        if not sets[child] < sets[parent]:
            raise ValueError(
                f"invalid nesting hint: group {child} is not strictly "
                f"inside group {parent}")
        member_locals = {j - 1 for j in gs.groups[child]}
        if not member_locals <= var_children[parent]:
            continue  # already rerouted through another containment
        var_children[parent] -= member_locals
        grp_children[parent].append(nv + child)
        new_grp_gid[(parent, child)] = next_gid
        next_gid += 1

    child_ptr = np.zeros(graph.n_groups + 1, dtype=np.int64)
    child_list: list[int] = []
    gid_list: list[int] = []
    for g in range(graph.n_groups):
        vs = sorted(var_children[g])
        child_list.extend(vs)
        gid_list.extend(var_gids[g][v] for v in vs)
        for c in sorted(grp_children[g]):
            child_list.append(c)
            gid_list.append(new_grp_gid.get((g, c - nv), -1))
        child_ptr[g + 1] = len(child_list)
    gid_arr = np.asarray(gid_list, dtype=np.int64)
    # Group-group arcs inherited from the input graph (already simplified)
    # keep their ids; freshly created ones were assigned above.
    missing = gid_arr < 0
    if missing.any():
        gid_arr[missing] = next_gid + np.arange(missing.sum())
        next_gid += int(missing.sum())

    return FlowGraph(
        var_ids=graph.var_ids.copy(),
        grp_ids=graph.grp_ids.copy(),
        source_cap=graph.source_cap.copy(),
        u=graph.u.copy(),
        child_ptr=child_ptr,
        child=np.asarray(child_list, dtype=np.int64),
        entry_gid=gid_arr,
        n_entry_gids=next_gid,
    )


def connected_components(graph: FlowGraph) -> list[FlowGraph]:
    """Split into maximal components of the group/variable adjacency.

    s and t are ignored during the traversal (they connect everything); each
    component comes back as a standalone graph with fresh s and t.  The
    union of the component ``var_ids`` is exactly the input's.
    """
    return [sub for sub, _ in components_with_maps(graph)]


def components_with_maps(graph: FlowGraph) -> list[tuple[FlowGraph, SubgraphMap]]:
    n_comp, labels = graph.component_labels()
    if n_comp == 1:
        nv, ng = graph.n_vars, graph.n_groups
        full = SubgraphMap(var_idx=np.arange(nv), grp_idx=np.arange(ng),
                           entry_idx=np.arange(graph.n_entries))
        return [(graph, full)]
    nv = graph.n_vars
    out = []
    for c in range(n_comp):
        mask = labels == c
        var_keep = mask[:nv]
        grp_keep = mask[nv:]
        if not var_keep.any() and not grp_keep.any():
            continue
        out.append(graph.subgraph(var_keep, grp_keep))
    return out


def write_dimacs(graph: FlowGraph, sink_caps: Sequence[float], f) -> None:
    """Max-flow problem dump, one line per arc: ``a from to capacity``.

    Vertices are 1-based with s first and t second.  Uncapacitated arcs get a
    finite surrogate (total source + sink capacity + 1) so external max-flow
    tools can consume the file; this never changes the max-flow value.
    """
    sink_caps = np.asarray(sink_caps, dtype=np.float64)
    nv, ng = graph.n_vars, graph.n_groups
    surrogate = float(graph.source_cap.sum() + sink_caps.sum() + 1.0)
    n = nv + ng + 2
    m = graph.n_edges
    s, t = 1, 2
    def vid(local):  # local vertex -> 1-based with s,t first
        return local + 3
    f.write(f"p max {n} {m}\n")
    f.write(f"n {s} s\n")
    f.write(f"n {t} t\n")
    for g in range(ng):
        f.write("a %d %d %.17g\n" % (s, vid(nv + g), graph.source_cap[g]))
    parent = graph.entry_parent()
    for e in range(graph.n_entries):
        f.write("a %d %d %.17g\n" % (vid(nv + parent[e]), vid(graph.child[e]),
                                     surrogate))
    for j in range(nv):
        f.write("a %d %d %.17g\n" % (vid(j), t, sink_caps[j]))
