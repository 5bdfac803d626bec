"""Push-relabel maximum flow on :class:`~structflow.flowgraph.FlowGraph`.

Highest-active vertex selection with gap and periodic global relabeling
(Goldberg-Tarjan; heuristics per Cherkassky-Goldberg).  Capacities are
double-precision reals; saturation uses a relative tolerance, see
:mod:`structflow._kernels`.  The solver runs both phases, so returned states
satisfy conservation everywhere except s and t, and a previous state can seed
a warm restart after the sink capacities change.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .flowgraph import FlowGraph

#: Default: one global relabel per |V| relabel operations.
GLOBAL_RELABEL_PERIOD_FACTOR = 1


@dataclass
class FlowState:
    """A flow on a specific graph: per-arc values plus the totals."""

    graph: FlowGraph
    flow: np.ndarray        # per directed arc, skew-symmetric pairs
    sink_caps: np.ndarray
    source_caps: np.ndarray
    value: float

    @property
    def xi_bar(self) -> np.ndarray:
        """Flow into the sink, one value per variable vertex."""
        return self.flow[self.graph.compiled().sink_arc]

    @property
    def source_flows(self) -> np.ndarray:
        """Flow out of the source, one value per group vertex."""
        return self.flow[self.graph.compiled().source_arc]

    @property
    def entry_flows(self) -> np.ndarray:
        """Flow per (group, child) arc, in entry order."""
        return self.flow[self.graph.compiled().entry_arc]

    def excesses(self) -> np.ndarray:
        """Inflow minus outflow per vertex (zero except s, t at optimum)."""
        c = self.graph.compiled()
        e = np.zeros(c.n)
        np.add.at(e, c.arc_to, self.flow)
        return e


def max_flow(graph: FlowGraph, sink_caps, *, source_caps=None,
             init_flow: np.ndarray | None = None, use_gap: bool = True,
             relabel_period: int | None = None) -> FlowState:
    """Maximum s-t flow with the given per-variable sink capacities.

    ``source_caps`` overrides the graph's static source capacities (used by
    the dual-norm search, where they scale with the current estimate).
    ``init_flow`` seeds the preflow; any capacity violations are truncated.
    Disabling the heuristics (``use_gap=False``, ``relabel_period=0``) only
    affects speed, never the result.
    """
    c = graph.compiled()
    sink_caps = np.asarray(sink_caps, dtype=np.float64)
    if sink_caps.shape != (graph.n_vars,):
        raise ValueError(
            f"sink_caps has shape {sink_caps.shape}, expected ({graph.n_vars},)")
    if np.any(sink_caps < 0) or not np.all(np.isfinite(sink_caps)):
        raise ValueError("sink capacities must be finite and non-negative")
    cap = c.cap_template.copy()
    cap[c.sink_arc] = sink_caps
    if source_caps is not None:
        source_caps = np.asarray(source_caps, dtype=np.float64)
        cap[c.source_arc] = source_caps
    else:
        source_caps = graph.source_cap
    eps = _kernels.arc_epsilons(cap)
    flow = np.zeros(len(cap)) if init_flow is None else init_flow.astype(
        np.float64, copy=True)
    if relabel_period is None:
        relabel_period = GLOBAL_RELABEL_PERIOD_FACTOR * c.n
    value = _kernels.push_relabel(c.n, c.s, c.t, c.adj_ptr, c.adj_arc,
                                  c.arc_to, cap, eps, flow,
                                  use_gap, relabel_period,
                                  np.ones(graph.n_groups, dtype=np.uint8))
    return FlowState(graph=graph, flow=flow, sink_caps=sink_caps,
                     source_caps=np.asarray(source_caps, dtype=np.float64),
                     value=float(value))


def warm_restart(graph: FlowGraph, prev: FlowState, new_sink_caps) -> FlowState:
    """Re-solve after a sink-capacity change, starting from a previous flow.

    Flows on shrunken sink arcs are truncated (the surplus re-appears as
    excess at the variable vertices) and push-relabel resumes.  The value
    always matches a cold start on the new capacities.
    """
    new_sink_caps = np.asarray(new_sink_caps, dtype=np.float64)
    if new_sink_caps.shape != (graph.n_vars,):
        raise ValueError(
            f"sink_caps has shape {new_sink_caps.shape}, "
            f"expected ({graph.n_vars},)")
    if np.array_equal(new_sink_caps, prev.sink_caps):
        return prev
    return max_flow(graph, new_sink_caps, init_flow=prev.flow)


@dataclass
class Cut:
    """A minimum s-t cut: the source side ``V+`` and its complement ``V-``."""

    graph: FlowGraph
    var_plus: np.ndarray  # bool per variable vertex
    grp_plus: np.ndarray  # bool per group vertex
    value: float

    @property
    def var_minus(self) -> np.ndarray:
        return ~self.var_plus

    @property
    def grp_minus(self) -> np.ndarray:
        return ~self.grp_plus


def min_cut(graph: FlowGraph, state: FlowState) -> Cut:
    """Extract the minimum cut certified by a maximum flow.

    ``V+`` holds the vertices reachable from s through non-saturated arcs.
    Raises if the flow is not maximal (t still reachable) -- the cut is only
    meaningful at optimality.
    """
    c = graph.compiled()
    cap = c.cap_template.copy()
    cap[c.sink_arc] = state.sink_caps
    cap[c.source_arc] = state.source_caps
    eps = _kernels.arc_epsilons(cap)
    seen = _kernels.residual_reachable(c.n, c.s, c.adj_ptr, c.adj_arc,
                                       c.arc_to, cap, eps, state.flow)
    if seen[c.t]:
        raise ValueError("min_cut called on a non-maximal flow "
                         "(sink still reachable)")
    nv = graph.n_vars
    var_plus = seen[:nv].astype(bool)
    grp_plus = seen[nv:nv + graph.n_groups].astype(bool)
    value = float(state.source_caps[~grp_plus].sum()
                  + state.sink_caps[var_plus].sum())
    return Cut(graph=graph, var_plus=var_plus, grp_plus=grp_plus, value=value)
