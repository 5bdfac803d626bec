"""structflow: structured-sparsity penalties solved through network flows.

The exact proximal operator of a weighted sum of l-infinity norms over
arbitrary overlapping index groups reduces to a quadratic min-cost flow
problem; this package solves it with a recursive projection / max-flow /
min-cut scheme, evaluates the matching dual norm the same way, and wires
both into first-order solvers (FISTA with certified duality gaps, two ADMM
variants, a subgradient baseline) and a CUR-style row/column selection
factorization.
"""

from .groups import (GroupStructure, GroupStructureError, make_grid_squares,
                     make_partition, make_singletons, make_sliding_windows,
                     make_tree, read_group_file, validate, write_group_file)
from .flowgraph import (FlowGraph, build_canonical, connected_components,
                        simplify_nested, write_dimacs)
from .maxflow import Cut, FlowState, max_flow, min_cut, warm_restart
from .projections import (project_l1_ball, project_l1_ball_box,
                          project_l1_ball_signed)
from .prox import (OptimalityCertificate, ProxResult, compute_flow, prox_l1,
                   prox_group_l2, prox_group_linf, prox_overlapping_linf,
                   prox_tree)
from .duality import (LossSpec, dual_norm, dual_norm_partition, duality_gap,
                      omega, operator_norm_sq)
from .solvers import (Problem, SolverTrace, admm_linearized, admm_loss_split,
                      fista, subgradient)
from .cur import CurResult, cur_grid, cur_refit, cur_solve, explained_variance
from .datagen import gen_problem

__version__ = "0.1.0"

__all__ = [
    "GroupStructure", "GroupStructureError", "make_grid_squares",
    "make_partition", "make_singletons", "make_sliding_windows", "make_tree",
    "read_group_file", "validate", "write_group_file",
    "FlowGraph", "build_canonical", "connected_components", "simplify_nested",
    "write_dimacs",
    "Cut", "FlowState", "max_flow", "min_cut", "warm_restart",
    "project_l1_ball", "project_l1_ball_box", "project_l1_ball_signed",
    "OptimalityCertificate", "ProxResult", "compute_flow", "prox_l1",
    "prox_group_l2", "prox_group_linf", "prox_overlapping_linf", "prox_tree",
    "LossSpec", "dual_norm", "dual_norm_partition", "duality_gap", "omega",
    "operator_norm_sq",
    "Problem", "SolverTrace", "admm_linearized", "admm_loss_split", "fista",
    "subgradient",
    "CurResult", "cur_grid", "cur_refit", "cur_solve", "explained_variance",
    "gen_problem",
]
