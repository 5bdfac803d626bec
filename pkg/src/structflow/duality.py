"""Penalty evaluation, its dual norm, and duality gaps.

The dual norm of ``sum_g eta_g ||.||_inf`` is the smallest scale tau such
that source capacities ``tau * eta_g`` can carry every coordinate demand
``|kappa_j|`` to the sink.  It is found by the same flow machinery as the
prox: start from the averaging lower bound, max-flow, and while some demand
is unmet shrink to the deficient side of the minimum cut and repeat.

Duality gaps follow the usual Fenchel construction: scale the negative
gradient into the dual-feasible set and add the conjugate value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flowgraph import build_canonical, components_with_maps
from .groups import GroupStructure
from .maxflow import max_flow, min_cut
from .prox import FlowNumericsError, TERMINATION_RTOL, _restrict_flow


def omega(w: np.ndarray, gs: GroupStructure, norm: str = "linf") -> float:
    """The penalty value ``sum_g eta_g ||w_g||``."""
    if norm not in ("l2", "linf"):
        raise ValueError(f"norm must be 'l2' or 'linf', got {norm!r}")
    if gs.n_groups == 0:
        return 0.0
    w = np.asarray(w, dtype=np.float64)
    ptr, members = gs.member_arrays()
    vals = np.abs(w[members])
    if norm == "linf":
        per = np.maximum.reduceat(vals, ptr[:-1])
    else:
        per = np.sqrt(np.add.reduceat(vals * vals, ptr[:-1]))
    return float(per @ gs.weights)


def dual_norm(kappa: np.ndarray, gs: GroupStructure) -> float:
    """Dual norm of the overlapping l-inf penalty at ``kappa``.

    Sign-invariant (computed on magnitudes).  Coordinates not covered by any
    group make the dual norm infinite unless their entry is zero.  Raises on
    structures without groups.
    """
    if gs.n_groups == 0:
        raise ValueError("dual_norm requires at least one group")
    kappa = np.abs(np.asarray(kappa, dtype=np.float64))
    if kappa.shape != (gs.p,):
        raise ValueError(f"kappa has shape {kappa.shape}, expected ({gs.p},)")
    if not np.all(np.isfinite(kappa)):
        raise ValueError("kappa must be finite")
    if kappa.sum() == 0.0:
        return 0.0
    covered = np.zeros(gs.p, dtype=bool)
    _, members = gs.member_arrays()
    covered[members] = True
    if np.any(kappa[~covered] > 0):
        return np.inf
    # Budgets enter as tau * eta_g; build with unit scale and override per call.
    graph = build_canonical(gs, kappa, 1.0)
    best = 0.0
    for comp, _ in components_with_maps(graph):
        if comp.n_vars == 0 or comp.u.sum() == 0.0:
            continue
        if comp.n_groups == 0:
            return np.inf  # nonzero demand with no budget at all
        best = max(best, _dual_norm_connected(comp))
    return best


def _dual_norm_connected(graph) -> float:
    demand = graph.u
    init = None
    while True:
        tau = float(demand.sum() / graph.source_cap.sum())
        state = max_flow(graph, demand, source_caps=tau * graph.source_cap,
                         init_flow=init)
        unmet = np.abs(state.xi_bar - demand) > TERMINATION_RTOL * (1.0 + demand)
        if not unmet.any():
            return tau
        cut = min_cut(graph, state)
        if not (cut.var_minus.any() or cut.grp_minus.any()):
            raise FlowNumericsError(
                "dual norm cut produced an empty deficient side")
        if cut.var_minus.all() and cut.grp_minus.all():
            raise FlowNumericsError(
                "dual norm recursion made no progress; saturation tolerance "
                "fault")
        sub, smap = graph.subgraph(cut.var_minus, cut.grp_minus)
        init = _restrict_flow(graph, state.flow, sub, smap)
        graph = sub
        demand = graph.u


def dual_norm_partition(kappa: np.ndarray, gs: GroupStructure,
                        norm: str = "linf") -> float:
    """Closed-form dual norm for non-overlapping groups.

    ``max_g ||kappa_g||_1 / eta_g`` for the l-inf penalty and
    ``max_g ||kappa_g||_2 / eta_g`` for the l2 penalty.
    """
    if np.any(gs.group_counts() > 1):
        raise ValueError("dual_norm_partition requires disjoint groups")
    kappa = np.asarray(kappa, dtype=np.float64)
    ptr, members = gs.member_arrays()
    vals = np.abs(kappa[members])
    if norm == "linf":
        per = np.add.reduceat(vals, ptr[:-1])
    elif norm == "l2":
        per = np.sqrt(np.add.reduceat(vals * vals, ptr[:-1]))
    else:
        raise ValueError(f"norm must be 'l2' or 'linf', got {norm!r}")
    covered = np.zeros(gs.p, dtype=bool)
    covered[members] = True
    if np.any(np.abs(kappa[~covered]) > 0):
        return np.inf
    return float(np.max(per / gs.weights)) if len(per) else 0.0


# ---------------------------------------------------------------------------
# Losses and Fenchel conjugates.


@dataclass
class LossSpec:
    """A smooth convex data-fitting term evaluated on predictions z = Xw.

    ``kind`` is ``"square"`` (0.5 * ||y - z||^2) or ``"logistic"``
    (sum of log(1 + exp(-y_i z_i)) with labels y in {-1, +1}).
    """

    kind: str
    y: np.ndarray

    def __post_init__(self):
        if self.kind not in ("square", "logistic"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.kind == "logistic" and not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise ValueError("logistic loss needs labels in {-1, +1}")

    def value(self, z: np.ndarray) -> float:
        if self.kind == "square":
            return 0.5 * float(np.sum((self.y - z) ** 2))
        margins = self.y * z
        return float(np.sum(np.logaddexp(0.0, -margins)))

    def grad(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "square":
            return z - self.y
        # -y * sigmoid(-y z), computed stably
        return -self.y / (1.0 + np.exp(self.y * z))

    def conjugate(self, kap: np.ndarray) -> float:
        """Fenchel conjugate f*(kap); +inf outside the domain."""
        if self.kind == "square":
            return 0.5 * float(kap @ kap) + float(kap @ self.y)
        t = -self.y * kap
        if np.any(t < -1e-12) or np.any(t > 1.0 + 1e-12):
            return np.inf
        t = np.clip(t, 0.0, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = np.where(t > 0, t * np.log(t), 0.0) \
                + np.where(t < 1, (1.0 - t) * np.log(1.0 - t), 0.0)
        return float(np.sum(ent))

    def lipschitz_factor(self) -> float:
        """Gradient Lipschitz constant of f(Xw) is this factor * ||X||_2^2."""
        return 1.0 if self.kind == "square" else 0.25


def _matvec(X, v):
    return X @ v


def _rmatvec(X, v):
    return X.T @ v


def operator_norm_sq(X, p: int, iters: int = 300, tol: float = 1e-12) -> float:
    """Largest eigenvalue of X^T X by power iteration (= ||X||_2^2)."""
    rng = np.random.Generator(np.random.Philox(1234))
    v = rng.standard_normal(p)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = _rmatvec(X, _matvec(X, v))
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        new_est = float(v @ w)
        v = w / nrm
        if abs(new_est - est) <= tol * max(1.0, new_est):
            est = new_est
            break
        est = new_est
    return est


def dual_norm_for(kappa: np.ndarray, gs: GroupStructure, norm: str) -> float:
    """Dispatch: flow algorithm for l-inf, closed form for disjoint l2."""
    if norm == "linf":
        return dual_norm(kappa, gs)
    if np.any(gs.group_counts() > 1):
        raise NotImplementedError(
            "no dual-norm evaluator for overlapping l2 groups")
    return dual_norm_partition(kappa, gs, "l2")


def duality_gap(w: np.ndarray, X, loss: LossSpec, lam: float,
                gs: GroupStructure, norm: str = "linf") -> float:
    """Certified optimality gap of w for ``min f(Xw) + lam * Omega(w)``.

    Scales ``-grad f(Xw)`` until ``Omega*(X^T kappa) <= lam`` and evaluates
    the Fenchel gap.  Non-negative up to round-off; zero exactly at the
    optimum.  Returns +inf when the conjugate is undefined at the candidate.
    """
    w = np.asarray(w, dtype=np.float64)
    z = _matvec(X, w)
    g = loss.grad(z)
    primal = loss.value(z) + lam * omega(w, gs, norm)
    if lam > 0:
        ostar = dual_norm_for(_rmatvec(X, g), gs, norm)
        if not np.isfinite(ostar):
            return np.inf
        rho = max(ostar / lam, 1.0)
        kappa = -g / rho
    else:
        kappa = np.zeros_like(g)
    return primal + loss.conjugate(-kappa)
