"""First-order solvers for ``min f(Xw) + lam * Omega(w)``.

Four methods with complementary strengths:

* :func:`fista` -- accelerated proximal gradient with backtracking line
  search (Beck-Teboulle) and duality-gap stopping; needs an exact prox, so
  the l-inf penalty (any groups) or disjoint/tree l2 penalties.
* :func:`admm_loss_split` -- consensus ADMM splitting the loss across
  observations and the penalty across groups; square loss.
* :func:`admm_linearized` -- ADMM on the (v = Xw) splitting with a
  ``delta*I - X^T X`` proximity surrogate so the w-step is coordinatewise.
* :func:`subgradient` -- plain projected... no, plain subgradient descent
  with a/(k+b) steps; the baseline everything should beat.

``X`` may be a dense array, a scipy sparse matrix, or any object supporting
``X @ v``, ``X.T @ v`` and ``.shape`` (e.g. a LinearOperator).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .duality import LossSpec, duality_gap, omega, operator_norm_sq
from .groups import GroupStructure
from .prox import prox_group_l2, prox_group_linf, prox_overlapping_linf, prox_tree
from .projections import batch_project_l1_signed

STATUS_GAP = "gap_reached"
STATUS_BUDGET = "iter_budget"
STATUS_STALLED = "stalled"


@dataclass
class Problem:
    """A regularized risk-minimization instance."""

    X: object
    loss: LossSpec
    lam: float
    gs: GroupStructure
    norm: str = "linf"

    def __post_init__(self):
        n, p = self.X.shape
        if len(self.loss.y) != n:
            raise ValueError(f"X has {n} rows but y has {len(self.loss.y)}")
        if p != self.gs.p:
            raise ValueError(f"X has {p} columns but groups expect {self.gs.p}")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.norm not in ("l2", "linf"):
            raise ValueError(f"norm must be 'l2' or 'linf', got {self.norm!r}")
        self._is_partition = self.gs.is_partition() if self.gs.n_groups else False
        self._lipschitz: float | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def lipschitz(self) -> float:
        """Upper bound on the gradient Lipschitz constant of f(Xw)."""
        if self._lipschitz is None:
            self._lipschitz = self.loss.lipschitz_factor() * operator_norm_sq(
                self.X, self.p)
        return self._lipschitz

    def objective(self, w: np.ndarray) -> float:
        return self.loss.value(self.X @ w) + self.lam * omega(w, self.gs,
                                                              self.norm)

    def gap(self, w: np.ndarray) -> float:
        return duality_gap(w, self.X, self.loss, self.lam, self.gs, self.norm)

    def prox(self, v: np.ndarray, scale: float) -> np.ndarray:
        """Exact prox of ``scale * Omega`` at v."""
        if scale == 0.0:
            return v.copy()
        if self.norm == "linf":
            if self._is_partition:
                return prox_group_linf(v, self.gs, scale)
            return prox_overlapping_linf(v, self.gs, scale).w
        if self._is_partition:
            return prox_group_l2(v, self.gs, scale)
        if self.gs.is_tree_structured():
            return prox_tree(v, self.gs, scale, "l2")
        raise ValueError("no exact prox for overlapping l2 groups; "
                         "use the ADMM solvers instead")


@dataclass
class SolverTrace:
    """Per-iteration progress plus the final status."""

    solver: str
    status: str = STATUS_BUDGET
    iterations: list[int] = field(default_factory=list)
    objectives: list[float] = field(default_factory=list)
    gaps: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    monotone_violations: int = 0

    def record(self, it: int, objective: float, gap: float, sec: float) -> None:
        if not np.isfinite(objective):
            raise FloatingPointError(
                f"{self.solver}: objective became non-finite at iteration {it}")
        self.iterations.append(it)
        self.objectives.append(objective)
        self.gaps.append(gap)
        self.seconds.append(sec)

    @property
    def final_objective(self) -> float:
        return self.objectives[-1] if self.objectives else np.nan

    @property
    def final_gap(self) -> float:
        for g in reversed(self.gaps):
            if not np.isnan(g):
                return g
        return np.nan

    def write_csv(self, f) -> None:
        f.write("iter,objective,gap,seconds\n")
        for it, obj, gap, sec in zip(self.iterations, self.objectives,
                                     self.gaps, self.seconds):
            gtxt = "" if np.isnan(gap) else "%.17g" % gap
            f.write("%d,%.17g,%s,%.17g\n" % (it, obj, gtxt, sec))


def fista(problem: Problem, eps_gap: float = 1e-6, L0: float = 1.0,
          nu: float = 1.5, max_iter: int = 10000, *, gap_every: int = 10,
          max_seconds: float | None = None, restart_on_violation: bool = False,
          w0: np.ndarray | None = None) -> tuple[np.ndarray, SolverTrace]:
    """Accelerated proximal gradient with backtracking and gap stopping.

    Each iteration finds the smallest s >= 0 such that the prox-gradient
    step at the extrapolation point with curvature ``L * nu**s`` satisfies
    the quadratic upper-bound test, then applies the momentum update
    ``t_{k+1} = (1 + sqrt(1 + t_k^2)) / 2``.  The duality gap (one flow
    solve) is evaluated every ``gap_every`` iterations and certifies the
    returned iterate.  Objective increases between gap checks are counted on
    the trace; ``restart_on_violation`` additionally resets the momentum
    when one occurs (off by default -- plain monitoring).
    """
    if nu <= 1:
        raise ValueError("line-search factor nu must be > 1")
    X, loss, lam = problem.X, problem.loss, problem.lam
    w = np.zeros(problem.p) if w0 is None else np.asarray(w0, dtype=np.float64).copy()
    y = w.copy()
    t_k = 1.0
    L = float(L0)
    trace = SolverTrace(solver="fista")
    t0 = time.perf_counter()
    last_checked_obj = np.inf

    for k in range(1, max_iter + 1):
        check_gap = (k - 1) % gap_every == 0
        gap = problem.gap(w) if check_gap else np.nan
        if check_gap:
            obj = problem.objective(w)
            if obj > last_checked_obj * (1 + 1e-12) + 1e-15:
                trace.monotone_violations += 1
                if restart_on_violation:
                    t_k = 1.0
                    y = w.copy()
            last_checked_obj = obj
            trace.record(k - 1, obj, gap, time.perf_counter() - t0)
            if gap <= eps_gap:
                trace.status = STATUS_GAP
                return w, trace
        if max_seconds is not None and time.perf_counter() - t0 > max_seconds:
            trace.status = STATUS_STALLED
            return w, trace

        zy = X @ y
        fy = loss.value(zy)
        grad = X.T @ loss.grad(zy)
        # Backtracking: smallest s with the model bound satisfied at L*nu^s.
        s = 0
        while True:
            Lt = L * nu ** s
            w_new = problem.prox(y - grad / Lt, lam / Lt)
            delta = w_new - y
            lhs = loss.value(X @ w_new)
            rhs = fy + float(delta @ grad) + 0.5 * Lt * float(delta @ delta)
            if lhs <= rhs + 1e-12 * max(1.0, abs(rhs)):
                break
            s += 1
            if s > 200:
                raise FloatingPointError("backtracking failed to terminate; "
                                         "L0 is likely corrupt")
        L = Lt
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + t_k * t_k))
        y = w_new + ((t_k - 1.0) / t_next) * (w_new - w)
        w = w_new
        t_k = t_next

    gap = problem.gap(w)
    trace.record(max_iter, problem.objective(w), gap,
                 time.perf_counter() - t0)
    trace.status = STATUS_GAP if gap <= eps_gap else STATUS_BUDGET
    return w, trace


class _GroupProxPlan:
    """Batched per-group norm proxes, grouped by block size.

    Same-size groups are projected together with one vectorized call, which
    keeps the ADMM z-step out of Python loops.
    """

    def __init__(self, gs: GroupStructure, norm: str):
        ptr, members = gs.member_arrays()
        sizes = np.diff(ptr)
        self.norm = norm
        self.weights = gs.weights
        self.classes = []
        for s in np.unique(sizes):
            gidx = np.flatnonzero(sizes == s)
            pos = ptr[gidx][:, None] + np.arange(s)[None, :]
            self.classes.append((gidx, pos, members[pos]))

    def update(self, z: np.ndarray, w: np.ndarray, nu: np.ndarray,
               gamma: float, scale: float) -> None:
        """z^g <- prox of (scale*eta_g/gamma)*||.|| at (w_g - nu^g/gamma)."""
        for gidx, pos, mem in self.classes:
            target = w[mem] - nu[pos] / gamma
            radii = scale * self.weights[gidx] / gamma
            if self.norm == "linf":
                z[pos] = target - batch_project_l1_signed(target, radii)
            else:
                nrm = np.linalg.norm(target, axis=1)
                fac = np.where(nrm <= radii, 0.0,
                               1.0 - radii / np.maximum(nrm, 1e-300))
                z[pos] = fac[:, None] * target


def admm_loss_split(problem: Problem, gamma: float = 1.0,
                    max_iter: int = 5000, tol: float = 1e-6, *,
                    max_seconds: float | None = None,
                    record_every: int = 1) -> tuple[np.ndarray, SolverTrace]:
    """Consensus ADMM with the loss split across observations.

    Every observation i gets its own copy v_i of the weights with the
    rank-one prox of its squared residual, every group g gets an auxiliary
    z^g with a closed-form norm prox, and the w-step is a coordinatewise
    average.  Square loss only (its per-observation prox is closed form).
    Stops when both the consensus residual and the scaled dual residual drop
    below ``tol``.
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    if problem.loss.kind != "square":
        raise ValueError("loss splitting needs a per-observation closed-form "
                         "prox; only the square loss qualifies here")
    X = np.asarray(problem.X, dtype=np.float64)
    yv = problem.loss.y
    n, p = X.shape
    lam = problem.lam
    ptr, members = problem.gs.member_arrays()
    counts = problem.gs.group_counts()
    plan = _GroupProxPlan(problem.gs, problem.norm)
    row_sq = np.einsum("ij,ij->i", X, X)

    w = np.zeros(p)
    v = np.zeros((n, p))
    z = np.zeros(ptr[-1])
    nu = np.zeros(ptr[-1])
    kap = np.zeros((n, p))
    trace = SolverTrace(solver="admm")
    t0 = time.perf_counter()
    denom = gamma * (counts + n)

    for it in range(1, max_iter + 1):
        # w-step: coordinatewise average of all shifted copies.
        acc = (kap + gamma * v).sum(axis=0)
        np.add.at(acc, members, nu + gamma * z)
        w = acc / denom
        # z-step: per-group norm prox.
        z_prev = z.copy()
        plan.update(z, w, nu, gamma, lam)
        # v-step: rank-one prox of each observation's squared residual.
        v_prev = v
        a = w[None, :] - kap / gamma
        resid = yv - np.einsum("ij,ij->i", X, a)
        v = a + (resid / (gamma + row_sq))[:, None] * X
        # Dual ascent.
        r_groups = z - w[members]
        nu += gamma * r_groups
        r_obs = v - w[None, :]
        kap += gamma * r_obs

        primal = max(np.abs(r_groups).max(initial=0.0),
                     np.abs(r_obs).max(initial=0.0))
        dual = gamma * max(np.abs(z - z_prev).max(initial=0.0),
                           np.abs(v - v_prev).max(initial=0.0))
        if it % record_every == 0 or primal < tol and dual < tol:
            trace.record(it, problem.objective(w), np.nan,
                         time.perf_counter() - t0)
        if primal < tol and dual < tol:
            trace.status = STATUS_GAP
            return w, trace
        if max_seconds is not None and time.perf_counter() - t0 > max_seconds:
            trace.status = STATUS_STALLED
            return w, trace
    trace.status = STATUS_BUDGET
    return w, trace


def admm_linearized(problem: Problem, gamma: float = 1.0,
                    delta: float | None = None, max_iter: int = 5000,
                    tol: float = 1e-6, *, max_seconds: float | None = None,
                    record_every: int = 1) -> tuple[np.ndarray, SolverTrace]:
    """ADMM on the prediction splitting v = Xw with a linearized w-step.

    The coupled quadratic is replaced by a proximity term in the metric
    ``delta*I - X^T X`` (positive semidefinite once delta >= ||X||_2^2), so
    the w-step only needs matrix-vector products.  ``delta`` defaults to a
    tight power-iteration bound; smaller values are rejected.
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    if problem.loss.kind != "square":
        raise ValueError("the linearized v-step implemented here is the "
                         "square-loss prox")
    X = problem.X
    yv = problem.loss.y
    n, p = X.shape
    lam = problem.lam
    bound = operator_norm_sq(X, p)
    if delta is None:
        delta = 1.001 * bound if bound > 0 else 1.0
    elif delta < bound * (1 - 1e-9):
        raise ValueError(
            f"delta={delta} is below ||X||_2^2={bound:.6g}; the proximity "
            "metric would be indefinite")
    ptr, members = problem.gs.member_arrays()
    counts = problem.gs.group_counts()
    plan = _GroupProxPlan(problem.gs, problem.norm)

    w = np.zeros(p)
    v = np.zeros(n)
    z = np.zeros(ptr[-1])
    nu = np.zeros(ptr[-1])
    kap = np.zeros(n)
    trace = SolverTrace(solver="lin-admm")
    t0 = time.perf_counter()
    denom = gamma * (counts + delta)
    Xw = X @ w

    for it in range(1, max_iter + 1):
        # w-step under the delta*I - X^T X proximity surrogate, linearized
        # at the previous iterate.
        acc = X.T @ (kap + gamma * v) + gamma * (delta * w - X.T @ Xw)
        np.add.at(acc, members, nu + gamma * z)
        w = acc / denom
        Xw = X @ w
        # z-step: per-group norm prox.
        z_prev = z.copy()
        plan.update(z, w, nu, gamma, lam)
        # v-step: prox of the square loss at the shifted predictions.
        v_prev = v
        v = (gamma * (Xw - kap / gamma) + yv) / (gamma + 1.0)
        # Dual ascent.
        r_groups = z - w[members]
        nu += gamma * r_groups
        r_pred = v - Xw
        kap += gamma * r_pred

        primal = max(np.abs(r_groups).max(initial=0.0),
                     np.abs(r_pred).max(initial=0.0))
        dual = gamma * max(np.abs(z - z_prev).max(initial=0.0),
                           np.abs(v - v_prev).max(initial=0.0))
        if it % record_every == 0 or primal < tol and dual < tol:
            trace.record(it, problem.objective(w), np.nan,
                         time.perf_counter() - t0)
        if primal < tol and dual < tol:
            trace.status = STATUS_GAP
            return w, trace
        if max_seconds is not None and time.perf_counter() - t0 > max_seconds:
            trace.status = STATUS_STALLED
            return w, trace
    trace.status = STATUS_BUDGET
    return w, trace


def omega_subgradient(w: np.ndarray, gs: GroupStructure,
                      norm: str = "linf") -> np.ndarray:
    """A subgradient of Omega at w.

    For l-inf groups the mass goes to one maximum-magnitude coordinate per
    group (lowest index on ties, zero vector on zero groups) -- determinism
    keeps traces reproducible.
    """
    sub = np.zeros(len(w))
    absw = np.abs(w)
    for g, eta in zip(gs.groups, gs.weights):
        idx = np.asarray(g) - 1
        if norm == "linf":
            mx = absw[idx].max()
            if mx > 0:
                j = idx[int(np.argmax(absw[idx]))]
                sub[j] += eta * np.sign(w[j])
        else:
            nrm = np.linalg.norm(w[idx])
            if nrm > 0:
                sub[idx] += eta * w[idx] / nrm
    return sub


def subgradient(problem: Problem, a: float = 0.1, b: float = 100.0,
                max_iter: int = 10000, *, max_seconds: float | None = None,
                record_every: int = 1,
                w0: np.ndarray | None = None) -> tuple[np.ndarray, SolverTrace]:
    """Subgradient descent with step a / (k + b)."""
    if a <= 0 or b < 0:
        raise ValueError("need a > 0 and b >= 0")
    X, loss, lam = problem.X, problem.loss, problem.lam
    w = np.zeros(problem.p) if w0 is None else np.asarray(w0, dtype=np.float64).copy()
    trace = SolverTrace(solver="sg")
    t0 = time.perf_counter()
    for k in range(1, max_iter + 1):
        g = X.T @ loss.grad(X @ w)
        if lam > 0:
            g = g + lam * omega_subgradient(w, problem.gs, problem.norm)
        w = w - (a / (k + b)) * g
        if k % record_every == 0:
            trace.record(k, problem.objective(w), np.nan,
                         time.perf_counter() - t0)
        if max_seconds is not None and time.perf_counter() - t0 > max_seconds:
            trace.status = STATUS_STALLED
            return w, trace
    trace.status = STATUS_BUDGET
    return w, trace
