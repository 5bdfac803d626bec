"""CUR-style matrix factorization by simultaneous row/column selection.

``min_W 0.5 ||X - X W X||_F^2 + lam_row * sum_i ||W^i||_inf
                              + lam_col * sum_j ||W_j||_inf``

with ``X`` of shape (n, p) and ``W`` of shape (p, n).  The two penalties zero
out entire rows and columns of W; the surviving rows I index columns of X and
the surviving columns J index rows of X, giving ``X W X = C W_IJ R`` with
``C = X[:, I]`` and ``R = X[J, :]``.  The problem is one overlapping-group
instance on the vectorized W (row groups strided, column groups contiguous),
solved with FISTA and the exact flow prox.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .duality import LossSpec
from .groups import GroupStructure
from .solvers import Problem, fista

#: Rows/columns with l-inf magnitude above this are considered selected; the
#: prox produces exact zeros, the threshold only guards matvec round-off.
SELECTION_TOL = 1e-10


@dataclass
class CurResult:
    """Solution of the row/column selection problem on the normalized X."""

    W: np.ndarray
    I: np.ndarray               # selected rows of W == columns of X
    J: np.ndarray               # selected columns of W == rows of X
    W_IJ: np.ndarray            # refit core, |I| x |J|
    explained_variance: float   # of X W X with the shrunk solver W
    refit_variance: float       # of C W_IJ R after the least-squares refit
    X_used: np.ndarray          # the (possibly normalized) matrix optimized


def normalize_for_cur(X: np.ndarray) -> np.ndarray:
    """Center each column and scale the matrix to unit Frobenius norm."""
    Xc = X - X.mean(axis=0, keepdims=True)
    nrm = np.linalg.norm(Xc)
    if nrm == 0:
        raise ValueError("X is constant; nothing to factor")
    return Xc / nrm


def _row_col_groups(n: int, p: int, lam_row: float, lam_col: float) -> GroupStructure:
    """Groups over vec(W) (column-major, W is p x n): strided rows of W with
    weight lam_row, contiguous columns with weight lam_col."""
    groups: list[tuple[int, ...]] = []
    weights: list[float] = []
    if lam_row > 0:
        for i in range(p):
            groups.append(tuple(range(i + 1, p * n + 1, p)))
            weights.append(lam_row)
    if lam_col > 0:
        for j in range(n):
            groups.append(tuple(range(j * p + 1, (j + 1) * p + 1)))
            weights.append(lam_col)
    return GroupStructure(p * n, tuple(groups), np.asarray(weights, dtype=float)
                          if weights else np.zeros(0))


def _sandwich_operator(X: np.ndarray) -> LinearOperator:
    n, p = X.shape

    def mv(vec):
        W = vec.reshape(p, n, order="F")
        return (X @ W @ X).reshape(-1, order="F")

    def rmv(vec):
        Z = vec.reshape(n, p, order="F")
        return (X.T @ Z @ X.T).reshape(-1, order="F")

    return LinearOperator(shape=(n * p, p * n), matvec=mv, rmatvec=rmv,
                          dtype=np.float64)


def explained_variance(X: np.ndarray, C: np.ndarray, U: np.ndarray,
                       R: np.ndarray) -> float:
    """``1 - ||X - C U R||_F^2 / ||X||_F^2``."""
    sq = float(np.linalg.norm(X) ** 2)
    if sq == 0:
        raise ValueError("X has zero Frobenius norm")
    if U.size == 0:
        return 1.0 - float(np.linalg.norm(X) ** 2) / sq  # == 0.0
    return 1.0 - float(np.linalg.norm(X - C @ U @ R) ** 2) / sq


def cur_refit(X: np.ndarray, I, J) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Least-squares core for fixed selections: ``W_IJ = C^+ X R^+``.

    ``C`` collects the selected columns of X, ``R`` the selected rows;
    pseudo-inverses use a thin SVD with a 1e-12 relative cutoff.
    """
    I = np.asarray(I, dtype=np.int64)
    J = np.asarray(J, dtype=np.int64)
    if len(I) == 0 or len(J) == 0:
        raise ValueError("refit needs non-empty row and column selections")
    C = X[:, I]
    R = X[J, :]
    W_IJ = np.linalg.pinv(C, rcond=1e-12) @ X @ np.linalg.pinv(R, rcond=1e-12)
    return C, W_IJ, R


def cur_solve(X: np.ndarray, lam_row: float, lam_col: float, *,
              normalize: bool = True, eps_gap: float = 1e-7,
              max_iter: int = 2000, w0: np.ndarray | None = None) -> CurResult:
    """Fit the penalized W, read off the selections, refit the core.

    ``X`` is column-centered and Frobenius-normalized first (disable with
    ``normalize=False``); all reported quantities refer to the normalized
    matrix.  ``w0`` warm-starts the solver with a previous vec(W).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a matrix")
    if not np.all(np.isfinite(X)):
        raise ValueError("X must be finite")
    Xn = normalize_for_cur(X) if normalize else X
    n, p = Xn.shape
    gs = _row_col_groups(n, p, lam_row, lam_col)
    op = _sandwich_operator(Xn)
    y = Xn.reshape(-1, order="F")
    lam = 1.0 if gs.n_groups else 0.0
    problem = Problem(X=op, loss=LossSpec("square", y), lam=lam, gs=gs,
                      norm="linf")
    vec, _ = fista(problem, eps_gap=eps_gap, max_iter=max_iter, w0=w0)
    W = vec.reshape(p, n, order="F")

    I = np.flatnonzero(np.abs(W).max(axis=1) > SELECTION_TOL)
    J = np.flatnonzero(np.abs(W).max(axis=0) > SELECTION_TOL)
    base_var = explained_variance(Xn, Xn, W, Xn)
    if len(I) and len(J):
        C, W_IJ, R = cur_refit(Xn, I, J)
        refit_var = explained_variance(Xn, C, W_IJ, R)
    else:
        W_IJ = np.zeros((0, 0))
        refit_var = 0.0
    return CurResult(W=W, I=I, J=J, W_IJ=W_IJ,
                     explained_variance=base_var, refit_variance=refit_var,
                     X_used=Xn)


def cur_grid(X: np.ndarray, lam_rows, lam_cols, *, normalize: bool = True,
             eps_gap: float = 1e-7, max_iter: int = 2000) -> list[dict]:
    """Sweep a (lam_row, lam_col) grid; one record per point.

    Consecutive solves share a warm start along each row of the grid.
    """
    records = []
    for lr in lam_rows:
        w0 = None
        for lc in lam_cols:
            res = cur_solve(X, lr, lc, normalize=normalize, eps_gap=eps_gap,
                            max_iter=max_iter, w0=w0)
            w0 = res.W.reshape(-1, order="F")
            records.append({
                "lam_row": float(lr), "lam_col": float(lc),
                "n_rows": int(len(res.I)), "n_cols": int(len(res.J)),
                "variance": res.refit_variance,
                "variance_shrunk": res.explained_variance,
            })
    return records
