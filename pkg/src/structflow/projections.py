"""Euclidean projections onto the l1 ball, plain and box-constrained.

Both run in expected linear time (Duchi et al. 2008 / Brucker 1984 style
pivot search with a sort fallback) and operate on non-negative inputs; the
signed wrapper restores signs for callers working with magnitudes.
"""

from __future__ import annotations

import numpy as np

from ._kernels import l1_threshold


def project_l1_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """Project a non-negative vector onto ``{g >= 0, sum(g) <= radius}``.

    Feasible inputs are returned unchanged (same values, new array).
    """
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    v = np.ascontiguousarray(v, dtype=np.float64)
    if radius == 0.0:
        return np.zeros_like(v)
    if v.sum() <= radius:
        return v.copy()
    theta = l1_threshold(v, radius)
    out = v - theta
    np.maximum(out, 0.0, out=out)
    return out


def project_l1_ball_signed(v: np.ndarray, radius: float) -> np.ndarray:
    """Project an arbitrary-sign vector onto the l1 ball of given radius."""
    mag = project_l1_ball(np.abs(v), radius)
    return np.sign(v) * mag


def batch_project_l1_signed(T: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Row-wise signed l1-ball projections of a (k, s) matrix.

    Sort-based, fully vectorized across rows; used where many same-size
    blocks are projected per iteration (the ADMM group updates).
    """
    T = np.asarray(T, dtype=np.float64)
    radii = np.asarray(radii, dtype=np.float64)
    A = np.abs(T)
    srt = -np.sort(-A, axis=1)
    cs = np.cumsum(srt, axis=1)
    ks = np.arange(1, T.shape[1] + 1)
    support = srt - (cs - radii[:, None]) / ks > 0
    rho = np.maximum(support.sum(axis=1), 1)
    theta = (np.take_along_axis(cs, rho[:, None] - 1, axis=1)[:, 0]
             - radii) / rho
    theta = np.maximum(theta, 0.0)
    return np.sign(T) * np.maximum(A - theta[:, None], 0.0)


def project_l1_ball_box(v: np.ndarray, radius: float, ub: np.ndarray) -> np.ndarray:
    """Project onto ``{0 <= g <= ub, sum(g) <= radius}``.

    Solved by repeated clamp-and-rethreshold: project the still-free
    coordinates onto the remaining budget, clamp every coordinate whose
    unconstrained value exceeds its bound, and repeat until the clamp set
    stabilizes.  Each round clamps at least one coordinate, and the
    thresholds decrease monotonically towards the true multiplier, so the
    loop is exact and finite.  With all bounds infinite this reduces to
    :func:`project_l1_ball`.
    """
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    v = np.ascontiguousarray(v, dtype=np.float64)
    ub = np.broadcast_to(np.asarray(ub, dtype=np.float64), v.shape)
    if np.any(ub < 0) or np.any(v < 0):
        raise ValueError("inputs to the box projection must be non-negative")
    out = np.zeros_like(v)
    if radius == 0.0:
        return out

    clipped = np.minimum(v, ub)
    if clipped.sum() <= radius:
        return clipped

    free = np.ones(v.shape, dtype=bool)
    budget = radius
    theta = 0.0
    while True:
        vf = v[free]
        if vf.size == 0 or budget <= 0.0:
            break
        if vf.sum() <= budget:
            theta = 0.0
        else:
            theta = l1_threshold(np.ascontiguousarray(vf), budget)
        over = free & (v - theta > ub)
        if not over.any():
            break
        out[over] = ub[over]
        budget -= ub[over].sum()
        free &= ~over
    if free.any():
        out[free] = np.maximum(v[free] - theta, 0.0)
    return out
