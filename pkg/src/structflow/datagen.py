"""Synthetic regression problems with structured supports.

Design matrices are overcomplete cosine dictionaries (1D atoms for the
sliding-window family, separable 2D atoms for the grid family), supports are
built so that the zero pattern of the ground truth is a union of groups, and
all randomness flows from the Philox 4x64 counter-based generator, so a seed
pins the outputs bit-for-bit across platforms.
"""

from __future__ import annotations

import math

import numpy as np

from .groups import GroupStructure, make_grid_squares, make_sliding_windows

FAMILIES = ("windows3", "grid3x3")


def rng_for(seed: int) -> np.random.Generator:
    """The project-wide seeded generator (Philox 4x64-10, counter-based)."""
    return np.random.Generator(np.random.Philox(seed))


def dct_dictionary_1d(n: int, p: int) -> np.ndarray:
    """n samples of p cosine atoms: atom k is cos(pi*(2t+1)*k / (2p)).

    Columns are scaled to unit l2 norm.  Overcomplete whenever p > n.
    """
    t = np.arange(n)[:, None]
    k = np.arange(p)[None, :]
    X = np.cos(np.pi * (2 * t + 1) * k / (2.0 * p))
    return X / np.linalg.norm(X, axis=0, keepdims=True)


def dct_dictionary_2d(n: int, p: int) -> np.ndarray:
    """Separable 2D cosine atoms on a sqrt(p) x sqrt(p) frequency grid,
    sampled on a sqrt(n) x sqrt(n) spatial grid.  Both must be squares."""
    m = math.isqrt(n)
    q = math.isqrt(p)
    if m * m != n or q * q != p:
        raise ValueError(
            f"the 2D cosine dictionary needs square n and p, got n={n}, p={p}")
    t = np.arange(m)[:, None]
    k = np.arange(q)[None, :]
    base = np.cos(np.pi * (2 * t + 1) * k / (2.0 * q))  # m x q
    X = np.einsum("tk,sl->tskl", base, base).reshape(n, p)
    return X / np.linalg.norm(X, axis=0, keepdims=True)


def structured_support(rng: np.random.Generator, gs: GroupStructure,
                       sparsity: float) -> np.ndarray:
    """Boolean support whose complement is a union of groups.

    Groups are zeroed in a random order until at most ``sparsity * p``
    indices survive (the penalty's zero sets are exactly such unions).
    """
    target = int(round(sparsity * gs.p))
    keep = np.ones(gs.p, dtype=bool)
    if target <= 0:
        keep[:] = False
        return keep
    order = rng.permutation(gs.n_groups)
    ptr, members = gs.member_arrays()
    for g in order:
        if keep.sum() <= target:
            break
        keep[members[ptr[g]:ptr[g + 1]]] = False
    return keep


def gen_problem(seed: int, n: int, p: int, family: str = "windows3",
                sparsity: float = 0.2, noise: float = 0.1
                ) -> tuple[np.ndarray, np.ndarray, np.ndarray, GroupStructure]:
    """Linear model y = X w0 + eps with a group-structured ground truth.

    ``w0`` has about ``sparsity * p`` nonzeros, uniform in [-1, 1], with a
    zero set formed as a union of groups; ``eps`` is white noise scaled so
    that its expected energy is ``noise**2 * ||X w0||^2``.
    """
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")
    rng = rng_for(seed)
    if family == "windows3":
        X = dct_dictionary_1d(n, p)
        gs = make_sliding_windows(p, 3)
    else:
        X = dct_dictionary_2d(n, p)
        q = math.isqrt(p)
        gs = make_grid_squares(q, q, 3, cyclic=False)
    w0 = rng.uniform(-1.0, 1.0, size=p)
    keep = structured_support(rng, gs, sparsity)
    w0[~keep] = 0.0
    signal = X @ w0
    scale = noise * np.linalg.norm(signal) / math.sqrt(n)
    y = signal + scale * rng.standard_normal(n)
    return X, y, w0, gs
