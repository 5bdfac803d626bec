import numpy as np
import pytest

from structflow.groups import GroupStructure


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def random_overlapping(rng, p_max=30, m_max=12, weight_lo=0.1):
    """A random overlapping group structure covering arbitrary subsets."""
    p = int(rng.integers(2, p_max + 1))
    m = int(rng.integers(1, m_max + 1))
    groups = []
    for _ in range(m):
        size = int(rng.integers(1, p + 1))
        groups.append(tuple(sorted(rng.choice(p, size=size, replace=False) + 1)))
    weights = rng.random(m) + weight_lo
    return GroupStructure(p, tuple(groups), weights)


def random_forest(rng, p_max=60):
    """Random forest parent array over 1..p (0 means root)."""
    p = int(rng.integers(2, p_max + 1))
    parent = [0]
    for j in range(2, p + 1):
        parent.append(int(rng.integers(0, j)))  # 0 = new root, else earlier node
    return parent


def covered_vector(rng, gs, scale=1.0):
    """Random mixed-sign vector that is zero off the union of groups."""
    v = rng.normal(0.0, scale, gs.p)
    covered = np.zeros(gs.p, dtype=bool)
    _, members = gs.member_arrays()
    covered[members] = True
    v[~covered] = 0.0
    return v


@pytest.fixture
def rng():
    return make_rng(20240817)
