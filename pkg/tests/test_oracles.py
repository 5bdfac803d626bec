import numpy as np
import pytest

from conftest import random_overlapping
from structflow.flowgraph import build_canonical
from structflow.groups import GroupStructure, make_singletons
from structflow.maxflow import max_flow
from structflow.oracles import (oracle_dual_norm_bisect, oracle_dual_objective,
                                oracle_max_flow_ek, oracle_prox_dual,
                                oracle_sorted_l1_projection)


def test_sorted_projection_examples():
    out = oracle_sorted_l1_projection(np.array([0.5, 0.1]), 0.3)
    assert np.allclose(out, [0.3, 0.0], atol=1e-15)
    v = np.array([0.2, 0.3])
    assert np.array_equal(oracle_sorted_l1_projection(v, 1.0), v)
    assert np.array_equal(oracle_sorted_l1_projection(v, 0.0), np.zeros(2))


def test_prox_oracle_single_group_one_sweep():
    gs = GroupStructure(2, ((1, 2),), np.ones(1))
    res = oracle_prox_dual(np.array([0.5, 0.1]), gs, 0.3, iters=1)
    assert np.allclose(res.w, [0.2, 0.1], atol=1e-12)


def test_prox_oracle_lambda_zero():
    gs = make_singletons(3)
    u = np.array([1.0, -2.0, 0.5])
    res = oracle_prox_dual(u, gs, 0.0)
    assert np.array_equal(res.w, u)


def test_prox_oracle_objective_nonincreasing(rng):
    gs = random_overlapping(rng, p_max=10, m_max=5)
    u = rng.normal(0, 1, gs.p)
    lam = 0.4
    last = np.inf
    for sweeps in (1, 2, 4, 8, 16):
        res = oracle_prox_dual(u, gs, lam, iters=sweeps, tol=0.0)
        val = oracle_dual_objective(u, res.per_group_flows, gs)
        assert val <= last + 1e-12
        last = val


def test_ek_on_single_group():
    gs = GroupStructure(3, ((1, 2, 3),), np.ones(1))
    fg = build_canonical(gs, np.array([2.0, 0.0, 0.0]), 1.0)
    assert oracle_max_flow_ek(fg, [2.0, 0.0, 0.0]) == pytest.approx(1.0)
    assert oracle_max_flow_ek(fg, [0.0, 0.0, 0.0]) == 0.0


def test_ek_matches_push_relabel(rng):
    for _ in range(25):
        gs = random_overlapping(rng, p_max=12, m_max=6)
        caps = rng.random(gs.p)
        fg = build_canonical(gs, caps, 0.6)
        assert oracle_max_flow_ek(fg, caps) == pytest.approx(
            max_flow(fg, caps).value, abs=1e-9)


def test_bisect_singletons(rng):
    gs = make_singletons(4)
    kappa = rng.normal(0, 1, 4)
    assert oracle_dual_norm_bisect(kappa, gs, tol=1e-11) == pytest.approx(
        np.abs(kappa).max(), rel=1e-8)


def test_bisect_zero():
    gs = make_singletons(3)
    assert oracle_dual_norm_bisect(np.zeros(3), gs) == 0.0


def test_bisect_uncovered_infinite():
    gs = GroupStructure(2, ((1,),), np.ones(1))
    assert oracle_dual_norm_bisect(np.array([1.0, 1.0]), gs) == np.inf
