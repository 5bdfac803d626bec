import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from structflow.oracles import oracle_sorted_l1_projection
from structflow.projections import (batch_project_l1_signed, project_l1_ball,
                                    project_l1_ball_box,
                                    project_l1_ball_signed)


def test_plain_examples():
    out = project_l1_ball(np.array([0.5, 0.1]), 0.3)
    assert np.allclose(out, [0.3, 0.0], atol=1e-15)
    out = project_l1_ball(np.array([0.1, 0.1]), 1.0)
    assert np.array_equal(out, [0.1, 0.1])
    out = project_l1_ball(np.array([1.0, 1.0]), 0.0)
    assert np.array_equal(out, [0.0, 0.0])


def test_negative_radius_rejected():
    with pytest.raises(ValueError):
        project_l1_ball(np.ones(2), -0.1)
    with pytest.raises(ValueError):
        project_l1_ball_box(np.ones(2), -0.1, np.ones(2))


def test_box_examples():
    out = project_l1_ball_box(np.array([0.5, 0.1]), 0.3,
                              np.array([0.2, np.inf]))
    assert np.allclose(out, [0.2, 0.1], atol=1e-15)
    out = project_l1_ball_box(np.array([0.7, 0.3]), 0.5, np.zeros(2))
    assert np.array_equal(out, [0.0, 0.0])
    # box alone binds once the budget covers the clipped mass
    v, ub = np.array([0.5, 2.0]), np.array([1.0, 0.4])
    out = project_l1_ball_box(v, 2.0, ub)
    assert np.allclose(out, np.minimum(v, ub), atol=1e-15)


def test_box_negative_entries_rejected():
    with pytest.raises(ValueError):
        project_l1_ball_box(np.array([-0.5, 0.1]), 0.3, np.ones(2))
    with pytest.raises(ValueError):
        project_l1_ball_box(np.array([0.5, 0.1]), 0.3, np.array([-1.0, 1.0]))


def test_box_matches_exhaustive_grid():
    # Hand KKT for the documented example, checked against a fine theta grid.
    v = np.array([0.5, 0.1])
    ub = np.array([0.2, np.inf])
    best, best_val = None, np.inf
    for theta in np.arange(0.0, 0.6, 1e-4):
        cand = np.clip(v - theta, 0.0, ub)
        if cand.sum() <= 0.3 + 1e-12:
            val = 0.5 * np.sum((v - cand) ** 2)
            if val < best_val:
                best, best_val = cand, val
    out = project_l1_ball_box(v, 0.3, ub)
    assert np.allclose(out, best, atol=1e-3)


def test_plain_agrees_with_sorted_oracle(rng):
    for _ in range(400):
        p = int(rng.integers(1, 300))
        v = rng.random(p) * float(rng.choice([0.01, 1.0, 100.0]))
        radius = float(rng.random() * v.sum() * 1.2)
        got = project_l1_ball(v, radius)
        want = oracle_sorted_l1_projection(v, radius)
        assert np.max(np.abs(got - want)) <= 1e-12


def test_box_reduces_to_plain_with_infinite_bounds(rng):
    for _ in range(100):
        p = int(rng.integers(1, 50))
        v = rng.random(p)
        radius = float(rng.random())
        a = project_l1_ball_box(v, radius, np.full(p, np.inf))
        b = project_l1_ball(v, radius)
        assert np.max(np.abs(a - b)) <= 1e-14


def test_feasibility_invariants(rng):
    for _ in range(200):
        p = int(rng.integers(1, 60))
        v = rng.random(p) * 3
        ub = np.where(rng.random(p) < 0.3, np.inf, rng.random(p))
        radius = float(rng.random() * 2)
        out = project_l1_ball_box(v, radius, ub)
        assert out.sum() <= radius + 1e-12
        assert np.all(out >= 0)
        assert np.all(out <= ub + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=40),
       st.floats(0, 20))
def test_order_equivariance(vals, radius):
    v = np.asarray(vals)
    perm = np.argsort(v, kind="stable")[::-1]
    a = project_l1_ball(v, radius)[perm]
    b = project_l1_ball(v[perm], radius)
    assert np.max(np.abs(a - b)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 5), min_size=1, max_size=25),
       st.lists(st.floats(0, 5), min_size=1, max_size=25),
       st.floats(0.01, 10))
def test_nonexpansive(v1, v2, radius):
    m = min(len(v1), len(v2))
    a = np.asarray(v1[:m])
    b = np.asarray(v2[:m])
    pa = project_l1_ball(a, radius)
    pb = project_l1_ball(b, radius)
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-10


def test_signed_projection(rng):
    v = np.array([-0.5, 0.1])
    out = project_l1_ball_signed(v, 0.3)
    assert np.allclose(out, [-0.3, 0.0], atol=1e-15)
    for _ in range(50):
        v = rng.normal(0, 1, 10)
        out = project_l1_ball_signed(v, 0.7)
        assert np.abs(out).sum() <= 0.7 + 1e-12
        assert np.all(np.sign(out[out != 0]) == np.sign(v[out != 0]))


def test_batch_matches_scalar(rng):
    for _ in range(50):
        k, s = int(rng.integers(1, 20)), int(rng.integers(1, 8))
        T = rng.normal(0, 1, (k, s))
        radii = rng.random(k) * 2
        got = batch_project_l1_signed(T, radii)
        for i in range(k):
            want = project_l1_ball_signed(T[i], radii[i])
            assert np.max(np.abs(got[i] - want)) <= 1e-12
