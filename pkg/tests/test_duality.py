import numpy as np
import pytest

from conftest import covered_vector, random_overlapping
from structflow.duality import (LossSpec, dual_norm, dual_norm_partition,
                                duality_gap, omega, operator_norm_sq)
from structflow.groups import GroupStructure, make_partition, make_singletons, make_sliding_windows
from structflow.oracles import oracle_dual_norm_bisect
from structflow.prox import prox_overlapping_linf
from structflow.solvers import Problem, fista


def test_omega_examples():
    gs = make_singletons(3)
    w = np.array([1.0, -2.0, 3.0])
    assert omega(np.zeros(3), gs) == 0.0
    assert omega(w, gs, "linf") == 6.0
    one = GroupStructure(3, ((1, 2, 3),), np.array([2.0]))
    assert omega(w, one, "linf") == 6.0  # 2 * max|w|
    assert omega(w, one, "l2") == pytest.approx(2 * np.sqrt(14))


def test_dual_norm_singletons_is_sup_norm():
    gs = make_singletons(3)
    assert dual_norm(np.array([1.0, -2.0, 3.0]), gs) == pytest.approx(3.0, abs=1e-10)


def test_dual_norm_partition_closed_form():
    gs = make_partition([(1, 2), (3,)], 3)
    kappa = np.array([1.0, -2.0, 3.0])
    assert dual_norm(kappa, gs) == pytest.approx(3.0, abs=1e-10)
    assert dual_norm_partition(kappa, gs, "linf") == pytest.approx(3.0)
    weighted = GroupStructure(3, ((1, 2), (3,)), np.array([2.0, 0.5]))
    assert dual_norm(kappa, weighted) == pytest.approx(6.0, abs=1e-10)


def test_dual_norm_zero():
    gs = make_singletons(3)
    assert dual_norm(np.zeros(3), gs) == 0.0


def test_dual_norm_empty_groups_rejected():
    gs = GroupStructure(2, (), np.zeros(0))
    with pytest.raises(ValueError):
        dual_norm(np.ones(2), gs)


def test_dual_norm_uncovered_coordinate_is_infinite():
    gs = GroupStructure(2, ((1,),), np.ones(1))
    assert dual_norm(np.array([1.0, 0.5]), gs) == np.inf
    assert dual_norm(np.array([1.0, 0.0]), gs) == pytest.approx(1.0)


def test_dual_norm_matches_bisection(rng):
    for _ in range(30):
        gs = random_overlapping(rng, p_max=15, m_max=6)
        kappa = covered_vector(rng, gs)
        a = dual_norm(kappa, gs)
        b = oracle_dual_norm_bisect(kappa, gs, tol=1e-11)
        assert a == pytest.approx(b, rel=1e-6, abs=1e-9)


def test_dual_norm_homogeneous(rng):
    gs = random_overlapping(rng, p_max=12, m_max=5)
    kappa = covered_vector(rng, gs)
    base = dual_norm(kappa, gs)
    for c in (0.1, 3.0, 250.0):
        assert dual_norm(c * kappa, gs) == pytest.approx(c * base, rel=1e-9)


def test_generalized_cauchy_schwarz(rng):
    for _ in range(25):
        gs = random_overlapping(rng, p_max=12, m_max=5)
        kappa = covered_vector(rng, gs)
        w = rng.normal(0, 1, gs.p)
        lhs = abs(float(kappa @ w))
        rhs = dual_norm(kappa, gs) * omega(w, gs, "linf")
        assert lhs <= rhs + 1e-9


def test_prox_threshold_equivalence(rng):
    for _ in range(10):
        gs = random_overlapping(rng, p_max=12, m_max=5)
        u = covered_vector(rng, gs)
        if np.abs(u).max() == 0:
            continue
        thr = dual_norm(u, gs)
        for fac in (0.3, 0.9, 1.02, 1.5):
            lam = thr * fac
            w = prox_overlapping_linf(u, gs, lam).w
            if fac > 1.0:
                assert np.max(np.abs(w)) <= 1e-9
            else:
                assert np.max(np.abs(w)) > 1e-9


def test_square_loss_values_and_conjugate(rng):
    y = rng.normal(0, 1, 8)
    loss = LossSpec("square", y)
    z = rng.normal(0, 1, 8)
    assert loss.value(z) == pytest.approx(0.5 * np.sum((y - z) ** 2))
    assert np.allclose(loss.grad(z), z - y)
    # Fenchel-Young equality at kappa = grad(z)
    g = loss.grad(z)
    assert loss.value(z) + loss.conjugate(g) == pytest.approx(float(z @ g),
                                                              abs=1e-10)


def test_logistic_loss_and_conjugate(rng):
    y = np.array([1.0, -1.0, 1.0, -1.0])
    loss = LossSpec("logistic", y)
    z = rng.normal(0, 2, 4)
    val = np.sum(np.log1p(np.exp(-y * z)))
    assert loss.value(z) == pytest.approx(val)
    g = loss.grad(z)
    assert loss.value(z) + loss.conjugate(g) == pytest.approx(float(z @ g),
                                                              abs=1e-9)
    # outside the domain the conjugate is infinite
    assert loss.conjugate(np.array([2.0, 0.0, 0.0, 0.0])) == np.inf


def test_logistic_rejects_bad_labels():
    with pytest.raises(ValueError):
        LossSpec("logistic", np.array([0.0, 1.0]))


def test_lipschitz_bounds(rng):
    X = rng.normal(0, 1, (20, 8))
    s2 = np.linalg.svd(X, compute_uv=False)[0] ** 2
    assert operator_norm_sq(X, 8) == pytest.approx(s2, rel=1e-8)
    assert LossSpec("square", np.zeros(20)).lipschitz_factor() == 1.0
    assert LossSpec("logistic", np.ones(20)).lipschitz_factor() == 0.25


def test_gap_nonnegative_for_arbitrary_w(rng):
    gs = make_sliding_windows(12, 3)
    X = rng.normal(0, 1, (15, 12))
    y = rng.normal(0, 1, 15)
    loss = LossSpec("square", y)
    for _ in range(10):
        w = rng.normal(0, 1, 12)
        gap = duality_gap(w, X, loss, 0.3, gs)
        assert gap >= -1e-10


def test_gap_zero_at_zero_solution(rng):
    gs = make_sliding_windows(10, 3)
    X = rng.normal(0, 1, (12, 10))
    y = rng.normal(0, 1, 12)
    loss = LossSpec("square", y)
    lam = dual_norm(X.T @ loss.grad(np.zeros(12)), gs) * 1.5
    gap = duality_gap(np.zeros(10), X, loss, lam, gs)
    assert abs(gap) <= 1e-10


def test_gap_small_at_solver_optimum(rng):
    gs = make_sliding_windows(10, 3)
    X = rng.normal(0, 1, (20, 10)) / np.sqrt(20)
    y = rng.normal(0, 1, 20)
    prob = Problem(X=X, loss=LossSpec("square", y), lam=0.05, gs=gs)
    w, trace = fista(prob, eps_gap=1e-9, max_iter=20000)
    assert duality_gap(w, X, prob.loss, 0.05, gs) <= 1e-8
