"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest -s tests/test_acceptance.py`` to see them).

Every tolerance is fixed here; nothing is calibrated at run time.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

import structflow as sf
from conftest import covered_vector, make_rng, random_forest, random_overlapping
from structflow.cur import cur_solve
from structflow.datagen import gen_problem
from structflow.duality import LossSpec, dual_norm, dual_norm_partition
from structflow.flowgraph import build_canonical
from structflow.maxflow import max_flow, warm_restart
from structflow.oracles import (oracle_dual_norm_bisect, oracle_max_flow_ek,
                                oracle_prox_dual, oracle_sorted_l1_projection)
from structflow.projections import project_l1_ball
from structflow.prox import prox_overlapping_linf, prox_l1, prox_group_linf, prox_tree
from structflow.solvers import (Problem, admm_linearized, admm_loss_split,
                                fista, subgradient)


@contextmanager
def criterion(number, name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number:2d} {name}: FAIL")
        raise
    print(f"ACCEPTANCE {number:2d} {name}: PASS")


def test_01_prox_oracle_equivalence():
    with criterion(1, "prox matches block-coordinate dual oracle"):
        rng = make_rng(101)
        start = time.monotonic()
        worst = 0.0
        for k in range(200):
            gs = random_overlapping(rng, p_max=30, m_max=12)
            u = rng.normal(0.0, 1.0, gs.p)
            lam = float(10.0 ** rng.uniform(-2.0, 1.0))  # three decades
            res = prox_overlapping_linf(u, gs, lam, certify=True)
            ora = oracle_prox_dual(u, gs, lam)
            worst = max(worst, float(np.max(np.abs(res.w - ora.w))))
            assert res.certificate.ok, f"certificate failed on instance {k}"
        elapsed = time.monotonic() - start
        assert worst <= 1e-6, f"worst deviation {worst:.3e}"
        assert elapsed <= 120.0, f"took {elapsed:.1f}s (budget 120s)"


def test_02_closed_form_agreement():
    with criterion(2, "flow prox matches all closed forms"):
        rng = make_rng(202)
        # singletons vs soft thresholding
        for _ in range(100):
            p = int(rng.integers(2, 60))
            u = rng.normal(0, 1, p)
            lam = float(10.0 ** rng.uniform(-2, 0.5))
            gs = sf.make_singletons(p)
            d = np.abs(prox_overlapping_linf(u, gs, lam, certify=True).w
                       - prox_l1(u, lam)).max()
            assert d <= 1e-9
        # partitions vs blockwise thresholding
        for _ in range(100):
            p = int(rng.integers(4, 60))
            blocks, start = [], 1
            while start <= p:
                width = int(rng.integers(1, 6))
                blocks.append(tuple(range(start, min(start + width, p + 1))))
                start += width
            gs = sf.make_partition(blocks, p)
            u = rng.normal(0, 1, p)
            lam = float(10.0 ** rng.uniform(-2, 0.5))
            d = np.abs(prox_overlapping_linf(u, gs, lam, certify=True).w
                       - prox_group_linf(u, gs, lam)).max()
            assert d <= 1e-9
        # random trees (up to p = 1000) vs sequential composition
        for k in range(100):
            p_max = 1000 if k % 10 == 0 else 80
            gs = sf.make_tree(random_forest(rng, p_max=p_max))
            u = rng.normal(0, 1, gs.p)
            lam = float(10.0 ** rng.uniform(-2, 0.5))
            d = np.abs(prox_overlapping_linf(u, gs, lam, certify=True).w
                       - prox_tree(u, gs, lam, "linf")).max()
            assert d <= 1e-9


def test_03_optimality_certificates():
    with criterion(3, "per-group optimality certificates"):
        rng = make_rng(303)
        # the same instance families as criteria 1-2, all certified
        for _ in range(60):
            gs = random_overlapping(rng, p_max=30, m_max=12)
            u = rng.normal(0, 1, gs.p)
            lam = float(10.0 ** rng.uniform(-2, 1))
            res = prox_overlapping_linf(u, gs, lam, certify=True)
            cert = res.certificate
            assert cert.tol == pytest.approx(1e-8 * (1 + np.abs(u).max()))
            assert cert.ok, f"violation {cert.max_violation:.3e}"
        for _ in range(30):
            gs = sf.make_tree(random_forest(rng, p_max=120))
            u = rng.normal(0, 1, gs.p)
            res = prox_overlapping_linf(u, gs, 0.3, certify=True)
            assert res.certificate.ok


def test_04_dual_norm():
    with criterion(4, "dual norm: closed forms, oracle, prox threshold"):
        rng = make_rng(404)
        # singletons: sup norm, exact
        for _ in range(20):
            p = int(rng.integers(2, 40))
            kappa = rng.normal(0, 1, p)
            assert abs(dual_norm(kappa, sf.make_singletons(p))
                       - np.abs(kappa).max()) <= 1e-10
        # partitions: max_g ||kappa_g||_1 / eta_g, exact
        for _ in range(20):
            p = int(rng.integers(4, 40))
            blocks, start = [], 1
            while start <= p:
                width = int(rng.integers(1, 5))
                blocks.append(tuple(range(start, min(start + width, p + 1))))
                start += width
            gs = sf.GroupStructure(p, tuple(blocks),
                                   rng.random(len(blocks)) + 0.2)
            kappa = rng.normal(0, 1, p)
            assert abs(dual_norm(kappa, gs)
                       - dual_norm_partition(kappa, gs, "linf")) <= 1e-10
        # overlapping groups vs bisection oracle
        for _ in range(100):
            gs = random_overlapping(rng, p_max=30, m_max=10)
            kappa = covered_vector(rng, gs)
            a = dual_norm(kappa, gs)
            b = oracle_dual_norm_bisect(kappa, gs, tol=1e-11)
            assert a == pytest.approx(b, rel=1e-6, abs=1e-9)
        # prox threshold equivalence across a lambda sweep
        for _ in range(15):
            gs = random_overlapping(rng, p_max=20, m_max=8)
            u = covered_vector(rng, gs)
            if np.abs(u).max() == 0:
                continue
            thr = dual_norm(u, gs)
            for fac in (0.25, 0.8, 0.97, 1.03, 1.3, 4.0):
                w = prox_overlapping_linf(u, gs, thr * fac).w
                assert (np.max(np.abs(w)) <= 1e-9) == (fac >= 1.0)


def test_05_max_flow_against_reference():
    with criterion(5, "push-relabel matches Edmonds-Karp; warm restarts"):
        rng = make_rng(505)
        for k in range(500):
            if k % 5 == 0:
                # stretch towards the 200-vertex bound with narrow groups
                p = int(rng.integers(60, 100))
                m = int(rng.integers(60, 100))
                groups = tuple(
                    tuple(sorted(rng.choice(p, size=int(rng.integers(1, 7)),
                                            replace=False) + 1))
                    for _ in range(m))
                gs = sf.GroupStructure(p, groups, rng.random(m) + 0.1)
            else:
                gs = random_overlapping(rng, p_max=25, m_max=12)
            assert gs.p + gs.n_groups + 2 <= 200
            lam = float(rng.random() * 2 + 0.01)
            caps = rng.random(gs.p) * 2
            fg = build_canonical(gs, caps, lam)
            value = max_flow(fg, caps).value
            ref = oracle_max_flow_ek(fg, caps)
            assert abs(value - ref) <= 1e-9
        # warm restarts across random perturbation sequences
        for _ in range(100):
            gs = random_overlapping(rng, p_max=25, m_max=10)
            fg = build_canonical(gs, np.ones(gs.p), 0.9)
            caps = rng.random(gs.p)
            state = max_flow(fg, caps)
            for _ in range(4):
                caps = np.maximum(caps + rng.normal(0, 0.3, gs.p), 0.0)
                state = warm_restart(fg, state, caps)
                cold = max_flow(fg, caps)
                assert abs(state.value - cold.value) <= 1e-9


def test_06_nested_graph_equivalence():
    with criterion(6, "simplified nested graphs match canonical"):
        rng = make_rng(606)
        for _ in range(100):
            gs = sf.make_tree(random_forest(rng, p_max=80))
            u = rng.normal(0, 1, gs.p)
            lam = float(10.0 ** rng.uniform(-2, 0.5))
            a = prox_overlapping_linf(u, gs, lam, simplify=True).w
            b = prox_overlapping_linf(u, gs, lam, simplify=False).w
            assert np.max(np.abs(a - b)) <= 1e-9


def test_07_solver_agreement_and_ordering():
    with criterion(7, "solver agreement; certified gaps; SG ordering"):
        rng = make_rng(707)
        for k in range(20):
            n = int(rng.integers(20, 101))
            p = int(rng.integers(30, 501))
            X, y, w0, gs = gen_problem(seed=7000 + k, n=n, p=p,
                                       family="windows3", sparsity=0.25)
            loss = LossSpec("square", y)
            lam = 0.15 * dual_norm(X.T @ loss.grad(np.zeros(n)), gs)
            prob = Problem(X=X, loss=loss, lam=lam, gs=gs)
            w_f, tr_f = fista(prob, eps_gap=1e-7, max_iter=20000)
            assert tr_f.final_gap <= 1e-6, "FISTA gap not certified"
            ref = tr_f.final_objective
            w_a, tr_a = admm_loss_split(prob, gamma=2.0, max_iter=15000,
                                        tol=1e-6, record_every=500)
            w_l, tr_l = admm_linearized(prob, gamma=2.0, max_iter=15000,
                                        tol=1e-6, record_every=500)
            assert abs(tr_a.final_objective - ref) <= 1e-3 * abs(ref)
            assert abs(tr_l.final_objective - ref) <= 1e-3 * abs(ref)
        # qualitative ordering at (n, p) = (100, 1000): FISTA below SG at
        # equal wall-clock time
        X, y, w0, gs = gen_problem(seed=77, n=100, p=1000,
                                   family="windows3", sparsity=0.2)
        loss = LossSpec("square", y)
        lam = 0.1 * dual_norm(X.T @ loss.grad(np.zeros(100)), gs)
        prob = Problem(X=X, loss=loss, lam=lam, gs=gs)
        budget = 3.0
        w_f, tr_f = fista(prob, eps_gap=1e-12, max_iter=10**9,
                          max_seconds=budget)
        w_s, tr_s = subgradient(prob, a=0.1, b=100.0, max_iter=10**9,
                                max_seconds=budget)
        assert prob.objective(w_f) < prob.objective(w_s)


def test_08_large_grid_prox_scaling():
    with criterion(8, "quarter-million-variable grid prox in budget"):
        lam = 0.8
        times = {}
        # warm the jit on a small instance first
        prox_overlapping_linf(np.ones(16), sf.make_grid_squares(4, 4, 2), 0.1)
        for side in (128, 256, 512):
            p = side * side
            gs = sf.make_grid_squares(side, side, 2, cyclic=False)
            u = make_rng(800 + side).standard_normal(p)
            start = time.monotonic()
            res = prox_overlapping_linf(u, gs, lam, certify=True)
            times[p] = time.monotonic() - start
            assert res.certificate.ok, f"certificate failed at p={p}"
        assert times[512 * 512] <= 120.0, f"took {times[512*512]:.1f}s"
        # sub-quadratic scaling across 2^14, 2^16, 2^18
        slope = np.log(times[2**18] / times[2**14]) / np.log(2**18 / 2**14)
        assert slope < 2.0, f"scaling exponent {slope:.2f}"
        print(f"  [p=2^14: {times[2**14]:.2f}s, p=2^16: {times[2**16]:.2f}s, "
              f"p=2^18: {times[2**18]:.2f}s, exponent {slope:.2f}]", end=" ")


def test_09_cur_planted_recovery():
    with criterion(9, "CUR recovers a planted rank-2 factorization"):
        from test_cur import planted_matrix
        X, I0, J0 = planted_matrix(seed=99, n=20, p=15, noise=0.01)
        lams = np.geomspace(1e-4, 0.5, 8)
        hit = None
        for lr in lams:
            for lc in lams:
                res = cur_solve(X, float(lr), float(lc), eps_gap=1e-6,
                                max_iter=1500)
                if (set(res.I.tolist()) == set(I0.tolist())
                        and set(res.J.tolist()) == set(J0.tolist())):
                    hit = res
                    break
            if hit is not None:
                break
        assert hit is not None, "no grid point recovered the planted supports"
        assert hit.refit_variance >= 0.95
        empty = cur_solve(X, 1e6, 1e6)
        assert len(empty.I) == 0 and len(empty.J) == 0
        assert empty.refit_variance == 0.0


def test_10_projection_oracle_and_timing():
    with criterion(10, "linear-time l1 projection vs sort oracle"):
        rng = make_rng(1010)
        for _ in range(10000):
            p = int(np.exp(rng.uniform(0.0, np.log(1e5))))
            p = max(p, 1)
            v = rng.random(p) * float(rng.choice([0.01, 1.0, 100.0]))
            radius = float(rng.random() * max(v.sum(), 1e-9) * 1.2)
            got = project_l1_ball(v, radius)
            want = oracle_sorted_l1_projection(v, radius)
            assert np.max(np.abs(got - want)) <= 1e-12
        # expected-linear timing: p=1e5 vs p=1e4 within a factor 15
        def timed(p, reps):
            vs = [rng.random(p) for _ in range(reps)]
            rs = [0.3 * v.sum() for v in vs]
            start = time.perf_counter()
            for v, r in zip(vs, rs):
                project_l1_ball(v, r)
            return (time.perf_counter() - start) / reps
        t4 = timed(10**4, 60)
        t5 = timed(10**5, 60)
        ratio = t5 / t4
        assert ratio <= 15.0, f"timing ratio {ratio:.1f}"
        print(f"  [timing ratio 1e5/1e4 = {ratio:.1f}]", end=" ")
