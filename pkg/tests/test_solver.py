import json
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covsense.channel import build_covariance
from covsense.sensing import DenseOperator, assemble_Q, design_training
from covsense.solver import (
    DegenerateDirectionError, SolverConfig, altmin_update, gcg_alt, negative_gradient_matrix, objective,
    reconstruct_covariance, solve_u, theta_step, top_singular_pair,
)
from covsense.structure import build_weight_matrix, reduced_unknown

from conftest import crandn, random_scenario


def identity_op(q_t, q_v):
    return DenseOperator(np.eye(q_t * q_v), (q_t, q_v))


def random_op(rng, q_t, q_v, oversample=2.0):
    m = int(oversample * q_t * q_v)
    return DenseOperator(crandn(rng, m, q_t * q_v) / np.sqrt(m), (q_t, q_v))


def small_problem(rng, S=3, K_r=2, N_t=4, N_r=3):
    plan = design_training(rng, N_t, N_r, 2, K_r, S)
    op = assemble_Q(plan, build_weight_matrix("ULA", N_t), build_weight_matrix("ULA", N_r))
    return op, crandn(rng, op.shape[0])


class TestObjective:
    def test_empty_factors(self, rng):
        op, s = small_problem(rng)
        empty = np.zeros((7, 0)), np.zeros((5, 0))
        assert np.isclose(objective(*empty, op, s, 3.0), 0.5 * np.vdot(s, s).real)

    def test_perfect_fit(self, rng):
        U, V = crandn(rng, 4, 2), crandn(rng, 3, 2)
        s = (U @ V.T).ravel(order="F")
        assert objective(U, V, identity_op(4, 3), s, 0.0) < 1e-25

    def test_formula(self, rng):
        op, s = small_problem(rng)
        U, V = crandn(rng, 7, 3), crandn(rng, 5, 3)
        r = op.Q @ (U @ V.T).ravel(order="F") - s
        ref = 0.5 * np.sum(np.abs(r) ** 2) + 0.25 * (np.sum(np.abs(U) ** 2) + np.sum(np.abs(V) ** 2))
        assert abs(objective(U, V, op, s, 0.5) - ref) <= 1e-12 * ref


class TestGradient:
    def test_at_zero(self, rng):
        op, s = small_problem(rng)
        G = negative_gradient_matrix(np.zeros((7, 0)), np.zeros((5, 0)), op, s)
        assert np.allclose(G, (op.Q.conj().T @ s).reshape(7, 5, order="F"))

    def test_exact_fit(self, rng):
        op, _ = small_problem(rng)
        U, V = crandn(rng, 7, 2), crandn(rng, 5, 2)
        s = op.apply_factors(U, V)
        assert np.max(np.abs(negative_gradient_matrix(U, V, op, s))) < 1e-12

    def test_finite_differences(self, rng):
        op, s = small_problem(rng)

        def f(C):
            r = op.apply(C) - s
            return 0.5 * np.vdot(r, r).real

        h = 1e-6
        for _ in range(20):
            U, V = crandn(rng, 7, 2), crandn(rng, 5, 2)
            C, D = U @ V.T, crandn(rng, 7, 5)
            fd = (f(C + h * D) - f(C - h * D)) / (2 * h)
            grad = -negative_gradient_matrix(U, V, op, s)
            an = np.vdot(grad, D).real
            assert abs(fd - an) <= 1e-5 * max(abs(an), 1.0)


class TestPowerIteration:
    def test_diagonal(self):
        u, s, v, ok = top_singular_pair(np.diag([3.0, 1.0]))
        assert ok and np.isclose(s, 3.0)
        assert np.isclose(abs(u[0]), 1) and np.isclose(abs(v[0]), 1)

    def test_rank_one(self, rng):
        a, b = crandn(rng, 6), crandn(rng, 4)
        u, s, v, _ = top_singular_pair(np.outer(a, b.conj()))
        assert np.isclose(s, np.linalg.norm(a) * np.linalg.norm(b))
        assert np.isclose(abs(np.vdot(u, a)), np.linalg.norm(a))
        assert np.isclose(abs(np.vdot(v, b.conj())), np.linalg.norm(b))

    def test_against_svd(self, rng):
        for _ in range(5):
            M = crandn(rng, 20, 15)
            u, s, v, ok = top_singular_pair(M, tol=1e-12, max_iter=20_000)
            ref = np.linalg.svd(M, compute_uv=False)[0]
            assert ok and abs(s - ref) <= 1e-8 * ref
            # u v^T is the best rank-one atom: <M, u v^T> = sigma
            assert np.isclose(np.vdot(np.outer(u, v), M).real, s)

    def test_zero_matrix(self):
        _, s, _, _ = top_singular_pair(np.zeros((3, 2)))
        assert s == 0.0


class TestThetaStep:
    def test_aligned(self, rng):
        u, v = crandn(rng, 4), crandn(rng, 3)
        Z = np.outer(u / np.linalg.norm(u), v / np.linalg.norm(v))
        s = 2.5 * Z.ravel(order="F")
        assert np.isclose(theta_step(Z, None, 1.0, identity_op(4, 3), s, 0.4), 2.1)

    def test_regularizer_dominates(self, rng):
        op, s = small_problem(rng)
        Z = np.outer(crandn(rng, 7), crandn(rng, 5))
        mu = abs(np.vdot(op.apply(Z), s)) + 1.0
        assert theta_step(Z, None, 1.0, op, s, mu) <= 0

    def test_grid_search(self, rng):
        op, s = small_problem(rng)
        for _ in range(5):
            C_prev = crandn(rng, 7, 1) @ crandn(rng, 1, 5) * 0.1
            G = negative_gradient_matrix(np.zeros((7, 0)), np.zeros((5, 0)), op, s)
            u, _, v, _ = top_singular_pair(G)
            Z, eta, mu = np.outer(u, v), 0.5, 0.05
            th = theta_step(Z, C_prev, eta, op, s, mu)
            assert th > 0
            grid = np.linspace(0, 2 * th, 4001)

            def g(t):
                r = op.apply((1 - eta) * C_prev + t * Z) - s
                return 0.5 * np.vdot(r, r).real + mu * t

            best = grid[np.argmin([g(t) for t in grid])]
            assert abs(best - th) <= grid[1] - grid[0]

    def test_degenerate(self):
        op = DenseOperator(np.zeros((4, 4)), (2, 2))
        with pytest.raises(DegenerateDirectionError):
            theta_step(np.ones((2, 2)), None, 1.0, op, np.ones(4), 0.0)


class TestAltMin:
    def test_projection(self, rng):
        S = crandn(rng, 5, 4)
        V, _ = np.linalg.qr(crandn(rng, 4, 2))
        V = V.conj()  # V^H V = I for the transposed factor
        op = identity_op(5, 4)
        U = solve_u(V, op, S.ravel(order="F"), 0.0)
        assert np.allclose(U, S @ V.conj())
        resid = S - U @ V.T
        assert np.allclose(resid @ V.conj(), 0, atol=1e-12)

    def test_monotone(self, rng):
        for _ in range(100):
            op, s = small_problem(rng)
            r = int(rng.integers(1, 4))
            U, V = crandn(rng, 7, r), crandn(rng, 5, r)
            mu = float(rng.uniform(0, 1))
            phi = objective(U, V, op, s, mu)
            U1, V1, mixed, phi1 = altmin_update(U, V, op, s, mu)
            assert phi1 <= phi * (1 + 1e-12)
            assert np.isclose(phi1, objective(U1, V1, op, s, mu))
            assert np.isclose(mixed, objective(U, V1, op, s, mu))

    def test_large_mu_shrinks(self, rng):
        op, s = small_problem(rng)
        U, V = crandn(rng, 7, 2), crandn(rng, 5, 2)
        norms = []
        for mu in (1.0, 10.0, 100.0):
            U1, V1, _, _ = altmin_update(U, V, op, s, mu)
            norms.append(np.linalg.norm(U1) + np.linalg.norm(V1))
        assert norms[0] > norms[1] > norms[2]


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_factor_norm_bounds_nuclear_norm(m, n, r, seed):
    g = np.random.default_rng(seed)
    U, V = crandn(g, m, r), crandn(g, n, r)
    nuc = np.linalg.svd(U @ V.T, compute_uv=False).sum()
    assert 0.5 * (np.sum(np.abs(U) ** 2) + np.sum(np.abs(V) ** 2)) >= nuc * (1 - 1e-12)
    # balanced factors attain the bound
    A, s, Bh = np.linalg.svd(U @ V.T, full_matrices=False)
    Ub, Vb = A * np.sqrt(s), Bh.T * np.sqrt(s)
    assert np.isclose(0.5 * (np.sum(np.abs(Ub) ** 2) + np.sum(np.abs(Vb) ** 2)), nuc)


class TestGcgAlt:
    def test_zero_data(self, rng):
        op, _ = small_problem(rng)
        U, V, tr = gcg_alt(op, np.zeros(op.shape[0]))
        assert U.shape[1] == 0 and tr.records == [] and tr.initial_objective == 0

    def test_planted_rank_two(self, rng):
        for _ in range(5):
            op = random_op(rng, 7, 5)
            C = crandn(rng, 7, 2) @ crandn(rng, 2, 5)
            s = op.apply(C)
            t0 = time.perf_counter()
            U, V, _ = gcg_alt(op, s, SolverConfig(mu=1e-6 * np.linalg.norm(s), eps=1e-12, eps_altmin=1e-6))
            assert time.perf_counter() - t0 < 1.0
            assert np.linalg.norm(U @ V.T - C) / np.linalg.norm(C) < 1e-3

    def test_objective_never_increases(self, rng):
        for _ in range(10):
            op, s = small_problem(rng, S=4)
            _, _, tr = gcg_alt(op, s, SolverConfig(mu=0.05))
            path = np.array(tr.objective_path)
            accepted = path[0]
            for rec in tr.records:
                if rec.accepted:
                    assert rec.objective <= accepted * (1 + 1e-12)
                    accepted = rec.objective

    def test_trace_jsonl(self, rng):
        op, s = small_problem(rng)
        _, V, tr = gcg_alt(op, s, SolverConfig(mu=0.05))
        lines = [json.loads(l) for l in tr.to_jsonl().splitlines()]
        assert len(lines) == len(tr.records) >= 1
        assert set(lines[0]) >= {"k", "objective", "theta", "eta", "altmin_iterations", "rank"}
        assert lines[0]["eta"] == 1.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(mu=-1)
        with pytest.raises(ValueError):
            SolverConfig(eps=0)


class TestReconstruct:
    @pytest.mark.parametrize("kind,N_t,N_r", [("ULA", 6, 4), ("USPA", 4, 9)])
    def test_true_unknown(self, kind, N_t, N_r, rng):
        sc = random_scenario(rng, kind, N_t, N_r, K=2, L=5)
        R = build_covariance(sc).R
        gu, gv = build_weight_matrix(kind, N_t), build_weight_matrix(kind, N_r)
        R_hat = reconstruct_covariance(reduced_unknown(sc), gu, gv, N_t, N_r)
        assert np.linalg.norm(R_hat - R) / np.linalg.norm(R) < 1e-10

    def test_zero_and_hermitian(self, rng):
        gu, gv = build_weight_matrix("ULA", 3), build_weight_matrix("ULA", 2)
        assert not np.any(reconstruct_covariance(np.zeros((5, 3)), gu, gv, 3, 2))
        R = reconstruct_covariance(crandn(rng, 5, 3), gu, gv, 3, 2)
        assert np.array_equal(R, R.conj().T)
