import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covsense.channel import ArrayGeometry, ArrayKind, array_response, array_response_axes, build_covariance
from covsense.structure import (
    StructureError, build_weight_matrix, energy_captured, energy_curve, inverse_permute, kron_factor_params,
    permute, permuted_singular_values, rank_for_energy, ray_vectors, reduced_unknown, toeplitz_to_param,
)

from conftest import crandn, random_scenario

# ULA N=3 weight matrix, printed row by row in the reference derivation
GAMMA_ULA3 = np.array([
    [1, 0, 0, 0, 0],
    [0, 1, 0, 0, 0],
    [0, 0, 1, 0, 0],
    [0, 0, 0, 1, 0],
    [1, 0, 0, 0, 0],
    [0, 1, 0, 0, 0],
    [0, 0, 0, 0, 1],
    [0, 0, 0, 1, 0],
    [1, 0, 0, 0, 0],
])


def vec(X):
    return X.ravel(order="F")


def brute_permute(R, N_t, N_r):
    # block (m, n) of size N_r x N_r becomes row vec-index m + n N_t
    out = np.zeros((N_t * N_t, N_r * N_r), dtype=R.dtype)
    for m in range(N_t):
        for n in range(N_t):
            out[m + n * N_t] = vec(R[m * N_r:(m + 1) * N_r, n * N_r:(n + 1) * N_r])
    return out


class TestPermute:
    def test_identity(self):
        Rp = permute(np.eye(4), 2, 2)
        assert np.array_equal(Rp, np.outer([1, 0, 0, 1], [1, 0, 0, 1]))

    def test_kron_becomes_outer(self, rng):
        A, B = crandn(rng, 3, 3), crandn(rng, 2, 2)
        Rp = permute(np.kron(A, B), 3, 2)
        assert Rp.shape == (9, 4)
        assert np.allclose(Rp, np.outer(vec(A), vec(B)), atol=1e-14)

    def test_matches_index_enumeration(self, rng):
        R = crandn(rng, 12, 12)
        assert np.array_equal(permute(R, 4, 3), brute_permute(R, 4, 3))

    def test_inverse_of_outer(self, rng):
        A, B = crandn(rng, 2, 2), crandn(rng, 3, 3)
        assert np.allclose(inverse_permute(np.outer(vec(A), vec(B)), 2, 3), np.kron(A, B))

    def test_zero(self):
        assert not np.any(inverse_permute(np.zeros((4, 9)), 2, 3))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_round_trips(self, N_t, N_r, seed):
        g = np.random.default_rng(seed)
        R = crandn(g, N_t * N_r, N_t * N_r)
        Rp = crandn(g, N_t * N_t, N_r * N_r)
        assert np.array_equal(inverse_permute(permute(R, N_t, N_r), N_t, N_r), R)
        assert np.array_equal(permute(inverse_permute(Rp, N_t, N_r), N_t, N_r), Rp)

    def test_stacked(self, rng):
        R = crandn(rng, 5, 6, 6)
        Rp = permute(R, 3, 2)
        assert np.array_equal(Rp[2], permute(R[2], 3, 2))

    def test_bad_shape(self):
        with pytest.raises(StructureError):
            permute(np.eye(5), 2, 2)

    @pytest.mark.parametrize("kind,N_t,N_r", [("ULA", 8, 4), ("USPA", 4, 9)])
    def test_sum_of_ray_outer_products(self, kind, N_t, N_r, rng):
        sc = random_scenario(rng, kind, N_t, N_r, K=3, L=4)
        R = build_covariance(sc).R
        tt, tr = ray_vectors(sc)
        Rp = permute(R, N_t, N_r)
        assert np.linalg.norm(Rp - tt @ tr.T) / np.linalg.norm(Rp) < 1e-12


class TestWeightMatrix:
    def test_ula3_printed_matrix(self):
        assert np.array_equal(build_weight_matrix("ULA", 3).matrix, GAMMA_ULA3)

    def test_ula1(self):
        assert np.array_equal(build_weight_matrix("ULA", 1).matrix, [[1.0]])

    def test_uspa_shape(self):
        assert build_weight_matrix("USPA", 4).shape == (16, 9)
        assert build_weight_matrix("USPA", 16).shape == (256, 49)

    def test_one_hot_rows(self):
        G = build_weight_matrix("USPA", 9).matrix
        assert np.array_equal(G.sum(axis=1), np.ones(81))
        assert np.all(G.sum(axis=0) >= 1)

    @pytest.mark.parametrize("N", [2, 5, 8])
    def test_ula_reproduces_toeplitz(self, N, rng):
        g = ArrayGeometry(ArrayKind.ULA, N)
        W = build_weight_matrix("ULA", N)
        for az in rng.uniform(0, 2 * np.pi, 40):
            a = array_response(g, az)
            T = np.outer(a, a.conj())
            # parameters: first column, then first row past the diagonal
            p = np.concatenate([T[:, 0], T[0, 1:]])
            assert np.max(np.abs(W.expand(p) - vec(T))) < 1e-12

    def test_uspa_reproduces_kron_toeplitz(self, rng):
        g = ArrayGeometry(ArrayKind.USPA, 4)
        W = build_weight_matrix("USPA", 4)
        for az, el in rng.uniform(0, 2 * np.pi, (100, 2)):
            ay, az_ = array_response_axes(g, az, el)
            Ty, Tz = np.outer(ay, ay.conj()), np.outer(az_, az_.conj())
            py = np.concatenate([Ty[:, 0], Ty[0, 1:]])
            pz = np.concatenate([Tz[:, 0], Tz[0, 1:]])
            assert np.max(np.abs(W.expand(np.kron(py, pz)) - vec(np.kron(Ty, Tz)))) < 1e-12

    def test_expand_project_adjoint(self, rng):
        W = build_weight_matrix("USPA", 9)
        a, x = crandn(rng, W.num_params), crandn(rng, 81)
        assert np.isclose(np.vdot(x, W.expand(a)), np.vdot(W.project(x), a))
        assert np.allclose(W.project(x), W.matrix.T @ x)

    def test_invalid(self):
        with pytest.raises(ValueError):
            build_weight_matrix("USPA", 5)
        with pytest.raises(ValueError):
            build_weight_matrix("ULA", 0)


class TestToeplitzParam:
    def test_identity(self):
        assert np.array_equal(toeplitz_to_param(np.eye(4), "ULA").a, [1, 0, 0, 0, 0, 0, 0])

    def test_ula_round_trip(self, rng):
        g = ArrayGeometry(ArrayKind.ULA, 6)
        a = array_response(g, 1.234)
        T = np.outer(a, a.conj())
        p = toeplitz_to_param(T, "ULA")
        assert np.max(np.abs(p.weight.expand(p.a) - vec(T))) < 1e-12
        x, y = p.conjugate_pairs.T
        assert np.allclose(p.a[y], p.a[x].conj())

    def test_uspa_factors(self):
        g = ArrayGeometry(ArrayKind.USPA, 9)
        ay, az = array_response_axes(g, 0.7, 1.3)
        Ty, Tz = np.outer(ay, ay.conj()), np.outer(az, az.conj())
        a_y, a_z = kron_factor_params(np.kron(Ty, Tz), 9)
        ref_y = np.concatenate([Ty[:, 0], Ty[0, 1:]])
        ref_z = np.concatenate([Tz[:, 0], Tz[0, 1:]])
        assert np.allclose(np.kron(a_y, a_z), np.kron(ref_y, ref_z), atol=1e-12)
        # per-factor agreement up to a shared unit-modulus scalar
        c = a_y[0] / ref_y[0]
        assert np.isclose(abs(c), 1.0)
        assert np.allclose(a_y, c * ref_y) and np.allclose(a_z, ref_z / c)

    def test_not_toeplitz(self, rng):
        with pytest.raises(StructureError):
            toeplitz_to_param(crandn(rng, 3, 3), "ULA")

    @pytest.mark.parametrize("kind,N_t,N_r", [("ULA", 6, 3), ("USPA", 9, 4)])
    def test_reduced_unknown_reconstructs_permuted(self, kind, N_t, N_r, rng):
        sc = random_scenario(rng, kind, N_t, N_r, K=2, L=6)
        R = build_covariance(sc).R
        gu, gv = build_weight_matrix(kind, N_t), build_weight_matrix(kind, N_r)
        C = reduced_unknown(sc)
        Rp = permute(R, N_t, N_r)
        assert np.linalg.norm(gu.matrix @ C @ gv.matrix.T - Rp) / np.linalg.norm(Rp) < 1e-12


class TestEnergy:
    def test_captured_values(self):
        assert energy_captured([5, 0, 0], 1) == 1.0
        assert energy_captured([1, 1, 1, 1], 2) == 0.5
        assert np.isclose(energy_captured([2, 1], 1), 0.8)

    def test_rank_for_energy(self):
        assert rank_for_energy([5, 0], 0.99) == 1
        assert rank_for_energy([1, 1, 1, 1], 0.5) == 2
        assert rank_for_energy([3, 2, 1], 1.0) == 3

    def test_curve_monotone(self, rng):
        c = energy_curve(rng.uniform(0, 1, 20))
        assert np.all(np.diff(c) >= 0) and np.isclose(c[-1], 1)

    def test_permuted_singular_values_match_dense(self, rng):
        sc = random_scenario(rng, "ULA", 5, 3, K=2, L=4)
        Rp = permute(build_covariance(sc).R, 5, 3)
        dense = np.linalg.svd(Rp, compute_uv=False)
        fast = permuted_singular_values(sc)
        assert np.allclose(fast[: dense.size], dense[: fast.size], atol=1e-12)

    def test_permuted_rank_smaller_at_paper_scale(self, rng):
        wins = 0
        for _ in range(10):
            sc = random_scenario(rng, "ULA", 64, 16, K=1, L=30)
            r_R = rank_for_energy(build_covariance(sc).singular_values, 0.99)
            r_p = rank_for_energy(permuted_singular_values(sc), 0.99)
            wins += r_p < r_R
        assert wins >= 9
