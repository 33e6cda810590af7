"""Kronecker rearrangement and Toeplitz weight matrices.

Index conventions (0-based): block ``(m, n)`` of an ``N_t N_r`` square matrix
is ``R[m*N_r:(m+1)*N_r, n*N_r:(n+1)*N_r]``; ``permute`` places ``vec`` of that
block in row ``m + n*N_t``. With column-major ``vec`` this gives
``permute(A kron B) = vec(A) vec(B)^T``.

A Toeplitz-Hermitian ``N x N`` matrix ``T`` is parametrized by
``a = [T[0, 0], ..., T[N-1, 0], T[0, 1], ..., T[0, N-1]]`` (first column,
then the strictly upper part of the first row), so ``vec(T) = Gamma a`` with a
one-hot ``Gamma`` of shape ``(N^2, 2N-1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channel import ArrayKind, ChannelScenario, ConfigurationError, array_response_axes


class StructureError(ValueError):
    """Input does not have the assumed (Kronecker-of-)Toeplitz-Hermitian structure."""


def _check_dims(n_rows, n_cols, expected, name):
    if (n_rows, n_cols) != expected:
        raise StructureError(f"{name}: expected shape {expected}, got {(n_rows, n_cols)}")


def permute(R: np.ndarray, N_t: int, N_r: int) -> np.ndarray:
    """Rearrange an ``N_t N_r`` square matrix into ``N_t^2 x N_r^2``.

    Works on stacks: leading axes are preserved.
    """
    R = np.asarray(R)
    _check_dims(*R.shape[-2:], (N_t * N_r, N_t * N_r), "permute")
    lead = R.shape[:-2]
    X = R.reshape(*lead, N_t, N_r, N_t, N_r)  # [..., m, i, n, j]
    X = np.moveaxis(X, (-4, -3, -2, -1), (-3, -1, -4, -2))  # [..., n, m, j, i]
    return X.reshape(*lead, N_t * N_t, N_r * N_r)


def inverse_permute(R_p: np.ndarray, N_t: int, N_r: int) -> np.ndarray:
    R_p = np.asarray(R_p)
    _check_dims(*R_p.shape[-2:], (N_t * N_t, N_r * N_r), "inverse_permute")
    lead = R_p.shape[:-2]
    X = R_p.reshape(*lead, N_t, N_t, N_r, N_r)  # [..., n, m, j, i]
    X = np.moveaxis(X, (-3, -1, -4, -2), (-4, -3, -2, -1))  # [..., m, i, n, j]
    return X.reshape(*lead, N_t * N_r, N_t * N_r)


@dataclass(frozen=True)
class WeightMatrix:
    """One-hot map from structure parameters to ``vec`` of the structured matrix.

    ``cols[row]`` is the parameter index feeding vec-entry ``row``.
    """

    kind: ArrayKind
    size: int
    cols: np.ndarray

    @property
    def num_params(self) -> int:
        if self.kind is ArrayKind.USPA:
            return (2 * math.isqrt(self.size) - 1) ** 2
        return 2 * self.size - 1

    @property
    def shape(self):
        return self.cols.size, self.num_params

    @property
    def matrix(self) -> np.ndarray:
        G = np.zeros(self.shape)
        G[np.arange(self.cols.size), self.cols] = 1.0
        return G

    @property
    def counts(self) -> np.ndarray:
        """Diagonal of ``Gamma^T Gamma``."""
        return np.bincount(self.cols, minlength=self.num_params)

    def expand(self, a: np.ndarray) -> np.ndarray:
        """``Gamma @ a`` along the first axis."""
        return np.asarray(a)[self.cols]

    def project(self, x: np.ndarray) -> np.ndarray:
        """``Gamma^T @ x`` along the first axis."""
        x = np.asarray(x)
        out = np.zeros((self.num_params,) + x.shape[1:], dtype=np.result_type(x, float))
        np.add.at(out, self.cols, x)
        return out


def _ula_cols(N: int) -> np.ndarray:
    p, q = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    # vec row p + q*N holds T[p, q]
    cols = np.where(p >= q, p - q, N - 1 + (q - p))
    return cols.ravel(order="F")


@lru_cache(maxsize=64)
def _cached_weight_matrix(kind: ArrayKind, N: int) -> WeightMatrix:
    if kind is ArrayKind.ULA:
        return WeightMatrix(kind, N, _ula_cols(N))
    n = math.isqrt(N)
    base = _ula_cols(n).reshape(n, n, order="F")  # base[:, a] = Gamma_y^(a) column map
    q = 2 * n - 1
    # block (a, b), a outer: rows of Gamma_y^(a) kron Gamma_z^(b)
    cols = base.T[:, None, :, None] * q + base.T[None, :, None, :]  # [a, b, py, pz]
    return WeightMatrix(kind, N, cols.reshape(-1))


def build_weight_matrix(kind, N: int) -> WeightMatrix:
    """Weight matrix for a ULA (``N^2 x (2N-1)``) or USPA (``N^2 x (2 sqrt(N) - 1)^2``)."""
    kind = ArrayKind(kind)
    if int(N) != N or N < 1:
        raise ConfigurationError(f"weight matrix size must be a positive integer, got {N}")
    if kind is ArrayKind.USPA and math.isqrt(N) ** 2 != N:
        raise ConfigurationError(f"USPA weight matrix needs a perfect square, got {N}")
    return _cached_weight_matrix(kind, int(N))


@dataclass(frozen=True)
class ToeplitzParam:
    a: np.ndarray
    weight: WeightMatrix

    @property
    def conjugate_pairs(self) -> np.ndarray:
        """Index pairs ``(x, y)`` with ``a[y] == conj(a[x])`` for Hermitian input (ULA layout)."""
        N = self.weight.size if self.weight.kind is ArrayKind.ULA else math.isqrt(self.weight.size)
        x = np.arange(1, N)
        return np.column_stack([x, x + N - 1])


STRUCTURE_RTOL = 1e-8


def toeplitz_to_param(T: np.ndarray, kind, N: int | None = None, rtol: float = STRUCTURE_RTOL) -> ToeplitzParam:
    """Parameter vector ``a`` with ``vec(T) = Gamma a``.

    For a USPA ``T`` must be a Kronecker product (or a sum of them) of
    Toeplitz-Hermitian ``sqrt(N) x sqrt(N)`` matrices. The parameter is the
    average of the entries mapped to it, which is exact for structured input;
    deviation beyond ``rtol`` raises :class:`StructureError`.
    """
    T = np.asarray(T)
    N = T.shape[0] if N is None else N
    if T.shape != (N, N):
        raise ValueError(f"expected {N}x{N} matrix, got {T.shape}")
    W = build_weight_matrix(kind, N)
    t = T.ravel(order="F")
    a = W.project(t) / W.counts
    dev = np.max(np.abs(W.expand(a) - t)) if t.size else 0.0
    scale = max(np.max(np.abs(t)), np.finfo(float).tiny)
    if dev > rtol * scale:
        raise StructureError(f"matrix is not {W.kind.value}-Toeplitz structured: max deviation {dev:.3e}")
    return ToeplitzParam(a, W)


def kron_factor_params(T: np.ndarray, N: int):
    """Split a USPA parameter into per-axis parameters ``(a_y, a_z)`` with ``a = a_y kron a_z``.

    ``T`` must be a single Kronecker product of Toeplitz-Hermitian factors.
    The scale ambiguity is fixed by making the first entry of ``a_z`` real
    nonnegative and giving both factors equal norm.
    """
    a = toeplitz_to_param(T, ArrayKind.USPA, N).a
    q = 2 * math.isqrt(N) - 1
    M = a.reshape(q, q)  # a_y[i] * a_z[j]
    u, s, vh = np.linalg.svd(M)
    if s.size > 1 and s[1] > STRUCTURE_RTOL * max(s[0], np.finfo(float).tiny):
        raise StructureError(f"parameter is not a Kronecker product (second singular value {s[1]:.3e})")
    a_y = u[:, 0] * np.sqrt(s[0])
    a_z = vh[0] * np.sqrt(s[0])
    k = np.argmax(np.abs(a_z))
    ref = a_z[0] if abs(a_z[0]) > 0 else a_z[k]
    phase = ref / abs(ref) if abs(ref) > 0 else 1.0
    return a_y * phase, a_z / phase


def ray_params(scenario: ChannelScenario):
    """Reduced-parameter factors ``(A, B)`` with ``C = A B^T`` (one column per ray).

    Column ``kl`` of ``A`` parametrizes ``T^t_kl = w_kl conj(a_t) a_t^T`` and
    column ``kl`` of ``B`` parametrizes ``T^r_kl = w_kl a_r a_r^H`` where
    ``w_kl = gamma_k / sqrt(L)``.
    """
    w = scenario.ray_weights()
    ang = scenario.ray_angles.reshape(-1, 4)
    A = _outer_params(scenario.tx_geometry, ang[:, 0], ang[:, 1], conj_left=True) * w
    B = _outer_params(scenario.rx_geometry, ang[:, 2], ang[:, 3], conj_left=False) * w
    return A, B


def _ula_outer_params(v, conj_left):
    # T = conj(v) v^T (conj_left) or v v^H; params = [T[:, 0], T[0, 1:]]
    x = v.conj() if conj_left else v
    y = v if conj_left else v.conj()
    return np.concatenate([x * y[:1], x[:1] * y[1:]], axis=0)


def _outer_params(geom, az, el, conj_left):
    if geom.kind is ArrayKind.ULA:
        from .channel import array_responses
        return _ula_outer_params(array_responses(geom, az, el), conj_left)
    a_y, a_z = array_response_axes(geom, az, el)
    p_y = _ula_outer_params(a_y, conj_left)
    p_z = _ula_outer_params(a_z, conj_left)
    return (p_y[:, None, :] * p_z[None, :, :]).reshape(-1, p_y.shape[1])


def reduced_unknown(scenario: ChannelScenario) -> np.ndarray:
    """``C = sum_kl a_kl b_kl^T`` of the scenario."""
    A, B = ray_params(scenario)
    return A @ B.T


def ray_vectors(scenario: ChannelScenario):
    """``t^t_kl = vec(T^t_kl)`` and ``t^r_kl = vec(T^r_kl)`` as columns."""
    a_t, a_r = scenario.ray_responses()
    w = scenario.ray_weights()
    N_t, N_r = scenario.dims
    # vec(conj(a) a^T) = a kron conj(a);  vec(a a^H) = conj(a) kron a
    tt = (a_t[:, None, :] * a_t.conj()[None, :, :]).reshape(N_t * N_t, -1) * w
    tr = (a_r.conj()[:, None, :] * a_r[None, :, :]).reshape(N_r * N_r, -1) * w
    return tt, tr


def permuted_singular_values(scenario: ChannelScenario) -> np.ndarray:
    """Singular values of ``R_p = sum t^t (t^r)^T`` from its thin factors."""
    tt, tr = ray_vectors(scenario)
    _, Ra = np.linalg.qr(tt)
    _, Rb = np.linalg.qr(tr)
    return np.linalg.svd(Ra @ Rb.T, compute_uv=False)


def energy_captured(singular_values, r_sub: int) -> float:
    """Fraction of ``sum sigma^2`` held by the leading ``r_sub`` values."""
    s = np.asarray(singular_values, dtype=float)
    if s.size == 0:
        raise ValueError("empty spectrum")
    if not 0 <= r_sub <= s.size:
        raise ValueError(f"r_sub={r_sub} outside [0, {s.size}]")
    e = np.sort(s)[::-1] ** 2
    total = e.sum()
    if total == 0:
        return 1.0
    return float(e[:r_sub].sum() / total)


def energy_curve(singular_values) -> np.ndarray:
    """``p_e`` for ``r_sub = 1 .. len``."""
    e = np.sort(np.asarray(singular_values, dtype=float))[::-1] ** 2
    return np.cumsum(e) / e.sum()


def rank_for_energy(singular_values, target_pe: float) -> int:
    """Smallest ``r_sub`` whose captured energy reaches ``target_pe``."""
    if not 0 < target_pe <= 1:
        raise ValueError("target_pe must lie in (0, 1]")
    curve = energy_curve(singular_values)
    # guard against cumsum rounding just below 1
    hits = np.nonzero(curve >= target_pe - 1e-12)[0]
    return int(hits[0] + 1) if hits.size else int(curve.size)
