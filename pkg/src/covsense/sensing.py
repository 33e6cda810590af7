"""Hybrid training, snapshot measurements and the reduced sensing operator.

Measurement ordering: the permuted sample covariance ``S_p`` has shape
``(S^2, K_r^2)``; row ``a + b*S`` holds ``vec`` of the ``(a, b)`` block
``Sigma_ab = W_a^H H f_a ... (W_b^H H f_b)^H``. The sensing vector is
``s_p = vec(S_p)`` (column-major), i.e. entry ``r + e*S^2``.

The reduced operator maps ``C`` (``q_t x q_v``) to ``vec(S_p)`` through

    S_p[r, e] = sum_ij A[r, i] C[i, j] B[r, e, j]

with ``A[r] = (conj(f_b) kron f_a)^T Gamma_u`` and
``B[r] = (W_b^T kron W_a^H) Gamma_v``. The dense ``Q`` of shape
``(S^2 K_r^2, q_t q_v)`` is never needed by the solver; it is available on
demand for small problems and tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from .channel import ChannelScenario, ConfigurationError, complex_normal, realize_channels
from .structure import WeightMatrix, permute

MAX_TRAINING_RETRIES = 100
COMBINER_COND_LIMIT = 1e8


def _phases(rng, shape, phase_bits):
    if phase_bits:
        levels = 2**phase_bits
        return 2 * np.pi * rng.integers(levels, size=shape) / levels
    return rng.uniform(0, 2 * np.pi, size=shape)


@dataclass(frozen=True)
class TrainingPlan:
    """``S`` single-stream training beams with hybrid precoders/combiners.

    ``f_s = F_RF[s] f_BB[s]`` uses the first RF chain only (``f_BB`` is a
    scaled unit vector); ``W_s = W_RF[s] (W_RF[s]^H W_RF[s])^{-1/2}`` has
    orthonormal columns, so combined noise stays white.
    """

    precoder_phases: np.ndarray  # (S, N_t, K_t)
    combiner_phases: np.ndarray  # (S, N_r, K_r)
    phase_bits: int = 0

    @property
    def num_beams(self) -> int:
        return self.precoder_phases.shape[0]

    @property
    def dims(self):
        S, N_t, K_t = self.precoder_phases.shape
        _, N_r, K_r = self.combiner_phases.shape
        return dict(S=S, N_t=N_t, K_t=K_t, N_r=N_r, K_r=K_r)

    @cached_property
    def F_RF(self) -> np.ndarray:
        return np.exp(1j * self.precoder_phases) / np.sqrt(self.precoder_phases.shape[1])

    @cached_property
    def W_RF(self) -> np.ndarray:
        return np.exp(1j * self.combiner_phases) / np.sqrt(self.combiner_phases.shape[1])

    @cached_property
    def f_BB(self) -> np.ndarray:
        S, _, K_t = self.F_RF.shape
        out = np.zeros((S, K_t), dtype=complex)
        out[:, 0] = 1.0 / np.linalg.norm(self.F_RF[:, :, 0], axis=1)
        return out

    @cached_property
    def W_BB(self) -> np.ndarray:
        return np.stack([linalg.inv(linalg.sqrtm(w.conj().T @ w)) for w in self.W_RF])

    @cached_property
    def precoders(self) -> np.ndarray:
        """``f_s`` stacked as ``(S, N_t)``."""
        return np.einsum("snk,sk->sn", self.F_RF, self.f_BB)

    @cached_property
    def combiners(self) -> np.ndarray:
        """``W_s`` stacked as ``(S, N_r, K_r)``."""
        return self.W_RF @ self.W_BB

    @cached_property
    def P(self) -> np.ndarray:
        """Stacked sensing matrix, row block ``s`` equal to ``f_s^T kron W_s^H``."""
        f, W = self.precoders, self.combiners
        S, N_t = f.shape
        N_r, K_r = W.shape[1:]
        blocks = f[:, None, :, None] * W.conj().transpose(0, 2, 1)[:, :, None, :]
        return blocks.reshape(S * K_r, N_t * N_r)

    def to_dict(self) -> dict:
        return {"phase_bits": self.phase_bits,
                "precoder_phases": self.precoder_phases.tolist(),
                "combiner_phases": self.combiner_phases.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingPlan":
        return cls(np.asarray(d["precoder_phases"], float), np.asarray(d["combiner_phases"], float),
                   int(d.get("phase_bits", 0)))

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "TrainingPlan":
        return cls.from_dict(json.loads(text))


def design_training(rng: np.random.Generator, N_t: int, N_r: int, K_t: int, K_r: int, S: int,
                    phase_bits: int = 0) -> TrainingPlan:
    """Random constant-modulus analog stages with a whitening digital combiner.

    ``phase_bits = 0`` draws continuous phases. The first precoder phase of
    each beam is pinned to zero (a common phase on ``f_s`` cancels in the
    covariance).
    """
    if S < 1 or not 1 <= K_r <= N_r or not 1 <= K_t <= N_t:
        raise ConfigurationError(f"invalid training dimensions S={S}, K_t={K_t}, K_r={K_r}")
    tx = _phases(rng, (S, N_t, K_t), phase_bits)
    tx -= tx[:, :1, :]
    rx = np.empty((S, N_r, K_r))
    for s in range(S):
        for _ in range(MAX_TRAINING_RETRIES):
            rx[s] = _phases(rng, (N_r, K_r), phase_bits)
            w = np.exp(1j * rx[s])
            if np.linalg.cond(w.conj().T @ w) < COMBINER_COND_LIMIT:
                break
        else:
            raise ConfigurationError("could not draw a full-rank analog combiner")
    return TrainingPlan(tx % (2 * np.pi), rx, phase_bits)


@dataclass(frozen=True)
class MeasurementBatch:
    y: np.ndarray  # (T, S K_r)
    noise_variance: float
    pnr_db: float
    num_beams: int
    num_chains: int

    @property
    def num_snapshots(self) -> int:
        return self.y.shape[0]

    @cached_property
    def scm(self) -> np.ndarray:
        return sample_covariance(self.y)

    @cached_property
    def scm_permuted(self) -> np.ndarray:
        return permute(self.scm, self.num_beams, self.num_chains)


def sample_covariance(y: np.ndarray) -> np.ndarray:
    """``(1/T) sum_t y_t y_t^H`` for snapshots stacked as rows."""
    y = np.atleast_2d(y)
    S = y.T @ y.conj() / y.shape[0]
    return (S + S.conj().T) / 2


def noise_variance_from_pnr(pnr_db: float, tx_power: float = 1.0) -> float:
    return tx_power / 10 ** (pnr_db / 10)


def measure(H: np.ndarray, plan: TrainingPlan, noise_variance: float, rng: np.random.Generator) -> np.ndarray:
    """Received training symbols ``y_t = P vec(H_t) + n_t`` for channels ``(T, N_r, N_t)``.

    Unit transmit power, so the pilot is ``s = 1``.
    """
    H = np.asarray(H)
    if H.ndim == 2:
        H = H[None]
    vecH = H.transpose(0, 2, 1).reshape(H.shape[0], -1)  # column-major vec per snapshot
    y = vecH @ plan.P.T
    if noise_variance > 0:
        S, N_r, K_r = plan.combiners.shape
        n = complex_normal(rng, (H.shape[0], S, N_r), noise_variance)
        y = y + np.einsum("srk,tsr->tsk", plan.combiners.conj(), n).reshape(H.shape[0], -1)
    return y


def simulate_snapshots(scenario: ChannelScenario, plan: TrainingPlan, T: int, pnr_db: float,
                       rng: np.random.Generator, channels=None) -> MeasurementBatch:
    """``T`` snapshots with fresh small-scale fading and one fixed training plan."""
    if T < 1:
        raise ConfigurationError("need at least one snapshot")
    H = realize_channels(scenario, rng, T) if channels is None else channels
    sigma2 = noise_variance_from_pnr(pnr_db)
    y = measure(H, plan, sigma2, rng)
    return MeasurementBatch(y, sigma2, pnr_db, plan.num_beams, plan.combiners.shape[2])


def analytic_received_covariance(R: np.ndarray, plan: TrainingPlan, noise_variance: float) -> np.ndarray:
    """``P R P^H + sigma^2 I``."""
    P = plan.P
    out = P @ R @ P.conj().T + noise_variance * np.eye(P.shape[0])
    return (out + out.conj().T) / 2


def sensing_vector(scm_permuted: np.ndarray, noise_variance: float | None = None,
                   num_beams: int | None = None, num_chains: int | None = None) -> np.ndarray:
    """``vec(S_p)``; optionally remove the known noise floor ``sigma^2 I`` first."""
    Sp = np.asarray(scm_permuted)
    if noise_variance:
        # permute(sigma^2 I) = sigma^2 vec(I_S) vec(I_Kr)^T
        Sp = Sp - noise_variance * np.outer(np.eye(num_beams).ravel(), np.eye(num_chains).ravel())
    return Sp.ravel(order="F")


class ReducedOperator:
    """Linear map ``vec(C) -> vec(S_p)`` stored in factored form.

    ``A`` has shape ``(S^2, q_t)`` and ``B`` shape ``(S^2, K_r^2, q_v)``.
    The AltMin normal equations are assembled from the factors in
    ``O(S^2 r^2 q^2)`` without forming ``Q``.
    """

    def __init__(self, A: np.ndarray, B: np.ndarray):
        self.A = np.asarray(A)
        self.B = np.asarray(B)
        self.n_pairs, self.q_t = self.A.shape
        _, self.n_chan2, self.q_v = self.B.shape

    @property
    def shape(self):
        return self.n_pairs * self.n_chan2, self.q_t * self.q_v

    @property
    def unknown_shape(self):
        return self.q_t, self.q_v

    def _as_meas(self, y):
        return np.asarray(y).reshape(self.n_pairs, self.n_chan2, order="F")

    def apply(self, C: np.ndarray) -> np.ndarray:
        D = self.A @ C  # (pairs, q_v)
        return np.einsum("rej,rj->re", self.B, D).ravel(order="F")

    def apply_factors(self, U: np.ndarray, V: np.ndarray) -> np.ndarray:
        """``Q vec(U V^T)`` without forming the product."""
        AU = self.A @ U
        BV = self.B @ V
        return np.einsum("rk,rek->re", AU, BV).ravel(order="F")

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """``unvec(Q^H y)`` as a ``q_t x q_v`` matrix."""
        Y = self._as_meas(y)
        Z = np.einsum("rej,re->rj", self.B.conj(), Y)
        return self.A.conj().T @ Z

    @cached_property
    def Q(self) -> np.ndarray:
        Q3 = self.A[:, None, None, :] * self.B[:, :, :, None]  # [r, e, j, i]
        Q3 = Q3.transpose(1, 0, 2, 3)  # row r + e*pairs, col i + j*q_t
        return Q3.reshape(self.shape)

    @cached_property
    def gram(self) -> np.ndarray:
        return self.Q.conj().T @ self.Q

    @cached_property
    def _B_gram(self) -> np.ndarray:
        return np.einsum("rej,rel->rjl", self.B.conj(), self.B)

    def normal_u(self, V: np.ndarray, y: np.ndarray):
        """Normal matrix and right side for ``vec(U)`` with ``V`` fixed."""
        Y = self._as_meas(y)
        BV = self.B @ V  # (pairs, e, r)
        Hb = np.einsum("rek,rel->rkl", BV.conj(), BV)
        r = V.shape[1]
        N = np.einsum("rkl,ri,rj->kilj", Hb, self.A.conj(), self.A, optimize=True)
        w = np.einsum("rek,re->rk", BV.conj(), Y)
        rhs = w.T @ self.A.conj()  # (r, q_t)
        n = r * self.q_t
        return N.reshape(n, n), rhs.reshape(n)

    def normal_v(self, U: np.ndarray, y: np.ndarray):
        """Normal matrix and right side for ``vec(V)`` with ``U`` fixed."""
        Y = self._as_meas(y)
        w = self.A @ U  # (pairs, r)
        r = U.shape[1]
        N = np.einsum("rk,rl,rij->kilj", w.conj(), w, self._B_gram, optimize=True)
        z = np.einsum("rej,re->rj", self.B.conj(), Y)
        rhs = w.conj().T @ z  # (r, q_v)
        n = r * self.q_v
        return N.reshape(n, n), rhs.reshape(n)


class DenseOperator:
    """Same interface as :class:`ReducedOperator` backed by an explicit ``Q``.

    Columns of ``Q`` follow column-major ``vec(C)`` for ``C`` of shape
    ``unknown_shape``.
    """

    def __init__(self, Q: np.ndarray, unknown_shape):
        self.Q = np.asarray(Q, dtype=complex)
        self.q_t, self.q_v = unknown_shape
        if self.Q.shape[1] != self.q_t * self.q_v:
            raise ValueError("Q column count does not match the unknown shape")

    @property
    def shape(self):
        return self.Q.shape

    @property
    def unknown_shape(self):
        return self.q_t, self.q_v

    @cached_property
    def gram(self) -> np.ndarray:
        return self.Q.conj().T @ self.Q

    def apply(self, C):
        return self.Q @ np.asarray(C).ravel(order="F")

    def apply_factors(self, U, V):
        return self.apply(U @ V.T)

    def adjoint(self, y):
        return (self.Q.conj().T @ y).reshape(self.q_t, self.q_v, order="F")

    def _Q3(self):
        return self.Q.reshape(-1, self.q_v, self.q_t)  # [m, j, i]

    def normal_u(self, V, y):
        M = np.einsum("mji,jk->mki", self._Q3(), V).reshape(self.Q.shape[0], -1)
        return M.conj().T @ M, M.conj().T @ y

    def normal_v(self, U, y):
        M = np.einsum("mji,ik->mkj", self._Q3(), U).reshape(self.Q.shape[0], -1)
        return M.conj().T @ M, M.conj().T @ y


def assemble_Q(plan: TrainingPlan, gamma_u: WeightMatrix, gamma_v: WeightMatrix) -> ReducedOperator:
    """Reduced operator for a fixed training plan and tx/rx weight matrices."""
    f, W = plan.precoders, plan.combiners
    S, N_t = f.shape
    N_r, K_r = W.shape[1:]
    if gamma_u.cols.size != N_t * N_t or gamma_v.cols.size != N_r * N_r:
        raise ValueError("weight matrices do not match the plan's antenna counts")
    # pair r = a + b*S
    a_idx = np.tile(np.arange(S), S)
    b_idx = np.repeat(np.arange(S), S)
    # x_r[p + q N_t] = f_a[p] conj(f_b[q])
    X = (f[a_idx][:, :, None] * f[b_idx].conj()[:, None, :]).transpose(0, 2, 1).reshape(S * S, -1)
    A = gamma_u.project(X.T).T
    # (W_b^T kron W_a^H)[e1 + e2 K_r, p + q N_r] = conj(W_a[p, e1]) W_b[q, e2]
    Wa, Wb = W[a_idx].conj(), W[b_idx]
    Y = np.einsum("rpe,rqf->rfeqp", Wa, Wb).reshape(S * S, K_r * K_r, N_r * N_r)
    B = gamma_v.project(Y.transpose(2, 0, 1)).transpose(1, 2, 0)
    return ReducedOperator(A, B)
