"""Dictionary-based greedy covariance baseline (DCOMP-style) and its flop model.

The estimator fits ``R = sum_l c_l (conj(a_t) a_t^T) kron (a_r a_r^H)`` with
``c_l >= 0`` over grid atoms. Each measurement group ``g`` (one training plan
and the SCM it produced) contributes the residual ``S_g - P_g R P_g^H``.
Frobenius inner products are invariant under the rearrangement ``permute``,
so the fit can be carried out in the unpermuted domain.

This is an OMP-over-Kronecker-atoms stand-in for the published DCOMP
algorithm, whose internals are not reproduced here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

from .channel import ArrayGeometry, ArrayKind, array_responses
from .sensing import TrainingPlan
from .structure import inverse_permute

BASELINE_LABEL = "DCOMP-style OMP over Kronecker atoms (stand-in)"


@dataclass(frozen=True)
class AngleDictionary:
    tx_atoms: np.ndarray  # (N_t, G_t)
    rx_atoms: np.ndarray  # (N_r, G_r)
    tx_grid: np.ndarray
    rx_grid: np.ndarray

    @property
    def size(self):
        return self.tx_atoms.shape[1], self.rx_atoms.shape[1]


def _sin_grid(G):
    return -1.0 + 2.0 * np.arange(G) / G


def _grid_atoms(geom: ArrayGeometry, G: int):
    """Atoms uniform in the spatial frequency ``sin`` over ``[-1, 1)``.

    Grid values are returned as (spatial-frequency) tuples; a USPA grid is the
    Cartesian product of per-axis grids with ``sqrt(G)`` points each.
    """
    if geom.kind is ArrayKind.ULA:
        s = _sin_grid(G)
        return array_responses(geom, np.arcsin(s)), s[:, None]
    g = math.isqrt(G)
    if g * g != G:
        raise ValueError(f"USPA dictionary size must be a perfect square, got {G}")
    s = _sin_grid(g)
    n = geom.side
    ph = geom.phase_scale * s
    axis = np.exp(1j * np.arange(n)[:, None] * ph[None, :]) / geom.num_antennas ** 0.25
    # y-axis spatial frequency outer, z-axis inner
    atoms = (axis[:, None, :, None] * axis[None, :, None, :]).reshape(geom.num_antennas, G)
    grid = np.stack(np.meshgrid(s, s, indexing="ij"), axis=-1).reshape(G, 2)
    return atoms, grid


def build_dictionary(geom_t: ArrayGeometry, geom_r: ArrayGeometry, G_t: int, G_r: int) -> AngleDictionary:
    if G_t < 1 or G_r < 1:
        raise ValueError("grid sizes must be >= 1")
    at, gt = _grid_atoms(geom_t, G_t)
    ar, gr = _grid_atoms(geom_r, G_r)
    return AngleDictionary(at, ar, gt, gr)


def _sqrt_factor(S, tol=1e-12):
    """``Y`` with ``Y Y^H = S`` for a Hermitian PSD ``S`` (negative eigenvalues dropped)."""
    w, E = linalg.eigh((S + S.conj().T) / 2)
    keep = w > tol * max(w.max(initial=0.0), np.finfo(float).tiny)
    return E[:, keep] * np.sqrt(w[keep])


class _SensedGroup:
    """Sensed atoms ``z = P (conj(a_t) kron a_r)`` in separable form.

    ``z[s, e] = ft[s, i] * wr[s, e, j]`` for atom ``(i, j)``.
    """

    def __init__(self, plan: TrainingPlan, scm: np.ndarray, dictionary: AngleDictionary):
        f, W = plan.precoders, plan.combiners
        self.ft = f @ dictionary.tx_atoms.conj()  # f_s^T conj(a_t)
        self.wr = np.einsum("snk,ng->skg", W.conj(), dictionary.rx_atoms)  # W_s^H a_r
        self.Y = _sqrt_factor(scm).reshape(f.shape[0], W.shape[2], -1)  # (S, K_r, m)

    def data_correlation(self):
        """``z^H S z`` for every atom, shape ``(G_t, G_r)``."""
        proj = np.einsum("sem,si,sej->mij", self.Y.conj(), self.ft, self.wr, optimize=True)
        return np.sum(np.abs(proj) ** 2, axis=0)

    def energy(self):
        """``||z||^2`` for every atom."""
        return np.einsum("si,sj->ij", np.abs(self.ft) ** 2, np.sum(np.abs(self.wr) ** 2, axis=1))

    def cross(self, i, j):
        """``|z^H z_(i, j)|^2`` for every atom against atom ``(i, j)``."""
        zi = self.ft[:, i][:, None] * self.wr[:, :, j]  # (S, K_r)
        inner = np.einsum("si,sej,se->ij", self.ft.conj(), self.wr.conj(), zi, optimize=True)
        return np.abs(inner) ** 2


def _nonnegative_fit(G, h, ridge):
    """``argmin_{c >= 0} 1/2 c^T G c - h^T c`` via Cholesky + NNLS."""
    n = G.shape[0]
    for attempt in range(2):
        try:
            L = linalg.cholesky(G + (ridge if attempt else 0.0) * np.eye(n), lower=True)
            break
        except linalg.LinAlgError:
            continue
    else:
        L = linalg.cholesky(G + 1e3 * ridge * np.eye(n), lower=True)
    rhs = linalg.solve_triangular(L, h, lower=True)
    c, _ = optimize.nnls(L.T, rhs)
    return c


def dcomp_estimate(scms_permuted, plans, dictionary: AngleDictionary, num_paths: int,
                   noise_variance: float | None = None):
    """Greedy Kronecker-atom covariance estimate.

    ``scms_permuted`` and ``plans`` are matched sequences: for a fixed
    training there is one plan and its permuted SCM; for per-snapshot varying
    training there is one plan and rank-one SCM ``y_t y_t^H`` per snapshot.

    A known ``noise_variance`` removes the white noise floor ``sigma^2 I``
    from every SCM before fitting.

    Returns ``(R_hat, selected, residual_norms)``: ``selected`` lists
    ``(tx_index, rx_index, power)`` per chosen atom and ``residual_norms``
    holds the data-fit residual before the first and after every round.
    """
    N_t = dictionary.tx_atoms.shape[0]
    N_r = dictionary.rx_atoms.shape[0]
    if num_paths <= 0:
        return np.zeros((N_t * N_r, N_t * N_r), complex), [], []
    groups = []
    data_norm2 = 0.0
    for Sp, plan in zip(scms_permuted, plans):
        S, K_r = plan.num_beams, plan.combiners.shape[2]
        scm = inverse_permute(Sp, S, K_r)
        groups.append(_SensedGroup(plan, scm, dictionary))
        if noise_variance:
            scm = scm - noise_variance * np.eye(scm.shape[0])
        data_norm2 += np.vdot(scm, scm).real

    corr0 = sum(g.data_correlation() for g in groups)  # <S, Z_atom>
    if noise_variance:
        corr0 = corr0 - noise_variance * sum(g.energy() for g in groups)
    norm2 = sum(g.energy() ** 2 for g in groups)  # ||Z_atom||_F^2
    norm = np.sqrt(np.maximum(norm2, np.finfo(float).tiny))

    selected = []
    cross_rows = []  # per selected atom: <Z_sel, Z_atom> over the whole grid
    coef = np.zeros(0)
    residuals = [np.sqrt(data_norm2)]
    for _ in range(num_paths):
        corr = corr0.copy()
        for c_l, row in zip(coef, cross_rows):
            corr -= c_l * row
        score = corr / norm
        if selected:
            score[tuple(np.array([(i, j) for i, j in selected]).T)] = -np.inf
        i, j = np.unravel_index(np.argmax(score), score.shape)
        selected.append((int(i), int(j)))
        cross_rows.append(sum(g.cross(i, j) for g in groups))
        idx = tuple(np.array(selected).T)
        G = np.array([row[idx] for row in cross_rows])
        G = (G + G.T) / 2
        h = corr0[idx]
        ridge = 1e-10 * np.trace(G)
        coef = _nonnegative_fit(G, h, ridge)
        res2 = data_norm2 - 2 * coef @ h + coef @ G @ coef
        residuals.append(float(np.sqrt(max(res2, 0.0))))

    at = dictionary.tx_atoms[:, [s[0] for s in selected]]
    ar = dictionary.rx_atoms[:, [s[1] for s in selected]]
    F = (at.conj()[:, None, :] * ar[None, :, :]).reshape(N_t * N_r, -1) * np.sqrt(coef)
    R_hat = F @ F.conj().T
    picks = [(i, j, float(c)) for (i, j), c in zip(selected, coef)]
    return R_hat, picks, residuals


def flops_dcomp(T, L_p, G_t, G_r, M):
    """``8 T L_p G_t G_r (M^2 + M)``; exact for integer inputs."""
    return 8 * T * L_p * G_t * G_r * (M * M + M)
