"""Estimation metrics and the GCG-Alt flop model."""

from __future__ import annotations

import numpy as np
from scipy import linalg


def top_subspace(R: np.ndarray, r: int) -> np.ndarray:
    """Leading ``r`` singular vectors of a Hermitian matrix.

    For Hermitian input these are the eigenvectors with the largest
    ``|eigenvalue|``.
    """
    Rh = (R + R.conj().T) / 2
    w, E = linalg.eigh(Rh)
    order = np.argsort(-np.abs(w), kind="stable")
    return E[:, order[:r]]


def subspace_efficiency(R_hat: np.ndarray, R: np.ndarray, r: int) -> float:
    """``eta = tr(M_hat^H R M_hat) / tr(M^H R M)`` over rank-``r`` subspaces."""
    n = R.shape[0]
    if not 1 <= r <= n:
        raise ValueError(f"subspace rank {r} outside [1, {n}]")
    M_hat = top_subspace(R_hat, r)
    M = top_subspace(R, r)
    num = np.trace(M_hat.conj().T @ R @ M_hat).real
    den = np.trace(M.conj().T @ R @ M).real
    return float(num / den)


def nmse(R_hat: np.ndarray, R: np.ndarray) -> float:
    den = np.vdot(R, R).real
    if den == 0:
        raise ValueError("reference covariance is zero")
    diff = R_hat - R
    return float(np.vdot(diff, diff).real / den)


def flops_gcg_alt(N_t, N_r, r_est, I_a, M):
    """Flop count of one GCG-Alt estimate with ``M = S K_r`` symbols per snapshot.

    Independent of the number of snapshots because the solver only sees the
    permuted SCM.
    """
    r = r_est
    qt, qr = 2 * N_t - 1, 2 * N_r - 1
    return (8 * r * (I_a * r + I_a + 1) * qt**2 * qr**2
            + 8 / 3 * I_a * r * (r + 1) * (2 * r + 1) * qt * qr * (N_r + N_t - 1)
            + I_a * r**2 * (r + 1) ** 2 * (qr**3 + qt**3)
            + 16 * r * qr * qt * M**2)
