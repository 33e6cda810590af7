"""GCG-Alt: generalized conditional gradient with alternating-minimization refits.

Minimizes the factored objective

    phi(U, V) = 1/2 ||Q vec(U V^T) - s_p||^2 + mu/2 (||U||_F^2 + ||V||_F^2)

by adding one rank-one atom per outer iteration and refitting both factors
with exact ridge least squares in between.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from .structure import WeightMatrix, inverse_permute

TINY_DENOMINATOR = 1e-300


class DegenerateDirectionError(ArithmeticError):
    """The sensed atom ``Q vec(Z)`` vanished, so no step length exists."""


@dataclass(frozen=True)
class SolverConfig:
    mu: float = 0.1
    eps: float = 0.003
    eps_altmin: float = 0.1
    max_outer: int = 64
    max_altmin: int = 10
    power_iter_tol: float = 1e-8
    power_iter_max: int = 200

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        if self.eps <= 0 or self.eps_altmin <= 0 or self.power_iter_tol <= 0:
            raise ValueError("tolerances must be positive")
        if min(self.max_outer, self.max_altmin, self.power_iter_max) < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass
class IterationRecord:
    k: int
    objective: float
    theta: float
    eta: float
    altmin_iterations: int
    rel_decrease: float
    rank: int
    sigma: float
    accepted: bool = True


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)
    initial_objective: float = 0.0
    stop_reason: str = ""
    # every objective value seen in order, for monotonicity checks
    objective_path: list = field(default_factory=list)

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(asdict(r)) for r in self.records)

    @property
    def altmin_iterations(self):
        return [r.altmin_iterations for r in self.records if r.accepted]


def objective(U, V, op, s_p, mu) -> float:
    """Factored regularized least-squares objective (``U``/``V`` may have zero columns)."""
    if U.shape[1] == 0:
        resid = -np.asarray(s_p)
    else:
        resid = op.apply_factors(U, V) - s_p
    reg = np.vdot(U, U).real + np.vdot(V, V).real
    return 0.5 * np.vdot(resid, resid).real + 0.5 * mu * reg


def negative_gradient_matrix(U, V, op, s_p) -> np.ndarray:
    """``-unvec(Q^H (Q vec(U V^T) - s_p))``.

    This is the conjugate-convention gradient: ``d f(C + tD)/dt`` at ``t = 0``
    equals ``Re <grad, D>``.
    """
    resid = -np.asarray(s_p) if U.shape[1] == 0 else op.apply_factors(U, V) - s_p
    return -op.adjoint(resid)


def top_singular_pair(M: np.ndarray, tol: float = 1e-8, max_iter: int = 200):
    """Leading singular triple by power iteration on ``M^H M``.

    Returns ``(u, sigma, v, converged)`` with ``u v^T = u_1 v_1^H`` the best
    rank-one atom, i.e. ``v`` is the conjugate of the right singular vector
    and ``sigma = Re(u^H M conj(v))``.
    """
    M = np.asarray(M)
    m, n = M.shape
    row_norms = np.linalg.norm(M, axis=1)
    if row_norms.max(initial=0.0) == 0.0:
        u = np.zeros(m, complex)
        u[0] = 1
        v = np.zeros(n, complex)
        v[0] = 1
        return u, 0.0, v, False
    x = M[np.argmax(row_norms)].conj()
    x = x / np.linalg.norm(x)
    converged = False
    for _ in range(max_iter):
        y = M.conj().T @ (M @ x)
        ny = np.linalg.norm(y)
        if ny == 0:
            break
        y /= ny
        # fix the free phase so successive iterates are comparable
        k = np.argmax(np.abs(y))
        y *= np.abs(y[k]) / y[k]
        change = np.linalg.norm(y - x)
        x = y
        if change <= tol:
            converged = True
            break
    Mx = M @ x
    sigma = float(np.linalg.norm(Mx))
    u = Mx / sigma
    return u, sigma, x.conj(), converged


def theta_step(Z, C_prev, eta, op, s_p, mu) -> float:
    """Optimal atom weight for ``C = (1 - eta) C_prev + theta Z``."""
    q_z = op.apply(Z)
    denom = np.vdot(q_z, q_z).real
    if denom <= TINY_DENOMINATOR:
        raise DegenerateDirectionError("sensed atom is zero")
    fit = np.vdot(q_z, s_p)
    if C_prev is not None and np.any(C_prev):
        fit = fit - (1 - eta) * np.vdot(q_z, op.apply(C_prev))
    return float((fit.real - mu) / denom)


def _ridge_solve(N, rhs, mu):
    n = N.shape[0]
    if mu > 0:
        try:
            return linalg.solve(N + mu * np.eye(n), rhs, assume_a="her")
        except (linalg.LinAlgError, ValueError):
            pass
    return linalg.lstsq(N + mu * np.eye(n), rhs, lapack_driver="gelsy")[0]


def solve_u(V, op, s_p, mu):
    N, rhs = op.normal_u(V, s_p)
    x = _ridge_solve(N, rhs, mu)
    return x.reshape(V.shape[1], op.q_t).T


def solve_v(U, op, s_p, mu):
    N, rhs = op.normal_v(U, s_p)
    x = _ridge_solve(N, rhs, mu)
    return x.reshape(U.shape[1], op.q_v).T


def altmin_update(U, V, op, s_p, mu, phi=None):
    """One exact alternating sweep: best ``U`` for fixed ``V``, then best ``V``.

    A sub-solve that would raise the objective through rounding is discarded.
    Returns ``(U', V', phi(U, V'), phi(U', V'))`` where the third value is the
    mixed objective used in the AltMin stopping rule.
    """
    if U.shape[1] == 0:
        raise ValueError("altmin_update needs at least one factor column")
    phi0 = objective(U, V, op, s_p, mu) if phi is None else phi
    U1 = solve_u(V, op, s_p, mu)
    phi1 = objective(U1, V, op, s_p, mu)
    if not np.isfinite(phi1) or phi1 > phi0:
        U1, phi1 = U, phi0
    V1 = solve_v(U1, op, s_p, mu)
    phi2 = objective(U1, V1, op, s_p, mu)
    if not np.isfinite(phi2) or phi2 > phi1:
        V1, phi2 = V, phi1
    phi_mixed = objective(U, V1, op, s_p, mu)
    return U1, V1, phi_mixed, phi2


def _rel(num, den):
    return 0.0 if den <= TINY_DENOMINATOR else num / den


def gcg_alt(op, s_p, config: SolverConfig = SolverConfig()):
    """Run GCG-Alt; returns ``(U, V, trace)`` with ``C_hat = U V^T``.

    Stops when the relative outer decrease drops to ``config.eps``, at
    ``max_outer``, or when the optimal atom weight is nonpositive. An outer
    iteration that ends above the previous objective is rejected and the
    previous factors are returned.
    """
    s_p = np.asarray(s_p, dtype=complex)
    q_t, q_v = op.unknown_shape
    U = np.zeros((q_t, 0), complex)
    V = np.zeros((q_v, 0), complex)
    mu = config.mu
    trace = SolveTrace()
    phi = objective(U, V, op, s_p, mu)
    trace.initial_objective = phi
    trace.objective_path.append(phi)
    if phi <= TINY_DENOMINATOR:
        trace.stop_reason = "zero data"
        return U, V, trace

    k = 0
    eps_k = np.inf
    while eps_k > config.eps:
        if k >= config.max_outer:
            trace.stop_reason = "max_outer"
            break
        G = negative_gradient_matrix(U, V, op, s_p)
        u, sigma, v, _ = top_singular_pair(G, config.power_iter_tol, config.power_iter_max)
        if sigma == 0.0:
            trace.stop_reason = "zero gradient"
            break
        Z = np.outer(u, v)
        eta = 2.0 / (k + 2)
        C_prev = U @ V.T if U.shape[1] else None
        theta = theta_step(Z, C_prev, eta, op, s_p, mu)
        if theta <= 0:
            trace.stop_reason = "nonpositive theta"
            break
        k += 1
        U_new = np.column_stack([np.sqrt(1 - eta) * U, np.sqrt(theta) * u])
        V_new = np.column_stack([np.sqrt(1 - eta) * V, np.sqrt(theta) * v])
        cur = objective(U_new, V_new, op, s_p, mu)
        trace.objective_path.append(cur)

        i = 0
        eps_a = np.inf
        while eps_a > config.eps_altmin and i < config.max_altmin:
            i += 1
            U_new, V_new, mixed, nxt = altmin_update(U_new, V_new, op, s_p, mu, phi=cur)
            trace.objective_path.append(nxt)
            eps_a = _rel(cur - nxt, mixed)
            cur = nxt

        if not (np.all(np.isfinite(U_new)) and np.all(np.isfinite(V_new))):
            trace.stop_reason = "non-finite factors"
            break
        eps_k = _rel(phi - cur, phi)
        accepted = bool(cur <= phi)
        trace.records.append(IterationRecord(k, float(cur), theta, eta, i, float(eps_k), U_new.shape[1], sigma, accepted))
        if not accepted:
            trace.stop_reason = "objective increased"
            break
        U, V, phi = U_new, V_new, cur
    else:
        trace.stop_reason = "converged"
    return U, V, trace


def reconstruct_covariance(C_hat, gamma_u: WeightMatrix, gamma_v: WeightMatrix, N_t: int, N_r: int,
                           hermitian: bool = True) -> np.ndarray:
    """``P^{-1}(Gamma_u C_hat Gamma_v^T)``, Hermitian-symmetrized by default."""
    C_hat = np.asarray(C_hat)
    R_p = C_hat[gamma_u.cols][:, gamma_v.cols]
    R = inverse_permute(R_p, N_t, N_r)
    if hermitian:
        R = (R + R.conj().T) / 2
    return R
