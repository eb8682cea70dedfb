"""Continuous algebraic Riccati equations for LQR and steady-state Kalman gains.

``solve_care`` extracts the stable invariant subspace of the Hamiltonian
matrix with an ordered real Schur form and then refines the solution with
defect-correction Newton steps until the residual contract is met.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur, solve_continuous_lyapunov

RANK_TOL = 1e-9
RESIDUAL_TOL = 1e-8
_MAX_NEWTON = 25


class CareError(ArithmeticError):
    """The Riccati equation has no stabilizing solution or the solve failed."""


class StabilizabilityError(CareError):
    """An unstable (or marginal) mode cannot be influenced by the input."""

    def __init__(self, eigenvalue: complex, message: str):
        super().__init__(message)
        self.eigenvalue = eigenvalue


@dataclass
class CareProblem:
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim > 2 or B.size == 0 or B.size % self.A.shape[0]:
            raise ValueError(f"inconsistent dimensions A{self.A.shape} B{B.shape}")
        self.B = B.reshape(self.A.shape[0], -1)
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        n, m = self.B.shape
        if self.A.shape != (n, n) or self.Q.shape != (n, n) or self.R.shape != (m, m):
            raise ValueError(
                f"inconsistent dimensions A{self.A.shape} B{self.B.shape} Q{self.Q.shape} R{self.R.shape}")
        if not np.allclose(self.Q, self.Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(self.Q).max())):
            raise ValueError("Q must be symmetric")
        if not np.allclose(self.R, self.R.T, rtol=0, atol=1e-12 * max(1.0, np.abs(self.R).max())):
            raise ValueError("R must be symmetric")
        qmin = np.linalg.eigvalsh(self.Q).min()
        if qmin < -1e-12 * max(1.0, np.abs(self.Q).max()):
            raise ValueError(f"Q must be positive semi-definite (min eigenvalue {qmin:.3e})")
        try:
            np.linalg.cholesky(self.R)
        except np.linalg.LinAlgError:
            raise ValueError("R must be positive definite") from None


@dataclass
class CareSolution:
    P: np.ndarray
    K: np.ndarray
    residual_norm: float
    closed_loop_eigenvalues: np.ndarray


@dataclass
class RankReport:
    """Outcome of a controllability/observability rank test."""

    full_rank: bool
    rank: int
    n: int
    singular_values: np.ndarray

    def __bool__(self) -> bool:
        return self.full_rank


def _numerical_rank(M: np.ndarray, tol: float) -> tuple[int, np.ndarray]:
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0, s
    return int(np.sum(s > tol * s[0])), s


def is_controllable(A, B, tol: float = RANK_TOL) -> RankReport:
    """Kalman rank test on ``[B, AB, ..., A^(n-1) B]``.

    Each block is normalized by its own norm first; this leaves the rank
    unchanged and keeps high powers of ``A`` from swamping the threshold.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n = A.shape[0]
    blocks = []
    blk = B
    for _ in range(n):
        nrm = np.linalg.norm(blk)
        blocks.append(blk / nrm if nrm > 0 else blk)
        blk = A @ blk
    rank, s = _numerical_rank(np.hstack(blocks), tol)
    return RankReport(rank == n, rank, n, s)


def is_observable(A, C, tol: float = RANK_TOL) -> RankReport:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.asarray(C, dtype=float).reshape(-1, A.shape[0])
    return is_controllable(A.T, C.T, tol)


def uncontrollable_modes(A, B, tol: float = RANK_TOL, real_part_min: float = -np.inf):
    """Eigenvalues with ``Re >= real_part_min`` failing the PBH rank test."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n = A.shape[0]
    scale = max(np.linalg.norm(A, 2), np.linalg.norm(B, 2), 1e-300)
    bad = []
    for lam in np.linalg.eigvals(A):
        if lam.real < real_part_min:
            continue
        M = np.hstack([A - lam * np.eye(n), B]) / scale
        s = np.linalg.svd(M, compute_uv=False)
        if s[n - 1] <= max(tol, 1e-8):
            bad.append(complex(lam))
    return bad


def care_residual(A, B, Q, R, P) -> np.ndarray:
    BRB = B @ np.linalg.solve(R, B.T)
    return P @ A + A.T @ P - P @ BRB @ P + Q


def _check_stabilizable(A, B):
    stab_tol = 1e-10 * max(1.0, np.linalg.norm(A, 2))
    bad = uncontrollable_modes(A, B, real_part_min=-stab_tol)
    if bad:
        lam = bad[0]
        raise StabilizabilityError(
            lam, f"(A, B) is not stabilizable: eigenvalue {lam:.6g} with Re >= 0 is uncontrollable")


def solve_care(problem: CareProblem, tol: float = RESIDUAL_TOL) -> CareSolution:
    """Stabilizing solution of ``P A + A^T P - P B R^-1 B^T P + Q = 0``."""
    A, B, Q, R = problem.A, problem.B, problem.Q, problem.R
    n = A.shape[0]
    _check_stabilizable(A, B)
    G = B @ np.linalg.solve(R, B.T)
    H = np.block([[A, -G], [-Q, -A.T]])
    T, Z, sdim = schur(H, output="real", sort="lhp")
    eig_h = np.linalg.eigvals(H)
    axis = np.abs(eig_h.real) <= 1e-10 * max(1.0, np.abs(eig_h).max())
    if sdim != n or np.any(axis):
        raise CareError("Hamiltonian has eigenvalues on the imaginary axis; "
                        "no stabilizing solution (check detectability of (Q, A))")
    U11, U21 = Z[:n, :n], Z[n:, :n]
    if np.linalg.cond(U11) > 1e12:
        raise CareError("stable invariant subspace is not a graph subspace")
    P = np.linalg.solve(U11.T, U21.T).T
    P = 0.5 * (P + P.T)

    qscale = max(1.0, np.linalg.norm(Q))
    res = np.linalg.norm(care_residual(A, B, Q, R, P)) / qscale
    for _ in range(_MAX_NEWTON):
        # refine until the residual is at rounding level relative to the
        # terms of the equation, not just below the contract: small-scale
        # problems (filter covariances) would otherwise stop far from converged
        terms = np.linalg.norm(Q) + 2.0 * np.linalg.norm(P @ A) + np.linalg.norm(P @ G @ P)
        if res * qscale <= 1e-14 * terms:
            break
        K = np.linalg.solve(R, B.T @ P)
        Acl = A - B @ K
        if np.max(np.linalg.eigvals(Acl).real) >= 0:
            raise CareError("Newton refinement lost closed-loop stability")
        dP = solve_continuous_lyapunov(Acl.T, -care_residual(A, B, Q, R, P))
        P_new = P + 0.5 * (dP + dP.T)
        res_new = np.linalg.norm(care_residual(A, B, Q, R, P_new)) / qscale
        if res_new >= res:
            break
        P, res = P_new, res_new
    if res > tol:
        raise CareError(f"Riccati residual {res:.3e} exceeds tolerance {tol:g}")

    K = np.linalg.solve(R, B.T @ P)
    cl = np.linalg.eigvals(A - B @ K)
    if np.max(cl.real) >= 0:
        raise CareError(f"closed loop not stable: max Re(eig) = {np.max(cl.real):.3e}")
    pmin = np.linalg.eigvalsh(P).min()
    if pmin <= 0:
        raise CareError(f"P is not positive definite (min eigenvalue {pmin:.3e}); "
                        "some mode is invisible to the cost")
    return CareSolution(P, K, float(res), cl)


def solve_filter_care(A, C, G, Qn, Rn, tol: float = RESIDUAL_TOL):
    """Steady-state Kalman covariance and gain by duality with :func:`solve_care`.

    Returns ``(P, L)`` with ``A P + P A^T + G Qn G^T - P C^T Rn^-1 C P = 0``
    and ``L = P C^T Rn^-1``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.asarray(C, dtype=float).reshape(-1, A.shape[0])
    G = np.asarray(G, dtype=float).reshape(A.shape[0], -1)
    Qn = np.atleast_2d(np.asarray(Qn, dtype=float))
    Rn = np.atleast_2d(np.asarray(Rn, dtype=float))
    try:
        sol = solve_care(CareProblem(A.T, C.T, G @ Qn @ G.T, Rn), tol)
    except StabilizabilityError as exc:
        raise StabilizabilityError(
            exc.eigenvalue,
            f"(A, C) is not detectable: eigenvalue {exc.eigenvalue:.6g} with Re >= 0 is unobservable",
        ) from None
    P = sol.P
    L = P @ C.T @ np.linalg.inv(Rn)
    if np.max(np.linalg.eigvals(A - L @ C).real) >= 0:
        raise CareError("estimator error dynamics A - L C are not stable")
    return P, L
