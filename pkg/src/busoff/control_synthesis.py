"""Backward Riccati recursions against the dominant attacks, the modified
Riccati map, its fixed point, and the critical arrival probability."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve

from .system_model import LinearSystem

PD_EIG_TOL = 1e-10
DIVERGENCE_NORM = 1e12
GROWTH_WINDOW = 50


def _sym(M: np.ndarray) -> np.ndarray:
    return (M + M.T) / 2


def _check_psd(M: np.ndarray, name: str, strict: bool = False) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.allclose(M, M.T, atol=1e-9):
        raise ValueError(f"{name} must be symmetric")
    w = np.linalg.eigvalsh(_sym(M))
    if strict and w.min() <= PD_EIG_TOL:
        raise ValueError(f"{name} must be positive definite")
    if not strict and w.min() < -PD_EIG_TOL:
        raise ValueError(f"{name} must be positive semidefinite")
    return M


@dataclass(frozen=True)
class CostSpec:
    """Quadratic stage cost x'Qx + (applied) u'Ru over horizon N (None = infinite)."""

    Q: np.ndarray
    R: np.ndarray
    N: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "Q", _check_psd(self.Q, "Q"))
        object.__setattr__(self, "R", _check_psd(self.R, "R", strict=True))
        if self.N is not None and self.N < 1:
            raise ValueError("horizon N must be >= 1")


@dataclass(frozen=True)
class RiccatiLadder:
    """Closed-loop-attacker value ladder: V_k(x, a) = x'[P1_k + (1-a) P2_k]x + c_k.

    Arrays are stage-indexed k = 0..N (P1, P2, c) and k = 0..N-1 (K, the gain
    applied at step k).
    """

    P1: np.ndarray
    P2: np.ndarray
    c: np.ndarray
    K: np.ndarray

    @property
    def horizon(self) -> int:
        return self.K.shape[0]

    def value(self, x, alpha_prev: int, k: int = 0) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        P = self.P1[k] + (1 - alpha_prev) * self.P2[k]
        return float(x @ P @ x + self.c[k])


@dataclass(frozen=True)
class OpenLoopLadder:
    """Open-loop-attacker value ladder: V_k(x) = x'P_k x + c_k."""

    P: np.ndarray
    c: np.ndarray
    K: np.ndarray

    @property
    def horizon(self) -> int:
        return self.K.shape[0]

    def value(self, x, k: int = 0) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        return float(x @ self.P[k] @ x + self.c[k])


def _gain(A, B, R, P):
    """-(B'PB + R)^{-1} B'PA with a PD solve."""
    return -solve(_sym(B.T @ P @ B + R), B.T @ P @ A, assume_a="pos")


def backward_closed_loop(sys: LinearSystem, cost: CostSpec, p: float) -> RiccatiLadder:
    """Finite-horizon backward recursion against the dominant closed-loop attack.

    Anchored at P1_N = Q, P2_N = 0, c_N = 0; the control-improvement term is
    built from P1 while the open-loop propagation uses P = P1 + (1-p) P2.
    """
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must be in (0, 1), got {p}")
    if cost.N is None:
        raise ValueError("backward recursion needs a finite horizon")
    A, B, Q, R, N = sys.A, sys.B, cost.Q, cost.R, cost.N
    n, m = sys.n, sys.m
    P1 = np.zeros((N + 1, n, n))
    P2 = np.zeros((N + 1, n, n))
    c = np.zeros(N + 1)
    K = np.zeros((N, m, n))
    P1[N] = Q
    for k in range(N, 0, -1):
        Pk = _sym(P1[k] + (1.0 - p) * P2[k])
        S = B.T @ P1[k] @ A
        Kk = -solve(_sym(B.T @ P1[k] @ B + R), S, assume_a="pos")
        P1[k - 1] = _sym(A.T @ Pk @ A + Q)
        P2[k - 1] = _sym(-p * S.T @ solve(_sym(B.T @ P1[k] @ B + R), S, assume_a="pos"))
        c[k - 1] = float(np.trace(Pk @ sys.sigma_v)) + c[k]
        K[k - 1] = Kk
    return RiccatiLadder(P1=P1, P2=P2, c=c, K=K)


def backward_open_loop(sys: LinearSystem, cost: CostSpec, p: float) -> OpenLoopLadder:
    """Finite-horizon recursion against the dominant open-loop attack; the
    effective arrival probability is p(1-p)."""
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must be in (0, 1), got {p}")
    if cost.N is None:
        raise ValueError("backward recursion needs a finite horizon")
    A, B, Q, R, N = sys.A, sys.B, cost.Q, cost.R, cost.N
    rho = p * (1.0 - p)
    n, m = sys.n, sys.m
    P = np.zeros((N + 1, n, n))
    c = np.zeros(N + 1)
    K = np.zeros((N, m, n))
    P[N] = Q
    for k in range(N, 0, -1):
        S = B.T @ P[k] @ A
        K[k - 1] = -solve(_sym(B.T @ P[k] @ B + R), S, assume_a="pos")
        P[k - 1] = _sym(A.T @ P[k] @ A + Q - rho * S.T @ solve(_sym(B.T @ P[k] @ B + R), S, assume_a="pos"))
        c[k - 1] = float(np.trace(P[k] @ sys.sigma_v)) + c[k]
    return OpenLoopLadder(P=P, c=c, K=K)


def modified_riccati_step(P, sys: LinearSystem, cost: CostSpec, rho: float) -> np.ndarray:
    """g_rho(P) = A'PA + Q - rho (B'PA)'(B'PB + R)^{-1}(B'PA), symmetrized."""
    if not (0.0 <= rho <= 1.0):
        raise ValueError(f"rho must be in [0, 1], got {rho}")
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.shape != (sys.n, sys.n):
        raise ValueError(f"P must be {sys.n}x{sys.n}, got {P.shape}")
    A, B, Q, R = sys.A, sys.B, cost.Q, cost.R
    S = B.T @ P @ A
    return _sym(A.T @ P @ A + Q - rho * S.T @ solve(_sym(B.T @ P @ B + R), S, assume_a="pos"))


@dataclass
class StabilityReport:
    """Outcome of the fixed-point iteration P_{j+1} = g_rho(P_j)."""

    rho: float
    rho_min_lower: float
    rho_min_upper: float
    converged: bool
    status: str  # "converged" | "diverged" | "undetermined"
    iterations: int
    P_inf: np.ndarray | None = None
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rho_min_empirical: float | None = None


def riccati_fixed_point(
    sys: LinearSystem,
    cost: CostSpec,
    rho: float,
    tol: float = 1e-9,
    max_iter: int = 100_000,
) -> StabilityReport:
    """Iterate g_rho from P_0 = Q until the update 2-norm falls below tol.

    Divergence is declared when ||P||_2 exceeds 1e12 or the iteration budget is
    exhausted with residual growth over the last window; exhaustion without
    growth is reported as undetermined rather than misclassified.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lower, upper = rho_min_bounds(sys.A)
    P = _sym(np.array(cost.Q, dtype=float))
    residuals = []
    for it in range(1, max_iter + 1):
        P_next = modified_riccati_step(P, sys, cost, rho)
        res = float(np.linalg.norm(P_next - P, 2))
        residuals.append(res)
        P = P_next
        if res <= tol:
            return StabilityReport(
                rho=rho, rho_min_lower=lower, rho_min_upper=upper,
                converged=True, status="converged", iterations=it,
                P_inf=P, residuals=np.array(residuals),
            )
        if np.linalg.norm(P, 2) > DIVERGENCE_NORM:
            return StabilityReport(
                rho=rho, rho_min_lower=lower, rho_min_upper=upper,
                converged=False, status="diverged", iterations=it,
                residuals=np.array(residuals),
            )
    window = residuals[-GROWTH_WINDOW:]
    growing = len(window) == GROWTH_WINDOW and window[-1] > window[0]
    status = "diverged" if growing else "undetermined"
    return StabilityReport(
        rho=rho, rho_min_lower=lower, rho_min_upper=upper,
        converged=False, status=status, iterations=max_iter,
        residuals=np.array(residuals),
    )


def rho_min_bounds(A, unit_circle_tol: float = 1e-9) -> tuple[float, float]:
    """Spectral bounds on the critical arrival probability.

    lower = 1 - 1/max|lam_u|^2, upper = 1 - 1/prod|lam_u|^2 over eigenvalues
    with modulus strictly above 1; eigenvalues on the unit circle (within
    tolerance) are not counted, so a spectral radius of 1 gives (0, 0).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    mods = np.abs(np.linalg.eigvals(A))
    unstable = mods[mods > 1.0 + unit_circle_tol]
    if unstable.size == 0:
        return 0.0, 0.0
    lower = 1.0 - 1.0 / float(unstable.max()) ** 2
    upper = 1.0 - 1.0 / float(np.prod(unstable)) ** 2
    return lower, upper


def controllability_matrix(A, B) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def _is_controllable(A, B, rel_tol: float = 1e-8) -> bool:
    C = controllability_matrix(A, B)
    sv = np.linalg.svd(C, compute_uv=False)
    return sv.size >= A.shape[0] and sv[A.shape[0] - 1] > rel_tol * sv[0]


def rho_min_empirical(
    sys: LinearSystem,
    cost: CostSpec,
    tol_rho: float = 0.005,
    fp_tol: float = 1e-7,
    max_iter: int = 20_000,
) -> float:
    """Bisection on the converge/diverge outcome of the fixed-point iteration.

    Substitute for the LMI characterization; requires (A, B) and (A, Q^{1/2})
    controllable.
    """
    if not _is_controllable(sys.A, sys.B):
        raise ValueError("(A, B) fails the controllability rank test")
    w, V = np.linalg.eigh(_sym(np.array(cost.Q, dtype=float)))
    Q_half = V * np.sqrt(np.clip(w, 0.0, None)) @ V.T
    if not _is_controllable(sys.A, Q_half):
        raise ValueError("(A, Q^(1/2)) fails the controllability rank test")
    lo, _ = rho_min_bounds(sys.A)
    if lo == 0.0:
        probe = riccati_fixed_point(sys, cost, 0.0, tol=fp_tol, max_iter=max_iter)
        if probe.status == "converged":
            return 0.0
    hi = 1.0
    while hi - lo > tol_rho:
        mid = (lo + hi) / 2
        rep = riccati_fixed_point(sys, cost, mid, tol=fp_tol, max_iter=max_iter)
        if rep.status == "converged":
            hi = mid
        elif rep.status == "diverged":
            lo = mid
        else:
            # budget exhausted without growth: residual trend decides
            res = rep.residuals
            if res[-1] < res[max(0, res.size - GROWTH_WINDOW)]:
                hi = mid
            else:
                lo = mid
    return (lo + hi) / 2


@dataclass(frozen=True)
class StationaryPolicy:
    """Stationary Nash-equilibrium gains for the controller."""

    K: np.ndarray
    P_inf: np.ndarray
    P1_inf: np.ndarray | None
    P2_inf: np.ndarray | None
    c_rate: float
    report: StabilityReport


def stationary_policy(
    sys: LinearSystem,
    cost: CostSpec,
    p: float,
    attacker_kind: str = "closed",
    tol: float = 1e-9,
    max_iter: int = 100_000,
) -> StationaryPolicy:
    """Infinite-horizon gains at the modified-Riccati fixed point.

    attacker_kind selects the effective arrival probability: p(1-p) under
    either dominant attack, p with no attacker present.
    """
    if attacker_kind not in ("closed", "open", "none"):
        raise ValueError(f"unknown attacker_kind {attacker_kind!r}")
    if not (0.0 < p <= 1.0):
        raise ValueError(f"p must be in (0, 1], got {p}")
    rho = p if attacker_kind == "none" else p * (1.0 - p)
    A, B, Q, R = sys.A, sys.B, cost.Q, cost.R
    if attacker_kind == "closed":
        # Stationary limit of the closed-loop backward recursion: the
        # improvement term is built from P1 = A'PA + Q, not from P itself,
        # so this is a different fixed point from g_rho.
        lower, upper = rho_min_bounds(sys.A)
        P1 = _sym(np.array(Q, dtype=float))
        P = P1.copy()
        residuals = []
        status, it = "undetermined", max_iter
        for it in range(1, max_iter + 1):
            S = B.T @ P1 @ A
            M = _sym(B.T @ P1 @ B + R)
            P2_next = _sym(-p * S.T @ solve(M, S, assume_a="pos"))
            P1_next = _sym(A.T @ P @ A + Q)
            P_next = _sym(P1_next + (1.0 - p) * P2_next)
            res = float(np.linalg.norm(P_next - P, 2))
            residuals.append(res)
            P1, P = P1_next, P_next
            if res <= tol:
                status = "converged"
                break
            if np.linalg.norm(P, 2) > DIVERGENCE_NORM:
                status = "diverged"
                break
        report = StabilityReport(
            rho=rho, rho_min_lower=lower, rho_min_upper=upper,
            converged=status == "converged", status=status, iterations=it,
            P_inf=P if status == "converged" else None,
            residuals=np.array(residuals),
        )
        if not report.converged:
            raise ValueError(
                f"closed-loop Riccati recursion did not converge at rho={rho:.6g} "
                f"(status: {status}); adjust the transmission probability p"
            )
        S = B.T @ P1 @ A
        M = _sym(B.T @ P1 @ B + R)
        K = -solve(M, S, assume_a="pos")
        P2_inf = _sym(-p * S.T @ solve(M, S, assume_a="pos"))
        c_rate = float(np.trace(P @ sys.sigma_v))
        return StationaryPolicy(K=K, P_inf=P, P1_inf=P1, P2_inf=P2_inf,
                                c_rate=c_rate, report=report)
    report = riccati_fixed_point(sys, cost, rho, tol=tol, max_iter=max_iter)
    if not report.converged:
        raise ValueError(
            f"modified Riccati iteration did not converge at rho={rho:.6g} "
            f"(status: {report.status}); adjust the transmission probability p"
        )
    P_inf = report.P_inf
    K = _gain(A, B, R, P_inf)
    c_rate = float(np.trace(P_inf @ sys.sigma_v))
    return StationaryPolicy(K=K, P_inf=P_inf, P1_inf=None, P2_inf=None,
                            c_rate=c_rate, report=report)
