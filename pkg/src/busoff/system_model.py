"""Discrete LTI plant with a lossy actuation channel, plus ZOH discretization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

PSD_EIG_TOL = -1e-10


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class LinearSystem:
    """x_{t+1} = A x + (1-beta) alpha B u + G v, process noise ~ N(0, sigma_v).

    G carries the deterministic disturbance channel; sigma_v drives the
    i.i.d. Gaussian process noise. The two are deliberately separate.
    """

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray = None
    sigma_v: np.ndarray = None

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B has {B.shape[0]} rows, expected {n}")
        G = _as_matrix(self.G, "G") if self.G is not None else np.zeros((n, 1))
        if G.shape[0] != n:
            raise ValueError(f"G has {G.shape[0]} rows, expected {n}")
        sigma = (
            _as_matrix(self.sigma_v, "sigma_v")
            if self.sigma_v is not None
            else np.zeros((n, n))
        )
        if sigma.shape != (n, n):
            raise ValueError(f"sigma_v must be {n}x{n}, got {sigma.shape}")
        if not np.allclose(sigma, sigma.T, atol=1e-10):
            raise ValueError("sigma_v must be symmetric")
        if np.min(np.linalg.eigvalsh((sigma + sigma.T) / 2)) < PSD_EIG_TOL:
            raise ValueError("sigma_v must be positive semidefinite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "sigma_v", sigma)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def d(self) -> int:
        return self.G.shape[1]

    def noise_factor(self) -> np.ndarray:
        """Matrix L with L L^T = sigma_v (eigendecomposition, PSD-safe)."""
        w, V = np.linalg.eigh((self.sigma_v + self.sigma_v.T) / 2)
        w = np.clip(w, 0.0, None)
        return V * np.sqrt(w)


@dataclass(frozen=True)
class ContinuousSystem:
    """Continuous-time matrices and the sampling time used to discretize them."""

    A_c: np.ndarray
    B_c: np.ndarray
    G_c: np.ndarray = None
    dt: float = 0.1
    sigma_v: np.ndarray = None

    def __post_init__(self):
        A_c = _as_matrix(self.A_c, "A_c")
        B_c = _as_matrix(self.B_c, "B_c")
        n = A_c.shape[0]
        if A_c.shape != (n, n):
            raise ValueError(f"A_c must be square, got {A_c.shape}")
        if B_c.shape[0] != n:
            raise ValueError(f"B_c has {B_c.shape[0]} rows, expected {n}")
        G_c = _as_matrix(self.G_c, "G_c") if self.G_c is not None else np.zeros((n, 1))
        if G_c.shape[0] != n:
            raise ValueError(f"G_c has {G_c.shape[0]} rows, expected {n}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "A_c", A_c)
        object.__setattr__(self, "B_c", B_c)
        object.__setattr__(self, "G_c", G_c)


def discretize_zoh(cs: ContinuousSystem) -> LinearSystem:
    """Exact zero-order-hold discretization via the augmented matrix exponential.

    [A_d  M_d]        ([A_c  M_c]     )
    [ 0    I ] =  expm([ 0    0 ] * dt)   with M_c = [B_c  G_c].
    """
    n = cs.A_c.shape[0]
    M_c = np.hstack([cs.B_c, cs.G_c])
    k = M_c.shape[1]
    aug = np.zeros((n + k, n + k))
    aug[:n, :n] = cs.A_c
    aug[:n, n:] = M_c
    E = expm(aug * cs.dt)
    A_d = E[:n, :n]
    M_d = E[:n, n:]
    m = cs.B_c.shape[1]
    return LinearSystem(A=A_d, B=M_d[:, :m], G=M_d[:, m:], sigma_v=cs.sigma_v)


def step(sys: LinearSystem, x, u, alpha: int, beta: int, v=None) -> np.ndarray:
    """One step of the lossy-channel dynamics.

    Control enters iff alpha == 1 and beta == 0; a collision (alpha = beta = 1)
    applies zero control.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.shape[0] != sys.n:
        raise ValueError(f"x has dimension {x.shape[0]}, expected {sys.n}")
    if u.shape[0] != sys.m:
        raise ValueError(f"u has dimension {u.shape[0]}, expected {sys.m}")
    if alpha not in (0, 1) or beta not in (0, 1):
        raise ValueError("alpha and beta must be bits")
    out = sys.A @ x + (1 - beta) * alpha * (sys.B @ u)
    if v is not None:
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.shape[0] != sys.d:
            raise ValueError(f"v has dimension {v.shape[0]}, expected {sys.d}")
        out = out + sys.G @ v
    return out


def draw_noise(sys: LinearSystem, rng: np.random.Generator) -> np.ndarray:
    """Sample one process-noise vector; a zero covariance returns zeros without
    consuming randomness."""
    if not np.any(sys.sigma_v):
        return np.zeros(sys.n)
    return sys.noise_factor() @ rng.standard_normal(sys.n)
