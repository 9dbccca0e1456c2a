"""Seeded Monte Carlo engine for the full game: transmitter, attacker,
controller, plant, and error counter."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control_synthesis import CostSpec, OpenLoopLadder, RiccatiLadder, StationaryPolicy
from .error_counter import ErrorCounterConfig, update_counter
from .policies import (
    ClosedLoopAttacker,
    ClosedLoopAttackPolicy,
    OpenLoopAttackPolicy,
    TransmissionPolicy,
)
from .system_model import LinearSystem, draw_noise

STATE_OVERFLOW = 1e100


@dataclass(frozen=True)
class GameConfig:
    """Everything a single episode needs.

    attacker is one of: None; "dominant-closed" (beta_t = alpha_{t-1}, the
    Nash attack); "dominant-open" (Bernoulli(p) jamming); an explicit
    ClosedLoopAttackPolicy (waiting-time machinery); or an explicit
    OpenLoopAttackPolicy. controller may be None (zero control), a stationary
    gain matrix / StationaryPolicy, or a finite-horizon ladder; disturbance is
    a (horizon, d) array of deterministic inputs through G, or None.
    """

    sys: LinearSystem
    cost: CostSpec
    tx: TransmissionPolicy
    horizon: int
    x0: np.ndarray
    attacker: str | ClosedLoopAttackPolicy | OpenLoopAttackPolicy | None = None
    counter: ErrorCounterConfig | None = None
    controller: object = None
    disturbance: np.ndarray | None = None
    post_busoff: str = "continue"  # or "stop"

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.shape[0] != self.sys.n:
            raise ValueError(f"x0 has dimension {x0.shape[0]}, expected {self.sys.n}")
        object.__setattr__(self, "x0", x0)
        if self.post_busoff not in ("continue", "stop"):
            raise ValueError("post_busoff must be 'continue' or 'stop'")
        if isinstance(self.attacker, str) and self.attacker not in (
            "dominant-closed", "dominant-open",
        ):
            raise ValueError(f"unknown attacker kind {self.attacker!r}")
        if self.attacker is not None and self.tx.p >= 1.0:
            raise ValueError("p = 1 is only valid for attacker-free reference runs")
        if isinstance(self.attacker, OpenLoopAttackPolicy):
            self.attacker.validate_against(self.tx)
        if self.disturbance is not None:
            dist = np.atleast_2d(np.asarray(self.disturbance, dtype=float))
            if dist.shape[1] != self.sys.d:
                raise ValueError(
                    f"disturbance columns {dist.shape[1]} != d = {self.sys.d}"
                )
            if dist.shape[0] < self.horizon:
                raise ValueError("disturbance shorter than horizon")
            object.__setattr__(self, "disturbance", dist)


def _gain_at(controller, t: int) -> np.ndarray | None:
    if controller is None:
        return None
    if isinstance(controller, StationaryPolicy):
        return controller.K
    if isinstance(controller, (RiccatiLadder, OpenLoopLadder)):
        if t >= controller.horizon:
            return None
        return controller.K[t]
    return np.atleast_2d(np.asarray(controller, dtype=float))


@dataclass
class EpisodeTrace:
    """Per-step record of one episode plus terminal outcomes."""

    x: np.ndarray  # (T, n) state at each step
    u: np.ndarray  # (T, m) commanded control
    alpha: np.ndarray
    beta: np.ndarray
    applied: np.ndarray
    S: np.ndarray
    stage_cost: np.ndarray
    x_final: np.ndarray
    xi: int | None
    total_cost: float
    seed: int
    diverged_at: int | None = None

    @property
    def steps(self) -> int:
        return self.x.shape[0]


def run_episode(cfg: GameConfig, seed: int) -> EpisodeTrace:
    """Deterministic function of (cfg, seed).

    Per step: draw alpha ~ Bernoulli(p), get beta from the attacker, compute
    u = K x (the controller cannot see alpha_t), apply the lossy dynamics,
    update the counter only on transmission events, and charge the R-cost only
    when the control is actually delivered. After bus-off the node is off the
    bus: alpha is forced to 0.
    """
    rng = np.random.default_rng(seed)
    sys_, cost = cfg.sys, cfg.cost
    n, m = sys_.n, sys_.m
    T = cfg.horizon
    Q, R = cost.Q, cost.R

    attacker_state = None
    open_loop_p = None
    dominant_closed = cfg.attacker == "dominant-closed"
    if isinstance(cfg.attacker, ClosedLoopAttackPolicy):
        attacker_state = ClosedLoopAttacker(cfg.attacker, rng)
    elif isinstance(cfg.attacker, OpenLoopAttackPolicy):
        open_loop_p = cfg.attacker.p_prime
    elif cfg.attacker == "dominant-open":
        open_loop_p = cfg.tx.p

    x = cfg.x0.copy()
    S = 0
    xi = None
    diverged_at = None

    xs = np.zeros((T, n))
    us = np.zeros((T, m))
    alphas = np.zeros(T, dtype=np.int64)
    betas = np.zeros(T, dtype=np.int64)
    applieds = np.zeros(T, dtype=np.int64)
    Ss = np.zeros(T, dtype=np.int64)
    costs = np.zeros(T)
    steps_done = 0
    total = 0.0

    for t in range(T):
        off_bus = xi is not None
        if off_bus and cfg.post_busoff == "stop":
            break
        alpha = 0 if off_bus else cfg.tx.sample(rng)
        if dominant_closed:
            beta = int(alphas[t - 1]) if t > 0 else 0  # alpha_{-1} = 0
        elif attacker_state is not None:
            beta = attacker_state.fire()
            attacker_state.observe(alpha, rng)
        elif open_loop_p is not None:
            beta = int(rng.random() < open_loop_p)
        else:
            beta = 0
        K = _gain_at(cfg.controller, t)
        u = np.zeros(m) if K is None else K @ x
        applied = (1 - beta) * alpha

        stage = float(x @ Q @ x) + applied * float(u @ R @ u)
        total += stage

        if cfg.counter is not None and alpha == 1:
            S = update_counter(cfg.counter, S, alpha, beta)
            if S >= cfg.counter.e_bar and xi is None:
                xi = t

        xs[t] = x
        us[t] = u
        alphas[t] = alpha
        betas[t] = beta
        applieds[t] = applied
        Ss[t] = S
        costs[t] = stage
        steps_done = t + 1

        d = cfg.disturbance[t] if cfg.disturbance is not None else None
        x_next = sys_.A @ x + applied * (sys_.B @ u)
        if d is not None:
            x_next = x_next + sys_.G @ d
        x_next = x_next + draw_noise(sys_, rng)
        if not np.all(np.isfinite(x_next)) or np.max(np.abs(x_next)) > STATE_OVERFLOW:
            diverged_at = t
            x = x_next
            break
        x = x_next

    total += float(x @ Q @ x) if np.all(np.isfinite(x)) else math.inf
    sl = slice(0, steps_done)
    return EpisodeTrace(
        x=xs[sl], u=us[sl], alpha=alphas[sl], beta=betas[sl],
        applied=applieds[sl], S=Ss[sl], stage_cost=costs[sl],
        x_final=x, xi=xi, total_cost=total, seed=seed, diverged_at=diverged_at,
    )


@dataclass
class MonteCarloSummary:
    n_episodes: int
    mean_cost: float
    stderr_cost: float
    busoff_frequency: float
    mean_xi: float | None
    crash_frequency: float | None
    rows: list = field(default_factory=list)


def monte_carlo(
    cfg: GameConfig,
    n_episodes: int,
    base_seed: int = 0,
    crash_predicate=None,
) -> MonteCarloSummary:
    """Run episodes with seeds base_seed + i; reproducible bit-for-bit."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    costs = np.zeros(n_episodes)
    rows = []
    xis = []
    crashes = 0
    for i in range(n_episodes):
        seed = base_seed + i
        tr = run_episode(cfg, seed)
        costs[i] = tr.total_cost
        crashed = bool(crash_predicate(tr)) if crash_predicate is not None else None
        if crashed:
            crashes += 1
        if tr.xi is not None:
            xis.append(tr.xi)
        rows.append({
            "seed": seed,
            "total_cost": tr.total_cost,
            "xi": tr.xi,
            "max_counter": int(tr.S.max()) if tr.S.size else 0,
            "crashed": crashed,
            "diverged_at": tr.diverged_at,
        })
    mean = float(np.mean(costs))
    stderr = float(np.std(costs, ddof=1) / np.sqrt(n_episodes)) if n_episodes > 1 else 0.0
    return MonteCarloSummary(
        n_episodes=n_episodes,
        mean_cost=mean,
        stderr_cost=stderr,
        busoff_frequency=len(xis) / n_episodes,
        mean_xi=float(np.mean(xis)) if xis else None,
        crash_frequency=crashes / n_episodes if crash_predicate is not None else None,
        rows=rows,
    )


@dataclass
class AttackerCostEstimate:
    mean_xi: float
    ci_low: float
    ci_high: float
    n_busoff: int
    n_episodes: int
    censored: bool  # more than half the episodes never reached bus-off


def estimate_attacker_cost(
    cfg: GameConfig, n_episodes: int, base_seed: int = 0
) -> AttackerCostEstimate:
    """Monte Carlo mean bus-off time (in steps) with a 99% normal CI.

    Episodes that never reach bus-off within the horizon are censored; the
    estimate is flagged when they exceed half the sample.
    """
    xis = []
    for i in range(n_episodes):
        tr = run_episode(cfg, base_seed + i)
        if tr.xi is not None:
            xis.append(tr.xi)
    n_busoff = len(xis)
    if n_busoff == 0:
        raise ValueError("no bus-off events observed; increase the horizon")
    xis = np.array(xis, dtype=float)
    mean = float(xis.mean())
    se = float(xis.std(ddof=1) / np.sqrt(n_busoff)) if n_busoff > 1 else 0.0
    z = 2.5758293035489004  # 99% two-sided normal quantile
    return AttackerCostEstimate(
        mean_xi=mean,
        ci_low=mean - z * se,
        ci_high=mean + z * se,
        n_busoff=n_busoff,
        n_episodes=n_episodes,
        censored=n_busoff < n_episodes / 2,
    )
