"""Error-counter absorbing Markov chain: updates, hitting times, drift."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class ErrorCounterConfig:
    """Counter increments: +e_plus on collision, e_minus on success (floored at
    0), absorbing at e_bar."""

    e_plus: int
    e_bar: int
    e_minus: int = -1

    def __post_init__(self):
        if not (self.e_plus > 0 > self.e_minus):
            raise ValueError("need e_plus > 0 > e_minus")
        if abs(self.e_plus) <= abs(self.e_minus):
            raise ValueError("need |e_plus| > |e_minus|")
        if self.e_bar < self.e_plus:
            raise ValueError("need e_bar >= e_plus")


def update_counter(cfg: ErrorCounterConfig, S: int, alpha: int, beta: int) -> int:
    """Three-case counter update; no transmission leaves the counter unchanged."""
    if not 0 <= S <= cfg.e_bar:
        raise ValueError(f"counter {S} outside [0, {cfg.e_bar}]")
    if alpha == 1 and beta == 1:
        return min(cfg.e_bar, S + cfg.e_plus)
    if alpha == 1 and beta == 0:
        return max(0, S + cfg.e_minus)
    return S


@dataclass(frozen=True)
class CounterChain:
    """Row-stochastic transition matrix over counter states {0, ..., e_bar} in
    message space; state e_bar is absorbing."""

    config: ErrorCounterConfig
    q: float
    theta: np.ndarray


def transition_matrix(cfg: ErrorCounterConfig, q: float) -> CounterChain:
    """Per-message transition matrix at collision probability q.

    The floor at 0 merges the stay-put mass with the success mass, so
    theta[0, 0] accumulates 1 - q.
    """
    if not (0.0 < q <= 1.0):
        raise ValueError(f"q must be in (0, 1], got {q}")
    nstates = cfg.e_bar + 1
    theta = np.zeros((nstates, nstates))
    for s in range(cfg.e_bar):
        theta[s, min(cfg.e_bar, s + cfg.e_plus)] += q
        theta[s, max(0, s + cfg.e_minus)] += 1.0 - q
    theta[cfg.e_bar, cfg.e_bar] = 1.0
    return CounterChain(config=cfg, q=q, theta=theta)


def expected_hitting_time(chain: CounterChain, s0: int = 0) -> float:
    """Expected number of messages until absorption at e_bar, starting from s0.

    Solves (I - theta_transient) v = 1 over the transient block. Under a
    negative drift the hitting times grow like exp(e_bar), which makes the
    float solve hopelessly ill-conditioned, so the banded system (upper
    bandwidth e_plus, lower bandwidth |e_minus|) is eliminated in exact
    rational arithmetic instead.
    """
    cfg = chain.config
    e_bar = cfg.e_bar
    if not 0 <= s0 < e_bar:
        raise ValueError(f"s0 must be a transient state in [0, {e_bar})")
    if chain.q <= 0.0:
        raise ValueError("q = 0 gives an infinite expected bus-off time")
    q = Fraction(chain.q)
    rows: list[dict[int, Fraction]] = []
    rhs = [Fraction(1)] * e_bar
    for s in range(e_bar):
        row = {s: Fraction(1)}
        up = s + cfg.e_plus
        if up < e_bar:
            row[up] = row.get(up, Fraction(0)) - q
        down = max(0, s + cfg.e_minus)
        row[down] = row.get(down, Fraction(0)) - (1 - q)
        rows.append(row)
    for j in range(e_bar):  # forward elimination, bandwidth-preserving
        pivot = rows[j][j]
        for i in range(j + 1, min(e_bar, j - cfg.e_minus + 1)):
            coeff = rows[i].get(j)
            if not coeff:
                continue
            factor = coeff / pivot
            for col, val in rows[j].items():
                rows[i][col] = rows[i].get(col, Fraction(0)) - factor * val
            del rows[i][j]
            rhs[i] -= factor * rhs[j]
    v = [Fraction(0)] * e_bar
    for j in range(e_bar - 1, -1, -1):
        acc = rhs[j]
        for col, val in rows[j].items():
            if col > j:
                acc -= val * v[col]
        v[j] = acc / rows[j][j]
    try:
        return float(v[s0])
    except OverflowError:
        return math.inf


def expected_hitting_steps(chain: CounterChain, s0: int, p: float) -> float:
    """Expected bus-off time in time-space steps for a memoryless transmitter:
    messages times the mean inter-transmission gap 1/p."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must be in (0, 1], got {p}")
    return expected_hitting_time(chain, s0) / p


def closed_form_hitting_time(q: float) -> float:
    """The rank-one-inverse closed form 1 + 1/q.

    Kept only as a comparison value; it disagrees with the exact linear solve
    for any chain with more than one transient state. See the reproduction
    notes in the README.
    """
    if q <= 0.0:
        raise ValueError("q must be positive")
    return 1.0 + 1.0 / q


def drift(cfg: ErrorCounterConfig, q: float) -> float:
    """Mean per-message counter increment q e_plus + (1-q) e_minus."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    return q * cfg.e_plus + (1.0 - q) * cfg.e_minus


def bus_off_probability_within(chain: CounterChain, s0: int, n_messages: int) -> float:
    """Probability the counter has absorbed within n_messages messages."""
    if n_messages < 0:
        raise ValueError("n_messages must be nonnegative")
    e_bar = chain.config.e_bar
    if not 0 <= s0 <= e_bar:
        raise ValueError(f"s0 outside [0, {e_bar}]")
    row = np.zeros(e_bar + 1)
    row[s0] = 1.0
    for _ in range(n_messages):
        row = row @ chain.theta
    return float(row[e_bar])


def sample_hitting_times(
    chain: CounterChain,
    s0: int,
    n_episodes: int,
    rng: np.random.Generator,
    max_messages: int = 10_000_000,
) -> np.ndarray:
    """Monte Carlo draws of the message-space bus-off time (vectorized walk)."""
    cfg = chain.config
    states = np.full(n_episodes, s0, dtype=np.int64)
    times = np.zeros(n_episodes, dtype=np.int64)
    active = np.ones(n_episodes, dtype=bool)
    for msg in range(1, max_messages + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        collide = rng.random(idx.size) < chain.q
        s = states[idx]
        s = np.where(
            collide,
            np.minimum(cfg.e_bar, s + cfg.e_plus),
            np.maximum(0, s + cfg.e_minus),
        )
        states[idx] = s
        absorbed = s >= cfg.e_bar
        times[idx[absorbed]] = msg
        active[idx[absorbed]] = False
    if np.any(active):
        raise RuntimeError(f"episodes not absorbed within {max_messages} messages")
    return times
