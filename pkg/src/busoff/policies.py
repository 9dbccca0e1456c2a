"""Transmission and attack policies, collision probability, dominant strategies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class TransmissionPolicy:
    """Memoryless defender: transmit each step with probability p, giving
    Geometric(p) inter-transmission gaps.

    p = 1 (transmit every step) is accepted for attacker-free reference runs
    only; game-facing operations require p < 1.
    """

    p: float

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0):
            raise ValueError(f"p must be in (0, 1], got {self.p}")

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.random() < self.p)


@dataclass(frozen=True)
class ClosedLoopAttackPolicy:
    """Waiting-time distribution on {1, 2, ...}: finite weights iota[k-1] for
    wait k, plus an optional geometric tail of mass tail_mass and ratio
    tail_ratio starting right after the finite support."""

    iota: np.ndarray
    tail_mass: float = 0.0
    tail_ratio: float = 0.0

    def __post_init__(self):
        iota = np.asarray(self.iota, dtype=float).reshape(-1)
        if iota.size == 0 and self.tail_mass == 0.0:
            raise ValueError("empty waiting-time distribution")
        if np.any(iota < 0) or self.tail_mass < 0:
            raise ValueError("waiting-time probabilities must be nonnegative")
        total = iota.sum() + self.tail_mass
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"waiting-time distribution sums to {total}, not 1")
        if self.tail_mass > 0 and not (0.0 < self.tail_ratio < 1.0):
            raise ValueError("geometric tail needs ratio in (0, 1)")
        object.__setattr__(self, "iota", iota)

    @classmethod
    def delta(cls, k: int) -> "ClosedLoopAttackPolicy":
        """Deterministic wait of k steps."""
        if k < 1:
            raise ValueError("wait must be >= 1")
        iota = np.zeros(k)
        iota[k - 1] = 1.0
        return cls(iota=iota)

    def sample_wait(self, rng: np.random.Generator) -> int:
        u = rng.random()
        acc = 0.0
        for k, w in enumerate(self.iota, start=1):
            acc += w
            if u < acc:
                return k
        # geometric tail: support starts at len(iota) + 1
        return len(self.iota) + 1 + rng.geometric(1.0 - self.tail_ratio) - 1


@dataclass(frozen=True)
class OpenLoopAttackPolicy:
    """Memoryless attacker transmitting with probability p_prime each step."""

    p_prime: float

    def __post_init__(self):
        if not (0.0 <= self.p_prime <= 1.0):
            raise ValueError(f"p_prime must be in [0, 1], got {self.p_prime}")

    def validate_against(self, tx: TransmissionPolicy) -> None:
        if self.p_prime > tx.p:
            raise ValueError(
                f"attacker rate p_prime={self.p_prime} exceeds transmitter rate p={tx.p}"
            )


def collision_probability(
    tx: TransmissionPolicy, atk: ClosedLoopAttackPolicy
) -> float:
    """Per-message collision probability q = sum_k iota_k p (1-p)^(k-1)."""
    p = tx.p
    k = np.arange(1, len(atk.iota) + 1)
    q = float(np.sum(atk.iota * p * (1.0 - p) ** (k - 1)))
    if atk.tail_mass > 0:
        # sum_{j>=1} tail_mass (1-r) r^(j-1) p (1-p)^(K+j-1)
        K, r = len(atk.iota), atk.tail_ratio
        q += atk.tail_mass * p * (1.0 - p) ** K * (1.0 - r) / (1.0 - r * (1.0 - p))
    return q


def dominant_closed_loop() -> ClosedLoopAttackPolicy:
    """Jam one step after every observed transmission; maximizes q to exactly p."""
    return ClosedLoopAttackPolicy.delta(1)


def dominant_open_loop(tx: TransmissionPolicy) -> OpenLoopAttackPolicy:
    """Attack at the full allowed rate p' = p; induced collision probability p^2."""
    return OpenLoopAttackPolicy(p_prime=tx.p)


class ClosedLoopAttacker:
    """Per-episode waiting-time machinery of a closed-loop attacker.

    Waits are drawn i.i.d. from the policy, anchored to observed transmissions:
    a transmission at step T schedules a jam at step T + wait. An attempt that
    fires without a collision is spent; a transmission observed before the wait
    elapses withdraws the attempt and redraws.

    With virtual_start (the default) the episode start acts as a transmission
    observed one step before time 0, so the very first message already faces
    the collision probability q and the per-message statistics match the
    counter chain from message 1 on. The deterministic wait of 1 then gives
    beta_0 = 1 and beta_t = alpha_{t-1} for every t >= 1; the simulator's
    dominant-closed mode realizes beta_t = alpha_{t-1} for all t instead.
    """

    def __init__(
        self,
        policy: ClosedLoopAttackPolicy,
        rng: np.random.Generator | None = None,
        virtual_start: bool = True,
    ):
        self.policy = policy
        if virtual_start:
            if rng is None:
                raise ValueError("virtual_start needs an rng for the initial wait")
            self._armed = True
            self._remaining = policy.sample_wait(rng)
        else:
            self._armed = False
            self._remaining = 0

    def fire(self) -> int:
        """Attack bit for the current step (call before observing alpha_t)."""
        return int(self._armed and self._remaining == 1)

    def observe(self, alpha: int, rng: np.random.Generator) -> None:
        """Advance one step after the transmitter's decision alpha_t."""
        fired = self.fire()
        if alpha == 1:
            self._armed = True
            self._remaining = self.policy.sample_wait(rng)
        elif fired:
            self._armed = False
        elif self._armed:
            self._remaining -= 1


def simulate_closed_loop_attacker(
    atk: ClosedLoopAttackPolicy, alpha_history, rng: np.random.Generator
) -> int:
    """Attack bit at step t = len(alpha_history), replaying the given history.

    Convenience wrapper over ClosedLoopAttacker for stateless callers; the rng
    supplies the waiting-time draws in history order.
    """
    state = ClosedLoopAttacker(atk, rng)
    for a in alpha_history:
        state.observe(int(a), rng)
    return state.fire()
