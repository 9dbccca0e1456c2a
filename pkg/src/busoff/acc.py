"""Adaptive-cruise-control case study: car-following model, emergency-brake
scenario, and safety metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control_synthesis import CostSpec, backward_closed_loop, rho_min_bounds, stationary_policy
from .error_counter import ErrorCounterConfig
from .policies import TransmissionPolicy
from .simulator import EpisodeTrace, GameConfig, run_episode
from .system_model import ContinuousSystem, LinearSystem, discretize_zoh


@dataclass(frozen=True)
class AccParams:
    """Car-following constants; the state is [spacing error, relative velocity,
    ego acceleration]."""

    K_L: float = 1.0      # lag gain
    T_L: float = 0.45     # lag time constant, s
    tau_h: float = 2.5    # time headway, s
    d_0: float = 5.0      # stopping distance, m
    dt: float = 0.1       # sampling time, s
    q_diag: tuple = (0.06, 0.1, 0.5)
    r: float = 1.0

    def __post_init__(self):
        for name in ("K_L", "T_L", "tau_h", "d_0", "dt", "r"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if any(q < 0 for q in self.q_diag):
            raise ValueError("q_diag entries must be nonnegative")


@dataclass(frozen=True)
class BrakeScenario:
    """Lead vehicle cruises, then brakes at constant deceleration to a stop."""

    lead_x0: float = 100.0
    lead_v0: float = 25.0
    ego_x0: float = 0.0
    ego_v0: float = 20.0
    brake_start: float = 20.0
    brake_decel: float = -2.5
    duration: float = 100.0

    def __post_init__(self):
        if not (0.0 < self.brake_start < self.duration):
            raise ValueError("need duration > brake_start > 0")
        if self.brake_decel >= 0:
            raise ValueError("brake_decel must be negative")


@dataclass(frozen=True)
class SafetyMetrics:
    min_gap: float
    final_gap: float
    crash_time: float | None      # first time the actual gap goes negative, s
    busoff_time: float | None     # s
    max_error_counter: int


def build_acc_system(params: AccParams, canonical_lag: bool = False) -> ContinuousSystem:
    """Continuous car-following matrices.

    The default input coefficient is T_L as printed in the source model; the
    canonical first-order-lag realization of a_f = K_L/(T_L s + 1) a_des uses
    K_L / T_L instead (see README reproduction notes).
    """
    b3 = params.K_L / params.T_L if canonical_lag else params.T_L
    A_c = np.array([
        [0.0, 1.0, -params.tau_h],
        [0.0, 0.0, -1.0],
        [0.0, 0.0, -1.0 / params.T_L],
    ])
    B_c = np.array([[0.0], [0.0], [b3]])
    G_c = np.array([[0.0], [1.0], [0.0]])
    return ContinuousSystem(A_c=A_c, B_c=B_c, G_c=G_c, dt=params.dt)


def acc_cost(params: AccParams, horizon: int | None = None) -> CostSpec:
    return CostSpec(Q=np.diag(params.q_diag), R=np.array([[params.r]]), N=horizon)


def brake_profile(scn: BrakeScenario, t: float) -> tuple[float, float]:
    """(lead acceleration, lead velocity) at time t."""
    if not 0.0 <= t <= scn.duration:
        raise ValueError(f"t={t} outside [0, {scn.duration}]")
    stop_time = scn.brake_start + scn.lead_v0 / abs(scn.brake_decel)
    if t < scn.brake_start:
        return 0.0, scn.lead_v0
    if t < stop_time:
        return scn.brake_decel, scn.lead_v0 + scn.brake_decel * (t - scn.brake_start)
    return 0.0, 0.0


DEFAULT_COUNTER = ErrorCounterConfig(e_plus=2, e_bar=128, e_minus=-1)


def make_acc_game(
    p: float,
    attacker: str | None = "dominant-closed",
    controller_mode: str = "stationary",
    params: AccParams = AccParams(),
    scn: BrakeScenario = BrakeScenario(),
    counter: ErrorCounterConfig = DEFAULT_COUNTER,
    sigma_v: np.ndarray | None = None,
    canonical_lag: bool = True,
    post_busoff: str = "continue",
) -> GameConfig:
    """Assemble the emergency-brake game for one transmission probability.

    canonical_lag defaults to True here: with the input matrix as printed in
    the source model the attack-free reference run already collides during the
    emergency brake, so the scenario uses the canonical lag realization unless
    explicitly asked otherwise (see README reproduction notes).
    """
    if attacker not in (None, "none", "dominant-closed"):
        raise ValueError(f"unsupported attacker {attacker!r}")
    attacker_kind = None if attacker in (None, "none") else "dominant-closed"
    if p >= 1.0 and attacker_kind is not None:
        raise ValueError("p = 1 is a reference run; it requires attacker=none")

    cs = build_acc_system(params, canonical_lag=canonical_lag)
    if sigma_v is not None:
        cs = ContinuousSystem(A_c=cs.A_c, B_c=cs.B_c, G_c=cs.G_c, dt=cs.dt,
                              sigma_v=sigma_v)
    sys_ = discretize_zoh(cs)

    horizon = int(round(scn.duration / params.dt))
    cost = acc_cost(params, horizon=horizon)

    if controller_mode == "stationary":
        kind = "closed" if attacker_kind else "none"
        controller = stationary_policy(sys_, cost, p, attacker_kind=kind)
    elif controller_mode == "ladder":
        if attacker_kind is None:
            raise ValueError("ladder mode is defined against the dominant closed-loop attack")
        controller = backward_closed_loop(sys_, cost, p)
    else:
        raise ValueError(f"unknown controller_mode {controller_mode!r}")

    dist = np.array([[brake_profile(scn, t * params.dt)[0]] for t in range(horizon)])

    delta0 = (scn.lead_x0 - scn.ego_x0) - (params.tau_h * scn.ego_v0 + params.d_0)
    x0 = np.array([delta0, scn.lead_v0 - scn.ego_v0, 0.0])

    return GameConfig(
        sys=sys_, cost=cost, tx=TransmissionPolicy(p), horizon=horizon, x0=x0,
        attacker=attacker_kind, counter=counter, controller=controller,
        disturbance=dist, post_busoff=post_busoff,
    )


@dataclass
class AccRun:
    trace: EpisodeTrace
    metrics: SafetyMetrics
    gap_actual: np.ndarray
    v_ego: np.ndarray
    v_lead: np.ndarray
    times: np.ndarray


def evaluate_acc_trace(
    trace: EpisodeTrace,
    params: AccParams = AccParams(),
    scn: BrakeScenario = BrakeScenario(),
) -> AccRun:
    """Reconstruct the actual gap by co-integrating the ego velocity from the
    recorded ego acceleration, and derive the safety metrics."""
    T = trace.steps
    dt = params.dt
    a_f = np.concatenate([trace.x[:, 2], [trace.x_final[2]]])
    delta = np.concatenate([trace.x[:, 0], [trace.x_final[0]]])
    v_ego = np.zeros(T + 1)
    v_ego[0] = scn.ego_v0
    v_ego[1:] = scn.ego_v0 + np.cumsum((a_f[:-1] + a_f[1:]) / 2) * dt
    gap = delta + params.tau_h * v_ego + params.d_0
    times = np.arange(T + 1) * dt
    v_lead = np.array([brake_profile(scn, min(t, scn.duration)) [1] for t in times])

    crash_idx = np.flatnonzero(gap < 0.0)
    crash_time = float(times[crash_idx[0]]) if crash_idx.size else None
    metrics = SafetyMetrics(
        min_gap=float(gap.min()),
        final_gap=float(gap[-1]),
        crash_time=crash_time,
        busoff_time=None if trace.xi is None else float(trace.xi * dt),
        max_error_counter=int(trace.S.max()) if trace.S.size else 0,
    )
    return AccRun(trace=trace, metrics=metrics, gap_actual=gap,
                  v_ego=v_ego, v_lead=v_lead, times=times)


def run_acc(
    p: float,
    controller_mode: str = "stationary",
    attacker: str | None = "dominant-closed",
    seed: int = 0,
    params: AccParams = AccParams(),
    scn: BrakeScenario = BrakeScenario(),
    **kwargs,
) -> AccRun:
    cfg = make_acc_game(p, attacker=attacker, controller_mode=controller_mode,
                        params=params, scn=scn, **kwargs)
    trace = run_episode(cfg, seed)
    return evaluate_acc_trace(trace, params=params, scn=scn)


@dataclass(frozen=True)
class PRangeRecommendation:
    """Feasible transmission probabilities: stability wants p(1-p) above the
    spectral lower bound, a negative counter drift wants p below the drift
    bound."""

    stability_kind: str                       # "vacuous" | "interval" | "empty"
    stability_interval: tuple | None          # (p_lo, p_hi) when kind == "interval"
    rho_min_lower: float
    drift_upper: float
    note: str = ""


def recommend_p_range(
    A: np.ndarray, counter: ErrorCounterConfig = DEFAULT_COUNTER
) -> PRangeRecommendation:
    rho_lb, _ = rho_min_bounds(A)
    drift_upper = -counter.e_minus / (counter.e_plus - counter.e_minus)
    if rho_lb <= 0.0:
        kind, interval, note = "vacuous", None, "no stability constraint on p"
    elif rho_lb >= 0.25:
        kind, interval = "empty", None
        note = ("p(1-p) cannot exceed 1/4: no transmission probability meets the "
                "necessary condition; decreasing the sampling time moves the "
                "discrete dynamics closer to identity and relaxes the bound")
    else:
        half_width = np.sqrt(0.25 - rho_lb)
        kind, interval, note = "interval", (0.5 - half_width, 0.5 + half_width), ""
    return PRangeRecommendation(
        stability_kind=kind, stability_interval=interval,
        rho_min_lower=rho_lb, drift_upper=float(drift_upper), note=note,
    )
