"""Bus-off attacker/defender game on a lossy control channel."""

from .system_model import ContinuousSystem, LinearSystem, discretize_zoh, step
from .policies import (
    ClosedLoopAttacker,
    ClosedLoopAttackPolicy,
    OpenLoopAttackPolicy,
    TransmissionPolicy,
    collision_probability,
    dominant_closed_loop,
    dominant_open_loop,
)
from .error_counter import (
    CounterChain,
    ErrorCounterConfig,
    bus_off_probability_within,
    closed_form_hitting_time,
    drift,
    expected_hitting_steps,
    expected_hitting_time,
    transition_matrix,
    update_counter,
)
from .control_synthesis import (
    CostSpec,
    OpenLoopLadder,
    RiccatiLadder,
    StabilityReport,
    StationaryPolicy,
    backward_closed_loop,
    backward_open_loop,
    modified_riccati_step,
    rho_min_bounds,
    rho_min_empirical,
    riccati_fixed_point,
    stationary_policy,
)
from .simulator import (
    EpisodeTrace,
    GameConfig,
    MonteCarloSummary,
    estimate_attacker_cost,
    monte_carlo,
    run_episode,
)
from .acc import (
    AccParams,
    AccRun,
    BrakeScenario,
    SafetyMetrics,
    brake_profile,
    build_acc_system,
    evaluate_acc_trace,
    make_acc_game,
    recommend_p_range,
    run_acc,
)

__version__ = "0.1.0"
