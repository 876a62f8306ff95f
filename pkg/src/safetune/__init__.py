"""Safe contextual Bayesian optimization for controller gain tuning."""

from .acquisition import SwarmParams, grid_argmax, pso_maximize
from .envs import (
    BENCHMARKS,
    PendulumConfig,
    PendulumEnv,
    RewardSpec,
    RolloutRecord,
    SyntheticEnv,
    disturbed_torque,
    evaluate_rollout,
    pendulum_step,
    synthetic_eval,
)
from .explore import (
    AlgoOptions,
    BoundaryParams,
    EpisodeOutcome,
    SafeOptimizer,
    boundary_condition,
    boundary_condition_practical,
    run_contextual_gosafeopt,
)
from .baselines import UcbOptimizer, make_safeopt
from .gp import CompositeKernel, ConfidenceState, Kernel, Surrogate, kernel_eval
from .sets import (
    Domain,
    best_guess_index,
    compute_expanders,
    compute_maximizers,
    reachable_set,
    update_safe_set,
)

__version__ = "0.1.0"
