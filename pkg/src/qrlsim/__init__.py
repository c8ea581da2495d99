"""Ensemble simulator for hybrid quantum-classical learning agents on
deterministic strictly epochal environments."""

from .env import (
    ActionSequence,
    BinaryTreeEnv,
    ContractViolation,
    DseEnvironment,
    EpochOutcome,
    SpaceNotEnumerable,
    TableEnv,
    count_rewarded,
    load_reward_table,
)
from .policy import (
    HValueTreePolicy,
    MapPolicy,
    RewardedHistory,
    decision_probability,
    q_min_bound,
    replay_history,
    winning_probability,
)
from .amplify import (
    AmplitudeState,
    GroverOutcome,
    SearchParams,
    SearchResult,
    analytic_grover_sample,
    exponential_search,
    grover_iterate,
    grover_success_prob,
    q_kmax,
    q_max_threshold,
    statevector_measure,
    statevector_prepare,
)
from .agents import (
    AgentTrace,
    IntervalStats,
    ModeSwitchRule,
    StopRule,
    epochs_to_reward_stats,
    run_classical,
    run_hybrid,
)
from .stats import (
    BoundCheck,
    LearningTimeSummary,
    RewardedHistoryDistribution,
    average_reward_curve,
    empirical_history_distribution,
    exact_history_distribution,
    expected_reward,
    learning_time,
    theorem2_bound_check,
    theorem3_bound_check,
    tv_distance,
)
from .config import RunConfig
from .seeding import derive_rng

__version__ = "0.1.0"
