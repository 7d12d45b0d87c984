"""Latency-aware sparse layer-update scheduling and pipeline simulation.

The package models test-time adaptation of a layer chain under a latency
budget: backprop-free layer importance from channel-statistic drift, runtime
latency prediction under dynamic resource conditions, budget-constrained
update selection certified against an exhaustive oracle, and a discrete
simulator of the forward/backward/reforward pipeline.
"""

from .errors import InputError, TraceExhausted
from .importance import (
    Embedding,
    EmbeddingHistory,
    FeatureStats,
    ImportanceVector,
    adaptation_loss,
    assess,
    assessment_flops,
    embed,
    layer_importance,
    update_history,
)
from .latency import (
    COMPUTE_BOUND,
    DeviceSpec,
    ExpansionFactors,
    LatencyProfile,
    OfflineProfile,
    StateTrace,
    SystemState,
    build_profile,
    calibrate_proc_overhead,
    eta,
    expansion_factors,
    pi1,
    pi2,
    predict_layer_latency,
    split_backward,
)
from .network import (
    LayerSpec,
    Network,
    StrategyCost,
    UpdateStrategy,
    derive_costs,
    load_network,
    load_network_file,
    strategy_cost,
)
from .pipeline import (
    ControllerConfig,
    EnvironmentSpec,
    EpisodeReport,
    ModelResponseState,
    ReusePlan,
    Scenario,
    Shift,
    apply_update,
    execute_ground_truth,
    generate_batch,
    load_scenario_file,
    report_csv,
    report_json,
    reuse_plan,
    run_episode,
    sigma_controller,
)
from .scheduler import (
    Budget,
    DPTable,
    ScheduleResult,
    SchedulerConfig,
    brute_force,
    budget,
    certify,
    delta_t,
    discretize,
    solve_dp,
)

__version__ = "0.1.0"

__all__ = [
    "Budget",
    "COMPUTE_BOUND",
    "ControllerConfig",
    "DPTable",
    "DeviceSpec",
    "Embedding",
    "EmbeddingHistory",
    "EnvironmentSpec",
    "EpisodeReport",
    "ExpansionFactors",
    "FeatureStats",
    "ImportanceVector",
    "InputError",
    "LatencyProfile",
    "LayerSpec",
    "ModelResponseState",
    "Network",
    "OfflineProfile",
    "ReusePlan",
    "Scenario",
    "ScheduleResult",
    "SchedulerConfig",
    "Shift",
    "StateTrace",
    "StrategyCost",
    "SystemState",
    "TraceExhausted",
    "UpdateStrategy",
    "adaptation_loss",
    "apply_update",
    "assess",
    "assessment_flops",
    "brute_force",
    "budget",
    "build_profile",
    "calibrate_proc_overhead",
    "certify",
    "delta_t",
    "derive_costs",
    "discretize",
    "embed",
    "eta",
    "execute_ground_truth",
    "expansion_factors",
    "generate_batch",
    "layer_importance",
    "load_network",
    "load_network_file",
    "load_scenario_file",
    "pi1",
    "pi2",
    "predict_layer_latency",
    "report_csv",
    "report_json",
    "reuse_plan",
    "run_episode",
    "sigma_controller",
    "solve_dp",
    "split_backward",
    "strategy_cost",
    "update_history",
]
