"""Budget-limited online selection of global-update intervals for
edge-cloud collaborative learning, with a deterministic simulator."""

from .bandit import (
    ArmStats,
    BanditState,
    FixedIntervalPolicy,
    density,
    fixed_arm_cost,
    max_frequency,
    probabilistic_select,
    ucb_reward_index,
)
from .config import ExperimentConfig, load_config, parse_config
from .coordinator import Coordinator, MetricsRecord
from .data import Dataset, PartitionSpec, gen_blobs, gen_linear_multiclass, load_csv, partition, save_csv
from .edge import EdgeServer, Fleet, build_fleet
from .errors import BudgetExhausted, BudgetViolation, ConfigError
from .learners import (
    Batch,
    KMeansState,
    SvmState,
    aggregate_weighted,
    async_merge,
    evaluate_accuracy,
    evaluate_f1,
    init_kmeans_plusplus,
    local_iterate,
    utility,
)

__version__ = "0.1.0"

__all__ = [
    "ArmStats",
    "BanditState",
    "Batch",
    "BudgetExhausted",
    "BudgetViolation",
    "ConfigError",
    "Coordinator",
    "Dataset",
    "EdgeServer",
    "ExperimentConfig",
    "FixedIntervalPolicy",
    "Fleet",
    "KMeansState",
    "MetricsRecord",
    "PartitionSpec",
    "SvmState",
    "aggregate_weighted",
    "async_merge",
    "build_fleet",
    "density",
    "evaluate_accuracy",
    "evaluate_f1",
    "fixed_arm_cost",
    "gen_blobs",
    "gen_linear_multiclass",
    "init_kmeans_plusplus",
    "load_config",
    "load_csv",
    "local_iterate",
    "max_frequency",
    "parse_config",
    "partition",
    "probabilistic_select",
    "save_csv",
    "ucb_reward_index",
    "utility",
]
