"""Submodular mini-batch selection: a four-term selection objective, greedy
and stochastic-greedy maximizers with partitioned selection, and an SGD
training loop on a built-in reference classifier."""

__version__ = "0.1.0"

from .core import (
    CheckedConfig,
    ConfigError,
    DataError,
    Dataset,
    ObjectiveWeights,
    Rng,
    SelectionConfig,
    load_dataset,
    partition,
    sample_size,
    validate_config,
)
from .maximize import (
    SelectionResult,
    brute_force,
    get_mini_batch,
    greedy,
    lazy_greedy,
    ltlg,
    run_selection,
)
from .objective import SelectionState, StateFactory, chain_value, commit, marginal_gain, set_value
from .scoring import ScoreCache, refresh
from .trainer import EpochReport, ModelParams, TrainerConfig, TrainResult, train

__all__ = [
    "CheckedConfig",
    "ConfigError",
    "DataError",
    "Dataset",
    "EpochReport",
    "ModelParams",
    "ObjectiveWeights",
    "Rng",
    "ScoreCache",
    "SelectionConfig",
    "SelectionResult",
    "SelectionState",
    "StateFactory",
    "TrainResult",
    "TrainerConfig",
    "brute_force",
    "chain_value",
    "commit",
    "get_mini_batch",
    "greedy",
    "lazy_greedy",
    "load_dataset",
    "ltlg",
    "marginal_gain",
    "partition",
    "refresh",
    "run_selection",
    "sample_size",
    "set_value",
    "train",
    "validate_config",
]
