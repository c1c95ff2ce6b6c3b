"""Imitation from state-only demonstrations with optimal transport rewards."""

from .exceptions import (
    ConfigError,
    DataError,
    DimensionError,
    DivergenceError,
    EpisodeFinishedError,
    InputError,
    MissingActionsError,
    OOPSError,
    SizeError,
    UnsupportedInstanceError,
)
from .ot_core import (
    Coupling,
    DiscreteMeasure,
    DistanceMetricSpec,
    SinkhornConfig,
    SolverSpec,
    Trajectory,
    atomize,
    brute_force_w1,
    cost_matrix,
    exact_w1,
    greedy_coupling,
    sinkhorn,
    solve,
    transport_cost,
)
from .rewards import ExpertDataset, OOPSRewarder, RewardConfig, RewardTable, episode_rewards
from .harness import OOPSImitator, train
from .config import RunConfig, load_config

__version__ = "0.1.0"
