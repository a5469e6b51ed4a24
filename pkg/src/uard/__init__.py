"""Uncertainty-aware reward discounting for tabular Q-learning on deceptive grid worlds."""

from .agent import VARIANTS, AgentConfig, DiscountMode, HeadRewards, run_training, train
from .config import ExperimentSpec, parse_config
from .ensemble import QEnsemble
from .env import GridWorldConfig, make_preset
from .filters import FilterParams, FilterVariant, score
from .supervision import NoiseSpec, default_profiles

__all__ = [
    "VARIANTS",
    "AgentConfig",
    "DiscountMode",
    "ExperimentSpec",
    "FilterParams",
    "FilterVariant",
    "GridWorldConfig",
    "HeadRewards",
    "NoiseSpec",
    "QEnsemble",
    "default_profiles",
    "make_preset",
    "parse_config",
    "run_training",
    "score",
    "train",
]
