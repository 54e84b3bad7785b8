"""Teaming with latent-reward agents.

A bounded predator-prey world whose prey optimize a latent mixture of
penalty components, kernel-density Bayesian inference of that mixture from
observed behavior, goal-conditioned policies that adapt zero-shot by
swapping their conditioning vector, and a tabular laboratory for Q-learning
under noisy or biased reward estimates.
"""

from .env import Action, EnvConfig, EnvState, ParticleEnv
from .inverse import Bandwidths, ObservedWindow, Posterior, TrainingDataset
from .rewards import LatentParams, RewardConfig

__all__ = [
    "Action",
    "Bandwidths",
    "EnvConfig",
    "EnvState",
    "LatentParams",
    "ObservedWindow",
    "ParticleEnv",
    "Posterior",
    "RewardConfig",
    "TrainingDataset",
]

__version__ = "0.1.0"
