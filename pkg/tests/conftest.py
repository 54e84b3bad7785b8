import numpy as np
import pytest

from latentteam import harness
from latentteam.config import (
    ExperimentConfig,
    KdbilConfig,
    TeamingConfig,
    TheoremConfig,
)
from latentteam.env import EnvConfig
from latentteam.policies import MarlConfig
from latentteam.rewards import RewardConfig


def tuned_experiment_config(out_dir, seed=0, kind="pretrain") -> ExperimentConfig:
    """The study configuration: a three-prey world with a two-component
    linear reward family, corner-expert initialization, and the standard
    inference constants."""
    return ExperimentConfig(
        kind=kind,
        seed=seed,
        out_dir=str(out_dir),
        env=EnvConfig(
            n_prey=3,
            n_predators=1,
            resource_radius=40.0,
            predation_radius=40.0,
            step_size=10.0,
        ),
        reward=RewardConfig(k=2, kind="linear", proportional_safety=True),
        marl=MarlConfig(
            episodes=2400,
            learning_rate=0.02,
            optimizer="sgd",
            batch_episodes=8,
            train_steps=25,
            n_adaptive=2,
            n_surrogate=1,
            corner_updates=1200,
            corner_batch=16,
            corner_lr=0.02,
            blend_margin=0.22,
            pair_period=50,
            pair_warmup=0.0,
            pair_topup=120,
        ),
        kdbil=KdbilConfig(),
        teaming=TeamingConfig(
            epochs=60,
            episodes_per_epoch=2,
            epoch_steps=50,
            unknown="greediest",
            dynamic_period=20,
            dynamic_styles=("safest", "greediest"),
        ),
        theorem=TheoremConfig(),
    )


def tiny_experiment_config(out_dir, seed=0) -> ExperimentConfig:
    """Cheap configuration for plumbing tests (seconds, not minutes)."""
    return ExperimentConfig(
        kind="pretrain",
        seed=seed,
        out_dir=str(out_dir),
        env=EnvConfig(n_prey=3, n_predators=1),
        reward=RewardConfig(k=2, proportional_safety=True),
        marl=MarlConfig(
            episodes=80,
            learning_rate=0.05,
            batch_episodes=8,
            n_adaptive=2,
            n_surrogate=1,
            corner_updates=0,
            pair_warmup=0.0,
            pair_period=20,
            pair_topup=100,
            log_every=5,
        ),
        kdbil=KdbilConfig(
            window_capacity=60,
            grid_target=5,
            demos_per_latent=20,
            collect_steps=25,
            burn_in=10,
            demo_cap_per_episode=15,
            window_cap_per_episode=15,
        ),
        teaming=TeamingConfig(
            epochs=6,
            episodes_per_epoch=2,
            epoch_steps=25,
            unknown="greediest",
            cell_epochs=4,
        ),
    )


@pytest.fixture(scope="session")
def tiny_bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny_bundle")
    cfg = tiny_experiment_config(out)
    manifest = harness.run_pretrain(cfg)
    return cfg, harness.load_pretrain_bundle(manifest)


@pytest.fixture(scope="session")
def study_bundle(tmp_path_factory):
    """Full tuned pretrain used by the acceptance suite; built once."""
    out = tmp_path_factory.mktemp("study_bundle")
    cfg = tuned_experiment_config(out)
    manifest = harness.run_pretrain(cfg)
    return cfg, harness.load_pretrain_bundle(manifest)
