"""Experiment configuration: dataclasses plus YAML loading.

One file configures an experiment end to end: world geometry, reward
family, pre-training loop, inference constants, and the deployment/teaming
schedule. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .env import ConfigError, EnvConfig
from .finite_mdp import LearningSchedule
from .inverse import Bandwidths
from .policies import MarlConfig
from .rewards import STYLE_GREED, RewardConfig

PRETRAIN = "pretrain"
TEAMING = "teaming"
DYNAMIC = "dynamic"
ABLATION = "ablation"
THEOREM1 = "theorem1"
SCORE = "score"
KINDS = (PRETRAIN, TEAMING, DYNAMIC, ABLATION, THEOREM1, SCORE)

MODE_FULL = "full"
MODE_FIX = "fix"
MODE_ONLINE = "online"
ABLATION_MODES = (MODE_FULL, MODE_FIX, MODE_ONLINE)


@dataclass(frozen=True)
class KdbilConfig:
    """Inference constants: kernel bandwidths, window size, grid density,
    and behavior-pair collection (burn-in plus per-episode caps that keep
    any single placement from dominating a demo set or window)."""

    h: float = 0.03
    h_prime: float = 0.03
    window_capacity: int = 300
    grid_target: int = 25
    demos_per_latent: int = 120
    collect_steps: int = 50
    burn_in: int = 15
    demo_cap_per_episode: int = 9
    window_cap_per_episode: int = 15

    def __post_init__(self):
        Bandwidths(self.h, self.h_prime)
        if self.window_capacity < 1:
            raise ConfigError("window_capacity must be >= 1")
        if self.grid_target < 2 or self.demos_per_latent < 1:
            raise ConfigError("grid_target must be >= 2, demos_per_latent >= 1")
        if not 0 <= self.burn_in < self.collect_steps:
            raise ConfigError("burn_in must be shorter than collect_steps")
        if self.demo_cap_per_episode < 1 or self.window_cap_per_episode < 1:
            raise ConfigError("per-episode caps must be >= 1")

    @property
    def bandwidths(self) -> Bandwidths:
        return Bandwidths(self.h, self.h_prime)


@dataclass(frozen=True)
class TeamingConfig:
    """Deployment schedule: epochs of inference plus evaluation episodes."""

    epochs: int = 60
    episodes_per_epoch: int = 4
    epoch_steps: int = 25
    unknown: str = "balanced"
    dynamic_period: int = 20
    dynamic_styles: tuple = ("safest", "greediest")
    fixed_style: str = "balanced"
    online_learning_rate: float = 0.01
    online_updates_per_epoch: int = 1
    cell_epochs: int = 10

    def __post_init__(self):
        object.__setattr__(self, "dynamic_styles", tuple(self.dynamic_styles))
        if self.epochs < 1 or self.episodes_per_epoch < 1 or self.epoch_steps < 1:
            raise ConfigError("epochs, episodes_per_epoch, epoch_steps must be >= 1")
        if self.dynamic_period < 1:
            raise ConfigError("dynamic_period must be >= 1")
        for name in self.dynamic_styles + (self.fixed_style,):
            if name not in STYLE_GREED:
                raise ConfigError(f"unknown style {name!r}")
        if self.online_learning_rate <= 0 or self.online_updates_per_epoch < 0:
            raise ConfigError("online fine-tune settings must be positive")
        if self.cell_epochs < 2:
            raise ConfigError("cell_epochs must be >= 2")


@dataclass(frozen=True)
class TheoremConfig:
    """Convergence-lab run: seeded MDP shape, step budget, noise levels."""

    n_states: int = 5
    n_actions: int = 3
    gamma: float = 0.9
    mdp_seed: int = 12345
    steps: int = 10_000_000
    bias_steps: int = 500_000
    record_every: int = 1000
    n_seeds: int = 10
    epsilon: float = 0.2
    omega: float = 0.6
    noise_half_width: float = 1.0
    betas: tuple = (0.0, 0.25, 0.5)
    stop_below: float = 0.045

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        LearningSchedule(self.omega)
        if self.n_states < 2 or self.n_actions < 2:
            raise ConfigError("need at least 2 states and 2 actions")
        if self.steps < 1 or self.bias_steps < 1 or self.n_seeds < 1:
            raise ConfigError("step and seed budgets must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = PRETRAIN
    seed: int = 0
    out_dir: str = "runs/experiment"
    bundle: str | None = None
    env: EnvConfig = field(default_factory=EnvConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    marl: MarlConfig = field(default_factory=MarlConfig)
    kdbil: KdbilConfig = field(default_factory=KdbilConfig)
    teaming: TeamingConfig = field(default_factory=TeamingConfig)
    theorem: TheoremConfig = field(default_factory=TheoremConfig)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.seed < 0:
            raise ConfigError("seed must be unsigned")


_SECTIONS = {
    "env": EnvConfig,
    "reward": RewardConfig,
    "marl": MarlConfig,
    "kdbil": KdbilConfig,
    "teaming": TeamingConfig,
    "theorem": TheoremConfig,
}


def _build(cls, payload: dict, where: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")
    return cls(**payload)


def config_from_dict(payload: dict) -> ExperimentConfig:
    payload = dict(payload or {})
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in payload:
            section = payload.pop(name)
            if not isinstance(section, dict):
                raise ConfigError(f"section {name!r} must be a mapping")
            kwargs[name] = _build(cls, section, name)
    top = {f.name for f in fields(ExperimentConfig)} - set(_SECTIONS)
    unknown = set(payload) - top
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {sorted(unknown)}")
    kwargs.update(payload)
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    payload = yaml.safe_load(path.read_text())
    if payload is None:
        payload = {}
    if not isinstance(payload, dict):
        raise ConfigError(f"config root must be a mapping, got {type(payload).__name__}")
    return config_from_dict(payload)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = asdict(cfg)
    out["teaming"]["dynamic_styles"] = list(out["teaming"]["dynamic_styles"])
    out["theorem"]["betas"] = list(out["theorem"]["betas"])
    return out
