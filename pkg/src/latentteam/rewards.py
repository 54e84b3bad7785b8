"""Per-prey reward components and their latent-weighted mixtures.

Every component is a penalty (<= 0). A k-vector of latent parameters mixes
the components into one scalar reward, either linearly (dot product, latents
on the probability simplex) or nonlinearly (softmax weighting or a small
fixed-expansion mixing network). The latent vector is the only thing that
distinguishes one teammate's objective from another's.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .env import Action, ConfigError, EnvConfig, EnvState

LINEAR = "linear"
NONLINEAR = "nonlinear"

SOFTMAX_MODE = "softmax"
NETWORK_MODE = "network"

MIN_K = 2
MAX_K = 6

COMPONENT_NAMES = ("greedy", "safety", "cost", "preference", "crowding", "caution")

# Named behavior styles, ordered safest -> greediest. The value is the weight
# on the greedy component; the safety component gets the remainder.
STYLE_GREED = {
    "safest": 0.0,
    "safety_biased": 0.25,
    "balanced": 0.5,
    "greed_biased": 0.75,
    "greediest": 1.0,
}
STYLE_ORDER = ("safest", "safety_biased", "balanced", "greed_biased", "greediest")

_MIXNET_SEED = 1748922  # fixed constant so network weights never vary per run


@dataclass(frozen=True)
class LatentParams:
    """Latent weighting vector; linear-kind vectors live on the simplex."""

    values: np.ndarray
    kind: str = LINEAR

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if self.kind not in (LINEAR, NONLINEAR):
            raise ConfigError(f"unknown mixing kind {self.kind!r}")
        if v.ndim != 1 or not MIN_K <= v.size <= MAX_K:
            raise ConfigError(
                f"latent vector must be 1-D with {MIN_K}..{MAX_K} entries, got shape {v.shape}"
            )

    @property
    def k(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class RewardConfig:
    """Shape of the reward family shared by the world, inference, and policies."""

    k: int = 2
    kind: str = LINEAR
    nonlinear_mode: str = SOFTMAX_MODE
    proportional_safety: bool = False
    softmax_beta: float = 1.0

    def __post_init__(self):
        if not MIN_K <= self.k <= MAX_K:
            raise ConfigError(f"k must be in {MIN_K}..{MAX_K}, got {self.k}")
        if self.kind not in (LINEAR, NONLINEAR):
            raise ConfigError(f"unknown mixing kind {self.kind!r}")
        if self.nonlinear_mode not in (SOFTMAX_MODE, NETWORK_MODE):
            raise ConfigError(f"unknown nonlinear mode {self.nonlinear_mode!r}")

    @property
    def component_names(self) -> tuple[str, ...]:
        return COMPONENT_NAMES[: self.k]


def pair_weight(i: int, j: int) -> float:
    """Preference weight for an interacting agent pair, from index parity."""
    if i % 2 == 0 and j % 2 == 0:
        return 0.5
    if i % 2 == 1 and j % 2 == 1:
        return 2.0
    return 1.0


def compute_components(
    state: EnvState, prey_actions, env_config: EnvConfig, reward_config: RewardConfig
) -> np.ndarray:
    """Component vector per prey on the post-move configuration; all entries <= 0.

    greedy      -1 per other prey within resource_radius
    safety      -1 per predator within predation_radius, or the
                distance-proportional variant -(1 - d/radius)
    cost        -1 when the prey moved
    preference  the greedy and safety events re-scaled by pair_weight
    crowding    greedy-style count at twice the radius, half magnitude
    caution     safety-style count at twice the radius, half magnitude
    """
    c = env_config
    k = reward_config.k
    if len(prey_actions) != c.n_prey:
        raise ConfigError(
            f"expected {c.n_prey} prey actions, got {len(prey_actions)}"
        )
    prey = state.prey_positions
    preds = state.predator_positions
    out = np.zeros((c.n_prey, k))

    prey_d = np.linalg.norm(prey[:, None, :] - prey[None, :, :], axis=2)
    pred_d = np.linalg.norm(prey[:, None, :] - preds[None, :, :], axis=2)

    for i in range(c.n_prey):
        greedy = 0.0
        preference = 0.0
        for j in range(c.n_prey):
            if j == i:
                continue
            if prey_d[i, j] <= c.resource_radius:
                greedy -= 1.0
                preference -= pair_weight(i, j)
        safety = 0.0
        for p in range(c.n_predators):
            d = pred_d[i, p]
            if d <= c.predation_radius:
                magnitude = (
                    1.0 - d / c.predation_radius
                    if reward_config.proportional_safety
                    else 1.0
                )
                safety -= magnitude
                preference -= pair_weight(i, c.n_prey + p) * magnitude
        out[i, 0] = greedy
        out[i, 1] = safety
        if k >= 3:
            out[i, 2] = -1.0 if Action(prey_actions[i]) != Action.STAY else 0.0
        if k >= 4:
            out[i, 3] = preference
        if k >= 5:
            near = np.sum(prey_d[i] <= 2.0 * c.resource_radius) - 1
            out[i, 4] = -0.5 * near
        if k >= 6:
            out[i, 5] = -0.5 * np.sum(pred_d[i] <= 2.0 * c.predation_radius)
    return out


def _check_pair(b: LatentParams, components: np.ndarray) -> np.ndarray:
    c = np.asarray(components, dtype=float)
    if c.shape != (b.k,):
        raise ConfigError(
            f"component vector shape {c.shape} does not match latent dimension {b.k}"
        )
    return c


def mix_linear(b: LatentParams, components) -> float:
    """Dot product of latent weights and components."""
    if b.kind != LINEAR:
        raise ConfigError("mix_linear requires a linear-kind latent")
    c = _check_pair(b, components)
    return float(b.values @ c)


@lru_cache(maxsize=MAX_K)
def _mixnet_constants(k: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(_MIXNET_SEED + k)
    hidden = rng.standard_normal((k, k)) / np.sqrt(k)
    output = rng.standard_normal(k) / np.sqrt(k)
    return hidden, output


@dataclass(frozen=True)
class MixingNet:
    """One tanh hidden layer whose input weights are fixed constants scaled
    column-wise by the latent vector; only the latent varies between nets."""

    hidden: np.ndarray
    output: np.ndarray

    @classmethod
    def from_latent(cls, b: LatentParams) -> "MixingNet":
        base_hidden, output = _mixnet_constants(b.k)
        return cls(base_hidden * b.values[None, :], output)

    def apply(self, components: np.ndarray) -> float:
        return float(self.output @ np.tanh(self.hidden @ components))


def mix_nonlinear(
    b: LatentParams,
    components,
    mode: str = SOFTMAX_MODE,
    beta: float = 1.0,
) -> float:
    """Nonlinear mixture: softmax(beta * latents) weights, or the mixing net."""
    c = _check_pair(b, components)
    if mode == SOFTMAX_MODE:
        z = beta * b.values
        z = z - z.max()
        w = np.exp(z)
        w /= w.sum()
        return float(w @ c)
    if mode == NETWORK_MODE:
        return MixingNet.from_latent(b).apply(c)
    raise ConfigError(f"unknown nonlinear mode {mode!r}")


def mix(config: RewardConfig, b: LatentParams, components) -> float:
    """Mix components per the configured family."""
    if config.kind == LINEAR:
        return mix_linear(b, components)
    return mix_nonlinear(
        b, components, mode=config.nonlinear_mode, beta=config.softmax_beta
    )


def mix_gradient(config: RewardConfig, b_values: np.ndarray, components) -> np.ndarray:
    """d(mixed reward)/d(latent values) at an arbitrary (not necessarily
    normalized) latent point; used when fitting the debiasing regressor."""
    b_values = np.asarray(b_values, dtype=float)
    c = np.asarray(components, dtype=float)
    if config.kind == LINEAR:
        return c.copy()
    if config.nonlinear_mode == SOFTMAX_MODE:
        z = config.softmax_beta * b_values
        z = z - z.max()
        w = np.exp(z)
        w /= w.sum()
        return config.softmax_beta * w * (c - float(w @ c))
    hidden0, output = _mixnet_constants(b_values.size)
    pre = hidden0 @ (b_values * c)
    sech2 = 1.0 - np.tanh(pre) ** 2
    return (output * sech2) @ hidden0 * c


def mix_at(config: RewardConfig, b_values: np.ndarray, components) -> float:
    """Mixed reward at raw latent values (no simplex check); pairs with
    mix_gradient for optimizer internals."""
    b_values = np.asarray(b_values, dtype=float)
    c = np.asarray(components, dtype=float)
    if config.kind == LINEAR:
        return float(b_values @ c)
    if config.nonlinear_mode == SOFTMAX_MODE:
        z = config.softmax_beta * b_values
        z = z - z.max()
        w = np.exp(z)
        w /= w.sum()
        return float(w @ c)
    hidden0, output = _mixnet_constants(b_values.size)
    return float(output @ np.tanh(hidden0 @ (b_values * c)))


def mix_at_batch(config: RewardConfig, b_values: np.ndarray, components: np.ndarray) -> np.ndarray:
    """mix_at over a (n, k) stack of component vectors."""
    b_values = np.asarray(b_values, dtype=float)
    c = np.asarray(components, dtype=float)
    if config.kind == LINEAR:
        return c @ b_values
    if config.nonlinear_mode == SOFTMAX_MODE:
        z = config.softmax_beta * b_values
        z = z - z.max()
        w = np.exp(z)
        w /= w.sum()
        return c @ w
    hidden0, output = _mixnet_constants(b_values.size)
    return np.tanh((b_values * c) @ hidden0.T) @ output


def mix_gradient_batch(config: RewardConfig, b_values: np.ndarray, components: np.ndarray) -> np.ndarray:
    """mix_gradient over a (n, k) stack; returns (n, k)."""
    b_values = np.asarray(b_values, dtype=float)
    c = np.asarray(components, dtype=float)
    if config.kind == LINEAR:
        return c.copy()
    if config.nonlinear_mode == SOFTMAX_MODE:
        z = config.softmax_beta * b_values
        z = z - z.max()
        w = np.exp(z)
        w /= w.sum()
        vals = c @ w
        return config.softmax_beta * w[None, :] * (c - vals[:, None])
    hidden0, output = _mixnet_constants(b_values.size)
    pre = (b_values * c) @ hidden0.T
    sech2 = 1.0 - np.tanh(pre) ** 2
    return ((sech2 * output[None, :]) @ hidden0) * c


def project_latent(values: np.ndarray, kind: str) -> np.ndarray:
    """Pull raw values back into the valid latent domain."""
    v = np.asarray(values, dtype=float)
    if kind == LINEAR:
        v = np.clip(v, 0.0, None)
        total = v.sum()
        if total <= 1e-12:
            return np.full(v.size, 1.0 / v.size)
        return v / total
    return np.clip(v, 0.0, 1.0)


def sample_latent(k: int, kind: str, rng: np.random.Generator) -> LatentParams:
    """Uniform prior draw: flat on the simplex (linear) or the cube.

    The simplex draw is Dirichlet(1, ..., 1); normalizing uniform variates
    instead would concentrate mass at the center.
    """
    if not MIN_K <= k <= MAX_K:
        raise ConfigError(f"k must be in {MIN_K}..{MAX_K}, got {k}")
    if kind == LINEAR:
        values = rng.dirichlet(np.ones(k))
    else:
        values = rng.uniform(size=k)
    return LatentParams(values, kind)


def style_latent(name: str, config: RewardConfig) -> LatentParams:
    """Named style as a latent vector: mass split between greedy and safety."""
    if name not in STYLE_GREED:
        raise ConfigError(
            f"unknown style {name!r}; expected one of {sorted(STYLE_GREED)}"
        )
    g = STYLE_GREED[name]
    values = np.zeros(config.k)
    values[0] = g
    values[1] = 1.0 - g
    return LatentParams(values, config.kind)


def prior_mean_latent(config: RewardConfig) -> LatentParams:
    """Center of the latent prior: uniform simplex weights (linear) or the
    hypercube midpoint (nonlinear)."""
    if config.kind == LINEAR:
        return LatentParams(np.full(config.k, 1.0 / config.k), LINEAR)
    return LatentParams(np.full(config.k, 0.5), NONLINEAR)
