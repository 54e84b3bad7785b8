"""Goal-conditioned softmax policies and their pre-training loop.

One linear-softmax policy per role (adaptive team member, surrogate
teammate) maps features of (observation, latent vector) to action logits.
The latent enters both directly and through observation-latent interaction
features, so conditioning on a different latent can reshape the whole
action distribution. Training is episodic score-function gradient ascent
with a return-to-go estimate and a batch-mean baseline.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .env import ConfigError, EnvConfig, ParticleEnv, N_ACTIONS
from .estimation import posterior_summary
from .inverse import (
    Bandwidths,
    Demonstration,
    ObservedWindow,
    TrainingDataset,
    default_grid_resolution,
    latent_grid,
    posterior_over_grid,
)
from .rewards import LatentParams, RewardConfig, mix, sample_latent

ROLE_ADAPTIVE = "adaptive"
ROLE_SURROGATE = "surrogate"


class PolicyError(RuntimeError):
    """Raised on dimension mismatches or diverging updates."""


class GoalConditionedPolicy:
    """Softmax policy over the five moves, conditioned on a latent vector.

    Logits are affine in phi(o, b) = (o, b, outer(o, b) flattened). Zero
    parameters give the uniform distribution. Observations enter scaled by
    a fixed constant: normalized offsets are ~0.1 at interaction radii, and
    the rescaling conditions the gradient the way per-block learning rates
    would, without touching the estimator.
    """

    def __init__(
        self,
        obs_dim: int,
        k: int,
        role: str = ROLE_ADAPTIVE,
        gamma: float = 0.95,
        obs_scale: float = 5.0,
    ):
        if role not in (ROLE_ADAPTIVE, ROLE_SURROGATE):
            raise ConfigError(f"unknown role {role!r}")
        if not 0 < gamma < 1:
            raise ConfigError(f"gamma must be in (0, 1), got {gamma}")
        if obs_scale <= 0:
            raise ConfigError(f"obs_scale must be positive, got {obs_scale}")
        self.obs_dim = obs_dim
        self.k = k
        self.role = role
        self.gamma = gamma
        self.obs_scale = obs_scale
        self.feature_dim = obs_dim + k + obs_dim * k
        self.weights = np.zeros((N_ACTIONS, self.feature_dim))
        self.bias = np.zeros(N_ACTIONS)
        self.update_count = 0

    def features(self, obs: np.ndarray, b: LatentParams) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        if obs.size != self.obs_dim:
            raise PolicyError(
                f"observation length {obs.size} does not match policy {self.obs_dim}"
            )
        if b.k != self.k:
            raise PolicyError(
                f"latent dimension {b.k} does not match policy {self.k}"
            )
        scaled = self.obs_scale * obs
        return np.concatenate([scaled, b.values, np.outer(scaled, b.values).ravel()])

    def action_probs(self, obs: np.ndarray, b: LatentParams) -> np.ndarray:
        logits = self.weights @ self.features(obs, b) + self.bias
        logits -= logits.max()
        p = np.exp(logits)
        return p / p.sum()

    def act(self, obs, b: LatentParams, rng: np.random.Generator, greedy: bool = False) -> int:
        p = self.action_probs(obs, b)
        if greedy:
            return int(np.argmax(p))
        return int(rng.choice(N_ACTIONS, p=p))

    def log_prob(self, obs, b: LatentParams, action: int) -> float:
        return float(np.log(self.action_probs(obs, b)[int(action)]))

    def log_prob_grad(self, obs, b: LatentParams, action: int):
        """Analytic score function: (onehot - probs) against the features."""
        phi = self.features(obs, b)
        p = self.action_probs(obs, b)
        e = np.zeros(N_ACTIONS)
        e[int(action)] = 1.0
        residual = e - p
        return np.outer(residual, phi), residual

    def copy(self) -> "GoalConditionedPolicy":
        dup = GoalConditionedPolicy(
            self.obs_dim, self.k, self.role, self.gamma, self.obs_scale
        )
        dup.weights = self.weights.copy()
        dup.bias = self.bias.copy()
        dup.update_count = self.update_count
        return dup

    def save(self, path, reward_config: RewardConfig | None = None, seed: int = 0) -> None:
        from .persist import save_bundle

        reward_meta = {}
        if reward_config is not None:
            reward_meta = {
                "k": reward_config.k,
                "kind": reward_config.kind,
                "nonlinear_mode": reward_config.nonlinear_mode,
                "proportional_safety": reward_config.proportional_safety,
                "softmax_beta": reward_config.softmax_beta,
            }
        save_bundle(
            path,
            {
                "format": "policy.v1",
                "role": self.role,
                "gamma": self.gamma,
                "obs_dim": self.obs_dim,
                "k": self.k,
                "obs_scale": self.obs_scale,
                "update_count": self.update_count,
                "seed": seed,
                "reward": reward_meta,
            },
            {"weights": self.weights, "bias": self.bias},
        )

    @classmethod
    def load(cls, path) -> tuple["GoalConditionedPolicy", dict]:
        from .persist import load_bundle

        meta, arrays = load_bundle(path)
        if meta.get("format") != "policy.v1":
            raise PolicyError(f"not a policy checkpoint: {path}")
        policy = cls(
            int(meta["obs_dim"]),
            int(meta["k"]),
            meta["role"],
            float(meta["gamma"]),
            float(meta.get("obs_scale", 1.0)),
        )
        policy.weights = arrays["weights"]
        policy.bias = arrays["bias"]
        policy.update_count = int(meta["update_count"])
        return policy, meta


@dataclass(frozen=True)
class FixedBehaviorPolicy:
    """A goal-conditioned policy frozen at one named style."""

    policy: GoalConditionedPolicy
    latent: LatentParams
    name: str = "fixed"

    def act(self, obs, rng: np.random.Generator, greedy: bool = False) -> int:
        return self.policy.act(obs, self.latent, rng, greedy=greedy)


@dataclass
class EpisodeRecord:
    """Trajectory slice for the agents one policy controls."""

    observations: np.ndarray  # (T, n_agents, obs_dim)
    actions: np.ndarray  # (T, n_agents)
    rewards: np.ndarray  # (T,) shared mixed reward
    latent: LatentParams  # conditioning used throughout the episode


@dataclass
class RolloutBatch:
    episodes: list
    gamma: float
    _returns: list | None = None

    def returns_to_go(self) -> list:
        if self._returns is None:
            out = []
            for ep in self.episodes:
                g = np.zeros_like(ep.rewards)
                acc = 0.0
                for t in range(len(ep.rewards) - 1, -1, -1):
                    acc = ep.rewards[t] + self.gamma * acc
                    g[t] = acc
                out.append(g)
            self._returns = out
        return self._returns


def estimate_policy_gradient(policy: GoalConditionedPolicy, batch: RolloutBatch):
    """Score-function gradient estimate over a rollout batch.

    Each (episode, step) advantage is the return-to-go minus the mean
    return-to-go of the *other* episodes at that step (leave-one-out keeps
    the estimator unbiased). A single-episode batch falls back to the
    episode's own time-mean. Identical returns give an exactly zero
    gradient.
    """
    if not batch.episodes:
        raise PolicyError("empty rollout batch")
    returns = batch.returns_to_go()
    n_episodes = len(batch.episodes)
    if n_episodes > 1:
        stacked = np.stack(returns)
        totals = stacked.sum(axis=0)
        baselines = [(totals - g) / (n_episodes - 1) for g in stacked]
    else:
        baselines = [np.full_like(returns[0], returns[0].mean())]
    grad_w = np.zeros_like(policy.weights)
    grad_b = np.zeros_like(policy.bias)
    count = 0
    for ep, g, base in zip(batch.episodes, returns, baselines):
        T, n_agents = ep.actions.shape
        for t in range(T):
            adv = g[t] - base[t]
            if adv == 0.0:
                count += n_agents
                continue
            for i in range(n_agents):
                gw, gb = policy.log_prob_grad(
                    ep.observations[t, i], ep.latent, ep.actions[t, i]
                )
                grad_w += adv * gw
                grad_b += adv * gb
                count += 1
    grad_w /= count
    grad_b /= count
    grad_norm = float(np.sqrt(np.sum(grad_w**2) + np.sum(grad_b**2)))
    if not np.isfinite(grad_norm):
        raise PolicyError(f"non-finite policy gradient (norm={grad_norm})")
    mean_return = float(np.mean([ep.rewards.sum() for ep in batch.episodes]))
    return grad_w, grad_b, {"grad_norm": grad_norm, "mean_return": mean_return}


def policy_gradient_step(policy: GoalConditionedPolicy, batch: RolloutBatch, learning_rate: float) -> dict:
    """Plain ascent step along the estimated gradient."""
    grad_w, grad_b, info = estimate_policy_gradient(policy, batch)
    policy.weights += learning_rate * grad_w
    policy.bias += learning_rate * grad_b
    policy.update_count += 1
    return info


def entropy_gradient(policy: GoalConditionedPolicy, batch: RolloutBatch):
    """Gradient of the mean action-distribution entropy over the batch.

    Used as a regularizer during pre-training: without it the softmax
    saturates over long runs, freezing behavior into a latent-independent
    near-deterministic policy.
    """
    grad_w = np.zeros_like(policy.weights)
    grad_b = np.zeros_like(policy.bias)
    count = 0
    for ep in batch.episodes:
        T, n_agents = ep.actions.shape
        for t in range(T):
            for i in range(n_agents):
                phi = policy.features(ep.observations[t, i], ep.latent)
                p = policy.action_probs(ep.observations[t, i], ep.latent)
                entropy = -float(np.sum(p * np.log(p)))
                dlogits = -p * (np.log(p) + entropy)
                grad_w += np.outer(dlogits, phi)
                grad_b += dlogits
                count += 1
    return grad_w / count, grad_b / count


class AdamState:
    """Per-coordinate moment scaling on top of the gradient estimator;
    equalizes learning speed between the large shared-behavior gradients
    and the much smaller latent-interaction ones."""

    def __init__(self, policy: GoalConditionedPolicy, learning_rate: float, entropy_coef: float = 0.0):
        self.lr = learning_rate
        self.entropy_coef = entropy_coef
        self.t = 0
        self.m = [np.zeros_like(policy.weights), np.zeros_like(policy.bias)]
        self.v = [np.zeros_like(policy.weights), np.zeros_like(policy.bias)]

    def step(self, policy: GoalConditionedPolicy, batch: RolloutBatch) -> dict:
        grad_w, grad_b, info = estimate_policy_gradient(policy, batch)
        if self.entropy_coef > 0.0:
            ent_w, ent_b = entropy_gradient(policy, batch)
            grad_w = grad_w + self.entropy_coef * ent_w
            grad_b = grad_b + self.entropy_coef * ent_b
        self.t += 1
        params = [policy.weights, policy.bias]
        for p, g, m, v in zip(params, (grad_w, grad_b), self.m, self.v):
            m *= 0.9
            m += 0.1 * g
            v *= 0.999
            v += 0.001 * g * g
            mhat = m / (1.0 - 0.9**self.t)
            vhat = v / (1.0 - 0.999**self.t)
            p += self.lr * mhat / (np.sqrt(vhat) + 1e-8)
        policy.update_count += 1
        return info


def run_episode(
    env: ParticleEnv,
    controllers,
    score_latent: LatentParams,
    rng: np.random.Generator,
    greedy: bool = False,
    window: ObservedWindow | None = None,
    window_indices=(),
    window_burn_in: int = 0,
):
    """Roll one full episode; controllers is a (policy, latent) list per prey.

    The step reward is the prey-average of each agent's mixed component
    reward under ``score_latent``. Optionally pushes (obs, action) pairs of
    the given prey indices into an observed window, skipping the first
    ``window_burn_in`` steps (positions are style-uninformative until the
    team geometry settles).
    """
    cfg = env.config
    if len(controllers) != cfg.n_prey:
        raise PolicyError(
            f"need {cfg.n_prey} controllers, got {len(controllers)}"
        )
    reward_cfg = env.reward_config
    T = cfg.episode_length
    obs_arr = np.empty((T, cfg.n_prey, cfg.obs_dim))
    actions = np.empty((T, cfg.n_prey), dtype=int)
    rewards = np.empty(T)
    components = np.empty((T, cfg.n_prey, reward_cfg.k))
    state = env.reset(rng)
    for t in range(T):
        for i, (policy, cond) in enumerate(controllers):
            obs = env.observe(state, i)
            obs_arr[t, i] = obs
            actions[t, i] = policy.act(obs, cond, rng, greedy=greedy)
            if window is not None and t >= window_burn_in and i in window_indices:
                window.push(obs, actions[t, i])
        state, comps, _ = env.step(state, actions[t])
        components[t] = comps
        rewards[t] = float(
            np.mean([mix(reward_cfg, score_latent, comps[i]) for i in range(cfg.n_prey)])
        )
    return {
        "observations": obs_arr,
        "actions": actions,
        "rewards": rewards,
        "components": components,
    }


@dataclass(frozen=True)
class MarlConfig:
    """Pre-training loop parameters.

    ``episodes`` counts rollout episodes in total; every update draws one
    latent and rolls ``batch_episodes`` episodes with it. When
    ``corner_updates`` > 0, per-corner style experts are trained first by
    fixed-latent self-play and installed as the interaction weights of both
    role policies before the sampled-latent loop starts; ``blend_margin``
    keeps the corner behaviors on the responsive part of the softmax so
    nearby styles stay distinguishable.
    """

    episodes: int = 20000
    learning_rate: float = 0.001
    optimizer: str = "sgd"
    entropy_coef: float = 0.01
    gamma: float = 0.95
    train_steps: int = 25
    batch_episodes: int = 4
    n_adaptive: int = 2
    n_surrogate: int = 1
    corner_updates: int = 0
    corner_batch: int = 16
    corner_lr: float = 0.02
    blend_margin: float = 0.15
    pair_period: int = 50
    pair_warmup: float = 0.5
    pair_fill_episodes: int = 2
    pair_topup: int = 120
    demo_buffer: int = 3000
    log_every: int = 100

    def __post_init__(self):
        if self.episodes < 1 or self.train_steps < 1:
            raise ConfigError("episodes and train_steps must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.entropy_coef < 0:
            raise ConfigError("entropy_coef must be >= 0")
        if self.batch_episodes < 1:
            raise ConfigError("batch_episodes must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if not 0 < self.gamma < 1:
            raise ConfigError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.n_adaptive < 0 or self.n_surrogate < 1:
            raise ConfigError("need n_adaptive >= 0 and n_surrogate >= 1")
        if not 0 <= self.pair_warmup <= 1:
            raise ConfigError("pair_warmup must be a fraction in [0, 1]; 1 disables logging")
        if self.pair_period < 1 or self.pair_fill_episodes < 0:
            raise ConfigError("pair_period must be >= 1, fill episodes >= 0")
        if self.corner_updates < 0 or self.corner_batch < 1 or self.corner_lr <= 0:
            raise ConfigError("corner training settings must be positive")
        if self.pair_topup < 0:
            raise ConfigError("pair_topup must be >= 0")
        if not 0 <= self.blend_margin < 0.5:
            raise ConfigError("blend_margin must lie in [0, 0.5)")


@dataclass
class PretrainResult:
    adaptive: GoalConditionedPolicy
    surrogate: GoalConditionedPolicy
    debiaser_pairs: list
    history: list


def train_corner_expert(
    env: ParticleEnv,
    corner: int,
    marl: MarlConfig,
    rng: np.random.Generator,
) -> GoalConditionedPolicy:
    """Style expert: self-play with every prey fixed at one basis latent."""
    k = env.reward_config.k
    values = np.zeros(k)
    values[corner] = 1.0
    b = LatentParams(values, env.reward_config.kind)
    policy = GoalConditionedPolicy(env.config.obs_dim, k, ROLE_SURROGATE, marl.gamma)
    optimizer = AdamState(policy, marl.corner_lr, marl.entropy_coef)
    for _ in range(marl.corner_updates):
        records = []
        for _ in range(marl.corner_batch):
            data = run_episode(env, [(policy, b)] * env.config.n_prey, b, rng)
            records.append(
                EpisodeRecord(data["observations"], data["actions"], data["rewards"], b)
            )
        optimizer.step(policy, RolloutBatch(records, marl.gamma))
    return policy


def install_corner_experts(
    policy: GoalConditionedPolicy, experts, blend_margin: float
) -> None:
    """Write corner experts into the interaction weights.

    For latents on the simplex, logits become the barycentric blend of the
    expert logit maps, compressed to the [margin, 1 - margin] range so the
    behavior still responds to latent changes next to a corner.
    """
    d, k = policy.obs_dim, policy.k
    if len(experts) != k:
        raise PolicyError(f"need {k} corner experts, got {len(experts)}")
    span = 1.0 - 2.0 * blend_margin
    eff = []
    fold = []
    for j, expert in enumerate(experts):
        eff.append(expert.weights[:, :d] + expert.weights[:, d + k + j :: k])
        fold.append(expert.weights[:, d + j] + expert.bias)
    shared_eff = sum(eff)
    shared_fold = sum(fold)
    policy.weights[:] = 0.0
    policy.bias[:] = 0.0
    policy.weights[:, :d] = blend_margin * shared_eff
    for j in range(k):
        policy.weights[:, d + k + j :: k] = span * eff[j]
        policy.weights[:, d + j] = span * fold[j] + blend_margin * shared_fold
    policy.update_count += 1


def pretrain(
    env_config: EnvConfig,
    reward_config: RewardConfig,
    marl_config: MarlConfig,
    rng: np.random.Generator,
    bandwidths: Bandwidths | None = None,
    grid=None,
    window_capacity: int = 300,
) -> PretrainResult:
    """Episodic pre-training of both roles against a fresh latent per episode.

    Every episode: draw a latent from the prior, condition every prey on it,
    roll ``train_steps`` steps, and apply one gradient step per role with the
    shared mixed reward. Surrogate steps feed a rolling demonstration buffer;
    after the warmup fraction, every ``pair_period`` episodes a posterior is
    computed from that buffer on a freshly filled window (same latent) and
    logged as a (summary, true latent) pair for debiaser fitting.
    """
    m = marl_config
    if m.n_adaptive + m.n_surrogate != env_config.n_prey:
        raise ConfigError(
            f"n_adaptive + n_surrogate must equal n_prey={env_config.n_prey}, "
            f"got {m.n_adaptive}+{m.n_surrogate}"
        )
    train_env = ParticleEnv(
        replace(env_config, episode_length=m.train_steps), reward_config
    )
    obs_dim = env_config.obs_dim
    adaptive = GoalConditionedPolicy(obs_dim, reward_config.k, ROLE_ADAPTIVE, m.gamma)
    surrogate = GoalConditionedPolicy(obs_dim, reward_config.k, ROLE_SURROGATE, m.gamma)
    if m.corner_updates > 0:
        experts = [
            train_corner_expert(train_env, corner, m, rng)
            for corner in range(reward_config.k)
        ]
        install_corner_experts(adaptive, experts, m.blend_margin)
        install_corner_experts(surrogate, experts, m.blend_margin)
    adaptive_idx = list(range(m.n_adaptive))
    surrogate_idx = list(range(m.n_adaptive, env_config.n_prey))

    if bandwidths is None:
        bandwidths = Bandwidths()
    if grid is None:
        grid = latent_grid(
            reward_config.k,
            reward_config.kind,
            default_grid_resolution(reward_config.k, reward_config.kind),
        )
    demo_buffer: deque = deque(maxlen=m.demo_buffer)
    pairs: list = []
    history: list = []
    warmup_after = int(m.pair_warmup * m.episodes)
    n_updates = max(1, m.episodes // m.batch_episodes)
    episodes_done = 0
    next_pair_at = m.pair_period
    optimizers = {}
    if m.optimizer == "adam":
        optimizers = {
            ROLE_ADAPTIVE: AdamState(adaptive, m.learning_rate, m.entropy_coef),
            ROLE_SURROGATE: AdamState(surrogate, m.learning_rate, m.entropy_coef),
        }

    for update in range(n_updates):
        b = sample_latent(reward_config.k, reward_config.kind, rng)
        controllers = [
            (adaptive if i in adaptive_idx else surrogate, b)
            for i in range(env_config.n_prey)
        ]
        batch_data = [
            run_episode(train_env, controllers, b, rng)
            for _ in range(m.batch_episodes)
        ]
        for policy, idx in ((adaptive, adaptive_idx), (surrogate, surrogate_idx)):
            if not idx or m.learning_rate == 0.0:
                continue
            batch = RolloutBatch(
                [
                    EpisodeRecord(
                        data["observations"][:, idx],
                        data["actions"][:, idx],
                        data["rewards"],
                        b,
                    )
                    for data in batch_data
                ],
                m.gamma,
            )
            if m.optimizer == "adam":
                optimizers[policy.role].step(policy, batch)
            else:
                policy_gradient_step(policy, batch, m.learning_rate)
        for data in batch_data:
            for t in range(m.train_steps):
                for i in surrogate_idx:
                    demo_buffer.append(
                        Demonstration(
                            data["observations"][t, i], int(data["actions"][t, i]), b
                        )
                    )
        episodes_done += m.batch_episodes
        if update % m.log_every == 0 or update == n_updates - 1:
            history.append(
                {
                    "episode": episodes_done,
                    "mean_return": float(
                        np.mean([data["rewards"].sum() for data in batch_data])
                    ),
                }
            )
        if (
            episodes_done >= max(warmup_after, next_pair_at)
            and len(demo_buffer) >= 100
        ):
            next_pair_at = episodes_done + m.pair_period
            window = ObservedWindow(window_capacity)
            for data in batch_data:
                for t in range(m.train_steps):
                    for i in surrogate_idx:
                        window.push(data["observations"][t, i], data["actions"][t, i])
            for _ in range(m.pair_fill_episodes):
                run_episode(
                    train_env,
                    controllers,
                    b,
                    rng,
                    window=window,
                    window_indices=surrogate_idx,
                )
            ds = TrainingDataset(list(demo_buffer))
            if ds.n_distinct_latents() >= 2:
                post = posterior_over_grid(ds, window, grid, None, bandwidths)
                pairs.append((posterior_summary(post), b))
    return PretrainResult(adaptive, surrogate, pairs, history)


@dataclass
class TeamEvalResult:
    mean_return: float
    episode_returns: np.ndarray
    component_returns: np.ndarray  # per-component mean episode total


def evaluate_team(
    adaptive_policies,
    unknown_policies,
    b_condition: LatentParams,
    b_true: LatentParams,
    episodes: int,
    rng: np.random.Generator,
    env: ParticleEnv,
    window: ObservedWindow | None = None,
    greedy: bool = False,
) -> TeamEvalResult:
    """Deploy the team and score it under the teammates' actual latent.

    Adaptive prey take the leading indices and act conditioned on
    ``b_condition``; the unknown teammates keep their own latents. Component
    returns are step-summed prey averages, so the linear family satisfies
    mean_return == b_true . component_returns exactly.
    """
    cfg = env.config
    if len(adaptive_policies) + len(unknown_policies) != cfg.n_prey:
        raise PolicyError(
            f"roles must partition the {cfg.n_prey} prey, got "
            f"{len(adaptive_policies)} adaptive + {len(unknown_policies)} unknown"
        )
    if episodes < 1:
        raise PolicyError("episodes must be >= 1")
    controllers = [(p, b_condition) for p in adaptive_policies] + [
        (u.policy, u.latent) for u in unknown_policies
    ]
    unknown_idx = tuple(range(len(adaptive_policies), cfg.n_prey))
    ep_returns = np.empty(episodes)
    comp_totals = np.zeros(env.reward_config.k)
    for e in range(episodes):
        data = run_episode(
            env,
            controllers,
            b_true,
            rng,
            greedy=greedy,
            window=window,
            window_indices=unknown_idx if window is not None else (),
        )
        ep_returns[e] = data["rewards"].sum()
        comp_totals += data["components"].mean(axis=1).sum(axis=0)
    return TeamEvalResult(
        mean_return=float(ep_returns.mean()),
        episode_returns=ep_returns,
        component_returns=comp_totals / episodes,
    )
