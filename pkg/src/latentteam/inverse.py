"""Kernel-density Bayesian inverse learning of latent reward parameters.

A demonstration dataset of (observation, action, latent) triples defines a
kernel-smoothed likelihood of seeing a given (observation, action) pair under
candidate latents. Multiplying those likelihoods over an observed window of a
teammate's behavior and applying a prior yields a discrete posterior over a
candidate grid. Everything runs in log space: the products over hundreds of
window entries underflow otherwise.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations_with_replacement, product

import numpy as np
from scipy.special import logsumexp

from .env import N_ACTIONS, ConfigError
from .rewards import LINEAR, NONLINEAR, LatentParams


class InverseError(ValueError):
    """Raised when inference inputs are unusable (empty data, bad dims)."""


@dataclass(frozen=True)
class Bandwidths:
    """Kernel smoothing constants. Distances enter squared, divided by 2h,
    so these carry squared-distance units."""

    h: float = 0.03
    h_prime: float = 0.03

    def __post_init__(self):
        if self.h <= 0 or self.h_prime <= 0:
            raise ConfigError(
                f"bandwidths must be positive, got h={self.h}, h'={self.h_prime}"
            )


@dataclass(frozen=True)
class Demonstration:
    """One recorded step of a behavior generated under a known latent."""

    obs: np.ndarray
    action: int
    latent: LatentParams


def action_onehot(action: int, n_actions: int = N_ACTIONS) -> np.ndarray:
    if not 0 <= int(action) < n_actions:
        raise InverseError(f"action {action} outside 0..{n_actions - 1}")
    v = np.zeros(n_actions)
    v[int(action)] = 1.0
    return v


def sa_distance(d1: tuple, d2: tuple, n_actions: int = N_ACTIONS) -> float:
    """Euclidean distance between (obs, action) pairs with one-hot actions."""
    o1, a1 = d1
    o2, a2 = d2
    o1 = np.asarray(o1, dtype=float)
    o2 = np.asarray(o2, dtype=float)
    if o1.shape != o2.shape:
        raise InverseError(
            f"observation shapes differ: {o1.shape} vs {o2.shape}"
        )
    x1 = np.concatenate([o1, action_onehot(a1, n_actions)])
    x2 = np.concatenate([o2, action_onehot(a2, n_actions)])
    return float(np.linalg.norm(x1 - x2))


def reward_distance(b1: LatentParams, b2: LatentParams) -> float:
    """Cosine distance for the linear family (scale-free), Euclidean otherwise."""
    if b1.kind != b2.kind:
        raise InverseError(f"mixing kinds differ: {b1.kind} vs {b2.kind}")
    if b1.k != b2.k:
        raise InverseError(f"latent dimensions differ: {b1.k} vs {b2.k}")
    if b1.kind == LINEAR:
        n1 = np.linalg.norm(b1.values)
        n2 = np.linalg.norm(b2.values)
        if n1 <= 0 or n2 <= 0:
            raise InverseError("cosine distance undefined for a zero vector")
        return float(1.0 - (b1.values @ b2.values) / (n1 * n2))
    return float(np.linalg.norm(b1.values - b2.values))


class TrainingDataset:
    """Demonstration support for the kernel likelihood.

    Posteriors are only informative when the demos cover at least two
    distinct latents; a single-latent dataset is accepted (useful for
    oracle-style checks) but makes every candidate look alike.
    """

    def __init__(self, demos):
        demos = list(demos)
        if not demos:
            raise InverseError("dataset needs at least one demonstration")
        obs_dim = demos[0].obs.size
        kind = demos[0].latent.kind
        k = demos[0].latent.k
        for d in demos:
            if d.obs.size != obs_dim:
                raise InverseError("inconsistent observation lengths in dataset")
            if d.latent.k != k or d.latent.kind != kind:
                raise InverseError("inconsistent latents in dataset")
        self.demos = demos
        self.kind = kind
        self.k = k
        self.obs = np.stack([d.obs for d in demos])
        self.actions = np.array([int(d.action) for d in demos])
        self.latents = np.stack([d.latent.values for d in demos])
        # (obs || one-hot action) matrix used for pairwise kernel distances
        onehots = np.zeros((len(demos), N_ACTIONS))
        onehots[np.arange(len(demos)), self.actions] = 1.0
        self.points = np.hstack([self.obs, onehots])

    def __len__(self) -> int:
        return len(self.demos)

    def n_distinct_latents(self) -> int:
        return len({tuple(np.round(row, 12)) for row in self.latents})

    def reward_log_kernels(self, b: LatentParams, bw: Bandwidths) -> np.ndarray:
        """log of the reward-kernel weight for every demo latent."""
        d = np.array(
            [
                reward_distance(b, LatentParams(row, self.kind))
                for row in self.latents
            ]
        )
        return -(d**2) / (2.0 * bw.h_prime)

    def save(self, path) -> None:
        from .persist import save_bundle

        save_bundle(
            path,
            {"format": "dataset.v1", "kind": self.kind, "k": self.k},
            {"obs": self.obs, "actions": self.actions, "latents": self.latents},
        )

    @classmethod
    def load(cls, path) -> "TrainingDataset":
        from .persist import load_bundle

        meta, arrays = load_bundle(path)
        if meta.get("format") != "dataset.v1":
            raise InverseError(f"not a dataset file: {path}")
        demos = [
            Demonstration(obs, int(a), LatentParams(lat, meta["kind"]))
            for obs, a, lat in zip(
                arrays["obs"], arrays["actions"], arrays["latents"]
            )
        ]
        return cls(demos)


class ObservedWindow:
    """Bounded FIFO of (obs, action) pairs from the unobserved-reward agents."""

    def __init__(self, capacity: int = 300):
        if capacity < 1:
            raise ConfigError(f"window capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items: deque = deque(maxlen=capacity)

    def push(self, obs: np.ndarray, action: int) -> None:
        self._items.append((np.asarray(obs, dtype=float), int(action)))

    def extend(self, pairs) -> None:
        for obs, action in pairs:
            self.push(obs, action)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def points(self) -> np.ndarray:
        """(n, obs_dim + n_actions) matrix of concatenated pairs."""
        if not self._items:
            raise InverseError("observed window is empty")
        obs = np.stack([o for o, _ in self._items])
        onehots = np.zeros((len(self._items), N_ACTIONS))
        onehots[np.arange(len(self._items)), [a for _, a in self._items]] = 1.0
        return np.hstack([obs, onehots])


@dataclass
class Posterior:
    """Discrete posterior over a fixed candidate grid."""

    candidates: list[LatentParams]
    log_weights: np.ndarray

    def __post_init__(self):
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if len(self.candidates) != self.log_weights.size:
            raise InverseError("candidate/weight length mismatch")

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_weights - logsumexp(self.log_weights))

    def entropy(self) -> float:
        p = self.probabilities
        nz = p[p > 0]
        return float(-np.sum(nz * np.log(nz)))

    @property
    def candidate_matrix(self) -> np.ndarray:
        return np.stack([c.values for c in self.candidates])


def _pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between row sets, clipped at zero."""
    sq = (
        np.sum(a**2, axis=1)[:, None]
        + np.sum(b**2, axis=1)[None, :]
        - 2.0 * a @ b.T
    )
    return np.clip(sq, 0.0, None)


def log_conditional_density(
    ds: TrainingDataset, pair: tuple, b: LatentParams, bw: Bandwidths
) -> float:
    """log of the kernel likelihood of one (obs, action) pair given latents b.

    Ratio of two kernel sums over the dataset: state-action kernels weighted
    by reward kernels in the numerator, reward kernels alone below.
    """
    obs, action = pair
    point = np.concatenate([np.asarray(obs, dtype=float), action_onehot(action)])
    if point.size != ds.points.shape[1]:
        raise InverseError(
            f"pair dimension {point.size} does not match dataset {ds.points.shape[1]}"
        )
    log_kr = ds.reward_log_kernels(b, bw)
    sq = np.sum((ds.points - point[None, :]) ** 2, axis=1)
    log_ks = -sq / (2.0 * bw.h)
    return float(logsumexp(log_ks + log_kr) - logsumexp(log_kr))


def conditional_density(
    ds: TrainingDataset, pair: tuple, b: LatentParams, bw: Bandwidths
) -> float:
    """Kernel likelihood on the plain scale; use the log form at scale."""
    return float(np.exp(log_conditional_density(ds, pair, b, bw)))


def log_posterior(
    ds: TrainingDataset,
    window: ObservedWindow,
    b: LatentParams,
    prior_log_density,
    bw: Bandwidths,
) -> float:
    """Unnormalized log posterior: log prior plus summed log likelihoods."""
    if len(window) == 0:
        raise InverseError("observed window is empty")
    total = float(prior_log_density(b)) if prior_log_density is not None else 0.0
    for obs, action in window:
        total += log_conditional_density(ds, (obs, action), b, bw)
    return total


def posterior_over_grid(
    ds: TrainingDataset,
    window: ObservedWindow,
    grid,
    prior_log_density,
    bw: Bandwidths,
) -> Posterior:
    """Evaluate the log posterior at every grid candidate and normalize.

    Vectorized equivalent of calling log_posterior per candidate: the
    state-action kernel matrix is shared across candidates.
    """
    grid = list(grid)
    if not grid:
        raise InverseError("candidate grid is empty")
    pts = window.points()
    sq = _pairwise_sq_dists(pts, ds.points)
    log_ks = -sq / (2.0 * bw.h)
    log_weights = np.empty(len(grid))
    for idx, b in enumerate(grid):
        log_kr = ds.reward_log_kernels(b, bw)
        per_pair = logsumexp(log_ks + log_kr[None, :], axis=1) - logsumexp(log_kr)
        prior = float(prior_log_density(b)) if prior_log_density is not None else 0.0
        log_weights[idx] = prior + per_pair.sum()
    return Posterior(grid, log_weights)


def latent_grid(k: int, kind: str, resolution: int = 25) -> list[LatentParams]:
    """Candidate grid: simplex lattice for the linear family, hypercube
    lattice otherwise. ``resolution`` is the per-edge point count."""
    if resolution < 2:
        raise ConfigError(f"grid resolution must be >= 2, got {resolution}")
    if kind == LINEAR:
        levels = resolution - 1
        points = []
        for combo in combinations_with_replacement(range(k), levels):
            counts = np.bincount(np.array(combo), minlength=k)
            points.append(LatentParams(counts / levels, LINEAR))
        return points
    axes = [np.linspace(0.0, 1.0, resolution)] * k
    return [
        LatentParams(np.array(values), NONLINEAR) for values in product(*axes)
    ]


def default_grid_resolution(k: int, kind: str, target: int = 25) -> int:
    """Per-edge resolution giving roughly ``target`` candidates."""
    if kind == LINEAR:
        if k == 2:
            return target
        res = 2
        while len(latent_grid(k, LINEAR, res + 1)) <= target:
            res += 1
        return res
    res = max(2, int(round(target ** (1.0 / k))))
    while res > 2 and res**k > target:
        res -= 1
    return res


def collect_behavior_pairs(
    policy,
    env,
    b: LatentParams,
    count: int,
    rng: np.random.Generator,
    burn_in: int = 15,
    per_episode: int = 9,
) -> list:
    """(obs, action) pairs of the policy conditioned at ``b``.

    Pairs are taken from steps past ``burn_in`` (the team geometry carries
    no style signature until it settles) and subsampled to at most
    ``per_episode`` pairs per episode, so no single random placement
    dominates the sample.
    """
    if burn_in >= env.config.episode_length:
        raise ConfigError(
            f"burn_in {burn_in} leaves no usable steps in "
            f"{env.config.episode_length}-step episodes"
        )
    n_prey = env.config.n_prey
    out = []
    while len(out) < count:
        state = env.reset(rng)
        pool = []
        for t in range(env.config.episode_length):
            actions = []
            for i in range(n_prey):
                obs = env.observe(state, i)
                a = policy.act(obs, b, rng)
                actions.append(a)
                if t >= burn_in:
                    pool.append((obs, int(a)))
            state, _, _ = env.step(state, actions)
        take = min(per_episode, len(pool))
        idx = rng.choice(len(pool), size=take, replace=False)
        out.extend(pool[j] for j in sorted(idx))
    return out[:count]


def build_dataset(
    policy,
    env,
    latent_grid_points,
    demos_per_latent: int,
    rng: np.random.Generator,
    burn_in: int = 15,
    per_episode: int = 9,
) -> TrainingDataset:
    """Demonstrations of the surrogate at each grid latent, pooled across
    prey and spread over many episodes. Total size is
    len(grid) * demos_per_latent."""
    grid = list(latent_grid_points)
    if not grid:
        raise InverseError("latent grid is empty")
    if demos_per_latent < 1:
        raise InverseError(
            f"demos_per_latent must be >= 1, got {demos_per_latent}"
        )
    if getattr(policy, "update_count", 0) == 0:
        raise InverseError("surrogate policy has never been trained")
    demos = []
    for b in grid:
        pairs = collect_behavior_pairs(
            policy, env, b, demos_per_latent, rng, burn_in, per_episode
        )
        demos.extend(Demonstration(obs, action, b) for obs, action in pairs)
    return TrainingDataset(demos)
