"""Point estimates of latent parameters from a grid posterior.

The argmax candidate is kept for ablations; the default estimate is the
posterior mean. A small regressor can additionally map posterior summary
moments to a corrected estimate, fitted to minimize the squared reward gap
against known latents on a fixed probe set of component vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import ConfigError
from .inverse import InverseError, Posterior
from .rewards import (
    LINEAR,
    LatentParams,
    RewardConfig,
    mix_at_batch,
    mix_gradient_batch,
    project_latent,
)


def map_estimate(posterior: Posterior) -> LatentParams:
    """Highest-probability candidate; ties go to the lowest grid index."""
    probs = posterior.probabilities
    if probs.size == 0:
        raise InverseError("empty posterior")
    return posterior.candidates[int(np.argmax(probs))]


def posterior_mean(posterior: Posterior) -> LatentParams:
    """Probability-weighted candidate mean, projected back to the domain."""
    probs = posterior.probabilities
    if probs.size == 0:
        raise InverseError("empty posterior")
    kind = posterior.candidates[0].kind
    mean = probs @ posterior.candidate_matrix
    return LatentParams(project_latent(mean, kind), kind)


def posterior_std(posterior: Posterior) -> np.ndarray:
    """Per-dimension standard deviation of the candidate distribution."""
    probs = posterior.probabilities
    mat = posterior.candidate_matrix
    mean = probs @ mat
    var = probs @ (mat - mean[None, :]) ** 2
    return np.sqrt(np.clip(var, 0.0, None))


def posterior_summary(posterior: Posterior) -> np.ndarray:
    """Moment summary fed to the debiaser: per-dim mean then per-dim std."""
    probs = posterior.probabilities
    mat = posterior.candidate_matrix
    mean = probs @ mat
    var = probs @ (mat - mean[None, :]) ** 2
    return np.concatenate([mean, np.sqrt(np.clip(var, 0.0, None))])


@dataclass
class EstimatorReport:
    map_estimate: LatentParams
    posterior_mean: LatentParams
    posterior_entropy: float
    debiased: LatentParams | None = None


def estimate(posterior: Posterior, debiaser: "Debiaser | None" = None) -> EstimatorReport:
    """All point estimates for one posterior."""
    return EstimatorReport(
        map_estimate=map_estimate(posterior),
        posterior_mean=posterior_mean(posterior),
        posterior_entropy=posterior.entropy(),
        debiased=debias(debiaser, posterior) if debiaser is not None else None,
    )


@dataclass(frozen=True)
class DebiaserConfig:
    """Training setup for the correction regressor.

    The probe set is a fixed collection of component vectors over which the
    squared reward gap is averaged; it stands in for the event distribution
    the estimate will be used on.
    """

    reward: RewardConfig
    probe_components: np.ndarray
    learning_rate: float = 0.05
    epochs: int = 300
    seed: int = 0
    hidden_factor: int = 4

    def __post_init__(self):
        probes = np.asarray(self.probe_components, dtype=float)
        object.__setattr__(self, "probe_components", probes)
        if probes.ndim != 2 or probes.shape[1] != self.reward.k:
            raise ConfigError(
                f"probe set must be (n, k={self.reward.k}), got {probes.shape}"
            )
        if self.learning_rate <= 0 or self.epochs < 1:
            raise ConfigError("learning_rate must be > 0 and epochs >= 1")


class Debiaser:
    """One-hidden-layer tanh regressor from summary moments to latents.

    Initialized as the identity on the posterior-mean half of the summary
    (second-layer weights start at zero), so an untrained instance
    reproduces the posterior mean exactly.
    """

    def __init__(self, k: int, kind: str, seed: int = 0, hidden_factor: int = 4):
        self.k = k
        self.kind = kind
        self.seed = seed
        hidden = hidden_factor * k
        rng = np.random.default_rng(seed)
        self.w1 = rng.standard_normal((hidden, 2 * k)) / np.sqrt(2 * k)
        self.b1 = np.zeros(hidden)
        self.w2 = np.zeros((k, hidden))
        self.b2 = np.zeros(k)
        self.history: list[float] = []

    def forward_raw(self, summary: np.ndarray) -> np.ndarray:
        summary = np.asarray(summary, dtype=float)
        if summary.shape != (2 * self.k,):
            raise ConfigError(
                f"summary must have length {2 * self.k}, got {summary.shape}"
            )
        hidden = np.tanh(self.w1 @ summary + self.b1)
        return summary[: self.k] + self.w2 @ hidden + self.b2

    def save(self, path) -> None:
        from .persist import save_bundle

        save_bundle(
            path,
            {
                "format": "debiaser.v1",
                "k": self.k,
                "kind": self.kind,
                "seed": self.seed,
            },
            {
                "w1": self.w1,
                "b1": self.b1,
                "w2": self.w2,
                "b2": self.b2,
                "history": np.asarray(self.history, dtype=float),
            },
        )

    @classmethod
    def load(cls, path) -> "Debiaser":
        from .persist import load_bundle

        meta, arrays = load_bundle(path)
        if meta.get("format") != "debiaser.v1":
            raise InverseError(f"not a debiaser file: {path}")
        d = cls(int(meta["k"]), meta["kind"], seed=int(meta["seed"]))
        d.w1 = arrays["w1"]
        d.b1 = arrays["b1"]
        d.w2 = arrays["w2"]
        d.b2 = arrays["b2"]
        d.history = list(arrays["history"])
        return d


def debias(debiaser: Debiaser, posterior: Posterior) -> LatentParams:
    """Corrected estimate, projected into the valid latent domain."""
    kind = posterior.candidates[0].kind
    if debiaser.k != posterior.candidates[0].k:
        raise ConfigError(
            f"debiaser dimension {debiaser.k} does not match posterior {posterior.candidates[0].k}"
        )
    raw = debiaser.forward_raw(posterior_summary(posterior))
    return LatentParams(project_latent(raw, kind), kind)


def _reward_loss_and_grads(debiaser, summaries, targets, probes, reward_cfg):
    """Mean squared reward gap over (pair, probe) and parameter gradients."""
    n, k = summaries.shape[0], debiaser.k
    total = 0.0
    gw1 = np.zeros_like(debiaser.w1)
    gb1 = np.zeros_like(debiaser.b1)
    gw2 = np.zeros_like(debiaser.w2)
    gb2 = np.zeros_like(debiaser.b2)
    denom = n * probes.shape[0]
    hiddens = np.tanh(summaries @ debiaser.w1.T + debiaser.b1[None, :])
    outs = summaries[:, :k] + hiddens @ debiaser.w2.T + debiaser.b2[None, :]
    for s, t, hidden, out in zip(summaries, targets, hiddens, outs):
        gaps = mix_at_batch(reward_cfg, out, probes) - mix_at_batch(
            reward_cfg, t, probes
        )
        total += float(gaps @ gaps)
        d_out = 2.0 * (gaps @ mix_gradient_batch(reward_cfg, out, probes)) / denom
        gw2 += np.outer(d_out, hidden)
        gb2 += d_out
        d_hidden = (debiaser.w2.T @ d_out) * (1.0 - hidden**2)
        gw1 += np.outer(d_hidden, s)
        gb1 += d_hidden
    return total / denom, (gw1, gb1, gw2, gb2)


def train_debiaser(pairs, config: DebiaserConfig) -> Debiaser:
    """Fit the regressor by full-batch gradient descent with step halving.

    ``pairs`` is a sequence of (posterior summary, true latent). The step
    halving keeps the recorded loss non-increasing, so the final loss never
    exceeds the initial one.
    """
    pairs = list(pairs)
    if len(pairs) < 100:
        raise ConfigError(
            f"need at least 100 training pairs, got {len(pairs)}"
        )
    k = config.reward.k
    summaries = np.stack([np.asarray(s, dtype=float) for s, _ in pairs])
    targets = np.stack(
        [t.values if isinstance(t, LatentParams) else np.asarray(t) for _, t in pairs]
    )
    if summaries.shape[1] != 2 * k or targets.shape[1] != k:
        raise ConfigError("pair dimensions do not match the reward family")

    d = Debiaser(k, config.reward.kind, seed=config.seed)
    lr = config.learning_rate
    loss, grads = _reward_loss_and_grads(
        d, summaries, targets, config.probe_components, config.reward
    )
    if not np.isfinite(loss):
        raise ConfigError("non-finite training loss at initialization")
    d.history.append(loss)
    params = (d.w1, d.b1, d.w2, d.b2)
    for _ in range(config.epochs):
        proposal = [p - lr * g for p, g in zip(params, grads)]
        trial = Debiaser(k, config.reward.kind, seed=config.seed)
        trial.w1, trial.b1, trial.w2, trial.b2 = proposal
        new_loss, new_grads = _reward_loss_and_grads(
            trial, summaries, targets, config.probe_components, config.reward
        )
        if not np.isfinite(new_loss):
            raise ConfigError("non-finite training loss during descent")
        if new_loss > loss:
            lr *= 0.5
            if lr < 1e-12:
                break
            d.history.append(loss)
            continue
        d.w1, d.b1, d.w2, d.b2 = proposal
        params = proposal
        loss, grads = new_loss, new_grads
        d.history.append(loss)
    return d
