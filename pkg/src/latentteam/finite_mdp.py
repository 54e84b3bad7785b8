"""Tabular laboratory: Q-learning under exact, noisy, and biased rewards.

Small seeded MDPs let us measure how the learned Q-table approaches (or
misses) the value-iteration fixed point when the reward signal is replaced
by a stochastic estimate. Zero-mean noise still converges; a constant
offset shifts the fixed point by offset/(1-gamma).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import ConfigError

EXACT = "exact"
UNBIASED = "unbiased"
BIASED = "biased"


@dataclass(frozen=True)
class FiniteMDP:
    """Dense tabular MDP: transitions (S, A, S), rewards (S, A)."""

    transitions: np.ndarray
    rewards: np.ndarray
    gamma: float

    def __post_init__(self):
        t = np.asarray(self.transitions, dtype=float)
        r = np.asarray(self.rewards, dtype=float)
        object.__setattr__(self, "transitions", t)
        object.__setattr__(self, "rewards", r)
        if t.ndim != 3 or t.shape[0] != t.shape[2]:
            raise ConfigError(f"transitions must be (S, A, S), got {t.shape}")
        if r.shape != t.shape[:2]:
            raise ConfigError(
                f"rewards shape {r.shape} does not match transitions {t.shape[:2]}"
            )
        if not (np.isfinite(t).all() and np.isfinite(r).all()):
            raise ConfigError("transitions and rewards must be finite")
        row_sums = t.sum(axis=2)
        if np.any(np.abs(row_sums - 1.0) > 1e-12) or np.any(t < 0):
            raise ConfigError("transition rows must be distributions summing to 1")
        if not 0 < self.gamma < 1:
            raise ConfigError(f"gamma must be in (0, 1), got {self.gamma}")

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]


def random_mdp(
    n_states: int, n_actions: int, rng: np.random.Generator, gamma: float = 0.9
) -> FiniteMDP:
    """Dirichlet transition rows and uniform [0, 1) rewards."""
    transitions = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    rewards = rng.uniform(size=(n_states, n_actions))
    return FiniteMDP(transitions, rewards, gamma)


def value_iteration(
    mdp: FiniteMDP, tolerance: float = 1e-10, max_iterations: int = 1_000_000
) -> tuple[np.ndarray, int]:
    """Optimal Q-table to within ``tolerance`` in sup norm, plus iterations.

    Stops when the Bellman residual guarantees the contraction bound
    gamma/(1-gamma) * residual <= tolerance.
    """
    q = np.zeros((mdp.n_states, mdp.n_actions))
    threshold = tolerance * (1.0 - mdp.gamma) / mdp.gamma
    for iteration in range(1, max_iterations + 1):
        v = q.max(axis=1)
        new_q = mdp.rewards + mdp.gamma * mdp.transitions @ v
        change = float(np.max(np.abs(new_q - q)))
        q = new_q
        if change <= threshold:
            return q, iteration
    raise RuntimeError(
        f"value iteration did not reach tolerance {tolerance} in {max_iterations} sweeps"
    )


@dataclass(frozen=True)
class LearningSchedule:
    """Step sizes 1/(1+visits)^omega; omega in (0.5, 1] gives divergent step
    sums with convergent squared sums along every infinitely-visited pair."""

    omega: float = 0.6

    def __post_init__(self):
        if not 0.5 < self.omega <= 1.0:
            raise ConfigError(
                "omega must lie in (0.5, 1]: the step-size series must diverge "
                f"while its squares converge, got {self.omega}"
            )

    def alpha(self, visit_count: int) -> float:
        return 1.0 / (1.0 + visit_count) ** self.omega


@dataclass(frozen=True)
class RewardChannel:
    """How the learner sees rewards: exact, zero-mean uniform noise, or a
    constant offset."""

    mode: str
    half_width: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if self.mode not in (EXACT, UNBIASED, BIASED):
            raise ConfigError(f"unknown reward channel mode {self.mode!r}")
        if self.mode == UNBIASED and self.half_width <= 0:
            raise ConfigError("unbiased channel needs a positive half width")
        if self.mode == BIASED and self.offset == 0.0:
            raise ConfigError("biased channel needs a nonzero offset")

    @classmethod
    def exact(cls) -> "RewardChannel":
        return cls(EXACT)

    @classmethod
    def unbiased(cls, half_width: float) -> "RewardChannel":
        return cls(UNBIASED, half_width=half_width)

    @classmethod
    def biased(cls, offset: float) -> "RewardChannel":
        return cls(BIASED, offset=offset)


@dataclass
class QLearningResult:
    q: np.ndarray
    q_star: np.ndarray
    trace: list  # (step, sup-norm gap) every record_every steps
    steps_run: int

    @property
    def final_gap(self) -> float:
        return float(np.max(np.abs(self.q - self.q_star)))


def q_learning_run(
    mdp: FiniteMDP,
    channel: RewardChannel,
    schedule: LearningSchedule,
    steps: int,
    rng: np.random.Generator,
    epsilon: float = 0.2,
    record_every: int = 1000,
    stop_below: float | None = None,
    q_star: np.ndarray | None = None,
) -> QLearningResult:
    """Single-trajectory tabular Q-learning with per-pair visit step sizes.

    Behavior is epsilon-greedy (epsilon > 0 keeps every pair visited).
    The sup-norm gap to the value-iteration table is recorded every
    ``record_every`` steps; ``stop_below`` ends the run early once the gap
    falls under it.
    """
    if epsilon <= 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    if q_star is None:
        q_star, _ = value_iteration(mdp)
    S, A = mdp.n_states, mdp.n_actions
    gamma = mdp.gamma
    omega = schedule.omega
    half_width = channel.half_width
    offset = channel.offset
    mode = channel.mode

    # Plain-list mirrors of the tables: the hot loop is scalar python.
    cum = np.cumsum(mdp.transitions, axis=2)
    cum_rows = [[list(cum[s, a]) for a in range(A)] for s in range(S)]
    r_table = [[float(mdp.rewards[s, a]) for a in range(A)] for s in range(S)]
    q = [[0.0] * A for _ in range(S)]
    visits = [[0] * A for _ in range(S)]
    star = [[float(q_star[s, a]) for a in range(A)] for s in range(S)]

    def sup_gap() -> float:
        return max(
            abs(q[s][a] - star[s][a]) for s in range(S) for a in range(A)
        )

    trace = [(0, sup_gap())]
    state = 0
    step = 0
    block = 200_000
    done = False
    while step < steps and not done:
        n = min(block, steps - step)
        uniforms = rng.random((n, 3))
        for i in range(n):
            u_act, u_next, u_noise = uniforms[i]
            if u_act < epsilon:
                action = int(u_act / epsilon * A)
            else:
                row = q[state]
                action = 0
                best = row[0]
                for a in range(1, A):
                    if row[a] > best:
                        best = row[a]
                        action = a
            crow = cum_rows[state][action]
            nxt = 0
            while crow[nxt] < u_next:
                nxt += 1
            reward = r_table[state][action]
            if mode == UNBIASED:
                reward += (2.0 * u_noise - 1.0) * half_width
            elif mode == BIASED:
                reward += offset
            alpha = 1.0 / (1.0 + visits[state][action]) ** omega
            visits[state][action] += 1
            target = reward + gamma * max(q[nxt])
            q[state][action] += alpha * (target - q[state][action])
            state = nxt
            step += 1
            if step % record_every == 0:
                gap = sup_gap()
                trace.append((step, gap))
                if not np.isfinite(gap):
                    raise PolicyDivergence(
                        f"Q-table diverged at step {step} (gap={gap})"
                    )
                if stop_below is not None and gap < stop_below:
                    done = True
                    break
    return QLearningResult(np.array(q), q_star, trace, step)


class PolicyDivergence(RuntimeError):
    """Raised when the learned table stops being finite."""


@dataclass
class BiasGapReport:
    rows: list  # dicts: beta, seed, steps, supnorm_gap
    mean_gaps: dict  # beta -> mean final gap across seeds


def bias_gap_experiment(
    mdp: FiniteMDP,
    betas,
    steps: int,
    seeds,
    schedule: LearningSchedule | None = None,
    epsilon: float = 0.2,
    noise_half_width: float = 0.0,
    monotone_tolerance: float = 0.5,
) -> BiasGapReport:
    """Final sup-norm gap per (offset, seed); asserts the mean gap grows
    with |offset| up to ``monotone_tolerance``. Offset 0 runs the exact
    channel (or uniform noise when a half width is given)."""
    schedule = schedule or LearningSchedule()
    q_star, _ = value_iteration(mdp)
    rows = []
    mean_gaps: dict = {}
    for beta in betas:
        gaps = []
        for seed in seeds:
            if beta == 0.0:
                channel = (
                    RewardChannel.unbiased(noise_half_width)
                    if noise_half_width > 0
                    else RewardChannel.exact()
                )
            else:
                channel = RewardChannel.biased(beta)
            result = q_learning_run(
                mdp,
                channel,
                schedule,
                steps,
                np.random.default_rng(seed),
                epsilon=epsilon,
                q_star=q_star,
            )
            gaps.append(result.final_gap)
            rows.append(
                {
                    "beta": float(beta),
                    "seed": int(seed),
                    "steps": result.steps_run,
                    "supnorm_gap": result.final_gap,
                }
            )
        mean_gaps[float(beta)] = float(np.mean(gaps))
    ordered = sorted(mean_gaps.items(), key=lambda kv: abs(kv[0]))
    for (b1, g1), (b2, g2) in zip(ordered, ordered[1:]):
        if g2 < g1 - monotone_tolerance:
            raise RuntimeError(
                f"mean gap not monotone in |offset|: {b1}->{g1:.3f} vs {b2}->{g2:.3f}"
            )
    return BiasGapReport(rows, mean_gaps)
