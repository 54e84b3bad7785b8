"""Bounded 2-D predator-prey world with discrete moves and scripted pursuit.

N prey (the learning team) and M predators share a square map. Prey pick one
of five moves per step; predators are scripted: each one chases the nearest
prey, and predators claim distinct targets while enough prey remain. Episodes
run a fixed number of steps and every position is clamped to the map bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np


class Action(IntEnum):
    STAY = 0
    UP = 1
    DOWN = 2
    LEFT = 3
    RIGHT = 4


N_ACTIONS = len(Action)

# Unit displacement per action; scaled by step_size. UP increases y.
ACTION_DELTAS = np.array(
    [[0.0, 0.0], [0.0, 1.0], [0.0, -1.0], [-1.0, 0.0], [1.0, 0.0]]
)


class ConfigError(ValueError):
    """Raised when a configuration violates its documented invariants."""


@dataclass(frozen=True)
class EnvConfig:
    """World geometry and episode parameters.

    Radii are event triggers: another prey inside ``resource_radius`` of a
    prey, or a predator inside ``predation_radius``, generates a penalty
    event for that prey.
    """

    map_size: float = 300.0
    n_prey: int = 3
    n_predators: int = 1
    resource_radius: float = 40.0
    predation_radius: float = 40.0
    step_size: float = 10.0
    episode_length: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.map_size <= 0:
            raise ConfigError(f"map_size must be positive, got {self.map_size}")
        if self.resource_radius <= 0:
            raise ConfigError(
                f"resource_radius must be positive, got {self.resource_radius}"
            )
        if self.predation_radius <= 0:
            raise ConfigError(
                f"predation_radius must be positive, got {self.predation_radius}"
            )
        if not 0 < self.step_size < self.map_size:
            raise ConfigError(
                f"step_size must lie in (0, map_size), got {self.step_size}"
            )
        if self.n_prey < 2:
            raise ConfigError(
                f"n_prey must be >= 2 (pairwise rewards need a pair), got {self.n_prey}"
            )
        if self.n_predators < 1:
            raise ConfigError(
                f"n_predators must be >= 1, got {self.n_predators}"
            )
        if self.episode_length < 1:
            raise ConfigError(
                f"episode_length must be >= 1, got {self.episode_length}"
            )
        if self.seed < 0:
            raise ConfigError(f"seed must be unsigned, got {self.seed}")

    @property
    def obs_dim(self) -> int:
        return 2 * (self.n_prey + self.n_predators)


@dataclass
class EnvState:
    """Joint positions plus the step counter. Arrays are (N, 2) and (M, 2)."""

    prey_positions: np.ndarray
    predator_positions: np.ndarray
    step_index: int = 0

    def copy(self) -> "EnvState":
        return EnvState(
            self.prey_positions.copy(),
            self.predator_positions.copy(),
            self.step_index,
        )


class EnvError(ValueError):
    """Raised for invalid interactions with the world (bad index, overrun)."""


class ParticleEnv:
    """Deterministic, seeded simulation; all randomness enters via ``reset``.

    A single instance is mutated single-threaded; concurrent rollouts should
    use separate instances with separate random streams.
    """

    def __init__(self, config: EnvConfig, reward_config=None):
        self.config = config
        # Optional reward family; step() returns zero-length component rows
        # when unset so pure-movement uses don't need one.
        self.reward_config = reward_config

    def reset(self, rng: np.random.Generator) -> EnvState:
        """Place all N+M agents i.i.d. uniform over the map."""
        c = self.config
        prey = rng.uniform(0.0, c.map_size, size=(c.n_prey, 2))
        preds = rng.uniform(0.0, c.map_size, size=(c.n_predators, 2))
        return EnvState(prey, preds, step_index=0)

    def _clamp(self, positions: np.ndarray) -> np.ndarray:
        return np.clip(positions, 0.0, self.config.map_size)

    def predator_actions(self, state: EnvState) -> list[Action]:
        """Scripted pursuit: nearest prey, distinct targets while available.

        Predators claim targets sequentially by predator index; each takes
        the nearest unclaimed prey (ties to the lowest prey index). Once all
        prey are claimed, surplus predators fall back to their own nearest
        prey. The emitted action is the one whose clamped resulting position
        minimizes distance to the target, ties broken in Action order.
        """
        c = self.config
        claimed: set[int] = set()
        actions: list[Action] = []
        for p in range(c.n_predators):
            pos = state.predator_positions[p]
            dists = np.linalg.norm(state.prey_positions - pos, axis=1)
            order = np.argsort(dists, kind="stable")
            target_idx = next((j for j in order if j not in claimed), order[0])
            claimed.add(int(target_idx))
            target = state.prey_positions[target_idx]

            best_action = Action.STAY
            best_dist = np.inf
            for a in Action:
                cand = self._clamp(pos + ACTION_DELTAS[a] * c.step_size)
                d = float(np.linalg.norm(cand - target))
                if d < best_dist:
                    best_dist = d
                    best_action = a
            actions.append(best_action)
        return actions

    def step(
        self, state: EnvState, prey_actions
    ) -> tuple[EnvState, np.ndarray, bool]:
        """Advance one step; returns (next_state, reward components, done).

        Components are computed on the post-move configuration, one row per
        prey. Predator moves are decided from the pre-move state.
        """
        c = self.config
        if len(prey_actions) != c.n_prey:
            raise EnvError(
                f"expected {c.n_prey} prey actions, got {len(prey_actions)}"
            )
        if state.step_index >= c.episode_length:
            raise EnvError(
                f"episode is finished (step {state.step_index} of {c.episode_length})"
            )
        pred_actions = self.predator_actions(state)
        prey_idx = np.asarray(prey_actions, dtype=int)
        new_prey = self._clamp(
            state.prey_positions + ACTION_DELTAS[prey_idx] * c.step_size
        )
        new_preds = self._clamp(
            state.predator_positions
            + ACTION_DELTAS[np.asarray(pred_actions, dtype=int)] * c.step_size
        )
        next_state = EnvState(new_prey, new_preds, state.step_index + 1)
        if self.reward_config is not None:
            from .rewards import compute_components

            components = compute_components(
                next_state, prey_actions, c, self.reward_config
            )
        else:
            components = np.zeros((c.n_prey, 0))
        done = next_state.step_index == c.episode_length
        return next_state, components, done

    def observe(self, state: EnvState, agent_index: int) -> np.ndarray:
        """Flat feature vector for one prey, every entry in [-1, 1].

        Layout: ego position (2), offsets to the other prey in index order
        (2 each), offsets to every predator in index order (2 each), all
        divided by map_size.
        """
        c = self.config
        if not 0 <= agent_index < c.n_prey:
            raise EnvError(
                f"agent_index {agent_index} out of range for {c.n_prey} prey"
            )
        ego = state.prey_positions[agent_index]
        parts = [ego / c.map_size]
        for j in range(c.n_prey):
            if j == agent_index:
                continue
            parts.append((state.prey_positions[j] - ego) / c.map_size)
        for p in range(c.n_predators):
            parts.append((state.predator_positions[p] - ego) / c.map_size)
        return np.concatenate(parts)
