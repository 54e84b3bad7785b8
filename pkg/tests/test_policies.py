import numpy as np
import pytest

from latentteam.env import ConfigError, EnvConfig, ParticleEnv
from latentteam.inverse import ObservedWindow
from latentteam.policies import (
    EpisodeRecord,
    FixedBehaviorPolicy,
    GoalConditionedPolicy,
    MarlConfig,
    PolicyError,
    PretrainResult,
    RolloutBatch,
    evaluate_team,
    policy_gradient_step,
    pretrain,
    run_episode,
)
from latentteam.rewards import LINEAR, LatentParams, RewardConfig, style_latent


BAL = LatentParams(np.array([0.5, 0.5]))


def random_policy(rng, obs_dim=4, k=2, scale=0.5):
    policy = GoalConditionedPolicy(obs_dim, k)
    policy.weights = scale * rng.normal(size=policy.weights.shape)
    policy.bias = scale * rng.normal(size=policy.bias.shape)
    return policy


class TestActing:
    def test_zero_parameters_uniform(self):
        policy = GoalConditionedPolicy(4, 2)
        probs = policy.action_probs(np.zeros(4), BAL)
        assert np.allclose(probs, 0.2)

    def test_probs_normalized_fuzz(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            policy = random_policy(rng, scale=2.0)
            obs = rng.uniform(-1, 1, size=4)
            probs = policy.action_probs(obs, BAL)
            assert probs.sum() == pytest.approx(1.0)
            assert np.all(probs > 0.0)

    def test_greedy_deterministic(self):
        rng = np.random.default_rng(1)
        policy = random_policy(rng)
        obs = rng.uniform(-1, 1, size=4)
        picks = {policy.act(obs, BAL, np.random.default_rng(i), greedy=True) for i in range(10)}
        assert len(picks) == 1

    def test_sampling_frequencies_match_probs(self):
        rng = np.random.default_rng(2)
        policy = random_policy(rng)
        obs = rng.uniform(-1, 1, size=4)
        probs = policy.action_probs(obs, BAL)
        draws = np.array([policy.act(obs, BAL, rng) for _ in range(10_000)])
        freq = np.bincount(draws, minlength=5) / 10_000
        assert np.all(np.abs(freq - probs) < 0.02)

    def test_dimension_mismatch(self):
        policy = GoalConditionedPolicy(4, 2)
        with pytest.raises(PolicyError):
            policy.act(np.zeros(5), BAL, np.random.default_rng(0))
        with pytest.raises(PolicyError):
            policy.act(np.zeros(4), LatentParams(np.array([1.0, 0.0, 0.0])), np.random.default_rng(0))

    def test_feature_layout(self):
        policy = GoalConditionedPolicy(2, 2, obs_scale=3.0)
        obs = np.array([0.5, -0.25])
        b = LatentParams(np.array([0.75, 0.25]))
        phi = policy.features(obs, b)
        scaled = 3.0 * obs
        expect = np.concatenate([scaled, b.values, np.outer(scaled, b.values).ravel()])
        assert np.array_equal(phi, expect)


class TestScoreGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            policy = random_policy(rng)
            obs = rng.uniform(-1, 1, size=4)
            action = int(rng.integers(0, 5))
            gw, gb = policy.log_prob_grad(obs, BAL, action)
            eps = 1e-6
            for idx in [(0, 0), (2, 5), (4, 13)]:
                policy.weights[idx] += eps
                up = policy.log_prob(obs, BAL, action)
                policy.weights[idx] -= 2 * eps
                down = policy.log_prob(obs, BAL, action)
                policy.weights[idx] += eps
                fd = (up - down) / (2 * eps)
                assert gw[idx] == pytest.approx(fd, rel=1e-5, abs=1e-9)
            for a in range(5):
                policy.bias[a] += eps
                up = policy.log_prob(obs, BAL, action)
                policy.bias[a] -= 2 * eps
                down = policy.log_prob(obs, BAL, action)
                policy.bias[a] += eps
                fd = (up - down) / (2 * eps)
                assert gb[a] == pytest.approx(fd, rel=1e-5, abs=1e-9)


def bandit_batch(policy, rng, episodes=16, rewarding_action=1):
    obs = np.zeros((1, 1, policy.obs_dim))
    records = []
    for _ in range(episodes):
        a = policy.act(obs[0, 0], BAL, rng)
        r = 1.0 if a == rewarding_action else 0.0
        records.append(
            EpisodeRecord(obs.copy(), np.array([[a]]), np.array([r]), BAL)
        )
    return RolloutBatch(records, policy.gamma)


class TestPolicyGradientStep:
    def test_returns_to_go(self):
        rec = EpisodeRecord(
            np.zeros((3, 1, 4)), np.zeros((3, 1), dtype=int), np.array([1.0, 2.0, 4.0]), BAL
        )
        batch = RolloutBatch([rec], gamma=0.5)
        g = batch.returns_to_go()[0]
        assert np.allclose(g, [1.0 + 0.5 * (2.0 + 0.5 * 4.0), 2.0 + 0.5 * 4.0, 4.0])

    def test_equal_returns_give_zero_step(self):
        policy = GoalConditionedPolicy(4, 2)
        before_w = policy.weights.copy()
        rec = EpisodeRecord(
            np.zeros((2, 2, 4)),
            np.ones((2, 2), dtype=int),
            np.array([0.0, 0.0]),
            BAL,
        )
        out = policy_gradient_step(policy, RolloutBatch([rec], 0.95), 0.5)
        assert out["grad_norm"] == 0.0
        assert np.array_equal(policy.weights, before_w)

    def test_zero_learning_rate_keeps_parameters(self):
        rng = np.random.default_rng(4)
        policy = random_policy(rng)
        before_w = policy.weights.copy()
        before_b = policy.bias.copy()
        batch = bandit_batch(policy, rng)
        policy_gradient_step(policy, batch, 0.0)
        assert np.array_equal(policy.weights, before_w)
        assert np.array_equal(policy.bias, before_b)

    def test_empty_batch_rejected(self):
        policy = GoalConditionedPolicy(4, 2)
        with pytest.raises(PolicyError):
            policy_gradient_step(policy, RolloutBatch([], 0.95), 0.1)

    def test_bandit_probability_increases(self):
        rng = np.random.default_rng(5)
        policy = GoalConditionedPolicy(2, 2)
        obs = np.zeros(2)
        p_start = policy.action_probs(obs, BAL)[1]
        for _ in range(200):
            batch = bandit_batch(policy, rng, episodes=16, rewarding_action=1)
            policy_gradient_step(policy, batch, 0.1)
        p_end = policy.action_probs(obs, BAL)[1]
        assert p_end > p_start
        assert p_end > 0.5

    def test_non_finite_gradient_aborts(self):
        policy = GoalConditionedPolicy(4, 2)
        rec = EpisodeRecord(
            np.zeros((1, 1, 4)),
            np.zeros((1, 1), dtype=int),
            np.array([np.inf]),
            BAL,
        )
        with pytest.raises(PolicyError):
            policy_gradient_step(policy, RolloutBatch([rec], 0.95), 0.1)


class TestRunEpisode:
    ENV = ParticleEnv(
        EnvConfig(n_prey=3, n_predators=1, episode_length=10), RewardConfig(k=2)
    )

    def test_shapes_and_determinism(self):
        policy = GoalConditionedPolicy(self.ENV.config.obs_dim, 2)
        controllers = [(policy, BAL)] * 3
        d1 = run_episode(self.ENV, controllers, BAL, np.random.default_rng(7))
        d2 = run_episode(self.ENV, controllers, BAL, np.random.default_rng(7))
        assert d1["observations"].shape == (10, 3, 8)
        assert d1["actions"].shape == (10, 3)
        assert d1["rewards"].shape == (10,)
        assert d1["components"].shape == (10, 3, 2)
        assert np.array_equal(d1["actions"], d2["actions"])
        assert np.array_equal(d1["rewards"], d2["rewards"])

    def test_window_collects_selected_agents(self):
        policy = GoalConditionedPolicy(self.ENV.config.obs_dim, 2)
        window = ObservedWindow(100)
        run_episode(
            self.ENV,
            [(policy, BAL)] * 3,
            BAL,
            np.random.default_rng(8),
            window=window,
            window_indices=(2,),
        )
        assert len(window) == 10

    def test_controller_count_checked(self):
        policy = GoalConditionedPolicy(self.ENV.config.obs_dim, 2)
        with pytest.raises(PolicyError):
            run_episode(self.ENV, [(policy, BAL)], BAL, np.random.default_rng(0))


class TestPretrain:
    ENV = EnvConfig(n_prey=3, n_predators=1)
    REWARD = RewardConfig(k=2)

    def test_smoke_and_determinism(self):
        marl = MarlConfig(
            episodes=40, batch_episodes=4, n_adaptive=2, n_surrogate=1,
            pair_warmup=0.5, pair_period=10, demo_buffer=500, log_every=5,
        )
        r1 = pretrain(self.ENV, self.REWARD, marl, np.random.default_rng(9))
        r2 = pretrain(self.ENV, self.REWARD, marl, np.random.default_rng(9))
        assert isinstance(r1, PretrainResult)
        assert r1.adaptive.update_count == 10  # 40 episodes / batches of 4
        assert r1.surrogate.update_count == 10
        assert np.array_equal(r1.adaptive.weights, r2.adaptive.weights)
        assert np.array_equal(r1.surrogate.weights, r2.surrogate.weights)
        assert len(r1.history) >= 3
        assert len(r1.debiaser_pairs) == len(r2.debiaser_pairs) > 0
        s1, b1 = r1.debiaser_pairs[0]
        s2, b2 = r2.debiaser_pairs[0]
        assert np.array_equal(s1, s2) and np.array_equal(b1.values, b2.values)

    def test_zero_learning_rate_leaves_parameters_at_init(self):
        marl = MarlConfig(
            episodes=10, learning_rate=0.0, n_adaptive=2, n_surrogate=1, pair_warmup=1.0
        )
        res = pretrain(self.ENV, self.REWARD, marl, np.random.default_rng(10))
        assert np.array_equal(res.adaptive.weights, np.zeros_like(res.adaptive.weights))
        assert np.array_equal(res.surrogate.weights, np.zeros_like(res.surrogate.weights))

    def test_role_partition_must_match(self):
        marl = MarlConfig(episodes=5, n_adaptive=1, n_surrogate=1)
        with pytest.raises(ConfigError):
            pretrain(self.ENV, self.REWARD, marl, np.random.default_rng(0))

    def test_improves_over_initial_policy(self):
        # smoke-scale training beats the untrained team on matched eval seeds
        marl = MarlConfig(
            episodes=500, learning_rate=0.02, n_adaptive=2, n_surrogate=1,
            pair_warmup=1.0,
        )
        eval_env = ParticleEnv(
            EnvConfig(n_prey=3, n_predators=1, episode_length=25), self.REWARD
        )
        wins = 0
        for seed in range(5):
            res = pretrain(self.ENV, self.REWARD, marl, np.random.default_rng(seed))
            fresh = GoalConditionedPolicy(self.ENV.obs_dim, 2)
            b = style_latent("balanced", self.REWARD)

            def team_return(policy):
                unknowns = [FixedBehaviorPolicy(policy, b)]
                result = evaluate_team(
                    [policy, policy],
                    unknowns,
                    b,
                    b,
                    episodes=40,
                    rng=np.random.default_rng(1000 + seed),
                    env=eval_env,
                )
                return result.mean_return

            if team_return(res.adaptive) > team_return(fresh):
                wins += 1
        assert wins == 5


class TestEvaluateTeam:
    ENV = ParticleEnv(
        EnvConfig(n_prey=3, n_predators=1, episode_length=10), RewardConfig(k=2)
    )

    def _policy(self):
        return GoalConditionedPolicy(self.ENV.config.obs_dim, 2)

    def test_role_mismatch(self):
        policy = self._policy()
        with pytest.raises(PolicyError):
            evaluate_team(
                [policy], [], BAL, BAL, 2, np.random.default_rng(0), self.ENV
            )

    def test_all_unknown_team_is_valid(self):
        policy = self._policy()
        unknowns = [FixedBehaviorPolicy(policy, BAL)] * 3
        result = evaluate_team(
            [], unknowns, BAL, BAL, 3, np.random.default_rng(1), self.ENV
        )
        assert result.episode_returns.shape == (3,)

    def test_component_decomposition_matches_linear_mix(self):
        policy = self._policy()
        unknowns = [FixedBehaviorPolicy(policy, BAL)]
        result = evaluate_team(
            [policy, policy], unknowns, BAL, BAL, 5, np.random.default_rng(2), self.ENV
        )
        assert result.mean_return == pytest.approx(
            float(BAL.values @ result.component_returns)
        )

    def test_window_receives_unknown_pairs(self):
        policy = self._policy()
        window = ObservedWindow(1000)
        unknowns = [FixedBehaviorPolicy(policy, BAL)]
        evaluate_team(
            [policy, policy],
            unknowns,
            BAL,
            BAL,
            4,
            np.random.default_rng(3),
            self.ENV,
            window=window,
        )
        assert len(window) == 4 * 10  # one unknown agent, ten steps per episode


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(11)
        policy = random_policy(rng, obs_dim=8, k=2)
        policy.update_count = 17
        path = tmp_path / "policy.npz"
        policy.save(path, RewardConfig(k=2), seed=42)
        back, meta = GoalConditionedPolicy.load(path)
        assert np.array_equal(back.weights, policy.weights)
        assert np.array_equal(back.bias, policy.bias)
        assert back.update_count == 17
        assert meta["seed"] == 42
        assert meta["reward"]["k"] == 2
        assert meta["reward"]["kind"] == LINEAR

    def test_copy_is_independent(self):
        policy = GoalConditionedPolicy(4, 2)
        dup = policy.copy()
        dup.weights[0, 0] = 5.0
        assert policy.weights[0, 0] == 0.0
