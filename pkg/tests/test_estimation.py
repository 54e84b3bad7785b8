import numpy as np
import pytest

from latentteam.env import ConfigError
from latentteam.estimation import (
    Debiaser,
    DebiaserConfig,
    debias,
    estimate,
    map_estimate,
    posterior_mean,
    posterior_std,
    posterior_summary,
    train_debiaser,
)
from latentteam.inverse import Posterior
from latentteam.rewards import LINEAR, LatentParams, RewardConfig, mix_at


def grid_posterior(values, probs, kind=LINEAR):
    candidates = [LatentParams(np.asarray(v, dtype=float), kind) for v in values]
    log_w = np.log(np.asarray(probs, dtype=float))
    return Posterior(candidates, log_w)


class TestMapEstimate:
    def test_point_mass(self):
        post = grid_posterior([[1.0, 0.0], [0.0, 1.0]], [1e-30, 1.0])
        assert np.array_equal(map_estimate(post).values, [0.0, 1.0])

    def test_argmax(self):
        post = grid_posterior(
            [[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]], [0.2, 0.5, 0.3]
        )
        assert np.array_equal(map_estimate(post).values, [0.5, 0.5])

    def test_tie_takes_first(self):
        post = grid_posterior([[1.0, 0.0], [0.0, 1.0]], [0.5, 0.5])
        assert np.array_equal(map_estimate(post).values, [1.0, 0.0])


class TestPosteriorMean:
    def test_symmetric_pair(self):
        post = grid_posterior([[0.2, 0.8], [0.8, 0.2]], [0.5, 0.5])
        assert np.allclose(posterior_mean(post).values, [0.5, 0.5])

    def test_point_mass(self):
        post = grid_posterior([[0.3, 0.7], [0.9, 0.1]], [1.0, 1e-30])
        assert np.allclose(posterior_mean(post).values, [0.3, 0.7])

    def test_weighted_average(self):
        # mass 0.25 on (0, 1) and 0.75 on (1, 0): first coordinate mean 0.75
        post = grid_posterior([[0.0, 1.0], [1.0, 0.0]], [0.25, 0.75])
        assert np.allclose(posterior_mean(post).values, [0.75, 0.25])

    def test_stays_on_simplex(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            vals = rng.uniform(size=(6, 3))
            vals /= vals.sum(axis=1, keepdims=True)
            probs = rng.uniform(size=6)
            probs /= probs.sum()
            mean = posterior_mean(grid_posterior(vals, probs))
            assert mean.values.sum() == pytest.approx(1.0)
            assert np.all(mean.values >= 0.0)

    def test_map_and_mean_differ_on_skewed_posterior(self):
        post = grid_posterior(
            [[1.0, 0.0], [0.6, 0.4], [0.0, 1.0]], [0.5, 0.1, 0.4]
        )
        assert not np.allclose(map_estimate(post).values, posterior_mean(post).values)


class TestSummary:
    def test_moments(self):
        post = grid_posterior([[0.0, 1.0], [1.0, 0.0]], [0.5, 0.5])
        summary = posterior_summary(post)
        assert np.allclose(summary[:2], [0.5, 0.5])
        assert np.allclose(summary[2:], [0.5, 0.5])  # Bernoulli(.5) std
        assert np.allclose(posterior_std(post), [0.5, 0.5])

    def test_point_mass_zero_std(self):
        post = grid_posterior([[0.3, 0.7], [0.9, 0.1]], [1.0, 1e-300])
        assert np.allclose(posterior_std(post), [0.0, 0.0], atol=1e-6)


class TestDebiaser:
    def test_identity_at_init(self):
        post = grid_posterior([[0.2, 0.8], [0.6, 0.4]], [0.3, 0.7])
        d = Debiaser(2, LINEAR, seed=1)
        assert np.allclose(
            debias(d, post).values, posterior_mean(post).values, atol=1e-12
        )

    def test_deterministic(self):
        post = grid_posterior([[0.2, 0.8], [0.6, 0.4]], [0.3, 0.7])
        d = Debiaser(2, LINEAR, seed=1)
        d.w2 = np.random.default_rng(3).normal(size=d.w2.shape) * 0.1
        v1 = debias(d, post).values
        v2 = debias(d, post).values
        assert np.array_equal(v1, v2)

    def test_output_in_domain(self):
        rng = np.random.default_rng(4)
        d = Debiaser(2, LINEAR, seed=2)
        d.w2 = rng.normal(size=d.w2.shape)  # force the output off the simplex
        d.b2 = rng.normal(size=2) * 3.0
        for _ in range(20):
            vals = rng.uniform(size=(4, 2))
            vals /= vals.sum(axis=1, keepdims=True)
            probs = rng.uniform(size=4)
            probs /= probs.sum()
            out = debias(d, grid_posterior(vals, probs))
            assert np.all(out.values >= 0.0)
            assert out.values.sum() == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        post = grid_posterior([[0.2, 0.8], [0.6, 0.4]], [0.3, 0.7])
        with pytest.raises(ConfigError):
            debias(Debiaser(3, LINEAR), post)

    def test_save_load_round_trip(self, tmp_path):
        d = Debiaser(2, LINEAR, seed=5)
        d.w2 = np.random.default_rng(6).normal(size=d.w2.shape)
        d.history = [1.0, 0.5]
        path = tmp_path / "deb.npz"
        d.save(path)
        back = Debiaser.load(path)
        assert np.array_equal(back.w1, d.w1)
        assert np.array_equal(back.w2, d.w2)
        assert back.kind == d.kind and back.k == d.k
        assert back.history == d.history


def biased_pairs(n, rng, delta, noise=0.05):
    """Summaries whose mean half carries a constant additive bias delta."""
    pairs = []
    for _ in range(n):
        raw = rng.uniform(0.1, 0.9, size=2)
        true = raw / raw.sum()
        mean = true + delta + noise * rng.normal(size=2)
        std = np.full(2, 0.08)
        pairs.append((np.concatenate([mean, std]), LatentParams(true)))
    return pairs


def mean_reward_bias(estimates, truths, probes, cfg):
    gaps = [
        mix_at(cfg, est, c) - mix_at(cfg, truth, c)
        for est, truth in zip(estimates, truths)
        for c in probes
    ]
    return float(np.mean(gaps))


class TestTrainDebiaser:
    CFG = RewardConfig(k=2)

    def _probes(self, rng, n=32):
        return -rng.uniform(0.0, 3.0, size=(n, 2))

    def test_too_few_pairs(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ConfigError):
            train_debiaser(
                biased_pairs(50, rng, np.zeros(2)),
                DebiaserConfig(self.CFG, self._probes(rng)),
            )

    def test_zero_residual_pairs_stay_near_zero_loss(self):
        rng = np.random.default_rng(1)
        pairs = biased_pairs(150, rng, np.zeros(2), noise=0.0)
        d = train_debiaser(
            pairs, DebiaserConfig(self.CFG, self._probes(rng), epochs=50)
        )
        assert d.history[0] == pytest.approx(0.0, abs=1e-12)
        assert d.history[-1] <= d.history[0] + 1e-12

    def test_constant_bias_reduced_fivefold(self):
        rng = np.random.default_rng(2)
        delta = np.array([0.2, 0.1])
        train_pairs = biased_pairs(400, rng, delta)
        probes = self._probes(rng)
        d = train_debiaser(
            train_pairs,
            DebiaserConfig(self.CFG, probes, learning_rate=0.2, epochs=400),
        )
        eval_pairs = biased_pairs(400, rng, delta)
        raw = [s[:2] for s, _ in eval_pairs]
        corrected = [d.forward_raw(s) for s, _ in eval_pairs]
        truths = [t.values for _, t in eval_pairs]
        raw_bias = mean_reward_bias(raw, truths, probes, self.CFG)
        net_bias = mean_reward_bias(corrected, truths, probes, self.CFG)
        assert abs(net_bias) <= abs(raw_bias) / 5.0

    def test_final_loss_never_exceeds_initial(self):
        rng = np.random.default_rng(3)
        pairs = biased_pairs(200, rng, np.array([0.1, -0.1]))
        d = train_debiaser(
            pairs, DebiaserConfig(self.CFG, self._probes(rng), epochs=100)
        )
        assert d.history[-1] <= d.history[0]
        assert all(b <= a + 1e-12 for a, b in zip(d.history, d.history[1:]))

    def test_holdout_loss_decreases(self):
        rng = np.random.default_rng(4)
        delta = np.array([0.12, -0.12])
        train_pairs = biased_pairs(300, rng, delta)
        holdout = biased_pairs(150, rng, delta)
        probes = self._probes(rng)
        summaries = np.stack([s for s, _ in holdout])
        truths = [t.values for _, t in holdout]

        def holdout_loss(reg):
            ests = [reg.forward_raw(s) for s in summaries]
            gaps = [
                mix_at(self.CFG, e, c) - mix_at(self.CFG, t, c)
                for e, t in zip(ests, truths)
                for c in probes
            ]
            return float(np.mean(np.square(gaps)))

        untrained = Debiaser(2, LINEAR, seed=0)
        trained = train_debiaser(
            train_pairs,
            DebiaserConfig(self.CFG, probes, learning_rate=0.2, epochs=300, seed=0),
        )
        assert holdout_loss(trained) < holdout_loss(untrained)


class TestEstimateReport:
    def test_bundles_everything(self):
        post = grid_posterior([[0.2, 0.8], [0.8, 0.2]], [0.25, 0.75])
        report = estimate(post, Debiaser(2, LINEAR))
        assert np.array_equal(report.map_estimate.values, [0.8, 0.2])
        assert np.allclose(report.posterior_mean.values, [0.65, 0.35])
        assert np.allclose(report.debiased.values, report.posterior_mean.values)
        expected_entropy = -(0.25 * np.log(0.25) + 0.75 * np.log(0.75))
        assert report.posterior_entropy == pytest.approx(expected_entropy)
