import json
from pathlib import Path

import numpy as np
import pytest

from latentteam.config import (
    ExperimentConfig,
    KdbilConfig,
    TeamingConfig,
    config_from_dict,
    config_to_dict,
    load_config,
)
from latentteam.env import ConfigError, EnvConfig
from latentteam.harness import (
    HarnessError,
    MetricsRow,
    load_pretrain_bundle,
    metrics_columns,
    normalized_score,
    write_csv,
    write_metrics_csv,
)
from latentteam.persist import load_bundle, save_bundle, sha256_file
from latentteam.rewards import RewardConfig


class TestNormalizedScore:
    def test_row_best_column_scores_100(self):
        table = np.array([[2.0, 1.0], [4.0, 3.0]])
        assert normalized_score(table)[0] == 100.0

    def test_single_row_ratio(self):
        assert np.array_equal(normalized_score([[2.0, 1.0]]), [100.0, 50.0])

    def test_row_scale_invariance(self):
        rng = np.random.default_rng(0)
        table = rng.uniform(0.5, 3.0, size=(4, 3))
        scaled = table * rng.uniform(0.5, 10.0, size=(4, 1))
        assert np.array_equal(normalized_score(table), normalized_score(scaled))

    def test_nonpositive_row_max_rejected(self):
        with pytest.raises(ConfigError):
            normalized_score([[1.0, 2.0], [-1.0, -2.0]])

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            normalized_score(np.zeros((0, 3)))


class TestPersist:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "x.npz"
        save_bundle(path, {"a": 1, "name": "zed"}, {"w": np.arange(6).reshape(2, 3)})
        meta, arrays = load_bundle(path)
        assert meta == {"a": 1, "name": "zed"}
        assert np.array_equal(arrays["w"], np.arange(6).reshape(2, 3))

    def test_byte_identical_rewrites(self, tmp_path):
        p1, p2 = tmp_path / "a.npz", tmp_path / "b.npz"
        payload = {"w": np.linspace(0, 1, 7), "z": np.eye(3)}
        save_bundle(p1, {"v": 2}, payload)
        save_bundle(p2, {"v": 2}, payload)
        assert sha256_file(p1) == sha256_file(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_reserved_name_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            save_bundle(tmp_path / "x.npz", {}, {"__meta__": np.zeros(2)})


class TestConfig:
    def test_yaml_round_trip(self, tmp_path):
        cfg_path = tmp_path / "exp.yaml"
        cfg_path.write_text(
            """
kind: teaming
seed: 11
out_dir: runs/demo
bundle: runs/pre
env: {n_prey: 3, n_predators: 2, map_size: 300.0}
reward: {k: 2, kind: linear}
marl: {episodes: 400, n_adaptive: 2, n_surrogate: 1}
kdbil: {h: 0.03, h_prime: 0.03, window_capacity: 300}
teaming: {epochs: 12, unknown: greediest}
"""
        )
        cfg = load_config(cfg_path)
        assert cfg.kind == "teaming"
        assert cfg.env.n_predators == 2
        assert cfg.teaming.unknown == "greediest"
        back = config_from_dict(config_to_dict(cfg))
        assert back == cfg

    def test_unknown_key_rejected(self, tmp_path):
        cfg_path = tmp_path / "bad.yaml"
        cfg_path.write_text("kind: pretrain\nenv: {n_pray: 3}\n")
        with pytest.raises(ConfigError) as err:
            load_config(cfg_path)
        assert "n_pray" in str(err.value)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"kind": "fly"})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.yaml")

    def test_bad_style_rejected(self):
        with pytest.raises(ConfigError):
            TeamingConfig(unknown="balanced", fixed_style="bold")

    def test_kdbil_validation(self):
        with pytest.raises(ConfigError):
            KdbilConfig(h=-0.1)


class TestMetricsCsv:
    def test_schema_line_and_columns(self, tmp_path):
        reward = RewardConfig(k=2)
        rows = [
            MetricsRow(
                epoch=i,
                mean_return=-1.5 + i,
                component_returns=np.array([-1.0, -0.5]),
                estimate=np.array([0.4, 0.6]),
                true_latent=np.array([0.5, 0.5]),
                posterior_entropy=1.1,
                wall_clock_s=0.01,
            )
            for i in range(3)
        ]
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, rows, reward)
        lines = path.read_text().splitlines()
        assert lines[0] == "# schema: metrics.v1"
        assert lines[1].split(",") == metrics_columns(reward)
        assert len(lines) == 5
        epochs = [int(line.split(",")[0]) for line in lines[2:]]
        assert epochs == sorted(epochs)

    def test_missing_fields_written_blank(self, tmp_path):
        reward = RewardConfig(k=2)
        rows = [
            MetricsRow(0, -1.0, np.array([-1.0, 0.0]), np.array([0.5, 0.5]), None, None, 0.0)
        ]
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, rows, reward)
        data_line = path.read_text().splitlines()[2].split(",")
        cols = metrics_columns(reward)
        assert data_line[cols.index("true_0")] == ""
        assert data_line[cols.index("posterior_entropy")] == ""


class TestBundleLoading:
    def test_missing_manifest(self, tmp_path):
        with pytest.raises(HarnessError):
            load_pretrain_bundle(tmp_path)

    def test_missing_artifact(self, tmp_path):
        manifest = {
            "format": "bundle.v1",
            "artifacts": {"adaptive_policy": {"file": "gone.npz", "sha256": "0"}},
            "config": config_to_dict(ExperimentConfig()),
            "grid_resolution": 25,
        }
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(HarnessError) as err:
            load_pretrain_bundle(tmp_path)
        assert "gone.npz" in str(err.value)
