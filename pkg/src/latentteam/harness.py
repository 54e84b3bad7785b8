"""Experiment orchestration: pre-train, deploy, infer, adapt, and score.

Wires the world, reward family, inverse learner, estimators, and policies
into reproducible runs with on-disk artifacts (checkpoint bundle + manifest)
and CSV metric streams. Deployment epochs follow a fixed cadence: one
inference + conditioning update, then a fixed number of evaluation episodes
whose teammate steps feed the observation window for the next epoch.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import (
    ABLATION_MODES,
    KdbilConfig,
    MODE_FIX,
    MODE_FULL,
    MODE_ONLINE,
    ExperimentConfig,
    TeamingConfig,
    config_to_dict,
)
from .env import ConfigError, EnvConfig, ParticleEnv
from .estimation import (
    Debiaser,
    DebiaserConfig,
    debias,
    posterior_mean,
    posterior_summary,
    train_debiaser,
)
from .finite_mdp import (
    LearningSchedule,
    RewardChannel,
    bias_gap_experiment,
    q_learning_run,
    random_mdp,
)
from .inverse import (
    ObservedWindow,
    TrainingDataset,
    build_dataset,
    default_grid_resolution,
    latent_grid,
    posterior_over_grid,
)
from .persist import read_json, sha256_file, write_json
from .policies import (
    EpisodeRecord,
    FixedBehaviorPolicy,
    GoalConditionedPolicy,
    MarlConfig,
    RolloutBatch,
    policy_gradient_step,
    pretrain,
    run_episode,
)
from .rewards import (
    LatentParams,
    RewardConfig,
    STYLE_GREED,
    mix,
    prior_mean_latent,
    style_latent,
)

METRICS_SCHEMA = "metrics.v1"
POSTERIOR_SCHEMA = "posterior.v1"
BIASGAP_SCHEMA = "biasgap.v1"
CONVERGENCE_SCHEMA = "convergence.v1"
SCORE_SCHEMA = "score.v1"
NORMSCORE_SCHEMA = "normscore.v1"

ARTIFACT_FILES = {
    "adaptive_policy": "adaptive_policy.npz",
    "surrogate_policy": "surrogate_policy.npz",
    "dataset": "dataset.npz",
    "debiaser": "debiaser.npz",
}


class HarnessError(RuntimeError):
    """Raised when a run cannot proceed (missing artifacts, bad roles)."""


def write_csv(path, columns, rows, schema: str) -> None:
    """CSV with a leading ``# schema:`` comment line; rows are dicts."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {schema}\n")
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


@dataclass
class MetricsRow:
    epoch: int
    mean_return: float
    component_returns: np.ndarray
    estimate: np.ndarray
    true_latent: np.ndarray | None
    posterior_entropy: float | None
    wall_clock_s: float


def metrics_columns(reward: RewardConfig) -> list:
    cols = ["epoch", "mean_return"]
    cols += [f"return_{name}" for name in reward.component_names]
    cols += [f"est_{i}" for i in range(reward.k)]
    cols += [f"true_{i}" for i in range(reward.k)]
    cols += ["posterior_entropy", "wall_clock_s"]
    return cols


def write_metrics_csv(path, rows, reward: RewardConfig) -> None:
    columns = metrics_columns(reward)
    payload = []
    for r in rows:
        d = {"epoch": r.epoch, "mean_return": f"{r.mean_return:.6f}"}
        for name, value in zip(reward.component_names, r.component_returns):
            d[f"return_{name}"] = f"{value:.6f}"
        for i in range(reward.k):
            d[f"est_{i}"] = f"{r.estimate[i]:.6f}"
            d[f"true_{i}"] = (
                f"{r.true_latent[i]:.6f}" if r.true_latent is not None else ""
            )
        d["posterior_entropy"] = (
            f"{r.posterior_entropy:.6f}" if r.posterior_entropy is not None else ""
        )
        d["wall_clock_s"] = f"{r.wall_clock_s:.4f}"
        payload.append(d)
    write_csv(path, columns, payload, METRICS_SCHEMA)


@dataclass
class PretrainBundle:
    directory: Path
    manifest: dict
    adaptive: GoalConditionedPolicy
    surrogate: GoalConditionedPolicy
    dataset: TrainingDataset
    debiaser: Debiaser | None
    grid: list
    env: EnvConfig
    reward: RewardConfig
    marl: MarlConfig
    kdbil: KdbilConfig


def make_grid(reward: RewardConfig, kdbil: KdbilConfig) -> list:
    resolution = default_grid_resolution(reward.k, reward.kind, kdbil.grid_target)
    return latent_grid(reward.k, reward.kind, resolution)


def collect_probe_components(
    env: ParticleEnv, policy, rng, episodes: int = 4, sample: int = 64
):
    """Fixed probe set: component vectors sampled from surrogate rollouts."""
    from .rewards import sample_latent

    pool = []
    for _ in range(episodes):
        b = sample_latent(env.reward_config.k, env.reward_config.kind, rng)
        data = run_episode(env, [(policy, b)] * env.config.n_prey, b, rng)
        pool.append(data["components"].reshape(-1, env.reward_config.k))
    pool = np.concatenate(pool)
    idx = rng.choice(len(pool), size=min(sample, len(pool)), replace=False)
    return pool[idx]


def collect_debiaser_pairs(
    surrogate: GoalConditionedPolicy,
    env: ParticleEnv,
    dataset: TrainingDataset,
    grid,
    kdbil: KdbilConfig,
    n_pairs: int,
    rng: np.random.Generator,
):
    """(posterior summary, true latent) pairs from fresh surrogate windows."""
    from .inverse import collect_behavior_pairs
    from .rewards import sample_latent

    pairs = []
    for _ in range(n_pairs):
        b = sample_latent(env.reward_config.k, env.reward_config.kind, rng)
        window = ObservedWindow(kdbil.window_capacity)
        window.extend(
            collect_behavior_pairs(
                surrogate,
                env,
                b,
                kdbil.window_capacity,
                rng,
                kdbil.burn_in,
                kdbil.window_cap_per_episode,
            )
        )
        post = posterior_over_grid(dataset, window, grid, None, kdbil.bandwidths)
        pairs.append((posterior_summary(post), b))
    return pairs


def run_pretrain(cfg: ExperimentConfig) -> Path:
    """Full pre-training stage; returns the manifest path.

    Artifacts: both role policies, the demonstration dataset built from the
    trained surrogate over the candidate grid, the fitted debiaser, and a
    manifest with config + content hashes.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    grid = make_grid(cfg.reward, cfg.kdbil)

    result = pretrain(
        cfg.env,
        cfg.reward,
        cfg.marl,
        rng,
        bandwidths=cfg.kdbil.bandwidths,
        grid=grid,
        window_capacity=cfg.kdbil.window_capacity,
    )

    demo_env = ParticleEnv(
        replace(cfg.env, episode_length=cfg.kdbil.collect_steps), cfg.reward
    )
    dataset = build_dataset(
        result.surrogate,
        demo_env,
        grid,
        cfg.kdbil.demos_per_latent,
        rng,
        cfg.kdbil.burn_in,
        cfg.kdbil.demo_cap_per_episode,
    )

    pairs = list(result.debiaser_pairs)
    topup = max(0, cfg.marl.pair_topup - len(pairs))
    pairs += collect_debiaser_pairs(
        result.surrogate, demo_env, dataset, grid, cfg.kdbil, topup, rng
    )
    probes = collect_probe_components(demo_env, result.surrogate, rng)
    debiaser = train_debiaser(
        pairs,
        DebiaserConfig(reward=cfg.reward, probe_components=probes, seed=cfg.seed),
    )

    result.adaptive.save(out / ARTIFACT_FILES["adaptive_policy"], cfg.reward, cfg.seed)
    result.surrogate.save(
        out / ARTIFACT_FILES["surrogate_policy"], cfg.reward, cfg.seed
    )
    dataset.save(out / ARTIFACT_FILES["dataset"])
    debiaser.save(out / ARTIFACT_FILES["debiaser"])

    manifest = {
        "format": "bundle.v1",
        "seed": cfg.seed,
        "config": config_to_dict(cfg),
        "grid_resolution": default_grid_resolution(
            cfg.reward.k, cfg.reward.kind, cfg.kdbil.grid_target
        ),
        "n_debiaser_pairs": len(pairs),
        "history": result.history,
        "artifacts": {
            name: {"file": fname, "sha256": sha256_file(out / fname)}
            for name, fname in ARTIFACT_FILES.items()
        },
    }
    manifest_path = out / "manifest.json"
    write_json(manifest_path, manifest)
    return manifest_path


def load_pretrain_bundle(path) -> PretrainBundle:
    """Load a bundle from its directory or manifest path."""
    path = Path(path)
    manifest_path = path / "manifest.json" if path.is_dir() else path
    if not manifest_path.exists():
        raise HarnessError(f"bundle manifest not found: {manifest_path}")
    manifest = read_json(manifest_path)
    if manifest.get("format") != "bundle.v1":
        raise HarnessError(f"unrecognized bundle format in {manifest_path}")
    directory = manifest_path.parent
    for name, entry in manifest["artifacts"].items():
        artifact = directory / entry["file"]
        if not artifact.exists():
            raise HarnessError(f"bundle artifact missing: {artifact}")
    from .config import config_from_dict

    cfg = config_from_dict(manifest["config"])
    adaptive, _ = GoalConditionedPolicy.load(
        directory / manifest["artifacts"]["adaptive_policy"]["file"]
    )
    surrogate, _ = GoalConditionedPolicy.load(
        directory / manifest["artifacts"]["surrogate_policy"]["file"]
    )
    dataset = TrainingDataset.load(
        directory / manifest["artifacts"]["dataset"]["file"]
    )
    debiaser = Debiaser.load(directory / manifest["artifacts"]["debiaser"]["file"])
    grid = latent_grid(cfg.reward.k, cfg.reward.kind, manifest["grid_resolution"])
    return PretrainBundle(
        directory,
        manifest,
        adaptive,
        surrogate,
        dataset,
        debiaser,
        grid,
        cfg.env,
        cfg.reward,
        cfg.marl,
        cfg.kdbil,
    )


def check_reward_family(bundle: PretrainBundle, reward: RewardConfig) -> None:
    if bundle.reward != reward:
        raise HarnessError(
            "reward-family mismatch between bundle and config: "
            f"bundle={bundle.reward}, config={reward}"
        )


def resolve_unknown(spec: str, bundle: PretrainBundle) -> FixedBehaviorPolicy:
    """Unknown-agent spec: a named style, or a policy checkpoint path whose
    metadata carries a ``latent`` entry."""
    if spec in STYLE_GREED:
        return FixedBehaviorPolicy(
            bundle.surrogate, style_latent(spec, bundle.reward), spec
        )
    path = Path(spec)
    if path.exists():
        policy, meta = GoalConditionedPolicy.load(path)
        if "latent" not in meta:
            raise HarnessError(
                f"checkpoint {path} has no 'latent' metadata; cannot fix its style"
            )
        latent = LatentParams(np.asarray(meta["latent"], dtype=float), bundle.reward.kind)
        return FixedBehaviorPolicy(policy, latent, path.stem)
    raise HarnessError(
        f"cannot resolve unknown-agent spec {spec!r}: not a style name or checkpoint path"
    )


def _active_unknown(teaming: TeamingConfig, epoch: int, dynamic: bool) -> str:
    if not dynamic:
        return teaming.unknown
    segment = epoch // teaming.dynamic_period
    return teaming.dynamic_styles[segment % len(teaming.dynamic_styles)]


def teaming_run(
    bundle: PretrainBundle,
    teaming: TeamingConfig,
    kdbil: KdbilConfig,
    rng: np.random.Generator,
    mode: str = MODE_FULL,
    dynamic: bool = False,
    epochs: int | None = None,
) -> list:
    """Deployment loop shared by teaming, dynamic, ablation, and score cells.

    Per epoch: estimate the teammates' latent from the window (prior mean
    while empty), condition, run the evaluation episodes (scored under the
    teammates' true latent) while pushing their steps into the window. The
    loaded policies are never updated; the online ablation fine-tunes a
    private copy against the inferred reward instead of re-conditioning.
    """
    if mode not in ABLATION_MODES:
        raise HarnessError(f"unknown mode {mode!r}; expected one of {ABLATION_MODES}")
    if bundle.marl.n_surrogate < 1:
        raise HarnessError("no unknown agents configured; nothing to infer")
    reward = bundle.reward
    env = ParticleEnv(
        replace(bundle.env, episode_length=teaming.epoch_steps), reward
    )
    n_adaptive = bundle.marl.n_adaptive
    unknown_idx = tuple(range(n_adaptive, bundle.env.n_prey))
    window = ObservedWindow(kdbil.window_capacity)
    bw = kdbil.bandwidths
    online_policy = bundle.adaptive.copy() if mode == MODE_ONLINE else None
    epochs = teaming.epochs if epochs is None else epochs

    rows = []
    unknown_name = None
    unknown = None
    for epoch in range(epochs):
        t0 = time.perf_counter()
        name = _active_unknown(teaming, epoch, dynamic)
        if name != unknown_name:
            unknown = resolve_unknown(name, bundle)
            unknown_name = name
        b_true = unknown.latent

        entropy = None
        if mode == MODE_FIX:
            estimate_latent = style_latent(teaming.fixed_style, reward)
        elif len(window) == 0:
            estimate_latent = prior_mean_latent(reward)
            entropy = float(np.log(len(bundle.grid)))
        else:
            post = posterior_over_grid(bundle.dataset, window, bundle.grid, None, bw)
            entropy = post.entropy()
            if bundle.debiaser is not None:
                estimate_latent = debias(bundle.debiaser, post)
            else:
                estimate_latent = posterior_mean(post)

        if mode == MODE_FULL:
            condition = estimate_latent
            policy = bundle.adaptive
        elif mode == MODE_FIX:
            condition = style_latent(teaming.fixed_style, reward)
            policy = bundle.adaptive
        else:
            condition = style_latent(teaming.fixed_style, reward)
            policy = online_policy

        controllers = [(policy, condition)] * n_adaptive + [
            (unknown.policy, unknown.latent)
        ] * len(unknown_idx)
        returns = []
        comp_totals = np.zeros(reward.k)
        episode_data = []
        for _ in range(teaming.episodes_per_epoch):
            data = run_episode(
                env,
                controllers,
                b_true,
                rng,
                window=window,
                window_indices=unknown_idx,
                window_burn_in=min(kdbil.burn_in, teaming.epoch_steps - 1),
            )
            returns.append(float(data["rewards"].sum()))
            comp_totals += data["components"].mean(axis=1).sum(axis=0)
            if mode == MODE_ONLINE:
                episode_data.append(data)

        if mode == MODE_ONLINE and teaming.online_updates_per_epoch > 0 and n_adaptive:
            records = []
            for data in episode_data:
                remixed = np.array(
                    [
                        np.mean(
                            [
                                mix(reward, estimate_latent, data["components"][t, i])
                                for i in range(bundle.env.n_prey)
                            ]
                        )
                        for t in range(teaming.epoch_steps)
                    ]
                )
                records.append(
                    EpisodeRecord(
                        data["observations"][:, :n_adaptive],
                        data["actions"][:, :n_adaptive],
                        remixed,
                        condition,
                    )
                )
            batch = RolloutBatch(records, bundle.marl.gamma)
            for _ in range(teaming.online_updates_per_epoch):
                policy_gradient_step(
                    online_policy, batch, teaming.online_learning_rate
                )

        rows.append(
            MetricsRow(
                epoch=epoch,
                mean_return=float(np.mean(returns)),
                component_returns=comp_totals / teaming.episodes_per_epoch,
                estimate=estimate_latent.values.copy(),
                true_latent=b_true.values.copy(),
                posterior_entropy=entropy,
                wall_clock_s=time.perf_counter() - t0,
            )
        )
    return rows


def run_teaming(cfg: ExperimentConfig, dynamic: bool = False, mode: str = MODE_FULL) -> list:
    """Deployment experiment; writes metrics.csv under the output directory."""
    if cfg.bundle is None:
        raise HarnessError("teaming requires a bundle path in the config")
    bundle = load_pretrain_bundle(cfg.bundle)
    check_reward_family(bundle, cfg.reward)
    rng = np.random.default_rng(cfg.seed)
    rows = teaming_run(bundle, cfg.teaming, cfg.kdbil, rng, mode=mode, dynamic=dynamic)
    out = Path(cfg.out_dir)
    write_metrics_csv(out / "metrics.csv", rows, cfg.reward)
    return rows


def run_ablation(cfg: ExperimentConfig, mode: str) -> list:
    """Teaming with one design element removed; same metric schema."""
    if mode not in ABLATION_MODES:
        raise HarnessError(f"unknown ablation mode {mode!r}")
    return run_teaming(cfg, dynamic=False, mode=mode)


def normalized_score(table) -> np.ndarray:
    """Per-column scores: row entries scaled to 100 x entry / row max, then
    column-averaged and rounded to one decimal."""
    t = np.asarray(table, dtype=float)
    if t.ndim != 2 or t.size == 0:
        raise ConfigError(f"score table must be 2-D and non-empty, got shape {t.shape}")
    row_max = t.max(axis=1)
    if np.any(row_max <= 0):
        bad = int(np.argmax(row_max <= 0))
        raise ConfigError(
            f"row {bad} has non-positive maximum {row_max[bad]}; ratio-to-best undefined"
        )
    scores = 100.0 * t / row_max[:, None]
    return np.round(scores.mean(axis=0), 1)


def run_score_matrix(
    cfg: ExperimentConfig, unknown_specs, collaborator_specs
) -> tuple[np.ndarray, np.ndarray | None]:
    """Cross-product teaming evaluation with per-cell seeds.

    Collaborator specs are either ``adaptive`` (inference + conditioning) or
    a fixed style name. Cell score is the mean return over the second half
    of a short teaming run. Returns the raw table and, when every row has a
    positive maximum, the normalized per-column scores.
    """
    if cfg.bundle is None:
        raise HarnessError("score matrix requires a bundle path in the config")
    unknown_specs = list(unknown_specs)
    collaborator_specs = list(collaborator_specs)
    if not unknown_specs or not collaborator_specs:
        raise HarnessError("score matrix needs at least one row and one column")
    bundle = load_pretrain_bundle(cfg.bundle)
    check_reward_family(bundle, cfg.reward)
    table = np.zeros((len(unknown_specs), len(collaborator_specs)))
    rows_csv = []
    for r, unknown in enumerate(unknown_specs):
        for c, collaborator in enumerate(collaborator_specs):
            seed_seq = np.random.SeedSequence((cfg.seed, r, c))
            rng = np.random.default_rng(seed_seq)
            if collaborator == "adaptive":
                mode, fixed = MODE_FULL, cfg.teaming.fixed_style
            elif collaborator in STYLE_GREED:
                mode, fixed = MODE_FIX, collaborator
            else:
                raise HarnessError(
                    f"unknown collaborator spec {collaborator!r}; "
                    "expected 'adaptive' or a style name"
                )
            teaming = replace(
                cfg.teaming,
                unknown=unknown,
                fixed_style=fixed,
                epochs=cfg.teaming.cell_epochs,
            )
            cell_rows = teaming_run(bundle, teaming, cfg.kdbil, rng, mode=mode)
            half = len(cell_rows) // 2
            score = float(np.mean([row.mean_return for row in cell_rows[half:]]))
            table[r, c] = score
            rows_csv.append(
                {
                    "unknown": unknown,
                    "collaborator": collaborator,
                    "mean_return": f"{score:.6f}",
                }
            )
    out = Path(cfg.out_dir)
    write_csv(
        out / "score.csv",
        ["unknown", "collaborator", "mean_return"],
        rows_csv,
        SCORE_SCHEMA,
    )
    normalized = None
    if np.all(table.max(axis=1) > 0):
        normalized = normalized_score(table)
        write_csv(
            out / "score_normalized.csv",
            ["collaborator", "score"],
            [
                {"collaborator": spec, "score": f"{val:.1f}"}
                for spec, val in zip(collaborator_specs, normalized)
            ],
            NORMSCORE_SCHEMA,
        )
    return table, normalized


def posterior_sweep(
    bundle: PretrainBundle,
    rng: np.random.Generator,
    row_indices=None,
    pairs_per_row: int = 300,
    windows_per_row: int = 8,
) -> list:
    """Averaged posterior per true grid candidate from surrogate windows.

    Each heatmap row is the mean of ``windows_per_row`` repeated inferences
    (fresh n-pair windows each), the repeated-experiment analogue of one
    noisy window. Returns (true_index, probabilities) pairs.
    """
    from .inverse import collect_behavior_pairs

    env = ParticleEnv(
        replace(bundle.env, episode_length=bundle.kdbil.collect_steps),
        bundle.reward,
    )
    grid = bundle.grid
    if row_indices is None:
        row_indices = range(len(grid))
    results = []
    for ri in row_indices:
        b = grid[ri]
        probs = np.zeros(len(grid))
        for _ in range(windows_per_row):
            window = ObservedWindow(pairs_per_row)
            window.extend(
                collect_behavior_pairs(
                    bundle.surrogate,
                    env,
                    b,
                    pairs_per_row,
                    rng,
                    bundle.kdbil.burn_in,
                    bundle.kdbil.window_cap_per_episode,
                )
            )
            post = posterior_over_grid(
                bundle.dataset, window, grid, None, bundle.kdbil.bandwidths
            )
            probs += post.probabilities
        results.append((int(ri), probs / windows_per_row))
    return results


def write_posterior_csv(path, sweep, grid) -> None:
    """Sweep rows to CSV; ``sweep`` holds (true_index, probability vector)."""
    k = grid[0].k
    columns = (
        ["true_index", "candidate_index", "probability"]
        + [f"true_{i}" for i in range(k)]
        + [f"cand_{i}" for i in range(k)]
    )
    rows = []
    for true_index, probs in sweep:
        true_vals = grid[true_index].values if true_index >= 0 else None
        for ci, (cand, p) in enumerate(zip(grid, probs)):
            row = {
                "true_index": true_index,
                "candidate_index": ci,
                "probability": f"{p:.10e}",
            }
            for i in range(k):
                row[f"true_{i}"] = (
                    f"{true_vals[i]:.6f}" if true_vals is not None else ""
                )
                row[f"cand_{i}"] = f"{cand.values[i]:.6f}"
            rows.append(row)
    write_csv(path, columns, rows, POSTERIOR_SCHEMA)


def run_theorem(cfg: ExperimentConfig) -> dict:
    """Convergence-lab stage: noisy-channel convergence runs per seed plus
    the offset sweep; writes convergence.csv, biasgap.csv, and a summary."""
    t = cfg.theorem
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mdp = random_mdp(
        t.n_states, t.n_actions, np.random.default_rng(t.mdp_seed), t.gamma
    )
    schedule = LearningSchedule(t.omega)
    channel = RewardChannel.unbiased(t.noise_half_width)
    convergence_rows = []
    final_gaps = []
    for i in range(t.n_seeds):
        seed = cfg.seed + i
        result = q_learning_run(
            mdp,
            channel,
            schedule,
            t.steps,
            np.random.default_rng(seed),
            epsilon=t.epsilon,
            record_every=t.record_every,
            stop_below=t.stop_below,
        )
        final_gaps.append(result.final_gap)
        for step, gap in result.trace:
            convergence_rows.append(
                {"seed": seed, "step": step, "gap": f"{gap:.6f}"}
            )
    write_csv(
        out / "convergence.csv",
        ["seed", "step", "gap"],
        convergence_rows,
        CONVERGENCE_SCHEMA,
    )
    report = bias_gap_experiment(
        mdp,
        t.betas,
        t.bias_steps,
        [cfg.seed + i for i in range(min(3, t.n_seeds))],
        schedule=schedule,
        epsilon=t.epsilon,
    )
    write_csv(
        out / "biasgap.csv",
        ["beta", "seed", "steps", "supnorm_gap"],
        [
            {
                "beta": f"{row['beta']:.4f}",
                "seed": row["seed"],
                "steps": row["steps"],
                "supnorm_gap": f"{row['supnorm_gap']:.6f}",
            }
            for row in report.rows
        ],
        BIASGAP_SCHEMA,
    )
    summary = {
        "final_gaps": final_gaps,
        "converged": sum(g < 0.05 for g in final_gaps),
        "mean_gaps_by_beta": {str(k): v for k, v in report.mean_gaps.items()},
    }
    write_json(out / "theorem_summary.json", summary)
    return summary
