"""The five figure kinds and their CSV schema requirements.

Every renderer validates its input columns up front (missing columns are
reported by name), refuses empty tables, and writes PNGs with fixed
metadata so re-rendering identical inputs produces identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd


class SchemaError(ValueError):
    """Input CSV does not match the expected schema."""


REQUIRED_COLUMNS = {
    "tradeoff": ["return_greedy", "return_safety"],
    "dynamic": ["epoch", "mean_return"],
    "ablation": ["epoch", "mean_return"],
    "posterior_heatmap": ["true_index", "candidate_index", "probability"],
    "bias_gap": ["beta", "seed", "supnorm_gap"],
}
FIGURE_KINDS = tuple(REQUIRED_COLUMNS)

_PNG_METADATA = {"Software": "teamplots"}


@dataclass
class FigureSpec:
    kind: str
    inputs: list
    output: str
    labels: list | None = None
    title: str | None = None

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise SchemaError(
                f"unknown figure kind {self.kind!r}; expected one of {FIGURE_KINDS}"
            )
        self.inputs = [str(p) for p in self.inputs]
        if not self.inputs:
            raise SchemaError("figure needs at least one input CSV")
        if self.labels is not None and len(self.labels) != len(self.inputs):
            raise SchemaError(
                f"{len(self.labels)} labels for {len(self.inputs)} inputs"
            )


def read_table(path, kind: str) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input CSV not found: {path}")
    frame = pd.read_csv(path, comment="#")
    missing = [c for c in REQUIRED_COLUMNS[kind] if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path} is missing column(s) {missing} for {kind}")
    if frame.empty:
        raise SchemaError(f"{path} has no data rows")
    return frame


def _labels(spec: FigureSpec) -> list:
    if spec.labels is not None:
        return list(spec.labels)
    return [Path(p).parent.name or Path(p).stem for p in spec.inputs]


def _save(fig, spec: FigureSpec) -> Path:
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)
    return out


def _render_tradeoff(spec: FigureSpec) -> Path:
    points = []
    for path in spec.inputs:
        frame = read_table(path, spec.kind)
        points.append(
            (frame["return_greedy"].mean(), frame["return_safety"].mean())
        )
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    xs, ys = zip(*points)
    ax.plot(xs, ys, color="0.6", lw=1, zorder=1)
    ax.scatter(xs, ys, c=range(len(xs)), cmap="viridis", s=70, zorder=2)
    for (x, y), label in zip(points, _labels(spec)):
        ax.annotate(label, (x, y), textcoords="offset points", xytext=(6, 4), fontsize=8)
    ax.set_xlabel("greedy-component return")
    ax.set_ylabel("safety-component return")
    ax.set_title(spec.title or "Reward-component tradeoff")
    fig.tight_layout()
    return _save(fig, spec)


def _render_dynamic(spec: FigureSpec) -> Path:
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    for path, label in zip(spec.inputs, _labels(spec)):
        frame = read_table(path, spec.kind)
        ax.plot(frame["epoch"], frame["mean_return"], label=label, lw=1.5)
        if "true_0" in frame.columns:
            switches = frame["epoch"][frame["true_0"].diff().abs() > 1e-12]
            for x in switches:
                ax.axvline(x, color="0.8", ls="--", lw=0.8, zorder=0)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean return")
    ax.set_title(spec.title or "Adaptation to changing teammates")
    if len(spec.inputs) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, spec)


def _render_ablation(spec: FigureSpec) -> Path:
    labels = _labels(spec)
    means, spreads = [], []
    for path in spec.inputs:
        frame = read_table(path, spec.kind)
        tail = frame["mean_return"].iloc[len(frame) // 2 :]
        means.append(tail.mean())
        spreads.append(tail.std(ddof=0))
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    xs = np.arange(len(means))
    ax.bar(xs, means, yerr=spreads, capsize=4, color="#4878cf")
    ax.set_xticks(xs, labels, fontsize=9)
    ax.set_ylabel("mean return (second half)")
    ax.set_title(spec.title or "Ablation comparison")
    fig.tight_layout()
    return _save(fig, spec)


def _render_posterior_heatmap(spec: FigureSpec) -> Path:
    frame = read_table(spec.inputs[0], spec.kind)
    matrix = frame.pivot_table(
        index="true_index", columns="candidate_index", values="probability"
    ).sort_index()
    fig, ax = plt.subplots(figsize=(5.5, 5.0))
    im = ax.imshow(matrix.to_numpy(), aspect="auto", cmap="magma", origin="upper")
    ax.set_xlabel("candidate index")
    ax.set_ylabel("true parameter index")
    ax.set_title(spec.title or "Posterior mass per true parameter")
    fig.colorbar(im, ax=ax, label="probability")
    fig.tight_layout()
    return _save(fig, spec)


def _render_bias_gap(spec: FigureSpec) -> Path:
    frame = read_table(spec.inputs[0], spec.kind)
    grouped = frame.groupby("beta")["supnorm_gap"].mean().sort_index()
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.plot(grouped.index, grouped.values, "o-", color="#d65f5f", label="mean over seeds")
    ax.scatter(
        frame["beta"], frame["supnorm_gap"], s=12, color="0.4", alpha=0.6,
        label="individual runs", zorder=0,
    )
    ax.set_xlabel("reward offset")
    ax.set_ylabel("final sup-norm gap to Q*")
    ax.set_title(spec.title or "Bias shifts the learned fixed point")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, spec)


_RENDERERS = {
    "tradeoff": _render_tradeoff,
    "dynamic": _render_dynamic,
    "ablation": _render_ablation,
    "posterior_heatmap": _render_posterior_heatmap,
    "bias_gap": _render_bias_gap,
}


def render(spec: FigureSpec) -> Path:
    """Validate inputs and write the figure; returns the output path.

    All inputs are validated before any file is written, so a schema error
    never leaves a partial image behind.
    """
    for path in spec.inputs:
        read_table(path, spec.kind)
    return _RENDERERS[spec.kind](spec)
