"""Command-line entry point.

Subcommands cover the three deployment stages plus the study runners:
pretrain, team, dynamic, ablate, theorem1, score, export-posterior. Every
command takes --config (YAML) with optional --seed / --out-dir overrides
and exits non-zero with a stage-tagged message on failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .config import ABLATION_MODES, load_config


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out_dir is not None:
        cfg = replace(cfg, out_dir=args.out_dir)
    if getattr(args, "bundle", None) is not None:
        cfg = replace(cfg, bundle=args.bundle)
    return cfg


def _cmd_pretrain(args):
    manifest = harness.run_pretrain(_load(args))
    print(f"wrote bundle manifest: {manifest}")


def _cmd_team(args):
    cfg = _load(args)
    rows = harness.run_teaming(cfg)
    print(f"wrote {len(rows)} metric rows to {Path(cfg.out_dir) / 'metrics.csv'}")


def _cmd_dynamic(args):
    cfg = _load(args)
    rows = harness.run_teaming(cfg, dynamic=True)
    print(f"wrote {len(rows)} metric rows to {Path(cfg.out_dir) / 'metrics.csv'}")


def _cmd_ablate(args):
    cfg = _load(args)
    rows = harness.run_ablation(cfg, args.mode)
    print(
        f"mode={args.mode}: wrote {len(rows)} metric rows to "
        f"{Path(cfg.out_dir) / 'metrics.csv'}"
    )


def _cmd_theorem1(args):
    cfg = _load(args)
    summary = harness.run_theorem(cfg)
    print(
        f"{summary['converged']}/{len(summary['final_gaps'])} seeds converged; "
        f"mean gaps by offset: {summary['mean_gaps_by_beta']}"
    )


def _cmd_score(args):
    cfg = _load(args)
    unknowns = args.unknowns.split(",")
    collaborators = args.collaborators.split(",")
    table, normalized = harness.run_score_matrix(cfg, unknowns, collaborators)
    print(f"score table ({table.shape[0]}x{table.shape[1]}) written to {cfg.out_dir}")
    if normalized is not None:
        for spec, val in zip(collaborators, normalized):
            print(f"  {spec}: {val:.1f}")
    else:
        print("  normalized scores unavailable (a row maximum is not positive)")


def _cmd_export_posterior(args):
    cfg = _load(args)
    bundle = harness.load_pretrain_bundle(cfg.bundle)
    rng = np.random.default_rng(cfg.seed)
    rows = None if args.rows is None else range(0, len(bundle.grid), max(1, len(bundle.grid) // args.rows))
    sweep = harness.posterior_sweep(
        bundle, rng, row_indices=rows, pairs_per_row=args.pairs,
        windows_per_row=args.windows,
    )
    out = Path(cfg.out_dir) / "posterior.csv"
    harness.write_posterior_csv(out, sweep, bundle.grid)
    print(f"wrote posterior sweep ({len(sweep)} rows) to {out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentteam",
        description="Pre-train, deploy, and study adaptive teammates with latent rewards.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, bundle=False):
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default=None)
        if bundle:
            p.add_argument("--bundle", default=None, help="pretrain bundle dir/manifest")

    p = sub.add_parser("pretrain", help="train policies, dataset, and debiaser")
    common(p)
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("team", help="zero-shot teaming against an unknown agent")
    common(p, bundle=True)
    p.set_defaults(func=_cmd_team)

    p = sub.add_parser("dynamic", help="teaming with a style switch schedule")
    common(p, bundle=True)
    p.set_defaults(func=_cmd_dynamic)

    p = sub.add_parser("ablate", help="teaming with one design element removed")
    common(p, bundle=True)
    p.add_argument("--mode", choices=ABLATION_MODES, required=True)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("theorem1", help="tabular convergence runs and offset sweep")
    common(p)
    p.set_defaults(func=_cmd_theorem1)

    p = sub.add_parser("score", help="unknown x collaborator score matrix")
    common(p, bundle=True)
    p.add_argument("--unknowns", default="safest,balanced,greediest")
    p.add_argument("--collaborators", default="adaptive,safest,balanced,greediest")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("export-posterior", help="posterior sweep CSV for heatmaps")
    common(p, bundle=True)
    p.add_argument("--rows", type=int, default=None, help="subsample of true candidates")
    p.add_argument("--pairs", type=int, default=300, help="window size per row")
    p.add_argument("--windows", type=int, default=8, help="windows averaged per row")
    p.set_defaults(func=_cmd_export_posterior)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:
        print(f"[{args.command}] error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
