"""Command-line entry point.

Subcommands: bench (latency harness), depth (image pipeline), train-lite
(miniature balance-loss training loop), analyze (gate trace + sensitivity),
params (parameter accounting table). All randomness fans out from a single
--seed via generator splitting.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import analysis, bench, depth_pipeline, imgfile, moe, rewards, serialization
from .policy_net import (DENSE_PRESETS, build_actor, count_params, dense_spec,
                         dense_spec_matched_to, moe_default_spec)
from .tensor_core import Rng

# Published reference sizes the params command compares against (total, active).
REFERENCE_COUNTS = {
    "dense-small": (0.2e6, 0.2e6),
    "dense-medium": (0.5e6, 0.5e6),
    "dense-large": (0.8e6, 0.8e6),
    "dense-extra_large": (1.6e6, 1.6e6),
    "moe-top4of16": (1.6e6, 0.8e6),
}


def read_config(path: str) -> dict:
    """Plain-text key=value config; '#' starts a comment."""
    cfg = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            cfg[key.strip()] = value.strip()
    return cfg


def cmd_params(args) -> int:
    specs = [dense_spec(p) for p in DENSE_PRESETS] + [moe_default_spec()]
    print(f"{'network':<22}{'weights':>12}{'w/ biases':>12}{'active':>12}{'reference':>22}")
    for spec in specs:
        net = build_actor(spec, Rng(args.seed))
        rep = count_params(net)
        ref = REFERENCE_COUNTS.get(spec.name)
        ref_s = f"{ref[0]:.1e}/{ref[1]:.1e}" if ref else "-"
        print(f"{spec.name:<22}{rep.weight_only_total:>12,}{rep.total_params:>12,}"
              f"{rep.weight_only_active:>12,}{ref_s:>22}")
    return 0


def _bench_specs(args):
    specs = [dense_spec(p) for p in DENSE_PRESETS]
    moe_spec = moe_default_spec()
    specs.append(moe_spec)
    moe_total = count_params(build_actor(moe_spec, Rng(0))).weight_only_total
    specs.append(dense_spec_matched_to(moe_total, name="dense-matched-total"))
    return specs, moe_spec.name


def cmd_bench(args) -> int:
    if args.batch != bench.DEFAULT_BATCH:
        print(f"note: batch reduced from {bench.DEFAULT_BATCH} to {args.batch}")
    specs, moe_name = _bench_specs(args)
    reports = bench.run_bench(specs, batch=args.batch, passes=args.passes,
                              warmup=args.warmup, seed=args.seed)
    print(bench.format_table(reports))
    by_name = {r.name: r for r in reports}
    moe_r = by_name[moe_name]
    dense_r = by_name["dense-matched-total"]
    gap = bench.percent_gap(dense_r, moe_r)
    print(f"\ndense network matched to the mixture's total parameter count is "
          f"{gap:.1f}% slower than the mixture")
    if args.out:
        with open(args.out, "w") as f:
            f.write("name,total_params,active_params,batch,passes,mean_s,std_s\n")
            for r in reports:
                f.write(f"{r.name},{r.total_params},{r.active_params},"
                        f"{r.batch_size},{r.passes},{r.mean_seconds!r},{r.std_seconds!r}\n")
    return 0


def cmd_depth(args) -> int:
    if args.input.endswith(".pgm"):
        img = imgfile.read_pgm(args.input)
    else:
        img = imgfile.read_pfm(args.input)
    overrides = {}
    if args.config:
        cfg_raw = read_config(args.config)
        for key, value in cfg_raw.items():
            if not hasattr(depth_pipeline.PipelineConfig(), key):
                raise ValueError(f"unknown pipeline config key {key!r}")
            field_type = type(getattr(depth_pipeline.PipelineConfig(), key))
            overrides[key] = field_type(value) if field_type is not type(None) else float(value)
    if args.pin_sigma is not None:
        overrides["blur_sigma_pinned"] = args.pin_sigma
    cfg = depth_pipeline.PipelineConfig(mode=args.mode, **overrides)
    out = depth_pipeline.run_pipeline(img, cfg, Rng(args.seed))
    imgfile.write_pfm(args.out, out)
    print(f"wrote {cfg.target_width}x{cfg.target_height} image to {args.out}")
    return 0


def cmd_train_lite(args) -> int:
    cfg = read_config(args.config) if args.config else {}
    n = int(cfg.get("n", 4))
    k = int(cfg.get("k", 2))
    in_dim = int(cfg.get("in_dim", 8))
    out_dim = int(cfg.get("out_dim", 4))
    samples = int(cfg.get("samples", 256))
    epochs = int(cfg.get("epochs", 200))
    lr = float(cfg.get("lr", 0.05))
    w_importance = float(cfg.get("w_importance", 0.1))

    rng = Rng(args.seed)
    layer = moe.init_layer(n, k, in_dim, out_dim, rng.child(0))
    inputs, targets = moe.make_regime_dataset(rng.child(1), samples, in_dim, out_dim)
    try:
        trace = moe.train_lite(layer, inputs, targets, epochs, lr, w_importance,
                               rng.child(2))
    except FloatingPointError as exc:
        with open(args.out, "w") as f:
            f.write("epoch,task_loss,importance_loss,cv\n")
            f.write(f"-1,diverged,diverged,diverged  # {exc}\n")
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 1
    with open(args.out, "w") as f:
        f.write("epoch,task_loss,importance_loss,cv\n")
        for e, t, bl, cv in zip(trace.epochs, trace.task_loss, trace.balance_loss, trace.cv):
            f.write(f"{e},{t!r},{bl!r},{cv!r}\n")
    if len(trace):
        print(f"final task loss {trace.task_loss[-1]:.6f}, "
              f"deterministic-gating cv {trace.final_cv:.4f}")
    return 0


def cmd_analyze(args) -> int:
    net = serialization.load_weights(args.weights, expect_kind="moe")
    obs = analysis.load_obs_sequence(args.sequence)
    os.makedirs(args.out, exist_ok=True)
    trace = analysis.record_trace(net, obs)
    analysis.export_trace_csv(trace, os.path.join(args.out, "trace.csv"))
    report = analysis.sensitivity(net, obs)
    analysis.export_sensitivity_csv(report, os.path.join(args.out, "sensitivity.csv"))
    print(f"wrote trace.csv and sensitivity.csv to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsegate")
    parser.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="batched inference latency comparison")
    p.add_argument("--batch", type=int, default=bench.DEFAULT_BATCH)
    p.add_argument("--passes", type=int, default=bench.DEFAULT_PASSES)
    p.add_argument("--warmup", type=int, default=bench.DEFAULT_WARMUP)
    p.add_argument("--out", help="write results CSV here")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("depth", help="run the depth-image pipeline on one image")
    p.add_argument("input", help="PGM or PFM depth image")
    p.add_argument("--mode", choices=["train", "deploy"], default="deploy")
    p.add_argument("--config", help="key=value pipeline overrides")
    p.add_argument("--pin-sigma", type=float, help="fix the blur sigma")
    p.add_argument("--out", required=True, help="output PFM path")
    p.set_defaults(fn=cmd_depth)

    p = sub.add_parser("train-lite", help="miniature balance-loss training loop")
    p.add_argument("--config", help="key=value training config")
    p.add_argument("--out", required=True, help="trace CSV path")
    p.set_defaults(fn=cmd_train_lite)

    p = sub.add_parser("analyze", help="gate trace and sensitivity analysis")
    p.add_argument("weights", help="weight file (mixture networks only)")
    p.add_argument("sequence", help="binary observation-sequence file")
    p.add_argument("--out", required=True, help="output directory for CSVs")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("params", help="parameter accounting table")
    p.set_defaults(fn=cmd_params)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except serialization.WeightFileError as exc:
        print(f"error (weight file): {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError) as exc:
        print(f"error (invalid input): {exc}", file=sys.stderr)
        return 2
    except MemoryError as exc:
        print(f"error (memory): {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
