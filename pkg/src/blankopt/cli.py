"""Command-line entry point: ``python -m blankopt <subcommand> [options]``.

Exit status is 0 on success, 1 for configuration errors and 2 when an
upstream artifact is missing.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys

from .config import Config, ConfigError
from .geometry import DesignError, GeometryError
from . import pipeline as pl


def _config(args) -> Config:
    config = Config.from_path(args.config) if args.config else Config.default()
    if args.paper_scale:
        config = pl.paper_scale(config)
    return config


def _progress(args):
    if not args.verbose:
        return None
    return lambda *a: print(" ".join(str(x) for x in a), file=sys.stderr)


def cmd_sample(ctx, args):
    plan = pl.SamplingPlan.from_config(ctx.config)
    overrides = {k: v for k, v in (("n_train", args.n_train), ("n_test", args.n_test),
                                   ("seed_train", args.seed_train), ("seed_test", args.seed_test),
                                   ("n_extra", args.n_extra)) if v is not None}
    plan = dataclasses.replace(plan, **overrides)
    records = pl.stage_sample(ctx, plan)
    print(f"sampled {len(records)} designs -> {ctx.path('manifest.tsv')}")


def cmd_simulate(ctx, args):
    records = pl.stage_simulate(ctx)
    ok = sum(1 for r in records if r.max_thinning <= 0.15 and r.max_thickening <= 0.10)
    print(f"simulated {len(records)} blanks; {ok} meet the criteria")


def cmd_train_autodecoder(ctx, args):
    run = pl.stage_train_autodecoder(ctx, log=_progress(args))
    print(f"auto-decoder: epoch-1 loss {run.history[0]:.6g}, final loss {run.history[-1]:.6g}")


def cmd_infer_latents(ctx, args):
    z = pl.stage_infer_latents(ctx)
    print(f"inferred {len(z)} test latents")


def cmd_train_iaism(ctx, args):
    variants = None
    if args.augment is not None:
        variants = ["augmented" if args.augment else "plain"]
    runs = pl.stage_train_iaism(ctx, variants, log=_progress(args))
    for name, run in runs.items():
        print(f"IAISM {name}: {run.n_pairs} pairs, epoch-1 loss {run.history[0]:.6g}, "
              f"final loss {run.history[-1]:.6g}")


def cmd_train_saism(ctx, args):
    models = pl.stage_train_saism(ctx)
    print("fitted " + ", ".join(sorted(models)))


def cmd_evaluate(ctx, args):
    report = pl.stage_evaluate(ctx)
    print(report.text())


def cmd_optimize(ctx, args):
    traces = pl.stage_optimize(ctx, args.seeds)
    for seed, t in traces.items():
        v = t.validation
        status = "pass" if v and v.passed else f"fail ({v.reason if v else 'no validation'})"
        print(f"seed {seed}: loss {t.loss[0]:.6g} -> {t.loss[-1]:.6g}; oracle {status}")


def cmd_export(ctx, args):
    dst = pl.stage_export(ctx, args.grid, args.format, args.out)
    print(f"wrote {dst}")


COMMANDS = {
    "sample": cmd_sample,
    "simulate": cmd_simulate,
    "train-autodecoder": cmd_train_autodecoder,
    "infer-latents": cmd_infer_latents,
    "train-iaism": cmd_train_iaism,
    "train-saism": cmd_train_saism,
    "evaluate": cmd_evaluate,
    "optimize": cmd_optimize,
    "export": cmd_export,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (default: the shipped desk-scale config)")
    common.add_argument("--workdir", default="run", help="artifact directory (default: ./run)")
    common.add_argument("--paper-scale", action="store_true",
                        help="full 610x1120 grid, 256/64 samples and 2000 epochs")
    common.add_argument("-v", "--verbose", action="store_true", help="print per-epoch losses")

    parser = argparse.ArgumentParser(prog="blankopt", description="Blank-shape surrogate optimisation pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("sample", parents=[common], help="draw designs and rasterise their SDFs")
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--n-extra", type=int, help="extra shapes for the auto-decoder")
    p.add_argument("--seed-train", type=int)
    p.add_argument("--seed-test", type=int)
    sub.add_parser("simulate", parents=[common], help="run the forming oracle over the manifest")
    sub.add_parser("train-autodecoder", parents=[common], help="fit decoder and training latents")
    sub.add_parser("infer-latents", parents=[common], help="latents for the test shapes")
    p = sub.add_parser("train-iaism", parents=[common], help="train the field surrogate")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--augment", dest="augment", action="store_true", default=None,
                   help="train only the flip-augmented variant")
    g.add_argument("--no-augment", dest="augment", action="store_false",
                   help="train only the plain variant")
    sub.add_parser("train-saism", parents=[common], help="fit RBF and Kriging surrogates")
    sub.add_parser("evaluate", parents=[common], help="ARMT/ARMTK table on the test split")
    p = sub.add_parser("optimize", parents=[common], help="latent optimisation plus oracle check")
    p.add_argument("--seeds", type=int, nargs="+")
    p = sub.add_parser("export", parents=[common], help="export an FGRD grid to CSV or PGM")
    p.add_argument("grid", help="FGRD file (absolute or relative to the workdir)")
    p.add_argument("--format", choices=("csv", "pgm"), default="csv")
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    pl.set_threads()
    try:
        ctx = pl.Context(_config(args), args.workdir)
        COMMANDS[args.command](ctx, args)
    except pl.MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, GeometryError, DesignError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
