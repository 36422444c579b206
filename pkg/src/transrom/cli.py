"""Command-line entry point.

Subcommands mirror the pipeline stages:

    transrom list
    transrom snapshots <config-or-id>
    transrom train     <config-or-id>
    transrom pod       <config-or-id>
    transrom rom       <config-or-id>
    transrom compare   <config-or-id>
    transrom spectrum  <config-or-id>

<config-or-id> is either a registry id (profile picked with --scale) or a
TOML config file. Exit codes: 0 success, 2 config error, 3 solver failure,
4 training divergence.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, GmresError, NewtonError, SolverError, TrainingDivergedError, TransromError

_STAGE_COMMANDS = {
    "snapshots": ("snapshots",),
    "train": ("snapshots", "train"),
    "pod": ("snapshots", "pod"),
    "rom": ("snapshots", "train", "pod", "rom"),
    "compare": ("snapshots", "train", "pod", "rom", "compare"),
    "spectrum": ("snapshots", "spectrum"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="transrom",
        description="Reduced-order-model workbench for 1D transport problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list registered experiments")
    for name, help_text in (
        ("snapshots", "generate full-order training/reference snapshots"),
        ("train", "train the reduced-basis networks"),
        ("pod", "build the static POD baseline bases"),
        ("rom", "run the reduced-order predictions"),
        ("compare", "aggregate error tables and figures across modes"),
        ("spectrum", "write singular-value spectra"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="registry id or TOML config file")
        p.add_argument("--scale", choices=("paper", "desk"), default=None,
                       help="registry profile to use (default desk)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output root directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for parameter sweeps")
        p.add_argument("--force", action="store_true", help="redo stages even if outputs exist")
        p.add_argument("--figures", dest="figures", action="store_true", default=None,
                       help="render figures alongside CSV output (default)")
        p.add_argument("--no-figures", dest="figures", action="store_false",
                       help="skip figure rendering")
    return parser


def _run(args) -> int:
    from .experiments import REGISTRY, Experiment, get_config

    if args.command == "list":
        width = max(len(k) for k in REGISTRY)
        for key in sorted(REGISTRY):
            print(f"{key:<{width}}  {REGISTRY[key].description}")
        return 0
    cfg = get_config(
        args.config,
        scale=args.scale,
        seed=args.seed,
        out_dir=args.out,
        threads=args.threads,
        figures=args.figures,
    )
    exp = Experiment(cfg, force=args.force)
    exp.run(_STAGE_COMMANDS[args.command])
    print(f"wrote {exp.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        # BLAS threading fights the explicit worker pool and is slower than
        # single-threaded kernels at these matrix sizes; --threads controls
        # all parallelism explicitly.
        from threadpoolctl import threadpool_limits

        with threadpool_limits(1):
            return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 4
    except (SolverError, GmresError, NewtonError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except TransromError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
