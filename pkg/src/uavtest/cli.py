"""Command-line interface.

Subcommands: ``train``, ``eval``, ``baseline``, ``report``,
``export-script``.  All take ``--config <file>``, ``--seed <int>``, and
``--out <dir>``.  Exit code 0 on success; any failure prints a one-line
diagnostic on stderr and exits nonzero.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_run_config

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uavtest",
        description="RL-driven flight-behavior test harness for simulated UAVs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--out", required=True, help="output directory")

    p_train = sub.add_parser("train", help="train the tester")
    common(p_train)
    p_train.add_argument("--episodes", type=int, default=None,
                         help="total training episodes (overrides the config)")
    p_train.add_argument("--resume", default=None,
                         help="training-state checkpoint to continue from")
    p_train.add_argument("--verbose", action="store_true",
                         help="print per-episode progress")

    p_eval = sub.add_parser("eval", help="evaluate a trained model")
    common(p_eval)
    p_eval.add_argument("--model", required=True, help="model checkpoint")
    p_eval.add_argument("--episodes", type=int, default=None)

    p_base = sub.add_parser("baseline", help="run the uniform-random baseline")
    common(p_base)
    p_base.add_argument("--episodes", type=int, default=None)

    p_report = sub.add_parser("report", help="compare two trace directories")
    common(p_report)
    p_report.add_argument("subject_dir", help="trace directory of the learned tester")
    p_report.add_argument("baseline_dir", help="trace directory of the baseline")

    p_export = sub.add_parser("export-script", help="export one episode as a script")
    common(p_export)
    p_export.add_argument("--model", required=True, help="model checkpoint")
    p_export.add_argument("--episode", type=int, default=0)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        from . import runner

        if args.command == "train":
            out = runner.run_train(
                cfg, args.out, episodes=args.episodes, resume=args.resume,
                quiet=not args.verbose,
            )
            print(f"training complete: {out}")
        elif args.command == "eval":
            out = runner.run_eval(cfg, args.model, args.out, episodes=args.episodes)
            print(f"evaluation traces written: {out}")
        elif args.command == "baseline":
            out = runner.run_baseline(cfg, args.out, episodes=args.episodes)
            print(f"baseline traces written: {out}")
        elif args.command == "report":
            out = runner.run_report(cfg, args.subject_dir, args.baseline_dir, args.out)
            print((out / "report.txt").read_text(encoding="utf-8"))
        elif args.command == "export-script":
            path = runner.run_export_script(
                cfg, args.model, args.out, episode=args.episode
            )
            print(f"script written: {path}")
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"uavtest: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
