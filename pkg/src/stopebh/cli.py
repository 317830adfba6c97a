"""Command line entry point.

    stopebh run <config> [--trials N] [--seed S] [--alpha A] [--out DIR]
    stopebh verify {ebh,adjusters,stepwise,counterexample,all}
    stopebh report <results-dir>

Exit status: 0 when every verdict passes, 1 when a verdict fails, 2 for
config and usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .runner import PASSING, load_summary, run_experiment
from .verify import SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _print_verdicts(verdicts: dict[str, str]) -> None:
    for name, verdict in verdicts.items():
        print(f"  {name}: {verdict}")


def _exit_for(verdicts: dict[str, str]) -> int:
    return EXIT_OK if all(v in PASSING for v in verdicts.values()) else EXIT_FAIL


def _summary_lines(mode: str, summary: dict) -> list[str]:
    keys = {
        "exact": ("paths", "expectation", "mean_evalues", "mean_fdr", "mean_tau"),
        "single": ("tau", "exhausted", "evalues", "rejections", "fdp"),
        "monte_carlo": ("trials", "mean_fdr", "std_error", "null_mean_evalues", "rejection_freq", "mean_tau"),
    }[mode]
    return [f"  {k}: {summary[k]}" for k in keys if k in summary]


def cmd_run(args: argparse.Namespace) -> int:
    overrides = {"trials": args.trials, "seed": args.seed, "alpha": args.alpha}
    try:
        cfg = load_config(args.config, overrides=overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = args.out or cfg.output
    if out is None:
        out = str(Path("results") / Path(args.config).stem)
    report = run_experiment(cfg, out)
    print(f"{args.config}: mode={report.mode} seed={cfg.seed} alpha={cfg.alpha} -> {out}")
    for line in _summary_lines(report.mode, report.summary):
        print(line)
    _print_verdicts(report.verdicts)
    return _exit_for(report.verdicts)


def cmd_verify(args: argparse.Namespace) -> int:
    checks = run_suite(args.suite)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FAIL


def cmd_report(args: argparse.Namespace) -> int:
    try:
        doc = load_summary(args.results_dir)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read results: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"{args.results_dir}: mode={doc['mode']} seed={doc['metadata']['seed']}")
    for line in _summary_lines(doc["mode"], doc["summary"]):
        print(line)
    _print_verdicts(doc["verdicts"])
    return _exit_for(doc["verdicts"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stopebh", description="Stopped e-BH experiments and self-checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--trials", type=int, help="override the config's trials")
    p_run.add_argument("--seed", type=int, help="override the config's seed")
    p_run.add_argument("--alpha", type=float, help="override the config's alpha")
    p_run.add_argument("--out", help="output directory (default: config 'output' or results/<name>)")
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="run a self-check suite")
    p_ver.add_argument("suite", choices=SUITES + ("all",))
    p_ver.set_defaults(func=cmd_verify)

    p_rep = sub.add_parser("report", help="print the summary and verdicts of a results directory")
    p_rep.add_argument("results_dir")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
