"""``unfold`` command line: simulate, estimate, experiment, diagnose.

Exit codes: 0 success, 2 config validation, 3 infeasible target,
4 solver failure, 5 I/O.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, InfeasibleTarget, InvalidIntensity, SolverError
from .experiments import run_diagnose, run_estimate, run_experiment, run_simulate

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4, 5

logger = logging.getLogger("unfold")


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unfold", description="Wavelet-Galerkin unfolding of Poisson intensities.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, type=Path, help="experiment config (JSON)")
        p.add_argument("--out", type=Path, help="output directory (default: config output_dir)")
        p.add_argument("--seed", type=_seed, help="override the master seed")
        p.add_argument("--no-timestamp", action="store_true", help="omit timestamps and timings for byte-identical reruns")
        return p

    common(sub.add_parser("simulate", help="fold the intensity and draw seeded counts"))
    est = common(sub.add_parser("estimate", help="estimate the intensity from a count file"))
    est.add_argument("--counts", required=True, type=Path, help="count CSV (bin_index,count)")
    exp = common(sub.add_parser("experiment", help="Monte Carlo sweep over t and replicates"))
    exp.add_argument("--workers", type=int, default=1, help="worker processes for the sweep")
    common(sub.add_parser("diagnose", help="theory constants, ellipticity and lemma checks"))
    return parser


def _run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    out = args.out or Path(cfg.output_dir)
    stamp = not args.no_timestamp
    if args.command == "simulate":
        manifest = run_simulate(cfg, out, stamp)
        print(f"wrote {len(manifest.seeds)} count files to {out}")
    elif args.command == "estimate":
        model, diag = run_estimate(cfg, args.counts, out, stamp)
        print(f"j={diag['j']} iterations={diag['iterations']} residual={diag['residual']:.2e} -> {out}")
    elif args.command == "experiment":
        report = run_experiment(cfg, out, stamp, workers=args.workers)
        fit = report["fit"]
        slope = f"slope={fit['slope']:.3f}" if fit else "no fit"
        print(f"{report['n_cells']} runs, {report['n_failures']} failures, {slope} -> {out}")
    elif args.command == "diagnose":
        report = run_diagnose(cfg, out, stamp)
        print(f"lemma checks passed: {report['lemmas']['all_passed']} -> {out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (ConfigError, InvalidIntensity) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleTarget as exc:
        print(f"infeasible target: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
