"""Command-line entry point: ``nmqj {run,trajectory,oracle,compare,bench}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import kernels
from .config import ConfigError, load_config, parse_seed
from .jumps import StepTooLargeError, UnravelingBreakdown
from .model import ModelError

log = logging.getLogger("nmqj")


def _on_off(text: str) -> bool:
    t = text.lower()
    if t in ("on", "true", "yes", "1"):
        return True
    if t in ("off", "false", "no", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {text!r}")


def _seed(text: str) -> int:
    try:
        return parse_seed(int(text, 0), "--seed")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="YAML run configuration")
    common.add_argument("--seed", type=_seed, default=None, help="root seed (overrides the config)")
    common.add_argument("--out", type=Path, default=None, help="output directory (overrides the config)")
    mode = common.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strict", action="store_true", default=None,
                      help="abort when a negative channel has no populated jump image")
    mode.add_argument("--permissive", dest="strict", action="store_false",
                      help="log and skip such channels instead")
    common.add_argument("--adaptive-dt", type=_on_off, default=None, metavar="{on,off}",
                        help="halve the step when jump probabilities exceed the budget")
    common.add_argument("--kernels", choices=("compiled", "python"), default=None,
                        help="kernel backend (default: compiled when available)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="nmqj", description="Non-Markovian quantum jump simulator")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="compressed ensemble run")
    sub.add_parser("trajectory", parents=[common], help="ensemble run following one tagged member")
    sub.add_parser("oracle", parents=[common], help="integrate the master equation on the output grid")
    cmp_ = sub.add_parser("compare", parents=[common], help="ensemble run checked against the oracle")
    cmp_.add_argument("--n-sigma", type=float, default=5.0)
    bench = sub.add_parser("bench", parents=[common], help="compressed vs naive per-member timing")
    bench.add_argument("--extra-config", type=Path, action="append", default=[],
                       help="additional configs to benchmark")
    bench.add_argument("--no-naive", action="store_true", help="time only the compressed mode")
    return p


def _load(path: Path, args):
    cfg = load_config(path)
    return cfg.with_overrides(seed=args.seed, out_dir=args.out, strict=args.strict, adaptive=args.adaptive_dt)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.kernels:
        kernels.use_backend(args.kernels)

    from . import runner

    try:
        cfg = _load(args.config, args)
        if args.command == "run":
            _, events, summary = runner.run_ensemble(cfg)
            print(f"{len(events)} events, peak N_eff {summary['peak_n_eff']}, "
                  f"{summary['wall_clock_s']:.2f} s")
        elif args.command == "trajectory":
            res = runner.run_trajectory(cfg)
            print(f"tracked member: {len(res.events)} jumps")
        elif args.command == "oracle":
            runner.run_oracle(cfg)
        elif args.command == "compare":
            doc = runner.run_compare(cfg, n_sigma=args.n_sigma)
            for name, rep in doc["observables"].items():
                print(f"{name}: max error {rep['max_error']:.3g}, {rep['n_exceeded']} point(s) over bound")
            if not doc["ok"]:
                return 1
        elif args.command == "bench":
            cfgs = [cfg] + [_load(p, args) for p in args.extra_config]
            rows = runner.run_bench(cfgs, naive=not args.no_naive)
            print(f"{'N':>8} {'peak':>5} {'compressed_s':>13} {'naive_s':>10} {'ratio':>8}")
            for r in rows:
                print(f"{r['n_members']:>8} {r['peak_n_eff']:>5} {r['compressed_s']:>13.3f} "
                      f"{r.get('naive_s', float('nan')):>10.3f} {r.get('ratio', float('nan')):>8.1f}")
    except (ConfigError, ModelError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (StepTooLargeError, UnravelingBreakdown) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
