"""Command-line front end.

    quantcap train|sweep|baseline|noisy-csi|theory-check|plot
             --config <path> [--seed N] [--out DIR]

``sweep`` runs the scenario named in the config (siso_sweep or mimo_sweep);
``plot`` re-renders figures from an existing output directory. The
QUANTCAP_THREADS environment variable caps worker-pool parallelism.
"""

from __future__ import annotations

import argparse
import sys

from . import figures
from .experiments import run_experiment


def _add_common(parser: argparse.ArgumentParser, config_required=True) -> None:
    parser.add_argument("--config", required=config_required,
                        help="TOML experiment configuration")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the master seed")
    parser.add_argument("--out", default=None,
                        help="override the output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quantcap",
        description="Receiver optimization for low-resolution quantized "
                    "channels: training, capacity sweeps, baselines, and "
                    "figures.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "sweep", "baseline", "noisy-csi", "theory-check"):
        _add_common(sub.add_parser(name))
    plot = sub.add_parser("plot", help="re-render figures from results")
    _add_common(plot, config_required=False)
    return parser


_FORCED_SCENARIO = {
    "train": "train",
    "noisy-csi": "noisy_csi",
    "theory-check": "theory_check",
    "baseline": "baseline",
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "plot":
        target = args.out
        if target is None:
            print("plot needs --out pointing at a results directory")
            return 2
        try:
            written = figures.emit_figures(target)
        except FileNotFoundError as exc:
            print(str(exc))
            return 2
        for path in written:
            print(f"wrote {path}")
        return 0

    scenario = _FORCED_SCENARIO.get(args.command)
    return run_experiment(args.config, seed_override=args.seed,
                          out_override=args.out, scenario_override=scenario)


if __name__ == "__main__":
    sys.exit(main())
