"""Command line entry point: ``skewpsk <subcommand> [options]``."""

from __future__ import annotations

import argparse
import sys

from .harness import ConfigError, ExperimentConfig, run

SUBCOMMANDS = {
    "constellation": "constellation",
    "decay": "decay_sweep",
    "trace": "trajectory_trace",
    "ber": "ber_curve",
    "mi": "mi_curve",
    "track": "track_demo",
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its keys")
    common.add_argument("--seed", type=int, dest="master_seed")
    common.add_argument("--out")
    common.add_argument("--demod", choices=["dp", "mixture"])
    common.add_argument("--grid", type=int)
    common.add_argument("--order", type=int)
    common.add_argument("--m-order", type=int, dest="m_order")
    common.add_argument("--skew", type=float)
    common.add_argument("--skews", type=float, nargs="+")
    common.add_argument("--constellation-file", dest="constellation_file")
    common.add_argument("--snr-db", type=float, nargs="+", dest="snr_db")
    common.add_argument("--sigma-delta", type=float, dest="sigma_delta")
    pilots = common.add_mutually_exclusive_group()
    pilots.add_argument("--pilot-period", type=int, dest="pilot_period")
    pilots.add_argument("--pilotless", action="store_true")
    common.add_argument("--code")
    common.add_argument("--n-outer", type=int, dest="n_outer")
    common.add_argument("--n-inner", type=int, dest="n_inner")
    common.add_argument("--max-frames", type=int, dest="max_frames")
    common.add_argument("--min-bit-errors", type=int, dest="min_bit_errors")
    common.add_argument("--n-samples", type=int, dest="n_samples")
    common.add_argument("--n-frames", type=int, dest="n_frames")
    common.add_argument("--n-symbols", type=int, dest="n_symbols")
    common.add_argument("--phi", type=float)
    common.add_argument("--decay-mode", choices=["full_sum", "dominant", "genie"], dest="decay_mode")

    parser = argparse.ArgumentParser(prog="skewpsk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def build_config(argv: list[str] | None = None) -> ExperimentConfig:
    args = _parser().parse_args(argv)
    base = {}
    if args.config:
        base = ExperimentConfig.from_file(args.config).__dict__.copy()
    base["kind"] = SUBCOMMANDS[args.command]
    for key, value in vars(args).items():
        if key in ("config", "command", "pilotless") or value is None:
            continue
        base[key] = value
    if args.pilotless:
        base["pilot_period"] = None
    return ExperimentConfig.from_dict(base).validate()


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = build_config(argv)
        text = run(cfg)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"skewpsk: error: {exc}", file=sys.stderr)
        return 2
    if not cfg.out:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
