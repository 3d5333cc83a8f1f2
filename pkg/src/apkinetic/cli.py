"""Command-line entry point: ``apkinetic {relax,converge,aplimit,tableau}``."""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import BlowUpError, ConfigError, DegenerateStateError, InvalidMomentsError
from .harness import load_config, run_experiment

SUBCOMMANDS = {
    "relax": "relaxation",
    "converge": "convergence",
    "aplimit": "ap-limit",
    "tableau": "tableau-report",
}

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP = 0, 2, 3


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apkinetic", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--experiment", help=argparse.SUPPRESS)
        p.add_argument("--scheme")
        p.add_argument("--tableau-file", dest="tableau_file", help="JSON double Butcher tableau")
        p.add_argument("--backend", choices=("boltzmann", "bgk"))
        p.add_argument("--kappa", type=float)
        p.add_argument("--nv", dest="n_v", type=int)
        p.add_argument("--vmax", dest="v_max", type=float)
        p.add_argument("--eps", type=_floats, help="comma-separated list")
        p.add_argument("--dt", type=_floats, help="comma-separated, decreasing")
        p.add_argument("--tend", dest="t_end", type=float)
        p.add_argument("--sigma", type=float)
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        if name == "relax":
            p.add_argument("--initial", choices=("bkw", "perturbed"))
        if name == "aplimit":
            p.add_argument("--variant", dest="ap_variant", choices=("homogeneous", "1d"))
            p.add_argument("--nx", dest="n_x", type=int)
            p.add_argument("--steps", type=int)
        if name == "converge":
            p.add_argument("--timing", action="store_true", default=None,
                           help="record runtime_ns (makes output nondeterministic)")
        if name == "tableau":
            p.add_argument("--lambdas", type=_floats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    opts = vars(args)
    command = opts.pop("command")
    opts.pop("verbose")
    config_path = opts.pop("config")
    experiment = opts.pop("experiment") or SUBCOMMANDS[command]
    if experiment != SUBCOMMANDS[command]:
        print(f"error: --experiment {experiment} conflicts with subcommand {command}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(config_path, experiment=experiment, **opts)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BlowUpError, InvalidMomentsError, DegenerateStateError) as exc:
        print(f"numerical blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote outputs to {cfg.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
