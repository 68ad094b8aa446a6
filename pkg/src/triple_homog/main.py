from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .config import Z_RULES, Settings, _as_float_list, load_settings
from .errors import ConfigParseError, ExperimentFailureError
from .experiments import (
    run_dispersion,
    run_envelope_sweep,
    run_evolve,
    run_homogenize,
    run_resolvent_error,
    run_selftest,
    run_timescale_sweep,
)
from .utils import parse_fraction

EXIT_OK = 0
EXIT_GATE_FAILED = 1
EXIT_USAGE = 2


def _print_json(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, default=str))


def _defaults_epilog() -> str:
    defaults = Settings()
    lines = ["defaults (config file key = value, or HOMOG_<KEY> in the environment):"]
    for f in fields(defaults):
        lines.append(f"  {f.name} = {getattr(defaults, f.name)}")
    return "\n".join(lines)


def _fraction(text: str) -> float:
    try:
        return parse_fraction(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _float_list(text: str) -> list[float]:
    try:
        return _as_float_list(text, [])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Boundary-triple homogenisation of the 1D two-phase periodic wave equation",
        epilog=_defaults_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--config", default=None, help="INI-style config file")
    parser.add_argument("--workers", type=int, default=None, help="Worker processes (default HOMOG_WORKERS or 1)")
    parser.add_argument("--output-dir", default=None, help="Directory for CSV and summary artifacts")
    parser.add_argument("--a-minus", type=_fraction, default=None, help="Coefficient on [0, l)")
    parser.add_argument("--a-plus", type=_fraction, default=None, help="Coefficient on [l, 1)")
    parser.add_argument("--l", type=_fraction, default=None, help="Interface position in (0, 1), e.g. 1/3")
    parser.add_argument("--z-rule", choices=Z_RULES, default=None, help="Spectral parameter per eps in the resolvent sweeps")
    parser.add_argument("--z-re", type=float, default=None, help="Real part of the fixed z")
    parser.add_argument("--z-im", type=float, default=None, help="Imaginary part of the fixed z")
    parser.add_argument("--z-scale", type=float, default=None, help="Constant c in |z| <= c eps^p for the scaled and swept rules")
    parser.add_argument("--verbose", action="store_true", help="Debug logging on stderr")
    sub = parser.add_subparsers(dest="cmd", required=True)

    sub.add_parser("dispersion", help="Band diagram and the O(chi^4) spectral distance")
    sub.add_parser("homogenize", help="Effective coefficient, both routes, quartic coefficients")

    p_res = sub.add_parser("resolvent-error", help="Norm-resolvent error sweeps over eps")
    p_res.add_argument("--alpha", type=_float_list, default=None, help="Comma-separated alphas (default alpha_grid)")
    p_res.add_argument("--order", choices=["first", "second", "both"], default="both")

    p_evolve = sub.add_parser("evolve", help="Full-line Gelfand synthesis of the exact and homogenised waves")
    p_evolve.add_argument("--alpha", type=float, default=1.0, help="Exponent of the full-line bound")
    p_evolve.add_argument("--width", type=float, default=0.3, help="Gaussian width of the datum in chi")

    p_sweep = sub.add_parser("sweep", help="Propagator envelope or timescale sweeps")
    p_sweep.add_argument("--kind", choices=["envelope", "timescale"], required=True)
    p_sweep.add_argument("--alpha-first", type=float, default=1.0)
    p_sweep.add_argument("--alpha-second", type=float, default=2.0)

    sub.add_parser("selftest", help="Dual-route consistency suite")
    return parser


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def run(args: argparse.Namespace) -> dict:
    overrides = {
        "workers": args.workers,
        "a_minus": args.a_minus,
        "a_plus": args.a_plus,
        "l": args.l,
        "z_rule": args.z_rule,
        "z_re": args.z_re,
        "z_im": args.z_im,
        "z_scale": args.z_scale,
        "output_dir": Path(args.output_dir) if args.output_dir else None,
    }
    settings = load_settings(Path(args.config) if args.config else None, overrides)
    if any(value is not None for value in (args.a_minus, args.a_plus, args.l)):
        # a medium given on the command line also replaces the test media
        settings.test_media = f"{settings.a_minus!r},{settings.a_plus!r},{settings.l!r}"

    if args.cmd == "dispersion":
        return run_dispersion(settings)
    if args.cmd == "homogenize":
        return run_homogenize(settings)
    if args.cmd == "resolvent-error":
        return run_resolvent_error(settings, args.alpha or list(settings.alpha_grid), args.order)
    if args.cmd == "evolve":
        return run_evolve(settings, alpha=args.alpha, width=args.width)
    if args.cmd == "sweep":
        if args.kind == "envelope":
            return run_envelope_sweep(settings, args.alpha_first, args.alpha_second)
        return run_timescale_sweep(settings)
    if args.cmd == "selftest":
        return run_selftest(settings)
    raise ConfigParseError(f"unknown subcommand {args.cmd!r}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)

    try:
        stats = run(args)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    _print_json(stats)
    if not stats.get("passed", False):
        failed = sorted(name for name, ok in stats["gates"].items() if not ok)
        error = ExperimentFailureError(f"{stats['command']}: failed gates {failed}, {len(stats['failures'])} failed cells")
        print(str(error), file=sys.stderr)
        for failure in stats["failures"]:
            print(f"  {failure['cell']}: {failure['error']}", file=sys.stderr)
        return EXIT_GATE_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
