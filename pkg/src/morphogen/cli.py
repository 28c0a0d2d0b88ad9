"""Command line entry point: ``morphogen {eig,steady,evolve,verify} --config FILE``.

Exit status: 0 all checks pass, 1 a check failed, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config
from .errors import ConfigError
from .runner import EXIT_CONFIG, MODES, run_scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="morphogen", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "eig": "principal Dirichlet-Neumann eigenpair and decay constant chi",
        "steady": "steady state by Picard iteration",
        "evolve": "integrate in time and write diagnostic series",
        "verify": "full pipeline with every pass/fail check",
    }
    for mode in MODES:
        p = sub.add_parser(mode, help=helps[mode])
        p.add_argument("--config", required=True, help="scenario file")
        p.add_argument("--out", default=None, help="output directory (default: [output] dir)")
        p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return parser


def _report(manifest, out) -> None:
    r = manifest.results
    for key in ("lambda1", "chi", "picard_iterations", "l_inf_max", "snapshots",
                "energy_residual_max", "gap_ratio_max"):
        if key in r:
            print(f"{key:>20s}  {r[key]}", file=out)
    for c in manifest.checks:
        mark = "PASS" if c.passed else "FAIL"
        print(f"[{mark}] {c.name}: {c.value:.6g} (limit {c.limit:.6g}) {c.detail}".rstrip(),
              file=out)
    print(f"status: {manifest.status}", file=out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = run_scenario(cfg, args.out, args.command)
    if manifest.error:
        print(f"{manifest.status}: {manifest.error}", file=sys.stderr)
    if not args.quiet:
        _report(manifest, sys.stdout)
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
