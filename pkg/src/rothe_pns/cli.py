"""
Command line interface.

Exit codes: 0 success, 1 failed invariant checks (``verify``),
2 solver failure, 3 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import config as cfgmod
from .config import ConfigError
from .elements import ElementFamily
from .harness import (SolverFailure, build_problem, convergence_sweep,
                      run_experiment, sweep_path, verify)
from .mesh import write_mesh

EXIT_OK, EXIT_CHECKS, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="configuration file")
    common.add_argument("--experiment", choices=cfgmod.EXPERIMENTS,
                        help="start from this experiment's defaults (ignored with --config)")
    common.add_argument("--level", type=int, metavar="N", help="refinement level")
    common.add_argument("--family", help="mini, taylor_hood or crouzeix_raviart")
    common.add_argument("--error-variant", choices=cfgmod.ERROR_VARIANTS)
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="rothe-pns", description=__doc__.strip().split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("mesh", parents=[common], help="write the mesh of a configuration")
    sub.add_parser("solve", parents=[common], help="run one experiment")
    conv = sub.add_parser("convergence", parents=[common], help="refinement sweep")
    conv.add_argument("--n-min", type=int, default=1)
    conv.add_argument("--n-max", type=int, help="defaults to the configured level")
    sub.add_parser("verify", parents=[common], help="invariant self-checks")
    return ap


def resolve_config(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.defaults(args.experiment or "singular")
    changes = {}
    if args.level is not None:
        changes["level"] = args.level
    if args.family is not None:
        try:
            changes["family"] = ElementFamily.parse(args.family).value
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if args.error_variant is not None:
        changes["error_variant"] = args.error_variant
    if args.out is not None:
        changes["out"] = args.out
    return cfg.replace(**changes)


def _cmd_mesh(cfg):
    mesh = build_problem(cfg).space.mesh
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, f"mesh_n{cfg.level}.txt")
    write_mesh(mesh, path)
    print(f"{path}: {mesh.num_vertices} vertices, {mesh.num_cells} cells, h = {mesh.h_max:.6e}")
    return EXIT_OK


def _cmd_solve(cfg):
    res = run_experiment(cfg)
    print(f"{res.directory}: {cfg.K} steps in {res.seconds:.1f} s")
    if res.row is not None:
        print(f"h = {res.row.h:.6e}  e_L2 = {res.row.e_L2:.6e}  e_F = {res.row.e_F:.6e}")
    return EXIT_OK


def _cmd_convergence(cfg, args):
    report = convergence_sweep(cfg, args.n_min, args.n_max or cfg.level)
    sys.stdout.write(report.to_csv())
    print(f"written to {sweep_path(cfg)}")
    return EXIT_OK


def _cmd_verify(cfg):
    report = verify(cfg)
    sys.stdout.write(report.to_text())
    return EXIT_OK if report.passed else EXIT_CHECKS


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "mesh":
            return _cmd_mesh(cfg)
        if args.command == "solve":
            return _cmd_solve(cfg)
        if args.command == "convergence":
            return _cmd_convergence(cfg, args)
        return _cmd_verify(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
