"""Command line interface.

    gravloc derive | run | trace | analyze | scaling-check | free-reference

Configuration comes from ``--config FILE`` (``key = value`` lines) with any
``--key value`` flag overriding it. Relative output directories are resolved
against $GRAVLOC_OUTPUT_ROOT when it is set.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .analysis import FitError, SpectrumError, analyze
from .cm_evolution import CmState
from .config import ConfigError, RunConfig, load, parse_value, with_overrides
from .densmat import QuadratureError, SliceError, read_kernel, trace_out_slice, write_kernel
from .pipeline import StageError, derived_quantities, run_pipeline, scaling_check, set_workers, slice_grid_for
from .solver import GridError, read_checkpoint
from .units import REFERENCE_LAMBDA_G_CM, SetupError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SETUP = 3
EXIT_NUMERIC = 4
EXIT_IO = 5
EXIT_CHECK_FAILED = 6

OUTPUT_ROOT_ENV = "GRAVLOC_OUTPUT_ROOT"

log = logging.getLogger("gravloc")


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, SetupError):
        return EXIT_SETUP
    if isinstance(exc, (QuadratureError, FitError, SpectrumError, SliceError, GridError, ZeroDivisionError, ValueError)):
        return EXIT_NUMERIC
    if isinstance(exc, OSError):
        return EXIT_IO
    return 1


def resolve_output(path: str) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")
    g = p.add_argument_group("configuration overrides")
    for f in fields(RunConfig):
        g.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, metavar="V", default=None)


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = load(args.config) if args.config else RunConfig()
    overrides = {}
    for f in fields(RunConfig):
        raw = getattr(args, "cfg_" + f.name, None)
        if raw is not None:
            overrides[f.name] = parse_value(f.name, raw)
    return with_overrides(cfg, overrides)


def cmd_derive(cfg: RunConfig, args) -> int:
    setup = cfg.make_setup()
    d = derived_quantities(setup)
    width = max(len(k) for k in d)
    for k, v in d.items():
        print(f"{k:<{width}}  {v:.6e}")
    return EXIT_OK


def cmd_run(cfg: RunConfig, args) -> int:
    out = resolve_output(cfg.output_dir)
    res = run_pipeline(cfg, out)
    print(json.dumps(res.report.as_dict(), indent=2, sort_keys=True))
    print(f"artifacts in {out}", file=sys.stderr)
    return EXIT_OK


def cmd_free_reference(cfg: RunConfig, args) -> int:
    return cmd_run(cfg.replace(gravity=False), args)


def cmd_trace(cfg: RunConfig, args) -> int:
    set_workers(cfg.workers)
    state, setup, _ = read_checkpoint(args.checkpoint)
    cm = CmState(setup, setup.lambda0, state.t)
    sl = trace_out_slice(cm, state, slice_grid_for(cfg, setup, state.t), cfg.quadrature())
    out = resolve_output(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_kernel(sl, out, {"t": state.t, "source": str(args.checkpoint), "quadrature": vars(cfg.quadrature())})
    print(f"kernel written to {out.with_suffix('.csv')}")
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, args) -> int:
    sl, _ = read_kernel(args.kernel)
    setup = cfg.make_setup()
    rep = analyze(sl, {"lambda_g_formula": setup.lambda_g, "lambda_g_quoted": REFERENCE_LAMBDA_G_CM})
    if args.out:
        out = resolve_output(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        rep.write(out)
    print(json.dumps(rep.as_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_scaling_check(cfg: RunConfig, args) -> int:
    out = resolve_output(cfg.output_dir)
    check = scaling_check(cfg, args.lam, out)
    print(json.dumps(check.as_dict(), indent=2, sort_keys=True))
    return EXIT_OK if check.passed else EXIT_CHECK_FAILED


COMMANDS = {
    "derive": (cmd_derive, "print derived scales (lambda_g, tau_g, threshold mass, R)"),
    "run": (cmd_run, "full pipeline: evolve, trace out the hidden body, analyze"),
    "trace": (cmd_trace, "build a density-matrix slice from a checkpoint"),
    "analyze": (cmd_analyze, "fit and entropies from a kernel dump"),
    "scaling-check": (cmd_scaling_check, "compare a run with its lambda-scaled image"),
    "free-reference": (cmd_free_reference, "gravity-free analytic control run"),
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gravloc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gravloc {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        _add_config_flags(p)
        if name == "trace":
            p.add_argument("checkpoint", help="checkpoint CSV (JSON sidecar alongside)")
            p.add_argument("--out", default="kernel", help="output stem")
        elif name == "analyze":
            p.add_argument("kernel", help="kernel CSV (JSON sidecar alongside)")
            p.add_argument("--out", default=None, help="report stem")
        elif name == "scaling-check":
            p.add_argument("--lambda", dest="lam", type=float, default=32.0)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        if args.print_config:
            sys.stdout.write(cfg.dumps())
            return EXIT_OK
        fn, _ = COMMANDS[args.command]
        return fn(cfg, args)
    except Exception as exc:
        code = _exit_code(exc)
        if code == 1:
            raise
        print(f"gravloc: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
