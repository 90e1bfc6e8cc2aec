"""Command line: ``nambd validate | rates | parse-check``.

Exit codes: 0 all verdicts valid / success, 1 some verdict invalid, 2 usage,
input or internal error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._jit import backend_name
from .dynamics import default_threads, run_trajectory
from .errors import ModelError, NamError
from .experiment import load_spec, run_experiment, summarize
from .model import EndState
from .rates import (analytic_beta, association_rate, beta_infinity, pmf_from_dict,
                    rate_with_potential, smoluchowski_rate)
from .spacepi import lower_to_nam, parse_model, parse_model_file
from .stochastics import RandomStream, cell_seed, replication_seed

EXIT_OK, EXIT_INVALID, EXIT_ERROR = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ERROR)


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_ERROR


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


# ----------------------------------------------------------------------------
# validate

_OUTCOME_NAMES = {0: EndState.REACTED.value, 1: EndState.ESCAPED.value, 2: "StepLimit"}


def _write_replications(path: Path, verdicts):
    with path.open("w", encoding="utf-8") as fh:
        for v in verdicts:
            runs = v.runs
            if runs is None:
                continue
            for i in range(len(runs)):
                rec = {"cell": v.cell, "replication": i,
                       "end_state": _OUTCOME_NAMES[int(runs.outcome[i])],
                       "steps": int(runs.steps[i]), "model_time": float(runs.model_time[i])}
                fh.write(json.dumps(rec) + "\n")


def _write_traces(out: Path, spec, verdicts, per_cell: int):
    tdir = out / "traces"
    tdir.mkdir(exist_ok=True)
    points = {i: (g, eng) for i, g, eng in spec.cells()}
    for v in verdicts:
        g, eng = points[v.cell]
        cseed = cell_seed(spec.master_seed, v.cell)
        for rep in range(min(per_cell, v.estimate.n if v.estimate else 0)):
            stream = RandomStream(eng.rng_kind, replication_seed(cseed, rep))
            with (tdir / f"cell{v.cell:03d}_rep{rep:03d}.jsonl").open("w", encoding="utf-8") as fh:
                def emit(rec, fh=fh):
                    fh.write(json.dumps(rec) + "\n")
                try:
                    run_trajectory(g.geometry, eng, stream, pmf=g.pmf, trace=emit)
                except NamError as exc:
                    emit({"error": f"{type(exc).__name__}: {exc}"})


def cmd_validate(args) -> int:
    try:
        spec = load_spec(args.spec)
    except FileNotFoundError as exc:
        return _fail(f"cannot read spec: {exc.filename or args.spec}")
    except (NamError, ValueError, OSError) as exc:
        return _fail(f"invalid spec {args.spec}: {exc}")
    except Exception as exc:  # yaml.YAMLError and friends
        return _fail(f"cannot parse spec {args.spec}: {type(exc).__name__}: {exc}")
    if args.seed is not None:
        spec = spec.with_seed(args.seed)

    threads = args.threads or default_threads()
    started = _dt.datetime.now(_dt.timezone.utc)
    t0 = time.perf_counter()
    verdicts = run_experiment(spec, threads=threads)
    wall = time.perf_counter() - t0
    report = summarize(verdicts, spec.c)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats = ("csv", "json") if args.format == "both" else (args.format,)
    if "csv" in formats:
        (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    if "json" in formats:
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    _write_replications(out / "replications.jsonl", verdicts)
    if args.trace:
        _write_traces(out, spec, verdicts, args.trace_count)

    manifest = {
        "manifest_version": 1,
        "artifact": "nambd",
        "artifact_version": __version__,
        "spec": spec.to_dict(),
        "master_seed": spec.master_seed,
        "cells": [{"cell": v.cell, "engine": v.engine.label(), "D": v.geometry.D,
                   "n": v.estimate.n if v.estimate else 0,
                   "beta_hat": v.estimate.beta_hat if v.estimate else None,
                   "std_error": v.estimate.std_error if v.estimate else None,
                   "valid": v.valid, "error": v.error} for v in verdicts],
        "runtime": {
            "started_utc": started.isoformat(),
            "wall_time_s": wall,
            "cell_wall_time_s": [v.wall_time for v in verdicts],
            "threads": threads,
            "backend": backend_name(),
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    for row in report.rows:
        bh = "n/a" if row["beta_hat"] is None else f"{row['beta_hat']:.4f}"
        ci = "" if row["ci_half_width"] is None else f" ±{row['ci_half_width']:.4f}"
        flag = " [" + row["error"] + "]" if row["error"] else ""
        print(f"{row['engine']:<32} D={row['D']:<8g} beta={bh}{ci} ref={row['beta_ref']:.4f} "
              f"n={row['n']:<7d} {'VALID' if row['valid'] else 'INVALID'}{flag}")
    return EXIT_OK if report.all_valid else EXIT_INVALID


# ----------------------------------------------------------------------------
# rates

def _load_pmf(path: str):
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    if p.suffix == ".spi":
        from .spacepi import _lower_pmf
        return _lower_pmf(parse_model(text).pmf_decl)
    if p.suffix.lower() in (".yaml", ".yml"):
        import yaml
        return pmf_from_dict(yaml.safe_load(text))
    return pmf_from_dict(json.loads(text))


def cmd_rates(args) -> int:
    try:
        pmf = _load_pmf(args.pmf) if args.pmf else None
        beta_a = analytic_beta(args.a, args.b, args.q)
        k_b = smoluchowski_rate(args.D, args.b)
        k_q = smoluchowski_rate(args.D, args.q)
        beta_inf = beta_infinity(beta_a, k_b, k_q)
        out = {"a": args.a, "b": args.b, "q": args.q, "D": args.D, "beta_a": beta_a,
               "k_b": k_b, "k_q": k_q, "beta_inf": beta_inf,
               "k": association_rate(k_b, beta_inf), "k_over_4piDa": None}
        out["k_over_4piDa"] = out["k"] / (4 * math.pi * args.D * args.a)
        if pmf is not None:
            out["k_b_pmf"] = rate_with_potential(args.D, args.b, pmf)
            out["k_q_pmf"] = rate_with_potential(args.D, args.q, pmf)
    except FileNotFoundError as exc:
        return _fail(f"cannot read potential file: {exc.filename}")
    except (NamError, ValueError, KeyError, OSError) as exc:
        return _fail(f"{type(exc).__name__}: {exc}")
    if args.format == "json":
        print(json.dumps(out, indent=2))
    else:
        for k, v in out.items():
            print(f"{k:<14} {v:.10g}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# parse-check

def cmd_parse_check(args) -> int:
    try:
        doc = parse_model_file(args.model)
        low = lower_to_nam(doc, args.D)
    except FileNotFoundError:
        return _fail(f"cannot read model file {args.model}")
    except ModelError as exc:
        return _fail(f"{args.model}:{exc}")
    except NamError as exc:
        return _fail(f"{args.model}: {type(exc).__name__}: {exc}")
    g = low.geometry
    print(f"{args.model}: ok")
    print(f"  processes: {' | '.join(doc.initial_process)}")
    print(f"  moving={low.moving} fixed={low.fixed} exit={low.exit}")
    print(f"  a={g.a:g} b={g.b:g} q={g.q:g} D={g.D:g}")
    print(f"  pmf: {'not defined' if low.pmf is None else low.pmf}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nambd", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"nambd {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate", help="run a validation experiment from a spec file")
    v.add_argument("--spec", required=True, help="experiment spec (JSON/YAML) or a run manifest")
    v.add_argument("--out", default="nambd-out", help="output directory")
    v.add_argument("--seed", type=_u64, default=None, help="override the master seed")
    v.add_argument("--format", choices=("csv", "json", "both"), default="both")
    v.add_argument("--trace", action="store_true", help="write step-by-step trajectory traces")
    v.add_argument("--trace-count", type=int, default=1, help="traced replications per cell")
    v.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: NAMBD_THREADS or CPU count)")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("rates", help="analytic NAM rates for a geometry")
    for name in ("a", "b", "q", "D"):
        r.add_argument(f"--{name}", type=float, required=True)
    r.add_argument("--pmf", default=None, help="potential file (.json/.yaml/.spi)")
    r.add_argument("--format", choices=("text", "json"), default="text")
    r.set_defaults(func=cmd_rates)

    c = sub.add_parser("parse-check", help="parse and lower a SpacePi model file")
    c.add_argument("--model", required=True)
    c.add_argument("--D", type=float, default=1.0, help="diffusivity used for lowering")
    c.set_defaults(func=cmd_parse_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return _fail("interrupted")
    except Exception as exc:  # last resort: never leak a traceback as exit 1
        if os.environ.get("NAMBD_DEBUG"):
            raise
        return _fail(f"internal error: {type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
