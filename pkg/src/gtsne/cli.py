"""``gtsne`` command line.

Exit codes: 0 success, 1 domain error (infeasible perplexity, invalid kernel,
divergence), 2 usage or configuration error, 3 I/O error (unreadable or
malformed input file, unwritable output).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .affinity import joint_affinities
from .calibrate import calibrate_all
from .continuum import big_F_rows, measure_from_spec, sigma_star_field
from .descent import OptimizerConfig, optimize_embedding, run_metadata
from .errors import ConfigError, GTSNEError, InputError, KernelInvalidError
from .files import csv_text, read_json, read_points_csv, write_csv, write_json, write_text
from .kernels import kernels_from_config, validate_input_kernel, validate_output_kernel
from .study import StudyConfig, convergence_study, medians, METRICS

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class FileFailure(Exception):
    """Input file missing, unreadable or malformed."""


def _load_json(path):
    try:
        return read_json(path)
    except (OSError, InputError) as e:
        raise FileFailure(str(e)) from e


def _load_points(path):
    try:
        return read_points_csv(path)
    except (OSError, InputError) as e:
        raise FileFailure(str(e)) from e


def _kernels(path, need_input=True, need_output=True):
    kin, kout = kernels_from_config(_load_json(path))
    if need_input and kin is None:
        raise ConfigError(f"{path}: missing 'input' kernel")
    if need_output and kout is None:
        raise ConfigError(f"{path}: missing 'output' kernel")
    return kin, kout


def _require_valid(kin=None, kout=None, d=1):
    for rep in ([validate_input_kernel(kin, d)] if kin else []) + ([validate_output_kernel(kout)] if kout else []):
        if not rep.overall:
            raise KernelInvalidError(f"{rep.kernel} fails checks {rep.failed()}")


def cmd_validate_kernel(args):
    kin, kout = _kernels(args.config, need_input=False, need_output=False)
    if kin is None and kout is None:
        raise ConfigError(f"{args.config}: no kernel given")
    reports = {}
    if kin is not None:
        reports["input"] = validate_input_kernel(kin, args.dim).to_dict()
    if kout is not None:
        reports["output"] = validate_output_kernel(kout).to_dict()
    ok = all(r["overall"] for r in reports.values())
    print(json.dumps({"overall": ok, **reports}, indent=2))
    return EXIT_OK if ok else EXIT_DOMAIN


def cmd_calibrate(args):
    x = _load_points(args.input)
    kin, _ = _kernels(args.config, need_output=False)
    _require_valid(kin=kin, d=x.shape[1])
    cal = calibrate_all(x, kin, args.rho, tol=args.tol)
    write_csv(args.out, ["index", "sigma", "residual", "iterations"], cal.rows())
    return EXIT_OK


def cmd_embed(args):
    x = _load_points(args.input)
    kin, kout = _kernels(args.config)
    _require_valid(kin, kout, d=x.shape[1])
    opt = OptimizerConfig(
        iterations=args.iters,
        learning_rate=args.lr,
        momentum=args.momentum,
        seed=args.seed,
        stop_tol=args.stop_tol,
        exaggeration=args.exaggeration,
        exaggeration_iters=args.exaggeration_iters,
    )
    if x.shape[0] == 2:
        P, cal = np.array([[0.0, 0.5], [0.5, 0.0]]), None
    else:
        cal = calibrate_all(x, kin, args.rho)
        P = joint_affinities(x, cal.sigmas, kin)
    emb = optimize_embedding(P, kout, args.dim, opt)
    # everything is computed before anything is written
    out = Path(args.out)
    files = {
        "embedding.csv": csv_text(None, emb.coords.tolist()),
        "trace.csv": csv_text(["iteration", "loss", "grad_norm"], [(i, l, g) for i, (l, g) in enumerate(zip(emb.trace, emb.grad_norms))]),
    }
    if cal is not None:
        files["sigmas.csv"] = csv_text(["index", "sigma", "residual", "iterations"], cal.rows())
    for name, text in files.items():
        write_text(out / name, text)
    write_json(out / "metadata.json", run_metadata(emb, kin, kout, args.rho, opt))
    return EXIT_OK


def _eval_points(measure, per_axis):
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(measure.lower, measure.upper)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def cmd_continuum(args):
    spec = _load_json(args.measure)
    kin, _ = _kernels(args.config, need_output=False)
    measure = measure_from_spec(spec, nodes=args.nodes)
    _require_valid(kin=kin, d=measure.dim)
    if args.at:
        xs = _load_points(args.at)
    else:
        xs = _eval_points(measure, args.points or (101 if measure.dim == 1 else 21))
    sig = sigma_star_field(measure, kin, args.rho, xs)
    resid = big_F_rows(measure, kin, args.rho, xs, sig)
    header = [f"x{k}" for k in range(measure.dim)] + ["sigma_star", "F_residual"]
    text = csv_text(header, [list(x) + [s, r] for x, s, r in zip(xs, sig, resid)])
    out = Path(args.out)
    write_text(out / "continuum.csv", text)
    write_json(
        out / "metadata.json",
        {"measure": spec, "nodes_per_axis": measure.nodes_per_axis, "rho": args.rho, "kernel": kin.to_config(), "points": len(xs)},
    )
    return EXIT_OK


def cmd_study(args):
    raw = _load_json(args.config)
    if not isinstance(raw, dict):
        raise ConfigError(f"{args.config}: study config must be a JSON object")
    if args.output_dir:
        raw = dict(raw, output_dir=args.output_dir)
    cfg = StudyConfig.from_dict(raw)
    _require_valid(cfg.kernel_in(), cfg.kernel_out(), d=measure_from_spec(cfg.measure, nodes=2).dim)
    rows = convergence_study(cfg)
    failed = [r for r in rows if r.error]
    summary = {m: {str(n): v for n, v in medians(rows, m).items()} for m in METRICS}
    print(json.dumps({"rows": len(rows), "failed_cells": len(failed), "medians": summary}, indent=2))
    return EXIT_DOMAIN if failed else EXIT_OK


def _positive(v):
    x = float(v)
    if not (x > 0 and math.isfinite(x)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {v}")
    return x


def build_parser():
    p = argparse.ArgumentParser(prog="gtsne", description="Generalized-kernel t-SNE and convergence diagnostics.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    s = sub.add_parser("validate-kernel", help="check kernel validity conditions, print a JSON report")
    s.add_argument("--config", required=True, help="kernel JSON")
    s.add_argument("--dim", type=int, default=1, help="ambient input dimension d (default 1)")
    s.set_defaults(func=cmd_validate_kernel)

    s = sub.add_parser("calibrate", help="solve per-point bandwidths")
    s.add_argument("--input", required=True, help="points CSV, no header")
    s.add_argument("--config", required=True, help="kernel JSON")
    s.add_argument("--rho", required=True, type=_positive, help="perplexity fraction; perplexity is n*rho")
    s.add_argument("--tol", type=_positive, default=1e-8)
    s.add_argument("--out", required=True, help="output CSV")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("embed", help="calibrate, build affinities and run gradient descent")
    s.add_argument("--input", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--rho", required=True, type=_positive)
    s.add_argument("--dim", type=int, default=2, help="embedding dimension s")
    s.add_argument("--iters", type=int, default=1000)
    s.add_argument("--lr", type=_positive, default=None, help="learning rate (default n)")
    s.add_argument("--momentum", type=float, default=0.5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--stop-tol", type=_positive, default=1e-7)
    s.add_argument("--exaggeration", type=_positive, default=1.0, help="early exaggeration factor (off by default)")
    s.add_argument("--exaggeration-iters", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("continuum", help="continuum bandwidth field of a measure")
    s.add_argument("--measure", required=True, help="measure JSON")
    s.add_argument("--config", required=True, help="kernel JSON")
    s.add_argument("--rho", required=True, type=_positive)
    s.add_argument("--nodes", type=int, default=None, help="quadrature nodes per axis")
    s.add_argument("--points", type=int, default=None, help="evaluation points per axis")
    s.add_argument("--at", default=None, help="CSV of evaluation points instead of a grid")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_continuum)

    s = sub.add_parser("study", help="run a convergence study from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--output-dir", default=None, help="override output_dir from the config")
    s.set_defaults(func=cmd_study)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"gtsne: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileFailure as e:
        print(f"gtsne: cannot read input: {e}", file=sys.stderr)
        return EXIT_IO
    except GTSNEError as e:
        print(f"gtsne: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as e:
        print(f"gtsne: I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
