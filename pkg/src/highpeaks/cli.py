"""Command-line entry point: ``highpeaks <subcommand> ...``."""

import argparse
import csv
import json
import os
import sys

import numpy as np

from .config import ConfigError, config_from_dict, load_config, validate_config
from .critpoints import find_local_maxima, rescale_points
from .harness import run_experiment, sample_field
from .kacrice import cluster_radius, expected_maxima_density, mu_scaling
from .kernels import KernelError, kernel_from_id
from .palm import palm_couple
from .samplers import Box, GridSpec

SCHEMA_VERSION = 1


def _kernel_args(p):
    p.add_argument("--kernel", default="bargmann-fock", help="kernel id (default bargmann-fock)")
    p.add_argument("--dimension", type=int, default=2)


def _kernel(args):
    return kernel_from_id(args.kernel, dimension=args.dimension)


def _emit(obj, path=None):
    obj = {"schema_version": SCHEMA_VERSION, **obj}
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _grid_csv(path, axes, columns):
    X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", *columns])
        cols = [np.asarray(v).ravel() for v in columns.values()]
        for row in zip(X.ravel(), Y.ravel(), *cols):
            w.writerow([repr(float(v)) for v in row])


def cmd_sample(args):
    kern = _kernel(args)
    field = sample_field(kern, args.side, args.seed, args.sampler, spacing=args.spacing)
    half = args.side / 2.0
    axes = GridSpec.covering(Box((-half, -half), (half, half)), args.spacing).axes()
    if field.evaluator is not None:
        values = field.evaluator.grid(axes)[(0, 0)]
    else:
        g = field.grid
        ix = np.searchsorted(g.axes[0], axes[0] - 1e-9)
        iy = np.searchsorted(g.axes[1], axes[1] - 1e-9)
        values = g.values[np.ix_(ix, iy)]
    _grid_csv(args.out + ".csv", axes, {"value": values})
    _emit({"field": field.metadata(), "csv": args.out + ".csv"}, args.out + ".json")
    return 0


def cmd_maxima(args):
    kern = _kernel(args)
    field = sample_field(kern, args.side, args.seed, args.sampler, spacing=args.grid_factor / args.level)
    half = args.side / 2.0
    mx = find_local_maxima(field, args.level, args.grid_factor, window=Box((-half, -half), (half, half)))
    pat = rescale_points(mx, args.level, args.side)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "x_rescaled", "y_rescaled", "height", "grad_norm",
                        "eig1", "eig2", "morse_index"])
            for p, q in zip(mx, pat.points):
                w.writerow([repr(float(p.location[0])), repr(float(p.location[1])),
                            repr(float(q[0])), repr(float(q[1])), repr(p.height),
                            repr(p.grad_norm), repr(p.hess_eigs[0]), repr(p.hess_eigs[1]),
                            p.morse_index])
    _emit({"level": args.level, "side": args.side, "seed": args.seed, "count": len(mx),
           "mu": pat.scale, "scan_tally": mx.tally, "csv": args.out})
    return 0


def cmd_intensity(args):
    kern = _kernel(args)
    rep = expected_maxima_density(kern, args.level)
    out = rep.to_dict()
    out.pop("schema_version", None)
    out["mu"] = mu_scaling(args.level, kern.dimension)
    out["tau"] = cluster_radius(args.level)
    if args.side is not None:
        out["side"] = args.side
        out["expected_count"] = rep.density * args.side ** kern.dimension
    _emit(out)
    return 0


def cmd_palm(args):
    kern = _kernel(args)
    field = sample_field(kern, args.side, args.seed, "series")
    pair = palm_couple(field, args.level, args.seed)
    half = args.side / 2.0
    axes = GridSpec.covering(Box((-half, -half), (half, half)), args.spacing).axes()
    f = field.evaluator.grid(axes)[(0, 0)]
    ft = pair.tilde_field().evaluator.grid(axes)[(0, 0)]
    _grid_csv(args.out + ".csv", axes, {"f": f, "f_tilde": ft})
    _emit({
        "level": args.level, "seed": args.seed,
        "xi": float(pair.draw.xi), "Z": np.asarray(pair.draw.Z).tolist(),
        "importance_weight_ess": pair.draw.importance_weight_ess,
        "csv": args.out + ".csv",
    }, args.out + ".json")
    return 0


def cmd_diagnose(args):
    raw = {
        "name": "diagnose",
        "seed": args.seed,
        "kernel": {"id": args.kernel, "dimension": args.dimension},
        "levels": [args.level],
        "replicates": args.replicates,
        "grid_factor": args.grid_factor,
        "sampler": args.sampler,
        "tau_policy": args.tau_policy,
        "output_dir": args.out_dir,
        "parallelism": args.parallelism,
    }
    if args.side is not None:
        raw["windows"] = [args.side]
    else:
        raw["window_rule"] = {"type": "target_count", "count": args.target_count}
    cfg = config_from_dict(raw)
    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    run_experiment(cfg, palm_pairs=args.palm_pairs)
    print(os.path.join(args.out_dir, "report.json"))
    return 0


def cmd_experiment(args):
    cfg = load_config(args.config)
    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    out = args.out_dir or cfg.output_dir
    run_experiment(cfg, output_dir=out, cells=args.cell, palm_pairs=args.palm_pairs)
    print(out)
    return 0


def cmd_validate(args):
    res = validate_config(args.config)
    for w in res.warnings:
        print(f"warning: {w}")
    for field, msg in res.errors:
        print(f"error: {field}: {msg}")
    if res.ok:
        print("ok")
    return 0 if res.ok else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="highpeaks", description="High maxima of Gaussian fields.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample a field on a grid")
    _kernel_args(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--side", type=float, default=10.0, help="window side R")
    p.add_argument("--spacing", type=float, default=0.1)
    p.add_argument("--sampler", choices=("series", "grid"), default="series")
    p.add_argument("--out", required=True, help="output prefix (.csv and .json)")
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("maxima", help="local maxima above a level")
    _kernel_args(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--level", type=float, required=True)
    p.add_argument("--side", type=float, default=20.0)
    p.add_argument("--grid-factor", type=float, default=0.25)
    p.add_argument("--sampler", choices=("series", "grid"), default="series")
    p.add_argument("--out", help="CSV of maxima")
    p.set_defaults(fn=cmd_maxima)

    p = sub.add_parser("intensity", help="leading-order density of maxima above u")
    _kernel_args(p)
    p.add_argument("--level", type=float, required=True)
    p.add_argument("--side", type=float)
    p.set_defaults(fn=cmd_intensity)

    p = sub.add_parser("palm", help="Palm-coupled field pair")
    _kernel_args(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--level", type=float, required=True)
    p.add_argument("--side", type=float, default=12.0)
    p.add_argument("--spacing", type=float, default=0.1)
    p.add_argument("--out", required=True, help="output prefix (.csv and .json)")
    p.set_defaults(fn=cmd_palm)

    p = sub.add_parser("diagnose", help="one (u, R) cell of replicates")
    _kernel_args(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--level", type=float, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--side", type=float)
    g.add_argument("--target-count", type=float)
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--grid-factor", type=float, default=0.25)
    p.add_argument("--sampler", choices=("series", "grid"), default="series")
    p.add_argument("--tau-policy", choices=("verbatim", "normalized"), default="verbatim")
    p.add_argument("--palm-pairs", type=int, default=0)
    p.add_argument("--parallelism", type=int)
    p.add_argument("--out-dir", default="highpeaks-out/diagnose")
    p.set_defaults(fn=cmd_diagnose)

    p = sub.add_parser("experiment", help="run a YAML experiment config")
    p.add_argument("config")
    p.add_argument("--out-dir")
    p.add_argument("--cell", type=int, action="append", help="run only this cell (repeatable)")
    p.add_argument("--palm-pairs", type=int, default=0)
    p.set_defaults(fn=cmd_experiment)

    p = sub.add_parser("validate", help="check a YAML experiment config")
    p.add_argument("config")
    p.set_defaults(fn=cmd_validate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        for field, msg in exc.errors:
            print(f"error: {field}: {msg}", file=sys.stderr)
        return 2
    except (KernelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
