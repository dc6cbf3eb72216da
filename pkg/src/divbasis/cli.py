"""Command-line interface: ``divbasis basis ...`` and ``divbasis run EXPERIMENT ...``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .basisfile import cache_file, cached_basis
from .experiments import (EXPERIMENTS, ExperimentResult, run_conditioning, run_corner, run_hybrid,
                          run_projection)
from .mesh import mesh_from_spec

log = logging.getLogger("divbasis")

SCHEMA_VERSION = 1
DEFAULT_MESH = {"helmholtz": "square8", "laplace": "square8", "poisson": "square8", "corner": "lshape"}
DEFAULT_K = {"projection": 20, "conditioning": 30, "helmholtz": 20, "laplace": 20, "poisson": 20,
             "corner": 8}


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10e}"


def write_table(path: Path, columns: Sequence[str], rows, comment: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_outputs(result: ExperimentResult, out: Path, meta: dict) -> list[Path]:
    """Convergence table, field dump and timings; only the timings file varies between reruns."""
    out.mkdir(parents=True, exist_ok=True)
    tags = "; ".join(f"{k}={v}" for k, v in {**meta, **result.meta}.items())
    conv = out / f"{result.name}_convergence.csv"
    write_table(conv, result.columns, result.rows,
                f"divbasis convergence schema v{SCHEMA_VERSION}; experiment={result.name}; {tags}")
    written = [conv]
    if result.field_rows is not None:
        fpath = out / f"{result.name}_field.csv"
        write_table(fpath, result.field_columns, result.field_rows.tolist(),
                    f"divbasis field schema v{SCHEMA_VERSION}; experiment={result.name}; {tags}")
        written.append(fpath)
    tpath = out / f"{result.name}_timings.csv"
    write_table(tpath, ["phase", "seconds"], [[k, v] for k, v in result.timings.items()],
                f"divbasis timings schema v{SCHEMA_VERSION}; experiment={result.name}")
    written.append(tpath)
    return written


def cmd_basis(args: argparse.Namespace) -> int:
    t = time.perf_counter()
    ref, hit = cached_basis(args.dim, args.degree, args.cache)
    dt = time.perf_counter() - t
    file = cache_file(args.cache, args.dim, args.degree)
    state = "loaded" if hit else "built"
    print(f"{state} d={ref.dim} k={ref.degree} n={ref.n} p={ref.ortho.p} in {dt:.2f}s -> {file}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    name = args.experiment
    k = DEFAULT_K[name] if args.k is None else args.k
    if k < 0:
        raise ValueError(f"--k must be non-negative, got {k}")
    out = Path(args.out)
    meta = {"k": k}
    t = time.perf_counter()
    if name in ("projection", "conditioning"):
        ref, hit = cached_basis(2, k, args.cache) if args.cache else (None, False)
        result = run_projection(k, ref) if name == "projection" else run_conditioning(k, ref)
    else:
        spec = args.mesh or DEFAULT_MESH[name]
        mesh = mesh_from_spec(spec)
        meta["mesh"] = spec
        ref, hit = cached_basis(mesh.dim, k, args.cache) if args.cache else (None, False)
        if name == "corner":
            result = run_corner(mesh, k, ref)
        else:
            result = run_hybrid(name, mesh, k, spec, ref)
    result.timings["total"] = time.perf_counter() - t
    result.timings["basis_cache_hit"] = float(hit)
    for path in write_outputs(result, out, meta):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="divbasis", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("basis", help="build or load a cached reference basis")
    b.add_argument("--dim", type=int, required=True)
    b.add_argument("--degree", type=int, required=True)
    b.add_argument("--cache", required=True, help=".npz file or directory")
    b.set_defaults(func=cmd_basis)

    r = sub.add_parser("run", help="run an experiment and write CSV tables")
    r.add_argument("experiment", choices=EXPERIMENTS)
    r.add_argument("--mesh", help="square8, square:N, lshape[:levels[:ratio[:per_edge]]], "
                                  "cube20, hull2d or a mesh file")
    r.add_argument("--k", type=int, help="maximum degree")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--cache", help="basis cache (.npz file or directory)")
    r.set_defaults(func=cmd_run)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # report every failure as a diagnostic plus nonzero exit
        context = getattr(args, "experiment", args.command)
        print(f"divbasis {context}: error: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
