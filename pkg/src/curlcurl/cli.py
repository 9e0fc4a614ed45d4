"""Command-line entry point: case runs, patch stability experiments, and
mesh file validation.

Three subcommands:

``run``
    Solve a manufactured case over a sequence of uniformly refined
    meshes, estimate the error per level, and write one CSV row per
    level plus a sidecar CSV of Dorfler-marked edges.

``patch-experiment``
    Measure indicator-to-dual-norm stability ratios on one interior
    edge patch with seeded random data over a range of degrees.

``check-mesh``
    Parse and validate an ASCII mesh file, printing a summary.

CSV output uses RFC 4180 quoting, ``.`` decimals, and 17 significant
digits; identical configuration and seed reproduce byte-identical files.
Wall-clock timings go to stdout, never into the CSV.  The environment
variable ``CURLCURL_THREADS`` caps the estimator worker count.

Exit codes: 0 success, 2 invalid configuration, 3 file failure
(malformed or unreadable mesh, unwritable output), 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cases import (
    cube_solution,
    generate_cube,
    generate_lshape,
    lshape_solution,
)
from .equilibration import estimate
from .mesh import (
    TAG_DIRICHLET,
    TAG_NEUMANN,
    Mesh,
    MeshFormatError,
    dorfler_mark,
    read_mesh,
    uniform_refine,
)
from .oracles import stability_experiment
from .solver import CurlCurlProblem, energy_error, solve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MESH = 3
EXIT_NUMERICAL = 4

CASES = ("cube-smooth", "lshape-singular", "file")

RUN_COLUMNS = (
    "level",
    "h",
    "n_dofs",
    "error",
    "eta_cofree",
    "eta_ofree",
    "upper_bound",
    "max_efficiency",
)
MARKS_COLUMNS = ("level", "edge", "indicator")
EXPERIMENT_COLUMNS = (
    "degree",
    "eta_patch",
    "eta_sweep",
    "dual_norm",
    "ratio_patch",
    "ratio_sweep",
)


@dataclass(frozen=True)
class CaseConfig:
    """Validated configuration of a `run` invocation."""

    case: str
    mesh_path: Optional[str]
    n: int
    degree: int
    levels: int
    estimator: str
    theta: float
    c_l: float
    c_pfw: float
    seed: int
    out: str

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}")
        if self.case == "file" and not self.mesh_path:
            raise ValueError("--case file requires --mesh")
        if self.case != "file" and self.n < 1:
            raise ValueError("--N must be at least 1")
        if self.degree < 0:
            raise ValueError("--degree must be nonnegative")
        if self.levels < 1:
            raise ValueError("--levels must be at least 1")
        if self.estimator not in ("patch", "sweep"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("--theta must lie in (0, 1]")
        if self.c_l <= 0:
            raise ValueError("--c-l must be positive")
        if self.c_pfw <= 0:
            raise ValueError("--c-pfw must be positive")


def thread_count() -> int:
    """Worker cap from CURLCURL_THREADS; defaults to serial."""
    raw = os.environ.get("CURLCURL_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"CURLCURL_THREADS must be an integer, got {raw!r}")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def load_case(case: str, n: int, mesh_path: Optional[str]):
    """Initial mesh and exact solution for a named case.

    The `file` case pairs an imported mesh with the smooth manufactured
    solution, so its error column is meaningful only when the mesh
    discretizes the unit cube with boundary tags matching that solution.
    """
    if case == "cube-smooth":
        return generate_cube(n, "N"), cube_solution()
    if case == "lshape-singular":
        return generate_lshape(n, "D"), lshape_solution()
    return read_mesh(mesh_path), cube_solution()


def marks_path(out: str) -> str:
    stem, ext = os.path.splitext(out)
    return f"{stem}.marks{ext or '.csv'}"


def run_case(config: CaseConfig, log=print) -> dict:
    """Solve, estimate, and report one case over its refinement levels.

    Writes the per-level CSV to `config.out` and the marked-edge sidecar
    next to it; returns the paths and last-level numbers.
    """
    mesh, exact = load_case(config.case, config.n, config.mesh_path)
    threads = thread_count()
    rows = []
    mark_rows = []
    for level in range(config.levels):
        if level > 0:
            mesh = uniform_refine(mesh)
        problem = CurlCurlProblem(mesh, config.degree, exact.source,
                                  exact=exact, C_L=config.c_l)
        t0 = time.perf_counter()
        result = solve(problem)
        t_solve = time.perf_counter() - t0
        t0 = time.perf_counter()
        report = estimate(problem, result.potential,
                          method=config.estimator, c_pfw=config.c_pfw,
                          threads=threads)
        t_estimate = time.perf_counter() - t0

        err, per_edge = energy_error(result.potential, exact.curl)
        etas = report.etas
        with np.errstate(divide="ignore", invalid="ignore"):
            eff = np.where(per_edge > 0, etas / per_edge, np.nan)
        max_eff = float(np.nanmax(eff)) if np.isfinite(eff).any() else np.nan

        rows.append((
            level,
            float(mesh.h_tet.max()),
            result.potential.space.ndof,
            float(err),
            report.eta_cofree,
            report.eta_ofree,
            report.upper_bound,
            max_eff,
        ))
        edge_ids = np.array([est.edge for est in report.estimates])
        for k in dorfler_mark(etas, config.theta):
            mark_rows.append((level, int(edge_ids[k]), float(etas[k])))
        log(f"level {level}: {mesh.num_tets} tets, "
            f"{result.potential.space.ndof} dofs, error {err:.6e}, "
            f"solve {t_solve:.2f}s, estimate {t_estimate:.2f}s")

    _write_csv(config.out, RUN_COLUMNS, rows)
    _write_csv(marks_path(config.out), MARKS_COLUMNS, mark_rows)
    log(f"wrote {config.out} and {marks_path(config.out)}")
    return {
        "out": config.out,
        "marks": marks_path(config.out),
        "rows": rows,
    }


def _write_csv(path: str, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                v if isinstance(v, (int, str)) else _fmt(v) for v in row
            )


def _first_interior_edge(mesh: Mesh) -> int:
    for e in range(mesh.num_edges):
        if mesh.edge_patch(e).patch_type == "interior":
            return e
    raise ValueError("mesh has no interior edge patch")


def parse_degrees(text: str):
    """Degree list from 'a..b' range syntax or comma-separated values."""
    text = text.strip()
    if ".." in text:
        lo, _, hi = text.partition("..")
        degrees = list(range(int(lo), int(hi) + 1))
    else:
        degrees = [int(tok) for tok in text.split(",") if tok.strip()]
    if not degrees or any(d < 0 for d in degrees):
        raise ValueError(f"bad degree list {text!r}")
    return degrees


def patch_experiment(case: str, n: int, mesh_path: Optional[str], degrees,
                     enrich: int, seed: int, out: str, log=print) -> dict:
    """Stability ratios on the first interior edge patch of the case mesh."""
    if enrich < 0:
        raise ValueError("--enrich must be nonnegative")
    mesh, _ = load_case(case, n, mesh_path)
    e = _first_interior_edge(mesh)
    patch = mesh.edge_patch(e)
    log(f"edge {e}: {patch.patch_type} patch, {patch.num_tets} tets, "
        f"degrees {degrees}, enrichment {enrich}, seed {seed}")
    t0 = time.perf_counter()
    se = stability_experiment(patch, degrees, delta=enrich, seed=seed, edge=e)
    rows = [
        (
            int(p),
            float(se.eta_patch[i]),
            float(se.eta_sweep[i]),
            float(se.dual_norms[i]),
            float(se.ratios_patch[i]),
            float(se.ratios_sweep[i]),
        )
        for i, p in enumerate(se.degrees)
    ]
    _write_csv(out, EXPERIMENT_COLUMNS, rows)
    log(f"ratio spread: patch {se.spread('patch'):.4f}, "
        f"sweep {se.spread('sweep'):.4f} "
        f"({time.perf_counter() - t0:.2f}s)")
    log(f"wrote {out}")
    return {"out": out, "experiment": se}


def check_mesh(path: str, log=print) -> dict:
    """Parse, validate, and summarize an ASCII mesh file."""
    mesh = read_mesh(path)
    bf = mesh.boundary_faces()
    tags = mesh.face_tags[bf]
    types = {}
    kappa_max = 0.0
    for e in range(mesh.num_edges):
        patch = mesh.edge_patch(e)
        types[patch.patch_type] = types.get(patch.patch_type, 0) + 1
        kappa_max = max(kappa_max, patch.kappa)
    summary = {
        "vertices": mesh.num_vertices,
        "tets": mesh.num_tets,
        "edges": mesh.num_edges,
        "faces": mesh.num_faces,
        "boundary_faces": int(bf.size),
        "dirichlet_faces": int((tags == TAG_DIRICHLET).sum()),
        "neumann_faces": int((tags == TAG_NEUMANN).sum()),
        "h_min": float(mesh.h_tet.min()),
        "h_max": float(mesh.h_tet.max()),
        "patch_types": types,
        "kappa_max": float(kappa_max),
    }
    log(f"{path}: {summary['vertices']} vertices, {summary['tets']} tets, "
        f"{summary['edges']} edges, {summary['faces']} faces")
    log(f"boundary: {summary['dirichlet_faces']} Dirichlet, "
        f"{summary['neumann_faces']} Neumann")
    log(f"h in [{summary['h_min']:.6g}, {summary['h_max']:.6g}], "
        f"max patch aspect {summary['kappa_max']:.6g}")
    log("edge patches: "
        + ", ".join(f"{k} {v}" for k, v in sorted(types.items())))
    return summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curlcurl",
        description="Curl-curl solves with equilibrated error estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_case_args(p):
        p.add_argument("--case", choices=CASES, required=True)
        p.add_argument("--mesh", help="mesh file path for --case file")
        p.add_argument("--N", type=int, default=2, dest="n",
                       help="cells per side of the built-in generators")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="output CSV path")

    runp = sub.add_parser("run", help="solve and estimate over levels")
    add_case_args(runp)
    runp.add_argument("--degree", type=int, default=0)
    runp.add_argument("--levels", type=int, default=1)
    runp.add_argument("--estimator", choices=("patch", "sweep"),
                      default="patch")
    runp.add_argument("--theta", type=float, default=0.5,
                      help="Dorfler marking fraction")
    runp.add_argument("--c-l", type=float, default=1.0, dest="c_l",
                      help="lifting constant in the upper bound")
    runp.add_argument("--c-pfw", type=float, default=1.0, dest="c_pfw",
                      help="patch Poincare-Friedrichs-Weber constant")

    expp = sub.add_parser("patch-experiment",
                          help="stability ratios on a fixed patch")
    add_case_args(expp)
    expp.add_argument("--degrees", default="0..4",
                      help="range 'a..b' or comma-separated list")
    expp.add_argument("--enrich", type=int, default=3,
                      help="dual-norm enrichment degree increment")

    chkp = sub.add_parser("check-mesh", help="validate an ASCII mesh file")
    chkp.add_argument("path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = CaseConfig(
                case=args.case, mesh_path=args.mesh, n=args.n,
                degree=args.degree, levels=args.levels,
                estimator=args.estimator, theta=args.theta, c_l=args.c_l,
                c_pfw=args.c_pfw, seed=args.seed, out=args.out,
            )
        elif args.command == "patch-experiment":
            degrees = parse_degrees(args.degrees)
            if args.case == "file" and not args.mesh:
                raise ValueError("--case file requires --mesh")
        thread_count()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "run":
            run_case(config)
        elif args.command == "patch-experiment":
            patch_experiment(args.case, args.n, args.mesh, degrees,
                             args.enrich, args.seed, args.out)
        else:
            check_mesh(args.path)
    except MeshFormatError as exc:
        print(f"error: {args.path if args.command == 'check-mesh' else args.mesh}: "
              f"{exc}", file=sys.stderr)
        return EXIT_MESH
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MESH
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
