"""Command-line interface: offline database builds, solves, benchmarks.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bench, eigsolve, polymesh, rb_offline

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="rbvem",
        description="Polygonal virtual elements with reduced-basis virtual functions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    off = sub.add_parser("offline", help="build and store an offline database")
    off.add_argument("--N", type=int, required=True, help="polygon vertex count")
    off.add_argument("--M", type=int, required=True, help="reduced dimension")
    off.add_argument("--L", type=int, required=True, help="snapshot sample count")
    off.add_argument("--level", type=int, required=True, help="reference refinement level")
    off.add_argument("--seed", type=int, required=True)
    off.add_argument("--out", required=True, help="output database path")
    off.add_argument("--sampler", choices=("mixture", "generic"), default="mixture")

    sol = sub.add_parser("solve", help="solve one eigen or source problem")
    sol.add_argument("--problem", default="eig", choices=("eig", "source"))
    sol.add_argument("--method", required=True, choices=("vem", "rbvem", "rbstab"))
    sol.add_argument("--mesh", required=True,
                     help="mesh file path or family:size (e.g. dyadic:8, voronoi:64)")
    sol.add_argument("--alpha", type=float, default=1.0)
    sol.add_argument("--beta", type=float, default=1.0)
    sol.add_argument("--chi", type=int, default=1, choices=(0, 1))
    sol.add_argument("--M", type=int, default=1)
    sol.add_argument("--num-eigs", type=int, default=10)
    sol.add_argument("--bc", default="dirichlet", choices=("dirichlet", "neumann"))
    sol.add_argument("--delta", type=float, default=1.0,
                     help="diffusivity on region-1 cells (region 0 keeps 1.0)")
    sol.add_argument("--db", action="append", default=[],
                     help="offline database path (repeatable, one per vertex count)")
    sol.add_argument("--seed", type=int, default=7)
    sol.add_argument("--lloyd-iters", type=int, default=10)
    sol.add_argument("--out", required=True, help="output CSV path")

    ben = sub.add_parser("bench", help="run a configured experiment")
    ben.add_argument("--config", required=True, help="key=value config file")
    return parser


def _load_solve_mesh(spec, seed, lloyd_iters):
    if ":" in spec:
        family, _, size = spec.partition(":")
        try:
            size = int(size)
        except ValueError as exc:
            raise bench.ConfigError(f"bad mesh size in {spec!r}") from exc
        return bench.make_mesh(family, size, seed=seed, lloyd_iters=lloyd_iters)
    return polymesh.load_mesh(spec)


def _cmd_offline(args):
    db = rb_offline.build_offline_db(
        args.N, args.M, args.L, seed=args.seed, level=args.level, sampler=args.sampler
    )
    rb_offline.save_offline_db(db, args.out)
    print(f"offline database N={db.n_gon} M={db.m} L={db.l} level={db.level} -> {args.out}")
    return EXIT_OK


def _cmd_solve(args):
    mesh = _load_solve_mesh(args.mesh, args.seed, args.lloyd_iters)
    db_map = None
    if args.method in ("rbvem", "rbstab"):
        if args.db:
            db_map = {}
            for path in args.db:
                db = rb_offline.load_offline_db(path)
                db_map[db.n_gon] = db.truncated(min(args.M, db.m))
        else:
            db_map = bench.db_map_for_mesh(mesh, args.M)
        missing = {len(c) for c in mesh.cells} - set(db_map)
        if missing:
            raise bench.ConfigError(f"no offline database for N in {sorted(missing)}")
    kappa = {0: 1.0, 1: args.delta}
    system = eigsolve.assemble_global(
        mesh, args.method, alpha=args.alpha, beta=args.beta, chi=args.chi,
        db_map=db_map, kappa_by_region=kappa, bc=args.bc, keep_cells=False,
    )
    reduced = eigsolve.apply_boundary_conditions(system)
    if args.problem == "source":
        raise bench.ConfigError(
            "use 'bench' with problem=source_conv for source-problem studies"
        )
    extra = 1 if args.bc == "neumann" else 0
    spectrum = eigsolve.solve_gevp(reduced.k, reduced.m, args.num_eigs + extra, bc=args.bc)
    if args.bc == "neumann":
        spectrum = eigsolve.drop_zero_modes(spectrum)
    lam = spectrum.eigenvalues[: args.num_eigs]
    rows = [(mesh.h, i + 1, v, "", "") for i, v in enumerate(lam)]
    bench.write_csv(args.out, ["h", "index", "lambda_h", "lambda_exact", "rel_error"], rows)
    print(f"{len(lam)} eigenvalues -> {args.out}")
    return EXIT_OK


def _cmd_bench(args):
    config = bench.parse_config_file(args.config)
    report = bench.run_experiment(config)
    for line in report.summary_lines():
        print(line)
    if config.out:
        print(f"CSV written with prefix {config.out}")
    return EXIT_OK


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command == "offline":
            return _cmd_offline(args)
        if args.command == "solve":
            return _cmd_solve(args)
        return _cmd_bench(args)
    except (bench.ConfigError, polymesh.MeshFormatError, FileNotFoundError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (polymesh.MeshError, np.linalg.LinAlgError, ValueError, RuntimeError) as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
