"""Command line front end.

One subcommand per pipeline entry point plus shape synthesis and a
standalone metrics command.  All heavy lifting lives in the library
modules; this file only parses arguments, moves files, and maps
exceptions to exit codes (0 success, 2 input error, 3 numerical
failure, 4 topology failure).

``CASCADE_THREADS`` caps the worker threads of the numeric backends
when set before any heavy computation runs.
"""

import argparse
import os
import sys
from pathlib import Path

import numpy as np


def _apply_thread_cap():
    raw = os.environ.get("CASCADE_THREADS")
    if not raw:
        return
    try:
        n = max(1, int(raw))
    except ValueError:
        print(f"warning: ignoring CASCADE_THREADS={raw!r}",
              file=sys.stderr)
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))
    try:
        import warnings

        import numba
        with warnings.catch_warnings():
            # backend advisories about threading layers are not actionable
            warnings.simplefilter("ignore")
            numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        pass


def _load_mesh(path):
    from .fileio import read_obj
    from .mesh import build_mesh
    positions, triangles = read_obj(path)
    return build_mesh(positions, triangles)


def _wrap_coarse(coarse, fine):
    from .remesh import CoarseMesh
    return CoarseMesh(mesh=coarse, source_vertex_count=fine.n_vertices,
                      decimation_ratio=coarse.n_vertices / fine.n_vertices,
                      target_reached=True)


def _pipeline_config(args, **extra):
    from .pipeline import PipelineConfig
    from .refine import RefineParams
    rp = RefineParams(iterations=args.refine_iters,
                      fit_weight=args.refine_weight,
                      pin_handles=not args.no_pin)
    return PipelineConfig(
        target_ratio=args.ratio,
        arap_iterations=args.iterations,
        refine=rp,
        skip_refine=args.no_refine,
        seed=args.seed,
        name=args.name or Path(args.mesh).stem,
        cache_path=args.cache,
        colormap_path=getattr(args, "colormap", None),
        csv_path=getattr(args, "csv", None),
        **extra)


def _add_pipeline_args(sub, refine_default=3):
    sub.add_argument("--ratio", type=float, default=0.05,
                     help="coarse vertex fraction (default 0.05)")
    sub.add_argument("--iterations", type=int, default=20,
                     help="deformation solver iterations (default 20)")
    sub.add_argument("--refine-iters", type=int, default=refine_default,
                     help="refinement iterations (0 disables)")
    sub.add_argument("--refine-weight", type=float, default=None,
                     help="refinement fit weight (default: automatic)")
    sub.add_argument("--no-pin", action="store_true",
                     help="let refinement move handle-adjacent vertices")
    sub.add_argument("--no-refine", action="store_true",
                     help="skip the refinement pass entirely")
    sub.add_argument("--cache", default=None,
                     help="correspondence cache file (reused if valid)")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--name", default=None,
                     help="run name for reports (default: mesh stem)")


def _read_index_map(path):
    """Parse ``<coarse_id> <source_id>`` lines; # starts a comment."""
    from .errors import ParseError
    k_ids, s_ids = [], []
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(path, lineno,
                                 "expected '<coarse_id> <source_id>'")
            try:
                k_ids.append(int(parts[0]))
                s_ids.append(int(parts[1]))
            except ValueError:
                raise ParseError(path, lineno, "ids must be integers")
    return (np.array(k_ids, dtype=np.int64),
            np.array(s_ids, dtype=np.int64))


def _coerce(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_remesh(args):
    from .correspond import build_correspondence
    from .fileio import write_corr_cache, write_obj
    from .remesh import decimate
    fine = _load_mesh(args.mesh)
    cm = decimate(fine, args.ratio, seed=args.seed)
    write_obj(args.out, cm.mesh.positions, cm.mesh.triangles)
    if args.cache:
        corr = build_correspondence(fine, cm)
        write_corr_cache(args.cache, corr)
    status = "" if cm.target_reached else " (stopped early: guards)"
    print(f"{fine.n_vertices} -> {cm.n_vertices} vertices{status}")
    return 0


def _cmd_deform(args):
    from .arap import Constraints
    from .fileio import read_constraints, write_obj
    from .pipeline import run_pipeline
    fine = _load_mesh(args.mesh)
    coarse = None
    if args.coarse:
        coarse = _wrap_coarse(_load_mesh(args.coarse), fine)
    ids, targets, mode, weight = read_constraints(args.constraints)
    cons = Constraints(ids, targets, mode=mode, soft_weight=weight)
    cfg = _pipeline_config(args, handles_on_fine=args.handles_on_fine)
    positions, report = run_pipeline(fine, cons, cfg, coarse=coarse)
    write_obj(args.out, positions, fine.triangles)
    print(report.to_text(), end="")
    return 0


def _cmd_align(args):
    from .fileio import read_constraints, write_obj
    from .pipeline import align_isometric
    fine = _load_mesh(args.mesh)
    ids, targets, _, _ = read_constraints(args.landmarks)
    cfg = _pipeline_config(args)
    positions, resid, report = align_isometric(fine, (ids, targets), cfg)
    write_obj(args.out, positions, fine.triangles)
    print(report.to_text(), end="")
    print(f"landmark_residual_mean {resid.mean:.9g}")
    print(f"landmark_residual_max {resid.max:.9g}")
    return 0


def _cmd_pose_transfer(args):
    from .fileio import write_obj
    from .pipeline import pose_transfer
    target = _load_mesh(args.mesh)
    source_rest = _load_mesh(args.source_rest)
    source_posed = _load_mesh(args.source_posed)
    mapping = _read_index_map(args.map)
    cfg = _pipeline_config(args)
    positions, report = pose_transfer(target, source_rest, source_posed,
                                      mapping, cfg)
    write_obj(args.out, positions, target.triangles)
    print(report.to_text(), end="")
    return 0


def _cmd_metrics(args):
    from .fileio import write_ply_colors
    from .metrics import (MetricsReport, edge_error,
                          edge_error_vertex_colors, mesh_volume,
                          vertex_distance)
    rest = _load_mesh(args.rest)
    deformed = _load_mesh(args.deformed)
    per_edge, s = edge_error(rest, deformed)
    closed = not np.any(rest.boundary_edge_mask)
    report = MetricsReport(
        name=Path(args.rest).stem,
        n_fine=rest.n_vertices,
        n_coarse=0,
        mean_edge_error=s.mean,
        median_edge_error=s.median,
        max_edge_error=s.max,
        volume_rest=mesh_volume(rest) if closed else None,
        volume_deformed=(mesh_volume(rest, deformed.positions)
                         if closed else None),
        per_edge_error=per_edge)
    print(report.to_text(), end="")
    d = vertex_distance(rest.positions, deformed.positions)
    print(f"vertex_distance_mean {d.mean:.9g}")
    print(f"vertex_distance_max {d.max:.9g}")
    if args.colormap:
        rgb = edge_error_vertex_colors(rest, per_edge)
        write_ply_colors(args.colormap, deformed.positions,
                         deformed.triangles, rgb)
    return 0


def _cmd_synth(args):
    from .fileio import write_obj
    from .synth import synthesize
    params = {}
    for item in args.set or []:
        if "=" not in item:
            from .errors import InvalidParams
            raise InvalidParams(f"--set needs key=value, got {item!r}")
        key, _, value = item.partition("=")
        params[key.strip()] = _coerce(value.strip())
    mesh = synthesize(args.shape, seed=args.seed, **params)
    write_obj(args.out, mesh.positions, mesh.triangles)
    print(f"{args.shape}: {mesh.n_vertices} vertices, "
          f"{mesh.n_triangles} triangles")
    return 0


def _parse_shape_spec(spec):
    """``name:k=v,k=v`` -> (display name, shape name, params)."""
    from .errors import InvalidParams
    name, _, tail = spec.partition(":")
    name = name.strip()
    params = {}
    if tail:
        for item in tail.split(","):
            if "=" not in item:
                raise InvalidParams(
                    f"shape spec {spec!r}: expected k=v, got {item!r}")
            key, _, value = item.partition("=")
            params[key.strip()] = _coerce(value.strip())
    label = name + "".join(f"-{v}" for v in params.values())
    return label, name, params


def _cmd_bench(args):
    from .pipeline import PipelineConfig, bench
    from .refine import RefineParams
    from .synth import synthesize
    shapes = []
    for spec in args.shape or ["icosphere:subdivisions=4"]:
        label, name, params = _parse_shape_spec(spec)
        shapes.append((label, synthesize(name, seed=args.seed, **params)))
    ratios = [float(r) for r in args.ratios.split(",")]
    cfg = PipelineConfig(
        arap_iterations=args.iterations,
        refine=RefineParams(iterations=args.refine_iters),
        skip_refine=not args.refine,
        seed=args.seed,
        csv_path=args.csv)
    csv = bench(shapes, ratios, cfg)
    print(csv, end="")
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="cascade",
        description="Deform high resolution meshes at coarse-mesh cost.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("remesh", help="decimate a mesh")
    p.add_argument("mesh", help="input OBJ")
    p.add_argument("--ratio", type=float, default=0.05)
    p.add_argument("--out", required=True, help="coarse OBJ path")
    p.add_argument("--cache", default=None,
                   help="also write the correspondence cache here")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_remesh)

    p = subs.add_parser("deform", help="run the deformation pipeline")
    p.add_argument("mesh", help="fine input OBJ")
    p.add_argument("--constraints", required=True,
                   help="handle file: '<vertex> <tx> <ty> <tz>' lines")
    p.add_argument("--out", required=True)
    p.add_argument("--coarse", default=None,
                   help="reuse this coarse OBJ instead of decimating")
    p.add_argument("--handles-on-fine", action="store_true",
                   help="constraint ids address fine vertices (lossy)")
    p.add_argument("--colormap", default=None,
                   help="write edge-error colored PLY here")
    p.add_argument("--csv", default=None, help="append a CSV row here")
    _add_pipeline_args(p)
    p.set_defaults(func=_cmd_deform)

    p = subs.add_parser("align",
                        help="align a shape to sparse landmark targets")
    p.add_argument("mesh", help="shape A, fine OBJ")
    p.add_argument("--landmarks", required=True,
                   help="'<coarse_vertex> <tx> <ty> <tz>' lines")
    p.add_argument("--out", required=True)
    _add_pipeline_args(p)
    p.set_defaults(func=_cmd_align)

    p = subs.add_parser("pose-transfer",
                        help="replay a source deformation on a target")
    p.add_argument("mesh", help="target fine OBJ")
    p.add_argument("--source-rest", required=True)
    p.add_argument("--source-posed", required=True)
    p.add_argument("--map", required=True,
                   help="'<coarse_id> <source_id>' lines")
    p.add_argument("--out", required=True)
    _add_pipeline_args(p)
    p.set_defaults(func=_cmd_pose_transfer)

    p = subs.add_parser("metrics", help="compare a deformation to rest")
    p.add_argument("rest")
    p.add_argument("deformed")
    p.add_argument("--colormap", default=None,
                   help="write edge-error colored PLY here")
    p.set_defaults(func=_cmd_metrics)

    p = subs.add_parser("synth", help="generate a test shape")
    p.add_argument("shape",
                   help="icosphere | torus | bar | grid_patch | disk "
                        "| slab_fold")
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="shape parameter, repeatable")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = subs.add_parser("bench",
                        help="time the pipeline against full-res solves")
    p.add_argument("--csv", default=None, help="write the report here")
    p.add_argument("--shape", action="append", metavar="NAME:K=V,...",
                   help="e.g. torus:n_major=24,n_minor=12 (repeatable)")
    p.add_argument("--ratios", default="0.05",
                   help="comma-separated coarse ratios")
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--refine", action="store_true",
                   help="include the refinement pass in pipeline timing")
    p.add_argument("--refine-iters", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None):
    _apply_thread_cap()
    args = _build_parser().parse_args(argv)
    from .errors import CascadeError, exit_code_for
    try:
        return args.func(args)
    except CascadeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
