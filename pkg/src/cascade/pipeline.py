"""End-to-end orchestration and the two application drivers.

``run_pipeline`` chains the stages: decimate the fine mesh, bind a
correspondence, solve the deformation on the coarse mesh, reconstruct
the fine detail, optionally refine, and report metrics with per-stage
wall times.  Handles address coarse vertices by default; fine-vertex
handles can be mapped onto the coarse mesh as a documented lossy
convenience.

``align_isometric`` and ``pose_transfer`` are thin drivers that turn
sparse landmark or displacement data into soft coarse constraints and
run the same pipeline.  ``bench`` times the pipeline against a
full-resolution solve of the identical deformation scenario.
"""

import os
from dataclasses import dataclass, field, replace
from time import perf_counter

import numpy as np

from . import fileio
from .arap import Constraints, arap_solve, fit_rigid
from .correspond import build_correspondence
from .errors import (
    CacheMismatch,
    IncompatibleConnectivity,
    IncompatibleSourcePair,
    IndexOutOfRange,
    InsufficientLandmarks,
    InvalidParams,
    SparseMapTooSmall,
)
from .lrf import reconstruct
from .mesh import check_deformation_compatible
from .metrics import (
    MetricsReport,
    edge_error,
    edge_error_vertex_colors,
    mesh_volume,
    vertex_distance,
)
from .refine import RefineParams, refine
from .remesh import decimate


@dataclass
class PipelineConfig:
    """Tuning knobs shared by every pipeline entry point.

    ``cache_path`` persists the correspondence across runs (rebuilt and
    rewritten automatically when it does not match the input meshes).
    ``colormap_path`` writes the deformed mesh with per-vertex edge
    error colors; ``csv_path`` appends the report as a CSV row.
    """

    target_ratio: float = 0.05
    arap_iterations: int = 20
    refine: RefineParams = field(default_factory=RefineParams)
    skip_refine: bool = False
    handles_on_fine: bool = False
    seed: int = 0
    name: str = "mesh"
    cache_path: str = None
    colormap_path: str = None
    csv_path: str = None

    def __post_init__(self):
        if not 0.0 < self.target_ratio < 1.0:
            raise InvalidParams("target_ratio must lie in (0, 1)")
        if self.arap_iterations < 0:
            raise InvalidParams("arap_iterations must be >= 0")


def _load_or_build_correspondence(fine, cm, path):
    if path and os.path.exists(path):
        try:
            return fileio.read_corr_cache(path, fine, cm.mesh)
        except CacheMismatch:
            pass                       # stale cache: rebuild below
    corr = build_correspondence(fine, cm)
    if path:
        fileio.write_corr_cache(path, corr)
    return corr


def _map_fine_handles(fine, cons, corr, coarse):
    """Move fine-vertex handles onto coarse vertices (lossy).

    Each fine handle follows its bound coarse triangle's nearest
    corner; handles landing on the same coarse vertex average their
    targets.
    """
    cons.validate_for(fine)
    ids = cons.ids
    corners = coarse.triangles[corr.triangle[ids]]
    d = np.linalg.norm(
        coarse.positions[corners] - fine.positions[ids][:, None, :], axis=2)
    picked = corners[np.arange(len(ids)), d.argmin(axis=1)].astype(np.int64)
    uniq, inv = np.unique(picked, return_inverse=True)
    acc = np.zeros((len(uniq), 3))
    np.add.at(acc, inv, cons.targets)
    acc /= np.bincount(inv)[:, None]
    return Constraints(uniq, acc, mode=cons.mode,
                       soft_weight=cons.soft_weight)


def _handle_bound_fine_vertices(corr, coarse, handle_ids):
    """Fine vertices riding on a coarse triangle that touches a handle."""
    touched = np.isin(coarse.triangles[corr.triangle], handle_ids)
    return np.flatnonzero(touched.any(axis=1))


def _run_stages(fine, make_constraints, cfg, coarse=None):
    """Shared pipeline body; constraints are built after decimation.

    ``make_constraints(cm, corr)`` returns the coarse Constraints.
    A prebuilt ``coarse`` (CoarseMesh) skips the remesh stage.
    Returns (positions, report, coarse, coarse_positions).
    """
    timings = {}
    t_start = perf_counter()

    t = perf_counter()
    cm = decimate(fine, cfg.target_ratio, seed=cfg.seed) \
        if coarse is None else coarse
    timings["remesh"] = perf_counter() - t

    t = perf_counter()
    corr = _load_or_build_correspondence(fine, cm, cfg.cache_path)
    timings["correspondence"] = perf_counter() - t

    cons = make_constraints(cm, corr)

    t = perf_counter()
    cpos, trace = arap_solve(cm.mesh, cons,
                             iterations=cfg.arap_iterations)
    timings["coarse_solve"] = perf_counter() - t

    t = perf_counter()
    rec = reconstruct(cpos, corr)
    timings["reconstruct"] = perf_counter() - t

    t = perf_counter()
    if cfg.skip_refine or cfg.refine.iterations == 0:
        positions = rec
        timings["refine"] = 0.0
    else:
        pins = _handle_bound_fine_vertices(corr, cm.mesh, cons.ids)
        positions = refine(fine, rec, params=cfg.refine, pin_ids=pins)
        timings["refine"] = perf_counter() - t

    timings["total"] = perf_counter() - t_start

    per_edge, s = edge_error(fine, positions)
    closed = not np.any(fine.boundary_edge_mask)
    report = MetricsReport(
        name=cfg.name,
        n_fine=fine.n_vertices,
        n_coarse=cm.n_vertices,
        mean_edge_error=s.mean,
        median_edge_error=s.median,
        max_edge_error=s.max,
        volume_rest=mesh_volume(fine) if closed else None,
        volume_deformed=mesh_volume(fine, positions) if closed else None,
        arap_energy_final=float(trace[-1]) if len(trace) else None,
        timings=timings,
        per_edge_error=per_edge,
    )
    return positions, report, cm, cpos


def _emit_outputs(fine, positions, report, cfg):
    if cfg.colormap_path:
        rgb = edge_error_vertex_colors(fine, report.per_edge_error)
        fileio.write_ply_colors(cfg.colormap_path, positions,
                                fine.triangles, rgb)
    if cfg.csv_path:
        fresh = not os.path.exists(cfg.csv_path)
        with open(cfg.csv_path, "a") as fh:
            if fresh:
                fh.write(MetricsReport.csv_header() + "\n")
            fh.write(report.to_csv_row() + "\n")


def run_pipeline(fine, coarse_constraints, cfg=None, coarse=None):
    """Deform ``fine`` by solving on its decimated stand-in.

    ``coarse_constraints`` address coarse vertex ids (the result of
    decimating ``fine`` at ``cfg.target_ratio``, which is
    deterministic) unless ``cfg.handles_on_fine`` is set, in which
    case they address fine vertices and are mapped across.  Passing a
    prebuilt ``coarse`` (CoarseMesh) reuses it instead of decimating.

    Returns ``(deformed fine positions, MetricsReport)``.
    """
    if cfg is None:
        cfg = PipelineConfig()

    def make(cm, corr):
        if cfg.handles_on_fine:
            return _map_fine_handles(fine, coarse_constraints, corr,
                                     cm.mesh)
        return coarse_constraints

    positions, report, _, _ = _run_stages(fine, make, cfg, coarse=coarse)
    _emit_outputs(fine, positions, report, cfg)
    return positions, report


def _as_sparse_map(pairs):
    """Normalize ``{id: point}`` or ``(ids, points)`` to index arrays."""
    if isinstance(pairs, dict):
        ids = np.fromiter(pairs.keys(), dtype=np.int64, count=len(pairs))
        vals = np.array([pairs[k] for k in ids], dtype=np.float64)
        order = np.argsort(ids)
        return ids[order], vals[order].reshape(-1, 3)
    ids, vals = pairs
    return (np.asarray(ids, dtype=np.int64).reshape(-1),
            np.asarray(vals, dtype=np.float64).reshape(-1, 3))


def align_isometric(fine_a, landmarks, cfg=None):
    """Align shape A onto sparse target points sampled on a shape B.

    ``landmarks`` maps coarse vertex ids of A to 3D target points
    (dict or ``(ids, points)`` pair); they become soft constraints so
    noisy targets bend rather than break the shape.  Needs at least 4
    non-coplanar landmarks to pin down the pose.

    Returns ``(aligned fine positions, landmark residual summary,
    MetricsReport)``; the summary measures how far the aligned coarse
    landmarks ended from their targets.
    """
    if cfg is None:
        cfg = PipelineConfig()
    ids, targets = _as_sparse_map(landmarks)
    if len(ids) != len(np.unique(ids)):
        raise InvalidParams("duplicate landmark ids")

    def make(cm, corr):
        if ids.min(initial=0) < 0 or ids.max(initial=-1) >= cm.n_vertices:
            raise IndexOutOfRange(
                f"landmark ids must lie in [0, {cm.n_vertices})")
        if len(ids) < 4:
            raise InsufficientLandmarks("need at least 4 landmarks")
        rest = cm.mesh.positions[ids]
        sv = np.linalg.svd(rest - rest.mean(axis=0), compute_uv=False)
        if sv[2] <= 1e-8 * sv[0]:
            raise InsufficientLandmarks(
                "landmarks are coplanar; the pose is ambiguous")
        return Constraints(ids, targets, mode="soft")

    positions, report, cm, cpos = _run_stages(fine_a, make, cfg)
    _emit_outputs(fine_a, positions, report, cfg)
    residual = vertex_distance(cpos[ids], targets)
    return positions, residual, report


def _as_index_map(pairs):
    """Normalize ``{k: s}`` or ``(k_ids, s_ids)`` to index arrays."""
    if isinstance(pairs, dict):
        k = np.fromiter(pairs.keys(), dtype=np.int64, count=len(pairs))
        s = np.fromiter((pairs[i] for i in k), dtype=np.int64,
                        count=len(pairs))
        order = np.argsort(k)
        return k[order], s[order]
    k, s = pairs
    return (np.asarray(k, dtype=np.int64).reshape(-1),
            np.asarray(s, dtype=np.int64).reshape(-1))


def pose_transfer(target_fine, source_rest, source_posed, coarse_to_source,
                  cfg=None):
    """Replay a source deformation onto an unrelated target mesh.

    ``coarse_to_source`` maps coarse vertex ids of the decimated
    target to source vertex ids and must cover at least 10% of the
    coarse vertices.  Each mapped coarse vertex is softly pulled to
    its rest position plus the source vertex displacement, rotated by
    the best rigid alignment of the mapped source points onto the
    coarse rest points.

    Returns ``(posed fine positions, MetricsReport)``.
    """
    if cfg is None:
        cfg = PipelineConfig()
    try:
        check_deformation_compatible(source_rest, source_posed)
    except IncompatibleConnectivity as exc:
        raise IncompatibleSourcePair(
            f"source pair is not a deformation: {exc}") from exc
    k_ids, s_ids = _as_index_map(coarse_to_source)
    if len(k_ids) != len(np.unique(k_ids)):
        raise InvalidParams("duplicate coarse ids in map")
    if len(s_ids) and (s_ids.min() < 0
                       or s_ids.max() >= source_rest.n_vertices):
        raise IndexOutOfRange(
            f"source ids must lie in [0, {source_rest.n_vertices})")

    def make(cm, corr):
        if len(k_ids) < 0.10 * cm.n_vertices:
            raise SparseMapTooSmall(
                f"map covers {len(k_ids)} of {cm.n_vertices} coarse "
                "vertices; need at least 10%")
        if k_ids.min(initial=0) < 0 or k_ids.max(initial=-1) >= \
                cm.n_vertices:
            raise IndexOutOfRange(
                f"coarse ids must lie in [0, {cm.n_vertices})")
        src = source_rest.positions[s_ids]
        rot, _ = fit_rigid(src, cm.mesh.positions[k_ids])
        disp = source_posed.positions[s_ids] - src
        targets = cm.mesh.positions[k_ids] + disp @ rot.T
        return Constraints(k_ids, targets, mode="soft")

    positions, report, _, _ = _run_stages(target_fine, make, cfg)
    _emit_outputs(target_fine, positions, report, cfg)
    return positions, report


# ---------------------------------------------------------------------------
# benchmark harness


def band_constraints(positions, angle=np.pi / 3, band=0.05):
    """Canonical bend scenario from a geometric predicate.

    Pins the low-z band at rest and rotates the high-z band about the
    x axis through its centroid.  Defined purely on positions so the
    identical scenario can be posed on a mesh and on its decimation.
    """
    z = positions[:, 2]
    zmin, zmax = z.min(), z.max()
    span = zmax - zmin
    if span <= 0.0:
        raise InvalidParams("bend scenario needs extent along z")
    lo = np.flatnonzero(z <= zmin + band * span)
    hi = np.flatnonzero(z >= zmax - band * span)
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])
    pivot = positions[hi].mean(axis=0)
    ids = np.concatenate([lo, hi])
    targets = np.concatenate(
        [positions[lo], (positions[hi] - pivot) @ rot.T + pivot])
    return Constraints(ids, targets)


def bench(shapes, ratios, cfg=None, angle=np.pi / 3, band=0.05):
    """Time the pipeline against full-resolution solves of the same bend.

    ``shapes`` is an iterable of ``(name, Mesh)``.  For each shape and
    ratio the bend scenario is solved once at full resolution and once
    through the pipeline with the same iteration count, and a CSV row
    with both times and the speedup factor is emitted.  Refinement is
    off by default here because it iterates on the fine mesh, which is
    exactly the cost the pipeline exists to avoid.

    Returns the CSV text (also written to ``cfg.csv_path`` if set).
    """
    if cfg is None:
        cfg = PipelineConfig(skip_refine=True)
    rows = [MetricsReport.csv_header() + ",t_baseline,speedup"]
    for name, mesh in shapes:
        baseline_cons = band_constraints(mesh.positions, angle, band)
        for ratio in ratios:
            t0 = perf_counter()
            arap_solve(mesh, baseline_cons,
                       iterations=cfg.arap_iterations)
            t_base = perf_counter() - t0

            run_cfg = replace(cfg, target_ratio=ratio,
                              name=f"{name}@{ratio:g}", csv_path=None,
                              colormap_path=None)
            _, report, _, _ = _run_stages(
                mesh,
                lambda cm, corr: band_constraints(cm.mesh.positions,
                                                  angle, band),
                run_cfg)
            speedup = t_base / report.timings["total"]
            rows.append(report.to_csv_row()
                        + f",{t_base:.6f},{speedup:.3f}")
    csv = "\n".join(rows) + "\n"
    if cfg.csv_path:
        with open(cfg.csv_path, "w") as fh:
            fh.write(csv)
    return csv
