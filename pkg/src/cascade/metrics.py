"""Quantitative evaluation: edge distortion, volume, distances, report.

The main quality measure is per-edge relative length distortion of a
deformation against the rest mesh.  A report bundles the summary
statistics with volumes, final deformation energy, and stage timings,
and serializes to a flat text block or a CSV row for the benchmark
harness.  Edge errors can be baked into per-vertex hot-colormap colors
for visual inspection.
"""

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    IncompatibleConnectivity,
    OpenMesh,
    SizeMismatch,
    ZeroLengthRestEdge,
)

TIMING_STAGES = ("remesh", "correspondence", "coarse_solve", "reconstruct",
                 "refine", "total")


@dataclass
class EdgeErrorSummary:
    mean: float
    median: float
    max: float


def _positions_of(mesh, deformed):
    if hasattr(deformed, "triangles"):
        if not np.array_equal(deformed.triangles, mesh.triangles):
            raise IncompatibleConnectivity(
                "deformed mesh connectivity differs from rest mesh")
        return deformed.positions
    p = np.asarray(deformed, dtype=np.float64)
    if p.shape != (mesh.n_vertices, 3):
        raise IncompatibleConnectivity(
            f"need positions shaped ({mesh.n_vertices}, 3), got {p.shape}")
    return p


def edge_error(rest, deformed):
    """Relative length distortion per edge, plus summary statistics.

    For edge (i, j): ``| |p'_i - p'_j| - |p_i - p_j| | / |p_i - p_j|``.
    ``deformed`` is a positions array or a mesh sharing connectivity.

    Returns ``(per_edge, summary)``.

    Raises
    ------
    IncompatibleConnectivity
        Wrong size or different connectivity.
    ZeroLengthRestEdge
        A rest edge has zero length, so its distortion is undefined.
    """
    p = _positions_of(rest, deformed)
    e = rest.edges
    rest_len = np.linalg.norm(
        rest.positions[e[:, 1]] - rest.positions[e[:, 0]], axis=1)
    if np.any(rest_len == 0.0):
        bad = int(np.flatnonzero(rest_len == 0.0)[0])
        raise ZeroLengthRestEdge(
            f"rest edge {bad} {tuple(e[bad])} has zero length")
    def_len = np.linalg.norm(p[e[:, 1]] - p[e[:, 0]], axis=1)
    err = np.abs(def_len - rest_len) / rest_len
    summary = EdgeErrorSummary(mean=float(err.mean()),
                               median=float(np.median(err)),
                               max=float(err.max()))
    return err, summary


def mesh_volume(mesh, positions=None):
    """Signed enclosed volume of a closed, coherently oriented mesh.

    Divergence-theorem sum of signed tetrahedron volumes against the
    origin; positive for outward orientation.

    Raises
    ------
    OpenMesh
        If the mesh has boundary edges.
    """
    if np.any(mesh.boundary_edge_mask):
        raise OpenMesh("volume needs a closed mesh; boundary edges present")
    p = mesh.positions if positions is None else _positions_of(
        mesh, positions)
    t = mesh.triangles
    cross = np.cross(p[t[:, 1]], p[t[:, 2]])
    return float(np.einsum("ij,ij->", p[t[:, 0]], cross) / 6.0)


@dataclass
class VertexDistanceSummary:
    per_vertex: np.ndarray
    mean: float
    max: float


def vertex_distance(a, b):
    """Per-vertex Euclidean distances between two position sets."""
    pa = np.asarray(a, dtype=np.float64)
    pb = np.asarray(b, dtype=np.float64)
    if pa.shape != pb.shape:
        raise SizeMismatch(f"position shapes differ: {pa.shape} vs "
                           f"{pb.shape}")
    d = np.linalg.norm(pa - pb, axis=1)
    return VertexDistanceSummary(per_vertex=d, mean=float(d.mean()),
                                 max=float(d.max()))


# ---------------------------------------------------------------------------
# report


@dataclass
class MetricsReport:
    """One pipeline run's quality and timing numbers.

    ``volume_rest`` and ``volume_deformed`` stay None for open meshes.
    ``timings`` maps stage name to seconds; see :data:`TIMING_STAGES`.
    """

    name: str
    n_fine: int
    n_coarse: int
    mean_edge_error: float
    median_edge_error: float
    max_edge_error: float
    volume_rest: float = None
    volume_deformed: float = None
    arap_energy_final: float = None
    timings: dict = field(default_factory=dict)
    per_edge_error: np.ndarray = field(default=None, repr=False)

    @property
    def volume_ratio(self):
        if self.volume_rest in (None, 0.0) or self.volume_deformed is None:
            return None
        return self.volume_deformed / self.volume_rest

    def to_text(self):
        """Flat ``key value`` lines, one per metric."""
        out = io.StringIO()
        out.write(f"name {self.name}\n")
        out.write(f"n_fine {self.n_fine}\n")
        out.write(f"n_coarse {self.n_coarse}\n")
        out.write(f"mean_edge_error {self.mean_edge_error:.9g}\n")
        out.write(f"median_edge_error {self.median_edge_error:.9g}\n")
        out.write(f"max_edge_error {self.max_edge_error:.9g}\n")
        if self.volume_rest is not None:
            out.write(f"volume_rest {self.volume_rest:.9g}\n")
            out.write(f"volume_deformed {self.volume_deformed:.9g}\n")
            out.write(f"volume_ratio {self.volume_ratio:.9g}\n")
        if self.arap_energy_final is not None:
            out.write(f"arap_energy_final {self.arap_energy_final:.9g}\n")
        for stage in TIMING_STAGES:
            if stage in self.timings:
                out.write(f"time_{stage} {self.timings[stage]:.6f}\n")
        return out.getvalue()

    @staticmethod
    def csv_header():
        stages = ",".join(f"time_{s}" for s in TIMING_STAGES)
        return ("mesh,n_fine,n_coarse," + stages
                + ",mean_edge_error,max_edge_error,volume_ratio,energy")

    def to_csv_row(self):
        def num(x):
            return "" if x is None else f"{x:.9g}"

        stages = ",".join(num(self.timings.get(s)) for s in TIMING_STAGES)
        return (f"{self.name},{self.n_fine},{self.n_coarse},{stages},"
                f"{num(self.mean_edge_error)},{num(self.max_edge_error)},"
                f"{num(self.volume_ratio)},{num(self.arap_energy_final)}")


# ---------------------------------------------------------------------------
# colormap export


def hot_colormap(values, vmax=None):
    """Map scalars to black-red-yellow-white uint8 colors.

    Linear ramp over [0, vmax]; ``vmax`` defaults to the 95th
    percentile of ``values`` (a robust top end for error fields).
    """
    v = np.asarray(values, dtype=np.float64)
    if vmax is None:
        vmax = float(np.percentile(v, 95)) if len(v) else 1.0
    if vmax <= 0.0:
        vmax = 1.0
    s = np.clip(v / vmax, 0.0, 1.0)
    rgb = np.empty(v.shape + (3,))
    rgb[..., 0] = np.clip(3.0 * s, 0.0, 1.0)
    rgb[..., 1] = np.clip(3.0 * s - 1.0, 0.0, 1.0)
    rgb[..., 2] = np.clip(3.0 * s - 2.0, 0.0, 1.0)
    return (rgb * 255.0 + 0.5).astype(np.uint8)


def edge_error_vertex_colors(mesh, per_edge, vmax=None):
    """Average edge errors onto endpoints and color with the hot ramp."""
    per_edge = np.asarray(per_edge, dtype=np.float64)
    if per_edge.shape != (mesh.n_edges,):
        raise SizeMismatch(
            f"need one error per edge ({mesh.n_edges}), got "
            f"{per_edge.shape}")
    acc = np.zeros(mesh.n_vertices)
    cnt = np.zeros(mesh.n_vertices)
    for k in range(2):
        np.add.at(acc, mesh.edges[:, k], per_edge)
        np.add.at(cnt, mesh.edges[:, k], 1.0)
    cnt[cnt == 0.0] = 1.0
    return hot_colormap(acc / cnt, vmax)
