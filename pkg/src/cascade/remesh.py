"""Topology-preserving mesh decimation with quadric error metrics."""

from dataclasses import dataclass

import numpy as np

from . import _decimate
from .errors import EdgeNotFound, InvalidParams, TopologyError
from .mesh import Mesh, build_mesh, euler_characteristic


@dataclass(frozen=True)
class CoarseMesh:
    """A decimated mesh plus provenance needed to map results back.

    ``target_reached`` is False when no further edge could be collapsed
    without breaking topology or geometry guards before hitting the
    requested vertex count.
    """

    mesh: Mesh
    source_vertex_count: int
    decimation_ratio: float
    target_reached: bool

    @property
    def n_vertices(self):
        return self.mesh.n_vertices


def link_condition(mesh, edge):
    """Check whether collapsing ``edge`` preserves manifold topology.

    ``edge`` is a pair of vertex ids joined by an edge of ``mesh``
    (raises EdgeNotFound otherwise).  True means the collapse keeps the
    surface a manifold of unchanged Euler characteristic: the common
    neighborhoods of the endpoints are exactly the edge's opposite
    vertices, the collapse does not close a tetrahedral pocket, and an
    interior edge may not join two boundary vertices.
    """
    u, v = int(edge[0]), int(edge[1])
    eid = mesh.edge_id(u, v)
    if eid < 0:
        raise EdgeNotFound(f"no edge between vertices {u} and {v}")
    tri_ids = [t for t in mesh.edge_triangles[eid] if t >= 0]
    opposite = set()
    for t in tri_ids:
        for x in mesh.triangles[t]:
            if x != u and x != v:
                opposite.add(int(x))
    nu = set(int(x) for x in mesh.vertex_neighbors(u))
    nv = set(int(x) for x in mesh.vertex_neighbors(v))
    if (nu & nv) != opposite:
        return False
    if len(tri_ids) == 2:
        if len(opposite) != 2:
            return False            # both triangles share one opposite
        w1, w2 = sorted(opposite)
        if _triangle_exists(mesh, u, w1, w2) and \
                _triangle_exists(mesh, v, w1, w2):
            return False
        bnd = mesh.boundary_vertex_mask
        if bnd[u] and bnd[v]:
            return False
    else:
        # collapsing a boundary ear would orphan the opposite vertex
        w = next(iter(opposite))
        if len(mesh.vertex_triangles(w)) < 2:
            return False
    return True


def _triangle_exists(mesh, a, b, c):
    want = {a, b, c}
    for t in mesh.vertex_triangles(a):
        if set(int(x) for x in mesh.triangles[t]) == want:
            return True
    return False


def _boundary_constraint_quadrics(mesh):
    """Per-vertex quadrics penalizing movement off the boundary polyline.

    For each boundary edge, the plane through the edge perpendicular to
    its triangle, weighted by the squared edge length, is charged to
    both endpoints.  Surface planes alone assign zero cost to eroding a
    flat region's outline; these keep the boundary in place.
    """
    n = mesh.n_vertices
    quad = np.zeros((n, 10))
    bmask = mesh.boundary_edge_mask
    if not np.any(bmask):
        return quad
    be = mesh.edges[bmask]
    bt = mesh.edge_triangles[bmask].max(axis=1)
    p = mesh.positions
    e = p[be[:, 1]] - p[be[:, 0]]
    m = np.cross(e, mesh.triangle_cross()[bt])
    norm = np.linalg.norm(m, axis=1)
    ok = norm > 0.0
    m[ok] /= norm[ok, None]
    w = np.einsum("ij,ij->i", e, e) * ok
    d = -np.einsum("ij,ij->i", m, p[be[:, 0]])
    k = np.empty((len(be), 10))
    k[:, 0] = m[:, 0] * m[:, 0]
    k[:, 1] = m[:, 0] * m[:, 1]
    k[:, 2] = m[:, 0] * m[:, 2]
    k[:, 3] = m[:, 0] * d
    k[:, 4] = m[:, 1] * m[:, 1]
    k[:, 5] = m[:, 1] * m[:, 2]
    k[:, 6] = m[:, 1] * d
    k[:, 7] = m[:, 2] * m[:, 2]
    k[:, 8] = m[:, 2] * d
    k[:, 9] = d * d
    k *= w[:, None]
    np.add.at(quad, be[:, 0], k)
    np.add.at(quad, be[:, 1], k)
    return quad


def decimate(mesh, target_ratio, seed=0):
    """Decimate ``mesh`` to about ``target_ratio`` of its vertex count.

    Iterative edge collapse ordered by quadric error, with guards that
    keep the result a valid manifold of the same Euler characteristic
    and boundary loop count.  The collapse order is a deterministic
    function of the input mesh; ``seed`` is accepted for interface
    stability but does not influence the result.

    Returns a :class:`CoarseMesh`.  The target vertex count is
    ``max(4, ceil(target_ratio * n_vertices))``; if the mesh is already
    at or below it, the input mesh is returned unchanged.
    """
    if not (0.0 < target_ratio < 1.0):
        raise InvalidParams(
            f"target_ratio must be in (0, 1), got {target_ratio}")
    del seed
    n = mesh.n_vertices
    target = max(4, int(np.ceil(target_ratio * n)))
    if n <= target:
        return CoarseMesh(mesh, n, target_ratio, True)

    pos = np.array(mesh.positions, dtype=np.float64)
    tris = np.array(mesh.triangles, dtype=np.int32)
    valive, reached = _decimate.decimate_kernel(
        pos, tris, target, mesh.area_epsilon(),
        _boundary_constraint_quadrics(mesh),
        mesh.boundary_vertex_mask.copy())

    keep = np.flatnonzero(valive)
    remap = np.full(n, -1, dtype=np.int64)
    remap[keep] = np.arange(keep.shape[0])
    alive_t = tris[:, 0] != -1
    new_tris = remap[tris[alive_t]]
    coarse = build_mesh(pos[keep], new_tris)

    if euler_characteristic(coarse) != euler_characteristic(mesh) or \
            coarse.boundary_loop_count() != mesh.boundary_loop_count():
        raise TopologyError(
            "decimation altered surface topology; this indicates a bug "
            "in the collapse guards")
    return CoarseMesh(coarse, n, target_ratio, bool(reached))
