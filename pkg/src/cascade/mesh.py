"""Manifold triangle mesh: validation, adjacency, and differential operators.

A :class:`Mesh` couples a vertex position array with a triangle index
array and derived connectivity (unique edges, edge-triangle incidence,
vertex-triangle incidence).  Construction goes through :func:`build_mesh`,
which enforces the manifold contract:

* every edge borders one or two triangles (boundary edges allowed),
* adjacent triangles wind consistently (outward when the surface closes),
* each vertex has a single triangle fan,
* the surface is one connected component,
* no triangle repeats a vertex.

Instances are immutable; :meth:`Mesh.with_positions` produces a deformed
copy that shares all connectivity arrays.
"""

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    DegenerateTriangle,
    Disconnected,
    IncompatibleConnectivity,
    InconsistentOrientation,
    IndexOutOfRange,
    InvalidParams,
    NonManifoldEdge,
    NonManifoldVertex,
    SizeMismatch,
)

# relative area floor: triangles with area <= AREA_EPS_FACTOR * diag^2
# (diag = bounding box diagonal) count as degenerate
AREA_EPS_FACTOR = 1e-12


class Mesh:
    """Immutable manifold triangle mesh.

    Do not call the constructor directly; use :func:`build_mesh`, which
    validates its input, or :meth:`with_positions` for deformed copies.

    Attributes
    ----------
    positions : (n, 3) float64 array
        Vertex coordinates.  Write-protected.
    triangles : (m, 3) int32 array
        Vertex indices, counter-clockwise seen from outside.
    edges : (e, 2) int32 array
        Unique undirected edges, each row sorted, rows in lexicographic
        order.
    edge_triangles : (e, 2) int32 array
        Triangles incident to each edge; column 1 is -1 on the boundary.
    boundary_edge_mask : (e,) bool array
        True where an edge borders exactly one triangle.
    """

    def __init__(self, positions, triangles, derived):
        self.positions = positions
        self.triangles = triangles
        (self.edges, self.edge_triangles, self.boundary_edge_mask,
         self._vt_offsets, self._vt_tris, self._corner_edge) = derived
        self._cache = {}

    # -- basic counts ------------------------------------------------------

    @property
    def n_vertices(self):
        return self.positions.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    def _derived_tuple(self):
        return (self.edges, self.edge_triangles, self.boundary_edge_mask,
                self._vt_offsets, self._vt_tris, self._corner_edge)

    def with_positions(self, positions):
        """Return a mesh with new vertex positions and shared connectivity."""
        p = np.ascontiguousarray(positions, dtype=np.float64)
        if p.shape != self.positions.shape:
            raise SizeMismatch(
                f"expected positions of shape {self.positions.shape}, "
                f"got {p.shape}")
        p = p.copy()
        p.flags.writeable = False
        return Mesh(p, self.triangles, self._derived_tuple())

    # -- adjacency ---------------------------------------------------------

    def vertex_triangles(self, v):
        """Indices of triangles incident to vertex ``v``."""
        if not 0 <= v < self.n_vertices:
            raise IndexOutOfRange(f"vertex {v} not in mesh of "
                                  f"{self.n_vertices} vertices")
        return self._vt_tris[self._vt_offsets[v]:self._vt_offsets[v + 1]]

    def vertex_neighbors(self, v):
        """Sorted array of vertices sharing an edge with ``v``."""
        tris = self.triangles[self.vertex_triangles(v)]
        nbr = np.unique(tris)
        return nbr[nbr != v]

    def edge_id(self, u, v):
        """Index into ``edges`` for the undirected edge (u, v), or -1."""
        a, b = (u, v) if u < v else (v, u)
        lo = np.searchsorted(self.edges[:, 0], a, side="left")
        hi = np.searchsorted(self.edges[:, 0], a, side="right")
        j = np.searchsorted(self.edges[lo:hi, 1], b)
        k = lo + j
        if k < hi and self.edges[k, 1] == b:
            return int(k)
        return -1

    @property
    def boundary_vertex_mask(self):
        """Boolean mask of vertices lying on at least one boundary edge."""
        if "bvm" not in self._cache:
            mask = np.zeros(self.n_vertices, dtype=bool)
            be = self.edges[self.boundary_edge_mask]
            mask[be.ravel()] = True
            mask.flags.writeable = False
            self._cache["bvm"] = mask
        return self._cache["bvm"]

    def boundary_loop_count(self):
        """Number of closed boundary loops (0 for a closed surface)."""
        if "loops" not in self._cache:
            be = self.edges[self.boundary_edge_mask]
            if len(be) == 0:
                self._cache["loops"] = 0
            else:
                n = self.n_vertices
                g = coo_matrix(
                    (np.ones(len(be)), (be[:, 0], be[:, 1])), shape=(n, n))
                _, labels = connected_components(g, directed=False)
                self._cache["loops"] = len(np.unique(labels[be.ravel()]))
        return self._cache["loops"]

    # -- per-triangle geometry --------------------------------------------

    def triangle_cross(self):
        """(m, 3) array of edge cross products (2 * area * unit normal)."""
        if "cross" not in self._cache:
            p = self.positions
            t = self.triangles
            c = np.cross(p[t[:, 1]] - p[t[:, 0]], p[t[:, 2]] - p[t[:, 0]])
            c.flags.writeable = False
            self._cache["cross"] = c
        return self._cache["cross"]

    def triangle_areas(self):
        """(m,) array of triangle areas."""
        if "areas" not in self._cache:
            a = 0.5 * np.linalg.norm(self.triangle_cross(), axis=1)
            a.flags.writeable = False
            self._cache["areas"] = a
        return self._cache["areas"]

    def vertex_normals(self):
        """(n, 3) area-weighted unit vertex normals (zero if undefined)."""
        if "vnormals" not in self._cache:
            c = self.triangle_cross()
            acc = np.zeros((self.n_vertices, 3))
            for k in range(3):
                np.add.at(acc, self.triangles[:, k], c)
            norm = np.linalg.norm(acc, axis=1)
            ok = norm > 0.0
            acc[ok] /= norm[ok, None]
            acc.flags.writeable = False
            self._cache["vnormals"] = acc
        return self._cache["vnormals"]

    def bbox_diagonal(self):
        """Length of the axis-aligned bounding box diagonal."""
        if "diag" not in self._cache:
            span = self.positions.max(axis=0) - self.positions.min(axis=0)
            self._cache["diag"] = float(np.linalg.norm(span))
        return self._cache["diag"]

    def area_epsilon(self):
        """Degeneracy threshold: triangles this small count as zero-area."""
        return AREA_EPS_FACTOR * self.bbox_diagonal() ** 2

    def mean_edge_length(self):
        if "mel" not in self._cache:
            e = self.positions[self.edges[:, 1]] - self.positions[self.edges[:, 0]]
            self._cache["mel"] = float(np.linalg.norm(e, axis=1).mean())
        return self._cache["mel"]

    def __repr__(self):
        return (f"Mesh({self.n_vertices} vertices, {self.n_triangles} "
                f"triangles, {self.n_edges} edges)")


def build_mesh(positions, triangles):
    """Validate arrays and assemble a :class:`Mesh`.

    Parameters
    ----------
    positions : (n, 3) array_like of float
    triangles : (m, 3) array_like of int
        Counter-clockwise vertex indices per triangle.

    Raises
    ------
    IndexOutOfRange
        If a triangle refers to a vertex that does not exist.
    DegenerateTriangle
        If a triangle repeats a vertex index.
    NonManifoldEdge
        If an edge borders three or more triangles.
    InconsistentOrientation
        If two adjacent triangles traverse their shared edge in the
        same direction (opposite winding), or a triangle repeats.
    NonManifoldVertex
        If the triangles around a vertex form more than one fan.
    Disconnected
        If the surface is not a single connected component, or a
        vertex belongs to no triangle.
    """
    p = np.ascontiguousarray(positions, dtype=np.float64)
    t = np.ascontiguousarray(triangles, dtype=np.int32)
    if p.ndim != 2 or p.shape[1] != 3:
        raise InvalidParams(f"positions must be (n, 3), got {p.shape}")
    if t.ndim != 2 or t.shape[1] != 3:
        raise InvalidParams(f"triangles must be (m, 3), got {t.shape}")
    if t.shape[0] < 1:
        raise InvalidParams("mesh needs at least one triangle")
    if not np.all(np.isfinite(p)):
        raise InvalidParams("positions contain non-finite values")
    n = p.shape[0]
    m = t.shape[0]
    if t.size and (t.min() < 0 or t.max() >= n):
        raise IndexOutOfRange(
            f"triangle indices must lie in [0, {n}), found "
            f"[{t.min()}, {t.max()}]")
    if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2])
              | (t[:, 2] == t[:, 0])):
        bad = int(np.flatnonzero(
            (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2])
            | (t[:, 2] == t[:, 0]))[0])
        raise DegenerateTriangle(f"triangle {bad} repeats a vertex index")

    # directed halfedges, block b holds edge (t[:, b], t[:, (b+1) % 3]);
    # halfedge r belongs to triangle r % m, block r // m
    he = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    und = np.sort(he, axis=1)
    order = np.lexsort((und[:, 1], und[:, 0]))
    su = und[order]
    new_group = np.empty(3 * m, dtype=bool)
    new_group[0] = True
    new_group[1:] = np.any(su[1:] != su[:-1], axis=1)
    group_of = np.cumsum(new_group) - 1
    starts = np.flatnonzero(new_group)
    counts = np.diff(np.append(starts, 3 * m))
    if counts.max() > 2:
        e = su[starts[int(np.argmax(counts))]]
        raise NonManifoldEdge(
            f"edge ({e[0]}, {e[1]}) borders {counts.max()} triangles")

    # a directed halfedge appearing twice means the two incident
    # triangles wind against each other (or a triangle is duplicated)
    dorder = np.lexsort((he[:, 1], he[:, 0]))
    sd = he[dorder]
    dup = np.flatnonzero(np.all(sd[1:] == sd[:-1], axis=1))
    if len(dup):
        e = sd[dup[0]]
        raise InconsistentOrientation(
            f"edge ({e[0]}, {e[1]}) traversed twice in the same direction")

    n_edges = len(starts)
    edges = np.ascontiguousarray(su[starts])
    tri_of_row = order % m
    edge_triangles = np.full((n_edges, 2), -1, dtype=np.int32)
    edge_triangles[:, 0] = tri_of_row[starts]
    interior = counts == 2
    edge_triangles[interior, 1] = tri_of_row[starts[interior] + 1]
    boundary_edge_mask = ~interior

    # per-corner edge ids: corner (t, i) sits opposite the edge made of
    # the other two vertices, which is halfedge block (i + 1) % 3
    eid = np.empty(3 * m, dtype=np.int32)
    eid[order] = group_of
    corner_edge = np.empty((m, 3), dtype=np.int32)
    corner_edge[:, 0] = eid[m:2 * m]
    corner_edge[:, 1] = eid[2 * m:3 * m]
    corner_edge[:, 2] = eid[0:m]

    # single-fan check: corners of the same vertex are glued across
    # interior edges; a vertex whose corners split into multiple
    # components has multiple fans
    si = starts[interior]
    r1 = order[si]
    r2 = order[si + 1]
    # for halfedge row r: origin corner = 3 * tri + block,
    # destination corner = 3 * tri + (block + 1) % 3
    def _origin(r):
        return 3 * (r % m) + r // m

    def _dest(r):
        return 3 * (r % m) + (r // m + 1) % 3

    g_rows = np.concatenate([_origin(r1), _dest(r1)])
    g_cols = np.concatenate([_dest(r2), _origin(r2)])
    corner_graph = coo_matrix(
        (np.ones(len(g_rows)), (g_rows, g_cols)), shape=(3 * m, 3 * m))
    _, corner_label = connected_components(corner_graph, directed=False)
    flat = t.reshape(-1)
    corner_vertex = np.empty(3 * m, dtype=np.int32)
    corner_vertex[0:3 * m:3] = t[:, 0]
    corner_vertex[1:3 * m:3] = t[:, 1]
    corner_vertex[2:3 * m:3] = t[:, 2]
    pair = np.unique(
        corner_vertex.astype(np.int64) * (3 * m) + corner_label)
    fans = np.bincount((pair // (3 * m)).astype(np.intp), minlength=n)
    if fans.min() == 0:
        v = int(np.flatnonzero(fans == 0)[0])
        raise Disconnected(f"vertex {v} belongs to no triangle")
    if fans.max() > 1:
        v = int(np.flatnonzero(fans > 1)[0])
        raise NonManifoldVertex(
            f"vertex {v} joins {fans[v]} separate triangle fans")

    vgraph = coo_matrix(
        (np.ones(n_edges), (edges[:, 0], edges[:, 1])), shape=(n, n))
    n_comp, _ = connected_components(vgraph, directed=False)
    if n_comp > 1:
        raise Disconnected(f"mesh has {n_comp} connected components")

    # vertex -> triangle incidence in CSR form, triangles in ascending order
    vt_order = np.argsort(flat, kind="stable")
    vt_tris = (vt_order // 3).astype(np.int32)
    vt_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(flat, minlength=n), out=vt_offsets[1:])

    for arr in (p, t, edges, edge_triangles, boundary_edge_mask,
                vt_offsets, vt_tris, corner_edge):
        arr.flags.writeable = False
    return Mesh(p, t, (edges, edge_triangles, boundary_edge_mask,
                       vt_offsets, vt_tris, corner_edge))


def euler_characteristic(mesh):
    """V - E + T; 2 for a closed genus-0 surface, 0 for a torus."""
    return mesh.n_vertices - mesh.n_edges + mesh.n_triangles


def triangle_normal(mesh, t):
    """Unit normal of triangle ``t`` by the counter-clockwise winding.

    Raises
    ------
    IndexOutOfRange
        If ``t`` is not a triangle index.
    DegenerateTriangle
        If the triangle area is at or below the degeneracy threshold.
    """
    if not 0 <= t < mesh.n_triangles:
        raise IndexOutOfRange(f"triangle {t} not in mesh of "
                              f"{mesh.n_triangles} triangles")
    c = mesh.triangle_cross()[t]
    nrm = np.linalg.norm(c)
    if 0.5 * nrm <= mesh.area_epsilon():
        raise DegenerateTriangle(f"triangle {t} has near-zero area")
    return c / nrm


def triangle_gradient(mesh, values, t):
    """Gradient of a per-vertex scalar field within triangle ``t``.

    The field is interpolated linearly over the triangle; the returned
    vector lies in the triangle plane and points toward increasing
    values.  For triangle (i, j, k) with area A and unit normal n,

        grad = (f_i (n x e_i) + f_j (n x e_j) + f_k (n x e_k)) / (2 A)

    where e_i is the edge opposite vertex i, directed counter-clockwise
    (e_i = p_k - p_j and cyclic).
    """
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.shape[0] != mesh.n_vertices:
        raise SizeMismatch(
            f"field has {v.shape[0]} values for {mesh.n_vertices} vertices")
    nrm = triangle_normal(mesh, t)                # also validates t
    i, j, k = mesh.triangles[t]
    p = mesh.positions
    area = mesh.triangle_areas()[t]
    g = (v[i] * np.cross(nrm, p[k] - p[j])
         + v[j] * np.cross(nrm, p[i] - p[k])
         + v[k] * np.cross(nrm, p[j] - p[i])) / (2.0 * area)
    return g


def cotangent_weights(mesh):
    """Cotangent edge weights for the discrete Laplacian.

    Each interior edge gets (cot a + cot b) / 2 over the two angles
    opposite it; a boundary edge gets its single cot / 2.  Weights can
    be negative on obtuse triangulations and are returned unclamped.

    Returns
    -------
    (e,) float64 array aligned with ``mesh.edges``.

    Raises
    ------
    DegenerateTriangle
        If any triangle area is at or below the degeneracy threshold.
    """
    areas = mesh.triangle_areas()
    eps = mesh.area_epsilon()
    if areas.min() <= eps:
        bad = int(np.argmin(areas))
        raise DegenerateTriangle(
            f"triangle {bad} is degenerate (area {areas[bad]:g})")
    p = mesh.positions
    t = mesh.triangles
    w = np.zeros(mesh.n_edges)
    two_a = 2.0 * areas
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        u = p[t[:, j]] - p[t[:, i]]
        v = p[t[:, k]] - p[t[:, i]]
        cot = np.einsum("ij,ij->i", u, v) / two_a
        np.add.at(w, mesh._corner_edge[:, i], 0.5 * cot)
    return w


def check_deformation_compatible(mesh, other):
    """Verify two meshes share connectivity (deformations of each other).

    Raises
    ------
    IncompatibleConnectivity
        If vertex counts differ or triangle arrays are not identical.
    """
    if mesh.n_vertices != other.n_vertices:
        raise IncompatibleConnectivity(
            f"vertex counts differ: {mesh.n_vertices} vs {other.n_vertices}")
    if mesh.n_triangles != other.n_triangles or not np.array_equal(
            mesh.triangles, other.triangles):
        raise IncompatibleConnectivity("triangle arrays differ")
