"""Per-triangle local reference frames and detail transfer.

Each coarse triangle carries an orthonormal frame:

* origin: the triangle centroid,
* e1: the edge leaving the triangle's lowest-numbered vertex (toward
  the next vertex in winding order), projected into the triangle plane
  and normalized,
* n: the triangle normal,
* e2: n x e1, completing a right-handed basis.

Anchoring e1 to the lowest vertex id makes the frame a pure function
of the mesh content, so rest and deformed frames always pick the same
anchor and recomputation is bit-reproducible.

Fine vertices bound to a coarse triangle store their offset from the
barycentric base point in frame coordinates; reconstruction replays
the offset in the deformed frame, which preserves local detail under
rotation exactly.

Degenerate triangles (area at or below the mesh degeneracy threshold)
fall back to the area-weighted average of their edge-neighbor frames,
re-orthonormalized.  If the whole neighborhood is degenerate too, the
rest frame is carried over, rotated by the best-fit rotation of the
surrounding one-ring; without a rest state to lean on this raises
:class:`~cascade.errors.DegenerateNeighborhood`.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .arap import fit_rotation
from .errors import (
    DegenerateNeighborhood,
    IncompatibleCoarse,
    IndexOutOfRange,
    SizeMismatch,
)

_TINY = 1e-300


@dataclass
class Frame:
    """Orthonormal triangle frame: columns of ``axes`` are (e1, e2, n)."""

    origin: np.ndarray
    axes: np.ndarray


@dataclass
class Correspondence:
    """Binding of every fine vertex to a point on the coarse mesh.

    Attributes
    ----------
    triangle : (n_fine,) int32
        Coarse triangle each fine vertex binds to.
    bary : (n_fine, 3) float64
        Barycentric coordinates of the base point; non-negative, sum 1.
    local_offset : (n_fine, 3) float64
        Fine vertex minus base point, in the triangle's frame.
    flagged : (n_fine,) bool
        True where no normal-compatible triangle was found nearby and
        the binding fell back to plain nearest distance.
    coarse_rest : Mesh
        The coarse rest mesh the binding refers to.
    """

    triangle: np.ndarray
    bary: np.ndarray
    local_offset: np.ndarray
    flagged: np.ndarray
    coarse_rest: object
    _rest_axes: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def n_fine(self):
        return len(self.triangle)

    def rest_axes(self):
        if self._rest_axes is None:
            _, axes, _ = triangle_frames(self.coarse_rest)
            self._rest_axes = axes
        return self._rest_axes

    def base_points(self, coarse_positions):
        """Barycentric base point per fine vertex on given coarse positions."""
        tri = self.coarse_rest.triangles[self.triangle]
        p = np.asarray(coarse_positions)
        return np.einsum("nk,nkd->nd", self.bary, p[tri])


def _orthonormalize(n_axis, e1_hint):
    """Unit frame from a normal direction and an in-plane hint vector."""
    n = n_axis / np.linalg.norm(n_axis)
    v = e1_hint - (e1_hint @ n) * n
    nv = np.linalg.norm(v)
    if nv < 1e-12 * (np.linalg.norm(e1_hint) + 1e-300):
        # hint lost: any stable perpendicular will do
        k = int(np.argmin(np.abs(n)))
        v = np.zeros(3)
        v[k] = 1.0
        v = v - (v @ n) * n
        nv = np.linalg.norm(v)
    e1 = v / nv
    e2 = np.cross(n, e1)
    return np.stack([e1, e2, n], axis=1)


def triangle_frames(mesh, rest_mesh=None, rest_axes=None):
    """Frames for every triangle of ``mesh``.

    Returns ``(origins, axes, fallback)`` where ``axes`` is ``(m, 3, 3)``
    with columns (e1, e2, n) and ``fallback`` marks triangles whose own
    geometry was degenerate.  Passing the rest state enables the deep
    fallback for triangles whose whole neighborhood is degenerate.
    """
    p = mesh.positions
    t = mesh.triangles
    m = mesh.n_triangles
    origins = p[t].mean(axis=1)
    cross = mesh.triangle_cross()
    areas = mesh.triangle_areas()
    eps = mesh.area_epsilon()
    good = areas > eps

    anchor = np.argmin(t, axis=1)
    rows = np.arange(m)
    a0 = t[rows, anchor]
    a1 = t[rows, (anchor + 1) % 3]
    edge = p[a1] - p[a0]

    axes = np.zeros((m, 3, 3))
    if np.any(good):
        n = cross[good] / np.linalg.norm(cross[good], axis=1, keepdims=True)
        v = edge[good]
        v = v - np.einsum("ij,ij->i", v, n)[:, None] * n
        e1 = v / np.linalg.norm(v, axis=1, keepdims=True)
        e2 = np.cross(n, e1)
        axes[good] = np.stack([e1, e2, n], axis=2)

    bad = np.flatnonzero(~good)
    fallback = ~good
    for tri_id in bad:
        nbr_axes = []
        nbr_areas = []
        for e in mesh._corner_edge[tri_id]:
            pair = mesh.edge_triangles[e]
            other = pair[1] if pair[0] == tri_id else pair[0]
            if other >= 0 and good[other]:
                nbr_axes.append(axes[other])
                nbr_areas.append(areas[other])
        if nbr_axes:
            w = np.asarray(nbr_areas)[:, None]
            n_avg = (np.stack(nbr_axes)[:, :, 2] * w).sum(axis=0)
            e1_avg = (np.stack(nbr_axes)[:, :, 0] * w).sum(axis=0)
            if np.linalg.norm(n_avg) < _TINY:
                n_avg = np.stack(nbr_axes)[0, :, 2]
            hint = edge[tri_id]
            if np.linalg.norm(hint) < 1e-12 * (
                    np.linalg.norm(p[t[tri_id]]) + 1e-3 * eps + _TINY):
                hint = e1_avg
            axes[tri_id] = _orthonormalize(n_avg, hint)
        elif rest_mesh is not None and rest_axes is not None:
            axes[tri_id] = _deep_fallback_axes(
                mesh, rest_mesh, rest_axes, tri_id)
        else:
            raise DegenerateNeighborhood(
                f"triangle {tri_id} and all its edge neighbors are "
                f"degenerate")
    return origins, axes, fallback


def _deep_fallback_axes(mesh, rest_mesh, rest_axes, tri_id):
    """Rest frame rotated by the best-fit rotation of the one-ring."""
    ring = set()
    for v in mesh.triangles[tri_id]:
        ring.update(mesh.vertex_triangles(int(v)).tolist())
    verts = np.unique(mesh.triangles[sorted(ring)])
    rest_p = rest_mesh.positions[verts]
    cur_p = mesh.positions[verts]
    r = fit_rotation(rest_p - rest_p.mean(axis=0),
                     cur_p - cur_p.mean(axis=0))
    return r @ rest_axes[tri_id]


def compute_frame(mesh, t):
    """Frame of a single triangle; see the module docstring for the rules.

    Raises
    ------
    IndexOutOfRange
        If ``t`` is not a triangle index.
    DegenerateNeighborhood
        If the triangle and its entire edge neighborhood are degenerate
        (no rest state is available here to fall back on).
    """
    if not 0 <= t < mesh.n_triangles:
        raise IndexOutOfRange(f"triangle {t} not in mesh of "
                              f"{mesh.n_triangles} triangles")
    origins, axes, _ = triangle_frames(mesh)
    return Frame(origin=origins[t].copy(), axes=axes[t].copy())


def encode_details(fine_mesh, coarse_mesh, corr):
    """Fill the local detail offsets of a correspondence.

    For each fine vertex, the offset is its position minus the
    barycentric base point, expressed in the rest frame of its coarse
    triangle.  Returns a new :class:`Correspondence`; the input is not
    modified.
    """
    if corr.n_fine != fine_mesh.n_vertices:
        raise SizeMismatch(
            f"correspondence binds {corr.n_fine} vertices, fine mesh "
            f"has {fine_mesh.n_vertices}")
    _check_coarse_matches(coarse_mesh, corr)
    _, axes, _ = triangle_frames(coarse_mesh)
    base = corr.base_points(coarse_mesh.positions)
    delta = fine_mesh.positions - base
    a = axes[corr.triangle]
    local = np.einsum("nji,nj->ni", a, delta)
    return replace(corr, local_offset=local, _rest_axes=axes)


def reconstruct(coarse_deformed, corr):
    """Fine positions implied by a deformed coarse mesh and a binding.

    ``coarse_deformed`` is either a mesh sharing connectivity with the
    binding's coarse mesh, or an (n, 3) array of deformed positions for
    it.  Evaluates each fine vertex as base point plus detail offset in
    the deformed triangle's frame.  Reconstructing from the rest coarse
    mesh reproduces the encoded fine positions; rigidly moving the
    coarse mesh rigidly moves the output.

    Raises
    ------
    IncompatibleCoarse
        If ``coarse_deformed`` does not share connectivity with the
        coarse mesh the binding was built for.
    """
    if not hasattr(coarse_deformed, "triangles"):
        positions = np.asarray(coarse_deformed, dtype=np.float64)
        coarse_deformed = corr.coarse_rest.with_positions(positions)
    _check_coarse_matches(coarse_deformed, corr)
    _, axes, _ = triangle_frames(
        coarse_deformed, rest_mesh=corr.coarse_rest,
        rest_axes=corr.rest_axes())
    base = corr.base_points(coarse_deformed.positions)
    a = axes[corr.triangle]
    world = np.einsum("nij,nj->ni", a, corr.local_offset)
    return base + world


def _check_coarse_matches(coarse_mesh, corr):
    ref = corr.coarse_rest
    if coarse_mesh.n_vertices != ref.n_vertices or not np.array_equal(
            coarse_mesh.triangles, ref.triangles):
        raise IncompatibleCoarse(
            "mesh does not share connectivity with the binding's "
            "coarse mesh")
