"""Fine-to-coarse correspondence via filtered closest-point queries.

Every fine vertex binds to the nearest coarse triangle whose normal is
compatible with the fine vertex normal (positive dot product).  The
filter keeps thin, folded, or nearly touching sheets from binding to
the wrong side.  If no compatible triangle lies within twice the mean
coarse edge length, the vertex falls back to the plain nearest
triangle and is flagged.

Queries run against an axis-aligned bounding box tree over the coarse
triangles; ties in distance resolve to the lower triangle index.
"""

import numpy as np
from numba import njit

from .errors import EmptyCoarse
from .lrf import Correspondence, encode_details

_LEAF_SIZE = 8
FALLBACK_RADIUS_FACTOR = 2.0
_BARY_SNAP = 1e-9


class _BVH:
    """Flat-array AABB tree over triangles (median split, leaf lists)."""

    def __init__(self, tri_pts):
        m = len(tri_pts)
        lo_all = tri_pts.min(axis=1)
        hi_all = tri_pts.max(axis=1)
        centers = tri_pts.mean(axis=1)
        self.order = np.arange(m, dtype=np.int32)
        lo, hi, left, right, start, count = [], [], [], [], [], []

        def rec(s, e):
            idx = len(lo)
            sub = self.order[s:e]
            lo.append(lo_all[sub].min(axis=0))
            hi.append(hi_all[sub].max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(s)
            count.append(e - s)
            if e - s > _LEAF_SIZE:
                c = centers[sub]
                axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
                k = (e - s) // 2
                part = np.argpartition(c[:, axis], k)
                self.order[s:e] = sub[part]
                left[idx] = rec(s, s + k)
                right[idx] = rec(s + k, e)
                count[idx] = 0
            return idx

        rec(0, m)
        self.lo = np.array(lo)
        self.hi = np.array(hi)
        self.left = np.array(left, dtype=np.int32)
        self.right = np.array(right, dtype=np.int32)
        self.start = np.array(start, dtype=np.int32)
        self.count = np.array(count, dtype=np.int32)


@njit(cache=True)
def _closest_on_tri(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Closest point on triangle abc to point p (region-based)."""
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        denom = d1 - d3
        v = d1 / denom if denom != 0.0 else 0.0
        return ax + v * abx, ay + v * aby, az + v * abz
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        denom = d2 - d6
        w = d2 / denom if denom != 0.0 else 0.0
        return ax + w * acx, ay + w * acy, az + w * acz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        denom = (d4 - d3) + (d5 - d6)
        w = (d4 - d3) / denom if denom != 0.0 else 0.0
        return (bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz))
    denom = va + vb + vc
    if denom == 0.0:
        return ax, ay, az
    v = vb / denom
    w = vc / denom
    return (ax + abx * v + acx * w, ay + aby * v + acy * w,
            az + abz * v + acz * w)


@njit(cache=True)
def _box_dist2(px, py, pz, lox, loy, loz, hix, hiy, hiz):
    d = 0.0
    if px < lox:
        d += (lox - px) ** 2
    elif px > hix:
        d += (px - hix) ** 2
    if py < loy:
        d += (loy - py) ** 2
    elif py > hiy:
        d += (py - hiy) ** 2
    if pz < loz:
        d += (loz - pz) ** 2
    elif pz > hiz:
        d += (pz - hiz) ** 2
    return d


@njit(cache=True)
def _bvh_query(points, vnorm, use_filter, va, vb, vc, tnorm,
               lo, hi, left, right, start, count, order,
               active, out_tri, out_q, out_d2):
    stack = np.empty(128, dtype=np.int32)
    for ii in range(active.shape[0]):
        i = active[ii]
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        nx, ny, nz = vnorm[i, 0], vnorm[i, 1], vnorm[i, 2]
        best = np.inf
        best_tri = -1
        bqx = bqy = bqz = 0.0
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            node = stack[top]
            if _box_dist2(px, py, pz, lo[node, 0], lo[node, 1], lo[node, 2],
                          hi[node, 0], hi[node, 1], hi[node, 2]) >= best:
                continue
            if left[node] < 0:
                for k in range(start[node], start[node] + count[node]):
                    t = order[k]
                    if use_filter:
                        dot = (tnorm[t, 0] * nx + tnorm[t, 1] * ny
                               + tnorm[t, 2] * nz)
                        if dot <= 0.0:
                            continue
                    qx, qy, qz = _closest_on_tri(
                        px, py, pz,
                        va[t, 0], va[t, 1], va[t, 2],
                        vb[t, 0], vb[t, 1], vb[t, 2],
                        vc[t, 0], vc[t, 1], vc[t, 2])
                    d2 = ((px - qx) ** 2 + (py - qy) ** 2
                          + (pz - qz) ** 2)
                    if d2 < best or (d2 == best and t < best_tri):
                        best = d2
                        best_tri = t
                        bqx, bqy, bqz = qx, qy, qz
            else:
                cl = left[node]
                cr = right[node]
                dl = _box_dist2(px, py, pz, lo[cl, 0], lo[cl, 1], lo[cl, 2],
                                hi[cl, 0], hi[cl, 1], hi[cl, 2])
                dr = _box_dist2(px, py, pz, lo[cr, 0], lo[cr, 1], lo[cr, 2],
                                hi[cr, 0], hi[cr, 1], hi[cr, 2])
                if dl <= dr:                # push far first, pop near first
                    stack[top] = cr
                    top += 1
                    stack[top] = cl
                    top += 1
                else:
                    stack[top] = cl
                    top += 1
                    stack[top] = cr
                    top += 1
        out_tri[i] = best_tri
        out_q[i, 0] = bqx
        out_q[i, 1] = bqy
        out_q[i, 2] = bqz
        out_d2[i] = best


def _barycentric(tri_pts, q):
    """Barycentrics of points ``q`` lying on their triangles."""
    a = tri_pts[:, 0]
    v0 = tri_pts[:, 1] - a
    v1 = tri_pts[:, 2] - a
    v2 = q - a
    d00 = np.einsum("ij,ij->i", v0, v0)
    d01 = np.einsum("ij,ij->i", v0, v1)
    d11 = np.einsum("ij,ij->i", v1, v1)
    d20 = np.einsum("ij,ij->i", v2, v0)
    d21 = np.einsum("ij,ij->i", v2, v1)
    denom = d00 * d11 - d01 * d01
    bary = np.zeros((len(q), 3))
    ok = denom > 0.0
    v = np.zeros(len(q))
    w = np.zeros(len(q))
    v[ok] = (d11[ok] * d20[ok] - d01[ok] * d21[ok]) / denom[ok]
    w[ok] = (d00[ok] * d21[ok] - d01[ok] * d20[ok]) / denom[ok]
    bary[:, 0] = 1.0 - v - w
    bary[:, 1] = v
    bary[:, 2] = w
    if np.any(~ok):
        # degenerate triangle: bind to its nearest corner
        for i in np.flatnonzero(~ok):
            d = np.linalg.norm(tri_pts[i] - q[i], axis=1)
            bary[i] = 0.0
            bary[i, int(np.argmin(d))] = 1.0
    # tiny negatives from the region tests snap to zero
    bary[(bary < 0.0) & (bary >= -_BARY_SNAP)] = 0.0
    np.maximum(bary, 0.0, out=bary)
    bary /= bary.sum(axis=1, keepdims=True)
    return bary


def build_correspondence(fine_mesh, coarse):
    """Bind every fine vertex to the coarse mesh.

    Parameters
    ----------
    fine_mesh : Mesh
    coarse : CoarseMesh or Mesh
        Decimated rest mesh (a plain mesh is accepted too).

    Returns
    -------
    Correspondence
        With barycentric base points and frame-local detail offsets
        filled in; ``flagged`` marks vertices where the compatibility
        filter found nothing within twice the mean coarse edge length.
    """
    cmesh = getattr(coarse, "mesh", coarse)
    if cmesh is None or cmesh.n_triangles == 0:
        raise EmptyCoarse("coarse mesh has no triangles")
    tri_pts = cmesh.positions[cmesh.triangles]
    bvh = _BVH(tri_pts)
    points = fine_mesh.positions
    vnorm = fine_mesh.vertex_normals()
    tnorm = cmesh.triangle_cross()
    n = fine_mesh.n_vertices
    out_tri = np.full(n, -1, dtype=np.int32)
    out_q = np.zeros((n, 3))
    out_d2 = np.full(n, np.inf)
    va = np.ascontiguousarray(tri_pts[:, 0])
    vb = np.ascontiguousarray(tri_pts[:, 1])
    vc = np.ascontiguousarray(tri_pts[:, 2])
    args = (va, vb, vc, tnorm, bvh.lo, bvh.hi, bvh.left, bvh.right,
            bvh.start, bvh.count, bvh.order)
    everyone = np.arange(n, dtype=np.int64)
    _bvh_query(points, vnorm, True, *args, everyone, out_tri, out_q, out_d2)
    radius = FALLBACK_RADIUS_FACTOR * cmesh.mean_edge_length()
    flagged = ~(out_d2 <= radius * radius)
    if np.any(flagged):
        retry = np.flatnonzero(flagged)
        _bvh_query(points, vnorm, False, *args, retry,
                   out_tri, out_q, out_d2)
    bary = _barycentric(tri_pts[out_tri], out_q)
    corr = Correspondence(
        triangle=out_tri, bary=bary,
        local_offset=np.zeros((n, 3)), flagged=flagged,
        coarse_rest=cmesh)
    return encode_details(fine_mesh, cmesh, corr)
