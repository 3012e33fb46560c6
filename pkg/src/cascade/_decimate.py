"""Edge-collapse decimation kernel (quadric error metric).

Hot inner machinery behind :func:`cascade.remesh.decimate`, compiled
with numba.  Data layout is flat arrays:

* ``tris``: (m, 3) int32, a dead triangle has slot 0 set to -1;
* vertex -> triangle incidence as singly linked lists (``vt_head`` /
  ``vt_next`` / ``vt_tri``) with lazy removal, dead entries are skipped
  on traversal;
* per-vertex quadrics packed as 10 floats
  (a11, a12, a13, b1, a22, a23, b2, a33, b3, c) for the error form
  ``p' A p + 2 b' p + c``;
* a binary min-heap of candidate collapses keyed by
  (cost, lower id, higher id), entries carry per-endpoint stamps and
  are dropped lazily when a stamp no longer matches.

A collapse merges the higher-stamped edge (u, v) into u (u < v always)
and bumps the stamps of u, v, and the two opposite vertices, whose
costs or boundary status may have changed; fresh entries for their
edges are pushed immediately.  Entries discarded because a guard
failed are not re-queued; when the heap empties before the target is
reached, it is rebuilt from the surviving edges, and decimation stops
(flagged) once a full rebuild round produces no successful collapse.

Guards per candidate, checked at pop time against current state:

* link condition (common neighbors of u and v are exactly the edge's
  opposite vertices; interior edges also reject a shared opposite
  edge, which would close a tetrahedron, and reject collapsing an
  interior edge between two boundary vertices, which would pinch);
* placement policy (boundary edge: endpoints only; interior edge with
  one boundary endpoint: that endpoint; otherwise the quadric optimum,
  or the best of the endpoints and midpoint if the quadric is
  singular);
* geometric guard (no surviving incident triangle may flip its normal
  against the old one or drop to the degenerate-area threshold).
"""

import numpy as np
from numba import njit

INF = np.inf


@njit(cache=True)
def _tri_contains(tris, t, v):
    return tris[t, 0] == v or tris[t, 1] == v or tris[t, 2] == v


@njit(cache=True)
def _tie_hash(u, v):
    """Deterministic scramble of an index pair, for cost tie-breaking.

    Breaking heap ties by raw indices funnels every equal-cost collapse
    (flat regions cost exactly zero) onto the lowest-index vertex, whose
    ring then grows without bound and turns the walk quadratic.
    """
    h = np.uint64(u) * np.uint64(0x9E3779B97F4A7C15) \
        ^ np.uint64(v) * np.uint64(0xC2B2AE3D27D4EB4F)
    h ^= h >> np.uint64(29)
    h *= np.uint64(0xBF58476D1CE4E5B9)
    h ^= h >> np.uint64(32)
    return h


@njit(cache=True)
def _edge_info(tris, vt_head, vt_next, vt_tri, deg, u, v):
    """Count triangles on edge (u, v); return (count, opposite1, opposite2).

    Walks the ring of whichever endpoint has fewer live triangles.
    """
    a, b = (u, v) if deg[u] <= deg[v] else (v, u)
    cnt = 0
    w1 = -1
    w2 = -1
    node = vt_head[a]
    while node != -1:
        t = vt_tri[node]
        if tris[t, 0] != -1 and _tri_contains(tris, t, b):
            for k in range(3):
                x = tris[t, k]
                if x != u and x != v:
                    if cnt == 0:
                        w1 = x
                    elif cnt == 1:
                        w2 = x
            cnt += 1
        node = vt_next[node]
    return cnt, w1, w2


@njit(cache=True)
def _has_triangle(tris, vt_head, vt_next, vt_tri, a, b, c):
    node = vt_head[a]
    while node != -1:
        t = vt_tri[node]
        if tris[t, 0] != -1 and _tri_contains(tris, t, b) \
                and _tri_contains(tris, t, c):
            return True
        node = vt_next[node]
    return False


@njit(cache=True)
def _link_ok(tris, vt_head, vt_next, vt_tri, vbound, deg, u, v, e_cnt,
             w1, w2, mark, cookie_box):
    """Extended link condition for collapsing edge (u, v)."""
    cookie_box[0] += 2
    c = cookie_box[0]
    node = vt_head[u]
    while node != -1:
        t = vt_tri[node]
        if tris[t, 0] != -1:
            for k in range(3):
                x = tris[t, k]
                if x != u:
                    mark[x] = c
        node = vt_next[node]
    common = 0
    node = vt_head[v]
    while node != -1:
        t = vt_tri[node]
        if tris[t, 0] != -1:
            for k in range(3):
                x = tris[t, k]
                if x != v and x != u and mark[x] == c:
                    mark[x] = c + 1
                    common += 1
        node = vt_next[node]
    if e_cnt == 2:
        if common != 2:
            return False
        # a shared opposite edge means u and v close a tetrahedron-like
        # pocket; collapsing would create a duplicate triangle
        if _has_triangle(tris, vt_head, vt_next, vt_tri, w1, u, w2) and \
                _has_triangle(tris, vt_head, vt_next, vt_tri, w1, v, w2):
            return False
        if vbound[u] and vbound[v]:
            return False            # interior edge joining two boundary
                                    # vertices would pinch the surface
    else:
        if common != 1:
            return False
        # the opposite vertex must keep a triangle, else it is orphaned
        if deg[w1] < 2:
            return False
    return True


@njit(cache=True)
def _quad_cost(q, x, y, z):
    return (q[0] * x * x + q[4] * y * y + q[7] * z * z
            + 2.0 * (q[1] * x * y + q[2] * x * z + q[5] * y * z)
            + 2.0 * (q[3] * x + q[6] * y + q[8] * z) + q[9])


@njit(cache=True)
def _solve_quadric(q):
    a11, a12, a13 = q[0], q[1], q[2]
    a22, a23, a33 = q[4], q[5], q[7]
    b1, b2, b3 = q[3], q[6], q[8]
    det = (a11 * (a22 * a33 - a23 * a23)
           - a12 * (a12 * a33 - a23 * a13)
           + a13 * (a12 * a23 - a22 * a13))
    s = max(abs(a11), abs(a22), abs(a33),
            abs(a12), abs(a13), abs(a23))
    if abs(det) <= 1e-10 * s * s * s or s == 0.0:
        return False, 0.0, 0.0, 0.0
    x = (-(b1) * (a22 * a33 - a23 * a23)
         - a12 * (-(b2) * a33 - a23 * -(b3))
         + a13 * (-(b2) * a23 - a22 * -(b3))) / det
    y = (a11 * (-(b2) * a33 - a23 * -(b3))
         - -(b1) * (a12 * a33 - a23 * a13)
         + a13 * (a12 * -(b3) - -(b2) * a13)) / det
    z = (a11 * (a22 * -(b3) - -(b2) * a23)
         - a12 * (a12 * -(b3) - -(b2) * a13)
         + -(b1) * (a12 * a23 - a22 * a13)) / det
    return True, x, y, z


@njit(cache=True)
def _edge_cost(pos, quad, vbound, q, u, v, e_cnt):
    """Collapse cost and placement for edge (u, v) under current state.

    ``q`` is caller-owned scratch for the summed quadric.  Returns
    (feasible, cost, px, py, pz).
    """
    for d in range(10):
        q[d] = quad[u, d] + quad[v, d]
    if e_cnt == 1:
        cu = _quad_cost(q, pos[u, 0], pos[u, 1], pos[u, 2])
        cv = _quad_cost(q, pos[v, 0], pos[v, 1], pos[v, 2])
        if cv < cu:
            return True, max(cv, 0.0), pos[v, 0], pos[v, 1], pos[v, 2]
        return True, max(cu, 0.0), pos[u, 0], pos[u, 1], pos[u, 2]
    bu = vbound[u]
    bv = vbound[v]
    if bu and bv:
        return False, INF, 0.0, 0.0, 0.0
    if bu:
        return True, max(_quad_cost(q, pos[u, 0], pos[u, 1], pos[u, 2]),
                         0.0), pos[u, 0], pos[u, 1], pos[u, 2]
    if bv:
        return True, max(_quad_cost(q, pos[v, 0], pos[v, 1], pos[v, 2]),
                         0.0), pos[v, 0], pos[v, 1], pos[v, 2]
    ok, x, y, z = _solve_quadric(q)
    if ok:
        return True, max(_quad_cost(q, x, y, z), 0.0), x, y, z
    mx = 0.5 * (pos[u, 0] + pos[v, 0])
    my = 0.5 * (pos[u, 1] + pos[v, 1])
    mz = 0.5 * (pos[u, 2] + pos[v, 2])
    cu = _quad_cost(q, pos[u, 0], pos[u, 1], pos[u, 2])
    cv = _quad_cost(q, pos[v, 0], pos[v, 1], pos[v, 2])
    cm = _quad_cost(q, mx, my, mz)
    best = cu
    bx, by, bz = pos[u, 0], pos[u, 1], pos[u, 2]
    if cv < best:
        best = cv
        bx, by, bz = pos[v, 0], pos[v, 1], pos[v, 2]
    if cm < best:
        best = cm
        bx, by, bz = mx, my, mz
    return True, max(best, 0.0), bx, by, bz


@njit(cache=True)
def _geometry_ok(pos, tris, vt_head, vt_next, vt_tri, u, v,
                 px, py, pz, eps_area):
    """Reject collapses that flip or flatten a surviving triangle."""
    for which in range(2):
        w = u if which == 0 else v
        other = v if which == 0 else u
        node = vt_head[w]
        while node != -1:
            t = vt_tri[node]
            if tris[t, 0] != -1 and not _tri_contains(tris, t, other):
                i, j, k = tris[t, 0], tris[t, 1], tris[t, 2]
                ax, ay, az = pos[i, 0], pos[i, 1], pos[i, 2]
                bx, by, bz = pos[j, 0], pos[j, 1], pos[j, 2]
                cx, cy, cz = pos[k, 0], pos[k, 1], pos[k, 2]
                ox = (by - ay) * (cz - az) - (bz - az) * (cy - ay)
                oy = (bz - az) * (cx - ax) - (bx - ax) * (cz - az)
                oz = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
                if i == w:
                    ax, ay, az = px, py, pz
                elif j == w:
                    bx, by, bz = px, py, pz
                else:
                    cx, cy, cz = px, py, pz
                nx = (by - ay) * (cz - az) - (bz - az) * (cy - ay)
                ny = (bz - az) * (cx - ax) - (bx - ax) * (cz - az)
                nz = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
                if ox * nx + oy * ny + oz * nz < 0.0:
                    return False
                if nx * nx + ny * ny + nz * nz <= 4.0 * eps_area * eps_area:
                    return False
            node = vt_next[node]
    return True


# ---------------------------------------------------------------------------
# heap of (cost, u, v, stamp_u, stamp_v)


@njit(cache=True)
def _heap_less(hc, hu, hv, a, b):
    if hc[a] != hc[b]:
        return hc[a] < hc[b]
    ha = _tie_hash(hu[a], hv[a])
    hb = _tie_hash(hu[b], hv[b])
    if ha != hb:
        return ha < hb
    if hu[a] != hu[b]:
        return hu[a] < hu[b]
    return hv[a] < hv[b]


@njit(cache=True)
def _heap_swap(hc, hu, hv, hsu, hsv, a, b):
    hc[a], hc[b] = hc[b], hc[a]
    hu[a], hu[b] = hu[b], hu[a]
    hv[a], hv[b] = hv[b], hv[a]
    hsu[a], hsu[b] = hsu[b], hsu[a]
    hsv[a], hsv[b] = hsv[b], hsv[a]


@njit(cache=True)
def _heap_sift_up(hc, hu, hv, hsu, hsv, i):
    while i > 0:
        p = (i - 1) // 2
        if _heap_less(hc, hu, hv, i, p):
            _heap_swap(hc, hu, hv, hsu, hsv, i, p)
            i = p
        else:
            break


@njit(cache=True)
def _heap_sift_down(hc, hu, hv, hsu, hsv, i, size):
    while True:
        l = 2 * i + 1
        if l >= size:
            break
        r = l + 1
        c = l
        if r < size and _heap_less(hc, hu, hv, r, l):
            c = r
        if _heap_less(hc, hu, hv, c, i):
            _heap_swap(hc, hu, hv, hsu, hsv, i, c)
            i = c
        else:
            break


@njit(cache=True)
def _heap_push(hc, hu, hv, hsu, hsv, size, cost, u, v, su, sv):
    if size >= hc.shape[0]:
        return size                 # full: drop, rebuild pass recovers
    hc[size] = cost
    hu[size] = u
    hv[size] = v
    hsu[size] = su
    hsv[size] = sv
    _heap_sift_up(hc, hu, hv, hsu, hsv, size)
    return size + 1


@njit(cache=True)
def _heap_pop(hc, hu, hv, hsu, hsv, size):
    last = size - 1
    _heap_swap(hc, hu, hv, hsu, hsv, 0, last)
    if last > 0:
        _heap_sift_down(hc, hu, hv, hsu, hsv, 0, last)
    return last                     # popped entry now sits at index `last`


@njit(cache=True)
def _heap_compact(hc, hu, hv, hsu, hsv, size, stamp, valive):
    """Drop dead or stale entries, then restore the heap property."""
    k = 0
    for i in range(size):
        if valive[hu[i]] and valive[hv[i]] and \
                hsu[i] == stamp[hu[i]] and hsv[i] == stamp[hv[i]]:
            hc[k] = hc[i]
            hu[k] = hu[i]
            hv[k] = hv[i]
            hsu[k] = hsu[i]
            hsv[k] = hsv[i]
            k += 1
    for i in range(k // 2 - 1, -1, -1):
        _heap_sift_down(hc, hu, hv, hsu, hsv, i, k)
    return k


@njit(cache=True)
def _push_vertex_edges(pos, tris, vt_head, vt_next, vt_tri, quad, vbound,
                       qtmp, stamp, hc, hu, hv, hsu, hsv, hsize, a,
                       mark, cnt, nbr, cookie_box):
    """Queue candidate entries for every current edge at vertex ``a``.

    Unlinks dead ring nodes in passing so lists stay short.  Edge
    multiplicity falls out of the same walk: a neighbour seen in two
    live triangles sits on an interior edge.
    """
    cookie_box[0] += 1
    c = cookie_box[0]
    nn = 0
    prev = -1
    node = vt_head[a]
    while node != -1:
        nxt = vt_next[node]
        t = vt_tri[node]
        if tris[t, 0] == -1:
            if prev == -1:
                vt_head[a] = nxt
            else:
                vt_next[prev] = nxt
        else:
            for k in range(3):
                x = tris[t, k]
                if x != a:
                    if mark[x] != c:
                        mark[x] = c
                        cnt[x] = 1
                        nbr[nn] = x
                        nn += 1
                    else:
                        cnt[x] += 1
            prev = node
        node = nxt
    for q in range(nn):
        x = nbr[q]
        e_cnt = cnt[x]
        if e_cnt > 2:
            continue
        lo = a if a < x else x
        hi = x if a < x else a
        ok, cost, px, py, pz = _edge_cost(pos, quad, vbound, qtmp,
                                          lo, hi, e_cnt)
        if ok:
            hsize = _heap_push(hc, hu, hv, hsu, hsv, hsize, cost, lo, hi,
                               stamp[lo], stamp[hi])
    return hsize


@njit(cache=True)
def _build_heap(pos, tris, vt_head, vt_next, vt_tri, quad, vbound, qtmp,
                stamp, valive, hc, hu, hv, hsu, hsv, mark, cnt, nbr,
                cookie_box):
    """Fresh heap over all surviving edges; returns the new size."""
    hsize = 0
    n = vt_head.shape[0]
    for a in range(n):
        if not valive[a]:
            continue
        cookie_box[0] += 1
        c = cookie_box[0]
        nn = 0
        prev = -1
        node = vt_head[a]
        while node != -1:
            nxt = vt_next[node]
            t = vt_tri[node]
            if tris[t, 0] == -1:
                if prev == -1:
                    vt_head[a] = nxt
                else:
                    vt_next[prev] = nxt
            else:
                for k in range(3):
                    x = tris[t, k]
                    if x != a:
                        if mark[x] != c:
                            mark[x] = c
                            cnt[x] = 1
                            if x > a:
                                nbr[nn] = x
                                nn += 1
                        else:
                            cnt[x] += 1
                prev = node
            node = nxt
        for q in range(nn):
            x = nbr[q]
            e_cnt = cnt[x]
            if e_cnt > 2:
                continue
            ok, cost, px, py, pz = _edge_cost(pos, quad, vbound, qtmp,
                                              a, x, e_cnt)
            if ok:
                hsize = _heap_push(hc, hu, hv, hsu, hsv, hsize, cost, a, x,
                                   stamp[a], stamp[x])
    return hsize


@njit(cache=True)
def _init_quadrics(pos, tris, eps_area, quad):
    """Accumulate area-weighted face-plane quadrics onto ``quad``."""
    m = tris.shape[0]
    for t in range(m):
        i, j, k = tris[t, 0], tris[t, 1], tris[t, 2]
        e1x = pos[j, 0] - pos[i, 0]
        e1y = pos[j, 1] - pos[i, 1]
        e1z = pos[j, 2] - pos[i, 2]
        e2x = pos[k, 0] - pos[i, 0]
        e2y = pos[k, 1] - pos[i, 1]
        e2z = pos[k, 2] - pos[i, 2]
        cx = e1y * e2z - e1z * e2y
        cy = e1z * e2x - e1x * e2z
        cz = e1x * e2y - e1y * e2x
        a2 = np.sqrt(cx * cx + cy * cy + cz * cz)
        area = 0.5 * a2
        if area <= eps_area:
            continue                # degenerate plane is no constraint
        nx, ny, nz = cx / a2, cy / a2, cz / a2
        d = -(nx * pos[i, 0] + ny * pos[i, 1] + nz * pos[i, 2])
        w = area
        for vtx in range(3):
            vv = tris[t, vtx]
            quad[vv, 0] += w * nx * nx
            quad[vv, 1] += w * nx * ny
            quad[vv, 2] += w * nx * nz
            quad[vv, 3] += w * nx * d
            quad[vv, 4] += w * ny * ny
            quad[vv, 5] += w * ny * nz
            quad[vv, 6] += w * ny * d
            quad[vv, 7] += w * nz * nz
            quad[vv, 8] += w * nz * d
            quad[vv, 9] += w * d * d
    return quad


@njit(cache=True)
def decimate_kernel(pos, tris, target, eps_area, quad, vbound):
    """Collapse edges until ``target`` vertices remain (or no move is legal).

    ``quad`` carries pre-seeded per-vertex quadrics (boundary
    constraint planes); face-plane quadrics are accumulated on top.
    ``vbound`` flags boundary vertices and is kept current across
    collapses (a merged vertex is boundary iff either endpoint was).
    Mutates ``pos``, ``tris``, ``quad``, and ``vbound`` in place;
    returns (vertex_alive_mask, reached_flag).
    """
    n = pos.shape[0]
    m = tris.shape[0]

    # vertex -> triangle linked lists; nodes are allocated once here and
    # only ever spliced between rings afterwards
    vt_cap = 3 * m + 1
    vt_next = np.empty(vt_cap, dtype=np.int32)
    vt_tri = np.empty(vt_cap, dtype=np.int32)
    vt_head = np.full(n, -1, dtype=np.int32)
    deg = np.zeros(n, dtype=np.int32)
    nn = 0
    for t in range(m):
        for k in range(3):
            v = tris[t, k]
            vt_tri[nn] = t
            vt_next[nn] = vt_head[v]
            vt_head[v] = nn
            deg[v] += 1
            nn += 1

    _init_quadrics(pos, tris, eps_area, quad)
    valive = np.ones(n, dtype=np.bool_)
    stamp = np.zeros(n, dtype=np.int64)
    mark = np.full(n, -1, dtype=np.int64)
    cnt = np.zeros(n, dtype=np.int32)
    nbr = np.empty(n, dtype=np.int32)
    qtmp = np.empty(10, dtype=np.float64)
    cookie_box = np.zeros(1, dtype=np.int64)

    hcap = 6 * m + 24 * n + 1024
    hc = np.empty(hcap, dtype=np.float64)
    hu = np.empty(hcap, dtype=np.int32)
    hv = np.empty(hcap, dtype=np.int32)
    hsu = np.empty(hcap, dtype=np.int64)
    hsv = np.empty(hcap, dtype=np.int64)

    hsize = _build_heap(pos, tris, vt_head, vt_next, vt_tri, quad, vbound,
                        qtmp, stamp, valive, hc, hu, hv, hsu, hsv, mark,
                        cnt, nbr, cookie_box)
    n_alive = n
    successes = 0
    success_at_rebuild = -1         # successes counter at last rebuild
    reached = True

    while n_alive > target:
        if hsize == 0:
            if successes == success_at_rebuild:
                reached = False     # a whole rebuild round achieved nothing
                break
            success_at_rebuild = successes
            hsize = _build_heap(pos, tris, vt_head, vt_next, vt_tri, quad,
                                vbound, qtmp, stamp, valive, hc, hu, hv,
                                hsu, hsv, mark, cnt, nbr, cookie_box)
            if hsize == 0:
                reached = False
                break
            continue
        hsize = _heap_pop(hc, hu, hv, hsu, hsv, hsize)
        u = hu[hsize]
        v = hv[hsize]
        if not valive[u] or not valive[v]:
            continue
        if hsu[hsize] != stamp[u] or hsv[hsize] != stamp[v]:
            continue
        e_cnt, w1, w2 = _edge_info(tris, vt_head, vt_next, vt_tri, deg,
                                   u, v)
        if e_cnt == 0 or e_cnt > 2:
            continue
        ok, cost, px, py, pz = _edge_cost(pos, quad, vbound, qtmp,
                                          u, v, e_cnt)
        if not ok:
            continue
        if not _link_ok(tris, vt_head, vt_next, vt_tri, vbound, deg, u, v,
                        e_cnt, w1, w2, mark, cookie_box):
            continue
        if not _geometry_ok(pos, tris, vt_head, vt_next, vt_tri, u, v,
                            px, py, pz, eps_area):
            continue

        if hsize > hcap - 4096:
            hsize = _heap_compact(hc, hu, hv, hsu, hsv, hsize, stamp,
                                  valive)

        # kill the triangles along the edge; drop them from v's ring
        prev = -1
        node = vt_head[v]
        while node != -1:
            nxt = vt_next[node]
            t = vt_tri[node]
            if tris[t, 0] != -1 and _tri_contains(tris, t, u):
                tris[t, 0] = -1
            if tris[t, 0] == -1:
                if prev == -1:
                    vt_head[v] = nxt
                else:
                    vt_next[prev] = nxt
            else:
                prev = node
            node = nxt
        # drop the newly dead nodes from u's ring too
        prev = -1
        node = vt_head[u]
        while node != -1:
            nxt = vt_next[node]
            if tris[vt_tri[node], 0] == -1:
                if prev == -1:
                    vt_head[u] = nxt
                else:
                    vt_next[prev] = nxt
            else:
                prev = node
            node = nxt
        # rewire v's surviving triangles to u, splicing their ring
        # nodes across so no new nodes are ever allocated
        node = vt_head[v]
        while node != -1:
            nxt = vt_next[node]
            t = vt_tri[node]
            for k in range(3):
                if tris[t, k] == v:
                    tris[t, k] = u
            vt_next[node] = vt_head[u]
            vt_head[u] = node
            node = nxt
        vt_head[v] = -1
        pos[u, 0] = px
        pos[u, 1] = py
        pos[u, 2] = pz
        for d in range(10):
            quad[u, d] += quad[v, d]
        vbound[u] = vbound[u] or vbound[v]
        deg[u] += deg[v] - 2 * e_cnt
        if w1 >= 0:
            deg[w1] -= 1
        if w2 >= 0:
            deg[w2] -= 1
        valive[v] = False
        stamp[u] += 1
        n_alive -= 1
        successes += 1

        # only edges at u changed cost: the collapse moved u's position,
        # quadric, and boundary flag, while every other surviving vertex
        # kept its own.  Entries for edges not at u or v stay valid;
        # entries at v die with the valive check.
        hsize = _push_vertex_edges(pos, tris, vt_head, vt_next, vt_tri,
                                   quad, vbound, qtmp, stamp, hc, hu,
                                   hv, hsu, hsv, hsize, u, mark, cnt,
                                   nbr, cookie_box)
    return valive, reached
