"""Deterministic synthetic test shapes.

Every generator returns a validated :class:`~cascade.mesh.Mesh` with
outward (or consistently +z for open patches) orientation.  Generation
is fully deterministic; the ``seed`` only matters when ``jitter`` is
nonzero, which displaces interior vertices by a bounded random offset.

Shapes
------
icosphere      closed genus-0 sphere, 10 * 4**s + 2 vertices
torus          closed genus-1 surface on an (m, n) parameter grid
bar            axis-aligned box shell, closed or open-ended
grid_patch     flat rectangular patch (one boundary loop)
disk           flat triangulated disk (one boundary loop)
slab_fold      strip folded back over itself through a half-cylinder
"""

import numpy as np

from .errors import InvalidParams
from .mesh import build_mesh


def _jittered(mesh_positions, interior_mask, jitter, scale, seed):
    if jitter <= 0.0:
        return mesh_positions
    rng = np.random.default_rng(seed)
    d = rng.uniform(-1.0, 1.0, mesh_positions.shape) * (jitter * scale)
    out = mesh_positions.copy()
    out[interior_mask] += d[interior_mask]
    return out


def icosphere(subdivisions=3, radius=1.0, jitter=0.0, seed=0):
    """Geodesic sphere from a subdivided icosahedron.

    ``subdivisions`` quadruples the triangle count each level; vertex
    count is ``10 * 4**subdivisions + 2``.
    """
    if subdivisions < 0 or subdivisions > 9:
        raise InvalidParams("subdivisions must be in [0, 9]")
    if radius <= 0.0:
        raise InvalidParams("radius must be positive")
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    for _ in range(subdivisions):
        e = np.concatenate(
            [faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
        e.sort(axis=1)
        uniq, inv = np.unique(e, axis=0, return_inverse=True)
        mid = verts[uniq[:, 0]] + verts[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        mid_id = len(verts) + np.arange(len(uniq))
        verts = np.concatenate([verts, mid])
        m01 = mid_id[inv[0:len(faces)]]
        m12 = mid_id[inv[len(faces):2 * len(faces)]]
        m20 = mid_id[inv[2 * len(faces):]]
        faces = np.concatenate([
            np.stack([faces[:, 0], m01, m20], axis=1),
            np.stack([faces[:, 1], m12, m01], axis=1),
            np.stack([faces[:, 2], m20, m12], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ])
    verts = verts * radius
    verts = _jittered(verts, np.ones(len(verts), dtype=bool),
                      jitter, 0.3 * radius / (2 ** subdivisions), seed)
    if jitter > 0.0:
        # keep the surface a sphere so normals stay outward
        verts *= radius / np.linalg.norm(verts, axis=1, keepdims=True)
    return build_mesh(verts, faces)


def torus(n_major=24, n_minor=12, major_radius=1.0, minor_radius=0.4,
          jitter=0.0, seed=0):
    """Closed torus sampled on an ``n_major`` x ``n_minor`` grid."""
    if n_major < 3 or n_minor < 3:
        raise InvalidParams("torus needs at least 3 samples per direction")
    if not 0.0 < minor_radius < major_radius:
        raise InvalidParams("need 0 < minor_radius < major_radius")
    u = 2.0 * np.pi * np.arange(n_major) / n_major
    v = 2.0 * np.pi * np.arange(n_minor) / n_minor
    uu, vv = np.meshgrid(u, v, indexing="ij")
    if jitter > 0.0:
        rng = np.random.default_rng(seed)
        amp = jitter * np.pi / max(n_major, n_minor)
        uu = uu + rng.uniform(-amp, amp, uu.shape)
        vv = vv + rng.uniform(-amp, amp, vv.shape)
    r = major_radius + minor_radius * np.cos(vv)
    pts = np.stack(
        [r * np.cos(uu), r * np.sin(uu), minor_radius * np.sin(vv)],
        axis=-1).reshape(-1, 3)

    def vid(i, j):
        return (i % n_major) * n_minor + (j % n_minor)

    i, j = np.meshgrid(np.arange(n_major), np.arange(n_minor), indexing="ij")
    a = vid(i, j).ravel()
    b = vid(i + 1, j).ravel()
    c = vid(i + 1, j + 1).ravel()
    d = vid(i, j + 1).ravel()
    tris = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    return build_mesh(pts, tris)


def grid_patch(nx=10, ny=10, width=1.0, height=1.0, jitter=0.0, seed=0):
    """Flat open rectangle in the xy-plane, normals +z."""
    if nx < 1 or ny < 1:
        raise InvalidParams("grid_patch needs at least one cell per side")
    x = np.linspace(0.0, width, nx + 1)
    y = np.linspace(0.0, height, ny + 1)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    pts = np.stack([xx, yy, np.zeros_like(xx)], axis=-1).reshape(-1, 3)

    def vid(i, j):
        return i * (ny + 1) + j

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    a = vid(i, j).ravel()
    b = vid(i + 1, j).ravel()
    c = vid(i + 1, j + 1).ravel()
    d = vid(i, j + 1).ravel()
    tris = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    interior = (xx > 0) & (xx < width) & (yy > 0) & (yy < height)
    pts = _jittered(pts, interior.reshape(-1), jitter,
                    0.3 * min(width / nx, height / ny), seed)
    return build_mesh(pts, tris)


def disk(n_rings=8, radius=1.0, jitter=0.0, seed=0):
    """Flat triangulated disk in the xy-plane, normals +z."""
    if n_rings < 1:
        raise InvalidParams("disk needs at least one ring")
    pts = [np.zeros((1, 3))]
    ring_start = [0]
    for k in range(1, n_rings + 1):
        cnt = 6 * k
        ang = 2.0 * np.pi * np.arange(cnt) / cnt
        rr = radius * k / n_rings
        pts.append(np.stack(
            [rr * np.cos(ang), rr * np.sin(ang), np.zeros(cnt)], axis=1))
        ring_start.append(ring_start[-1] + (6 * (k - 1) if k > 1 else 1))
    pts = np.concatenate(pts)
    tris = []
    # hub fan
    for s in range(6):
        tris.append([0, 1 + s, 1 + (s + 1) % 6])
    # ring k-1 (inner, 6(k-1) verts) to ring k (outer, 6k verts)
    for k in range(2, n_rings + 1):
        ni, no = 6 * (k - 1), 6 * k
        si, so = ring_start[k - 1], ring_start[k]
        for s in range(6):          # per sector: k-1 inner, k outer verts
            for q in range(k):
                o0 = so + (s * k + q) % no
                o1 = so + (s * k + q + 1) % no
                i0 = si + (s * (k - 1) + q) % ni
                tris.append([i0, o0, o1])
                if q < k - 1:
                    i1 = si + (s * (k - 1) + q + 1) % ni
                    tris.append([i0, o1, i1])
    tris = np.array(tris, dtype=np.int64)
    interior = np.linalg.norm(pts[:, :2], axis=1) < radius * (1 - 1e-9)
    pts = _jittered(pts, interior, jitter, 0.25 * radius / n_rings, seed)
    return build_mesh(pts, tris)


def bar(nx=4, ny=4, nz=20, cell=0.25, capped=True, jitter=0.0, seed=0):
    """Box shell of an ``nx`` x ``ny`` x ``nz`` cell lattice.

    ``capped=True`` closes both ends (genus 0); ``capped=False`` leaves
    the two z-extreme faces open (two boundary loops).  The long axis
    is z, with the bar spanning ``[0, nz * cell]``.
    """
    if min(nx, ny, nz) < 1:
        raise InvalidParams("bar needs at least one cell per axis")
    gx, gy, gz = nx + 1, ny + 1, nz + 1
    ii, jj, kk = np.meshgrid(np.arange(gx), np.arange(gy), np.arange(gz),
                             indexing="ij")
    on_side = (ii == 0) | (ii == nx) | (jj == 0) | (jj == ny)
    on_cap = (kk == 0) | (kk == nz)
    shell = on_side | on_cap if capped else on_side
    lin = np.full((gx, gy, gz), -1, dtype=np.int64)
    lin[shell] = np.arange(int(shell.sum()))
    pts = np.stack([ii[shell], jj[shell], kk[shell]],
                   axis=1).astype(np.float64) * cell

    quads = []

    def face(idx_a, idx_b, idx_c, idx_d):
        quads.append(np.stack([idx_a, idx_b, idx_c, idx_d], axis=1))

    j, k = np.meshgrid(np.arange(ny), np.arange(nz), indexing="ij")
    # x = 0 face, outward normal -x: ccw seen from -x
    face(lin[0, j, k].ravel(), lin[0, j, k + 1].ravel(),
         lin[0, j + 1, k + 1].ravel(), lin[0, j + 1, k].ravel())
    # x = nx face, outward +x
    face(lin[nx, j, k].ravel(), lin[nx, j + 1, k].ravel(),
         lin[nx, j + 1, k + 1].ravel(), lin[nx, j, k + 1].ravel())
    i, k = np.meshgrid(np.arange(nx), np.arange(nz), indexing="ij")
    # y = 0 face, outward -y
    face(lin[i, 0, k].ravel(), lin[i + 1, 0, k].ravel(),
         lin[i + 1, 0, k + 1].ravel(), lin[i, 0, k + 1].ravel())
    # y = ny face, outward +y
    face(lin[i, ny, k].ravel(), lin[i, ny, k + 1].ravel(),
         lin[i + 1, ny, k + 1].ravel(), lin[i + 1, ny, k].ravel())
    if capped:
        i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        # z = 0 cap, outward -z
        face(lin[i, j, 0].ravel(), lin[i, j + 1, 0].ravel(),
             lin[i + 1, j + 1, 0].ravel(), lin[i + 1, j, 0].ravel())
        # z = nz cap, outward +z
        face(lin[i, j, nz].ravel(), lin[i + 1, j, nz].ravel(),
             lin[i + 1, j + 1, nz].ravel(), lin[i, j + 1, nz].ravel())
    q = np.concatenate(quads)
    tris = np.concatenate([q[:, [0, 1, 2]], q[:, [0, 2, 3]]])
    if jitter > 0.0:
        rng = np.random.default_rng(seed)
        # tangential jitter only, so the shell stays embedded
        d = rng.uniform(-1.0, 1.0, pts.shape) * (0.3 * cell * jitter)
        edge_x = np.isin(pts[:, 0], [0.0, nx * cell])
        edge_y = np.isin(pts[:, 1], [0.0, ny * cell])
        edge_z = np.isin(pts[:, 2], [0.0, nz * cell])
        d[edge_x | edge_y, 0] = 0.0
        d[edge_x | edge_y, 1] = 0.0
        d[edge_z, 2] = 0.0
        pts = pts + d
    return build_mesh(pts, tris)


def slab_fold(n_len=40, n_wid=8, length=2.0, width=0.4, gap=0.2,
              jitter=0.0, seed=0):
    """Strip folded 180 degrees back over itself.

    The strip runs along +x, rolls through a half-cylinder of radius
    ``gap / 2`` at the far end, and returns above itself at height
    ``gap``.  The two flat sheets face each other with opposite
    normals separated by ``gap``: a stress test for correspondence,
    since the nearest triangle is often on the wrong sheet.  Jitter is
    scaled by the gap (not the grid step) so the sheets stay separated
    but lose their exact flatness.
    """
    if n_len < 8 or n_wid < 1:
        raise InvalidParams("slab_fold needs n_len >= 8, n_wid >= 1")
    if gap <= 0.0 or length <= 0.0 or width <= 0.0:
        raise InvalidParams("slab_fold dimensions must be positive")
    r = gap / 2.0
    flat = length
    arc = np.pi * r
    total = 2.0 * flat + arc
    s = np.linspace(0.0, total, n_len + 1)
    x = np.empty_like(s)
    z = np.empty_like(s)
    lower = s <= flat
    x[lower] = s[lower]
    z[lower] = 0.0
    bend = (s > flat) & (s < flat + arc)
    ang = (s[bend] - flat) / r            # 0..pi around the fold
    x[bend] = flat + r * np.sin(ang)
    z[bend] = r * (1.0 - np.cos(ang))
    upper = s >= flat + arc
    x[upper] = flat - (s[upper] - flat - arc)
    z[upper] = gap
    y = np.linspace(0.0, width, n_wid + 1)
    xx = np.repeat(x[:, None], n_wid + 1, axis=1)
    zz = np.repeat(z[:, None], n_wid + 1, axis=1)
    yy = np.repeat(y[None, :], n_len + 1, axis=0)
    pts = np.stack([xx, yy, zz], axis=-1).reshape(-1, 3)

    def vid(i, j):
        return i * (n_wid + 1) + j

    i, j = np.meshgrid(np.arange(n_len), np.arange(n_wid), indexing="ij")
    a = vid(i, j).ravel()
    b = vid(i + 1, j).ravel()
    c = vid(i + 1, j + 1).ravel()
    d = vid(i, j + 1).ravel()
    tris = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    pts = _jittered(pts, np.ones(len(pts), dtype=bool), jitter,
                    0.45 * gap, seed)
    return build_mesh(pts, tris)


_SHAPES = {
    "icosphere": icosphere,
    "torus": torus,
    "bar": bar,
    "grid_patch": grid_patch,
    "disk": disk,
    "slab_fold": slab_fold,
}


def synthesize(shape, seed=0, **params):
    """Build a named shape; see module docstring for the catalog."""
    if shape not in _SHAPES:
        raise InvalidParams(
            f"unknown shape {shape!r}; choose from {sorted(_SHAPES)}")
    fn = _SHAPES[shape]
    if shape == "slab_fold":
        return fn(**params)
    return fn(seed=seed, **params)
