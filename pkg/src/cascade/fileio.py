"""Text file formats: OBJ meshes, constraint sets, correspondence caches.

Floats are written with 17 significant digits (``%.17g``), enough to
round-trip IEEE doubles exactly, so write -> read -> write is
byte-identical.  All files use ``\\n`` line endings regardless of
platform.
"""

import numpy as np
from numba import njit

from .errors import (
    CacheMismatch,
    DuplicateHandle,
    IndexOutOfRange,
    InvalidParams,
    NonTriangulatableFace,
    ParseError,
)


def _fmt(x):
    return "%.17g" % x


# ---------------------------------------------------------------------------
# OBJ


def read_obj(path):
    """Read a Wavefront OBJ file.

    Supports ``v x y z`` (optionally with trailing ``r g b``, which are
    accepted and discarded) and ``f`` records with 1-based indices;
    texture/normal suffixes after ``/`` are ignored.  Faces with more
    than three vertices are fan-triangulated.  All other record types
    are skipped.

    Returns
    -------
    (positions, triangles)
        ``(n, 3) float64`` and ``(m, 3) int32`` arrays (0-based).

    Raises
    ------
    ParseError
        On malformed vertex or face lines, with file and line number.
    NonTriangulatableFace
        On a face with fewer than three distinct vertices.
    """
    verts = []
    tris = []
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) not in (4, 7):
                    raise ParseError(path, lineno,
                                     "vertex line needs 3 or 6 numbers")
                try:
                    verts.append((float(parts[1]), float(parts[2]),
                                  float(parts[3])))
                except ValueError:
                    raise ParseError(path, lineno,
                                     "bad number in vertex line") from None
            elif tag == "f":
                idx = []
                for tok in parts[1:]:
                    head = tok.split("/", 1)[0]
                    try:
                        k = int(head)
                    except ValueError:
                        raise ParseError(
                            path, lineno,
                            f"bad face index {head!r}") from None
                    if k < 1:
                        raise ParseError(
                            path, lineno,
                            f"face index {k} must be positive")
                    idx.append(k - 1)
                if len(set(idx)) < 3:
                    raise NonTriangulatableFace(
                        path, lineno,
                        "face needs at least 3 distinct vertices")
                for a, b in zip(idx[1:-1], idx[2:]):
                    tris.append((idx[0], a, b))
    if not verts:
        raise ParseError(path, 1, "no vertices found")
    positions = np.array(verts, dtype=np.float64)
    triangles = (np.array(tris, dtype=np.int32) if tris
                 else np.zeros((0, 3), dtype=np.int32))
    if len(triangles) and triangles.max() >= len(positions):
        raise ParseError(path, 1,
                         f"face index {triangles.max() + 1} exceeds "
                         f"vertex count {len(positions)}")
    return positions, triangles


def write_obj(path, positions, triangles, colors=None):
    """Write positions/triangles as OBJ; optional per-vertex ``r g b``."""
    p = np.asarray(positions, dtype=np.float64)
    t = np.asarray(triangles)
    lines = []
    if colors is None:
        for x, y, z in p:
            lines.append(f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}")
    else:
        c = np.asarray(colors, dtype=np.float64)
        for (x, y, z), (r, g, b) in zip(p, c):
            lines.append(f"v {_fmt(x)} {_fmt(y)} {_fmt(z)} "
                         f"{_fmt(r)} {_fmt(g)} {_fmt(b)}")
    for a, b, c3 in np.asarray(t, dtype=np.int64) + 1:
        lines.append(f"f {a} {b} {c3}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


# ---------------------------------------------------------------------------
# constraints


def read_constraints(path, n_vertices=None):
    """Read a handle constraint file.

    Format: an optional header ``mode hard`` or ``mode soft <weight>``
    (default hard), then one ``<vertex> <tx> <ty> <tz>`` line per
    handle.  ``#`` starts a comment.

    Returns
    -------
    (ids, targets, mode, soft_weight)
        ``(k,) int64``, ``(k, 3) float64``, ``"hard" | "soft"``,
        ``float | None``.

    Raises
    ------
    ParseError, DuplicateHandle
    IndexOutOfRange
        If ``n_vertices`` is given and an index falls outside it.
    """
    mode = "hard"
    weight = None
    ids = []
    targets = []
    seen = set()
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "mode":
                if ids:
                    raise ParseError(path, lineno,
                                     "mode header must come first")
                if len(parts) < 2 or parts[1] not in ("hard", "soft"):
                    raise ParseError(path, lineno,
                                     "mode must be 'hard' or 'soft'")
                mode = parts[1]
                if mode == "soft":
                    if len(parts) != 3:
                        raise ParseError(path, lineno,
                                         "soft mode needs a weight")
                    try:
                        weight = float(parts[2])
                    except ValueError:
                        raise ParseError(path, lineno,
                                         "bad soft weight") from None
                    if not weight > 0.0:
                        raise ParseError(path, lineno,
                                         "soft weight must be positive")
                elif len(parts) != 2:
                    raise ParseError(path, lineno,
                                     "hard mode takes no weight")
                continue
            if len(parts) != 4:
                raise ParseError(path, lineno,
                                 "expected '<vertex> <tx> <ty> <tz>'")
            try:
                v = int(parts[0])
                txyz = (float(parts[1]), float(parts[2]), float(parts[3]))
            except ValueError:
                raise ParseError(path, lineno,
                                 "bad number in constraint line") from None
            if v < 0:
                raise ParseError(path, lineno, "vertex index must be >= 0")
            if v in seen:
                raise DuplicateHandle(f"{path}:{lineno}: vertex {v} "
                                      f"constrained twice")
            seen.add(v)
            ids.append(v)
            targets.append(txyz)
    ids = np.array(ids, dtype=np.int64)
    targets = (np.array(targets, dtype=np.float64)
               if len(targets) else np.zeros((0, 3)))
    if n_vertices is not None and len(ids) and ids.max() >= n_vertices:
        raise IndexOutOfRange(
            f"constraint vertex {ids.max()} not in mesh of "
            f"{n_vertices} vertices")
    return ids, targets, mode, weight


def write_constraints(path, ids, targets, mode="hard", soft_weight=None):
    lines = []
    if mode == "soft":
        if soft_weight is None or not soft_weight > 0.0:
            raise InvalidParams("soft mode needs a positive weight")
        lines.append(f"mode soft {_fmt(soft_weight)}")
    elif mode == "hard":
        lines.append("mode hard")
    else:
        raise InvalidParams(f"unknown mode {mode!r}")
    for v, (x, y, z) in zip(np.asarray(ids, dtype=np.int64),
                            np.asarray(targets, dtype=np.float64)):
        lines.append(f"{v} {_fmt(x)} {_fmt(y)} {_fmt(z)}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


# ---------------------------------------------------------------------------
# correspondence cache


@njit(cache=True)
def _fnv1a(data):
    h = np.uint64(0xcbf29ce484222325)
    prime = np.uint64(0x100000001b3)
    for i in range(data.shape[0]):
        h = (h ^ np.uint64(data[i])) * prime
    return h


def mesh_content_hash(mesh):
    """FNV-1a hash over a mesh's position and triangle buffers."""
    buf = np.concatenate([
        np.frombuffer(np.ascontiguousarray(mesh.positions).tobytes(),
                      dtype=np.uint8),
        np.frombuffer(np.ascontiguousarray(
            mesh.triangles.astype(np.int32)).tobytes(), dtype=np.uint8),
    ])
    return int(_fnv1a(buf))


def write_corr_cache(path, corr):
    """Persist a correspondence: header plus one line per fine vertex.

    Header: ``CORR v1 <n_fine> <coarse_hash>`` where the hash covers the
    coarse rest mesh buffers.  Each data line holds the coarse triangle
    index, three barycentric coordinates, and the local detail offset.
    Fallback flags are diagnostic only and are not persisted.
    """
    h = mesh_content_hash(corr.coarse_rest)
    lines = [f"CORR v1 {len(corr.triangle)} {h:016x}"]
    for t, (b0, b1, b2), (x, y, z) in zip(
            corr.triangle, corr.bary, corr.local_offset):
        lines.append(f"{t} {_fmt(b0)} {_fmt(b1)} {_fmt(b2)} "
                     f"{_fmt(x)} {_fmt(y)} {_fmt(z)}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def read_corr_cache(path, fine_mesh, coarse_mesh):
    """Load a correspondence cache, verifying it matches both meshes.

    Raises
    ------
    CacheMismatch
        If the fine vertex count or the coarse mesh hash differs.
    ParseError
        On malformed contents.
    """
    from .lrf import Correspondence

    with open(path, "r") as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "CORR" or header[1] != "v1":
            raise ParseError(path, 1, "bad cache header")
        try:
            n_fine = int(header[2])
            cache_hash = int(header[3], 16)
        except ValueError:
            raise ParseError(path, 1, "bad cache header") from None
        if n_fine != fine_mesh.n_vertices:
            raise CacheMismatch(
                f"cache binds {n_fine} fine vertices, mesh has "
                f"{fine_mesh.n_vertices}")
        if cache_hash != mesh_content_hash(coarse_mesh):
            raise CacheMismatch("cache was built for a different "
                                "coarse mesh")
        tri = np.empty(n_fine, dtype=np.int32)
        bary = np.empty((n_fine, 3))
        off = np.empty((n_fine, 3))
        for i in range(n_fine):
            parts = fh.readline().split()
            if len(parts) != 7:
                raise ParseError(path, i + 2, "expected 7 fields")
            try:
                tri[i] = int(parts[0])
                bary[i] = [float(parts[1]), float(parts[2]),
                           float(parts[3])]
                off[i] = [float(parts[4]), float(parts[5]),
                          float(parts[6])]
            except ValueError:
                raise ParseError(path, i + 2,
                                 "bad number in cache line") from None
    if len(tri) and (tri.min() < 0 or tri.max() >= coarse_mesh.n_triangles):
        raise CacheMismatch("cache triangle index out of range")
    return Correspondence(
        triangle=tri, bary=bary, local_offset=off,
        flagged=np.zeros(n_fine, dtype=bool), coarse_rest=coarse_mesh)


# ---------------------------------------------------------------------------
# colored PLY export


def write_ply_colors(path, positions, triangles, rgb):
    """Write an ASCII PLY with per-vertex uchar colors."""
    p = np.asarray(positions, dtype=np.float64)
    t = np.asarray(triangles, dtype=np.int64)
    c = np.asarray(rgb)
    if c.dtype != np.uint8:
        raise InvalidParams("rgb must be uint8")
    lines = [
        "ply", "format ascii 1.0",
        f"element vertex {len(p)}",
        "property float x", "property float y", "property float z",
        "property uchar red", "property uchar green", "property uchar blue",
        f"element face {len(t)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for (x, y, z), (r, g, b) in zip(p, c):
        lines.append(f"{_fmt(x)} {_fmt(y)} {_fmt(z)} {r} {g} {b}")
    for a, b, c3 in t:
        lines.append(f"3 {a} {b} {c3}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
