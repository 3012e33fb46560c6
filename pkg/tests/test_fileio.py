import numpy as np
import pytest

from cascade import (
    DuplicateHandle,
    IndexOutOfRange,
    NonTriangulatableFace,
    ParseError,
    build_mesh,
)
from cascade import fileio, synth


def test_obj_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    m = synth.icosphere(2, jitter=0.5, seed=3)
    p = m.positions * rng.uniform(0.9, 1.1)
    path = tmp_path / "a.obj"
    fileio.write_obj(path, p, m.triangles)
    p2, t2 = fileio.read_obj(path)
    assert np.array_equal(p, p2)            # bit-exact through %.17g
    assert np.array_equal(m.triangles, t2)
    path2 = tmp_path / "b.obj"
    fileio.write_obj(path2, p2, t2)
    assert path.read_bytes() == path2.read_bytes()


def test_obj_awkward_values_roundtrip(tmp_path):
    p = np.array([[1e-300, -1e300, 0.1],
                  [np.pi, 1.0 / 3.0, -0.0],
                  [5e-324, 2.0 ** 53 + 1, 1e16]])
    path = tmp_path / "w.obj"
    fileio.write_obj(path, p, [[0, 1, 2]])
    p2, _ = fileio.read_obj(path)
    assert np.array_equal(p, p2)


def test_obj_ignores_noise_and_suffixes(tmp_path):
    path = tmp_path / "n.obj"
    path.write_text(
        "# comment\n"
        "mtllib foo.mtl\n"
        "o thing\n"
        "v 0 0 0\n"
        "v 1 0 0 0.5 0.5 0.5\n"
        "v 0 1 0\n"
        "vn 0 0 1\n"
        "vt 0.5 0.5\n"
        "s off\n"
        "f 1/1/1 2/2/1 3/3/1\n")
    p, t = fileio.read_obj(path)
    assert p.shape == (3, 3)
    assert t.tolist() == [[0, 1, 2]]


def test_obj_fan_triangulation(tmp_path):
    path = tmp_path / "q.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    _, t = fileio.read_obj(path)
    assert t.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_obj_parse_errors_positioned(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1 0\n")
    with pytest.raises(ParseError) as ei:
        fileio.read_obj(path)
    assert ei.value.line == 2
    assert "bad.obj:2" in str(ei.value)

    path.write_text("v 0 0 0\nv 1 0 zebra\n")
    with pytest.raises(ParseError):
        fileio.read_obj(path)

    path.write_text("v 0 0 0\nv 1 0 0\nf 1 2 2\n")
    with pytest.raises(NonTriangulatableFace) as ei:
        fileio.read_obj(path)
    assert ei.value.line == 3

    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(ParseError):
        fileio.read_obj(path)

    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n")
    with pytest.raises(ParseError):
        fileio.read_obj(path)


def test_constraints_roundtrip(tmp_path):
    path = tmp_path / "c.txt"
    ids = [0, 7, 3]
    targets = np.array([[0.1, 0.2, 0.3], [1, 2, 3], [np.pi, -1, 1e-9]])
    fileio.write_constraints(path, ids, targets, "soft", 12.5)
    i2, t2, mode, w = fileio.read_constraints(path)
    assert i2.tolist() == ids
    assert np.array_equal(t2, targets)
    assert mode == "soft" and w == 12.5

    fileio.write_constraints(path, ids, targets)
    _, _, mode, w = fileio.read_constraints(path)
    assert mode == "hard" and w is None


def test_constraints_default_mode_and_comments(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# pinned corners\n3 0 0 0\n5 1 1 1  # top\n")
    ids, targets, mode, w = fileio.read_constraints(path)
    assert ids.tolist() == [3, 5]
    assert mode == "hard"


def test_constraints_errors(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("3 0 0 0\n3 1 1 1\n")
    with pytest.raises(DuplicateHandle):
        fileio.read_constraints(path)
    path.write_text("3 0 0 0\nmode soft 2\n")
    with pytest.raises(ParseError):
        fileio.read_constraints(path)
    path.write_text("mode soft\n")
    with pytest.raises(ParseError):
        fileio.read_constraints(path)
    path.write_text("mode soft -1\n")
    with pytest.raises(ParseError):
        fileio.read_constraints(path)
    path.write_text("3 0 0\n")
    with pytest.raises(ParseError):
        fileio.read_constraints(path)
    path.write_text("12 0 0 0\n")
    with pytest.raises(IndexOutOfRange):
        fileio.read_constraints(path, n_vertices=10)
    fileio.read_constraints(path, n_vertices=13)


def test_mesh_hash_sensitivity():
    m = synth.icosphere(2)
    h1 = fileio.mesh_content_hash(m)
    assert h1 == fileio.mesh_content_hash(synth.icosphere(2))
    moved = m.with_positions(m.positions + 1e-15)
    assert fileio.mesh_content_hash(moved) != h1
    t = m.triangles.copy()
    t[0] = t[0][[1, 2, 0]]            # same triangle, rotated indices
    other = build_mesh(m.positions, t)
    assert fileio.mesh_content_hash(other) != h1


def test_ply_export(tmp_path):
    m = synth.icosphere(1)
    rgb = np.zeros((m.n_vertices, 3), dtype=np.uint8)
    rgb[:, 0] = 255
    path = tmp_path / "m.ply"
    fileio.write_ply_colors(path, m.positions, m.triangles, rgb)
    text = path.read_text().splitlines()
    assert text[0] == "ply"
    assert f"element vertex {m.n_vertices}" in text
    assert f"element face {m.n_triangles}" in text
    hdr_end = text.index("end_header")
    first_v = text[hdr_end + 1].split()
    assert len(first_v) == 6 and first_v[3:] == ["255", "0", "0"]
    assert len(text) == hdr_end + 1 + m.n_vertices + m.n_triangles
