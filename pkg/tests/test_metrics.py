import numpy as np
import pytest

from cascade import (
    IncompatibleConnectivity,
    OpenMesh,
    SizeMismatch,
    ZeroLengthRestEdge,
)
from cascade import metrics, synth
from cascade.metrics import (
    MetricsReport,
    edge_error,
    edge_error_vertex_colors,
    hot_colormap,
    mesh_volume,
    vertex_distance,
)


def random_rotation(rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def naive_edge_errors(mesh, positions):
    """Per-edge relative distortion via an explicit python loop."""
    out = []
    for i, j in mesh.edges:
        r = np.linalg.norm(mesh.positions[j] - mesh.positions[i])
        d = np.linalg.norm(positions[j] - positions[i])
        out.append(abs(d - r) / r)
    return np.array(out)


# ---------------------------------------------------------------------------
# edge error


def test_rest_positions_give_zero(sphere):
    err, s = edge_error(sphere, sphere.positions)
    assert np.all(err == 0.0)
    assert s.mean == 0.0 and s.median == 0.0 and s.max == 0.0


def test_rigid_motion_gives_zero(sphere):
    rng = np.random.default_rng(4)
    for _ in range(5):
        q = random_rotation(rng)
        moved = sphere.positions @ q.T + rng.normal(size=3)
        _, s = edge_error(sphere, moved)
        assert s.max <= 1e-12


def test_uniform_scale_is_exact(sphere):
    for scale in (0.5, 1.25, 3.0):
        err, s = edge_error(sphere, sphere.positions * scale)
        assert np.allclose(err, abs(scale - 1.0), atol=1e-12)
        assert abs(s.mean - abs(scale - 1.0)) <= 1e-12


def test_matches_naive_loop(small_torus):
    rng = np.random.default_rng(9)
    moved = small_torus.positions + 0.05 * rng.normal(
        size=small_torus.positions.shape)
    err, s = edge_error(small_torus, moved)
    ref = naive_edge_errors(small_torus, moved)
    assert np.allclose(err, ref, rtol=0.0, atol=1e-15)
    assert s.mean == pytest.approx(ref.mean(), abs=1e-15)
    assert s.median == pytest.approx(np.median(ref), abs=1e-15)
    assert s.max == pytest.approx(ref.max(), abs=1e-15)


def test_accepts_deformed_mesh_argument(sphere):
    moved = sphere.with_positions(sphere.positions * 2.0)
    _, s_mesh = edge_error(sphere, moved)
    _, s_arr = edge_error(sphere, moved.positions)
    assert s_mesh.mean == s_arr.mean


def test_wrong_shape_rejected(sphere):
    with pytest.raises(IncompatibleConnectivity):
        edge_error(sphere, sphere.positions[:-1])


def test_different_connectivity_rejected(sphere, small_torus):
    with pytest.raises(IncompatibleConnectivity):
        edge_error(sphere, small_torus)


def test_zero_length_rest_edge_rejected(sphere):
    i, j = sphere.edges[0]
    pos = sphere.positions.copy()
    pos[j] = pos[i]
    degenerate_rest = sphere.with_positions(pos)
    with pytest.raises(ZeroLengthRestEdge):
        edge_error(degenerate_rest, pos)


# ---------------------------------------------------------------------------
# volume


def test_unit_cube_volume():
    cube = synth.bar(1, 1, 1, cell=1.0)
    assert mesh_volume(cube) == pytest.approx(1.0, abs=1e-12)


def test_sphere_volume_near_analytic():
    m = synth.icosphere(4)
    assert mesh_volume(m) == pytest.approx(4.0 * np.pi / 3.0, rel=0.01)


def test_volume_positive_for_outward_orientation(sphere, small_torus):
    assert mesh_volume(sphere) > 0.0
    assert mesh_volume(small_torus) > 0.0


def test_volume_flips_sign_when_inverted():
    from cascade.mesh import build_mesh
    m = synth.icosphere(2)
    flipped = build_mesh(m.positions, m.triangles[:, ::-1])
    assert mesh_volume(flipped) == pytest.approx(-mesh_volume(m), abs=1e-12)


def test_volume_invariant_under_rigid_motion(sphere):
    rng = np.random.default_rng(21)
    v0 = mesh_volume(sphere)
    for _ in range(5):
        q = random_rotation(rng)
        moved = sphere.positions @ q.T + 10.0 * rng.normal(size=3)
        assert mesh_volume(sphere, moved) == pytest.approx(v0, rel=1e-10)


def test_volume_scales_cubically(sphere):
    v0 = mesh_volume(sphere)
    rng = np.random.default_rng(22)
    for _ in range(5):
        s = rng.uniform(0.3, 2.5)
        assert mesh_volume(sphere, sphere.positions * s) == pytest.approx(
            v0 * s**3, rel=1e-10)


def test_volume_open_mesh_rejected(patch):
    with pytest.raises(OpenMesh):
        mesh_volume(patch)


def test_volume_positions_shape_checked(sphere):
    with pytest.raises(IncompatibleConnectivity):
        mesh_volume(sphere, sphere.positions[:-1])


# ---------------------------------------------------------------------------
# vertex distance


def test_vertex_distance_zero_for_identical(sphere):
    d = vertex_distance(sphere.positions, sphere.positions)
    assert d.mean == 0.0 and d.max == 0.0


def test_vertex_distance_enumerated():
    a = np.array([[0.0, 0, 0], [1, 0, 0], [0, 2, 0]])
    b = np.array([[0.0, 0, 1], [1, 0, 0], [0, -2, 0]])
    d = vertex_distance(a, b)
    assert np.allclose(d.per_vertex, [1.0, 0.0, 4.0])
    assert d.mean == pytest.approx(5.0 / 3.0)
    assert d.max == 4.0


def test_vertex_distance_shape_mismatch():
    with pytest.raises(SizeMismatch):
        vertex_distance(np.zeros((4, 3)), np.zeros((5, 3)))


# ---------------------------------------------------------------------------
# report


def make_report(**overrides):
    base = dict(name="bar", n_fine=1000, n_coarse=100,
                mean_edge_error=0.01, median_edge_error=0.008,
                max_edge_error=0.2, volume_rest=2.0, volume_deformed=1.9,
                arap_energy_final=3.5,
                timings={s: 0.1 for s in metrics.TIMING_STAGES})
    base.update(overrides)
    return MetricsReport(**base)


def test_report_text_has_all_fields():
    text = make_report().to_text()
    for key in ("name bar", "n_fine 1000", "n_coarse 100",
                "mean_edge_error", "median_edge_error", "max_edge_error",
                "volume_rest", "volume_deformed", "volume_ratio",
                "arap_energy_final", "time_remesh", "time_total"):
        assert key in text
    assert "volume_ratio 0.95" in text


def test_report_text_omits_missing_volume():
    text = make_report(volume_rest=None, volume_deformed=None).to_text()
    assert "volume" not in text


def test_csv_row_matches_header():
    header = MetricsReport.csv_header()
    row = make_report().to_csv_row()
    assert len(header.split(",")) == len(row.split(","))
    assert row.startswith("bar,1000,100,")


def test_csv_missing_fields_are_empty():
    rep = make_report(volume_rest=None, volume_deformed=None,
                      arap_energy_final=None, timings={"total": 1.0})
    cells = rep.to_csv_row().split(",")
    header = MetricsReport.csv_header().split(",")
    assert len(cells) == len(header)
    assert cells[header.index("time_remesh")] == ""
    assert cells[header.index("volume_ratio")] == ""
    assert cells[header.index("energy")] == ""
    assert cells[header.index("time_total")] == "1"


def test_volume_ratio_property():
    assert make_report().volume_ratio == pytest.approx(0.95)
    assert make_report(volume_rest=None).volume_ratio is None
    assert make_report(volume_rest=0.0).volume_ratio is None


# ---------------------------------------------------------------------------
# colormap


def test_hot_colormap_anchors():
    cols = hot_colormap(np.array([0.0, 1 / 3, 2 / 3, 1.0]), vmax=1.0)
    assert np.array_equal(cols[0], [0, 0, 0])
    assert np.array_equal(cols[1], [255, 0, 0])
    assert np.array_equal(cols[2], [255, 255, 0])
    assert np.array_equal(cols[3], [255, 255, 255])


def test_hot_colormap_monotone_channels():
    v = np.linspace(0.0, 1.0, 64)
    cols = hot_colormap(v, vmax=1.0).astype(np.int64)
    assert np.all(np.diff(cols, axis=0) >= 0)


def test_hot_colormap_default_vmax_clips_tail():
    v = np.zeros(100)
    v[:95] = np.linspace(0.0, 1.0, 95)
    v[95:] = 50.0                      # outliers beyond the 95th percentile
    cols = hot_colormap(v)
    assert np.all(cols[95:] == 255)


def test_hot_colormap_constant_zero_is_black():
    cols = hot_colormap(np.zeros(5))
    assert np.all(cols == 0)


def test_vertex_colors_shape_and_uniform_field(sphere):
    per_edge = np.full(sphere.n_edges, 0.5)
    cols = edge_error_vertex_colors(sphere, per_edge, vmax=1.0)
    assert cols.shape == (sphere.n_vertices, 3)
    assert cols.dtype == np.uint8
    assert np.all(cols == cols[0])     # every vertex averages to 0.5


def test_vertex_colors_length_checked(sphere):
    with pytest.raises(SizeMismatch):
        edge_error_vertex_colors(sphere, np.zeros(3))
