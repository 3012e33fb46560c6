import numpy as np
import pytest

from cascade import InvalidParams, euler_characteristic
from cascade import synth
from conftest import signed_volume


def test_icosphere_vertex_count_formula():
    for s in range(4):
        m = synth.icosphere(s)
        assert m.n_vertices == 10 * 4 ** s + 2
        assert m.n_triangles == 20 * 4 ** s
        assert euler_characteristic(m) == 2


def test_icosphere_on_sphere_surface():
    m = synth.icosphere(3, radius=2.5)
    r = np.linalg.norm(m.positions, axis=1)
    assert np.allclose(r, 2.5, atol=1e-12)


def test_icosphere_volume_converges():
    exact = 4.0 / 3.0 * np.pi
    errs = [abs(signed_volume(synth.icosphere(s)) - exact)
            for s in (2, 3, 4)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.01


def test_torus_euler_zero():
    m = synth.torus(16, 10)
    assert euler_characteristic(m) == 0
    assert m.boundary_loop_count() == 0
    assert m.n_vertices == 160


def test_torus_volume():
    exact = 2 * np.pi ** 2 * 1.0 * 0.4 ** 2
    v = signed_volume(synth.torus(64, 32, 1.0, 0.4))
    assert abs(v - exact) / exact < 0.01


def test_bar_closed_and_open():
    closed = synth.bar(3, 3, 10)
    assert euler_characteristic(closed) == 2
    assert closed.boundary_loop_count() == 0
    assert np.isclose(signed_volume(closed), 3 * 3 * 10 * 0.25 ** 3)
    tube = synth.bar(3, 3, 10, capped=False)
    assert tube.boundary_loop_count() == 2
    assert euler_characteristic(tube) == 0


def test_bar_spans_z():
    m = synth.bar(4, 4, 20, cell=0.25)
    assert np.isclose(m.positions[:, 2].min(), 0.0)
    assert np.isclose(m.positions[:, 2].max(), 5.0)


def test_slab_fold_sheets_face_each_other():
    m = synth.slab_fold(n_len=40, n_wid=6, length=2.0, width=0.4, gap=0.2)
    assert m.boundary_loop_count() == 1
    vn = m.vertex_normals()
    low = m.positions[:, 2] < 1e-9
    high = m.positions[:, 2] > 0.2 - 1e-9
    away_from_bend = m.positions[:, 0] < 1.5
    assert np.all(vn[low & away_from_bend, 2] > 0.9)
    assert np.all(vn[high & away_from_bend, 2] < -0.9)


def test_synthesize_dispatch():
    m = synth.synthesize("icosphere", subdivisions=2)
    assert m.n_vertices == 162
    with pytest.raises(InvalidParams):
        synth.synthesize("klein_bottle")


def test_deterministic_generation():
    a = synth.icosphere(3, jitter=0.4, seed=9)
    b = synth.icosphere(3, jitter=0.4, seed=9)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.triangles, b.triangles)
    c = synth.icosphere(3, jitter=0.4, seed=10)
    assert not np.array_equal(a.positions, c.positions)


def test_param_validation():
    with pytest.raises(InvalidParams):
        synth.icosphere(-1)
    with pytest.raises(InvalidParams):
        synth.torus(2, 8)
    with pytest.raises(InvalidParams):
        synth.bar(0, 1, 1)
    with pytest.raises(InvalidParams):
        synth.slab_fold(gap=0.0)
