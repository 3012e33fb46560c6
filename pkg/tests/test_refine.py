import numpy as np
import pytest

from cascade import InvalidParams, SizeMismatch
from cascade import arap, correspond, lrf, refine, remesh, synth
from cascade.refine import RefineParams, _system_for


def random_rigid(rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q, rng.normal(size=3)


def mean_edge_err(mesh, positions):
    e = mesh.edges
    rest = np.linalg.norm(
        mesh.positions[e[:, 1]] - mesh.positions[e[:, 0]], axis=1)
    cur = np.linalg.norm(positions[e[:, 1]] - positions[e[:, 0]], axis=1)
    return float(np.mean(np.abs(cur - rest) / rest))


@pytest.fixture(scope="module")
def bent_bar():
    """Jittered bar bent 60 degrees through the coarse stage.

    Returns (fine mesh, correspondence, reconstructed positions).  The
    reconstruction carries genuine seams from the coarse pass, so the
    cleanup has real work to do.
    """
    fine = synth.bar(6, 6, 40, jitter=0.2, seed=5)
    cm = remesh.decimate(fine, 0.15)
    corr = correspond.build_correspondence(fine, cm)
    cmesh = cm.mesh
    z = cmesh.positions[:, 2]
    lo = np.flatnonzero(z < z.min() + 0.3)
    hi = np.flatnonzero(z > z.max() - 0.3)
    ang = np.deg2rad(60.0)
    c, s = np.cos(ang), np.sin(ang)
    rot = np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    pivot = cmesh.positions[hi].mean(axis=0)
    cons = arap.Constraints(
        np.concatenate([lo, hi]),
        np.concatenate([cmesh.positions[lo],
                        (cmesh.positions[hi] - pivot) @ rot.T + pivot]))
    cpos, _ = arap.arap_solve(cmesh, cons, iterations=30)
    rec = lrf.reconstruct(cpos, corr)
    return fine, corr, rec


# ---------------------------------------------------------------------------
# no-op and validation


def test_zero_iterations_is_bit_identical(bent_bar):
    fine, _, rec = bent_bar
    out = refine.refine(fine, rec, params=RefineParams(iterations=0))
    assert np.array_equal(out, rec)
    assert out is not rec                      # copy, not alias
    out2, trace = refine.refine(fine, rec,
                                params=RefineParams(iterations=0),
                                return_trace=True)
    assert np.array_equal(out2, rec)
    assert trace == []


def test_input_not_mutated(bent_bar):
    fine, _, rec = bent_bar
    before = rec.copy()
    refine.refine(fine, rec)
    assert np.array_equal(rec, before)


def test_negative_iterations_rejected(bent_bar):
    fine, _, rec = bent_bar
    with pytest.raises(InvalidParams):
        refine.refine(fine, rec, params=RefineParams(iterations=-1))


def test_nonpositive_fit_weight_rejected(bent_bar):
    fine, _, rec = bent_bar
    for w in (0.0, -3.0):
        with pytest.raises(InvalidParams):
            refine.refine(fine, rec, params=RefineParams(fit_weight=w))


def test_wrong_shape_rejected(bent_bar):
    fine, _, rec = bent_bar
    with pytest.raises(SizeMismatch):
        refine.refine(fine, rec[:-1])
    with pytest.raises(SizeMismatch):
        refine.refine(fine, rec[:, :2])


def test_pin_ids_out_of_range(bent_bar):
    fine, _, rec = bent_bar
    with pytest.raises(InvalidParams):
        refine.refine(fine, rec, pin_ids=[fine.n_vertices])
    with pytest.raises(InvalidParams):
        refine.refine(fine, rec, pin_ids=[-1])


# ---------------------------------------------------------------------------
# behavior


def test_rigid_motion_is_fixed_point(small_bar):
    rng = np.random.default_rng(7)
    tol = 1e-7 * small_bar.bbox_diagonal()
    for _ in range(5):
        q, t = random_rigid(rng)
        moved = small_bar.positions @ q.T + t
        out = refine.refine(small_bar, moved)
        assert np.abs(out - moved).max() <= tol


def test_displaced_vertex_error_strictly_improves(small_bar):
    pos = small_bar.positions.copy()
    pos[len(pos) // 2] += 0.5 * small_bar.mean_edge_length() * np.array(
        [0.3, -0.5, 0.8])
    before = mean_edge_err(small_bar, pos)
    after = mean_edge_err(small_bar, refine.refine(small_bar, pos))
    assert after < before


def test_bend_error_does_not_increase(bent_bar):
    fine, _, rec = bent_bar
    out = refine.refine(fine, rec)
    assert mean_edge_err(fine, out) <= mean_edge_err(fine, rec)


def test_trace_monotone_and_deviation_bounded(bent_bar):
    fine, _, rec = bent_bar
    out, trace = refine.refine(fine, rec,
                               params=RefineParams(iterations=6),
                               return_trace=True)
    tr = np.asarray(trace)
    assert len(tr) == 6
    assert np.all(np.diff(tr) <= 1e-10 * np.abs(tr[:-1]) + 1e-15)
    dev = np.linalg.norm(out - rec, axis=1).max()
    assert dev <= 2.0 * fine.mean_edge_length()


def test_larger_fit_weight_stays_closer(bent_bar):
    fine, _, rec = bent_bar
    from cascade.arap import default_soft_weight
    w = default_soft_weight(fine)
    near = refine.refine(fine, rec, params=RefineParams(fit_weight=100 * w))
    far = refine.refine(fine, rec, params=RefineParams(fit_weight=0.01 * w))
    d_near = np.linalg.norm(near - rec, axis=1).max()
    d_far = np.linalg.norm(far - rec, axis=1).max()
    assert d_near < d_far


def test_pins_held_exactly(bent_bar):
    fine, _, rec = bent_bar
    pins = np.array([0, 5, 17, fine.n_vertices - 1])
    out = refine.refine(fine, rec, pin_ids=pins)
    assert np.array_equal(out[pins], rec[pins])
    moved = np.setdiff1d(np.arange(fine.n_vertices), pins)
    assert np.linalg.norm(out[moved] - rec[moved], axis=1).max() > 0.0


def test_pin_handles_false_ignores_pins(bent_bar):
    fine, _, rec = bent_bar
    pins = np.array([0, 5, 17])
    free = refine.refine(fine, rec)
    inert = refine.refine(fine, rec, pin_ids=pins,
                          params=RefineParams(pin_handles=False))
    assert np.array_equal(free, inert)


def test_deterministic(bent_bar):
    fine, _, rec = bent_bar
    a = refine.refine(fine, rec)
    b = refine.refine(fine, rec)
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# factorization cache


def test_system_cached_per_weight_and_pins(small_bar):
    pins = np.array([0, 1], dtype=np.int64)
    s1 = _system_for(small_bar, 10.0, pins)
    s2 = _system_for(small_bar, 10.0, pins.copy())
    s3 = _system_for(small_bar, 11.0, pins)
    s4 = _system_for(small_bar, 10.0, np.array([0, 2], dtype=np.int64))
    assert s1 is s2
    assert s1 is not s3
    assert s1 is not s4


def test_refine_reuses_cached_system(small_bar):
    rng = np.random.default_rng(11)
    q, t = random_rigid(rng)
    moved = small_bar.positions @ q.T + t
    w = 25.0
    refine.refine(small_bar, moved, params=RefineParams(fit_weight=w))
    key = ("refine", w, np.zeros(0, np.int64).tobytes())
    cached = small_bar._cache[key]
    again = _system_for(small_bar, w, np.zeros(0, dtype=np.int64))
    assert cached is again


def test_cache_does_not_pin_mesh_lifetime():
    m = synth.icosphere(1)
    refine.refine(m, m.positions, params=RefineParams(iterations=1))
    import weakref
    ref = weakref.ref(m)
    del m
    import gc
    gc.collect()
    assert ref() is None
