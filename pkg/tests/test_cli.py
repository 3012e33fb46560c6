import shutil
import subprocess
import sys

import numpy as np
import pytest

from cascade import remesh, synth
from cascade.cli import main
from cascade.errors import (
    CascadeError,
    NonManifoldEdge,
    ParseError,
    SingularSystem,
    ZeroLengthRestEdge,
    exit_code_for,
)
from cascade.fileio import read_obj, write_constraints, write_obj
from cascade.mesh import build_mesh


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def make_sphere_obj(path, subdivisions=3):
    m = synth.icosphere(subdivisions)
    write_obj(str(path), m.positions, m.triangles)
    return m


# ---------------------------------------------------------------------------
# exit code mapping


def test_exit_code_classes():
    assert exit_code_for(ParseError("f", 1, "bad")) == 2
    assert exit_code_for(ZeroLengthRestEdge("zero")) == 3
    assert exit_code_for(SingularSystem("singular")) == 3
    assert exit_code_for(NonManifoldEdge("edge")) == 4
    assert exit_code_for(CascadeError("generic")) == 1


def test_missing_input_file(workdir, capsys):
    assert main(["remesh", "nope.obj", "--out", "x.obj"]) == 2
    assert "error:" in capsys.readouterr().err


def test_parse_error_exit(workdir, capsys):
    (workdir / "bad.obj").write_text("v 0 0 0\nf 1 2\n")
    assert main(["remesh", "bad.obj", "--out", "x.obj"]) == 2
    assert "bad.obj:2" in capsys.readouterr().err


def test_invalid_ratio_exit(workdir):
    make_sphere_obj(workdir / "s.obj", 1)
    assert main(["remesh", "s.obj", "--ratio", "2.0", "--out", "x.obj"]) == 2


def test_topology_exit_from_metrics(workdir):
    make_sphere_obj(workdir / "s.obj", 1)
    t = synth.torus(6, 4)
    write_obj("t.obj", t.positions, t.triangles)
    assert main(["metrics", "s.obj", "t.obj"]) == 4


# ---------------------------------------------------------------------------
# subcommands


def test_synth_writes_obj(workdir, capsys):
    assert main(["synth", "icosphere", "--out", "s.obj",
                 "--set", "subdivisions=2"]) == 0
    assert "162 vertices" in capsys.readouterr().out
    p, t = read_obj("s.obj")
    assert len(p) == 162 and len(t) == 320


def test_synth_bad_set_exit(workdir):
    assert main(["synth", "icosphere", "--out", "s.obj",
                 "--set", "oops"]) == 2
    assert main(["synth", "nosuchshape", "--out", "s.obj"]) == 2


def test_remesh_writes_coarse_and_cache(workdir, capsys):
    make_sphere_obj(workdir / "s.obj")
    assert main(["remesh", "s.obj", "--ratio", "0.1", "--out", "c.obj",
                 "--cache", "s.corr"]) == 0
    out = capsys.readouterr().out
    assert "642 -> 65 vertices" in out
    p, t = read_obj("c.obj")
    assert len(p) == 65
    assert (workdir / "s.corr").read_text().startswith("CORR v1 642 ")


def test_deform_rigid_and_colormap(workdir, capsys):
    m = make_sphere_obj(workdir / "s.obj")
    cm = remesh.decimate(m, 0.1)
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    write_constraints("cons.txt", np.arange(cm.n_vertices),
                      cm.mesh.positions @ q.T + 0.5)
    assert main(["deform", "s.obj", "--constraints", "cons.txt",
                 "--ratio", "0.1", "--out", "d.obj",
                 "--colormap", "err.ply", "--csv", "runs.csv"]) == 0
    out = capsys.readouterr().out
    assert "mean_edge_error" in out and "time_total" in out
    p, _ = read_obj("d.obj")
    want = m.positions @ q.T + 0.5
    assert np.linalg.norm(p - want, axis=1).max() <= 1e-6
    assert (workdir / "err.ply").read_text().startswith("ply")
    assert len((workdir / "runs.csv").read_text().strip().split("\n")) == 2


def test_deform_with_given_coarse_matches_ratio(workdir):
    m = make_sphere_obj(workdir / "s.obj")
    cm = remesh.decimate(m, 0.1)
    write_obj("c.obj", cm.mesh.positions, cm.mesh.triangles)
    write_constraints("cons.txt", np.arange(cm.n_vertices),
                      cm.mesh.positions)
    assert main(["deform", "s.obj", "--constraints", "cons.txt",
                 "--coarse", "c.obj", "--out", "a.obj"]) == 0
    assert main(["deform", "s.obj", "--constraints", "cons.txt",
                 "--ratio", "0.1", "--out", "b.obj"]) == 0
    pa, _ = read_obj("a.obj")
    pb, _ = read_obj("b.obj")
    assert np.array_equal(pa, pb)


def test_metrics_reports_keys(workdir, capsys):
    m = make_sphere_obj(workdir / "s.obj", 2)
    write_obj("scaled.obj", m.positions * 1.5, m.triangles)
    assert main(["metrics", "s.obj", "scaled.obj"]) == 0
    out = capsys.readouterr().out
    assert "mean_edge_error 0.5" in out
    assert "volume_ratio 3.375" in out
    assert "vertex_distance_mean" in out


def test_align_cli(workdir, capsys):
    m = make_sphere_obj(workdir / "s.obj")
    cm = remesh.decimate(m, 0.05)
    ids = np.arange(0, cm.n_vertices, 6)
    write_constraints("lm.txt", ids, cm.mesh.positions[ids])
    assert main(["align", "s.obj", "--landmarks", "lm.txt",
                 "--out", "al.obj"]) == 0
    out = capsys.readouterr().out
    assert "landmark_residual_mean" in out
    p, _ = read_obj("al.obj")
    assert np.linalg.norm(p - m.positions, axis=1).max() <= 1e-8


def test_pose_transfer_cli(workdir):
    m = make_sphere_obj(workdir / "s.obj")
    cm = remesh.decimate(m, 0.05)
    write_obj("src.obj", cm.mesh.positions, cm.mesh.triangles)
    with open("map.txt", "w") as fh:
        fh.write("# coarse -> source\n")
        for k in range(cm.n_vertices):
            fh.write(f"{k} {k}\n")
    assert main(["pose-transfer", "s.obj", "--source-rest", "src.obj",
                 "--source-posed", "src.obj", "--map", "map.txt",
                 "--out", "pt.obj"]) == 0
    p, _ = read_obj("pt.obj")
    assert np.linalg.norm(p - m.positions, axis=1).max() <= 1e-8


def test_pose_transfer_bad_map_file(workdir):
    make_sphere_obj(workdir / "s.obj", 1)
    write_obj("src.obj", *read_obj("s.obj"))
    (workdir / "map.txt").write_text("1 2 3\n")
    assert main(["pose-transfer", "s.obj", "--source-rest", "src.obj",
                 "--source-posed", "src.obj", "--map", "map.txt",
                 "--out", "pt.obj"]) == 2


def test_bench_cli(workdir, capsys):
    assert main(["bench", "--shape", "icosphere:subdivisions=2",
                 "--ratios", "0.2", "--iterations", "3",
                 "--csv", "b.csv"]) == 0
    out = capsys.readouterr().out
    lines = out.strip().split("\n")
    assert lines[0].endswith("t_baseline,speedup")
    assert lines[1].startswith("icosphere-2@0.2,162,")
    assert (workdir / "b.csv").read_text() == out


def test_bench_bad_shape_spec(workdir):
    assert main(["bench", "--shape", "icosphere:oops"]) == 2


# ---------------------------------------------------------------------------
# environment


def test_thread_cap_env(workdir, monkeypatch, capsys):
    monkeypatch.setenv("CASCADE_THREADS", "1")
    assert main(["synth", "icosphere", "--out", "s.obj",
                 "--set", "subdivisions=1"]) == 0
    monkeypatch.setenv("CASCADE_THREADS", "banana")
    assert main(["synth", "icosphere", "--out", "s2.obj",
                 "--set", "subdivisions=1"]) == 0
    assert "CASCADE_THREADS" in capsys.readouterr().err


def test_subprocess_smoke(workdir):
    exe = shutil.which("cascade")
    cmd = [exe] if exe else [sys.executable, "-m", "cascade.cli"]
    res = subprocess.run(
        cmd + ["synth", "icosphere", "--out", "sub.obj",
               "--set", "subdivisions=1"],
        capture_output=True, text=True, timeout=300)
    assert res.returncode == 0, res.stderr
    p, t = read_obj("sub.obj")
    assert len(p) == 42 and len(t) == 80
