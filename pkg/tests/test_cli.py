import json
import subprocess
import sys

import numpy as np
import pytest

from manifold_lasso import io
from manifold_lasso.cli import main, parse_lambda_grid
from manifold_lasso.errors import ValidationError
from manifold_lasso.graph import PointCloud, build_laplacian, build_neighbor_graph

GEOMETRY = ["--radius", "0.9", "--bandwidth", "0.4"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def skeleton(tmp_path_factory):
    root = tmp_path_factory.mktemp("skeleton")
    assert run("synth", "--kind", "skeleton", "-n", 2000, "--seed", 1, "--out", root / "s") == 0
    return root


@pytest.fixture(scope="module")
def monolithic(skeleton):
    out = skeleton / "pipe"
    code = run("pipeline", "--cloud", skeleton / "s" / "cloud.csv",
               "--dictionary", skeleton / "s" / "dictionary.json", *GEOMETRY,
               "-d", 2, "-m", 3, "--subsample", 100, "--seeds", 3, "--out", out)
    assert code == 0
    return out


@pytest.fixture(scope="module")
def staged(skeleton):
    s = skeleton / "s"
    st = skeleton / "staged"
    steps = [
        ("graph", "--cloud", s / "cloud.csv", *GEOMETRY, "--out", st / "graph"),
        ("laplacian", "--graph", st / "graph", "--out", st / "lap"),
        ("embed", "--laplacian", st / "lap", "-m", 3, "--out", st / "emb"),
        ("tangent", "--cloud", s / "cloud.csv", "--graph", st / "graph", "-d", 2,
         "--subsample", 100, "--seed", 3, "--out", st / "tan"),
        ("pullback", "--cloud", s / "cloud.csv", "--graph", st / "graph",
         "--laplacian", st / "lap", "--embedding", st / "emb", "--tangent", st / "tan",
         "--dictionary", s / "dictionary.json", "--out", st / "pull"),
        ("flasso", "--design", st / "pull", "--select", 2, "--out", st / "flasso"),
    ]
    for step in steps:
        assert run(*step) == 0, step[0]
    return st


def test_pipeline_selects_articulated_torsions(monolithic):
    support = io.read_json(monolithic / "support.json")
    assert support["support_names"] == ["torsion_A", "torsion_B"]
    rep = io.read_json(monolithic / "report.json")
    assert rep["repeats"][0]["selection_trace"]
    config = io.read_json(monolithic / "config.json")
    assert config["radius"] == 0.9 and config["subsample"] == 100 and config["seeds"] == [3]
    diag = io.read_json(monolithic / "diagnostics.json")
    assert diag["certificate"]["unit_columns"] is False


def test_staged_equals_monolithic(monolithic, staged):
    for name in ("X.csv", "Y.csv", "design.json"):
        assert (staged / "pull" / name).read_bytes() == (monolithic / name).read_bytes(), name
    assert (staged / "emb" / "embedding.csv").read_bytes() == \
        (monolithic / "embedding.csv").read_bytes()
    for name in ("path.csv", "support.json"):
        assert (staged / "flasso" / name).read_bytes() == (monolithic / name).read_bytes(), name


def test_graph_then_laplacian_matches_in_memory(skeleton, staged):
    cloud = PointCloud(io.read_matrix(skeleton / "s" / "cloud.csv"))
    lap = build_laplacian(build_neighbor_graph(cloud, 0.9, 0.4))
    stored = io.read_coo_csv(staged / "lap" / "laplacian.csv", shape=lap.L.shape)
    assert abs(stored - lap.L).max() == 0.0


def test_rerun_is_byte_identical(skeleton, monolithic):
    again = skeleton / "pipe2"
    code = run("pipeline", "--config", monolithic / "config.json", "--out", again)
    assert code == 0
    for name in ("X.csv", "Y.csv", "path.csv", "support.json", "diagnostics.json",
                 "embedding.csv"):
        assert (again / name).read_bytes() == (monolithic / name).read_bytes(), name
    a, b = io.read_json(again / "report.json"), io.read_json(monolithic / "report.json")
    a.pop("header"), b.pop("header")
    a["config"].pop("output"), b["config"].pop("output")
    assert a == b


def test_external_embedding_gives_identical_results(skeleton, monolithic):
    out = skeleton / "external"
    code = run("pipeline", "--config", monolithic / "config.json",
               "--embedding", monolithic / "embedding.csv", "--out", out)
    assert code == 0
    for name in ("X.csv", "Y.csv", "path.csv", "support.json"):
        assert (out / name).read_bytes() == (monolithic / name).read_bytes(), name


def test_flasso_on_saved_design_reproduces_pipeline(monolithic, tmp_path):
    assert run("flasso", "--design", monolithic, "--select", 2, "--out", tmp_path) == 0
    assert (tmp_path / "path.csv").read_bytes() == (monolithic / "path.csv").read_bytes()


def test_d_above_m_is_rejected_before_work(tmp_path, capsys):
    code = run("pipeline", "--cloud", tmp_path / "missing.csv", "--dictionary", "[]",
               "--bandwidth", 1, "-d", 3, "-m", 2, "--out", tmp_path / "o")
    assert code == 2
    assert "exceeds" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_missing_and_corrupt_inputs(tmp_path, capsys):
    assert run("graph", "--cloud", tmp_path / "nope.csv", "--bandwidth", 1,
               "--out", tmp_path / "g") == 4
    (tmp_path / "bad.csv").write_text("1,2\n3,4\n5,x\n")
    assert run("graph", "--cloud", tmp_path / "bad.csv", "--bandwidth", 1,
               "--out", tmp_path / "g") == 4
    assert "bad.csv:3:" in capsys.readouterr().err
    assert run("laplacian", "--graph", tmp_path / "nothing", "--out", tmp_path / "l") == 4
    err = capsys.readouterr().err
    assert "graph.json" in err or "kernel.csv" in err


def test_numerical_failure_exit_code(tmp_path):
    (tmp_path / "c.csv").write_text("0,0\n10,10\n")
    assert run("graph", "--cloud", tmp_path / "c.csv", "--radius", 1, "--bandwidth", 1,
               "--out", tmp_path / "g") == 3


def test_example1_through_cli(tmp_path, capsys):
    assert run("synth", "--kind", "example1", "-n", 100, "--out", tmp_path / "e") == 0
    assert run("flasso", "--design", tmp_path / "e", "--select", 2,
               "--lambda-grid", "auto:50:1e-3", "--out", tmp_path / "f") == 0
    assert io.read_json(tmp_path / "f" / "support.json")["support"] == [0, 1]
    assert run("diagnose", "--problem", tmp_path / "e", "--support", "0,1",
               "--lambda", 1.0, "--out", tmp_path / "cert.json") == 0
    cert = io.read_json(tmp_path / "cert.json")
    assert cert["mu"] == pytest.approx(0.0, abs=1e-12) and cert["s"] == 2


def test_parse_lambda_grid(tmp_path):
    assert parse_lambda_grid("auto") == ("auto", 50, 1e-3)
    assert parse_lambda_grid("auto:20") == ("auto", 20, 1e-3)
    assert parse_lambda_grid("auto:20:0.01") == ("auto", 20, 0.01)
    kind, values = parse_lambda_grid("3,2,1")
    assert kind == "list" and list(values) == [3.0, 2.0, 1.0]
    (tmp_path / "grid.csv").write_text("0.5\n0.25\n")
    assert list(parse_lambda_grid(f"@{tmp_path / 'grid.csv'}")[1]) == [0.5, 0.25]
    for bad in ("auto:x", "1,a", "auto:0", "auto:5:2", ""):
        with pytest.raises(ValidationError):
            parse_lambda_grid(bad)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "manifold_lasso", "synth", "--kind", "circle",
                           "-n", "8", "--params", json.dumps({"equally_spaced": True}),
                           "--binary", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    pts = io.read_matrix(tmp_path / "cloud.bin")
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-15)
