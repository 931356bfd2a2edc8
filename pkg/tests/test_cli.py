import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from wgstl import io
from wgstl.cli import main
from wgstl.engine import ParamStore
from wgstl.graph import Dataset, Sample, Trajectory, build_graph
from wgstl.logic import parse_structure
from wgstl.train import TrainConfig, TrainedModel

STRUCT = "(tempX [0 2] (graphX (pred p)))"
PREDS = "p: {a: [1.0], c: 0.0}\n"


@pytest.fixture
def synth_data(tmp_path):
    g = tmp_path / "g.json"
    g.write_text(json.dumps({"nodes": ["r", "a", "b"], "edges": [["r", "a"], ["r", "b"]]}))
    (tmp_path / "p.yaml").write_text(PREDS)
    out = tmp_path / "d.json"
    rc = main(["synth", "--graph", str(g), "--formula", "(always [0 2] (exists (pred p)))",
               "--predicates", str(tmp_path / "p.yaml"), "--root", "r", "--n-pos", "50",
               "--n-neg", "50", "--seed", "3", "--out", str(out)])
    assert rc == 0
    return out


def run_train(data, out, *extra):
    return main(["train", "--data", str(data), "--structure", STRUCT, "--root", "r",
                 "--epochs", "300", "--out", str(out), *extra])


def test_train_eval_predict(synth_data, tmp_path, capsys):
    assert run_train(synth_data, tmp_path / "o") == 0
    for name in ("model.json", "report.txt", "report.json", "training_log_r.csv"):
        assert (tmp_path / "o" / name).exists()
    assert "; always t0 [0 2]" in (tmp_path / "o" / "report.txt").read_text()
    capsys.readouterr()
    assert main(["eval", "--model", str(tmp_path / "o" / "model.json"), "--data", str(synth_data)]) == 0
    out = capsys.readouterr().out
    assert "samples: 100" in out and "accuracy: 100.00%" in out
    assert main(["predict", "--model", str(tmp_path / "o" / "model.json"), "--data", str(synth_data),
                 "--out", str(tmp_path / "pred.csv")]) == 0
    assert len((tmp_path / "pred.csv").read_text().splitlines()) == 101


def test_train_twice_byte_identical(synth_data, tmp_path):
    run_train(synth_data, tmp_path / "a")
    run_train(synth_data, tmp_path / "b")
    assert (tmp_path / "a" / "model.json").read_bytes() == (tmp_path / "b" / "model.json").read_bytes()


def test_train_config_file_and_override(synth_data, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(f"data: {synth_data}\nstructure: '{STRUCT}'\nroot: r\nepochs: 3\nseed: 4\n")
    assert main(["train", "--config", str(cfg), "--epochs", "2", "--out", str(tmp_path / "o")]) == 0
    m = TrainedModel.load(tmp_path / "o" / "model.json")
    assert (m.config.epochs, m.config.seed) == (2, 4)


def test_missing_root_exits_2(synth_data, tmp_path, capsys):
    rc = main(["train", "--data", str(synth_data), "--structure", STRUCT, "--root", "nowhere",
               "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "nowhere" in capsys.readouterr().err


def test_bad_structure_exits_2(synth_data, tmp_path, capsys):
    rc = main(["train", "--data", str(synth_data), "--structure", "(always [0 2] (pred p))",
               "--root", "r", "--out", str(tmp_path / "o")])
    assert rc == 2


def tiny_model(dim=1):
    g = build_graph(["r", "a", "b"], [("r", "a"), ("r", "b")])
    t = parse_structure("(always [0 1] (exists (pred p)))")
    p = ParamStore.init(t, g, "r", dim, relaxed=False, coef_scale=0.0)
    p.set("a:p", [1.0] + [0.0] * (dim - 1))
    return TrainedModel(t, {}, p, TrainConfig(), "r", g, tuple(f"x{j + 1}" for j in range(dim)))


def test_eval_errors(tmp_path, capsys):
    tiny_model().save(tmp_path / "m.json")
    g = build_graph(["r", "a", "b"], [("r", "a"), ("r", "b")])
    io.save_dataset(Dataset(g, (), ("x1",)), tmp_path / "empty.json")
    assert main(["eval", "--model", str(tmp_path / "m.json"), "--data", str(tmp_path / "empty.json")]) == 2
    assert "empty" in capsys.readouterr().err
    s = Sample(Trajectory(g.nodes, np.zeros((3, 2, 2))), 1)
    io.save_dataset(Dataset(g, (s,), ("x1", "x2")), tmp_path / "d2.json")
    assert main(["eval", "--model", str(tmp_path / "m.json"), "--data", str(tmp_path / "d2.json")]) == 2
    assert "dimension mismatch" in capsys.readouterr().err


def witness_dataset(tmp_path):
    nodes = ["v1", "v2", "v3", "v4", "v5", "v6"]
    edges = [("v1", "v2"), ("v1", "v4"), ("v2", "v3"), ("v3", "v4"), ("v4", "v5"), ("v4", "v6"),
             ("v2", "v5")]
    g = build_graph(nodes, edges)
    data = np.ones((6, 1, 1))
    data[5, 0, 0] = 3.0
    path = tmp_path / "witness.json"
    io.save_dataset(Dataset(g, (Sample(Trajectory(g.nodes, data), 1),), ("x",)), path)
    (tmp_path / "gt2.yaml").write_text("p: {a: [1.0], c: 2.0}\n")
    return path


def test_monitor_neighbor_witness(tmp_path, capsys):
    path = witness_dataset(tmp_path)
    rc = main(["monitor", "--data", str(path), "--formula", "(exists (pred p))",
               "--predicates", str(tmp_path / "gt2.yaml"), "--all-nodes", "--crisp"])
    assert rc == 0
    lines = [ln.split() for ln in capsys.readouterr().out.splitlines()[2:]]
    assert {ln[1]: ln[4] for ln in lines} == {"v1": "false", "v2": "false", "v3": "false",
                                              "v4": "true", "v5": "false", "v6": "false"}


def test_monitor_soft_agrees_with_crisp_at_small_sigma(tmp_path, capsys):
    path = witness_dataset(tmp_path)
    common = ["monitor", "--data", str(path), "--formula", "(exists (pred p))",
              "--predicates", str(tmp_path / "gt2.yaml"), "--root", "v4"]
    main(common + ["--crisp"])
    crisp = float(capsys.readouterr().out.splitlines()[2].split()[3])
    main(common + ["--soft", "--sigma", "0.001"])
    soft = float(capsys.readouterr().out.splitlines()[2].split()[3])
    assert crisp == 1.0
    assert soft == pytest.approx(crisp, abs=1e-3)


def test_inspect_prints_normalized_graph_weights(tmp_path, capsys):
    g = build_graph(["Lombardia", "Piemonte", "Veneto", "EmiliaRomagna"],
                    [("Lombardia", "Piemonte"), ("Lombardia", "Veneto"), ("Lombardia", "EmiliaRomagna")])
    t = parse_structure("(always [0 2] (exists (pred p)))")
    p = ParamStore.init(t, g, "Lombardia", 1, relaxed=False)
    p.set("W:g0@Lombardia", np.array([0.0002, 0.0001, 0.9997]) - 1e-6)
    TrainedModel(t, {}, p, TrainConfig(), "Lombardia", g, ("x1",)).save(tmp_path / "m.json")
    assert main(["inspect", "--model", str(tmp_path / "m.json")]) == 0
    out = capsys.readouterr().out
    assert "𝒲 = [0.0002, 0.0001, 0.9997]" in out
    assert "Ω = [0.5000, 0.5000, 0.5000]" not in out
    assert "Ω = [0.3333, 0.3333, 0.3333]" in out


def test_inspect_corrupt_model(tmp_path, capsys):
    tiny_model().save(tmp_path / "m.json")
    doc = json.loads((tmp_path / "m.json").read_text())
    doc["parameters"]["sigma"] = "one"
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    assert main(["inspect", "--model", str(tmp_path / "bad.json")]) == 2
    assert "parameters/sigma" in capsys.readouterr().err
    (tmp_path / "junk.json").write_text("{not json")
    assert main(["inspect", "--model", str(tmp_path / "junk.json")]) == 2


def test_make_graph(tmp_path, capsys):
    (tmp_path / "c.csv").write_text("id,lat,lon\nA,0,0\nB,0,1\nC,0,10\n")
    assert main(["make-graph", "--coords", str(tmp_path / "c.csv"), "--out", str(tmp_path / "g.json")]) == 0
    g = io.load_graph(tmp_path / "g.json")
    assert g.edge_list() == [["A", "B"]]


@pytest.mark.skipif(shutil.which("wgstl") is None, reason="console script not installed")
def test_console_script():
    r = subprocess.run(["wgstl", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "make-graph" in r.stdout


def test_module_help():
    r = subprocess.run([sys.executable, "-m", "wgstl.cli", "train", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "--learning-rate" in r.stdout
