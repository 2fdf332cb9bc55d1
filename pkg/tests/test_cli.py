import json
import math
import shutil
import subprocess

import numpy as np
import pytest

from cochain.cli import main
from cochain.complex import build_complex, dump_complex_json
from cochain.dec import read_coo


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("COCHAIN_SEED", raising=False)
    dump_complex_json(build_complex([(0, 1), (1, 2)]), tmp_path / "path.json")
    dump_complex_json(build_complex([(0, 1, 2)]), tmp_path / "tri.json")
    np.savetxt(tmp_path / "square.csv", [[0, 0], [1, 0], [1, 1], [0, 1]], delimiter=",")
    rng = np.random.default_rng(0)
    basis = np.linalg.qr(rng.normal(size=(3, 2)))[0]
    np.savetxt(tmp_path / "planar.csv", rng.normal(size=(20, 2)) @ basis.T, delimiter=",", fmt="%.17g")
    return tmp_path


def test_dec_hodge(workdir):
    assert main(["dec", "path.json", "--op", "hodge", "--k", "0", "-o", "L0.txt"]) == 0
    np.testing.assert_array_equal(read_coo("L0.txt").toarray(), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
    manifest = json.loads((workdir / "L0.txt.manifest.json").read_text())
    assert manifest["command"] == "dec" and "path.json" in manifest["inputs"]


def test_dec_paper_sign(workdir):
    assert main(["dec", "path.json", "--op", "graph-laplacian", "-o", "G.txt"]) == 0
    assert main(["dec", "path.json", "--op", "graph-laplacian", "--paper-sign", "-o", "Gp.txt"]) == 0
    np.testing.assert_array_equal(read_coo("Gp.txt").toarray(), -read_coo("G.txt").toarray())


def test_dec_exit_codes(workdir):
    assert main(["dec", "tri.json", "--op", "hodge", "--k", "5", "-o", "x.txt"]) == 3
    assert not (workdir / "x.txt").exists()
    (workdir / "bad.json").write_text("{not json")
    assert main(["dec", "bad.json", "--op", "hodge", "--k", "0", "-o", "x.txt"]) == 2
    assert main(["dec", "missing.json", "--op", "hodge", "--k", "0", "-o", "x.txt"]) == 2
    assert main(["dec", "tri.json", "--op", "spin", "-o", "x.txt"]) == 2


def test_ph_square(workdir):
    assert main(["ph", "square.csv", "-o", "dgm.csv"]) == 0
    lines = (workdir / "dgm.csv").read_text().splitlines()
    assert "1,1,1.4142135623730951" in lines
    assert lines.count("0,0,1") == 3


def test_ph_radius_zero_and_single_point(workdir):
    assert main(["ph", "square.csv", "--max-radius", "0", "-o", "r0.csv"]) == 0
    assert (workdir / "r0.csv").read_text().splitlines()[1:] == ["0,0,inf"] * 4
    np.savetxt(workdir / "one.csv", [[2.0, 3.0]], delimiter=",")
    assert main(["ph", "one.csv", "-o", "one_dgm.csv"]) == 0
    assert (workdir / "one_dgm.csv").read_text().splitlines()[1:] == ["0,0,inf"]
    assert main(["ph", "square.csv", "--max-dim", "3", "-o", "x.csv"]) == 3


def test_embed_mds(workdir):
    assert main(["embed", "planar.csv", "--method", "mds", "--dim", "2", "--seed", "1", "-o", "emb"]) == 0
    meta = json.loads((workdir / "emb.json").read_text())
    assert meta["final_loss"] < 1e-6
    assert np.loadtxt(workdir / "emb.csv", delimiter=",").shape == (20, 2)


def test_embed_invalid(workdir):
    assert main(["embed", "planar.csv", "--method", "mds", "--dim", "0", "-o", "e"]) == 2
    (workdir / "cfg.json").write_text('{"learning_rate": 1}')
    assert main(["embed", "planar.csv", "--method", "mds", "--dim", "2", "--config", "cfg.json", "-o", "e"]) == 2
    (workdir / "nan.csv").write_text("1,2\nnan,3\n")
    assert main(["embed", "nan.csv", "--method", "mds", "--dim", "2", "-o", "e"]) == 2


def test_embed_divergence(workdir):
    (workdir / "hot.json").write_text('{"lr": 50.0, "max_iter": 200}')
    assert main(["embed", "planar.csv", "--method", "mds", "--dim", "2", "--config", "hot.json", "-o", "e"]) == 4


def test_embed_deterministic(workdir):
    args = ["embed", "planar.csv", "--method", "tsne", "--dim", "2", "--seed", "4"]
    (workdir / "cfg.json").write_text('{"max_iter": 50}')
    assert main(args + ["--config", "cfg.json", "-o", "a"]) == 0
    assert main(args + ["--config", "cfg.json", "-o", "b"]) == 0
    for suffix in (".csv", "_loss.csv"):
        assert (workdir / f"a{suffix}").read_bytes() == (workdir / f"b{suffix}").read_bytes()


def test_seed_precedence(workdir, monkeypatch):
    (workdir / "cfg.json").write_text('{"max_iter": 5, "seed": 1}')
    base = ["embed", "planar.csv", "--method", "mds", "--dim", "2", "--config", "cfg.json"]
    monkeypatch.setenv("COCHAIN_SEED", "7")
    assert main(base + ["-o", "env"]) == 0
    assert json.loads((workdir / "env.json").read_text())["seed"] == 7
    assert main(base + ["--seed", "3", "-o", "flag"]) == 0
    assert json.loads((workdir / "flag.json").read_text())["seed"] == 3
    monkeypatch.delenv("COCHAIN_SEED")
    assert main(base + ["-o", "fromcfg"]) == 0
    assert json.loads((workdir / "fromcfg.json").read_text())["seed"] == 1


def _write_cochain(path, rows):
    np.savetxt(path, np.atleast_2d(rows), delimiter=",", fmt="%.17g")


def test_train_dd_constant(workdir):
    _write_cochain(workdir / "x.csv", [[0.5], [-1.0], [2.0]])
    _write_cochain(workdir / "g.csv", [[1.5]])
    code = main(["train", "tri.json", "--input", "x:0=x.csv", "--input", "g:2=g.csv",
                 "--expr", "d1(TN[d0](x)) = L2(g)", "--phi", "identity", "--seed", "2", "-o", "dd"])
    assert code == 0
    losses = np.loadtxt(workdir / "dd_loss.csv", delimiter=",", skiprows=1)[:, 1]
    assert np.all(losses == losses[0])
    # L2 on one triangle multiplies by 3
    assert abs(losses[0] - (3 * 1.5) ** 2) < 1e-12


def test_train_least_squares(workdir):
    rng = np.random.default_rng(1)
    f, g = rng.normal(size=(3, 2)), rng.normal(size=(3, 1))
    _write_cochain(workdir / "f.csv", f)
    _write_cochain(workdir / "g.csv", g)
    (workdir / "cfg.json").write_text(json.dumps({"lr": 0.05, "max_iter": 20000, "tol": 1e-22}))
    code = main(["train", "path.json", "--input", "x:0=f.csv", "--target", "g.csv",
                 "--expr", "TN[I](x)", "--config", "cfg.json", "-o", "ls"])
    assert code == 0
    W = np.array(json.loads((workdir / "ls_weights.json").read_text())["weights"][0])
    np.testing.assert_allclose(W, np.linalg.lstsq(f, g, rcond=None)[0], atol=1e-6)


def test_train_expression_errors(workdir, capsys):
    _write_cochain(workdir / "e.csv", [[1.0], [2.0], [3.0]])
    assert main(["train", "tri.json", "--input", "x:1=e.csv", "--expr", "TN[d0](x", "-o", "t"]) == 5
    assert main(["train", "tri.json", "--input", "x:1=e.csv", "--expr", "TN[L0](x)", "-o", "t"]) == 5
    assert "TN[L0]" in capsys.readouterr().err
    assert main(["train", "tri.json", "--input", "x=e.csv", "--expr", "x", "-o", "t"]) == 2


def test_train_help_documents_grammar(capsys):
    assert main(["train", "--help"]) == 0
    out = capsys.readouterr().out
    assert "TN" in out and "d<k>" in out


def test_rerun_reproduces(workdir, monkeypatch):
    monkeypatch.setenv("COCHAIN_SEED", "11")
    (workdir / "cfg.json").write_text('{"max_iter": 30}')
    assert main(["embed", "planar.csv", "--method", "mds", "--dim", "2", "--config", "cfg.json", "-o", "e"]) == 0
    monkeypatch.setenv("COCHAIN_SEED", "99")
    before = (workdir / "e.csv").read_bytes()
    assert main(["rerun", "e.csv.manifest.json"]) == 0
    assert (workdir / "e.csv").read_bytes() == before
    (workdir / "e.csv").write_text("tampered\n")
    manifest = json.loads((workdir / "e.csv.manifest.json").read_text())
    manifest["outputs"]["e.csv"] = "0" * 64
    (workdir / "e.csv.manifest.json").write_text(json.dumps(manifest))
    assert main(["rerun", "e.csv.manifest.json"]) == 1


def test_console_script(workdir):
    exe = shutil.which("cochain")
    if exe is None:
        pytest.skip("console script not installed")
    proc = subprocess.run([exe, "ph", "square.csv", "--max-radius", "inf", "-o", "s.csv"], capture_output=True)
    assert proc.returncode == 0
    assert math.isinf(float((workdir / "s.csv").read_text().splitlines()[1].split(",")[2]))
