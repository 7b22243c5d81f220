import json
import shutil
import subprocess

import numpy as np
import pytest

from shtk.cli import main


def call(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def files(workdir):
    space = workdir / "line.json"
    systems = workdir / "sys.json"
    assert main(["gen", "--model", "line", "--n", "64", "--out", str(space)]) == 0
    assert main(["dyadic", "build", str(space), "--out", str(systems)]) == 0
    return space, systems


def test_gen_csv_and_json(capsys, workdir):
    code, rep = call(capsys, "gen", "--model", "halfline", "--n", 32,
                     "--lambda", 0.7, "--out", workdir / "h.csv")
    assert code == 0 and rep["n"] == 32
    assert (workdir / "h.csv").read_text().splitlines()[0].startswith("id")


def test_dyadic_build_reports(capsys, files):
    space, _ = files
    code, rep = call(capsys, "dyadic", "build", space)
    assert code == 0
    assert rep["coverage"] >= 0.95


def test_haar_verify(capsys, files, workdir):
    _, systems = files
    dump = workdir / "coef.csv"
    code, rep = call(capsys, "haar", "verify", systems, "--dump", dump)
    assert code == 0
    assert dump.read_text().splitlines()[0] == "cube,epsilon,value"


def test_weights_and_bmo(capsys, files):
    space, _ = files
    code, rep = call(capsys, "weights", "ap", space, "--weight", "pow:0.4")
    assert code == 0 and rep["A_p"] >= 1
    code, rep = call(capsys, "bmo", "norm", space, "--b", "step:0")
    assert code == 0 and rep["bmo"] > 0
    code, rep = call(capsys, "bmo", "norm", space, "--b", "const:3")
    assert rep["bmo"] == 0.0


def test_op_check_and_export(capsys, files, workdir):
    _, systems = files
    out = workdir / "k.csv"
    code, rep = call(capsys, "op", "check", systems, "--op", "cauchy",
                     "--profile", "sawtooth:1", "--samples", 30, "--export", out)
    assert code == 0 and rep["nondegeneracy"]["passed"]
    assert (workdir / "k_re.csv").exists() and (workdir / "k_im.csv").exists()


def test_sparse_dominate(capsys, files, workdir):
    _, systems = files
    code, rep = call(capsys, "sparse", "dominate", systems, "--m", 2,
                     "--out", workdir / "dom.json")
    assert code == 0 and np.isfinite(rep["C_star"])
    assert json.loads((workdir / "dom.json").read_text())["C_star"] == rep["C_star"]


def test_run_and_errors(capsys, workdir):
    cfg = workdir / "cfg.json"
    cfg.write_text(json.dumps({"experiments": [
        {"kind": "nondegeneracy", "name": "nd", "n": 64}]}))
    code, rep = call(capsys, "run", cfg, "--out", workdir / "rep")
    assert code == 0 and rep["passed"]
    assert (workdir / "rep" / "report.json").exists()
    cfg.write_text('{"experiments": [}')
    assert main(["run", str(cfg)]) == 2
    assert "cfg.json:1:" in capsys.readouterr().err
    assert main(["bmo", "norm", str(workdir / "missing.json"), "--b", "step:0"]) == 2
    assert main(["gen", "--n", "8", "--out", str(workdir / "x.npz")]) == 2
    assert not (workdir / "x.npz").exists()


@pytest.mark.skipif(shutil.which("shtk") is None, reason="entry point not installed")
def test_console_script():
    res = subprocess.run(["shtk", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
