import json
import math

import numpy as np
import pytest

from qstail import chernoff, cli, simulator


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def _body(path):
    return "".join(line for line in open(path) if not line.startswith("# manifest"))


def test_mesh_bound_coarse(capsys, tmp_path):
    code, out, _ = run(capsys, "mesh-bound", "--A", "10", "--N", "100", "--M", "100",
                       "--iterations", "50", "--out", str(tmp_path / "L.csv"),
                       "--trace", str(tmp_path / "t.csv"), "--profiles", str(tmp_path / "p.csv"))
    assert code == 0
    assert out.strip() == "U_50 = 4.33749"
    assert (tmp_path / "t.csv").read_text().startswith("m,U_m\n1,")
    assert (tmp_path / "p.csv").read_text().startswith("x,L_0,L_1,L_5,L_50\n")


def test_mesh_bound_bad_A(capsys):
    code, _, err = run(capsys, "mesh-bound", "--A", "2")
    assert code == 2 and "A must exceed 2" in err


def test_usage_errors(capsys):
    assert run(capsys, "mesh-bound", "--N", "abc")[0] == 2
    assert run(capsys, "nonsense")[0] == 2
    assert run(capsys, "simulate", "--kind", "tn")[0] == 2
    assert run(capsys, "tail-table", "--t-min", "1.5")[0] == 2
    assert run(capsys, "mesh-bound", "--threads", "0")[0] == 2


def test_mesh_bound_inconsistency_exit(capsys, monkeypatch):
    monkeypatch.setattr(cli.mesh.kernels, "mesh_q",
                        lambda xs, us, du, v, a, b, t=1: np.linspace(1.0, 0.0, v.size))
    assert run(capsys, "mesh-bound", "--N", "10", "--M", "10", "--iterations", "2")[0] == 3


def test_tail_table(capsys, tmp_path):
    path = tmp_path / "tail.csv"
    code, _, _ = run(capsys, "tail-table", "--t-min", "10", "--t-max", "100", "--t-step", "90", "--out", str(path))
    assert code == 0
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(cli.TAIL_COLUMNS)
    t10 = lines[1].split(",")
    t100 = lines[2].split(",")
    assert float(t10[1]) == pytest.approx(6.09438, abs=1e-5)
    assert float(t100[3]) == pytest.approx(543.92, abs=0.01)
    assert abs(int(t100[5]) - 122) <= 5
    for row in (t10, t100):
        assert float(row[1]) <= float(row[2])


def test_tail_table_below_level_window(capsys):
    code, out, _ = run(capsys, "tail-table", "--t-min", "3", "--t-max", "8", "--t-step", "5")
    assert code == 0
    rows = [line.split(",") for line in out.splitlines()[1:3]]
    assert rows[0][2] == "" and rows[1][2] != ""
    assert float(rows[0][4]) == 1.0


def test_simulate_truncs_m0(capsys, tmp_path):
    path = tmp_path / "s.csv"
    code, out, _ = run(capsys, "simulate", "--kind", "truncs", "--m", "0", "--replicates", "10",
                       "--seed", "1", "--out", str(path))
    assert code == 0
    summary = json.loads(out)
    assert summary["count"] == 10 and summary["mean"] == 1.0 and summary["seed"] == 1
    assert np.all(simulator.read_samples_csv(path) == 1.0)


def test_simulate_truncs_m1_mean(capsys):
    code, out, _ = run(capsys, "simulate", "--kind", "truncs", "--m", "1", "--replicates", "1000000", "--seed", "1")
    assert code == 0 and abs(json.loads(out)["mean"] - 1.75) <= 0.001


def test_simulate_resource_cap(capsys):
    code, _, err = run(capsys, "simulate", "--kind", "tn", "--n", "10", "--replicates", "1000",
                       "--memory-cap", "100")
    assert code == 4 and "resource" in err


def test_simulate_binary_and_summary(capsys, tmp_path):
    code, _, _ = run(capsys, "simulate", "--kind", "tn", "--n", "500", "--replicates", "20", "--seed", "3",
                     "--binary-out", str(tmp_path / "s.bin"), "--summary", str(tmp_path / "s.json"))
    assert code == 0
    x = simulator.read_samples_binary(tmp_path / "s.bin")
    summary = json.loads((tmp_path / "s.json").read_text())
    assert x.size == 20 and summary["mean"] == pytest.approx(x.mean())
    assert summary["manifest"]["parameters"]["n"] == 500


def test_manifest_rerun_is_byte_identical(capsys, tmp_path):
    first = tmp_path / "a.csv"
    run(capsys, "simulate", "--kind", "tn", "--n", "2000", "--replicates", "50", "--seed", "12", "--out", str(first))
    manifest = json.loads([l for l in open(first) if l.startswith("# manifest ")][0][len("# manifest "):])
    manifest["parameters"]["out"] = str(tmp_path / "b.csv")
    (tmp_path / "m.json").write_text(json.dumps(manifest))
    assert run(capsys, "simulate", "--config", str(tmp_path / "m.json"))[0] == 0
    assert _body(first) == _body(tmp_path / "b.csv")
    # the report itself also works as a config
    assert run(capsys, "simulate", "--config", str(first), "--out", str(tmp_path / "c.csv"))[0] == 0
    assert _body(first) == _body(tmp_path / "c.csv")


def test_mesh_manifest_rerun(capsys, tmp_path):
    run(capsys, "mesh-bound", "--N", "30", "--M", "20", "--iterations", "5", "--trace", str(tmp_path / "t.csv"))
    run(capsys, "mesh-bound", "--config", str(tmp_path / "t.csv"), "--trace", str(tmp_path / "u.csv"))
    assert _body(tmp_path / "t.csv") == _body(tmp_path / "u.csv")


def test_flags_override_config(capsys, tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"N": 20, "M": 20, "iterations": 3}))
    code, out, _ = run(capsys, "mesh-bound", "--config", str(tmp_path / "c.json"), "--iterations", "4")
    assert code == 0 and out.startswith("U_4 = ")
    (tmp_path / "bad.json").write_text(json.dumps({"bogus": 1}))
    assert run(capsys, "mesh-bound", "--config", str(tmp_path / "bad.json"))[0] == 2


def test_level_bound(capsys):
    code, out, _ = run(capsys, "level-bound", "--t", "100", "--j", "121")
    data = json.loads(out)
    assert code == 0
    assert data["level"]["a"] == pytest.approx(0.198851, abs=1e-6)
    assert data["bound"]["rate_lower"] <= data["bound"]["rate_upper_numeric"]
    assert run(capsys, "level-bound", "--t", "5")[0] == 2


def test_threads_env(capsys, monkeypatch):
    monkeypatch.setenv("QST_THREADS", "3")
    code, out, _ = run(capsys, "mesh-bound", "--N", "30", "--M", "30", "--iterations", "3")
    monkeypatch.setenv("QST_THREADS", "1")
    code1, out1, _ = run(capsys, "mesh-bound", "--N", "30", "--M", "30", "--iterations", "3")
    assert code == code1 == 0 and out == out1


def test_verify_quick_passes(capsys):
    code, out, _ = run(capsys, "verify", "--level", "quick", "--seed", "3")
    assert code == 0
    assert out.count("PASS") == 12 and "FAIL" not in out


def test_verify_detects_sign_flip(capsys, monkeypatch):
    real = chernoff.g_theta
    monkeypatch.setattr(chernoff, "g_theta", lambda theta, x: -real(theta, x))
    code, out, _ = run(capsys, "verify", "--level", "quick", "--seed", "3")
    assert code == 1
    assert "FAIL barrier_identity" in out


def test_verify_detects_broken_quadrature(capsys, monkeypatch):
    from qstail import mesh
    real = mesh.apply_q
    monkeypatch.setattr(mesh, "apply_q", lambda L, u, x: real(L, u, x) + 1e-3)
    code, out, _ = run(capsys, "verify", "--level", "quick", "--seed", "3")
    assert code == 1 and "FAIL mesh_conservative" in out
