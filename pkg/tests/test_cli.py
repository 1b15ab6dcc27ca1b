import json
import math
import subprocess
import sys

import pytest

from sphere_energy.cli import dumps, main, theoretical_max
from sphere_energy.specs import SpecError, compact_to_json, parse_kernel


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    return code, (json.loads(out) if out.strip() else None), err


def test_energy_discrete_exact(capsys):
    code, doc, _ = run_json(capsys, "energy", "--kernel", "A2:k=3", "--measure", "simplex:2")
    assert code == 0 and doc["exact"]
    assert doc["value"] == pytest.approx(0.375, abs=1e-15)
    assert doc["closed_form"]["value"] == pytest.approx(0.375)
    man = doc["manifest"]
    assert man["command"] == "energy" and man["exit_code"] == 0 and man["backend"] in ("numba", "numpy")


def test_energy_mc_with_closed_form(capsys):
    code, doc, _ = run_json(capsys, "energy", "--kernel", "V2:k=3", "--measure", "sigma:3", "--mc", "3e4")
    assert code == 0 and not doc["exact"]
    assert doc["closed_form"]["value"] == pytest.approx(2 / 9)
    assert abs(doc["z_score"]) < 5


def test_energy_too_few_samples_is_usage_error(capsys):
    code, _, err = run(capsys, "energy", "--kernel", "frame", "--measure", "sigma:3", "--mc", "10")
    assert code == 2 and "mc_samples" in err


def test_bad_kernel_is_usage_error(capsys):
    code, _, err = run(capsys, "energy", "--kernel", "Z9:k=3", "--measure", "sigma:3")
    assert code == 2 and "kind" in err


def test_verify_identity(capsys):
    code, doc, _ = run_json(capsys, "verify", "--identity", "heron", "--d", "3", "--trials", "500")
    assert code == 0 and doc["pass"] and doc["max_residual"] <= 1e-12
    code, doc, _ = run_json(capsys, "verify", "--identity", "heron", "--d", "3", "--trials", "50", "--tol", "-1")
    assert code == 1 and not doc["pass"]
    assert run(capsys, "verify", "--identity", "nope")[0] == 2
    assert run(capsys, "verify-identity", "--name", "v2_decomposition", "--d", "2")[0] == 2


def test_psd_check(capsys):
    code, doc, _ = run_json(capsys, "psd-check", "--kernel", "Q:k=3,l=2", "--d", "4", "--points", "20",
                            "--tails", "3")
    assert code == 0 and doc["consistent"]
    code, doc, _ = run_json(capsys, "verify", "--psd", "--kernel=-A2:k=3", "--d", "3", "--points", "20",
                            "--tails", "3")
    assert code == 1 and doc["min_normalized_eig"] < -1e-6


def test_optimize_small(capsys):
    code, doc, _ = run_json(capsys, "optimize", "--kernel", "A2:k=3", "--N", "3", "--d", "2", "--restarts", "3")
    assert code == 0
    assert doc["theoretical_max"] == pytest.approx(0.375)
    assert abs(doc["gap"]) < 1e-5 and doc["certificate"]


def test_optimize_failing_gap_exits_1(capsys):
    code, doc, _ = run_json(capsys, "optimize", "--kernel", "A2:k=3", "--N", "3", "--d", "2", "--restarts", "1",
                            "--max-iters", "1")
    assert code == 1 and doc["gap"] > 1e-5


def test_optimize_face_functional(capsys):
    code, doc, _ = run_json(capsys, "optimize", "--face-functional", "j=1", "s=1", "d=2", "--restarts", "2")
    assert code == 0 and doc["best_energy"] == pytest.approx(3 * math.sqrt(3), rel=1e-7)
    assert run(capsys, "optimize", "--face-functional", "q=1")[0] == 2
    assert run(capsys, "optimize")[0] == 2


def test_optimize_phase_csv(capsys):
    code, out, _ = run(capsys, "--format", "csv", "optimize", "--phase", "A", "--s", "3", "--mc", "2e4")
    assert code == 0
    lines = out.strip().splitlines()
    assert "measure" in lines[0] and len(lines) == 6


def test_gegenbauer_commands(capsys):
    code, doc, _ = run_json(capsys, "gegenbauer", "sign-test", "--kind", "V", "--s", "1")
    assert code == 0 and doc["all_nonpositive"]
    code, doc, _ = run_json(capsys, "gegenbauer", "expand", "--kind", "A", "--s", "1", "--d", "3", "--M", "8")
    assert code == 0 and doc["pd_mod_constant"] and doc["converged"]
    assert run(capsys, "gegenbauer", "sign-test", "--kind", "B")[0] == 2


def test_out_and_report(capsys, tmp_path):
    a = tmp_path / "runs" / "a.json"
    assert run(capsys, "--out", str(a), "energy", "--kernel", "frame", "--measure", "onb:3")[0] == 0
    b = tmp_path / "runs" / "b.json"
    b.write_text(a.read_text())
    table = tmp_path / "t.csv"
    code, doc, _ = run_json(capsys, "report", str(tmp_path / "runs"), "--table", str(table))
    assert code == 0 and doc["n_files"] == 2 and doc["n_unique"] == 1
    assert table.read_text().startswith("file,command")
    code, doc, _ = run_json(capsys, "report")
    assert doc["n_unique"] == 0 and doc["table_csv"].startswith("file,")
    assert run(capsys, "report", str(tmp_path / "missing.json"))[0] == 2


def test_seed_env_override(capsys, monkeypatch):
    monkeypatch.setenv("SPHERE_ENERGY_SEED", "11")
    code, doc, _ = run_json(capsys, "--seed", "3", "energy", "--kernel", "frame", "--measure", "onb:2")
    assert doc["manifest"]["seed"] == 11


def test_dumps_precision_and_nonfinite():
    text = dumps({"a": 0.1, "b": float("nan"), "c": [1, True]})
    doc = json.loads(text)
    assert doc["a"] == 0.1 and doc["b"] is None and doc["c"] == [1, True]
    assert "0.10000000000000001" in text


def test_specs_grammar():
    assert compact_to_json("A1.5:k=3") == {"kind": "A", "k": 3, "s": 1.5}
    assert compact_to_json("sym(-V2:k=3)") == {"symmetrize": {"scale": -1.0, "of": {"kind": "V", "k": 3, "s": 2.0}}}
    K = parse_kernel('{"sum": [{"kind": "frame"}, {"kind": "const", "k": 2, "c": 1}]}', 3)
    assert K.arity == 2
    K = parse_kernel({"lift": {"n": 4, "of": {"kind": "Q", "k": 3, "l": 1}}}, 3)
    assert K.arity == 4
    with pytest.raises(SpecError) as exc:
        parse_kernel("A2", 3)
    assert exc.value.field == "k"
    with pytest.raises(SpecError):
        parse_kernel("A2:k=3")
    with pytest.raises(SpecError):
        parse_kernel("{bad json", 3)


def test_theoretical_max():
    assert theoretical_max({"kind": "A", "k": 3, "s": 2.0}, 3, 2) == (pytest.approx(0.375), True)
    tm, attained = theoretical_max({"kind": "V", "k": 3, "s": 1.0}, 4, 3)
    assert tm == pytest.approx(math.sqrt(3) / 6) and attained
    assert theoretical_max({"kind": "frame"}, 3, 3) is None


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "sphere_energy", "gegenbauer", "sign-test", "--s", "0.5"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["all_nonpositive"]
