import json

import numpy as np
import pytest

from regforge import cli

from .conftest import FURUTA, NOISE2, SCALAR, fixture_doc


def _run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _write(tmp_path, doc, name="problem.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def test_check_furuta_ok(capsys):
    code, out, _ = _run(capsys, "check", "--problem", FURUTA)
    assert code == cli.EXIT_OK
    assert json.loads(out)["ok"] is True


def test_check_stable_exosystem_fails_with_witness(capsys, tmp_path):
    doc = fixture_doc(SCALAR)
    doc["reference"] = {"A": [[-1.0]], "C": [[1.0]], "x0": [1.0]}
    code, out, err = _run(capsys, "check", "--problem", _write(tmp_path, doc))
    assert code == cli.EXIT_DOMAIN
    rep = json.loads(out)
    failed = [e for e in rep["assumptions"] if e["status"] == "fail"]
    assert [e["id"] for e in failed] == ["A8"]
    assert failed[0]["witness"] == {"re": -1.0, "im": 0.0}
    assert "A8" in err


def test_missing_file_is_usage_error(capsys, tmp_path):
    code, _, err = _run(capsys, "check", "--problem", tmp_path / "nope.json")
    assert code == cli.EXIT_USAGE
    assert err.startswith("regforge:")


def test_malformed_problem_is_usage_error(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert _run(capsys, "design", "--problem", path)[0] == cli.EXIT_USAGE


def test_bad_seed_environment(capsys, monkeypatch):
    monkeypatch.setenv("REGFORGE_SEED", "abc")
    assert _run(capsys, "check", "--problem", FURUTA)[0] == cli.EXIT_USAGE


def test_thm1_report_gain_names(capsys):
    code, out, _ = _run(capsys, "design", "--problem", SCALAR)
    assert code == 0
    assert set(json.loads(out)["gains"]) == {"Kt", "Kr", "Lt", "Lr"}


def test_auto_gamma_reaches_published_level(capsys):
    code, out, _ = _run(capsys, "design", "--problem", FURUTA, "--gamma", "auto")
    assert code == 0
    rep = json.loads(out)
    assert rep["hinf"]["gamma_star"] is not None
    assert rep["gamma"] <= 0.34


def test_infeasible_gamma_exits_one(capsys):
    code, _, err = _run(capsys, "design", "--problem", FURUTA, "--gamma", "1e-6")
    assert code == cli.EXIT_DOMAIN
    assert "gamma" in err.lower()


def test_report_is_self_certifying(capsys):
    _, out, _ = _run(capsys, "design", "--problem", FURUTA)
    rep = json.loads(out)
    plant = fixture_doc(FURUTA)["plant"]
    A, B = np.array(plant["A"]), np.array(plant["B"])
    Kp = np.array(rep["gains"]["Kp"])
    abscissa = np.max(np.linalg.eigvals(A + B @ Kp).real)
    assert abscissa == pytest.approx(rep["loops"]["A+BKp"]["abscissa"], abs=1e-8)
    Af = np.array(rep["hinf"]["compensator"]["A"])
    assert np.max(np.linalg.eigvals(Af).real) == pytest.approx(
        rep["hinf"]["certificates"]["compensator_abscissa"], abs=1e-8)


def test_sweep_single_threshold(capsys):
    code, out, _ = _run(capsys, "sweep", "--problem", FURUTA, "--horizon", "10")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "gamma,feasible,swept_norm,ratio"
    rows = [ln.split(",") for ln in lines[1:]]
    flags = [r[1] == "1" for r in rows]
    first = flags.index(True)
    assert not any(flags[:first]) and all(flags[first:])
    for r in rows[first:]:
        assert float(r[3]) < float(r[0])


def test_sweep_empty_grid(capsys):
    assert _run(capsys, "sweep", "--problem", FURUTA, "--grid", "")[0] == cli.EXIT_USAGE


def test_sweep_single_point(capsys):
    code, out, _ = _run(capsys, "sweep", "--problem", FURUTA, "--grid", "0.34", "--horizon", "5")
    assert code == 0
    assert len(out.strip().splitlines()) == 2


def test_verify_scalar(capsys):
    code, out, _ = _run(capsys, "verify", "--problem", SCALAR, "--scenario", "nominal")
    assert code == 0
    assert json.loads(out)["ok"] is True


def test_verify_noise_fixture(capsys):
    code, out, _ = _run(capsys, "verify", "--problem", NOISE2, "--horizon", "200")
    assert code == 0, out


def _tree(root):
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


def test_simulate_reruns_are_byte_identical(capsys, tmp_path):
    argv = ["simulate", "--problem", FURUTA, "--horizon", "3", "--seeds", "2",
            "--scenario", "nominal,noise,all"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(capsys, *argv, "--out", a)[0] == 0
    assert _run(capsys, *argv, "--out", b)[0] == 0
    ta, tb = _tree(a), _tree(b)
    assert ta == tb
    assert {"trace_nominal.csv", "trace_noise_seed0.csv", "trace_noise_seed1.csv",
            "simulation.json"} <= set(ta)


def test_seed_environment_changes_noise(capsys, tmp_path, monkeypatch):
    argv = ["simulate", "--problem", FURUTA, "--horizon", "1", "--scenario", "noise"]
    _run(capsys, *argv, "--out", tmp_path / "a")
    monkeypatch.setenv("REGFORGE_SEED", "7")
    _run(capsys, *argv, "--out", tmp_path / "b")
    ta, tb = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert "trace_noise_seed0.csv" in ta and "trace_noise_seed7.csv" in tb
    assert ta["trace_noise_seed0.csv"] != tb["trace_noise_seed7.csv"]


def test_unknown_scenario_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "--problem", str(FURUTA), "--scenario", "bogus"])
    assert exc.value.code == cli.EXIT_USAGE
