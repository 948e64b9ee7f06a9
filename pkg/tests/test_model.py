import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regforge import numerics as nm
from regforge.errors import DimensionMismatch, InvariantViolation, ParseError
from regforge.model import (AssumptionReport, Exosystem, Plant, check_assumptions,
                            dumps_problem, load_problem, problem_from_dict, save_problem)

from .conftest import FURUTA, NOISE2, SCALAR, fixture_doc


def test_furuta_dimensions(furuta):
    pl = furuta.plant
    assert (pl.n, pl.m, pl.p, pl.q) == (4, 1, 1, 2)
    assert furuta.reference.k == 2
    assert furuta.design.mode == "three-loop"
    assert furuta.design.gamma == 0.34


def test_furuta_matrices_as_printed(furuta):
    pl = furuta.plant
    np.testing.assert_array_equal(pl.D0, [[0, 0, 1e-4, 0]])
    np.testing.assert_array_equal(pl.D1, pl.D0)
    np.testing.assert_array_equal(pl.C, [[1, 0, 0, 0]])
    np.testing.assert_array_equal(pl.Dz, [[0.001]])


def test_missing_B_is_dimension_mismatch():
    doc = fixture_doc(SCALAR)
    del doc["plant"]["B"]
    with pytest.raises(DimensionMismatch):
        problem_from_dict(doc)


def test_zero_Dz_is_invariant_violation():
    doc = fixture_doc(SCALAR)
    doc["design"]["Dz"] = [[0.0]]
    with pytest.raises(InvariantViolation):
        problem_from_dict(doc)


def test_default_Dz():
    pl = Plant([[-1.0]], [[1.0]], [[1.0]])
    np.testing.assert_array_equal(pl.Dz, [[1e-3]])
    assert pl.m0 == pl.m1 == pl.m2 == pl.q == 0


def test_malformed_json_reports_line(tmp_path):
    f = tmp_path / "bad.json"
    f.write_text('{\n  "plant": {\n    "A": [[1]],,\n')
    with pytest.raises(ParseError) as exc:
        load_problem(f)
    assert exc.value.line == 3


def test_missing_file_is_parse_error(tmp_path):
    with pytest.raises(ParseError):
        load_problem(tmp_path / "absent.json")


@pytest.mark.parametrize("mutate, err", [
    (lambda d: d["plant"].update(C=[[1.0, 2.0]]), DimensionMismatch),
    (lambda d: d["plant"].update(A=[[1.0, 0.0]]), DimensionMismatch),
    (lambda d: d["plant"].update(A=[[float("nan")]]), ParseError),
    (lambda d: d.update(extra=1), ParseError),
    (lambda d: d["design"].update(mode="bogus"), ParseError),
    (lambda d: d["design"].update(gamma=-1), ParseError),
    (lambda d: d["reference"].update(C=[[1.0, 0.0], [0.0, 1.0]]), DimensionMismatch),
])
def test_schema_violations(mutate, err):
    doc = fixture_doc(SCALAR)
    mutate(doc)
    with pytest.raises(err):
        problem_from_dict(doc)


@pytest.mark.parametrize("path", [FURUTA, SCALAR, NOISE2])
def test_round_trip_is_bit_identical(path, tmp_path):
    pr = load_problem(path)
    out = tmp_path / "rt.json"
    save_problem(pr, out)
    pr2 = load_problem(out)
    for key in ("A", "B", "C", "B0", "B1", "B2", "D0", "D1", "D2", "Cp", "Dp0", "Dp1", "Dp2", "Dz"):
        assert np.array_equal(getattr(pr.plant, key), getattr(pr2.plant, key)), key
    assert np.array_equal(pr.reference.A, pr2.reference.A)
    assert np.array_equal(pr.reference.x0, pr2.reference.x0)
    assert dumps_problem(pr) == dumps_problem(pr2)


@settings(max_examples=30)
@given(vals=st.lists(st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False),
                     min_size=4, max_size=4))
def test_round_trip_arbitrary_entries(vals):
    doc = fixture_doc(SCALAR)
    doc["plant"]["A"] = [[vals[0]]]
    doc["plant"]["B"] = [[vals[1] or 1.0]]
    doc["reference"]["x0"] = vals[2:]
    pr = problem_from_dict(doc)
    pr2 = problem_from_dict(json.loads(dumps_problem(pr)))
    assert np.array_equal(pr.plant.A, pr2.plant.A)
    assert np.array_equal(pr.plant.B, pr2.plant.B)
    assert np.array_equal(pr.reference.x0, pr2.reference.x0)


# ---------------------------------------------------------------- assumptions

def test_furuta_assumptions_pass(furuta):
    rep = check_assumptions(furuta.plant, furuta.reference, furuta.disturbance, "three-loop")
    assert rep.ok, [e.to_dict() for e in rep.failures]
    ids = [e.id for e in rep.entries]
    assert ids == ["A1'", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9"]


def test_noise2_assumptions_pass(noise2):
    rep = check_assumptions(noise2.plant, noise2.reference, None, "full-detect")
    assert rep.ok, [e.to_dict() for e in rep.failures]


def test_zero_output_fails_A1():
    pl = Plant([[1.0]], [[1.0]], [[0.0]])
    ref = Exosystem([[0.0]], [[1.0]])
    rep = check_assumptions(pl, ref)
    assert rep["A1"].status == "fail"


def test_stable_reference_fails_A8():
    pl = Plant([[-1.0]], [[1.0]], [[1.0]])
    rep = check_assumptions(pl, Exosystem([[-1.0]], [[1.0]]))
    assert rep["A8"].status == "fail"
    assert rep["A8"].witness == pytest.approx(-1.0)
    assert not rep.ok


def test_three_loop_without_cp_fails():
    pl = Plant([[-1.0]], [[1.0]], [[1.0]])
    rep = check_assumptions(pl, Exosystem([[0.0]], [[1.0]]), mode="three-loop")
    assert rep["A1'"].status == "fail"


def test_A9_fails_on_transmission_zero():
    # G(s) = s/((s+1)(s+2)) blocks constants, so a constant reference is untrackable
    pl = Plant([[0.0, 1.0], [-2.0, -3.0]], [[0.0], [1.0]], [[0.0, 1.0]])
    rep = check_assumptions(pl, Exosystem([[0.0]], [[1.0]]))
    assert rep["A9"].status == "fail"
    assert rep["A9"].witness == 0


def test_assumptions_are_deterministic(furuta):
    a = check_assumptions(furuta.plant, furuta.reference, furuta.disturbance, "three-loop")
    b = check_assumptions(furuta.plant, furuta.reference, furuta.disturbance, "three-loop")
    assert isinstance(a, AssumptionReport)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)


def test_A9_equals_pencil_rank_at_exo_eigenvalues(furuta):
    pl = furuta.plant
    D = np.zeros((pl.p, pl.m))
    expect = all(nm.pencil_rank(pl.A, pl.B, pl.C, D, lam) == pl.n + pl.p
                 for ex in (furuta.reference, furuta.disturbance)
                 for lam in np.linalg.eigvals(ex.A))
    rep = check_assumptions(pl, furuta.reference, furuta.disturbance, "three-loop")
    assert (rep["A9"].status == "pass") == expect


@settings(max_examples=30)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 4))
def test_A9_matches_pencil_rank_random(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, 1))
    C = rng.standard_normal((1, n))
    w = float(rng.uniform(0.1, 3.0))
    ref = Exosystem([[0.0, w], [-w, 0.0]], [[1.0, 0.0]])
    rep = check_assumptions(Plant(A, B, C), ref)
    expect = all(nm.pencil_rank(A, B, C, np.zeros((1, 1)), lam) == n + 1
                 for lam in np.linalg.eigvals(ref.A))
    assert (rep["A9"].status == "pass") == expect
