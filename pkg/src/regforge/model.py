"""Plants, exosystems, problem files and standing-assumption checks.

A problem file is a single JSON document::

    {
      "plant":       {"A": [[...]], "B": [[...]], "C": [[...]], ...},
      "reference":   {"A": [[...]], "C": [[...]], "x0": [...]},
      "disturbance": {"A": [[...]], "C": [[...]], "x0": [...]},   # optional
      "design":      {"mode": "three-loop", "gamma": 0.34 | "auto",
                      "Dz": [[...]], "lqr_weights": {...},
                      "kalman_overrides": {...}},                 # optional
      "profiles":    {"w1": {"kind": "sinusoid", ...}},           # optional
      "notes":       "free text"                                  # optional
    }

Plant keys are ``A B C`` (required) and ``B0 B1 B2 D0 D1 D2 Cp Dp0 Dp1
Dp2`` (optional). Absent channels become zero-width matrices.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import numerics as nm
from .errors import DimensionMismatch, InvariantViolation, ParseError
from .profiles import DisturbanceProfile

MODES = ("thm1", "kalman", "modeled", "three-loop")
DEFAULT_DZ_SCALE = 1e-3

PLANT_KEYS = ("A", "B", "B0", "B1", "B2", "C", "D0", "D1", "D2", "Cp", "Dp0", "Dp1", "Dp2")
EXO_KEYS = ("A", "C", "x0")
DESIGN_KEYS = ("mode", "gamma", "Dz", "lqr_weights", "kalman_overrides")
TOP_KEYS = ("plant", "reference", "disturbance", "design", "profiles", "notes")
LQR_KEYS = ("Q", "R", "shift", "observer_Q", "observer_R", "observer_shift",
            "exo_Q", "exo_R", "exo_shift", "dist_Q", "dist_R", "dist_shift",
            "feedback_region", "exo_region")
KALMAN_KEYS = ("B0", "D0", "Dp0")


@dataclass(frozen=True)
class Plant:
    """Linear plant with noise (0), unmodeled (1) and modeled (2) channels.

    ``x' = A x + B0 w0 + B1 w1 + B2 w2 + B u``
    ``y  = C x + D0 w0 + D1 w1 + D2 w2``
    ``yp = Cp x + Dp0 w0 + Dp1 w1 + Dp2 w2``  (``q = 0`` when absent)
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    B0: np.ndarray = None
    B1: np.ndarray = None
    B2: np.ndarray = None
    D0: np.ndarray = None
    D1: np.ndarray = None
    D2: np.ndarray = None
    Cp: np.ndarray = None
    Dp0: np.ndarray = None
    Dp1: np.ndarray = None
    Dp2: np.ndarray = None
    Dz: np.ndarray = None

    def __post_init__(self):
        A = _mat(self.A, "A")
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch("A must be square", field="plant.A")
        n = A.shape[0]
        B = _mat(self.B, "B", (n, None))
        C = _mat(self.C, "C", (None, n))
        m, p = B.shape[1], C.shape[0]
        get = lambda key, shape: _opt(getattr(self, key), key, shape)
        B0, B1, B2 = (get(k, (n, None)) for k in ("B0", "B1", "B2"))
        m0, m1, m2 = B0.shape[1], B1.shape[1], B2.shape[1]
        D0, D1, D2 = get("D0", (p, m0)), get("D1", (p, m1)), get("D2", (p, m2))
        Cp = get("Cp", (None, n))
        q = Cp.shape[0]
        Dp0, Dp1, Dp2 = get("Dp0", (q, m0)), get("Dp1", (q, m1)), get("Dp2", (q, m2))
        if self.Dz is None:
            Dz = DEFAULT_DZ_SCALE * np.eye(p, m)
        else:
            Dz = _mat(self.Dz, "Dz", (p, m))
        if nm.numerical_rank(Dz) != m:
            raise InvariantViolation(f"rank(Dz) must equal m={m}", field="design.Dz")
        for k, v in dict(A=A, B=B, C=C, B0=B0, B1=B1, B2=B2, D0=D0, D1=D1, D2=D2,
                         Cp=Cp, Dp0=Dp0, Dp1=Dp1, Dp2=Dp2, Dz=Dz).items():
            v.setflags(write=False)
            object.__setattr__(self, k, v)

    n = property(lambda self: self.A.shape[0])
    m = property(lambda self: self.B.shape[1])
    p = property(lambda self: self.C.shape[0])
    q = property(lambda self: self.Cp.shape[0])
    m0 = property(lambda self: self.B0.shape[1])
    m1 = property(lambda self: self.B1.shape[1])
    m2 = property(lambda self: self.B2.shape[1])

    @property
    def has_stabilization_output(self):
        return self.q > 0

    def measurement(self, use_cp):
        """``(C, D0, D1, D2)`` for either the tracked or the stabilization output."""
        if use_cp:
            return self.Cp, self.Dp0, self.Dp1, self.Dp2
        return self.C, self.D0, self.D1, self.D2

    def to_dict(self):
        out = {}
        for k in PLANT_KEYS:
            v = getattr(self, k)
            if k in ("A", "B", "C") or v.size:
                out[k] = v.tolist()
        return out


@dataclass(frozen=True)
class Exosystem:
    """Autonomous generator ``x' = A x``, output ``C x``, ``x(0) = x0``."""

    A: np.ndarray
    C: np.ndarray
    x0: np.ndarray = None

    def __post_init__(self):
        A = _mat(self.A, "A")
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch("exosystem A must be square", field="A")
        k = A.shape[0]
        C = _mat(self.C, "C", (None, k))
        if self.x0 is None:
            x0 = np.zeros(k)
        else:
            x0 = np.asarray(self.x0, dtype=float).reshape(-1)
            if x0.size != k or not np.all(np.isfinite(x0)):
                raise DimensionMismatch(f"x0 must have {k} finite entries", field="x0")
        for key, v in dict(A=A, C=C, x0=x0).items():
            v.setflags(write=False)
            object.__setattr__(self, key, v)

    k = property(lambda self: self.A.shape[0])
    r = property(lambda self: self.C.shape[0])

    def to_dict(self):
        return {"A": self.A.tolist(), "C": self.C.tolist(), "x0": self.x0.tolist()}


@dataclass(frozen=True)
class DesignParams:
    mode: str = "three-loop"
    gamma: object = "auto"
    lqr_weights: dict = field(default_factory=dict)
    kalman_overrides: dict = field(default_factory=dict)
    Dz: object = None

    def to_dict(self):
        out = {"mode": self.mode, "gamma": self.gamma}
        if self.Dz is not None:
            out["Dz"] = np.asarray(self.Dz).tolist()
        if self.lqr_weights:
            out["lqr_weights"] = _jsonable(self.lqr_weights)
        if self.kalman_overrides:
            out["kalman_overrides"] = _jsonable(self.kalman_overrides)
        return out


@dataclass(frozen=True)
class Problem:
    plant: Plant
    reference: Exosystem
    disturbance: Exosystem = None
    design: DesignParams = field(default_factory=DesignParams)
    profiles: dict = field(default_factory=dict)
    notes: str = ""

    def with_mode(self, mode):
        return replace(self, design=replace(self.design, mode=mode))

    def with_gamma(self, gamma):
        return replace(self, design=replace(self.design, gamma=gamma))

    def to_dict(self):
        out = {"plant": self.plant.to_dict(), "reference": self.reference.to_dict()}
        if self.disturbance is not None:
            out["disturbance"] = self.disturbance.to_dict()
        out["design"] = self.design.to_dict()
        if self.profiles:
            out["profiles"] = {k: v.to_dict() for k, v in self.profiles.items()}
        if self.notes:
            out["notes"] = self.notes
        return out


def _mat(value, name, shape=None):
    if value is None:
        raise DimensionMismatch(f"{name} is required", field=name)
    try:
        m = nm.as_matrix(value, name)
    except ValueError as exc:
        raise ParseError(str(exc), field=name) from None
    if shape is not None:
        for want, got, what in zip(shape, m.shape, ("rows", "cols")):
            if want is not None and want != got:
                raise DimensionMismatch(
                    f"{name}: expected {want} {what}, got {got}", field=name)
    return m


def _opt(value, name, shape):
    if value is None or np.size(value) == 0:
        rows = shape[0] if shape[0] is not None else 0
        cols = shape[1] if shape[1] is not None else 0
        return np.zeros((rows, cols))
    return _mat(value, name, shape)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return np.asarray(obj, dtype=float).tolist()
    return obj


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ParseError("expected an object", field=where)
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ParseError(f"unknown keys {unknown}", field=where)


def _exo(d, where):
    _check_keys(d, EXO_KEYS, where)
    for k in ("A", "C"):
        if k not in d:
            raise DimensionMismatch(f"{k} is required", field=f"{where}.{k}")
    try:
        return Exosystem(d["A"], d["C"], d.get("x0"))
    except ParseError as exc:
        raise type(exc)(f"{where}: {exc}") from None


def problem_from_dict(doc):
    """Validate a decoded problem document and build a :class:`Problem`."""
    _check_keys(doc, TOP_KEYS, "<root>")
    for k in ("plant", "reference"):
        if k not in doc:
            raise ParseError("missing section", field=k)
    pd = doc["plant"]
    _check_keys(pd, PLANT_KEYS, "plant")
    for k in ("A", "B", "C"):
        if k not in pd:
            raise DimensionMismatch(f"{k} is required", field=f"plant.{k}")

    design = doc.get("design", {})
    _check_keys(design, DESIGN_KEYS, "design")
    mode = design.get("mode", "three-loop")
    if mode not in MODES:
        raise ParseError(f"mode must be one of {MODES}", field="design.mode")
    gamma = design.get("gamma", "auto")
    if not (gamma == "auto" or (isinstance(gamma, (int, float)) and not isinstance(gamma, bool)
                                 and np.isfinite(gamma) and gamma > 0)):
        raise ParseError("gamma must be a positive number or 'auto'", field="design.gamma")
    weights = design.get("lqr_weights", {})
    _check_keys(weights, LQR_KEYS, "design.lqr_weights")
    overrides = design.get("kalman_overrides", {})
    _check_keys(overrides, KALMAN_KEYS, "design.kalman_overrides")

    plant = Plant(**{k: pd.get(k) for k in PLANT_KEYS}, Dz=design.get("Dz"))
    reference = _exo(doc["reference"], "reference")
    if reference.r != plant.p:
        raise DimensionMismatch(
            f"reference output has {reference.r} rows, plant output has {plant.p}",
            field="reference.C")
    disturbance = None
    if doc.get("disturbance") is not None:
        disturbance = _exo(doc["disturbance"], "disturbance")
        if disturbance.r != plant.m2:
            raise DimensionMismatch(
                f"disturbance output has {disturbance.r} rows, B2 has {plant.m2} columns",
                field="disturbance.C")

    profiles = {}
    raw_profiles = doc.get("profiles", {})
    _check_keys(raw_profiles, ("w1",), "profiles")
    for ch, spec in raw_profiles.items():
        try:
            profiles[ch] = DisturbanceProfile.from_dict(spec, channel=ch)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad profile: {exc}", field=f"profiles.{ch}") from None

    notes = doc.get("notes", "")
    if not isinstance(notes, str):
        raise ParseError("notes must be a string", field="notes")

    params = DesignParams(mode=mode, gamma=gamma, lqr_weights=weights,
                          kalman_overrides=overrides, Dz=design.get("Dz"))
    return Problem(plant, reference, disturbance, params, profiles, notes)


def load_problem(path):
    """Read and validate a JSON problem file.

    Raises :class:`ParseError` (with line number for syntax errors),
    :class:`DimensionMismatch` or :class:`InvariantViolation`.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    return problem_from_dict(doc)


def dumps_problem(problem):
    return json.dumps(problem.to_dict(), indent=2)


def save_problem(problem, path):
    Path(path).write_text(dumps_problem(problem) + "\n")


# ---------------------------------------------------------------------------
# standing assumptions

@dataclass(frozen=True)
class AssumptionEntry:
    id: str
    status: str  # "pass" | "fail" | "n/a"
    witness: object = None
    detail: str = ""

    @property
    def passed(self):
        return self.status != "fail"

    def to_dict(self):
        w = self.witness
        if isinstance(w, complex):
            w = {"re": w.real, "im": w.imag}
        return {"id": self.id, "status": self.status, "witness": w, "detail": self.detail}


@dataclass(frozen=True)
class AssumptionReport:
    mode: str
    entries: tuple

    @property
    def ok(self):
        return all(e.passed for e in self.entries)

    def __getitem__(self, key):
        for e in self.entries:
            if e.id == key:
                return e
        raise KeyError(key)

    @property
    def failures(self):
        return [e for e in self.entries if e.status == "fail"]

    def to_dict(self):
        return {"mode": self.mode, "ok": self.ok,
                "assumptions": [e.to_dict() for e in self.entries]}


def rank_test_frequencies(plant, exos=()):
    """Finite frequency grid used for the frequency-dependent rank tests."""
    pts = [0.0]
    pts += list(np.abs(np.linalg.eigvals(plant.A).imag))
    for ex in exos:
        if ex is not None and ex.k:
            pts += list(np.abs(np.linalg.eigvals(ex.A).imag))
    pts += list(np.logspace(-2, 3, 50))
    return np.unique(np.round(pts, 12))


def _rank_over(freqs, A, B, C, D, want):
    for w in freqs:
        r = nm.pencil_rank(A, B, C, D, 1j * w, data_scaled=True)
        if r < want:
            return float(w), r
    return None, None


def check_assumptions(plant, ref, dist=None, mode="full-detect"):
    """Evaluate the standing assumptions; failures are reported, not raised.

    ``mode`` is ``"full-detect"`` (A1 with the tracked output ``C``) or
    ``"three-loop"`` (A1' with the stabilization output ``Cp``).
    """
    if mode not in ("full-detect", "three-loop"):
        raise ValueError(f"unknown assumption mode {mode!r}")
    A, B, C = plant.A, plant.B, plant.C
    n, m, p = plant.n, plant.m, plant.p
    freqs = rank_test_frequencies(plant, (ref, dist))
    entries = []

    stab, lam = nm.pbh_stabilizable(A, B)
    if mode == "three-loop":
        aid = "A1'"
        if plant.q == 0:
            entries.append(AssumptionEntry(aid, "fail", None, "no stabilization output Cp"))
        else:
            det, lam_d = nm.pbh_detectable(plant.Cp, A)
            entries.append(_a1(aid, stab, lam, det, lam_d, "Cp"))
    else:
        det, lam_d = nm.pbh_detectable(C, A)
        entries.append(_a1("A1", stab, lam, det, lam_d, "C"))

    if plant.m0 == 0:
        entries += [AssumptionEntry("A2", "n/a", None, "no noise channel"),
                    AssumptionEntry("A3", "n/a", None, "no noise channel")]
    else:
        w, r = _rank_over(freqs, A, plant.B0, C, plant.D0, n + p)
        entries.append(_rank_entry("A2", w, r, n + p, "row"))
        rk = nm.numerical_rank(plant.D0)
        entries.append(AssumptionEntry("A3", "pass" if rk == p else "fail",
                                       None if rk == p else rk, f"rank(D0) = {rk}"))

    if plant.m1 == 0:
        entries += [AssumptionEntry("A4", "n/a", None, "no unmodeled-disturbance channel"),
                    AssumptionEntry("A5", "n/a", None, "no unmodeled-disturbance channel")]
    else:
        w, r = _rank_over(freqs, A, plant.B1, C, plant.D1, n + p)
        entries.append(_rank_entry("A4", w, r, n + p, "row"))
        rk = nm.numerical_rank(plant.D1)
        entries.append(AssumptionEntry("A5", "pass" if rk == p else "fail",
                                       None if rk == p else rk, f"rank(D1) = {rk}"))

    w, r = _rank_over(freqs, A, B, C, np.zeros((p, m)), n + m)
    entries.append(_rank_entry("A6", w, r, n + m, "column"))

    exos = [("reference", ref)] + ([("disturbance", dist)] if dist is not None else [])
    bad = None
    for name, ex in exos:
        ok, lam_x = nm.pbh_detectable(ex.C, ex.A)
        if not ok:
            bad = (name, lam_x)
            break
    entries.append(AssumptionEntry("A7", "fail" if bad else "pass",
                                   bad[1] if bad else None,
                                   f"{bad[0]} exosystem undetectable" if bad else ""))

    bad = None
    for name, ex in exos:
        lam = np.linalg.eigvals(ex.A) if ex.k else np.zeros(0)
        neg = lam[lam.real < -nm.MARGINAL_TOL]
        if neg.size:
            bad = (name, complex(neg[0]))
            break
    entries.append(AssumptionEntry("A8", "fail" if bad else "pass",
                                   bad[1] if bad else None,
                                   f"{bad[0]} exosystem has a stable eigenvalue" if bad else ""))

    bad = None
    for name, ex in exos:
        for lam in (np.linalg.eigvals(ex.A) if ex.k else []):
            r = nm.pencil_rank(A, B, C, np.zeros((p, m)), lam)
            if r < n + p:
                bad = (name, complex(lam), r)
                break
        if bad:
            break
    entries.append(AssumptionEntry(
        "A9", "fail" if bad else "pass", bad[1] if bad else None,
        f"rank {bad[2]} < {n + p} at a {bad[0]} eigenvalue" if bad else ""))
    return AssumptionReport(mode, tuple(entries))


def _a1(aid, stab, lam, det, lam_d, cname):
    if not stab:
        return AssumptionEntry(aid, "fail", lam, "(A, B) not stabilizable")
    if not det:
        return AssumptionEntry(aid, "fail", lam_d, f"({cname}, A) not detectable")
    return AssumptionEntry(aid, "pass")


def _rank_entry(aid, w, r, want, kind):
    if w is None:
        return AssumptionEntry(aid, "pass")
    return AssumptionEntry(aid, "fail", w, f"{kind} rank {r} < {want} at omega = {w:g}")


def assumption_mode(design_mode):
    return "three-loop" if design_mode == "three-loop" else "full-detect"
