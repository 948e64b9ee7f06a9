import json
from importlib import resources
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from regforge import pipeline as dg
from regforge.model import load_problem, problem_from_dict

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

DATA = Path(str(resources.files("regforge") / "data"))
FURUTA = DATA / "furuta.json"
SCALAR = DATA / "scalar_thm1.json"
NOISE2 = DATA / "noise2.json"


def fixture_doc(path):
    return json.loads(Path(path).read_text())


@pytest.fixture(scope="session")
def furuta():
    return load_problem(FURUTA)


@pytest.fixture(scope="session")
def furuta_design(furuta):
    return dg.design(furuta)


@pytest.fixture(scope="session")
def scalar():
    return load_problem(SCALAR)


@pytest.fixture(scope="session")
def scalar_design(scalar):
    return dg.design(scalar)


@pytest.fixture(scope="session")
def noise2():
    return load_problem(NOISE2)


def make_problem(**overrides):
    """Scalar problem document with selected top-level sections replaced."""
    doc = fixture_doc(SCALAR)
    doc.update(overrides)
    return problem_from_dict(doc)


def random_stable(rng, n, margin=0.1):
    A = rng.standard_normal((n, n))
    shift = max(0.0, float(np.max(np.linalg.eigvals(A).real))) + margin
    return A - shift * np.eye(n)


def rel_err(X, Y):
    return float(np.linalg.norm(X - Y) / max(1.0, np.linalg.norm(Y)))
