import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regforge import kalman as kl
from regforge import numerics as nm
from regforge import pipeline as dg
from regforge.errors import NotHurwitz, SingularNoise
from regforge.model import Plant, problem_from_dict
from regforge.sim import power_norm, simulate


def test_scalar_filter():
    L, P1 = kl.design_kalman_gain([[-1.0]], [[1.0, 0.0]], [[1.0]], [[0.0, 1.0]])
    np.testing.assert_allclose(P1, [[np.sqrt(2) - 1]], atol=1e-12)
    np.testing.assert_allclose(L, [[1 - np.sqrt(2)]], atol=1e-12)


def test_uncorrelated_identity_measurement():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((3, 3))
    B0 = np.hstack([rng.standard_normal((3, 2)), np.zeros((3, 3))])
    D0 = np.hstack([np.zeros((3, 2)), np.eye(3)])
    L, P1 = kl.design_kalman_gain(A, B0, np.eye(3), D0)
    np.testing.assert_allclose(L, -P1, atol=1e-12)
    ref = nm.solve_care(A.T, np.eye(3), B0 @ B0.T, np.eye(3)).P
    np.testing.assert_allclose(P1, ref, atol=1e-10)


def test_furuta_stabilization_filter(furuta):
    pl = furuta.plant
    L, P1 = kl.design_kalman_gain(pl.A, pl.B0, pl.Cp, pl.Dp0)
    assert nm.is_hurwitz(pl.A + L @ pl.Cp)
    R0 = pl.Dp0 @ pl.Dp0.T
    A0 = pl.A - pl.B0 @ pl.Dp0.T @ np.linalg.solve(R0, pl.Cp)
    Q0 = pl.B0 @ (np.eye(pl.m0) - pl.Dp0.T @ np.linalg.solve(R0, pl.Dp0)) @ pl.B0.T
    res = A0 @ P1 + P1 @ A0.T - P1 @ pl.Cp.T @ np.linalg.solve(R0, pl.Cp) @ P1 + Q0
    assert np.linalg.norm(res) <= 1e-8 * (1 + np.linalg.norm(P1)) ** 2


def test_singular_noise():
    with pytest.raises(SingularNoise):
        kl.design_kalman_gain([[-1.0]], [[1.0]], [[1.0]], [[0.0]])


def test_noiseless_budget_is_zero():
    pl = Plant([[-1.0]], [[1.0]], [[1.0]], B0=[[0.0]], D0=[[0.0]])
    b = kl.predict_noise_error_power(pl, np.array([[-1.0]]), np.array([[-1.0]]))
    assert b.predicted_error_power == 0.0


def test_zero_output_budget_is_feedthrough():
    pl = Plant([[-1.0]], [[1.0]], [[0.0]], B0=[[1.0]], D0=[[0.3]])
    b = kl.predict_noise_error_power(pl, np.array([[-1.0]]), np.array([[-1.0]]))
    assert b.predicted_error_power == pytest.approx(0.3, abs=1e-15)


def test_budget_rejects_unstable_loops():
    pl = Plant([[1.0]], [[1.0]], [[1.0]], B0=[[1.0, 0]], D0=[[0, 1.0]])
    with pytest.raises(NotHurwitz):
        kl.predict_noise_error_power(pl, np.array([[0.0]]), np.array([[-3.0]]))


def _random_noise_plant(rng, n, p, m0):
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, 1))
    C = rng.standard_normal((p, n))
    B0 = rng.standard_normal((n, m0))
    D0 = rng.standard_normal((p, m0))
    return Plant(A, B, C, B0=B0, D0=D0)


@settings(max_examples=30)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 4))
def test_filter_lyapunov_identity(seed, n):
    pl = _random_noise_plant(np.random.default_rng(seed), n, 1, n + 1)
    L, P1 = kl.design_kalman_gain(pl.A, pl.B0, pl.C, pl.D0)
    res = kl.filter_lyapunov_residual(pl.A, pl.B0, pl.C, pl.D0, L, P1)
    assert np.linalg.norm(res) <= 1e-8 * (1 + np.linalg.norm(P1)) ** 2


def _budget(pl, B0=None, D0=None):
    B0 = pl.B0 if B0 is None else B0
    D0 = pl.D0 if D0 is None else D0
    K, _ = nm.lqr_gain(pl.A, pl.B, np.eye(pl.n), np.eye(1))
    L, P1 = kl.design_kalman_gain(pl.A, B0, pl.C, D0)
    return kl.predict_noise_error_power(Plant(pl.A, pl.B, pl.C, B0=B0, D0=D0), K, L, P1)


@settings(max_examples=30)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 4),
       kappa=st.floats(0.1, 10.0))
def test_budget_scales_with_noise_intensity(seed, n, kappa):
    pl = _random_noise_plant(np.random.default_rng(seed), n, 1, n + 1)
    b1 = _budget(pl)
    b2 = _budget(pl, kappa * pl.B0, kappa * pl.D0)
    assert np.allclose(b2.P1, kappa ** 2 * b1.P1, rtol=1e-8, atol=1e-12)
    assert np.allclose(b2.P2, kappa ** 2 * b1.P2, rtol=1e-8, atol=1e-12)
    assert b2.predicted_error_power == pytest.approx(kappa * b1.predicted_error_power,
                                                     rel=1e-8)


@settings(max_examples=30)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 4))
def test_budget_orthogonal_noise_invariance(seed, n):
    rng = np.random.default_rng(seed)
    pl = _random_noise_plant(rng, n, 1, n + 1)
    U, _ = np.linalg.qr(rng.standard_normal((n + 1, n + 1)))
    b1 = _budget(pl)
    b2 = _budget(pl, pl.B0 @ U.T, pl.D0 @ U.T)
    assert b2.predicted_error_power == pytest.approx(b1.predicted_error_power, rel=1e-10)


def test_cross_covariance_vanishes_for_kalman_gain():
    pl = Plant([[-1.0]], [[1.0]], [[1.0]], B0=[[1.0, 0]], D0=[[0, 0.1]])
    K = np.array([[-1.0]])
    L, P1 = kl.design_kalman_gain(pl.A, pl.B0, pl.C, pl.D0)
    b = kl.predict_noise_error_power(pl, K, L, P1)
    Y = kl.error_covariance(pl, K, L)
    np.testing.assert_allclose(Y[:1, :1], b.P2, atol=1e-12)
    np.testing.assert_allclose(Y[1:, 1:], b.P1, atol=1e-12)
    assert abs(Y[0, 1]) < 1e-12
    # a detuned observer correlates the two errors
    assert abs(kl.error_covariance(pl, K, 2 * L)[0, 1]) > 1e-3


def _scalar_kalman_problem():
    # A = -1, B = 1 with Q = 3 gives Kt = -1
    return problem_from_dict({
        "plant": {"A": [[-1.0]], "B": [[1.0]], "C": [[1.0]],
                  "B0": [[1.0, 0.0]], "D0": [[0.0, 0.1]]},
        "reference": {"A": [[0.0]], "C": [[1.0]], "x0": [0.0]},
        "design": {"mode": "kalman", "lqr_weights": {"Q": 3.0, "R": 1.0}},
    })


def test_scalar_budget_monte_carlo():
    d = dg.design(_scalar_kalman_problem())
    np.testing.assert_allclose(d.gains.K, [[-1.0]], atol=1e-12)
    # the sampled feedthrough D0 w0 has power D0 D0^T / dt, so compare the
    # state-carried part C x - r against sqrt(tr(C (P1 + P2) C^T))
    D0 = d.problem.plant.D0
    vals = []
    for seed in range(4):
        tr = simulate(d.closed_loop(), noise=seed, horizon=400.0, channels=["e", "w0"])
        vals.append(power_norm((tr["e"] - tr["w0"] @ D0.T)[:-1]) ** 2)
    measured = np.sqrt(np.mean(vals))
    assert measured == pytest.approx(d.budget.state_part, rel=0.15)
    assert d.budget.predicted_error_power == pytest.approx(
        np.sqrt(d.budget.state_part ** 2 + 0.01), rel=1e-12)
