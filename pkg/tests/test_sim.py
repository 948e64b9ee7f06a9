import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regforge import experiments as ex
from regforge import oracles as orc
from regforge.errors import Diverged, EmptyWindow, WiringError
from regforge.profiles import DisturbanceProfile, sinusoid
from regforge.sim import (ClosedLoop, assemble_closed_loop, power_norm, simulate,
                          verify_bound, zoh)


def _scalar_loop(a=-1.0, x0=1.0):
    return ClosedLoop(np.array([[a]]), np.zeros((1, 0)), np.eye(1), np.zeros((1, 0)),
                      (), (("y", 1),), (("x", 1),), np.array([x0]))


def _non_exo_states(cl):
    return cl.n_states - sum(cl.state_slice(s).stop - cl.state_slice(s).start
                             for s in cl.exo_states)


# ---------------------------------------------------------------- assembly

def test_thm1_dimension(scalar_design):
    cl = scalar_design.closed_loop()
    assert _non_exo_states(cl) == 1 + 1 + 2
    assert cl.n_states == 1 + 1 + 2 + 2


def test_three_loop_dimension(furuta_design):
    cl = furuta_design.closed_loop()
    assert _non_exo_states(cl) == 4 + 4 + 2 + 4 + 8
    assert cl.autonomous_abscissa() < 0


def test_every_channel_present(furuta_design, scalar_design):
    for d in (furuta_design, scalar_design):
        cl = d.closed_loop()
        for ch in ("r", "y", "e", "z", "eps_f", "u", "u_p", "u_t", "u_f", "w0", "w1", "w2"):
            assert cl.has_signal(ch), ch


def test_wiring_error_on_duplicate_regulator(scalar_design):
    d = scalar_design
    with pytest.raises(WiringError):
        assemble_closed_loop(d.problem.plant, [d.regulator, d.regulator], d.problem.reference)


# ---------------------------------------------------------------- simulation

def test_zero_initial_state_gives_zero_trace():
    tr = simulate(_scalar_loop(x0=0.0), horizon=1.0)
    assert np.all(tr["y"] == 0.0)


def test_scalar_decay_exact():
    tr = simulate(_scalar_loop(), dt=0.01, horizon=1.0)
    assert tr["y"][-1, 0] == pytest.approx(np.exp(-1.0), abs=1e-12)


def test_reference_is_exact_sinusoid(furuta_design):
    tr = simulate(furuta_design.closed_loop(), horizon=10.0, channels=["r"])
    np.testing.assert_allclose(tr["r"][:, 0], np.sin(0.5 * np.pi * tr.t), atol=1e-9)


def test_trace_lengths(furuta_design):
    tr = simulate(furuta_design.closed_loop(), dt=1e-3, horizon=2.5)
    assert tr.t.size == 2501
    assert all(v.shape[0] == 2501 for v in tr.channels.values())


def test_control_sum(furuta_design):
    tr = ex.run_scenario(furuta_design, "all", horizon=5.0, seed=3)
    u = tr["u"]
    s = tr["u_p"] + tr["u_t"] + tr["u_f"]
    assert np.max(np.abs(u - s)) <= 1e-12 * max(1.0, np.max(np.abs(u)))


def test_diverged_reports_time():
    with pytest.raises(Diverged) as exc:
        simulate(_scalar_loop(a=1.0), dt=0.01, horizon=30.0)
    assert exc.value.time == pytest.approx(np.log(1e9), abs=0.02)


def test_bad_step_arguments():
    with pytest.raises(ValueError):
        simulate(_scalar_loop(), dt=0.0)
    with pytest.raises(ValueError):
        simulate(_scalar_loop(), dt=0.1, horizon=0.05)


def test_seeded_reproducibility(furuta_design):
    a = ex.run_scenario(furuta_design, "all", horizon=3.0, seed=11)
    b = ex.run_scenario(furuta_design, "all", horizon=3.0, seed=11)
    c = ex.run_scenario(furuta_design, "all", horizon=3.0, seed=12)
    for k in a.channels:
        assert np.array_equal(a[k], b[k])
    assert not np.array_equal(a["w0"], c["w0"])


def test_noise_covariance_per_step(furuta_design):
    tr = ex.run_scenario(furuta_design, "noise", horizon=50.0, seed=0, channels=["w0"])
    var = np.var(tr["w0"], axis=0)
    np.testing.assert_allclose(var, 1.0 / tr.dt, rtol=0.05)


def test_superposition(furuta_design):
    cl = furuta_design.closed_loop(with_disturbance=False)
    m1 = cl.input_dim("w1")
    d1 = DisturbanceProfile("sinusoid", "w1", {"amplitudes": [[1.0] * m1], "frequencies": [0.7],
                                               "phases": [0.0]})
    d2 = DisturbanceProfile("sinusoid", "w1", {"amplitudes": [[0.5] * m1], "frequencies": [3.1],
                                               "phases": [1.0]})
    both = DisturbanceProfile("sinusoid", "w1", {
        "amplitudes": [[1.0] * m1, [0.5] * m1], "frequencies": [0.7, 3.1], "phases": [0.0, 1.0]})
    kw = dict(horizon=5.0, channels=["e", "z", "u"])
    t1, t2, t12 = (simulate(cl, {"w1": p}, **kw) for p in (d1, d2, both))
    t0 = simulate(cl, **kw)
    for ch in kw["channels"]:
        np.testing.assert_allclose(t12[ch], t1[ch] + t2[ch] - t0[ch], atol=1e-9)


@settings(max_examples=20)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 4), m=st.integers(1, 2))
def test_zoh_matches_rk4(seed, n, m):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    Ad, Bd = zoh(A, B, 0.01)
    Phi, Gam = orc.rk4_step_map(A, B, 0.01)
    np.testing.assert_allclose(Ad, Phi, atol=1e-12)
    np.testing.assert_allclose(Bd, Gam, atol=1e-12)


def test_block_propagation_matches_stepwise():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((3, 3)) - 2 * np.eye(3)
    B = rng.standard_normal((3, 2))
    cl = ClosedLoop(A, B, np.eye(3), np.zeros((3, 2)), (("w0", 2),), (("y", 3),),
                    (("x", 3),), rng.standard_normal(3))
    tr = simulate(cl, noise=5, dt=0.01, horizon=7.0)
    Ad, Bd = zoh(A, B, 0.01)
    W = np.random.default_rng(5).standard_normal((700, 2)) / np.sqrt(0.01)
    x = cl.x0.copy()
    xs = [x]
    for k in range(700):
        x = Ad @ x + Bd @ W[k]
        xs.append(x)
    np.testing.assert_allclose(tr["y"], np.array(xs), rtol=1e-10, atol=1e-10)


# ---------------------------------------------------------------- power norm

def test_power_norm_constant():
    assert power_norm(np.full(100, -3.0), 0.0) == pytest.approx(3.0)


def test_power_norm_sinusoid_whole_periods():
    t = np.arange(10000) * 1e-3  # ten whole periods
    assert power_norm(2.5 * np.sin(2 * np.pi * t), 0.0) == pytest.approx(2.5 / np.sqrt(2), abs=1e-6)


def test_power_norm_white_noise():
    dt = 1e-3
    x = np.random.default_rng(0).standard_normal(int(100 / dt)) / np.sqrt(dt)
    assert power_norm(x, 0.0) == pytest.approx(np.sqrt(1 / dt), rel=0.1)


def test_power_norm_empty_window():
    with pytest.raises(EmptyWindow):
        power_norm(np.zeros(0))


@settings(max_examples=40)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 200), dim=st.integers(1, 3))
def test_power_norm_concatenation(seed, n, dim):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((n, dim)), rng.standard_normal((n, dim))
    whole = power_norm(np.vstack([a, b]), 0.0)
    parts = np.sqrt((power_norm(a, 0.0) ** 2 + power_norm(b, 0.0) ** 2) / 2)
    assert whole == pytest.approx(parts, rel=1e-12)


# ---------------------------------------------------------------- bound verification

def test_verify_nominal_floor(furuta_design):
    tr = ex.run_scenario(furuta_design, "nominal", horizon=10.0)
    # r != 0, so compare the regulation error instead of |e| against the floor
    rep = verify_bound(tr, furuta_design.gamma)
    assert rep.ratio is None
    assert rep.flags["error_floor"]


def test_verify_sinusoid_ratio(furuta_design):
    tr = ex.run_scenario(furuta_design, "w1", horizon=20.0)
    rep = verify_bound(tr, furuta_design.gamma)
    assert rep.ratio < furuta_design.gamma
    assert rep.flags["attenuation"]
    assert rep.gamma_margin > 0


def test_verify_noise_budget(furuta_design):
    tr = ex.run_scenario(furuta_design, "noise", horizon=200.0, seed=0, channels=["e", "z", "w1"])
    rep = verify_bound(tr, furuta_design.gamma, furuta_design.budget)
    assert rep.flags["noise_budget"], rep


@pytest.mark.parametrize("scenario", ["nominal", "noise", "w1", "w2", "all", "w1-ablate"])
def test_z_dominates_e(furuta_design, scenario):
    tr = ex.run_scenario(furuta_design, scenario, horizon=10.0, seed=1)
    e2 = tr.power("e") ** 2
    z2 = tr.power("z") ** 2
    assert z2 >= e2 * (1 - 1e-9)
    # and the decomposition into the two halves of z is exact
    p = furuta_design.problem.plant.p
    z = tr["z"][:-1]
    k0 = int(0.2 * z.shape[0])
    halves = np.mean(np.sum(z[k0:, :p] ** 2, 1)) + np.mean(np.sum(z[k0:, p:] ** 2, 1))
    assert z2 == pytest.approx(halves, rel=1e-12)


def test_csv_is_stable(furuta_design):
    tr = ex.run_scenario(furuta_design, "w1", horizon=0.05)
    text = tr.to_csv(["e", "z"])
    header = text.splitlines()[0]
    assert header == "t,e,z[0],z[1]"
    assert text == tr.to_csv(["e", "z"])
    assert len(text.splitlines()) == tr.t.size + 1


def test_profile_kinds():
    t = np.array([0.0, 0.5, 1.0, 1.5])
    pw = DisturbanceProfile("piecewise", "w1", {"times": [0.0, 1.0], "values": [[1.0], [2.0]]})
    np.testing.assert_array_equal(pw.evaluate(t, 1)[:, 0], [1, 1, 2, 2])
    sm = DisturbanceProfile("sampled", "w1", {"dt": 0.5, "samples": [[1.0], [2.0]]})
    np.testing.assert_array_equal(sm.evaluate(t, 1)[:, 0], [1, 2, 0, 0])
    s = sinusoid(2.0, 1.0)
    np.testing.assert_allclose(s.evaluate(t, 1)[:, 0], 2 * np.sin(t))
    assert np.all(DisturbanceProfile().evaluate(t, 2) == 0)
