"""End-to-end design pipeline: gains, regulator, Kalman loop, compensator.

:func:`design` turns a :class:`~regforge.model.Problem` into a
:class:`Design` holding every gain of the selected architecture together
with the numbers that certify it. Failures are re-raised as
:class:`~regforge.errors.SynthesisFailed` naming the stage.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import hinf as hf
from . import kalman as kl
from . import numerics as nm
from . import regulation as rg
from .errors import DesignError, ModeRequirementMissing, SynthesisFailed
from .sim import assemble_closed_loop

GAMMA_HI = 10.0
GAMMA_TOL = 1e-3


@dataclass(frozen=True)
class Design:
    problem: object
    mode: str
    gains: rg.GainSet
    regsol: rg.RegulatorSolution
    regulator: object
    kalman_P: np.ndarray = None
    budget: kl.NoisePowerBudget = None
    synthesis: hf.HinfSynthesis = None
    gamma: float = None
    gamma_star: float = None
    region_misses: tuple = ()

    @property
    def compensator(self):
        return None if self.synthesis is None else self.synthesis.controller

    @property
    def use_cp(self):
        return self.mode == "three-loop"

    def controllers(self):
        return [c for c in (self.regulator, self.compensator) if c is not None]

    def closed_loop(self, ablate=False, with_disturbance=True):
        """Closed loop of this design; ``ablate`` forces ``u_f = 0``."""
        pr = self.problem
        dist = pr.disturbance if with_disturbance else None
        if dist is not None and pr.plant.m2 == 0:
            dist = None
        return assemble_closed_loop(pr.plant, self.controllers(), pr.reference, dist,
                                    self.mode, ablate)

    def report(self):
        return design_report(self)


class _Stage:
    """Context manager mapping design errors to :class:`SynthesisFailed`."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, et, exc, tb):
        if exc is not None and isinstance(exc, DesignError) and not isinstance(
                exc, SynthesisFailed):
            raise SynthesisFailed(self.name, exc) from exc
        return False


def _region(value):
    return None if value is None else tuple(float(v) for v in value)


def has_compensator_channel(plant):
    return plant.m1 >= plant.p and nm.numerical_rank(plant.D1) == plant.p


def design(problem, mode=None, gamma=None):
    """Run the full design for ``problem``.

    ``mode`` and ``gamma`` override the values stored in the problem;
    ``gamma`` may be a positive number or ``"auto"`` (bisection for the
    smallest feasible level). Mode ``thm1`` builds the plain observer-based
    regulator; the other modes add the residual compensator whenever the
    plant has an unmodeled-disturbance channel with ``rank(D1) = p``.
    """
    mode = mode or problem.design.mode
    gamma = problem.design.gamma if gamma is None else gamma
    plant, ref, dist = problem.plant, problem.reference, problem.disturbance
    w = problem.design.lqr_weights
    ko = problem.design.kalman_overrides
    three = mode == "three-loop"
    modeled = mode in ("modeled", "three-loop") and dist is not None and plant.m2 > 0
    if three and plant.q == 0:
        raise SynthesisFailed("mode", ModeRequirementMissing(
            "three-loop mode needs a stabilization output Cp"))
    if mode == "modeled" and not modeled:
        raise SynthesisFailed("disturbance_regulator",
                              "modeled mode needs a disturbance exosystem and B2/D2")

    misses = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", rg.RegionMiss)
        with _Stage("regulator"):
            regsol = rg.solve_regulator(plant, ref)
            if modeled:
                regsol = rg.solve_disturbance_regulator(plant, dist, regsol)
        with _Stage("state_feedback"):
            K = rg.design_state_feedback(plant.A, plant.B, w.get("Q"), w.get("R"),
                                         _region(w.get("feedback_region")), w.get("shift", 0.0))
        with _Stage("exo_observer"):
            exo_args = (w.get("exo_Q"), w.get("exo_R"), w.get("exo_shift", 0.0),
                        _region(w.get("exo_region")))
            Lr = rg.design_exo_observer(ref.A, ref.C, *exo_args)
            dist_args = (w.get("dist_Q", exo_args[0]), w.get("dist_R", exo_args[1]),
                         w.get("dist_shift", exo_args[2]), exo_args[3])
            Lw = rg.design_exo_observer(dist.A, dist.C, *dist_args) if modeled else None
        for c in caught:
            if isinstance(c.message, rg.RegionMiss):
                misses.append(str(c.message))

    Cm, Dm0, _, _ = plant.measurement(three)
    P1 = None
    budget = None
    if mode == "thm1":
        with _Stage("observer"):
            L = rg.design_output_observer(plant.A, Cm, w)
    else:
        B0 = np.asarray(ko.get("B0", plant.B0), float)
        D0 = np.asarray(ko.get("Dp0" if three else "D0", Dm0), float)
        with _Stage("kalman"):
            if B0.size and D0.size:
                L, P1 = kl.design_kalman_gain(plant.A, B0, Cm, D0)
            else:
                L = rg.design_output_observer(plant.A, Cm, w)
            budget = kl.predict_noise_error_power(plant, K, L, P1, use_cp=three,
                                                  B0=B0 if B0.size else None,
                                                  D0meas=D0 if D0.size else None)

    gains = rg.GainSet(K, regsol.Kr(K), L, Lr, regsol.Kw(K) if modeled else None, Lw, mode)
    with _Stage("assemble"):
        regulator = rg.assemble_or_controller(gains, regsol, plant, mode, ref,
                                              dist if modeled else None)

    syn = None
    g_used = g_star = None
    if mode != "thm1" and has_compensator_channel(plant):
        with _Stage("augmented_plant"):
            aug = hf.build_augmented_plant(plant, K, L, "three-loop" if three else "tracked")
        with _Stage("normalize_io"):
            naug, tr = hf.normalize_io(plant, aug)
        if gamma == "auto":
            with _Stage("gamma_bisection"):
                hi = GAMMA_HI
                while hf.gamma_feasibility(naug, hi) is None:
                    hi *= 10
                    if hi > 1e8:
                        raise SynthesisFailed("gamma_bisection", "no feasible gamma below 1e8")
                g_star, syn = hf.gamma_bisection(naug, tr, hf.gamma_floor(naug), hi, GAMMA_TOL)
                g_used = syn.gamma
        else:
            g_used = float(gamma)
            with _Stage("gamma_feasibility"):
                sol = hf.gamma_feasibility(naug, g_used)
                if sol is None:
                    raise SynthesisFailed("gamma_feasibility",
                                          f"gamma = {g_used:g} is infeasible")
            with _Stage("synthesize_central"):
                syn = hf.synthesize_central(naug, tr, g_used, *sol)
    elif gamma not in (None, "auto") and mode != "thm1":
        g_used = float(gamma)

    return Design(problem, mode, gains, regsol, regulator, P1, budget, syn, g_used, g_star,
                  tuple(misses))


# ---------------------------------------------------------------------------
# report

def _eig_list(M):
    if M is None or M.size == 0:
        return []
    lam = np.linalg.eigvals(M)
    lam = sorted(lam, key=lambda z: (round(z.real, 9), round(z.imag, 9)))
    return [[float(z.real), float(z.imag)] for z in lam]


def _mat(M):
    return None if M is None else np.asarray(M, float).tolist()


def _loop(M, region=None):
    out = {"abscissa": nm.spectral_abscissa(M), "poles": _eig_list(M)}
    if region is not None:
        out["in_region"] = bool(np.all(rg.in_region(np.linalg.eigvals(M), *region)))
        out["region"] = list(region)
    return out


def design_report(d):
    """JSON-ready dictionary of gains, certificates and pole locations."""
    pr = d.problem
    plant, ref, dist = pr.plant, pr.reference, pr.disturbance
    w = pr.design.lqr_weights
    g = d.gains
    Cm = plant.Cp if d.use_cp else plant.C
    fb_region = _region(w.get("feedback_region"))
    exo_region = _region(w.get("exo_region"))
    loops = {
        f"A+B{g.K_name}": _loop(plant.A + plant.B @ g.K, fb_region),
        f"A+{g.L_name}C": _loop(plant.A + g.L @ Cm),
        "Ar+LrCr": _loop(ref.A + g.Lr @ ref.C, exo_region),
    }
    if g.Lw is not None:
        loops["Aw+LwCw"] = _loop(dist.A + g.Lw @ dist.C, exo_region)
    rep = {
        "mode": d.mode,
        "gains": {k: _mat(v) for k, v in g.named().items()},
        "regulator": {"Xt": _mat(d.regsol.Xt), "Ut": _mat(d.regsol.Ut),
                      "residuals": dict(d.regsol.residuals)},
        "loops": loops,
        "region_misses": list(d.region_misses),
    }
    if d.regsol.Yt is not None and g.Kw is not None:
        rep["regulator"].update({"Yt": _mat(d.regsol.Yt), "Uw": _mat(d.regsol.Uw)})
    if d.kalman_P is not None:
        B0 = np.asarray(pr.design.kalman_overrides.get("B0", plant.B0), float)
        Dm0 = plant.Dp0 if d.use_cp else plant.D0
        D0 = np.asarray(pr.design.kalman_overrides.get("Dp0" if d.use_cp else "D0", Dm0),
                        float)
        res = kl.filter_lyapunov_residual(plant.A, B0, Cm, D0, g.L, d.kalman_P)
        rep["kalman"] = {"P": _mat(d.kalman_P),
                         "lyapunov_identity_residual": float(np.linalg.norm(res))}
    if d.budget is not None:
        rep["noise_budget"] = {"P1": _mat(d.budget.P1), "P2": _mat(d.budget.P2),
                               "predicted_error_power": d.budget.predicted_error_power}
    if d.synthesis is not None:
        s = d.synthesis
        comp = s.controller
        rep["hinf"] = {
            "gamma": s.gamma,
            "gamma_star": d.gamma_star,
            "certificates": dict(s.certificates),
            "Xf": _mat(s.Xf), "Yf": _mat(s.Yf), "Kf": _mat(s.Kf), "Lf": _mat(s.Lf),
            "compensator": {"A": _mat(comp.A), "B": _mat(comp.B), "C": _mat(comp.C),
                            "D": _mat(comp.D)},
        }
    else:
        rep["hinf"] = None
    rep["gamma"] = d.gamma
    cl = d.closed_loop()
    rep["closed_loop"] = {"states": cl.n_states, "abscissa": cl.autonomous_abscissa()}
    return rep
