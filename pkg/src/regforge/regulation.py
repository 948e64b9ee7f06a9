"""Output-regulation design: regulator equations, gains, controller assembly.

Sign conventions follow the usual observer-based servo form::

    xhat'  = A xhat + B u - L (y - C xhat) [+ feedforward of w2]
    xhatr' = Ar xhatr - Lr (r - Cr xhatr)
    xhatw' = Aw xhatw + Lw (Cw xhatw - w2)
    u_t    = Kt xhat + Kr xhatr + Kw xhatw

so every gain is chosen to make ``A + B K``, ``A + L C``, ``Ar + Lr Cr``
and ``Aw + Lw Cw`` Hurwitz.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import numerics as nm
from .errors import ModeRequirementMissing, NotDetectable, Unsolvable
from .systems import ControllerRealization

REG_TOL = 1e-9


class RegionMiss(UserWarning):
    """Closed-loop poles outside the requested region (carried in ``poles``)."""

    def __init__(self, message, poles=()):
        super().__init__(message)
        self.poles = np.asarray(poles)


@dataclass(frozen=True)
class RegulatorSolution:
    Xt: np.ndarray
    Ut: np.ndarray
    Yt: np.ndarray = None
    Uw: np.ndarray = None
    residuals: dict = field(default_factory=dict)

    def Kr(self, K):
        """Feedforward gain ``Ut - K Xt`` for state-feedback gain ``K``."""
        return self.Ut - K @ self.Xt

    def Kw(self, K):
        if self.Yt is None:
            return None
        return self.Uw - K @ self.Yt


@dataclass(frozen=True)
class GainSet:
    """Loop gains for one controller mode.

    ``K`` is ``Kt`` (state feedback inside the regulation loop) or ``Kp``
    (separate stabilization loop, three-loop mode). ``L`` is the plant
    observer gain acting on ``y`` or ``yp``.
    """

    K: np.ndarray
    Kr: np.ndarray
    L: np.ndarray
    Lr: np.ndarray
    Kw: np.ndarray = None
    Lw: np.ndarray = None
    mode: str = "thm1"

    @property
    def K_name(self):
        return "Kp" if self.mode == "three-loop" else "Kt"

    @property
    def L_name(self):
        return {"thm1": "Lt", "three-loop": "Lp"}.get(self.mode, "Lk")

    def named(self):
        out = {self.K_name: self.K, "Kr": self.Kr, self.L_name: self.L, "Lr": self.Lr}
        if self.Kw is not None:
            out["Kw"] = self.Kw
        if self.Lw is not None:
            out["Lw"] = self.Lw
        return out


def _scale(*mats):
    return max([1.0] + [float(np.linalg.norm(m)) for m in mats if m is not None and m.size])


def solve_regulator_equations(A, B, C, Agen, F, G):
    """Solve ``X Agen = A X + B U + F`` and ``0 = C X + G`` for ``(X, U)``.

    ``Agen`` is reduced to complex Schur form ``Q T Q^H`` and the transformed
    unknowns are found one column at a time from the pencil
    ``[[A - t_jj I, B], [C, 0]]``; least-norm columns are taken when the
    pencil is wide. Raises :class:`Unsolvable` if the pencil loses row rank
    at an eigenvalue of ``Agen``.
    """
    n, m = B.shape
    p = C.shape[0]
    k = Agen.shape[0]
    if k == 0:
        return np.zeros((n, 0)), np.zeros((m, 0))
    T, Q = sla.schur(Agen.astype(complex), output="complex")
    Ft = F.astype(complex) @ Q
    Gt = G.astype(complex) @ Q
    Xt = np.zeros((n, k), complex)
    Ut = np.zeros((m, k), complex)
    for j in range(k):
        lam = T[j, j]
        M = np.block([[A - lam * np.eye(n), B], [C, np.zeros((p, m))]])
        if nm.numerical_rank(M) < n + p:
            raise Unsolvable(f"regulator pencil loses row rank at eigenvalue {lam:.6g}")
        rhs = np.concatenate([Xt[:, :j] @ T[:j, j] - Ft[:, j], -Gt[:, j]])
        sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
        Xt[:, j], Ut[:, j] = sol[:n], sol[n:]
    X = (Xt @ Q.conj().T).real
    U = (Ut @ Q.conj().T).real
    return X, U


def solve_regulator(plant, ref):
    """Regulator pair ``(Xt, Ut)`` with ``Xt Ar = A Xt + B Ut``, ``C Xt = Cr``."""
    A, B, C = plant.A, plant.B, plant.C
    Ar, Cr = ref.A, ref.C
    X, U = solve_regulator_equations(A, B, C, Ar, np.zeros((plant.n, ref.k)), -Cr)
    res_dyn = float(np.linalg.norm(X @ Ar - A @ X - B @ U))
    res_out = float(np.linalg.norm(C @ X - Cr))
    scale = _scale(A, B, C, Ar, Cr) * (1 + _scale(X, U))
    if max(res_dyn, res_out) > REG_TOL * scale:
        raise Unsolvable(f"regulator residual {max(res_dyn, res_out):.3e} too large")
    return RegulatorSolution(X, U, residuals={"Xt_dynamics": res_dyn, "Xt_output": res_out})


def solve_disturbance_regulator(plant, dist, base=None):
    """Add ``(Yt, Uw)`` with ``Yt Aw = A Yt + B Uw + B2 Cw`` and
    ``0 = C Yt + D2 Cw`` to ``base`` (a :class:`RegulatorSolution`)."""
    if plant.m2 != dist.r:
        raise ModeRequirementMissing("B2/D2 do not match the disturbance exosystem output")
    A, B, C = plant.A, plant.B, plant.C
    Aw, Cw = dist.A, dist.C
    F = plant.B2 @ Cw
    G = plant.D2 @ Cw
    Y, U = solve_regulator_equations(A, B, C, Aw, F, G)
    res_dyn = float(np.linalg.norm(Y @ Aw - A @ Y - B @ U - F))
    res_out = float(np.linalg.norm(C @ Y + G))
    scale = _scale(A, B, C, Aw, F, G) * (1 + _scale(Y, U))
    if max(res_dyn, res_out) > REG_TOL * scale:
        raise Unsolvable(f"disturbance regulator residual {max(res_dyn, res_out):.3e} too large")
    residuals = dict(base.residuals) if base is not None else {}
    residuals.update({"Yt_dynamics": res_dyn, "Yt_output": res_out})
    Xt = base.Xt if base is not None else np.zeros((plant.n, 0))
    Ut = base.Ut if base is not None else np.zeros((plant.m, 0))
    return RegulatorSolution(Xt, Ut, Y, U, residuals)


# ---------------------------------------------------------------------------
# gains

def in_region(poles, q, theta, r):
    """Membership in ``{z : Re z < q, |Im z| < tan(theta)|Re z|, |z - q| < r}``."""
    z = np.atleast_1d(np.asarray(poles, dtype=complex))
    return ((z.real < q) & (np.abs(z.imag) < np.tan(theta) * np.abs(z.real))
            & (np.abs(z - q) < r))


def _weight(w, size, default=1.0):
    if w is None:
        w = default
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        return float(w) * np.eye(size)
    if w.ndim == 1:
        return np.diag(w)
    return w


def design_state_feedback(A, B, Qx=None, Ru=None, target_region=None, shift=0.0):
    """LQR gain ``K`` with ``A + B K`` Hurwitz.

    ``shift`` > 0 solves the Riccati equation for ``A + shift I`` so every
    closed-loop pole lies left of ``-shift``. When ``target_region = (q,
    theta, r)`` is given the poles are checked against it and a
    :class:`RegionMiss` warning is issued on failure.
    """
    A = nm.as_matrix(A, "A")
    B = nm.as_matrix(B, "B", shape=(A.shape[0], None))
    n, m = B.shape
    Qx = _weight(Qx, n)
    Ru = _weight(Ru, m)
    K, _ = nm.lqr_gain(A + shift * np.eye(n), B, Qx, Ru)
    poles = np.linalg.eigvals(A + B @ K)
    if target_region is not None:
        inside = in_region(poles, *target_region)
        if not np.all(inside):
            warnings.warn(RegionMiss(f"poles outside S{tuple(target_region)}: {poles[~inside]}",
                                     poles[~inside]), stacklevel=2)
    return K


def design_exo_observer(Agen, Cgen, Qo=None, Ro=None, shift=0.0, target_region=None):
    """Observer gain ``L`` with ``Agen + L Cgen`` Hurwitz (dual LQR)."""
    Agen = nm.as_matrix(Agen, "Agen")
    k = Agen.shape[0]
    Cgen = nm.as_matrix(Cgen, "Cgen", shape=(None, k))
    ok, lam = nm.pbh_detectable(Cgen, Agen)
    if not ok:
        raise NotDetectable(f"(C, A) has an unobservable mode at {lam}")
    r = Cgen.shape[0]
    Kd, _ = nm.lqr_gain(Agen.T + shift * np.eye(k), Cgen.T, _weight(Qo, k), _weight(Ro, r))
    L = Kd.T
    poles = np.linalg.eigvals(Agen + L @ Cgen)
    if nm.spectral_abscissa(Agen + L @ Cgen) >= 0:
        raise NotDetectable("observer design did not produce a Hurwitz error matrix")
    if target_region is not None:
        inside = in_region(poles, *target_region)
        if not np.all(inside):
            warnings.warn(RegionMiss(f"poles outside S{tuple(target_region)}: {poles[~inside]}",
                                     poles[~inside]), stacklevel=2)
    return L


def design_output_observer(A, Cmeas, weights=None):
    """Deterministic observer gain for the plant (dual LQR with optional weights)."""
    weights = weights or {}
    return design_exo_observer(A, Cmeas, weights.get("observer_Q"), weights.get("observer_R"),
                               weights.get("observer_shift", 0.0))


def check_kp_conditions(plant, K, L, exos):
    """Both stabilization-loop requirements of the three-loop structure.

    ``A + B Kp`` Hurwitz, and ``A + B Kp + Lp Cp - lambda I`` nonsingular at
    every exosystem eigenvalue. Raises :class:`ModeRequirementMissing`.
    """
    A, B, Cp = plant.A, plant.B, plant.Cp
    if nm.spectral_abscissa(A + B @ K) >= -nm.HURWITZ_TOL:
        raise ModeRequirementMissing("A + B Kp is not Hurwitz")
    M = A + B @ K + L @ Cp
    n = plant.n
    for ex in exos:
        if ex is None:
            continue
        for lam in np.linalg.eigvals(ex.A) if ex.k else []:
            if nm.numerical_rank(M - lam * np.eye(n)) < n:
                raise ModeRequirementMissing(
                    f"A + B Kp + Lp Cp - lambda I loses rank at lambda = {lam:.6g}")


# ---------------------------------------------------------------------------
# controller realization

def assemble_or_controller(gains, regsol, plant, mode, ref, dist=None):
    """Observer-based regulation controller as one labelled realization.

    States are ``xhat`` (n), ``xhat_r`` (nr) and, with a disturbance model,
    ``xhat_w`` (nw). Inputs are the measured output (``y``, or ``yp`` in
    three-loop mode), ``r``, ``w2`` when modeled, and ``u_f`` (the
    compensator output, needed so the observer sees the full plant input).
    Outputs are ``u_p`` (three-loop only), ``u_t`` and ``y_pred``, the
    nominal prediction of the tracking error used to form the residual.
    """
    if mode not in ("thm1", "kalman", "modeled", "three-loop"):
        raise ValueError(f"unknown mode {mode!r}")
    three = mode == "three-loop"
    if three and plant.q == 0:
        raise ModeRequirementMissing("three-loop mode needs a stabilization output Cp")
    modeled = dist is not None and gains.Kw is not None
    if mode == "modeled" and not modeled:
        raise ModeRequirementMissing("modeled mode needs a disturbance model with Kw, Lw")
    if three:
        check_kp_conditions(plant, gains.K, gains.L, (ref, dist if modeled else None))

    A, B, C = plant.A, plant.B, plant.C
    Cm, _, _, Dm2 = plant.measurement(three)
    n, m, p = plant.n, plant.m, plant.p
    nr = ref.k
    nw = dist.k if modeled else 0
    nx = n + nr + nw
    K, L, Kr, Lr = gains.K, gains.L, gains.Kr, gains.Lr
    xs, rs, ws = slice(0, n), slice(n, n + nr), slice(n + nr, nx)

    # control laws in terms of the controller state
    Kp_row = np.zeros((m, nx))
    Kt_row = np.zeros((m, nx))
    if three:
        Kp_row[:, xs] = K
    else:
        Kt_row[:, xs] = K
    Kt_row[:, rs] = Kr
    if modeled:
        Kt_row[:, ws] = gains.Kw
    u_row = Kp_row + Kt_row

    inputs = [("yp" if three else "y", Cm.shape[0]), ("r", ref.r)]
    if modeled:
        inputs.append(("w2", dist.r))
    inputs.append(("u_f", m))
    nu = sum(d for _, d in inputs)
    ys = slice(0, Cm.shape[0])
    r_s = slice(ys.stop, ys.stop + ref.r)
    w2s = slice(r_s.stop, r_s.stop + (dist.r if modeled else 0))
    ufs = slice(nu - m, nu)

    Ac = np.zeros((nx, nx))
    Bc = np.zeros((nx, nu))
    Ac[xs] += B @ u_row
    Ac[xs, xs] += A + L @ Cm
    Bc[xs, ys] = -L
    Bc[xs, ufs] = B
    Ac[rs, rs] = ref.A + Lr @ ref.C
    Bc[rs, r_s] = -Lr
    if modeled:
        Cw = dist.C
        B2 = plant.B2
        Ac[xs, ws] += (B2 + L @ Dm2) @ Cw
        Ac[ws, ws] = dist.A + gains.Lw @ Cw
        Bc[ws, w2s] = -gains.Lw

    outputs = []
    rows = []
    if three:
        outputs.append(("u_p", m))
        rows.append(Kp_row)
    outputs.append(("u_t", m))
    rows.append(Kt_row)
    pred = np.zeros((p, nx))
    pred[:, xs] = C
    pred[:, rs] = -ref.C
    if modeled:
        pred[:, ws] = plant.D2 @ dist.C
    outputs.append(("y_pred", p))
    rows.append(pred)
    Cc = np.vstack(rows)
    Dc = np.zeros((Cc.shape[0], nu))
    states = [("xhat", n), ("xhat_r", nr)] + ([("xhat_w", nw)] if modeled else [])
    return ControllerRealization(Ac, Bc, Cc, Dc, tuple(inputs), tuple(outputs),
                                 tuple(states), "regulator")
