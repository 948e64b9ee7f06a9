"""Residual-driven H-infinity compensator.

The compensator sees only the residual ``eps_f`` (nominal prediction of the
tracking error minus the measured one) and adds ``u_f`` to the plant input.
Its design plant is the error system of the regulation loop::

    xf'   = Af xf + B1 w1 + B2 u_f          xf = [xhat - X xr ; x - xhat]
    z     = C1 xf + D11 w1 + D12 u_f        z  = [e + Dz u_f ; e - Dz u_f]
    eps_f = C2 xf + D21 w1

After the orthogonal/diagonal input-output normalization the feedthrough
terms take the standard form ``D12 = [0; I]``, ``D21 = [0, I]`` and the
central suboptimal controller follows from two game Riccati equations.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import numerics as nm
from .errors import (
    GammaTooSmall,
    HiInfeasible,
    NoStabilizingSolution,
    NotHurwitz,
    RankDeficient,
    SingularScaling,
    XiNormTooLarge,
    XiUnstable,
)
from .systems import ControllerRealization, lft_lower

log = logging.getLogger(__name__)

SWEEP_POINTS = 400
SWEEP_RANGE = (1e-3, 1e4)


@dataclass(frozen=True)
class AugmentedPlant:
    """Generalized plant for the compensator (original or normalized coords).

    ``Bbar``/``D2bar`` hold the exosystem-estimation-error input, which the
    synthesis ignores because it decays exponentially.
    """

    Af: np.ndarray
    B1f: np.ndarray
    B2f: np.ndarray
    C1f: np.ndarray
    C2f: np.ndarray
    D11f: np.ndarray
    D12f: np.ndarray
    D21f: np.ndarray
    n: int
    m: int
    p: int
    m1: int
    Bbar: np.ndarray = None
    D2bar: np.ndarray = None
    normalized: bool = False

    @property
    def D1112(self):
        return self.D11f[: 2 * self.p - self.m, self.m1 - self.p:]

    @property
    def D1122(self):
        return self.D11f[2 * self.p - self.m:, self.m1 - self.p:]

    def matrices(self):
        """``(A, [B1 B2], [C1; C2], [[D11 D12], [D21 0]])``."""
        B = np.hstack([self.B1f, self.B2f])
        C = np.vstack([self.C1f, self.C2f])
        D = np.block([[self.D11f, self.D12f],
                      [self.D21f, np.zeros((self.C2f.shape[0], self.m))]])
        return self.Af, B, C, D


@dataclass(frozen=True)
class IoTransforms:
    """Factors of ``-D1 = U1^T [0, S1] V1`` and ``[Dz; -Dz] = U2^T [0; S2] V2``."""

    U1: np.ndarray
    S1: np.ndarray
    V1: np.ndarray
    U2: np.ndarray
    S2: np.ndarray
    V2: np.ndarray

    def u_from_normalized(self, ut):
        return self.V2.T @ np.linalg.solve(self.S2, ut)

    def eps_from_normalized(self, yt):
        return self.U1.T @ self.S1 @ yt

    def w_from_normalized(self, wt):
        return self.V1.T @ wt

    def z_from_normalized(self, zt):
        return self.U2.T @ zt


@dataclass(frozen=True)
class GammaBlocks:
    """All gamma-dependent matrices of the synthesis equations."""

    gamma: float
    Gamma: np.ndarray
    Dcal: np.ndarray
    Rcal: np.ndarray
    Rtil: np.ndarray
    R: np.ndarray
    Rt: np.ndarray
    H11: np.ndarray
    H12: np.ndarray
    H21: np.ndarray
    J11: np.ndarray
    J12: np.ndarray
    J21: np.ndarray


@dataclass(frozen=True)
class HinfSynthesis:
    gamma: float
    Xf: np.ndarray
    Yf: np.ndarray
    Kf: np.ndarray
    Lf: np.ndarray
    hat: dict
    Z: np.ndarray
    blocks: GammaBlocks
    plant: AugmentedPlant
    transforms: IoTransforms
    kf: ControllerRealization
    controller: ControllerRealization
    certificates: dict = field(default_factory=dict)

    def partitions(self):
        p, m, m1 = self.plant.p, self.plant.m, self.plant.m1
        k = self.Kf
        lf = self.Lf
        return {
            "K11f": k[: m1 - p], "K12f": k[m1 - p: m1], "K2f": k[m1:],
            "L11f": lf[:, : 2 * p - m], "L12f": lf[:, 2 * p - m: 2 * p], "L2f": lf[:, 2 * p:],
        }


def build_augmented_plant(plant, K, L, mode="tracked"):
    """Error-system generalized plant for the compensator.

    ``mode`` is ``"tracked"`` (observer on ``y`` with ``C, D1``) or
    ``"three-loop"`` (observer on ``yp`` with ``Cp, Dp1``); the performance
    and residual outputs always use the tracked output.
    """
    use_cp = mode == "three-loop"
    A, B, C = plant.A, plant.B, plant.C
    Cm, _, Dm1, Dm2 = plant.measurement(use_cp)
    n, m, p, m1 = plant.n, plant.m, plant.p, plant.m1
    Acl_k = A + B @ K
    Acl_l = A + L @ Cm
    for name, M in (("A + B K", Acl_k), ("A + L C", Acl_l)):
        if nm.spectral_abscissa(M) >= -nm.HURWITZ_TOL:
            raise NotHurwitz(f"{name} is not Hurwitz")
    Z = np.zeros((n, n))
    Af = np.block([[Acl_k, -L @ Cm], [Z, Acl_l]])
    B1f = np.vstack([-L @ Dm1, plant.B1 + L @ Dm1])
    B2f = np.vstack([B, np.zeros((n, m))])
    C1f = np.block([[C, C], [C, C]])
    C2f = np.hstack([np.zeros((p, n)), -C])
    D11f = np.vstack([plant.D1, plant.D1])
    D12f = np.vstack([plant.Dz, -plant.Dz])
    D21f = -plant.D1
    return AugmentedPlant(Af, B1f, B2f, C1f, C2f, D11f, D12f, D21f, n, m, p, m1)


def normalize_io(plant, aug):
    """Apply the input/output transformations that normalize ``D12``, ``D21``."""
    p, m, m1 = aug.p, aug.m, aug.m1
    if 2 * p < m:
        raise RankDeficient("need 2p >= m for [Dz; -Dz] to have rank m")
    if nm.numerical_rank(plant.D1) != p or m1 < p:
        raise RankDeficient(f"rank(D1) must equal p={p}")
    if nm.numerical_rank(plant.Dz) != m:
        raise RankDeficient(f"rank(Dz) must equal m={m}")
    u, s, vh = np.linalg.svd(-plant.D1)
    U1 = u.T
    S1 = np.diag(s)
    V1 = np.vstack([vh[p:], vh[:p]])
    u2, s2, vh2 = np.linalg.svd(np.vstack([plant.Dz, -plant.Dz]))
    U2 = np.hstack([u2[:, m:], u2[:, :m]]).T
    S2 = np.diag(s2)
    V2 = vh2
    tr = IoTransforms(U1, S1, V1, U2, S2, V2)

    S1i = np.linalg.inv(S1)
    S2i = np.linalg.inv(S2)
    D11f = U2 @ aug.D11f @ V1.T
    # the structurally zero leading block is only zero up to rounding
    D11f[:, : m1 - p] = 0.0
    norm = AugmentedPlant(
        Af=aug.Af,
        B1f=aug.B1f @ V1.T,
        B2f=aug.B2f @ V2.T @ S2i,
        C1f=U2 @ aug.C1f,
        C2f=S1i @ U1 @ aug.C2f,
        D11f=D11f,
        D12f=np.vstack([np.zeros((2 * p - m, m)), np.eye(m)]),
        D21f=np.hstack([np.zeros((p, m1 - p)), np.eye(p)]),
        n=aug.n, m=m, p=p, m1=m1, normalized=True)
    return norm, tr


def sigma_max(M):
    s = nm.singular_values(M)
    return float(s[0]) if s.size else 0.0


def gamma_blocks(aug, gamma):
    """Gamma-dependent synthesis matrices for a normalized plant."""
    n2 = aug.Af.shape[0]
    p, m, m1 = aug.p, aug.m, aug.m1
    D1112, D1122 = aug.D1112, aug.D1122
    g2 = gamma * gamma
    Gam = np.linalg.inv(D1112.T @ D1112 - g2 * np.eye(p))
    Dcal = D1112.T @ D1112 + D1122.T @ D1122
    a, b = m1 - p, 2 * p - m

    Rcal = np.zeros((m1 + m, m1 + m))
    Rcal[:a, :a] = -np.eye(a) / g2
    Rcal[a:m1, a:m1] = Gam
    Rcal[a:m1, m1:] = -Gam @ D1122.T
    Rcal[m1:, a:m1] = -D1122 @ Gam
    Rcal[m1:, m1:] = np.eye(m) + D1122 @ Gam @ D1122.T

    Rtil = np.zeros((3 * p, 3 * p))
    Rtil[:b, :b] = -np.eye(b) / g2
    Rtil[:b, 2 * p:] = D1112 / g2
    Rtil[b:2 * p, b:2 * p] = -np.eye(m) / g2
    Rtil[b:2 * p, 2 * p:] = D1122 / g2
    Rtil[2 * p:, :b] = D1112.T / g2
    Rtil[2 * p:, b:2 * p] = D1122.T / g2
    Rtil[2 * p:, 2 * p:] = np.eye(p) - Dcal / g2

    D1d = np.hstack([aug.D11f, aug.D12f])
    R = D1d.T @ D1d - np.diag(np.r_[np.full(m1, g2), np.zeros(m)])
    Dd1 = np.vstack([aug.D11f, aug.D21f])
    Rt = Dd1 @ Dd1.T - np.diag(np.r_[np.full(2 * p, g2), np.zeros(p)])

    Bf = np.hstack([aug.B1f, aug.B2f])
    M = np.zeros((m1 + m, 2 * p))
    M[a:m1, :b] = -Gam @ D1112.T
    M[m1:, :b] = D1122 @ Gam @ D1112.T
    M[m1:, b:] = -np.eye(m)
    H11 = aug.Af + Bf @ M @ aug.C1f
    H12 = -Bf @ Rcal @ Bf.T
    W = np.zeros((2 * p, 2 * p))
    W[:b, :b] = np.eye(b) - D1112 @ Gam @ D1112.T
    H21 = aug.C1f.T @ W @ aug.C1f

    J11 = aug.Af.T - np.hstack([np.zeros((n2, a)), aug.C2f.T]) @ aug.B1f.T
    Cf = np.vstack([aug.C1f, aug.C2f])
    J12 = -Cf.T @ Rtil @ Cf
    E = np.zeros((m1, m1))
    E[:a, :a] = np.eye(a)
    J21 = aug.B1f @ E @ aug.B1f.T
    return GammaBlocks(gamma, Gam, Dcal, Rcal, Rtil, R, Rt, H11, H12, H21, J11, J12, J21)


def gamma_floor(aug):
    return sigma_max(aug.D1112)


def gamma_feasibility(aug, gamma):
    """Stabilizing ``(Xf, Yf)`` at ``gamma``, or ``None`` when infeasible.

    Raises :class:`GammaTooSmall` for ``gamma <= sigma_max(D1112)``.
    """
    floor = gamma_floor(aug)
    if not gamma > floor:
        raise GammaTooSmall(f"gamma={gamma:g} must exceed sigma_max(D1112)={floor:.6g}")
    blk = gamma_blocks(aug, gamma)
    try:
        X = nm.solve_game_care(blk.H11, blk.H12, blk.H21).P
        Y = nm.solve_game_care(blk.J11, blk.J12, blk.J21).P
    except NoStabilizingSolution as exc:
        log.debug("gamma=%g infeasible: %s", gamma, exc)
        return None
    rho = float(np.max(np.abs(np.linalg.eigvals(X @ Y)))) if X.size else 0.0
    if not rho < gamma * gamma:
        log.debug("gamma=%g infeasible: rho(XY)=%g", gamma, rho)
        return None
    return X, Y


def synthesize_central(aug, transforms, gamma, Xf, Yf):
    """Central (``Xi = 0``) suboptimal controller and its full parameterization."""
    p, m, m1 = aug.p, aug.m, aug.m1
    g2 = gamma * gamma
    blk = gamma_blocks(aug, gamma)
    D1112, D1122 = aug.D1112, aug.D1122

    Kf = -blk.Rcal @ (np.hstack([aug.D11f, aug.D12f]).T @ aug.C1f
                      + np.hstack([aug.B1f, aug.B2f]).T @ Xf)
    Lf = -(aug.B1f @ np.hstack([aug.D11f.T, aug.D21f.T])
           + Yf @ np.hstack([aug.C1f.T, aug.C2f.T])) @ blk.Rtil
    K12f, K2f = Kf[m1 - p: m1], Kf[m1:]
    L12f, L2f = Lf[:, 2 * p - m: 2 * p], Lf[:, 2 * p:]

    D11h = -D1122
    D12h = np.eye(m)
    try:
        D21h = np.linalg.cholesky(np.eye(p) - D1112.T @ D1112 / g2).T
    except np.linalg.LinAlgError:
        raise SingularScaling("I - D1112^T D1112 / gamma^2 is not positive definite") from None
    Zi = np.eye(Xf.shape[0]) - Yf @ Xf / g2
    Z = np.linalg.inv(Zi)

    B2h = (aug.B2f + L12f) @ D12h
    C2h = -D21h @ (aug.C2f + K12f) @ Z
    B1h = -L2f + B2h @ np.linalg.solve(D12h, D11h)
    C1h = K2f @ Z + D11h @ np.linalg.solve(D21h, C2h)
    Ah = aug.Af + Lf @ np.vstack([aug.C1f, aug.C2f]) + B2h @ np.linalg.solve(D12h, C1h)
    hat = {"A": Ah, "B1": B1h, "B2": B2h, "C1": C1h, "C2": C2h,
           "D11": D11h, "D12": D12h, "D21": D21h}

    tr = transforms
    S1iU1 = np.linalg.solve(tr.S1, tr.U1)
    V2tS2i = tr.V2.T @ np.linalg.inv(tr.S2)
    n2 = Ah.shape[0]
    kf = ControllerRealization(
        Ah,
        np.hstack([B1h @ S1iU1, B2h]),
        np.vstack([V2tS2i @ C1h, C2h]),
        np.block([[V2tS2i @ D11h @ S1iU1, V2tS2i @ D12h],
                  [D21h @ S1iU1, np.zeros((p, m))]]),
        (("eps_f", p), ("xi_y", m)), (("u_f", m), ("xi_u", p)),
        (("xf_hat", n2),), "compensator")
    syn = HinfSynthesis(gamma, Xf, Yf, Kf, Lf, hat, Z, blk, aug, tr, kf,
                        lft_close(kf))
    return replace(syn, certificates=certify(syn))


def normalized_controller(syn):
    """Central controller in normalized coordinates as ``(A, B, C, D)``."""
    h = syn.hat
    return h["A"], h["B1"], h["C1"], h["D11"]


def closed_loop_normalized(syn):
    """``w~ -> z~`` closed loop of the normalized plant with the central controller."""
    P = syn.plant.matrices()
    return lft_lower(P, normalized_controller(syn), syn.plant.p, syn.plant.m)


def sweep_frequencies(A, points=SWEEP_POINTS, span=SWEEP_RANGE):
    w = np.logspace(np.log10(span[0]), np.log10(span[1]), points)
    if A.size:
        extra = np.abs(np.linalg.eigvals(A).imag)
        w = np.concatenate([w, extra[extra > 0]])
    return np.unique(w)


def sweep_norm(A, B, C, D, freqs=None):
    """Peak largest singular value over a frequency grid; returns ``(peak, freqs, sv)``."""
    if freqs is None:
        freqs = sweep_frequencies(A)
    n = A.shape[0]
    I = np.eye(n)
    sv = np.empty(freqs.size)
    for i, w in enumerate(freqs):
        G = C @ np.linalg.solve(1j * w * I - A, B) + D if n else D
        sv[i] = np.linalg.svd(np.atleast_2d(G), compute_uv=False)[0]
    return float(sv.max()), freqs, sv


def certify(syn):
    """Numerical certificates for a synthesis (all plain floats)."""
    g = syn.gamma
    blk = syn.blocks
    Acl = closed_loop_normalized(syn)
    peak, freqs, _ = sweep_norm(*Acl)
    Xr = nm.game_care_residual(blk.H11, blk.H12, blk.H21, syn.Xf)
    Yr = nm.game_care_residual(blk.J11, blk.J12, blk.J21, syn.Yf)
    D12h, D21h = syn.hat["D12"], syn.hat["D21"]
    p = syn.plant.p
    return {
        "gamma": g,
        "gamma_floor": gamma_floor(syn.plant),
        "rho_XY": float(np.max(np.abs(np.linalg.eigvals(syn.Xf @ syn.Yf)))),
        "Xf_residual": float(np.linalg.norm(Xr)),
        "Yf_residual": float(np.linalg.norm(Yr)),
        "closed_loop_abscissa": nm.spectral_abscissa(Acl[0]),
        "compensator_abscissa": nm.spectral_abscissa(syn.hat["A"]),
        "swept_norm": peak,
        "sweep_points": int(freqs.size),
        "D12_identity_error": float(np.linalg.norm(D12h @ D12h.T - np.eye(D12h.shape[0]))),
        "D21_identity_error": float(np.linalg.norm(
            D21h.T @ D21h - (np.eye(p) - syn.plant.D1112.T @ syn.plant.D1112 / g ** 2))),
        "Z_identity_error": float(np.linalg.norm(
            syn.Z @ (np.eye(syn.Z.shape[0]) - syn.Yf @ syn.Xf / g ** 2) - np.eye(syn.Z.shape[0]))),
    }


def lft_close(kf, xi=None, gamma=None):
    """Close the free parameter ``Xi`` around the controller family ``kf``.

    ``xi`` is a :class:`ControllerRealization` from ``xi_u`` to ``xi_y`` (or
    ``None`` for the central controller). The result maps ``eps_f`` to ``u_f``.
    """
    if xi is None:
        return kf.select(inputs=["eps_f"], outputs=["u_f"], name=kf.name)
    p = kf.input_dim("eps_f")
    m = kf.output_dim("u_f")
    ie, iy = kf.input_slice("eps_f"), kf.input_slice("xi_y")
    ou, ox = kf.output_slice("u_f"), kf.output_slice("xi_u")
    Ax, Bx, Cx, Dx = xi.matrices()
    Bx = Bx.reshape(Ax.shape[0], p)
    Cx = Cx.reshape(m, Ax.shape[0])
    Dx = Dx.reshape(m, p)
    if Ax.size and nm.spectral_abscissa(Ax) >= -nm.HURWITZ_TOL:
        raise XiUnstable("Xi must be stable")
    if gamma is not None:
        peak = sweep_norm(Ax, Bx, Cx, Dx)[0] if Ax.size else sigma_max(Dx)
        if not peak < gamma:
            raise XiNormTooLarge(f"||Xi|| = {peak:.4g} is not below gamma = {gamma:g}")
    A, B, C, D = kf.matrices()
    if np.any(D[ox, iy]):
        raise ValueError("xi_u must not depend on xi_y directly")
    Be, By = B[:, ie], B[:, iy]
    Cu, Cxu = C[ou], C[ox]
    Due, Duy = D[ou, ie], D[ou, iy]
    Dxe = D[ox, ie]
    nk, nx = A.shape[0], Ax.shape[0]
    Acl = np.block([[A + By @ Dx @ Cxu, By @ Cx],
                    [Bx @ Cxu, Ax]])
    Bcl = np.vstack([Be + By @ Dx @ Dxe, Bx @ Dxe])
    Ccl = np.hstack([Cu + Duy @ Dx @ Cxu, Duy @ Cx])
    Dcl = Due + Duy @ Dx @ Dxe
    states = (("xf_hat", nk),) + ((("xi", nx),) if nx else ())
    return ControllerRealization(Acl, Bcl, Ccl, Dcl, (("eps_f", p),), (("u_f", m),),
                                 states, kf.name)


def gamma_bisection(aug, transforms, lo, hi, tol=1e-3, check_monotone=True):
    """Smallest feasible gamma in ``[lo, hi]`` to relative tolerance ``tol``.

    Returns ``(gamma_star, synthesis)`` with the synthesis built at
    ``gamma_star * (1 + tol)``. Raises :class:`HiInfeasible` if ``hi`` fails.
    """
    floor = gamma_floor(aug) * (1 + 1e-6)
    lo = max(lo, floor)
    if hi < lo:
        raise HiInfeasible(f"hi={hi:g} is below the gamma floor {lo:g}")
    if gamma_feasibility(aug, hi) is None:
        raise HiInfeasible(f"gamma={hi:g} is infeasible")
    if lo == hi:
        g_star = hi
    else:
        lo_ok = gamma_feasibility(aug, lo) is not None
        if lo_ok:
            g_star = lo
        else:
            a, b = lo, hi
            while (b - a) > tol * b:
                mid = np.sqrt(a * b) if a > 0 else (a + b) / 2
                if gamma_feasibility(aug, mid) is not None:
                    if check_monotone and 2 * mid <= hi:
                        assert gamma_feasibility(aug, 2 * mid) is not None, \
                            f"feasibility not monotone at gamma={mid:g}"
                    b = mid
                else:
                    a = mid
            g_star = b
    g_use = g_star * (1 + tol)
    sol = gamma_feasibility(aug, g_use)
    if sol is None:
        g_use = g_star
        sol = gamma_feasibility(aug, g_use)
    return float(g_star), synthesize_central(aug, transforms, g_use, *sol)
