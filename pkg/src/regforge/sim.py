"""Closed-loop assembly, exact zero-order-hold simulation and power norms."""

import csv
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from . import numerics as nm
from .errors import Diverged, EmptyWindow, WiringError
from .systems import ControllerRealization, interconnect, static_block

DIVERGENCE_LIMIT = 1e9
DEFAULT_DISCARD = 0.2
CHUNK = 1 << 15

# channels every closed loop exposes, in trace/CSV order
CHANNELS = ("r", "y", "e", "z", "eps_f", "u", "u_p", "u_t", "u_f", "w0", "w1", "w2")


@dataclass(frozen=True)
class ClosedLoop:
    """One LTI realization of plant, exosystems and all controller loops.

    ``x' = A x + B w``, ``s = C x + D w`` where ``w = [w0; w1]`` and ``s``
    stacks the labelled signals in ``signals``. The exosystem states sit in
    ``x`` too; their initial values carry the reference and the modeled
    disturbance.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    external: tuple
    signals: tuple
    states: tuple
    x0: np.ndarray
    exo_states: tuple = ()
    mode: str = ""
    ablated: bool = False

    @property
    def n_states(self):
        return self.A.shape[0]

    def _slice(self, ports, name):
        start = 0
        for n, d in ports:
            if n == name:
                return slice(start, start + d)
            start += d
        raise KeyError(name)

    def signal_slice(self, name):
        return self._slice(self.signals, name)

    def state_slice(self, name):
        return self._slice(self.states, name)

    def input_slice(self, name):
        return self._slice(self.external, name)

    def has_signal(self, name):
        return any(n == name for n, _ in self.signals)

    def input_dim(self, name):
        return dict(self.external).get(name, 0)

    def autonomous_abscissa(self):
        """Spectral abscissa with the (marginally stable) exosystem states removed."""
        keep = np.ones(self.n_states, bool)
        for name in self.exo_states:
            keep[self.state_slice(name)] = False
        return nm.spectral_abscissa(self.A[np.ix_(keep, keep)])

    def with_initial_state(self, **blocks):
        """Copy with some state blocks' initial values replaced (``plant.x=...``)."""
        x0 = self.x0.copy()
        for name, val in blocks.items():
            name = name.replace("__", ".")
            x0[self.state_slice(name)] = np.asarray(val, float).reshape(-1)
        return replace(self, x0=x0)


def plant_block(plant):
    """The plant as a labelled block with inputs ``u, w0, w1, w2``."""
    B = np.hstack([plant.B, plant.B0, plant.B1, plant.B2])
    Cs = [plant.C]
    Ds = [np.hstack([np.zeros((plant.p, plant.m)), plant.D0, plant.D1, plant.D2])]
    outputs = [("y", plant.p)]
    if plant.q:
        Cs.append(plant.Cp)
        Ds.append(np.hstack([np.zeros((plant.q, plant.m)), plant.Dp0, plant.Dp1, plant.Dp2]))
        outputs.append(("yp", plant.q))
    inputs = (("u", plant.m), ("w0", plant.m0), ("w1", plant.m1), ("w2", plant.m2))
    return ControllerRealization(plant.A, B, np.vstack(Cs), np.vstack(Ds), inputs,
                                 tuple(outputs), (("x", plant.n),), "plant")


def exo_block(exo, output, name):
    return ControllerRealization(exo.A, np.zeros((exo.k, 0)), exo.C, np.zeros((exo.r, 0)),
                                 (), ((output, exo.r),), (("x", exo.k),), name)


def assemble_closed_loop(plant, controllers, ref, dist=None, mode="", ablate=False):
    """Wire plant, exosystems and controllers into a :class:`ClosedLoop`.

    ``controllers`` holds the regulation controller (outputs ``u_t``,
    optionally ``u_p``, and ``y_pred``) and optionally the compensator
    (``eps_f -> u_f``). With ``ablate=True`` or no compensator, ``u_f`` is
    held at zero. Raises :class:`WiringError` on unresolved or duplicated
    labels.
    """
    regs = [c for c in controllers if "u_t" in c.output_labels]
    comps = [c for c in controllers if "u_f" in c.output_labels]
    if len(regs) != 1 or len(comps) > 1 or len(regs) + len(comps) != len(controllers):
        raise WiringError("expected one regulation controller and at most one compensator")
    reg = regs[0]
    m, p = plant.m, plant.p
    has_up = "u_p" in reg.output_labels
    use_comp = bool(comps) and not ablate

    blocks = [plant_block(plant), exo_block(ref, "r", "reference")]
    exo_states = ["reference.x"]
    zero = []
    if dist is not None and dist.k:
        blocks.append(exo_block(dist, "w2", "disturbance"))
        exo_states.append("disturbance.x")
    else:
        zero.append(("w2", plant.m2))
    blocks.append(static_block(np.hstack([np.eye(p), -np.eye(p)]),
                               (("y", p), ("r", p)), (("e", p),), "error"))
    sum_in = ([("u_p", m)] if has_up else []) + [("u_t", m), ("u_f", m)]
    blocks.append(static_block(np.hstack([np.eye(m)] * len(sum_in)), tuple(sum_in),
                               (("u", m),), "sum"))
    blocks.append(static_block(np.hstack([np.eye(p), -np.eye(p)]),
                               (("y_pred", p), ("e", p)), (("eps_f", p),), "residual"))
    Dz = plant.Dz
    blocks.append(static_block(np.block([[np.eye(p), Dz], [np.eye(p), -Dz]]),
                               (("e", p), ("u_f", m)), (("z", 2 * p),), "performance"))
    blocks.append(reg)
    if use_comp:
        blocks.append(comps[0])
    else:
        zero.append(("u_f", m))
    if not has_up:
        zero.append(("u_p", m))
    external = (("w0", plant.m0), ("w1", plant.m1))
    ic = interconnect(blocks, external=external,
                      zero_signals=tuple(z for z in zero if z[0] in ("w2", "u_f")))

    # append zero rows for absent signals so every closed loop exposes CHANNELS
    A, B, C, D = ic.A, ic.B, ic.C, ic.D
    signals = list(ic.signals)
    names = {n for n, _ in signals}
    for name, dim in zero:
        if name not in names:
            signals.append((name, dim))
            C = np.vstack([C, np.zeros((dim, A.shape[0]))])
            D = np.vstack([D, np.zeros((dim, B.shape[1]))])
    x0 = np.zeros(A.shape[0])
    cl = ClosedLoop(A, B, C, D, ic.external, tuple(signals), ic.states, x0,
                    tuple(exo_states), mode, ablate or not comps)
    cl = cl.with_initial_state(reference__x=ref.x0)
    if dist is not None and dist.k:
        cl = cl.with_initial_state(disturbance__x=dist.x0)
    return cl


# ---------------------------------------------------------------------------
# simulation

@dataclass
class SimTrace:
    """Sampled closed-loop signals on ``t = k dt``, ``k = 0..N``."""

    dt: float
    horizon: float
    t: np.ndarray
    channels: dict
    seed: object = None
    scenario: str = ""
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.channels[name]

    def power(self, name, discard=DEFAULT_DISCARD):
        """Power norm of a channel by the left rectangle rule on ``[discard T, T]``."""
        return power_norm(self.channels[name][:-1], discard)

    def steady_max(self, name, discard=DEFAULT_DISCARD):
        x = self.channels[name]
        k0 = int(np.floor(discard * (x.shape[0] - 1)))
        return float(np.max(np.abs(x[k0:]))) if x[k0:].size else 0.0

    def to_csv(self, names=None):
        names = list(self.channels) if names is None else list(names)
        header = ["t"]
        cols = [self.t[:, None]]
        for nme in names:
            x = self.channels[nme]
            if x.shape[1] == 1:
                header.append(nme)
            else:
                header += [f"{nme}[{i}]" for i in range(x.shape[1])]
            cols.append(x)
        data = np.hstack(cols)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in data:
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def zoh(A, B, dt):
    """Exact zero-order-hold pair ``(Ad, Bd)`` from ``expm([[A, B], [0, 0]] dt)``."""
    n, m = B.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    E = sla.expm(M * dt)
    return E[:n, :n], E[:n, n:]


def _lifted(Ad, Bd, L):
    """Powers ``Ad^1..Ad^L`` and the block-Toeplitz input map for ``L`` steps."""
    n, m = Bd.shape
    P = np.empty((L + 1, n, n))
    P[0] = np.eye(n)
    for j in range(1, L + 1):
        P[j] = Ad @ P[j - 1]
    G = np.einsum("jab,bc->jac", P[:L], Bd)  # Ad^j Bd
    T = np.zeros((L * n, L * m))
    for i in range(L):  # state i+1 of the block
        for l in range(i + 1):
            T[i * n:(i + 1) * n, l * m:(l + 1) * m] = G[i - l]
    return P, T


class _Propagator:
    """Exact discrete recursion ``x+ = Ad x + Bd w`` evaluated block-wise.

    Within a block of ``L`` steps the forced response is one matrix product;
    only the block boundary states are carried sequentially.
    """

    def __init__(self, Ad, Bd):
        self.Ad, self.Bd = Ad, Bd
        n, m = Bd.shape
        budget = 2_000_000
        L = int(np.sqrt(budget / max(1, n * max(m, 1))))
        self.L = int(min(256, max(1, L)))
        self.P, self.T = _lifted(Ad, Bd, self.L)

    def run(self, x0, W):
        """States ``x_1..x_N`` for inputs ``W`` (N x m) held over each step."""
        N = W.shape[0]
        n, m = self.Bd.shape
        L = self.L
        nb = -(-N // L)
        pad = nb * L - N
        if m:
            Wp = np.vstack([W, np.zeros((pad, m))]) if pad else W
            F = (Wp.reshape(nb, L * m) @ self.T.T).reshape(nb, L, n)
        else:
            F = np.zeros((nb, L, n))
        X = np.empty((nb, L, n))
        PL = self.P[1:]  # (L, n, n)
        s = np.asarray(x0, float)
        for b in range(nb):
            X[b] = PL @ s + F[b]
            s = X[b, -1]
        return X.reshape(nb * L, n)[:N]


def simulate(cl, profiles=None, noise=None, dt=1e-3, horizon=10.0, channels=None,
             scenario="", record_states=False):
    """Simulate ``cl`` under exact zero-order hold.

    ``profiles`` maps ``"w1"`` to a :class:`DisturbanceProfile` (absent means
    zero). ``noise`` is ``None`` (off) or an integer seed; ``w0`` is then
    Gaussian with covariance ``I/dt`` per step, the sampled counterpart of
    unit-intensity white noise. Inputs are held over ``[t_k, t_k+1)`` and each
    output sample uses the input of the step it starts. Raises
    :class:`Diverged` with the first time any state exceeds ``1e9``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not horizon >= dt:
        raise ValueError("horizon must be at least dt")
    profiles = profiles or {}
    N = int(round(horizon / dt))
    names = [n for n, _ in cl.signals if n in CHANNELS] if channels is None else list(channels)
    m0, m1 = cl.input_dim("w0"), cl.input_dim("w1")
    prof = profiles.get("w1")
    if prof is not None:
        prof.check_rate(dt)
    Ad, Bd = zoh(cl.A, cl.B, dt)
    prop = _Propagator(Ad, Bd)
    rng = np.random.default_rng(noise) if noise is not None else None
    sl = {nme: cl.signal_slice(nme) for nme in names}
    out = {nme: np.empty((N + 1, sl[nme].stop - sl[nme].start)) for nme in names}
    xs = np.empty((N + 1, cl.n_states)) if record_states else None
    w0s = cl.input_slice("w0") if m0 else slice(0, 0)
    w1s = cl.input_slice("w1") if m1 else slice(0, 0)
    nw = cl.B.shape[1]
    x = cl.x0.astype(float)
    k = 0
    while k <= N:
        kn = min(N + 1, k + CHUNK)
        tk = np.arange(k, kn) * dt
        W = np.zeros((kn - k, nw))
        if rng is not None and m0:
            W[:, w0s] = rng.standard_normal((kn - k, m0)) / np.sqrt(dt)
        if prof is not None and m1:
            W[:, w1s] = prof.evaluate(tk, m1)
        # states x_k .. x_{kn-1}
        X = np.empty((kn - k, cl.n_states))
        X[0] = x
        if kn - k > 1:
            X[1:] = prop.run(x, W[:-1])
        big = np.abs(X) > DIVERGENCE_LIMIT
        if np.any(big) or not np.all(np.isfinite(X)):
            bad = np.flatnonzero(np.any(big | ~np.isfinite(X), axis=1))[0]
            t_bad = float((k + bad) * dt)
            raise Diverged(f"state magnitude exceeded {DIVERGENCE_LIMIT:g} at t = {t_bad:g}",
                           t_bad)
        S = X @ cl.C.T + W @ cl.D.T
        for nme in names:
            out[nme][k:kn] = S[:, sl[nme]]
        if xs is not None:
            xs[k:kn] = X
        if kn <= N:
            x = Ad @ X[-1] + Bd @ W[-1]
        k = kn
    if xs is not None:
        out["x"] = xs
    t = np.arange(N + 1) * dt
    meta = {"mode": cl.mode, "ablated": cl.ablated}
    return SimTrace(dt, N * dt, t, out, noise, scenario, meta)


# ---------------------------------------------------------------------------
# power norm and bound verification

def power_norm(x, discard=DEFAULT_DISCARD):
    """``sqrt`` of the mean squared norm of the samples after the first ``discard`` fraction.

    ``x`` is ``(N,)`` or ``(N, dim)``. Raises :class:`EmptyWindow` when
    nothing is left.
    """
    x = np.asarray(x, float)
    if x.ndim == 1:
        x = x[:, None]
    if not 0 <= discard < 1:
        raise ValueError("discard must lie in [0, 1)")
    k0 = int(np.floor(discard * x.shape[0]))
    w = x[k0:]
    if w.shape[0] == 0:
        raise EmptyWindow("no samples after the transient discard")
    return float(np.sqrt(np.mean(np.sum(w * w, axis=1))))


@dataclass(frozen=True)
class BoundReport:
    gamma: float
    e_power: float
    z_power: float
    w1_power: float
    ratio: object
    e_ratio: object
    gamma_margin: object
    predicted: object = None
    predicted_noise: object = None
    relative_error: object = None
    flags: dict = field(default_factory=dict)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def verify_bound(trace, gamma, budget=None, discard=DEFAULT_DISCARD, w1_floor=1e-12,
                 e_floor=1e-6, noise_tol=0.15):
    """Measured power norms against the attenuation level and noise budget.

    ``gamma`` may be ``None`` for designs without a compensator. The noise
    prediction is ``sqrt(budget^2 + gamma^2 ||w1||_P^2)``; it is flagged
    against the measured ``||e||_P`` with relative tolerance ``noise_tol``:
    two-sided when ``w1`` is absent, as an upper bound otherwise (the
    attenuation level bounds the worst case, not the typical one).
    """
    e = trace.power("e", discard)
    z = trace.power("z", discard)
    w1 = trace.power("w1", discard) if trace["w1"].shape[1] else 0.0
    ratio = z / w1 if w1 > w1_floor else None
    e_ratio = e / w1 if w1 > w1_floor else None
    flags = {"z_dominates_e": bool(z * z >= e * e * (1 - 1e-9))}
    if ratio is not None and gamma is not None:
        flags["attenuation"] = bool(ratio < gamma)
    elif ratio is None and budget is None:
        flags["error_floor"] = bool(e < e_floor)
    predicted = predicted_noise = rel = None
    if budget is not None:
        predicted_noise = budget.predicted_error_power
        predicted = budget.combined(gamma or 0.0, w1)
        rel = abs(e - predicted) / predicted if predicted > 0 else None
        if ratio is None:
            flags["noise_budget"] = bool(rel is not None and rel <= noise_tol)
        else:
            flags["noise_bound"] = bool(e <= predicted * (1 + noise_tol))
    margin = gamma - ratio if ratio is not None and gamma is not None else None
    return BoundReport(None if gamma is None else float(gamma), e, z, w1, ratio, e_ratio,
                       margin, predicted, predicted_noise, rel, flags)
