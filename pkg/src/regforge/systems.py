"""Labelled state-space blocks and their feedback interconnection."""

from dataclasses import dataclass

import numpy as np

from .errors import WiringError


def _labels(spec):
    out = tuple((str(name), int(dim)) for name, dim in spec)
    names = [n for n, _ in out]
    if len(set(names)) != len(names):
        raise WiringError(f"duplicate labels in {names}")
    return out


@dataclass(frozen=True)
class ControllerRealization:
    """State-space block ``x' = A x + B u``, ``y = C x + D u`` with named ports.

    ``inputs``, ``outputs`` and ``states`` are ordered ``(name, dim)`` pairs;
    the matrices are partitioned conformably in that order.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    inputs: tuple
    outputs: tuple
    states: tuple = ()
    name: str = ""

    def __post_init__(self):
        ins, outs = _labels(self.inputs), _labels(self.outputs)
        nx = sum(d for _, d in self.states) if self.states else np.shape(self.A)[0]
        states = _labels(self.states) if self.states else ((self.name or "x", nx),) if nx else ()
        nu, ny = sum(d for _, d in ins), sum(d for _, d in outs)
        A = np.asarray(self.A, float).reshape(nx, nx)
        B = np.asarray(self.B, float).reshape(nx, nu)
        C = np.asarray(self.C, float).reshape(ny, nx)
        D = np.asarray(self.D, float).reshape(ny, nu)
        for k, v in dict(A=A, B=B, C=C, D=D, inputs=ins, outputs=outs, states=states).items():
            object.__setattr__(self, k, v)

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def input_labels(self):
        return [n for n, _ in self.inputs]

    @property
    def output_labels(self):
        return [n for n, _ in self.outputs]

    def input_dim(self, name):
        return dict(self.inputs)[name]

    def output_dim(self, name):
        return dict(self.outputs)[name]

    def _slice(self, ports, name):
        start = 0
        for n, d in ports:
            if n == name:
                return slice(start, start + d)
            start += d
        raise KeyError(name)

    def input_slice(self, name):
        return self._slice(self.inputs, name)

    def output_slice(self, name):
        return self._slice(self.outputs, name)

    def state_slice(self, name):
        return self._slice(self.states, name)

    def select(self, inputs=None, outputs=None, name=None):
        """Sub-block keeping only the listed ports (in the given order)."""
        inputs = self.input_labels if inputs is None else list(inputs)
        outputs = self.output_labels if outputs is None else list(outputs)
        ci = np.concatenate([np.arange(self.B.shape[1])[self.input_slice(k)] for k in inputs]
                            ) if inputs else np.zeros(0, int)
        ro = np.concatenate([np.arange(self.C.shape[0])[self.output_slice(k)] for k in outputs]
                            ) if outputs else np.zeros(0, int)
        return ControllerRealization(
            self.A, self.B[:, ci], self.C[ro], self.D[np.ix_(ro, ci)],
            tuple((k, self.input_dim(k)) for k in inputs),
            tuple((k, self.output_dim(k)) for k in outputs),
            self.states, name or self.name)

    def frequency_response(self, w):
        n = self.n_states
        if n == 0:
            return self.D.astype(complex)
        return self.C @ np.linalg.solve(1j * w * np.eye(n) - self.A, self.B) + self.D

    def matrices(self):
        return self.A, self.B, self.C, self.D


def static_block(D, inputs, outputs, name=""):
    D = np.atleast_2d(np.asarray(D, float))
    return ControllerRealization(np.zeros((0, 0)), np.zeros((0, D.shape[1])),
                                 np.zeros((D.shape[0], 0)), D, inputs, outputs, (), name)


@dataclass(frozen=True)
class Interconnection:
    """Result of :func:`interconnect`.

    ``x' = A x + B w`` and ``s = C x + D w`` where ``w`` stacks the external
    inputs and ``s`` stacks every block output followed by the external
    inputs (so they can be recorded too).
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    external: tuple
    signals: tuple
    states: tuple

    def signal_slice(self, name):
        start = 0
        for n, d in self.signals:
            if n == name:
                return slice(start, start + d)
            start += d
        raise KeyError(name)

    def state_slice(self, name):
        start = 0
        for n, d in self.states:
            if n == name:
                return slice(start, start + d)
            start += d
        raise KeyError(name)

    def input_slice(self, name):
        start = 0
        for n, d in self.external:
            if n == name:
                return slice(start, start + d)
            start += d
        raise KeyError(name)


def interconnect(blocks, external=(), zero_signals=()):
    """Close the loops between ``blocks`` by matching port names.

    Every block input must be produced by exactly one block output, be listed
    in ``external``, or be listed in ``zero_signals`` (held at zero). Algebraic
    loops through feedthrough terms are solved exactly.
    """
    external = _labels(external)
    zero_signals = _labels(zero_signals)
    producers = {}
    sig_order = []
    for bi, blk in enumerate(blocks):
        for name, dim in blk.outputs:
            if name in producers:
                raise WiringError(f"signal {name!r} produced twice")
            producers[name] = (bi, dim)
            sig_order.append((name, dim))
    ext_dims = dict(external)
    zero_dims = dict(zero_signals)
    for name in ext_dims:
        if name in producers:
            raise WiringError(f"signal {name!r} is both external and produced")

    s_off, off = {}, 0
    for name, dim in sig_order:
        s_off[name] = off
        off += dim
    ns = off
    w_off, off = {}, 0
    for name, dim in external:
        w_off[name] = off
        off += dim
    nw = off

    x_off, nx, states = [], 0, []
    for blk in blocks:
        x_off.append(nx)
        nx += blk.n_states
        prefix = blk.name + "." if blk.name else ""
        states += [(prefix + n, d) for n, d in blk.states]

    nin = sum(blk.B.shape[1] for blk in blocks)
    M = np.zeros((nin, ns))
    N = np.zeros((nin, nw))
    Ablk = np.zeros((nx, nx))
    Bblk = np.zeros((nx, nin))
    Cblk = np.zeros((ns, nx))
    Dblk = np.zeros((ns, nin))
    row = 0
    for bi, blk in enumerate(blocks):
        xs = slice(x_off[bi], x_off[bi] + blk.n_states)
        ins = slice(row, row + blk.B.shape[1])
        Ablk[xs, xs] = blk.A
        Bblk[xs, ins] = blk.B
        for name, dim in blk.outputs:
            o = blk.output_slice(name)
            so = slice(s_off[name], s_off[name] + dim)
            Cblk[so, xs] = blk.C[o]
            Dblk[so, ins] = blk.D[o]
        for name, dim in blk.inputs:
            r = slice(row + blk.input_slice(name).start, row + blk.input_slice(name).stop)
            if name in producers:
                if producers[name][1] != dim:
                    raise WiringError(f"signal {name!r}: dimension {producers[name][1]} != {dim}")
                M[r, s_off[name]:s_off[name] + dim] = np.eye(dim)
            elif name in ext_dims:
                if ext_dims[name] != dim:
                    raise WiringError(f"external {name!r}: dimension {ext_dims[name]} != {dim}")
                N[r, w_off[name]:w_off[name] + dim] = np.eye(dim)
            elif name in zero_dims:
                if zero_dims[name] != dim:
                    raise WiringError(f"zero signal {name!r}: dimension mismatch")
            else:
                raise WiringError(f"input {name!r} of block {blk.name!r} is not wired")
        row += blk.B.shape[1]

    loop = np.eye(ns) - Dblk @ M
    if np.linalg.cond(loop) > 1e12:
        raise WiringError("ill-posed algebraic loop")
    F = np.linalg.solve(loop, Cblk)
    G = np.linalg.solve(loop, Dblk @ N)
    A = Ablk + Bblk @ M @ F
    B = Bblk @ (M @ G + N)
    C = np.vstack([F, np.zeros((nw, nx))])
    D = np.vstack([G, np.eye(nw)])
    signals = tuple(sig_order) + tuple(external)
    return Interconnection(A, B, C, D, external, signals, tuple(states))


def lft_lower(P, K, n_meas, n_ctrl):
    """Lower LFT of plant ``P`` (last ``n_meas`` outputs / ``n_ctrl`` inputs)
    with controller ``K``. Returns ``(A, B, C, D)`` of the closed loop."""
    A, B, C, D = P
    Ak, Bk, Ck, Dk = K
    nz = C.shape[0] - n_meas
    nw = B.shape[1] - n_ctrl
    B1, B2 = B[:, :nw], B[:, nw:]
    C1, C2 = C[:nz], C[nz:]
    D11, D12 = D[:nz, :nw], D[:nz, nw:]
    D21, D22 = D[nz:, :nw], D[nz:, nw:]
    Iu = np.eye(n_ctrl) - Dk @ D22
    Iy = np.eye(n_meas) - D22 @ Dk
    Ui = np.linalg.inv(Iu)
    Yi = np.linalg.inv(Iy)
    Acl = np.block([
        [A + B2 @ Ui @ Dk @ C2, B2 @ Ui @ Ck],
        [Bk @ Yi @ C2, Ak + Bk @ Yi @ D22 @ Ck],
    ])
    Bcl = np.vstack([B1 + B2 @ Ui @ Dk @ D21, Bk @ Yi @ D21])
    Ccl = np.hstack([C1 + D12 @ Ui @ Dk @ C2, D12 @ Ui @ Ck])
    Dcl = D11 + D12 @ Ui @ Dk @ D21
    return Acl, Bcl, Ccl, Dcl
