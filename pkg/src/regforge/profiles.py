"""Deterministic disturbance profiles for the unmodeled input ``w1``."""

from dataclasses import dataclass, field

import numpy as np

KINDS = ("zero", "sinusoid", "piecewise", "sampled")


@dataclass(frozen=True)
class DisturbanceProfile:
    """A bounded, deterministic signal driving one input channel.

    ``kind`` selects how ``params`` is read:

    ``zero``        no parameters
    ``sinusoid``    ``amplitudes`` (terms x dim), ``frequencies`` [rad/s],
                    ``phases`` [rad]; value is ``sum_k a_k sin(w_k t + phi_k)``
    ``piecewise``   ``times`` (increasing) and ``values`` (len(times) x dim),
                    held from each time until the next
    ``sampled``     ``dt`` and ``samples`` (N x dim), zero-order hold; zero
                    after the last sample
    """

    kind: str = "zero"
    channel: str = "w1"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        p = self.params
        if self.kind == "sinusoid":
            freqs = np.atleast_1d(np.asarray(p["frequencies"], dtype=float))
            amps = np.asarray(p["amplitudes"], dtype=float)
            if amps.ndim == 1:
                amps = amps[:, None]
            phases = np.atleast_1d(np.asarray(p.get("phases", np.zeros(len(freqs))), float))
            if amps.shape[0] != freqs.size or phases.size != freqs.size:
                raise ValueError("sinusoid profile: amplitudes/frequencies/phases disagree")
            arrays = (freqs, amps, phases)
        elif self.kind == "piecewise":
            times = np.asarray(p["times"], dtype=float)
            values = np.asarray(p["values"], dtype=float)
            if values.ndim == 1:
                values = values[:, None]
            if values.shape[0] != times.size or np.any(np.diff(times) <= 0):
                raise ValueError("piecewise profile: times must increase and match values")
            arrays = (times, values)
        elif self.kind == "sampled":
            samples = np.asarray(p["samples"], dtype=float)
            if samples.ndim == 1:
                samples = samples[:, None]
            if float(p["dt"]) <= 0:
                raise ValueError("sampled profile: dt must be positive")
            arrays = (samples,)
        else:
            arrays = ()
        for a in arrays:
            if not np.all(np.isfinite(a)):
                raise ValueError("profile parameters must be finite")

    def evaluate(self, t, dim):
        """Values at times ``t`` as an array of shape ``(len(t), dim)``."""
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.kind == "zero":
            return np.zeros((t.size, dim))
        if self.kind == "sinusoid":
            freqs = np.atleast_1d(np.asarray(p["frequencies"], float))
            amps = np.asarray(p["amplitudes"], float)
            if amps.ndim == 1:
                amps = amps[:, None]
            phases = np.atleast_1d(np.asarray(p.get("phases", np.zeros(freqs.size)), float))
            s = np.sin(np.outer(t, freqs) + phases)
            return np.broadcast_to(s @ amps, (t.size, dim)).copy()
        if self.kind == "piecewise":
            times = np.asarray(p["times"], float)
            values = np.asarray(p["values"], float)
            if values.ndim == 1:
                values = values[:, None]
            idx = np.searchsorted(times, t, side="right") - 1
            out = np.zeros((t.size, values.shape[1]))
            ok = idx >= 0
            out[ok] = values[idx[ok]]
            return np.broadcast_to(out, (t.size, dim)).copy()
        samples = np.asarray(p["samples"], float)
        if samples.ndim == 1:
            samples = samples[:, None]
        idx = np.floor(t / float(p["dt"]) + 1e-9).astype(int)
        out = np.zeros((t.size, samples.shape[1]))
        ok = idx < samples.shape[0]
        out[ok] = samples[idx[ok]]
        return np.broadcast_to(out, (t.size, dim)).copy()

    def check_rate(self, dt):
        if self.kind != "sampled":
            return
        ratio = float(self.params["dt"]) / dt
        if ratio < 1 - 1e-9 or abs(ratio - round(ratio)) > 1e-6 * ratio:
            raise ValueError(
                f"sampled profile dt={self.params['dt']} is not a multiple of step {dt}")

    def scaled(self, factor):
        p = dict(self.params)
        key = {"sinusoid": "amplitudes", "piecewise": "values", "sampled": "samples"}.get(self.kind)
        if key:
            p[key] = (np.asarray(p[key], float) * factor).tolist()
        return DisturbanceProfile(self.kind, self.channel, p)

    def to_dict(self):
        out = {"kind": self.kind}
        for k, v in self.params.items():
            out[k] = np.asarray(v).tolist() if not np.isscalar(v) else v
        return out

    @classmethod
    def from_dict(cls, d, channel="w1"):
        d = dict(d)
        kind = d.pop("kind", "zero")
        return cls(kind, channel, d)


def sinusoid(amplitude, frequency, phase=0.0, channel="w1"):
    """Single-tone profile with the same amplitude on every component."""
    return DisturbanceProfile("sinusoid", channel, {
        "amplitudes": [amplitude], "frequencies": [frequency], "phases": [phase]})
