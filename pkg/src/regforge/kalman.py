"""Kalman stabilization-loop gain and the noise-induced tracking-error budget."""

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import NotHurwitz, SingularNoise


@dataclass(frozen=True)
class NoisePowerBudget:
    """Steady-state covariances and the predicted power norm of ``e``.

    ``P1`` is the estimation-error covariance (filter Riccati solution) and
    ``P2`` the covariance of the regulation error ``xhat - X xr`` driven by the
    innovations. ``predicted_error_power`` is
    ``sqrt(tr(C (P1 + P2) C^T + D0 D0^T))``.
    """

    P1: np.ndarray
    P2: np.ndarray
    C: np.ndarray
    D0: np.ndarray

    @property
    def predicted_error_power(self):
        S = self.C @ (self.P1 + self.P2) @ self.C.T + self.D0 @ self.D0.T
        return float(np.sqrt(max(np.trace(S), 0.0)))

    @property
    def state_part(self):
        """``sqrt(tr(C (P1 + P2) C^T))``, the contribution carried by the state."""
        return float(np.sqrt(max(np.trace(self.C @ (self.P1 + self.P2) @ self.C.T), 0.0)))

    def combined(self, gamma, w1_power):
        """Noise budget combined with the H-infinity bound on ``w1``."""
        return float(np.sqrt(self.predicted_error_power ** 2 + (gamma * w1_power) ** 2))


def design_kalman_gain(A, B0, Cmeas, D0meas):
    """Stationary Kalman gain for ``x' = A x + B0 w0``, ``y = Cmeas x + D0meas w0``.

    Returns ``(L, P1)`` with ``L = -(B0 D0^T + P1 C^T) R0^{-1}``, ``R0 = D0 D0^T``
    and ``P1`` the stabilizing solution of the filter Riccati equation after
    removing the noise correlation.
    """
    A = nm.as_matrix(A, "A")
    n = A.shape[0]
    B0 = nm.as_matrix(B0, "B0", shape=(n, None))
    Cmeas = nm.as_matrix(Cmeas, "Cmeas", shape=(None, n))
    D0 = nm.as_matrix(D0meas, "D0meas", shape=(Cmeas.shape[0], B0.shape[1]))
    R0 = D0 @ D0.T
    if R0.size == 0 or nm.numerical_rank(D0) < D0.shape[0]:
        raise SingularNoise("D0 D0^T is singular")
    R0i = np.linalg.inv(R0)
    A0 = A - B0 @ D0.T @ R0i @ Cmeas
    Q0 = nm.symmetrize(B0 @ (np.eye(B0.shape[1]) - D0.T @ R0i @ D0) @ B0.T)
    sol = nm.solve_care(A0.T, Cmeas.T, Q0, R0)
    P1 = sol.P
    L = -(B0 @ D0.T + P1 @ Cmeas.T) @ R0i
    if nm.spectral_abscissa(A + L @ Cmeas) >= -nm.HURWITZ_TOL:
        raise NotHurwitz("A + L C is not Hurwitz")
    return L, P1


def filter_lyapunov_residual(A, B0, Cmeas, D0meas, L, P1):
    """Residual of ``(A+LC)P1 + P1(A+LC)^T + (B0+LD0)(B0+LD0)^T``."""
    Acl = A + L @ Cmeas
    G = B0 + L @ D0meas
    return Acl @ P1 + P1 @ Acl.T + G @ G.T


def predict_noise_error_power(plant, K, L, P1=None, use_cp=False, B0=None, D0meas=None):
    """Noise-only tracking-error budget for feedback ``K`` and observer ``L``.

    Pass the filter Riccati solution as ``P1`` when ``L`` is the Kalman gain.
    Without it, ``P1`` is taken from the Lyapunov form of the filter identity
    in ``A + L C``, which is valid for any stabilizing ``L``.
    ``P2`` solves ``(A + B K) P2 + P2 (A + B K)^T + L R0 L^T = 0``.
    """
    A, B = plant.A, plant.B
    Cm, Dm0, _, _ = plant.measurement(use_cp)
    B0 = plant.B0 if B0 is None else nm.as_matrix(B0, "B0")
    Dm0 = Dm0 if D0meas is None else nm.as_matrix(D0meas, "D0meas")
    Acl_k = A + B @ K
    Acl_l = A + L @ Cm
    for name, M in (("A + B K", Acl_k), ("A + L C", Acl_l)):
        if nm.spectral_abscissa(M) >= -nm.HURWITZ_TOL:
            raise NotHurwitz(f"{name} is not Hurwitz")
    if P1 is None:
        G = B0 + L @ Dm0
        P1 = nm.solve_lyapunov(Acl_l, G @ G.T)
    P2 = nm.solve_lyapunov(Acl_k, L @ Dm0 @ Dm0.T @ L.T)
    return NoisePowerBudget(P1, P2, plant.C, plant.D0)


def error_covariance(plant, K, L, use_cp=False):
    """Full steady-state covariance of ``[xhat - X xr; x - xhat]``.

    The diagonal blocks are ``P2`` and ``P1``; the off-diagonal block is zero
    for the Kalman gain and is returned so callers can measure it.
    """
    A, B = plant.A, plant.B
    Cm, Dm0, _, _ = plant.measurement(use_cp)
    n = plant.n
    At = np.block([[A + B @ K, -L @ Cm], [np.zeros((n, n)), A + L @ Cm]])
    Bt = np.vstack([-L @ Dm0, plant.B0 + L @ Dm0])
    return nm.solve_lyapunov(At, Bt @ Bt.T)
