"""Dense matrix-equation kernels.

All solvers take and return plain ``numpy.ndarray`` objects. Inputs are
validated with :func:`as_matrix`, which rejects non-finite entries and
promotes scalars / vectors to 2-D arrays.

Conventions
-----------
Lyapunov      ``A P + P A^T + Q = 0``
Sylvester     ``A X + X B = C``
CARE          ``A^T P + P A - P B R^{-1} B^T P + Q = 0``
game CARE     ``H11^T X + X H11 + X H12 X + H21 = 0``
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import (
    IllConditioned,
    NoStabilizingSolution,
    NotHurwitz,
    NotStabilizable,
    SpectrumOverlap,
)

RANK_RTOL = 1e-8
HURWITZ_TOL = 1e-12
MARGINAL_TOL = 1e-9


def as_matrix(a, name="matrix", shape=None):
    """Return ``a`` as a finite 2-D float array.

    Scalars become 1x1, 1-D input becomes a single row. ``shape`` may give
    expected ``(rows, cols)`` with ``None`` as wildcard.
    """
    m = np.array(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(1, -1) if m.size else m.reshape(0, 0)
    elif m.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D array, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name}: entries must be finite")
    if shape is not None:
        for want, got, what in zip(shape, m.shape, ("rows", "cols")):
            if want is not None and want != got:
                raise ValueError(f"{name}: expected {want} {what}, got {got}")
    return m


def symmetrize(P):
    return (P + P.T) / 2


def _fro(a):
    return float(np.linalg.norm(a)) if a.size else 0.0


def spectral_abscissa(A):
    """Largest real part over the eigenvalues of ``A`` (``-inf`` if empty)."""
    A = as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise ValueError("spectral_abscissa needs a square matrix")
    if A.size == 0:
        return -np.inf
    return float(np.max(np.linalg.eigvals(A).real))


def is_hurwitz(A, tol=HURWITZ_TOL):
    return spectral_abscissa(A) < -tol


def singular_values(M):
    M = np.asarray(M)
    if M.size == 0:
        return np.zeros(0)
    return np.linalg.svd(M, compute_uv=False)


def numerical_rank(M, rtol=RANK_RTOL):
    s = singular_values(M)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def pencil_rank(A, B, C, D, s, data_scaled=False):
    """Numerical rank of ``[[A - sI, B], [C, D]]`` at the complex point ``s``.

    The cutoff is ``RANK_RTOL`` times the largest singular value of the
    pencil, or, with ``data_scaled=True``, of the constant matrix
    ``[[A, B], [C, D]]``. The second form keeps the test meaningful at
    frequencies far above the system's own scale, where ``|s|`` dominates
    the pencil and a strictly proper system looks rank deficient.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    C = np.asarray(C, dtype=float).reshape(-1, n)
    D = np.asarray(D, dtype=float).reshape(C.shape[0], B.shape[1])
    M = np.block([[A - s * np.eye(n), B], [C, D]]).astype(complex)
    if not data_scaled:
        return numerical_rank(M)
    ref = singular_values(np.block([[A, B], [C, D]]))
    scale = ref[0] if ref.size and ref[0] > 0 else 1.0
    return int(np.sum(singular_values(M) > RANK_RTOL * scale))


def unstable_eigenvalues(A, tol=MARGINAL_TOL):
    """Eigenvalues of ``A`` with real part ``>= -tol``."""
    if A.size == 0:
        return np.zeros(0, dtype=complex)
    lam = np.linalg.eigvals(A)
    return lam[lam.real >= -tol]


def pbh_stabilizable(A, B):
    """PBH test. Returns ``(ok, witness)`` with the first uncontrollable mode."""
    A = as_matrix(A, "A")
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    for lam in unstable_eigenvalues(A):
        M = np.hstack([A - lam * np.eye(n), B]).astype(complex)
        if numerical_rank(M) < n:
            return False, complex(lam)
    return True, None


def pbh_detectable(C, A):
    A = as_matrix(A, "A")
    n = A.shape[0]
    C = np.asarray(C, dtype=float).reshape(-1, n)
    return pbh_stabilizable(A.T, C.T)


def _check_square(A, name):
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got {A.shape}")


def solve_sylvester(A, B, C):
    """Solve ``A X + X B = C`` by Bartels-Stewart.

    Raises :class:`SpectrumOverlap` when ``A`` and ``-B`` share (numerically)
    an eigenvalue, in which case the solution is not unique.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    _check_square(A, "A")
    _check_square(B, "B")
    C = as_matrix(C, "C", shape=(A.shape[0], B.shape[0]))
    if C.size == 0:
        return np.zeros_like(C)
    la = np.linalg.eigvals(A)
    lb = np.linalg.eigvals(B)
    scale = max(1.0, _fro(A), _fro(B))
    gap = np.min(np.abs(la[:, None] + lb[None, :]))
    if gap < 1e-10 * scale:
        raise SpectrumOverlap(f"min |lambda_A + lambda_B| = {gap:.3e}")
    X = sla.solve_sylvester(A, B, C)
    X = _refine(lambda Z: A @ Z + Z @ B, lambda R: sla.solve_sylvester(A, B, R), C, X)
    res = _fro(A @ X + X @ B - C)
    if res > 1e-10 * (1 + _fro(X)):
        raise IllConditioned(f"Sylvester residual {res:.3e} exceeds tolerance")
    return X


def _refine(op, solve, rhs, X, steps=2):
    # iterative refinement on the linear operator; keeps the better iterate
    best, best_res = X, _fro(op(X) - rhs)
    for _ in range(steps):
        if best_res == 0.0:
            break
        cand = best + solve(rhs - op(best))
        r = _fro(op(cand) - rhs)
        if r < best_res:
            best, best_res = cand, r
        else:
            break
    return best


def _lyap_raw(A, Q):
    return symmetrize(sla.solve_continuous_lyapunov(A, -Q))


def solve_lyapunov(A, Q):
    """Solve ``A P + P A^T + Q = 0`` for Hurwitz ``A``; returns symmetric ``P``."""
    A = as_matrix(A, "A")
    _check_square(A, "A")
    Q = as_matrix(Q, "Q", shape=A.shape)
    if A.size == 0:
        return np.zeros((0, 0))
    alpha = spectral_abscissa(A)
    if alpha >= -HURWITZ_TOL:
        raise NotHurwitz(f"spectral abscissa {alpha:.3e} is not negative")
    Q = symmetrize(Q)
    P = _lyap_raw(A, Q)
    P = symmetrize(_refine(lambda Z: A @ Z + Z @ A.T, lambda R: _lyap_raw(A, R),
                           -Q, P))
    res = _fro(A @ P + P @ A.T + Q)
    if not np.all(np.isfinite(P)) or res > 1e-10 * (1 + _fro(P)):
        raise IllConditioned(f"Lyapunov residual {res:.3e} exceeds tolerance")
    return P


@dataclass(frozen=True)
class CareSolution:
    """Stabilizing Riccati solution with its certificates."""

    P: np.ndarray
    residual_norm: float
    closed_loop_abscissa: float

    @property
    def X(self):
        return self.P


def game_care_residual(H11, H12, H21, X):
    return H11.T @ X + X @ H11 + X @ H12 @ X + H21


def _stable_subspace_solution(H11, H12, H21):
    n = H11.shape[0]
    ham = np.block([[H11, H12], [-H21, -H11.T]])
    scale = max(1.0, _fro(ham))
    eig = np.linalg.eigvals(ham)
    axis = np.min(np.abs(eig.real))
    if axis < 1e-10 * scale:
        raise NoStabilizingSolution(
            f"Hamiltonian has an eigenvalue on the imaginary axis (|Re| = {axis:.3e})")
    # diagonal balancing restricted to diag(S, S^-1) so the scaled matrix stays
    # Hamiltonian; the solution maps back as X = S X_bal S
    _, (sca, _) = sla.matrix_balance(ham, permute=False, separate=True)
    s = np.round((np.log2(sca[n:]) - np.log2(sca[:n])) / 2)
    d = 2.0 ** np.r_[s, -s]
    T, Z, sdim = sla.schur(ham * (d[:, None] / d[None, :]), output="real", sort="lhp")
    if sdim != n:
        raise NoStabilizingSolution(f"stable invariant subspace has dimension {sdim} != {n}")
    U1, U2 = Z[:n, :n], Z[n:, :n]
    if np.linalg.cond(U1) > 1e12:
        raise NoStabilizingSolution("stable subspace is not a graph (U1 singular)")
    X = np.linalg.solve(U1.T, U2.T).T * np.outer(d[:n], d[:n])
    return symmetrize(X)


def _newton_step(H11, H12, H21, X):
    Acl = H11 + H12 @ X
    F = game_care_residual(H11, H12, H21, X)
    try:
        delta = sla.solve_continuous_lyapunov(Acl.T, -F)
    except (np.linalg.LinAlgError, ValueError):
        return X
    return symmetrize(X + delta)


def solve_game_care(H11, H12, H21, require_psd=True):
    """Stabilizing solution of ``H11^T X + X H11 + X H12 X + H21 = 0``.

    ``H12`` and ``H21`` must be symmetric; ``H12`` may be indefinite. The
    stable invariant subspace of the Hamiltonian is found by an ordered real
    Schur decomposition and the result is polished by one Newton step.

    Raises :class:`NoStabilizingSolution` if no stabilizing (and, by default,
    positive semidefinite) solution exists.
    """
    H11 = as_matrix(H11, "H11")
    _check_square(H11, "H11")
    n = H11.shape[0]
    H12 = symmetrize(as_matrix(H12, "H12", shape=(n, n)))
    H21 = symmetrize(as_matrix(H21, "H21", shape=(n, n)))
    if n == 0:
        return CareSolution(np.zeros((0, 0)), 0.0, -np.inf)

    X = _stable_subspace_solution(H11, H12, H21)
    res0 = _fro(game_care_residual(H11, H12, H21, X))
    # a residual already at rounding level carries no information; polishing
    # it then only adds the Lyapunov solve's own error
    nx = _fro(X)
    floor = 100 * np.finfo(float).eps * (_fro(H21) + 2 * _fro(H11) * nx + _fro(H12) * nx * nx)
    if res0 > floor:
        X1 = _newton_step(H11, H12, H21, X)
        res1 = _fro(game_care_residual(H11, H12, H21, X1))
        if np.all(np.isfinite(X1)) and res1 <= res0:
            X, res0 = X1, res1

    abscissa = spectral_abscissa(H11 + H12 @ X)
    if abscissa >= -HURWITZ_TOL:
        raise NoStabilizingSolution(f"closed loop abscissa {abscissa:.3e} not negative")
    nrm = _fro(X)
    if res0 > 1e-8 * (1 + nrm) ** 2:
        raise NoStabilizingSolution(f"Riccati residual {res0:.3e} exceeds tolerance")
    if require_psd:
        lam_min = float(np.min(np.linalg.eigvalsh(X)))
        if lam_min < -1e-9 * (1 + nrm):
            raise NoStabilizingSolution(f"solution is indefinite (min eig {lam_min:.3e})")
    return CareSolution(X, res0, abscissa)


def solve_care(A, B, Q, R):
    """Stabilizing solution of ``A^T P + P A - P B R^{-1} B^T P + Q = 0``."""
    A = as_matrix(A, "A")
    _check_square(A, "A")
    n = A.shape[0]
    B = as_matrix(B, "B", shape=(n, None)) if np.size(B) else np.zeros((n, 0))
    m = B.shape[1]
    Q = symmetrize(as_matrix(Q, "Q", shape=(n, n)))
    R = symmetrize(as_matrix(R, "R", shape=(m, m)))
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise ValueError("R must be positive definite") from None
    ok, lam = pbh_stabilizable(A, B)
    if not ok:
        raise NotStabilizable(f"(A, B) has an uncontrollable mode at {lam}")
    G = B @ np.linalg.solve(R, B.T)
    return solve_game_care(A, -G, Q)


def lqr_gain(A, B, Q, R):
    """Gain ``K = -R^{-1} B^T P`` so that ``A + B K`` is Hurwitz."""
    sol = solve_care(A, B, Q, R)
    R = as_matrix(R, "R")
    B = as_matrix(B, "B")
    return -np.linalg.solve(R, B.T @ sol.P), sol
