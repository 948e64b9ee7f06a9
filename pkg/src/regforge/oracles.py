"""Brute-force reference computations used to cross-check the solvers.

These deliberately take a different route from the production kernels in
:mod:`regforge.numerics`: Kronecker vectorization instead of Schur-based
Bartels-Stewart, eigenvectors instead of an ordered Schur basis, polynomial
roots instead of a direct eigenvalue call. They are slow and only meant for
small instances.
"""

import numpy as np


def vec(X):
    return X.reshape(-1, order="F")


def unvec(v, rows, cols):
    return v.reshape((rows, cols), order="F")


def kron_sylvester(A, B, C):
    """Solve ``A X + X B = C`` via ``(I (x) A + B^T (x) I) vec X = vec C``."""
    n, m = A.shape[0], B.shape[0]
    K = np.kron(np.eye(m), A) + np.kron(B.T, np.eye(n))
    return unvec(np.linalg.solve(K, vec(C)), n, m)


def kron_lyapunov(A, Q):
    """Solve ``A P + P A^T + Q = 0`` via the Kronecker sum."""
    n = A.shape[0]
    K = np.kron(np.eye(n), A) + np.kron(A, np.eye(n))
    return unvec(np.linalg.solve(K, -vec(Q)), n, n)


def hamiltonian_eigvec_care(A, B, Q, R):
    """Stabilizing CARE solution from Hamiltonian eigenvectors.

    Picks the ``n`` eigenvectors with negative real part of
    ``[[A, -B R^{-1} B^T], [-Q, -A^T]]`` and forms ``X = V2 V1^{-1}``.
    """
    n = A.shape[0]
    G = B @ np.linalg.solve(R, B.T)
    H = np.block([[A, -G], [-Q, -A.T]])
    lam, V = np.linalg.eig(H)
    stable = V[:, lam.real < 0]
    if stable.shape[1] != n:
        raise ValueError("Hamiltonian has no n-dimensional stable subspace")
    X = np.linalg.solve(stable[:n].T, stable[n:].T).T
    return np.real_if_close(X, tol=1e6).real


def companion_abscissa(A):
    """Spectral abscissa from the roots of the characteristic polynomial."""
    coeffs = np.poly(A)
    return float(np.max(np.roots(coeffs).real))


def regulator_kron(A, B, C, D, Agen, Cgen, Bd=None, Dd=None):
    """Stacked Kronecker solve of ``X Agen = A X + B U + Bd Cgen``,
    ``0 = C X + D U + Dd Cgen`` (least-norm when underdetermined)."""
    n, m = B.shape
    p = C.shape[0]
    k = Agen.shape[0]
    Bd = np.zeros((n, 0)) if Bd is None else Bd
    Dd = np.zeros((p, Bd.shape[1])) if Dd is None else Dd
    top = np.hstack([np.kron(Agen.T, np.eye(n)) - np.kron(np.eye(k), A),
                     -np.kron(np.eye(k), B)])
    bot = np.hstack([np.kron(np.eye(k), C), np.kron(np.eye(k), D)])
    M = np.vstack([top, bot])
    rhs = np.concatenate([vec(Bd @ Cgen), -vec(Dd @ Cgen)])
    sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
    return unvec(sol[: n * k], n, k), unvec(sol[n * k:], m, k)


def freq_response(A, B, C, D, w):
    """``C (jwI - A)^{-1} B + D`` evaluated by a dense complex solve."""
    n = A.shape[0]
    return C @ np.linalg.solve(1j * w * np.eye(n) - A, B) + D


def hinf_sweep(A, B, C, D, freqs):
    """Largest singular value of the frequency response at each frequency."""
    return np.array([np.linalg.svd(freq_response(A, B, C, D, w), compute_uv=False)[0]
                     for w in freqs])


def rk4_step_map(A, B, dt, substeps=200):
    """One-step state map of ``x' = A x + B u`` (``u`` held) by classical RK4.

    Returns ``(Phi, Gamma)`` with ``x+ = Phi x + Gamma u``.
    """
    n, m = B.shape
    h = dt / substeps
    M = np.block([[A, B], [np.zeros((m, n + m))]])
    step = np.eye(n + m)
    Mh = M * h
    single = (np.eye(n + m) + Mh + Mh @ Mh / 2 + Mh @ Mh @ Mh / 6
              + Mh @ Mh @ Mh @ Mh / 24)
    for _ in range(substeps):
        step = single @ step
    return step[:n, :n], step[:n, n:]
