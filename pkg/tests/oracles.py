"""Independent reference computations used by the tests.

None of these call the package's Riccati, chain or extraction routines.
"""
from fractions import Fraction

import numpy as np
from scipy.linalg import expm


def scalar_are_roots(a, b, c, d):
    """Roots of the scalar passive Riccati equation for ``(a, b, c, d)``, ``d > 0``.

    ``-2 a x - (c - b x)^2 / (2 d) = 0``.  Returns the two roots in ascending
    order and the closed-loop values ``a + b (b x - c) / (2 d)``.
    """
    r = 2.0 * d
    qa, qb, qc = b * b / r, 2 * a - 2 * b * c / r, c * c / r
    disc = np.sqrt(qb * qb - 4 * qa * qc)
    roots = [(-qb - disc) / (2 * qa), (-qb + disc) / (2 * qa)]
    cl = [a + b * (b * x - c) / r for x in roots]
    return roots, cl


def feedback_limit_energy(k, x0):
    """Energy extracted from ``(-1, 1, 1, 0)`` by ``u = -k x``: ``k x0^2 / (2 (1 + k))``."""
    return k * x0 ** 2 / (2.0 * (1.0 + k))


def _van_loan(A, h):
    d = A.shape[0]
    Z, I = np.zeros((d, d)), np.eye(d)
    M = np.block([[A, I, Z], [Z, Z, I], [Z, Z, Z]]) * h
    E = expm(M)
    return E[:d, :d], E[:d, d:2 * d], E[:d, 2 * d:]


def finite_horizon_extraction(A, B, C, D, x0, horizon, segments=200):
    """Maximal ``-int u^T y`` over piecewise-constant inputs on ``[0, horizon]``.

    The extracted energy is a concave quadratic of the input levels; the
    maximizer solves a linear system.
    """
    A, B, C, D = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, C, D))
    x0 = np.asarray(x0, dtype=float)
    d, n = B.shape
    h = horizon / segments
    Phi, E1, E2 = _van_loan(A, h)
    Gam = E1 @ B
    N = segments * n
    # x_k = P x0 + Q U
    P = np.eye(d)
    Q = np.zeros((d, N))
    Hq = np.zeros((N, N))
    g = np.zeros((N, d))
    for k in range(segments):
        sl = slice(k * n, (k + 1) * n)
        CE1 = C @ E1
        # -u_k^T (C E1 x_k + (C E2 B + D h) u_k)
        g[sl] += CE1 @ P
        Hq[sl, :] += CE1 @ Q
        Hq[sl, sl] += C @ E2 @ B + D * h
        P = Phi @ P
        Q = Phi @ Q
        Q[:, sl] += Gam
    # J(U) = -U^T Hq U - U^T g x0, maximized at U = -(Hs)^{-1} g x0 / 2
    Hs = 0.5 * (Hq + Hq.T)
    gx = g @ x0
    U = -0.5 * np.linalg.solve(Hs, gx)
    return float(-U @ Hq @ U - U @ gx)


def concave_oracle(A, B, C, D, x0, horizons=(5.0, 10.0, 20.0), segments=200):
    """Best extracted energy over the stated horizons."""
    return max(finite_horizon_extraction(A, B, C, D, x0, T, segments) for T in horizons)


def expm_trajectory(A, x0, t):
    """``x(t) = e^{A t} x0`` on a grid."""
    A = np.asarray(A, dtype=float)
    return np.array([expm(A * s) @ x0 for s in np.asarray(t, dtype=float)])


def exact_similar(exact, T):
    """Exact ``(T A T^-1, T B, C T^-1, D)`` for an integer matrix ``T``."""
    import sympy
    A, B, C, D = exact
    Ts = sympy.Matrix(T)
    Ti = Ts.inv()

    def m(M, r, c):
        return sympy.Matrix(r, c, lambda i, j: sympy.Rational(M[i][j].numerator, M[i][j].denominator))

    d = len(A)
    n = len(D[0])
    mm = len(D)
    A2 = Ts * m(A, d, d) * Ti
    B2 = Ts * m(B, d, n)
    C2 = m(C, mm, d) * Ti

    def back(M):
        return [[Fraction(int(x.p), int(x.q)) for x in M.row(i)] for i in range(M.rows)]

    return back(A2), back(B2), back(C2), [list(r) for r in D]


def resolved_concave_oracle(A, B, C, D, x0, tol=2.5e-5):
    """Concave oracle value and whether it has converged to ``tol``.

    Convergence is judged by the oracle alone: doubling the segment count and
    extending the horizon to 40 must each change the value by at most ``tol``.
    """
    base = concave_oracle(A, B, C, D, x0)
    fine = concave_oracle(A, B, C, D, x0, segments=400)
    longer = finite_horizon_extraction(A, B, C, D, x0, 40.0, 800)
    converged = abs(fine - base) <= tol and longer - max(base, fine) <= tol
    return base, converged
