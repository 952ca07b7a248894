"""Dense linear-algebra primitives shared by the rest of the package.

Everything here is a thin, self-checking wrapper over numpy/scipy.  Symmetric
outputs are symmetrized explicitly so that chains of solves do not drift.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

BOUNDARY_TOL = 1e-8


class SingularEquationError(ValueError):
    """Raised when a Lyapunov/Sylvester equation has no unique solution."""


class DivergenceError(RuntimeError):
    """Raised when an integrated trajectory leaves the finite floats."""


@dataclass(frozen=True)
class SpectralRegion:
    """Half-plane used to classify eigenvalues.

    tag is one of ``closed-left``, ``open-left``, ``closed-right``,
    ``open-right``.  Eigenvalues whose real part lies within ``tol`` of the
    imaginary axis are treated as boundary eigenvalues.
    """
    tag: str = "closed-left"
    tol: float = BOUNDARY_TOL

    def __post_init__(self):
        if self.tag not in ("closed-left", "open-left", "closed-right", "open-right"):
            raise ValueError(f"unknown region tag {self.tag!r}")
        if not 0 <= self.tol < 1:
            raise ValueError("region tolerance must lie in [0, 1)")

    def contains(self, lam):
        re = np.real(lam)
        if self.tag == "closed-left":
            return re <= self.tol
        if self.tag == "open-left":
            return re < -self.tol
        if self.tag == "closed-right":
            return re >= -self.tol
        return re > self.tol


def as_matrix(M, rows=None, cols=None):
    """Return ``M`` as a finite 2-D float array.

    Scalars become 1x1; 1-D input is reshaped to ``(rows, cols)`` when both are
    given, else treated as a column.  Empty input takes the requested shape.
    """
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        r = rows if rows is not None else (M.shape[0] if M.ndim == 2 else 0)
        c = cols if cols is not None else (M.shape[1] if M.ndim == 2 else 0)
        return np.zeros((r, c))
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1:
        M = M.reshape(rows, cols) if rows is not None and cols is not None else M.reshape(-1, 1)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def sym(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def _require_square(M, name="matrix"):
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")


def symmetric_eig(M):
    """Eigen-decomposition of a symmetric matrix.

    Parameters
    ----------
    M : (k, k) array_like
        Symmetric up to rounding; ``(M + M.T)/2`` is used.

    Returns
    -------
    w : (k,) ndarray
        Eigenvalues in descending order.
    V : (k, k) ndarray
        Orthonormal eigenvectors, ``M V = V diag(w)``.
    """
    M = as_matrix(M)
    _require_square(M)
    w, V = np.linalg.eigh(sym(M))
    return w[::-1].copy(), V[:, ::-1].copy()


def sqrtm_psd(M, clip=1e-12):
    """Symmetric PSD square root via eigendecomposition, clipping small/negative modes."""
    w, V = symmetric_eig(M)
    w = np.where(w > clip, w, 0.0)
    return sym((V * np.sqrt(w)) @ V.T)


def pinv_sym(M, thresh=1e-10):
    """Pseudo-inverse of a symmetric matrix with an eigenvalue threshold."""
    w, V = symmetric_eig(M)
    inv = np.array([1.0 / x if abs(x) > thresh else 0.0 for x in w])
    return sym((V * inv) @ V.T)


def ordered_schur(M, region=None):
    """Orthonormal basis of the invariant subspace for eigenvalues in ``region``.

    Returns
    -------
    basis : (k, p) ndarray
    count : int
        ``p``, the number of eigenvalues (with multiplicity) in the region.
    boundary : bool
        True when some eigenvalue lies within ``region.tol`` of the axis.
    """
    region = region or SpectralRegion()
    M = as_matrix(M)
    _require_square(M)
    k = M.shape[0]
    if k == 0:
        return np.zeros((0, 0)), 0, False
    T, Z, count = sla.schur(M, output="real", sort=lambda re, im: bool(region.contains(re + 1j * im)))
    eig = np.linalg.eigvals(M)
    boundary = bool(np.any(np.abs(eig.real) <= region.tol))
    return Z[:, :count], int(count), boundary


def _check_residual(res, rhs, label):
    scale = 1.0 + np.linalg.norm(rhs)
    if not np.all(np.isfinite(res)) or np.linalg.norm(res) > 1e-9 * scale * 10:
        raise SingularEquationError(f"{label} residual {np.linalg.norm(res):.3e} too large")


def solve_sylvester(A, B, C):
    """Solve ``A X + X B = C`` (Bartels-Stewart via scipy).

    Raises
    ------
    SingularEquationError
        If ``spec(A)`` and ``spec(-B)`` (nearly) intersect.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.asarray(C, dtype=float).reshape(A.shape[0], B.shape[0])
    for M in (A, B, C):
        as_matrix(M)
    if A.shape[0] == 0 or B.shape[0] == 0:
        return np.zeros((A.shape[0], B.shape[0]))
    ea, eb = np.linalg.eigvals(A), np.linalg.eigvals(B)
    gap = np.min(np.abs(ea[:, None] + eb[None, :]))
    scale = 1.0 + max(np.abs(ea).max(), np.abs(eb).max())
    if gap <= 1e-12 * scale:
        raise SingularEquationError("spectra of A and -B intersect")
    X = sla.solve_sylvester(A, B, C)
    _check_residual(A @ X + X @ B - C, C, "Sylvester")
    return X


def solve_lyapunov(A, Q):
    """Solve ``A^T Z + Z A = -Q`` for symmetric ``Z``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    _require_square(A, "A")
    if A.shape[0] == 0:
        return np.zeros((0, 0))
    Q = np.asarray(Q, dtype=float).reshape(A.shape)
    Z = solve_sylvester(A.T, A, -sym(Q))
    Z = sym(Z)
    _check_residual(A.T @ Z + Z @ A + sym(Q), Q, "Lyapunov")
    return Z


def rank_tol(M, tol=None):
    """Numerical rank and orthonormal nullspace basis.

    The default tolerance is ``1e-9 * max(rows, cols) * ||M||_2``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        M = np.atleast_2d(M)
    r, c = M.shape
    if c == 0:
        return 0, np.zeros((0, 0))
    if r == 0:
        return 0, np.eye(c)
    U, s, Vt = np.linalg.svd(M)
    if tol is None:
        tol = 1e-9 * max(r, c) * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    return rank, Vt[rank:].T.copy()


def rk4_propagator(A, step):
    """One classical RK4 step for ``x' = A x`` written as a matrix."""
    A = np.asarray(A, dtype=float)
    hA = step * A
    I = np.eye(A.shape[0])
    hA2 = hA @ hA
    return I + hA + hA2 / 2 + hA2 @ hA / 6 + hA2 @ hA2 / 24


def integrate_linear_ode(A, x0, horizon, step):
    """Fixed-step classical RK4 integration of ``x' = A x``.

    Returns
    -------
    t : (N+1,) ndarray
    X : (N+1, d) ndarray
        States at the sample times.  When ``horizon`` is not a multiple of
        ``step`` the last step is shortened so the final sample is at
        ``horizon`` exactly.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    nfull = int(np.floor(horizon / step + 1e-9))
    t = step * np.arange(nfull + 1)
    rem = horizon - t[-1]
    if rem > 1e-12 * max(1.0, horizon):
        t = np.append(t, horizon)
    else:
        t[-1] = min(t[-1], horizon)
    X = np.empty((t.size, x0.size))
    X[0] = x0
    M = rk4_propagator(A, step)
    x = x0.copy()
    for k in range(1, t.size):
        h = t[k] - t[k - 1]
        with np.errstate(over="ignore", invalid="ignore"):
            x = (M if abs(h - step) < 1e-15 else rk4_propagator(A, h)) @ x
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"state became non-finite at t={t[k]:.6g}")
        X[k] = x
    return t, X
