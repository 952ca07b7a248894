"""State-space systems and their structural decompositions."""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .numkernel import as_matrix, rank_tol


class NotEquivalentError(ValueError):
    """Two realizations do not describe the same external behavior."""


class PoleProximityError(ValueError):
    """Transfer function evaluated (numerically) at a pole."""


@dataclass
class StateSpaceSystem:
    """Real realization ``x' = Ax + Bu``, ``y = Cx + Du``.

    ``exact`` optionally holds the same four matrices as nested lists of
    :class:`fractions.Fraction`, so exact inputs reach the polynomial layer
    without rounding.
    """
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    label: str = ""
    exact: Optional[tuple] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        D = np.asarray(self.D, dtype=float)
        A = np.asarray(self.A, dtype=float)
        d = A.shape[0] if A.ndim == 2 else int(round(np.sqrt(A.size)))
        if D.ndim == 2:
            m, n = D.shape
        elif D.size == 1:
            m = n = 1
        else:
            m = np.asarray(self.C).shape[0] if np.asarray(self.C).ndim == 2 else 1
            n = np.asarray(self.B).shape[1] if np.asarray(self.B).ndim == 2 else 1
        self.A = as_matrix(A, d, d)
        self.B = as_matrix(self.B, d, n)
        self.C = as_matrix(self.C, m, d)
        self.D = as_matrix(D, m, n)
        if self.A.shape != (d, d) or self.B.shape != (d, n) or self.C.shape != (m, d):
            raise ValueError(
                f"inconsistent dimensions A{self.A.shape} B{self.B.shape} "
                f"C{self.C.shape} D{self.D.shape}")

    @property
    def d(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.B.shape[1]

    @property
    def m(self):
        return self.C.shape[0]

    def similar(self, T):
        """System in coordinates ``x_new = T x``."""
        T = np.asarray(T, dtype=float)
        Ti = np.linalg.inv(T) if T.size else T
        return StateSpaceSystem(T @ self.A @ Ti, T @ self.B, self.C @ Ti, self.D.copy(),
                                self.label)


@dataclass
class StaircaseDecomposition:
    """Staircase form ``T A T^{-1}`` with ``retained_dim`` leading states.

    For ``kind == 'observer'`` the leading block is the observable part and
    ``blocks`` holds A11, A21, A22, B1, B2, C1.  For ``kind == 'controller'``
    the leading block is the controllable part and ``blocks`` holds A11, A12,
    A22, B1, C1, C2.
    """
    T: np.ndarray
    T_inv: np.ndarray
    retained_dim: int
    blocks: dict
    kind: str

    def retained_system(self, sys):
        """The leading subsystem (observable or controllable part)."""
        b = self.blocks
        return StateSpaceSystem(b["A11"], b["B1"], b["C1"], sys.D.copy(), sys.label)


def _orth_krylov(A, B, tol=None):
    """Orthonormal basis of the smallest A-invariant subspace containing range(B)."""
    d = A.shape[0]
    if d == 0 or B.size == 0:
        return np.zeros((d, 0))
    scale = max(1.0, np.linalg.norm(A, 2), np.linalg.norm(B, 2))
    if tol is None:
        tol = 1e-9 * max(d, B.shape[1]) * scale

    def orth(M):
        if M.shape[1] == 0:
            return M
        U, s, _ = np.linalg.svd(M, full_matrices=False)
        return U[:, s > tol]

    U = orth(B)
    while U.shape[1] < d:
        W = A @ U
        W = W - U @ (U.T @ W)
        W = W - U @ (U.T @ W)
        new = orth(W)
        if new.shape[1] == 0:
            break
        U = np.hstack([U, new])
        U, _ = np.linalg.qr(U)
    return U


def _complete(U):
    """Orthonormal complement of the columns of ``U``."""
    d, r = U.shape
    if r == 0:
        return np.eye(d)
    full, _, _ = np.linalg.svd(U, full_matrices=True)
    return full[:, r:]


def observability_matrix(sys):
    """Stack ``C, CA, ..., CA^{d-1}``."""
    blocks, M = [], sys.C.copy()
    for _ in range(sys.d):
        blocks.append(M)
        M = M @ sys.A
    if not blocks:
        return np.zeros((0, 0))
    return np.vstack(blocks)


def is_observable(sys):
    if sys.d == 0:
        return True
    return _orth_krylov(sys.A.T, sys.C.T).shape[1] == sys.d


def is_controllable(sys):
    if sys.d == 0:
        return True
    return _orth_krylov(sys.A, sys.B).shape[1] == sys.d


def observer_staircase(sys):
    """Split off the unobservable subspace.

    Returns a decomposition with ``T A T^{-1} = [[A11, 0], [A21, A22]]`` and
    ``C T^{-1} = [C1, 0]`` where ``(C1, A11)`` is observable.  An observable
    input gives ``T = I``.
    """
    d = sys.d
    U1 = _orth_krylov(sys.A.T, sys.C.T)
    r = U1.shape[1]
    if r == d:
        T = np.eye(d)
    else:
        T = np.vstack([U1.T, _complete(U1).T])
    Ti = T.T.copy()
    At, Bt, Ct = T @ sys.A @ Ti, T @ sys.B, sys.C @ Ti
    blocks = dict(A11=At[:r, :r], A21=At[r:, :r], A22=At[r:, r:], A12=At[:r, r:],
                  B1=Bt[:r], B2=Bt[r:], C1=Ct[:, :r], C2=Ct[:, r:])
    return StaircaseDecomposition(T, Ti, r, blocks, "observer")


def controller_staircase(sys):
    """Split off the uncontrollable subspace.

    Returns ``T A T^{-1} = [[A11, A12], [0, A22]]`` and ``T B = [B1; 0]`` with
    ``(A11, B1)`` controllable.
    """
    d = sys.d
    U1 = _orth_krylov(sys.A, sys.B)
    r = U1.shape[1]
    if r == d:
        T = np.eye(d)
    else:
        T = np.vstack([U1.T, _complete(U1).T])
    Ti = T.T.copy()
    At, Bt, Ct = T @ sys.A @ Ti, T @ sys.B, sys.C @ Ti
    blocks = dict(A11=At[:r, :r], A12=At[:r, r:], A21=At[r:, :r], A22=At[r:, r:],
                  B1=Bt[:r], B2=Bt[r:], C1=Ct[:, :r], C2=Ct[:, r:])
    return StaircaseDecomposition(T, Ti, r, blocks, "controller")


def realization_similarity(sys1, sys2, tol=1e-8):
    """Matrix ``T`` with ``sys2 = (T A T^{-1}, T B, C T^{-1}, D)``.

    Both systems must be observable.  ``T`` comes from the observability
    matrices by least squares and all four identities are re-verified.
    """
    if sys1.n != sys2.n or sys1.m != sys2.m:
        raise NotEquivalentError("input/output dimensions differ")
    for s in (sys1, sys2):
        if not is_observable(s):
            raise ValueError(f"system {s.label!r} is not observable")
    if sys1.d != sys2.d:
        raise NotEquivalentError("state dimensions differ")
    if sys1.d == 0:
        T = np.zeros((0, 0))
    else:
        V1, V2 = observability_matrix(sys1), observability_matrix(sys2)
        T = np.linalg.lstsq(V2, V1, rcond=None)[0]
    if sys1.d:
        if np.linalg.matrix_rank(T) < sys1.d:
            raise NotEquivalentError("similarity is singular")
        Ti = np.linalg.inv(T)
    else:
        Ti = T
    checks = [(T @ sys1.A @ Ti, sys2.A), (T @ sys1.B, sys2.B),
              (sys1.C @ Ti, sys2.C), (sys1.D, sys2.D)]
    for got, want in checks:
        if got.size and np.max(np.abs(got - want)) > tol * (1 + np.max(np.abs(want), initial=0)):
            raise NotEquivalentError("not equivalent realizations")
    return T


def transfer_eval(sys, s):
    """Evaluate ``D + C (sI - A)^{-1} B`` at complex ``s``."""
    if sys.d == 0:
        return sys.D.astype(complex)
    M = s * np.eye(sys.d) - sys.A
    smin = np.linalg.svd(M, compute_uv=False)[-1]
    if smin <= 1e-12 * (1 + np.linalg.norm(sys.A, 2)):
        raise PoleProximityError(f"s={s} is numerically an eigenvalue of A")
    return sys.D + sys.C @ np.linalg.solve(M, sys.B.astype(complex))


def uncontrollable_modes(sys):
    """Eigenvalues of the uncontrollable block with left null vectors.

    Returns
    -------
    list of (complex, ndarray)
        Pairs ``(lam, z)`` with ``z^T [lam I - A, B] = 0`` and ``||z|| = 1``.
    """
    dec = controller_staircase(sys)
    r = dec.retained_dim
    A22 = dec.blocks["A22"]
    if A22.shape[0] == 0:
        return []
    lam, W = np.linalg.eig(A22.T)
    out = []
    for k in range(lam.size):
        w = np.concatenate([np.zeros(r, dtype=complex), W[:, k]])
        z = dec.T.T @ w
        z = z / np.linalg.norm(z)
        out.append((complex(lam[k]), z))
    return out


def left_null_residual(sys, lam, z):
    """``||z^T [lam I - A, B]||``."""
    M = np.hstack([lam * np.eye(sys.d) - sys.A, sys.B])
    return float(np.linalg.norm(np.asarray(z) @ M))
