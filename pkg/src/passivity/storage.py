"""LMI/ARE layer: storage matrices, minimal ARE solutions, available energy.

Two supply rates are supported:

* ``passive``: ``u^T y`` with storage value ``x^T X x / 2``;
* ``gain``: ``u^T u - y^T y`` with storage value ``x^T X x``.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .numkernel import (SingularEquationError, pinv_sym, rank_tol, solve_lyapunov,
                        solve_sylvester, sym, symmetric_eig)
from .statespace import (controller_staircase, observer_staircase, uncontrollable_modes)

PASSIVE = "passive"
GAIN = "gain"
REGULAR_TOL = 1e-10
HAMILTONIAN_AXIS_TOL = 1e-6


class NotDissipativeError(ValueError):
    """The system is not passive (or not non-expansive) for the given supply.

    ``condition`` names the failing check; ``verdict`` may carry a pair-test
    verdict with a witness.
    """

    def __init__(self, message, supply=PASSIVE, condition=None, verdict=None):
        super().__init__(message)
        self.supply = supply
        self.condition = condition
        self.verdict = verdict


class SingularFeedthroughError(ValueError):
    """The regular-case precondition (D + D^T > 0, or I - D^T D > 0) fails."""


@dataclass(frozen=True)
class SupplyRate:
    tag: str = PASSIVE

    def __post_init__(self):
        if self.tag not in (PASSIVE, GAIN):
            raise ValueError(f"unknown supply rate {self.tag!r}")

    @property
    def scale(self):
        """Storage value is ``scale * x^T X x``."""
        return 0.5 if self.tag == PASSIVE else 1.0


def as_supply(supply, sys=None):
    if isinstance(supply, SupplyRate):
        return supply
    if supply is None:
        return SupplyRate(PASSIVE if sys is None or sys.m == sys.n else GAIN)
    return SupplyRate(supply)


@dataclass
class QuadraticStorage:
    """Quadratic storage ``scale * x^T X x``."""
    X: np.ndarray
    supply: SupplyRate = field(default_factory=SupplyRate)

    def value(self, x0):
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        return float(self.supply.scale * x0 @ self.X @ x0)

    @property
    def matrix(self):
        """Coefficient matrix ``M`` with value ``x^T M x``."""
        return self.supply.scale * self.X

    def terms(self, tol=1e-10):
        """Sum-of-squares form ``sum_k c_k (v_k^T x)^2``.

        Each direction ``v_k`` is scaled so its first non-negligible entry
        equals one.
        """
        M = self.matrix
        if M.size == 0:
            return []
        w, V = symmetric_eig(M)
        scale = max(1.0, np.abs(w).max())
        out = []
        for k in range(w.size):
            if abs(w[k]) <= tol * scale:
                continue
            u = V[:, k]
            lead = u[np.flatnonzero(np.abs(u) > 1e-8)[0]]
            out.append((float(w[k] * lead ** 2), u / lead))
        return out


@dataclass
class LmiReport:
    feasible: bool
    X_min: Optional[QuadraticStorage]
    bounded_above: bool
    unbounded_witness: Optional[tuple]
    diagnostics: dict = field(default_factory=dict)


@dataclass
class AreSolution:
    """Result of :func:`solve_min_are`."""
    X: np.ndarray
    closed_loop: np.ndarray
    boundary: bool
    residual: float


@dataclass
class FeasibilityResult:
    passed: bool
    min_eig_X: float
    min_eig_lmi: float


# ---------------------------------------------------------------------------
# block matrices

def _check_X(sys, X):
    X = np.asarray(X, dtype=float).reshape(sys.d, sys.d)
    return sym(X)


def omega(sys, X):
    """``[[-A^T X - X A, C^T - X B], [C - B^T X, D + D^T]]``."""
    if sys.m != sys.n:
        raise ValueError("passive supply requires m == n")
    X = _check_X(sys, X)
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    top = np.hstack([-A.T @ X - X @ A, C.T - X @ B])
    bot = np.hstack([C - B.T @ X, D + D.T])
    return sym(np.vstack([top, bot]))


def lambda_lmi(sys, X):
    """``[[-A^T X - X A - C^T C, -C^T D - X B], [-D^T C - B^T X, I - D^T D]]``."""
    X = _check_X(sys, X)
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    top = np.hstack([-A.T @ X - X @ A - C.T @ C, -C.T @ D - X @ B])
    bot = np.hstack([-D.T @ C - B.T @ X, np.eye(sys.n) - D.T @ D])
    return sym(np.vstack([top, bot]))


def supply_lmi(sys, X, supply):
    return omega(sys, X) if as_supply(supply, sys).tag == PASSIVE else lambda_lmi(sys, X)


def _regular_R(sys, supply):
    if supply.tag == PASSIVE:
        R = sym(sys.D + sys.D.T)
    else:
        R = sym(np.eye(sys.n) - sys.D.T @ sys.D)
    if R.size and symmetric_eig(R)[0][-1] <= REGULAR_TOL:
        raise SingularFeedthroughError(
            "D + D^T is singular" if supply.tag == PASSIVE else "I - D^T D is singular")
    return R


def is_regular(sys, supply=None):
    """True when ``D + D^T`` (passive) or ``I - D^T D`` (gain) is positive definite."""
    try:
        _regular_R(sys, as_supply(supply, sys))
    except SingularFeedthroughError:
        return False
    return True


def gamma_are(sys, X):
    """``-A^T X - X A - (C - B^T X)^T (D + D^T)^{-1} (C - B^T X)``."""
    R = _regular_R(sys, SupplyRate(PASSIVE))
    X = _check_X(sys, X)
    E = sys.C - sys.B.T @ X
    return sym(-sys.A.T @ X - X @ sys.A - E.T @ np.linalg.solve(R, E))


def a_gamma(sys, X):
    """``A - B (D + D^T)^{-1} (C - B^T X)``."""
    R = _regular_R(sys, SupplyRate(PASSIVE))
    X = _check_X(sys, X)
    return sys.A - sys.B @ np.linalg.solve(R, sys.C - sys.B.T @ X)


def pi_are(sys, X):
    """``-A^T X - X A - C^T C - (D^T C + B^T X)^T (I - D^T D)^{-1} (D^T C + B^T X)``."""
    R = _regular_R(sys, SupplyRate(GAIN))
    X = _check_X(sys, X)
    E = sys.D.T @ sys.C + sys.B.T @ X
    return sym(-sys.A.T @ X - X @ sys.A - sys.C.T @ sys.C - E.T @ np.linalg.solve(R, E))


def a_pi(sys, X):
    """``A + B (I - D^T D)^{-1} (D^T C + B^T X)``."""
    R = _regular_R(sys, SupplyRate(GAIN))
    X = _check_X(sys, X)
    return sys.A + sys.B @ np.linalg.solve(R, sys.D.T @ sys.C + sys.B.T @ X)


def riccati_residual(sys, X, supply):
    supply = as_supply(supply, sys)
    return gamma_are(sys, X) if supply.tag == PASSIVE else pi_are(sys, X)


def closed_loop(sys, X, supply):
    supply = as_supply(supply, sys)
    return a_gamma(sys, X) if supply.tag == PASSIVE else a_pi(sys, X)


# ---------------------------------------------------------------------------
# Riccati solve

def _are_data(sys, supply):
    """Coefficients of ``-Abar^T X - X Abar - X G X - Qc = 0``.

    Also returns ``Kc`` and ``M`` with ``Abar = A + B Kc C`` and
    ``Qc = C^T M C``.
    """
    R = _regular_R(sys, supply)
    Ri = np.linalg.inv(R)
    if supply.tag == PASSIVE:
        Kc = -Ri
        M = Ri
    else:
        Kc = Ri @ sys.D.T
        M = np.eye(sys.m) + sys.D @ Ri @ sys.D.T
    return Kc, M, sym(sys.B @ Ri @ sys.B.T), Ri


def _cluster(values, tol):
    """Group nearby complex numbers; returns list of (mean, count)."""
    groups = []
    for v in values:
        for g in groups:
            if abs(g[0] / g[1] - v) <= tol:
                g[0] += v
                g[1] += 1
                break
        else:
            groups.append([v, 1])
    return [(g[0] / g[1], g[1]) for g in groups]


def hamiltonian_solve(Abar, G, Qc, axis_tol=HAMILTONIAN_AXIS_TOL):
    """Solution of ``-Abar^T X - X Abar - X G X - Qc = 0`` with ``Abar + G X`` in the closed LHP.

    The graph subspace ``[I; X]`` is taken as the stable invariant subspace of
    the Hamiltonian plus, for each imaginary-axis eigenvalue of algebraic
    multiplicity ``2k``, the kernel of the ``k``-th power of its shifted
    restriction.

    Returns
    -------
    X : ndarray
    boundary : bool
        True when the Hamiltonian has imaginary-axis eigenvalues.
    """
    d = Abar.shape[0]
    if d == 0:
        return np.zeros((0, 0)), False
    H = np.block([[Abar, G], [-Qc, -Abar.T]])
    scale = max(1.0, np.linalg.norm(H, 2))
    tol = axis_tol * scale

    _, Z, count = sla.schur(H, output="real", sort=lambda re, im: re <= tol)
    U = Z[:, :count]
    R = U.T @ H @ U
    ev = np.linalg.eigvals(R)
    bnd = [v for v in ev if abs(v.real) <= tol]
    boundary = bool(bnd)
    if boundary:
        clusters = _cluster([v for v in bnd if v.imag >= -tol], 10 * tol)
        P = np.eye(count)
        I = np.eye(count)
        for mu, mult in clusters:
            w = mu.imag
            if abs(w) <= 10 * tol:
                factor = R
                k = mult // 2
            else:
                factor = R @ R + w * w * I
                k = mult // 2
            for _ in range(k):
                P = P @ factor
        Ul, s, _ = np.linalg.svd(P)
        U = U @ Ul[:, :d]
    if U.shape[1] != d:
        raise NotDissipativeError(f"Hamiltonian has {U.shape[1]} stable directions, expected {d}")
    U1, U2 = U[:d], U[d:]
    if np.linalg.svd(U1, compute_uv=False)[-1] <= 1e-12:
        raise NotDissipativeError("invariant subspace is not a graph")
    X = np.linalg.solve(U1.T, U2.T).T
    if np.max(np.abs(X - X.T)) > 1e-6 * (1 + np.max(np.abs(X))):
        raise NotDissipativeError("invariant subspace is not Lagrangian")
    return sym(X), boundary


def solve_min_are(sys, supply=None):
    """Minimal storage matrix of an observable regular system.

    Steps: controller staircase; stabilizing Riccati solution on the
    controllable block; Sylvester equation for the coupling block; Lyapunov
    equation for the uncontrollable block; reassembly in the original
    coordinates.

    Returns
    -------
    AreSolution

    Raises
    ------
    SingularFeedthroughError
        Regular-case precondition fails.
    NotDissipativeError
        No admissible solution exists.
    """
    supply = as_supply(supply, sys)
    Kc, M, _, Ri = _are_data(sys, supply)
    d = sys.d
    if d == 0:
        return AreSolution(np.zeros((0, 0)), np.zeros(0, dtype=complex), False, 0.0)
    dec = controller_staircase(sys)
    c = dec.retained_dim
    b = dec.blocks
    A11, A12, A22, B1, C1, C2 = b["A11"], b["A12"], b["A22"], b["B1"], b["C1"], b["C2"]
    Abar11 = A11 + B1 @ Kc @ C1
    Abar12 = A12 + B1 @ Kc @ C2
    G1 = sym(B1 @ Ri @ B1.T)
    boundary = False
    X11, boundary = hamiltonian_solve(Abar11, G1, sym(C1.T @ M @ C1))
    Acl1 = Abar11 + G1 @ X11
    try:
        X12 = solve_sylvester(Acl1.T, A22, -X11 @ Abar12 - C1.T @ M @ C2)
        if supply.tag == PASSIVE and c > 0:
            X11i = pinv_sym(X11)
            E = C2 - C1 @ X11i @ X12
            Z = solve_lyapunov(A22, sym(E.T @ Ri @ E))
            X22 = Z + X12.T @ X11i @ X12
        else:
            rhs = Abar12.T @ X12 + X12.T @ Abar12 + X12.T @ G1 @ X12 + C2.T @ M @ C2
            X22 = solve_lyapunov(A22, sym(rhs))
    except SingularEquationError as exc:
        raise NotDissipativeError(f"staircase Riccati chain breaks down: {exc}", supply.tag,
                                  "lyapunov") from exc
    Xs = np.block([[X11, X12], [X12.T, X22]])
    X = sym(dec.T.T @ Xs @ dec.T)
    res = riccati_residual(sys, X, supply)
    scale = 1 + np.linalg.norm(sys.C.T @ M @ sys.C) + np.linalg.norm(sys.A) * (1 + np.linalg.norm(X))
    resn = float(np.linalg.norm(res))
    if resn > 1e-7 * scale:
        raise NotDissipativeError(f"Riccati residual {resn:.2e} too large", supply.tag, "residual")
    cl = np.linalg.eigvals(closed_loop(sys, X, supply))
    return AreSolution(X, cl, boundary, resn)


# ---------------------------------------------------------------------------
# available energy

def unbounded_direction(z):
    """Real PSD matrix ``z zbar^T + zbar z^T`` along which the LMI set is unbounded."""
    z = np.asarray(z, dtype=complex).reshape(-1, 1)
    return np.real(z @ z.conj().T + z.conj() @ z.T)


def _pick_witness(modes, tol):
    cands = [(lam, z) for lam, z in modes if lam.real <= tol]
    if not cands:
        return None
    best = max(cands, key=lambda p: (round(p[0].real / max(tol, 1e-12)), p[0].imag > 0, p[0].imag))
    return best


def available_energy(sys, supply=None, tol=1e-8):
    """Available energy (passive) or available storage (gain) of ``sys``.

    Regular feedthrough is handled by the Riccati chain on the observable part;
    otherwise the computation is delegated to the polynomial reduction chain.

    Returns
    -------
    QuadraticStorage, LmiReport
    """
    supply = as_supply(supply, sys)
    if supply.tag == PASSIVE and sys.m != sys.n:
        raise ValueError("passive supply requires m == n")
    diag = {}
    try:
        _regular_R(sys, supply)
        regular = True
    except SingularFeedthroughError:
        regular = False
    diag["regular"] = regular
    dec = observer_staircase(sys)
    r = dec.retained_dim
    if regular:
        obs = dec.retained_system(sys)
        sol = solve_min_are(obs, supply)
        Xh = sol.X
        if r and symmetric_eig(Xh)[0][-1] < -1e-9 * (1 + np.abs(Xh).max()):
            raise NotDissipativeError("minimal Riccati solution is not PSD", supply.tag, "psd")
        if sol.closed_loop.size and sol.closed_loop.real.max() > 1e-6 * (1 + np.abs(sol.closed_loop).max()):
            raise NotDissipativeError("closed loop has an observable right-half-plane mode",
                                      supply.tag, "closed-loop")
        Xfull = np.zeros((sys.d, sys.d))
        Xfull[:r, :r] = Xh
        X = sym(dec.T.T @ Xfull @ dec.T)
        diag["closed_loop"] = sol.closed_loop
        diag["hamiltonian_boundary"] = sol.boundary
        diag["residual"] = sol.residual
    else:
        from . import reduction
        run = reduction.run_chain_passive if supply.tag == PASSIVE else reduction.run_chain_gain
        st, factor, trace = run(sys)
        X = st.X
        diag["factor"] = factor
        diag["trace"] = trace
    if sys.d:
        rX = rank_tol(X, 1e-9 * max(1.0, np.abs(X).max()) * sys.d)[0]
        diag["rank_X"] = rX
        diag["observable_dim"] = r
        if rX != r:
            diag["kernel_mismatch"] = True
    modes = uncontrollable_modes(sys)
    diag["uncontrollable_modes"] = [lam for lam, _ in modes]
    witness = _pick_witness(modes, tol)
    storage = QuadraticStorage(X, supply)
    report = LmiReport(True, storage, witness is None, witness, diag)
    return storage, report


def lmi_feasibility_check(sys, X, supply=None, tol=1e-9):
    """Check ``X >= 0`` and ``Omega(X) >= 0`` (or ``Lambda(X) >= 0``)."""
    supply = as_supply(supply, sys)
    X = _check_X(sys, X)
    ex = symmetric_eig(X)[0][-1] if X.size else 0.0
    L = supply_lmi(sys, X, supply)
    el = symmetric_eig(L)[0][-1] if L.size else 0.0
    return FeasibilityResult(bool(ex >= -tol and el >= -tol), float(ex), float(el))
