"""General-case available energy through the polynomial reduction chain.

The chain works on exact behavioral pairs.  Each level is realized afresh by
:func:`polymat.realize_observable`; storage data ``(X, L, W)`` computed at the
bottom (a regular Riccati problem) are lifted level by level and re-expressed
in each fresh realization through a state similarity.

Deviation from the textbook chain: the congruence that normalizes a singular
feedthrough uses a positive rational diagonal ``Delta`` instead of an
identity block, so every pair stays exactly rational.  The lift of a
degree-reduction step scales inputs by ``Delta^{1/2}`` in floating point.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import polymat as pm
from .numkernel import sqrtm_psd, sym, symmetric_eig
from .polymat import PolyMatrix, PolyPair
from .statespace import (NotEquivalentError, StateSpaceSystem, observer_staircase,
                         realization_similarity, transfer_eval)
from .storage import (GAIN, PASSIVE, NotDissipativeError, QuadraticStorage, SupplyRate,
                      solve_min_are)

IDENTITY_TOL = 1e-7


class ChainError(ArithmeticError):
    """An internal consistency check of the reduction chain failed."""


@dataclass
class ReductionStep:
    """One level of the chain.

    ``forward`` holds the exact data of the step: ``skew`` (symmetrize),
    ``T, Y, Q12, Q22, delta`` (compress) or ``K, delta`` (degree-reduce).
    """
    kind: str
    forward: dict
    pair_before: PolyPair
    pair_after: PolyPair
    realization_before: Optional[StateSpaceSystem] = None
    realization_after: Optional[StateSpaceSystem] = None
    similarity_patch: Optional[np.ndarray] = None

    def to_dict(self):
        fwd = {}
        for k, v in self.forward.items():
            if isinstance(v, PolyMatrix):
                fwd[k] = v.to_strings()
            elif isinstance(v, list):
                fwd[k] = _fm_strings(v)
            else:
                fwd[k] = v
        return {
            "kind": self.kind,
            "forward": fwd,
            "pair_before": self.pair_before.to_strings(),
            "pair_after": self.pair_after.to_strings(),
            "similarity_patch": None if self.similarity_patch is None
            else np.asarray(self.similarity_patch).tolist(),
        }


@dataclass
class ReductionTrace:
    steps: list = field(default_factory=list)
    top_pair: Optional[PolyPair] = None
    notes: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "top_pair": None if self.top_pair is None else self.top_pair.to_strings(),
            "steps": [s.to_dict() for s in self.steps],
            "notes": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                      for k, v in self.notes.items()},
        }


@dataclass
class SpectralFactor:
    """``Z(xi) = W + L (xi I - A)^{-1} B`` on the base system."""
    L: np.ndarray
    W: np.ndarray
    base: StateSpaceSystem
    supply: str = PASSIVE

    @property
    def r(self):
        return self.W.shape[0]

    def evaluate(self, s):
        sys = self.base
        if sys.d == 0:
            return self.W.astype(complex)
        return self.W + self.L @ np.linalg.solve(s * np.eye(sys.d) - sys.A, sys.B.astype(complex))


@dataclass
class FactorReport:
    passed: bool
    factor_residual: float
    rank_ok: bool
    closed_loop_ok: Optional[bool]
    hypotheses_met: bool
    details: dict = field(default_factory=dict)


def _fm_strings(M):
    return [[f"{x.numerator}/{x.denominator}" for x in r] for r in M]


def _fm_is_symmetric(D):
    n = len(D)
    return all(D[i][j] == D[j][i] for i in range(n) for j in range(n))


def _diag_form(D):
    """``r`` if ``D = diag(Delta, 0)`` with ``Delta`` positive diagonal, else None."""
    n = len(D)
    r = 0
    while r < n and D[r][r] > 0:
        r += 1
    for i in range(n):
        for j in range(n):
            if (i != j or i >= r) and D[i][j] != 0:
                return None
    return r


def _const(M, rows, cols):
    return PolyMatrix.const(M, rows, cols) if M else PolyMatrix.zeros(rows, cols)


# ---------------------------------------------------------------------------
# forward steps

def symmetrize_step(pair, sys=None):
    """Replace the feedthrough by its symmetric part.

    ``P_k = P - Q (D - D^T)/2``; realizations keep ``A, B, C``.
    """
    D = pm.pair_feedthrough(pair)
    if _fm_is_symmetric(D):
        raise ValueError("feedthrough is already symmetric")
    n = pair.n
    skew = [[(D[i][j] - D[j][i]) / 2 for j in range(n)] for i in range(n)]
    Pk = pair.P - pair.Q @ _const(skew, n, n)
    new = PolyPair(Pk, pair.Q.copy())
    Dk = pm.pair_feedthrough(new)
    if any(Dk[i][j] != (D[i][j] + D[j][i]) / 2 for i in range(n) for j in range(n)):
        raise ChainError("symmetrized feedthrough mismatch")
    after = None
    if sys is not None:
        after = StateSpaceSystem(sys.A, sys.B, sys.C, sym(sys.D), sys.label)
    return ReductionStep("symmetrize", {"skew": skew}, pair, new, sys, after)


def _congruence(D, T2):
    """Columns ``T1a`` (D-orthogonal), ``T1b`` completing ``T2`` in null(D), and ``Delta``."""
    n = len(D)
    _, piv = pm.fm_rref(D) if n else (None, [])
    vs, delta = [], []
    for p in piv:
        v = [Fraction(int(i == p)) for i in range(n)]
        De = [D[i][p] for i in range(n)]
        for u, du in zip(vs, delta):
            c = sum(u[i] * De[i] for i in range(n)) / du
            v = [a - c * b for a, b in zip(v, u)]
        dv = sum(v[i] * sum(D[i][j] * v[j] for j in range(n)) for i in range(n))
        if dv <= 0:
            raise ChainError("feedthrough is not positive semidefinite")
        vs.append(v)
        delta.append(dv)
    null_D = pm.fm_nullspace(D, n)
    for t in T2:
        if any(sum(D[i][j] * t[j] for j in range(n)) != 0 for i in range(n)):
            raise ChainError("transfer-function nullspace is not inside the feedthrough nullspace")
    basis = list(T2)
    T1b = []
    for v in null_D:
        if pm.fm_rank(basis + [v]) > len(basis):
            basis.append(v)
            T1b.append(v)
    if len(vs) + len(T1b) + len(T2) != n:
        raise ChainError("congruence basis is incomplete")
    return vs, T1b, delta


def compress_step(pair, sys=None):
    """Split off the constant nullspace of ``H`` and normalize the feedthrough.

    Produces ``T`` with ``T^T D T = diag(Delta, 0)``, a unimodular ``Y`` and
    ``Y P T = diag(P_k, 0)``, ``Y Q T^{-T} = [[Q_k, Q12], [0, Q22]]``.
    """
    D = pm.pair_feedthrough(pair)
    if not _fm_is_symmetric(D):
        raise ValueError("compress needs a symmetric feedthrough")
    n = pair.n
    nr = pm.normal_rank(pair.P)
    r = _diag_form(D)
    if nr == n and r is not None:
        raise ValueError("pair already has a nonsingular P and normalized feedthrough")
    T2 = pm.constant_right_nullspace(pair.P)
    mk = n - nr
    if len(T2) != mk:
        raise ChainError("nullspace of the transfer function is not constant")
    T1a, T1b, delta = _congruence(D, T2)
    cols = T1a + T1b + T2
    T = pm.fm_T(cols, n)
    Ti = pm.fm_inv(T)
    TiT = pm.fm_T(Ti, n)
    nk = n - mk
    QT = pair.Q @ _const(TiT, n, n)
    PT = pair.P @ _const(T, n, n)
    Y = pm.triangularize_columns(QT, nk) if nk else PolyMatrix.identity(n)
    Qt, Pt = Y @ QT, Y @ PT
    if not Pt.sub(0, n, nk, n).is_zero() or not Pt.sub(nk, n, 0, n).is_zero():
        raise ChainError("transformed P is not block diagonal")
    if not Qt.sub(nk, n, 0, nk).is_zero():
        raise ChainError("transformed Q is not block upper triangular")
    Q22 = Qt.sub(nk, n, nk, n)
    if mk and not pm.is_unimodular(Q22):
        raise ChainError("Q22 is not unimodular; the input is not a positive-real pair")
    new = PolyPair(Pt.sub(0, nk, 0, nk), Qt.sub(0, nk, 0, nk))
    if nk:
        Dk = pm.pair_feedthrough(new)
        want = [[delta[i] if (i == j and i < len(delta)) else Fraction(0) for j in range(nk)]
                for i in range(nk)]
        if Dk != want:
            raise ChainError("compressed feedthrough is not diag(Delta, 0)")
    fwd = {"T": T, "Y": Y, "Q12": Qt.sub(0, nk, nk, n), "Q22": Q22, "delta": delta,
           "n_k": nk, "m_k": mk}
    return ReductionStep("compress", fwd, pair, new, sys, None)


def _is_pos_def(K):
    n = len(K)
    if not _fm_is_symmetric(K):
        return False
    return all(pm.fm_det([row[:k] for row in K[:k]]) > 0 for k in range(1, n + 1))


def degree_reduce_step(pair, sys=None):
    """Remove the pole at infinity of ``P^{-1} Q``.

    With ``lim P^{-1}Q / xi = diag(0, K)``: ``P_k = Q - P diag(0, K xi)``, ``Q_k = P``.
    """
    D = pm.pair_feedthrough(pair)
    r = _diag_form(D)
    n = pair.n
    detP = pair.P.det()
    if r is None or not detP or r >= n:
        raise ValueError("degree reduction needs nonsingular P and D = diag(Delta, 0) with a zero block")
    e = pm.pdeg(detP)
    N = pm.adjugate(pair.P) @ pair.Q
    if N.degree > e + 1:
        raise ChainError("P^{-1} Q has a pole of order above one at infinity")
    lead = detP[-1]
    J = [[x / lead for x in row] for row in N.coeff(e + 1)]
    if any(J[i][j] != 0 for i in range(n) for j in range(n) if i < r or j < r):
        raise ChainError("residue at infinity is not of the form diag(0, K)")
    K = [row[r:] for row in J[r:]]
    if not _is_pos_def(K):
        raise ChainError("residue at infinity is not positive definite")
    mk = n - r
    Kxi = PolyMatrix([[[] for _ in range(n)] for _ in range(n)], n, n)
    for i in range(mk):
        for j in range(mk):
            Kxi.entries[r + i][r + j] = pm.ptrim([Fraction(0), K[i][j]])
    new = PolyPair(pair.Q - pair.P @ Kxi, pair.P.copy())
    dq_old, dq_new = pair.Q.det(), new.Q.det()
    if pm.pdeg(dq_new) >= pm.pdeg(dq_old):
        raise ChainError("determinantal degree did not decrease")
    Dk = pm.pair_feedthrough(new)
    delta = [D[i][i] for i in range(r)]
    for i in range(r):
        for j in range(r):
            want = 1 / delta[i] if i == j else Fraction(0)
            if Dk[i][j] != want:
                raise ChainError("reduced feedthrough has the wrong leading block")
    fwd = {"K": K, "delta": delta, "r": r, "D_k": Dk}
    return ReductionStep("degree-reduce", fwd, pair, new, sys, None)


def _next_step(pair):
    if pair.n == 0:
        return None
    D = pm.pair_feedthrough(pair)
    if not _fm_is_symmetric(D):
        return symmetrize_step
    r = _diag_form(D)
    if r is None or pm.normal_rank(pair.P) < pair.n:
        return compress_step
    if r == pair.n:
        return None
    return degree_reduce_step


def reduce_pair(pair):
    """Run the chain to the bottom; returns the list of steps."""
    steps = []
    # each drop of (n, deg det Q) may need a symmetrize and a compress first
    limit = 3 * (max(len(pair.Q.det()) - 1, 0) + pair.n) + 2
    while True:
        op = _next_step(pair)
        if op is None:
            return steps
        step = op(pair)
        steps.append(step)
        pair = step.pair_after
        if len(steps) > limit:
            raise ChainError("reduction chain failed to terminate")


# ---------------------------------------------------------------------------
# lifting (X, L, W) back up the chain

def _lift_symmetrize(step, sys, X, L, W):
    skew = pm.fm_to_float(step.forward["skew"], sys.n, sys.n)
    return StateSpaceSystem(sys.A, sys.B, sys.C, sys.D + skew), X, L, W


def _lift_compress(step, sys, X, L, W):
    T = pm.fm_to_float(step.forward["T"])
    n = T.shape[0]
    nk = step.forward["n_k"]
    Ti = np.linalg.inv(T)
    d = sys.d
    Bp = np.hstack([sys.B, np.zeros((d, n - nk))]) @ Ti
    Cp = Ti.T @ np.vstack([sys.C, np.zeros((n - nk, d))])
    Dp = Ti.T @ _block_diag(sys.D, np.zeros((n - nk, n - nk))) @ Ti
    Wp = np.hstack([W, np.zeros((W.shape[0], n - nk))]) @ Ti
    return StateSpaceSystem(sys.A, Bp, Cp, Dp), X, L, Wp


def _block_diag(a, b):
    out = np.zeros((a.shape[0] + b.shape[0], a.shape[1] + b.shape[1]))
    out[:a.shape[0], :a.shape[1]] = a
    out[a.shape[0]:, a.shape[1]:] = b
    return out


def _lift_degree(step, sys, X, L, W):
    r = step.forward["r"]
    delta = np.array([float(x) for x in step.forward["delta"]])
    K = pm.fm_to_float(step.forward["K"])
    n = sys.n
    mk = n - r
    s = np.concatenate([np.sqrt(delta), np.ones(mk)])
    S = np.diag(s)
    Bs, Cs, Ds, Ws = sys.B @ S, S @ sys.C, S @ sys.D @ S, W @ S
    if r and np.max(np.abs(Ds[:r, :r] - np.eye(r))) > 1e-9:
        raise ChainError("scaled feedthrough does not have an identity leading block")
    B1, B2 = Bs[:, :r], Bs[:, r:]
    C1, C2 = Cs[:r], Cs[r:]
    D12, D21, D22 = Ds[:r, r:], Ds[r:, :r], Ds[r:, r:]
    Ki = np.linalg.inv(K)
    d = sys.d
    A = np.block([[sys.A - B1 @ C1, (B2 - B1 @ D12) @ Ki],
                  [D21 @ C1 - C2, (D21 @ D12 - D22) @ Ki]])
    B = np.block([[B1, np.zeros((d, mk))], [-D21, np.eye(mk)]])
    C = np.block([[-C1, -D12 @ Ki], [np.zeros((mk, d)), Ki]])
    Dn = _block_diag(np.eye(r), np.zeros((mk, mk)))
    Xn = _block_diag(X, sym(Ki))
    W1, W2 = Ws[:, :r], Ws[:, r:]
    Ln = np.hstack([L - W1 @ C1, (W2 - W1 @ D12) @ Ki])
    Wn = np.hstack([W1, np.zeros((W.shape[0], mk))])
    lifted = StateSpaceSystem(A, B @ S, S @ C, S @ Dn @ S)
    return lifted, Xn, Ln, Wn @ S


_LIFTS = {"symmetrize": _lift_symmetrize, "compress": _lift_compress,
          "degree-reduce": _lift_degree}


def _align(sys_s, sys_r, X, L):
    """Re-express ``X, L`` from ``sys_s`` coordinates in ``sys_r`` coordinates."""
    if sys_s.d == 0:
        return np.zeros((0, 0)), X, L
    T = realization_similarity(sys_s, sys_r, tol=1e-7)
    Ti = np.linalg.inv(T)
    return T, sym(Ti.T @ X @ Ti), L @ Ti


def _bottom(sys):
    """Regular bottom level: ``X`` from the Riccati chain, symmetric ``W``."""
    n, d = sys.n, sys.d
    if n == 0:
        return np.zeros((d, d)), np.zeros((0, d)), np.zeros((0, 0))
    W = sqrtm_psd(sys.D + sys.D.T)
    if d == 0:
        return np.zeros((0, 0)), np.zeros((n, 0)), W
    sol = solve_min_are(sys, PASSIVE)
    X = sol.X
    L = np.linalg.solve(W.T, sys.C - sys.B.T @ X)
    return X, L, W


def identities_residual(sys, X, L, W, supply=PASSIVE):
    """Largest relative residual of the three factor identities."""
    supply = supply.tag if isinstance(supply, SupplyRate) else supply
    if supply == PASSIVE:
        pairs = [(-sys.A.T @ X - X @ sys.A, L.T @ L),
                 (sys.C - sys.B.T @ X, W.T @ L),
                 (sys.D + sys.D.T, W.T @ W)]
    else:
        pairs = [(-sys.A.T @ X - X @ sys.A - sys.C.T @ sys.C, L.T @ L),
                 (-sys.D.T @ sys.C - sys.B.T @ X, W.T @ L),
                 (np.eye(sys.n) - sys.D.T @ sys.D, W.T @ W)]
    worst = 0.0
    for a, b in pairs:
        if a.size:
            scale = 1.0 + max(np.abs(a).max(), np.abs(b).max() if b.size else 0.0)
            worst = max(worst, float(np.abs(a - b).max()) / scale)
    return worst


def run_chain_passive(sys, pair_test=True):
    """Available energy of a passive system with arbitrary feedthrough.

    Returns
    -------
    storage : QuadraticStorage
        ``X_minus`` with value ``x^T X x / 2``.
    factor : SpectralFactor
    trace : ReductionTrace

    Raises
    ------
    NotDissipativeError
        The behavior is not a positive-real pair (the verdict carries a witness).
    """
    if sys.m != sys.n:
        raise ValueError("passive chain needs a square system")
    dec = observer_staircase(sys)
    obs = dec.retained_system(sys)
    pair, _ = pm.behavior_from_realization(sys)
    trace = ReductionTrace(top_pair=pair)
    if pair_test:
        verdict = pm.is_positive_real_pair(pair)
        trace.notes["pair_verdict"] = verdict.verdict
        if verdict.verdict == "fail":
            raise NotDissipativeError("behavior is not a positive-real pair", PASSIVE,
                                      verdict.failed_condition, verdict)
    try:
        steps = reduce_pair(pair)
        for st in steps:
            st.realization_before = pm.realize_observable(st.pair_before)
        bottom_pair = steps[-1].pair_after if steps else pair
        sys_k = pm.realize_observable(bottom_pair)
        X, L, W = _bottom(sys_k)
        for st in reversed(steps):
            st.realization_after = sys_k
            lifted, X, L, W = _LIFTS[st.kind](st, sys_k, X, L, W)
            T, X, L = _align(lifted, st.realization_before, X, L)
            st.similarity_patch = T
            sys_k = st.realization_before
    except (ChainError, NotEquivalentError, np.linalg.LinAlgError) as exc:
        verdict = pm.is_positive_real_pair(pair)
        if verdict.verdict == "fail":
            raise NotDissipativeError("behavior is not a positive-real pair", PASSIVE,
                                      verdict.failed_condition, verdict) from exc
        raise ChainError(f"reduction chain failed: {exc}") from exc
    trace.steps = steps
    T, Xh, Lh = _align_top(obs, sys_k, X, L)
    trace.notes["top_similarity"] = T
    r = dec.retained_dim
    d = sys.d
    Xs = np.zeros((d, d))
    Xs[:r, :r] = Xh
    Xfull = sym(dec.T.T @ Xs @ dec.T)
    Lfull = np.hstack([Lh, np.zeros((Lh.shape[0], d - r))]) @ dec.T
    res = identities_residual(sys, Xfull, Lfull, W, PASSIVE)
    trace.notes["identities_residual"] = res
    if res > IDENTITY_TOL:
        raise ChainError(f"factor identities residual {res:.2e}")
    if d and symmetric_eig(Xfull)[0][-1] < -1e-7 * (1 + np.abs(Xfull).max()):
        raise ChainError("lifted storage matrix is not positive semidefinite")
    factor = SpectralFactor(Lfull, W, sys, PASSIVE)
    return QuadraticStorage(Xfull, SupplyRate(PASSIVE)), factor, trace


def _align_top(obs, sys_r, X, L):
    """Map ``X, L`` from the realization of the top pair to the observable part."""
    if obs.d == 0:
        return np.zeros((0, 0)), np.zeros((0, 0)), L.reshape(L.shape[0], 0)
    T = realization_similarity(obs, sys_r, tol=1e-7)
    return T, sym(T.T @ X @ T), L @ T


# ---------------------------------------------------------------------------
# non-expansive systems

def _padded_exact(sys):
    es = pm.exact_system(sys)
    d, n, m = es.d, es.n, es.m
    A, B, C, D = es.A, es.B, es.C, es.D
    if m > n:
        B = [row + [Fraction(0)] * (m - n) for row in B] if d else pm.fm_zeros(0, m)
        D = [row + [Fraction(0)] * (m - n) for row in D]
    elif m < n:
        C = (C if d else [[] for _ in range(m)]) + [[Fraction(0)] * d for _ in range(n - m)]
        D = D + [[Fraction(0)] * n for _ in range(n - m)]
    return A, B, C, D, max(m, n)


def _exact_sys(A, B, C, D, d, N, label=""):
    return StateSpaceSystem(pm.fm_to_float(A, d, d), pm.fm_to_float(B, d, N),
                            pm.fm_to_float(C, N, d), pm.fm_to_float(D, N, N), label,
                            exact=(A, B, C, D))


def sigma_transform(sys, sigma):
    """Hat system ``(A_hat, B_hat, C_hat, D_hat)`` of a square system, with the sqrt(2) input and output scaling (floats)."""
    S = np.asarray(sigma, dtype=float)
    M = np.eye(sys.n) - sys.D @ S
    Mi = np.linalg.inv(M)
    return StateSpaceSystem(sys.A + sys.B @ S @ Mi @ sys.C, np.sqrt(2) * sys.B @ S @ Mi,
                            np.sqrt(2) * Mi @ sys.C, Mi @ (np.eye(sys.n) + sys.D @ S), sys.label)


def run_chain_gain(sys, pair_test=True):
    """Available storage of a non-expansive system (any feedthrough, any shape).

    Returns ``(storage, factor, trace)`` with storage value ``x^T X x``.
    """
    m, n = sys.m, sys.n
    d = sys.d
    pair, _ = pm.behavior_from_realization(sys)
    if pair_test:
        verdict = pm.is_bounded_real_pair(pair)
        if verdict.verdict == "fail":
            raise NotDissipativeError("behavior is not a bounded-real pair", GAIN,
                                      verdict.failed_condition, verdict)
    A, B, C, D, N = _padded_exact(sys)
    padded = _exact_sys(A, B, C, D, d, N, sys.label)
    ppair, _ = pm.behavior_from_realization(padded)
    sigma = pm.select_signature(ppair)
    s = [int(round(x)) for x in np.diag(sigma)]
    Sg = [[Fraction(s[i]) if i == j else Fraction(0) for j in range(N)] for i in range(N)]
    DS = pm.fm_mul(D, Sg)
    M = [[Fraction(int(i == j)) - DS[i][j] for j in range(N)] for i in range(N)]
    try:
        Mi = pm.fm_inv(M)
    except ZeroDivisionError as exc:
        raise ChainError("I - D Sigma is singular for the selected signature") from exc
    BSMi = pm.fm_mul(pm.fm_mul(B, Sg), Mi) if d else pm.fm_zeros(0, N)
    MiC = pm.fm_mul(Mi, C) if d else [[] for _ in range(N)]
    Ah = [[A[i][j] + sum(BSMi[i][k] * C[k][j] for k in range(N)) for j in range(d)]
          for i in range(d)]
    B2 = [[2 * x for x in row] for row in BSMi]
    IDS = [[Fraction(int(i == j)) + DS[i][j] for j in range(N)] for i in range(N)]
    Dh = pm.fm_mul(Mi, IDS)
    hat2 = _exact_sys(Ah, B2, MiC, Dh, d, N, sys.label)
    st, fac, trace = run_chain_passive(hat2, pair_test=pair_test)
    # hat2 is the float hat system in state coordinates scaled by sqrt(2)
    X = 2.0 * st.X
    Lhat = np.sqrt(2.0) * fac.L
    What = fac.W
    Cp = padded.C
    L = Lhat - What @ Cp / np.sqrt(2.0)
    W = What @ (np.eye(N) - padded.D @ sigma) @ sigma / np.sqrt(2.0)
    if m > n:
        W = W[:, :n]
    res = identities_residual(sys, X, L, W, GAIN)
    trace.notes["sigma"] = s
    trace.notes["gain_identities_residual"] = res
    if res > IDENTITY_TOL:
        raise ChainError(f"gain identities residual {res:.2e}")
    return QuadraticStorage(X, SupplyRate(GAIN)), SpectralFactor(L, W, sys, GAIN), trace


# ---------------------------------------------------------------------------
# verification

def _frequencies(count=33):
    return np.logspace(-3, 3, count) * (1 + 0.0137)


def verify_spectral_factor(sys, factor, seed=0, tol=1e-8):
    """Check the factor equation on the axis and the right-half-plane rank condition."""
    supply = factor.supply
    eigA = np.linalg.eigvals(sys.A) if sys.d else np.zeros(0)
    hyp = bool(np.all(eigA.real <= 1e-9 * (1 + np.abs(eigA).max(initial=0))))
    worst = 0.0
    used = 0
    for w in np.concatenate([_frequencies(), np.logspace(-2.5, 2.5, 40)]):
        if used == 33:
            break
        try:
            H = transfer_eval(sys, 1j * w)
            Z = factor.evaluate(1j * w)
        except (np.linalg.LinAlgError, ValueError):
            continue
        target = H + H.conj().T if supply == PASSIVE else np.eye(sys.n) - H.conj().T @ H
        got = Z.conj().T @ Z
        scale = 1.0 + np.abs(target).max(initial=0) + np.abs(got).max(initial=0)
        worst = max(worst, float(np.abs(got - target).max(initial=0)) / scale)
        used += 1
    rng = np.random.default_rng(seed)
    rank_ok = True
    d, r = sys.d, factor.r
    for _ in range(16):
        lam = complex(rng.uniform(0.01, 10), rng.uniform(-10, 10))
        Y = np.block([[lam * np.eye(d) - sys.A, -sys.B], [factor.L, factor.W]])
        if Y.shape[0] == 0:
            continue
        sv = np.linalg.svd(Y, compute_uv=False)
        if Y.shape[0] > Y.shape[1] or sv[min(Y.shape) - 1] <= 1e-9 * max(1.0, sv[0]):
            rank_ok = False
            break
    cl_ok = None
    W = factor.W
    if W.shape[0] == W.shape[1] and W.size and np.linalg.cond(W) < 1e12:
        Acl = sys.A - sys.B @ np.linalg.solve(W, factor.L) if d else np.zeros((0, 0))
        ev = np.linalg.eigvals(Acl) if d else np.zeros(0)
        cl_ok = bool(np.all(ev.real <= 1e-7 * (1 + np.abs(ev).max(initial=0))))
    passed = worst <= tol and rank_ok and cl_ok is not False
    return FactorReport(passed, worst, rank_ok, cl_ok, hyp, {"frequencies": used})


def spectral_factor(sys, supply=PASSIVE):
    """Storage and spectral factor for any feedthrough.

    Regular feedthrough uses the Riccati solution with ``W`` the symmetric
    square root of ``D + D^T`` (or ``I - D^T D``); otherwise the chain runs.

    Returns ``(storage, factor, trace)``; ``trace`` is None in the regular case.
    """
    from .storage import available_energy, is_regular
    supply = supply.tag if isinstance(supply, SupplyRate) else supply
    if not is_regular(sys, supply):
        run = run_chain_passive if supply == PASSIVE else run_chain_gain
        return run(sys)
    st, _ = available_energy(sys, supply)
    X = st.X
    if supply == PASSIVE:
        W = sqrtm_psd(sys.D + sys.D.T)
        L = np.linalg.solve(W.T, sys.C - sys.B.T @ X) if sys.d else np.zeros((sys.n, 0))
    else:
        W = sqrtm_psd(np.eye(sys.n) - sys.D.T @ sys.D)
        L = (np.linalg.solve(W.T, -sys.D.T @ sys.C - sys.B.T @ X) if sys.d
             else np.zeros((sys.n, 0)))
    return st, SpectralFactor(L, W, sys, supply), None
