"""Reference systems, rational random generators and the built-in regression checks.

Generators return a system together with an exactly rational certificate
``X`` satisfying the dissipation inequality, so tests have an upper bound for
the minimal storage that does not come from the code under test.
"""
from fractions import Fraction

import numpy as np

from . import polymat as pm
from .statespace import StateSpaceSystem

F = Fraction

CIRCUIT1_A = [[-1, -1, 1, 0], [-1, -1, 0, 1], [-1, 0, 0, 0], [0, -1, 0, 0]]
CIRCUIT1_B = [[1], [1], [1], [1]]
CIRCUIT1_C = [[-1, -1, 1, 1]]
CIRCUIT1_D = [[1]]
# observer staircase similarity used for the left circuit
CIRCUIT1_T = np.array([[1, 1, -1, -1], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float)
CIRCUIT1_WITNESS = np.array([1j, -1j, 1, -1])

CIRCUIT2_A = [[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]]
CIRCUIT2_B = [[0], [2], [0], [1]]
CIRCUIT2_C = [[0, 1, 0, 0]]
CIRCUIT2_D = [[0]]
CIRCUIT2_WITNESS = np.array([-1, 1j, 2, -2j])


def _fl(M):
    return [[F(x) for x in row] for row in M]


def from_rational(A, B, C, D, label=""):
    """System whose exact rational entries are kept alongside the floats."""
    A, B, C, D = (_fl(M) for M in (A, B, C, D))
    d = len(A)
    n = len(D[0]) if D else (len(B[0]) if B else 0)
    m = len(D)
    return StateSpaceSystem(pm.fm_to_float(A, d, d), pm.fm_to_float(B, d, n),
                            pm.fm_to_float(C, m, d), pm.fm_to_float(D, m, n), label,
                            exact=(A, B, C, D))


def circuit1():
    """Left circuit: state ``(i1, i2, v3, v4)``, transfer function 1."""
    return from_rational(CIRCUIT1_A, CIRCUIT1_B, CIRCUIT1_C, CIRCUIT1_D, "circuit1")


def circuit2():
    """Right circuit: state ``(i1 + i2, v3 + v4, i2, v4)``, transfer ``2s/(s^2 + 1)``."""
    return from_rational(CIRCUIT2_A, CIRCUIT2_B, CIRCUIT2_C, CIRCUIT2_D, "circuit2")


def circuit2_observable():
    """Two-state observable part of the right circuit."""
    return from_rational([[0, 1], [-1, 0]], [[0], [2]], [[0, 1]], [[0]], "circuit2-observable")


def scalar(a, b, c, d, label=""):
    return from_rational([[a]], [[b]], [[c]], [[d]], label or f"({a},{b},{c},{d})")


def memoryless(d=1):
    """``y = D u`` with no state."""
    return from_rational([], [], [], [[d]], "memoryless")


def circuit1_storage_direction():
    """Row vector ``v`` with ``S_a(x0) = (v x0)^2 / 8``."""
    return np.array([1.0, 1.0, -1.0, -1.0])


def circuit2_closed_form(t, x0):
    """Current ``i(t)`` of the right circuit under the optimal law."""
    t = np.asarray(t, dtype=float)
    e = np.exp(-t)
    return t * e * x0[0] + (t * e - e) * x0[1]


def circuit1_voltage(t, x0):
    """Port voltage of the left circuit under the optimal law."""
    return -0.5 * np.exp(-np.asarray(t, dtype=float)) * (x0[0] + x0[1] - x0[2] - x0[3])


# ---------------------------------------------------------------------------
# rational random generators

def _rat(rng, lo=-2, hi=2, dens=(1, 2)):
    return F(int(rng.integers(lo, hi + 1)), int(rng.choice(dens)))


def _rand(rng, r, c, **kw):
    return [[_rat(rng, **kw) for _ in range(c)] for _ in range(r)]


def _skew(rng, k):
    J = pm.fm_zeros(k, k)
    for i in range(k):
        for j in range(i + 1, k):
            J[i][j] = _rat(rng)
            J[j][i] = -J[i][j]
    return J


def _add(A, B):
    return [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def _scale(A, c):
    return [[c * a for a in r] for r in A]


def _mm(A, B, inner):
    if not A or not B or inner == 0:
        rows = len(A)
        cols = len(B[0]) if B else 0
        return pm.fm_zeros(rows, cols)
    return pm.fm_mul(A, B)


def _T(A, cols):
    return pm.fm_T(A, cols)


def _unimodular(rng, d):
    """Integer matrix with determinant one (lower triangular times upper triangular)."""
    Lw = pm.fm_eye(d)
    Up = pm.fm_eye(d)
    for i in range(d):
        for j in range(i):
            Lw[i][j] = F(int(rng.integers(-1, 2)))
            Up[j][i] = F(int(rng.integers(-1, 2)))
    return pm.fm_mul(Lw, Up) if d else []


def _transform(A, B, C, X, T):
    d = len(A)
    if d == 0:
        return A, B, C, X
    Ti = pm.fm_inv(T)
    A2 = pm.fm_mul(pm.fm_mul(T, A), Ti)
    B2 = pm.fm_mul(T, B) if B and B[0] else B
    C2 = pm.fm_mul(C, Ti) if C else C
    X2 = pm.fm_mul(pm.fm_mul(_T(Ti, d), X), Ti)
    return A2, B2, C2, X2


class GeneratedSystem:
    """Generated system with its exact certificate and the structure that was planted."""

    def __init__(self, sys, X_cert, kind, notes=None):
        self.sys = sys
        self.X_cert = X_cert
        self.kind = kind
        self.notes = notes or {}

    @property
    def X(self):
        return pm.fm_to_float(self.X_cert, self.sys.d, self.sys.d)


def _with_unobserved(rng, core, k, n, kind):
    """Append ``k`` states driven by the input and the old state but not seen at the output."""
    A0, B0, C0, D0 = core.sys.exact
    X0 = core.X_cert
    d1 = len(A0)
    d = d1 + k
    A = ([list(r) + [F(0)] * k for r in A0]
         + [f + z for f, z in zip(_rand(rng, k, d1), _rand(rng, k, k))])
    B = [list(r) for r in B0] + _rand(rng, k, n)
    C = [list(r) + [F(0)] * k for r in C0]
    X = [[X0[i][j] if (i < d1 and j < d1) else F(0) for j in range(d)] for i in range(d)]
    A, B, C, X = _transform(A, B, C, X, _unimodular(rng, d))
    D = [list(r) for r in D0]
    m = len(D)
    sys = StateSpaceSystem(pm.fm_to_float(A, d, d), pm.fm_to_float(B, d, n),
                           pm.fm_to_float(C, m, d), pm.fm_to_float(D, m, n), kind,
                           exact=(A, B, C, D))
    return GeneratedSystem(sys, X, kind, {"planted_block": k})


PASSIVE_KINDS = ("regular", "singular", "lossless-uncontrollable", "unobservable",
                 "uncontrollable")


def random_passive(rng, d, n, kind="regular"):
    """Passive system with an exact certificate ``X`` (``Omega(X) = [L W]^T [L W]``).

    ``X`` is a positive diagonal, ``X A = J - L^T L / 2`` with ``J`` skew,
    ``C = B^T X + W^T L``, ``D = W^T W / 2 + N`` with ``N`` skew.  ``kind``
    plants structure: a singular ``W``; a lossless uncontrollable block
    (``L = 0`` and ``B = 0`` there); an unobservable block; an uncontrollable
    but observable block.  A random unimodular similarity hides the blocks.
    """
    if kind not in PASSIVE_KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    k = int(rng.integers(1, d)) if d > 1 and kind not in ("regular", "singular") else 0
    d1 = d - k
    if kind == "unobservable" and k:
        return _with_unobserved(rng, random_passive(rng, d1, n, "regular"), k, n, kind)
    Xd = [F(int(rng.integers(1, 4))) for _ in range(d)]
    X = [[Xd[i] if i == j else F(0) for j in range(d)] for i in range(d)]
    rW = n if kind != "singular" else int(rng.integers(0, n))
    r = max(rW, 1)
    L = _rand(rng, r, d)
    W = _rand(rng, rW, n) + [[F(0)] * n for _ in range(r - rW)]
    if kind == "regular":
        while pm.fm_rank(W) < n:
            W = _rand(rng, n, n)
    B = _rand(rng, d, n)
    J = _skew(rng, d)
    if kind == "lossless-uncontrollable":
        for i in range(d1, d):
            for j in range(r):
                L[j][i] = F(0)
            B[i] = [F(0)] * n
            for j in range(d1):
                J[i][j] = J[j][i] = F(0)
    elif kind == "uncontrollable":
        for i in range(d1, d):
            B[i] = [F(0)] * n
        LtL = _mm(_T(L, d), L, r)
        for i in range(d1, d):
            for j in range(d1):
                J[i][j] = LtL[i][j] / 2
                J[j][i] = -J[i][j]
    XA = _add(J, _scale(_mm(_T(L, d), L, r), F(-1, 2)))
    A = [[XA[i][j] / Xd[i] for j in range(d)] for i in range(d)]
    C = _add(_mm(_T(B, n), X, d), _mm(_T(W, n), L, r))
    N = _skew(rng, n)
    D = _add(_scale(_mm(_T(W, n), W, r), F(1, 2)), N)
    T = _unimodular(rng, d)
    A, B, C, X = _transform(A, B, C, X, T)
    sys = StateSpaceSystem(pm.fm_to_float(A, d, d), pm.fm_to_float(B, d, n),
                           pm.fm_to_float(C, n, d), pm.fm_to_float(D, n, n), kind,
                           exact=(A, B, C, D))
    return GeneratedSystem(sys, X, kind, {"planted_block": k})


_PYTH = (F(0), F(3, 5), F(4, 5), F(5, 13), F(12, 13), F(8, 17))


def _cayley(rng, k):
    """Rational orthogonal matrix ``(I - S)(I + S)^{-1}`` for a random skew ``S``."""
    if k == 0:
        return []
    S = _skew(rng, k)
    I = pm.fm_eye(k)
    return pm.fm_mul(_add(I, _scale(S, F(-1))), pm.fm_inv(_add(I, S)))


def _pyth_partner(s):
    if s == 1:
        return F(0)
    return {F(0): F(1), F(3, 5): F(4, 5), F(4, 5): F(3, 5), F(5, 13): F(12, 13),
            F(12, 13): F(5, 13), F(8, 17): F(15, 17)}[s]


GAIN_KINDS = ("regular", "unit-singular-value", "unobservable")


def random_gain(rng, d, n, m, kind="regular"):
    """Non-expansive system with an exact certificate ``X`` (``Lambda(X) = [L W]^T [L W]``).

    ``D = U S V`` with rational orthogonal ``U, V`` and singular values whose
    complements ``sqrt(1 - s^2)`` are rational, ``W = diag(sqrt(1 - s^2)) V``,
    ``X A = J - (L^T L + C^T C)/2``, ``B = -X^{-1}(C^T D + L^T W)``.
    """
    if kind not in GAIN_KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    if kind == "unobservable" and d > 1:
        k = int(rng.integers(1, d))
        return _with_unobserved(rng, random_gain(rng, d - k, n, m, "regular"), k, n, kind)
    U, V = _cayley(rng, m), _cayley(rng, n)
    q = min(m, n)
    svals = [_PYTH[int(rng.integers(0, len(_PYTH)))] for _ in range(q)]
    if kind == "unit-singular-value" and q:
        svals[0] = F(1)
    S = pm.fm_zeros(m, n)
    for i in range(q):
        S[i][i] = svals[i]
    D = pm.fm_mul(pm.fm_mul(U, S), V) if m and n else pm.fm_zeros(m, n)
    comp = [_pyth_partner(svals[i]) if i < q else F(1) for i in range(n)]
    W = [[comp[i] * V[i][j] for j in range(n)] for i in range(n)]
    Xd = [F(int(rng.integers(1, 4))) for _ in range(d)]
    X = [[Xd[i] if i == j else F(0) for j in range(d)] for i in range(d)]
    L = _rand(rng, n, d)
    C = _rand(rng, m, d)
    J = _skew(rng, d)
    M = _add(_mm(_T(L, d), L, n), _mm(_T(C, d), C, m))
    XA = _add(J, _scale(M, F(-1, 2)))
    A = [[XA[i][j] / Xd[i] for j in range(d)] for i in range(d)]
    CD = _add(_mm(_T(C, d), D, m), _mm(_T(L, d), W, n))
    B = [[-CD[i][j] / Xd[i] for j in range(n)] for i in range(d)]
    T = _unimodular(rng, d)
    A, B, C, X = _transform(A, B, C, X, T)
    sys = StateSpaceSystem(pm.fm_to_float(A, d, d), pm.fm_to_float(B, d, n),
                           pm.fm_to_float(C, m, d), pm.fm_to_float(D, m, n), kind,
                           exact=(A, B, C, D))
    return GeneratedSystem(sys, X, kind, {"singular_values": [str(s) for s in svals]})


# ---------------------------------------------------------------------------
# built-in regression checks on the reference circuits and scalar examples

class CheckResult:
    def __init__(self, name, passed, detail=""):
        self.name = name
        self.passed = bool(passed)
        self.detail = detail

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def _maxdiff(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.abs(a - b).max(initial=0.0))


def _proportional(z, w, tol=1e-9):
    z, w = np.asarray(z, dtype=complex), np.asarray(w, dtype=complex)
    k = int(np.argmax(np.abs(w)))
    c = z[k] / w[k]
    return np.abs(z - c * w).max() <= tol * max(1.0, np.abs(z).max())


def _check_staircase():
    from .statespace import observer_staircase, transfer_eval
    out = []
    c1 = circuit1()
    dec = observer_staircase(c1)
    b = dec.blocks
    ok = (dec.retained_dim == 1 and abs(b["A11"][0, 0] + 1) < 1e-12
          and abs(b["B1"][0, 0]) < 1e-12 and abs(b["C1"][0, 0]) > 0.5)
    out.append(("circuit1 observable part (A11, B1) = (-1, 0)", ok, f"r={dec.retained_dim}"))
    c2 = circuit2()
    dec2 = observer_staircase(c2)
    obs = dec2.retained_system(c2)
    ev = np.sort_complex(np.linalg.eigvals(obs.A))
    ok = dec2.retained_dim == 2 and _maxdiff(ev, [-1j, 1j]) < 1e-12 and \
        abs(transfer_eval(obs, 1.0)[0, 0] - 1) < 1e-12
    out.append(("circuit2 observable part has dimension 2", ok, f"r={dec2.retained_dim}"))
    h1 = transfer_eval(c1, 0.3 + 2.0j)[0, 0]
    h2 = transfer_eval(c2, 1.0)[0, 0]
    out.append(("circuit1 transfer function is 1", abs(h1 - 1) < 1e-12, f"H={h1}"))
    out.append(("circuit2 transfer at s=1 is 1", abs(h2 - 1) < 1e-12, f"H={h2}"))
    return out


def _check_witnesses():
    from .statespace import left_null_residual, uncontrollable_modes
    out = []
    for name, sys, w in (("circuit1", circuit1(), CIRCUIT1_WITNESS),
                         ("circuit2", circuit2(), CIRCUIT2_WITNESS)):
        res = left_null_residual(sys, 1j, w)
        modes = uncontrollable_modes(sys)
        hit = any(abs(lam - 1j) < 1e-9 and _proportional(z, w, 1e-8) for lam, z in modes)
        out.append((f"{name} uncontrollable mode j with the stated left null vector",
                    res <= 1e-12 and hit, f"residual={res:.1e}"))
    return out


def _check_pairs():
    from .polymat import PolyPair, is_bounded_real_pair, is_positive_real_pair, verify_witness
    one = [F(1), F(1)]
    pair = PolyPair.scalar(one, one)
    br = is_bounded_real_pair(pair)
    pr = is_positive_real_pair(pair)
    ok = br.verdict == "fail" and br.failed_condition == "c" and verify_witness(pair, br, "br")
    return [("(s+1, s+1) is not a bounded-real pair, condition (c)", ok,
             f"br={br.verdict}/{br.failed_condition}"),
            ("(s+1, s+1) is a positive-real pair", pr.verdict == "pass", pr.verdict)]


def _check_storage():
    from .storage import (a_gamma, available_energy, gamma_are, lmi_feasibility_check, omega,
                          solve_min_are, unbounded_direction)
    from .statespace import observer_staircase
    out = []
    obs = scalar(-1, 0, -1, 1, "circuit1-observable")
    Om = omega(obs, [[0.25]])
    out.append(("Omega(1/4) on the circuit1 observable part",
                _maxdiff(Om, [[0.5, -1], [-1, 2]]) < 1e-15, str(Om.tolist())))
    g, ag = gamma_are(obs, [[0.25]]), a_gamma(obs, [[0.25]])
    out.append(("Gamma(1/4) = 0 and A_Gamma = -1", abs(g[0, 0]) < 1e-15 and abs(ag[0, 0] + 1) < 1e-15,
                f"Gamma={g[0, 0]}, A_Gamma={ag[0, 0]}"))
    sol = solve_min_are(obs, "passive")
    out.append(("minimal Riccati solution on the circuit1 observable part is 1/4",
                abs(sol.X[0, 0] - 0.25) < 1e-9, f"X={sol.X[0, 0]!r}"))
    c1 = circuit1()
    st, rep = available_energy(c1, "passive")
    T = CIRCUIT1_T
    want = T.T @ np.diag([0.25, 0, 0, 0]) @ T
    out.append(("circuit1 X_minus = T^T diag(1/4, 0, 0, 0) T", _maxdiff(st.X, want) < 1e-9,
                f"err={_maxdiff(st.X, want):.1e}"))
    rng = np.random.default_rng(0)
    v = circuit1_storage_direction()
    errs = [abs(st.value(x) - (v @ x) ** 2 / 8) for x in rng.standard_normal((5, 4))]
    out.append(("circuit1 S_a(x0) = (i1 + i2 - v3 - v4)^2 / 8", max(errs) < 1e-8,
                f"err={max(errs):.1e}"))
    lam, z = rep.unbounded_witness if rep.unbounded_witness else (None, None)
    ok = (not rep.bounded_above and lam is not None and abs(lam - 1j) < 1e-9
          and _proportional(z, CIRCUIT1_WITNESS, 1e-8))
    out.append(("circuit1 storage set is unbounded above with witness j", ok, f"lambda={lam}"))
    fe = lmi_feasibility_check(c1, st.X, "passive")
    fe2 = lmi_feasibility_check(c1, st.X + 3.0 * unbounded_direction(CIRCUIT1_WITNESS), "passive")
    out.append(("circuit1 LMI holds at X_minus and along the unbounded direction",
                fe.passed and fe2.passed, f"{fe.min_eig_lmi:.1e}, {fe2.min_eig_lmi:.1e}"))
    fe0 = lmi_feasibility_check(c1, np.zeros((4, 4)), "passive")
    out.append(("circuit1 LMI fails at X = 0", not fe0.passed, f"{fe0.min_eig_lmi:.2f}"))
    st0, _ = available_energy(memoryless(1), "passive")
    out.append(("memoryless y = u has zero available energy", st0.X.size == 0, str(st0.X.shape)))
    return out


def _check_chain():
    from .reduction import run_chain_passive
    from .storage import available_energy
    out = []
    st, fac, tr = run_chain_passive(circuit2())
    ok = (_maxdiff(st.X, np.diag([0.5, 0.5, 0, 0])) < 1e-7 and np.abs(fac.L).max(initial=0) < 1e-7
          and np.abs(fac.W).max(initial=0) < 1e-7 and fac.r == 0)
    out.append(("circuit2 chain gives X_minus = diag(1/2, 1/2, 0, 0), L = W = 0", ok,
                f"steps={[s.kind for s in tr.steps]}"))
    c1 = circuit1()
    st1, _, tr1 = run_chain_passive(c1)
    ref, _ = available_energy(c1, "passive")
    out.append(("circuit1 chain stops at once and matches the Riccati route",
                not tr1.steps and _maxdiff(st1.X, ref.X) < 1e-9, f"steps={len(tr1.steps)}"))
    return out


def _check_extraction(seed=0):
    from .extract import epsilon_feedback, epsilon_transform, exact_feedback, simulate_extraction
    from .storage import available_energy
    out = []
    c1 = circuit1()
    st, _ = available_energy(c1, "passive")
    law = exact_feedback(c1, st.X, "passive")
    out.append(("circuit1 optimal law K = (1, 1, -1, -1)/2",
                _maxdiff(law.K, [[0.5, 0.5, -0.5, -0.5]]) < 1e-9, str(np.round(law.K, 12).tolist())))
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(4)
    run = simulate_extraction(c1, law, x0, 30.0, 1e-3, target=st.value(x0))
    verr = _maxdiff(run.y[:, 0], circuit1_voltage(run.t, x0))
    eerr = abs(run.extracted_energy - st.value(x0))
    out.append(("circuit1 closed-loop voltage and extracted energy", verr < 1e-5 and eerr < 1e-5,
                f"v err={verr:.1e}, energy err={eerr:.1e}"))
    obs = circuit2_observable()
    ok, worst = True, 0.0
    for eps in (0.1, 0.01):
        es = epsilon_transform(obs, eps, "passive")
        s = np.sqrt(1 + eps ** 2)
        worst = max(worst, _maxdiff(es.A, [[0, 1], [-1, -2 * eps]]),
                    _maxdiff(es.B, [[0], [2 * s]]), _maxdiff(es.C, [[0, (1 - eps ** 2) / s]]),
                    _maxdiff(es.D, [[eps]]))
        law2, Xe = epsilon_feedback(obs, eps, "passive")
        worst = max(worst, _maxdiff(Xe, (1 - eps) ** 2 / (2 * (1 + eps ** 2)) * np.eye(2)),
                    _maxdiff(law2.K, [[0, -1]]))
    ok = worst < 1e-9
    out.append(("circuit2 perturbed system, X_eps and u = -y", ok, f"err={worst:.1e}"))
    c2 = circuit2()
    law3, _ = epsilon_feedback(c2, 0.1, "passive")
    x0 = rng.standard_normal(4)
    target = 0.25 * (x0[0] ** 2 + x0[1] ** 2)
    run = simulate_extraction(c2, law3, x0, 40.0, 1e-3, target=target)
    ierr = _maxdiff(run.u[:, 0], circuit2_closed_form(run.t, x0))
    eerr = abs(run.extracted_energy - target)
    out.append(("circuit2 closed-loop current and extracted energy", ierr < 1e-5 and eerr < 1e-5,
                f"i err={ierr:.1e}, energy err={eerr:.1e}"))
    return out


def reference_checks(seed=0):
    """Run every reference-circuit check; returns a list of :class:`CheckResult`."""
    results = []
    for fn in (_check_staircase, _check_witnesses, _check_pairs, _check_storage, _check_chain):
        try:
            results += [CheckResult(*r) for r in fn()]
        except Exception as exc:  # report, do not abort the remaining groups
            results.append(CheckResult(fn.__name__.lstrip("_"), False, f"{type(exc).__name__}: {exc}"))
    try:
        results += [CheckResult(*r) for r in _check_extraction(seed)]
    except Exception as exc:
        results.append(CheckResult("check_extraction", False, f"{type(exc).__name__}: {exc}"))
    return results
