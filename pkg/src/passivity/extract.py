"""Energy-extraction feedback, closed-loop simulation and energy accounting.

The optimal law ``u = K x`` is used when the Riccati closed loop on the
observable part is strictly stable.  Otherwise an epsilon-perturbed system is
solved instead; its law extracts at least ``x0^T X_eps x0 / 2`` and
``X_eps -> X_minus`` as ``eps -> 0``.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .numkernel import integrate_linear_ode, sym
from .statespace import StateSpaceSystem, observer_staircase, transfer_eval
from .storage import (GAIN, PASSIVE, SingularFeedthroughError, as_supply, available_energy,
                      lambda_lmi, omega, solve_min_are)

EPS_START = 0.2
EPS_MAX_HALVINGS = 12
EPS_STOP = 1e-6
HORIZON_CAP = 1e4
STABILITY_TOL = 1e-9


class MarginalClosedLoopError(ValueError):
    """The optimal closed loop has modes on the imaginary axis; use epsilon_feedback."""


@dataclass
class FeedbackLaw:
    """State feedback ``u = K x``.

    ``kind`` is ``'exact'`` or ``'epsilon'``; ``closed_loop_spectrum`` is the
    spectrum on the observable part, which alone drives ``u`` and ``y``.
    """
    K: np.ndarray
    kind: str
    supply: str
    closed_loop_spectrum: np.ndarray
    epsilon: Optional[float] = None
    X: Optional[np.ndarray] = None

    def __post_init__(self):
        ev = np.asarray(self.closed_loop_spectrum)
        if self.kind == "exact" and ev.size and ev.real.max() >= -STABILITY_TOL:
            self.kind = "epsilon"


@dataclass
class ExtractionRun:
    """Sampled closed-loop run with the extracted energy.

    ``extracted_energy`` is ``-int u^T y`` (passive) or ``int (y^T y - u^T u)``
    (gain); ``cumulative`` holds its running value at each sample.
    """
    x0: np.ndarray
    horizon: float
    step: float
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    cumulative: np.ndarray
    extracted_energy: float
    target: float
    supply: str = PASSIVE
    notes: dict = field(default_factory=dict)

    def table(self, precision=10):
        """Columnar text table: t, x..., u..., y..., cumulative energy."""
        d, n, m = self.x.shape[1], self.u.shape[1], self.y.shape[1]
        head = (["t"] + [f"x{i + 1}" for i in range(d)] + [f"u{i + 1}" for i in range(n)]
                + [f"y{i + 1}" for i in range(m)] + ["energy"])
        data = np.column_stack([self.t, self.x, self.u, self.y, self.cumulative])
        lines = ["\t".join(head)]
        fmt = f"{{:.{precision}g}}"
        lines += ["\t".join(fmt.format(v) for v in row) for row in data]
        return "\n".join(lines) + "\n"


def _observable(sys):
    dec = observer_staircase(sys)
    return dec, dec.retained_system(sys)


def _embed_gain(dec, K_obs, n):
    r = dec.retained_dim
    d = dec.T.shape[0]
    K = np.zeros((n, d))
    K[:, :r] = K_obs
    return K @ dec.T


def _embed_X(dec, X_obs):
    r = dec.retained_dim
    d = dec.T.shape[0]
    Xs = np.zeros((d, d))
    Xs[:r, :r] = X_obs
    return sym(dec.T.T @ Xs @ dec.T)


def _observable_X(dec, X):
    r = dec.retained_dim
    Xt = dec.T_inv.T @ X @ dec.T_inv
    return Xt[:r, :r]


def _gain_matrix(sys, X, supply):
    if supply == PASSIVE:
        R = sys.D + sys.D.T
        return -np.linalg.solve(R, sys.C - sys.B.T @ X)
    R = np.eye(sys.n) - sys.D.T @ sys.D
    return np.linalg.solve(R, sys.D.T @ sys.C + sys.B.T @ X)


def exact_feedback(sys, X, supply=None):
    """Optimal extraction law ``u = K x`` in the regular case.

    ``K = -(D + D^T)^{-1}(C - B^T X)`` (passive) or
    ``K = (I - D^T D)^{-1}(D^T C + B^T X)`` (gain).

    Raises
    ------
    SingularFeedthroughError
        ``D + D^T`` (or ``I - D^T D``) is not positive definite.
    MarginalClosedLoopError
        The closed loop on the observable part is not strictly stable.
    """
    supply = as_supply(supply, sys).tag
    R = sys.D + sys.D.T if supply == PASSIVE else np.eye(sys.n) - sys.D.T @ sys.D
    if R.size and np.linalg.eigvalsh(sym(R)).min() <= 1e-10:
        raise SingularFeedthroughError("feedthrough is singular; use epsilon_feedback")
    X = sym(np.asarray(X, dtype=float).reshape(sys.d, sys.d))
    K = _gain_matrix(sys, X, supply)
    dec, obs = _observable(sys)
    Kt = K @ dec.T_inv
    r = dec.retained_dim
    Acl = obs.A + obs.B @ Kt[:, :r]
    ev = np.linalg.eigvals(Acl) if r else np.zeros(0, dtype=complex)
    if ev.size and ev.real.max() >= -STABILITY_TOL * (1 + np.abs(ev).max()):
        raise MarginalClosedLoopError(
            "optimal closed loop is not strictly stable; use epsilon_feedback")
    return FeedbackLaw(K, "exact", supply, ev, None, X)


def epsilon_transform(sys, eps, supply=None):
    """Perturbed system used for epsilon-optimal extraction.

    Passive: ``A_e = A - B (I + eD)^{-1} e C``, ``B_e = B (I + eD)^{-1} sqrt(1 + e^2)``,
    ``C_e = (1 - e^2)/sqrt(1 + e^2) (I + eD)^{-1} C``, ``D_e = (D + eI)(I + eD)^{-1}``.
    Gain: ``(A, B, (1 - e) C, (1 - e) D)``.
    """
    if not 0 < eps < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    supply = as_supply(supply, sys).tag
    if supply == GAIN:
        return StateSpaceSystem(sys.A, sys.B, (1 - eps) * sys.C, (1 - eps) * sys.D, sys.label)
    n = sys.n
    M = np.eye(n) + eps * sys.D
    if np.linalg.cond(M) > 1e12:
        raise ValueError("I + eps D is singular")
    Mi = np.linalg.inv(M)
    s = np.sqrt(1 + eps ** 2)
    out = StateSpaceSystem(sys.A - eps * sys.B @ Mi @ sys.C, s * sys.B @ Mi,
                           (1 - eps ** 2) / s * Mi @ sys.C, (sys.D + eps * np.eye(n)) @ Mi,
                           sys.label)
    _check_transfer_law(sys, out, eps)
    return out


def _check_transfer_law(sys, out, eps):
    rng = np.random.default_rng(7)
    n = sys.n
    for _ in range(3):
        s = complex(rng.uniform(0.5, 2.0), rng.uniform(-2.0, 2.0))
        try:
            H = transfer_eval(sys, s)
            He = transfer_eval(out, s)
        except ValueError:
            continue
        want = (H + eps * np.eye(n)) @ np.linalg.inv(np.eye(n) + eps * H)
        if np.abs(He - want).max() > 1e-8 * (1 + np.abs(want).max()):
            raise ArithmeticError("epsilon transform does not satisfy its transfer law")


def epsilon_feedback(sys, eps, supply=None):
    """Epsilon-optimal law on the original inputs and the matrix ``X_eps``.

    Returns
    -------
    law : FeedbackLaw
        ``u = K x`` with kind ``'epsilon'``.
    X_eps : ndarray
        Minimal Riccati solution of the perturbed system, embedded in the
        original state coordinates (zero on the unobservable subspace).
    """
    supply = as_supply(supply, sys).tag
    dec, obs = _observable(sys)
    r = dec.retained_dim
    es = epsilon_transform(obs, eps, supply)
    try:
        sol = solve_min_are(es, supply)
    except (ValueError, ArithmeticError) as exc:
        raise ArithmeticError(f"Riccati solve failed at eps={eps}; try a smaller epsilon") from exc
    Xe = sol.X
    Ke = _gain_matrix(es, Xe, supply) if r else np.zeros((sys.n, 0))
    if supply == PASSIVE:
        M = np.eye(sys.n) + eps * obs.D
        K_obs = np.linalg.solve(M, np.sqrt(1 + eps ** 2) * Ke - eps * obs.C)
    else:
        K_obs = Ke
    Acl = obs.A + obs.B @ K_obs
    ev = np.linalg.eigvals(Acl) if r else np.zeros(0, dtype=complex)
    K = _embed_gain(dec, K_obs, sys.n)
    Xfull = _embed_X(dec, Xe)
    law = FeedbackLaw(K, "epsilon", supply, ev, eps, Xfull)
    return law, Xfull


def epsilon_schedule(sys, supply=None, start=EPS_START, halvings=EPS_MAX_HALVINGS,
                     stop=EPS_STOP):
    """Geometric sweep ``start * 2^-k`` until successive ``X_eps`` differ by < ``stop``.

    Returns a list of ``(eps, X_eps)``.
    """
    out = []
    for k in range(halvings + 1):
        eps = start * 2.0 ** (-k)
        _, Xe = epsilon_feedback(sys, eps, supply)
        out.append((eps, Xe))
        if len(out) > 1 and np.abs(out[-1][1] - out[-2][1]).max() < stop:
            break
    return out


def extrapolate_epsilon(sys, supply=None, schedule=None, order=0.5):
    """Richardson extrapolation of ``X_eps`` to ``eps = 0`` from the two smallest epsilons.

    The leading error term is taken as ``eps**order``.  Singular feedthrough
    gives a square-root leading term; a linear term left over is then
    ``O(eps)``.
    """
    sched = schedule if schedule is not None else epsilon_schedule(sys, supply)
    if len(sched) < 2:
        return sched[-1][1]
    (e1, X1), (e2, X2) = sched[-2], sched[-1]
    q = (e1 / e2) ** order
    return sym((q * X2 - X1) / (q - 1))


def default_horizon(law, cap=HORIZON_CAP):
    """``40 / |Re lambda|`` for the slowest observable closed-loop mode, capped."""
    ev = np.asarray(law.closed_loop_spectrum)
    if ev.size == 0:
        return 1.0
    slow = np.abs(ev.real).min()
    if slow <= 0:
        return cap
    return float(min(40.0 / slow, cap))


def _integrand(supply, u, y):
    if supply == PASSIVE:
        return -np.einsum("ij,ij->i", u, y)
    return np.einsum("ij,ij->i", y, y) - np.einsum("ij,ij->i", u, u)


def _finish_run(sys, x0, horizon, step, t, X, U, supply, target):
    Y = X @ sys.C.T + U @ sys.D.T
    f = _integrand(supply, U, Y)
    if t.size > 1:
        cum = np.concatenate([[0.0], cumulative_simpson(f, x=t)])
        total = float(simpson(f, x=t))
    else:
        cum, total = np.zeros(1), 0.0
    return ExtractionRun(x0, horizon, step, t, X, U, Y, cum, total, target, supply)


def simulate_extraction(sys, law, x0, horizon=None, step=1e-3, target=None):
    """Integrate the closed loop ``x' = (A + B K) x`` and account the extracted energy.

    ``target`` defaults to the available energy (storage) at ``x0``; pass a
    value to skip that computation.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if horizon is None:
        horizon = default_horizon(law)
    Acl = sys.A + sys.B @ law.K
    t, X = integrate_linear_ode(Acl, x0, horizon, step)
    U = X @ law.K.T
    if target is None:
        try:
            st, _ = available_energy(sys, law.supply)
            target = st.value(x0)
        except (ValueError, ArithmeticError):
            target = float("nan")
    return _finish_run(sys, x0, horizon, step, t, X, U, law.supply, target)


def simulate_input(sys, x0, input_fn, horizon, step, supply=None):
    """Open-loop RK4 run with an arbitrary input signal ``u = input_fn(t)``."""
    if step <= 0:
        raise ValueError("step must be positive")
    supply = as_supply(supply, sys).tag
    x = np.asarray(x0, dtype=float).reshape(-1)
    nsteps = int(np.ceil(horizon / step - 1e-9))
    t = np.linspace(0.0, horizon, nsteps + 1)
    A, B = sys.A, sys.B
    X = np.empty((t.size, x.size))
    U = np.empty((t.size, sys.n))
    X[0] = x
    for k in range(nsteps):
        h, tk = t[k + 1] - t[k], t[k]
        u0 = np.asarray(input_fn(tk), dtype=float).reshape(-1)
        um = np.asarray(input_fn(tk + h / 2), dtype=float).reshape(-1)
        u1 = np.asarray(input_fn(tk + h), dtype=float).reshape(-1)
        k1 = A @ x + B @ u0
        k2 = A @ (x + h / 2 * k1) + B @ um
        k3 = A @ (x + h / 2 * k2) + B @ um
        k4 = A @ (x + h * k3) + B @ u1
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        X[k + 1] = x
        U[k] = u0
    U[-1] = np.asarray(input_fn(t[-1]), dtype=float).reshape(-1)
    return _finish_run(sys, np.asarray(x0, dtype=float).reshape(-1), horizon, step, t, X, U,
                       supply, float("nan"))


def energy_identity_check(sys, X, run):
    """Absolute residual of the dissipation identity along a recorded run.

    Passive: ``2 int u^T y - [x^T X x] = int [x; u]^T Omega(X) [x; u]``.
    Gain: ``int (u^T u - y^T y) - [x^T X x] = int [x; u]^T Lambda(X) [x; u]``.
    """
    X = sym(np.asarray(X, dtype=float).reshape(sys.d, sys.d))
    xs, us, ys, t = run.x, run.u, run.y, run.t
    if run.supply == PASSIVE:
        M = omega(sys, X)
        lhs_f = 2 * np.einsum("ij,ij->i", us, ys)
    else:
        M = lambda_lmi(sys, X)
        lhs_f = np.einsum("ij,ij->i", us, us) - np.einsum("ij,ij->i", ys, ys)
    z = np.hstack([xs, us])
    rhs_f = np.einsum("ij,jk,ik->i", z, M, z)
    jump = xs[-1] @ X @ xs[-1] - xs[0] @ X @ xs[0]
    lhs = simpson(lhs_f, x=t) - jump
    rhs = simpson(rhs_f, x=t)
    return float(abs(lhs - rhs))

