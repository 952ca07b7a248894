from fractions import Fraction as F

import numpy as np
import pytest

from oracles import scalar_are_roots
from passivity import fixtures as fx
from passivity.statespace import StateSpaceSystem
from passivity.storage import (GAIN, PASSIVE, NotDissipativeError, SingularFeedthroughError,
                               SupplyRate, a_gamma, a_pi, available_energy, gamma_are,
                               lambda_lmi, lmi_feasibility_check, omega, pi_are, solve_min_are,
                               unbounded_direction)

OBS1 = fx.scalar(-1, 0, -1, 1)
R2 = np.sqrt(2)


def test_supply_rate():
    assert SupplyRate(PASSIVE).scale == 0.5 and SupplyRate(GAIN).scale == 1.0
    with pytest.raises(ValueError):
        SupplyRate("other")


def test_omega_examples():
    assert np.allclose(omega(OBS1, [[0.25]]), [[0.5, -1], [-1, 2]])
    assert np.allclose(omega(OBS1, [[0.0]]), [[0, -1], [-1, 2]])
    Om = omega(fx.scalar(-1, 1, 1, 1), [[3 - 2 * R2]])
    w = np.linalg.eigvalsh(Om)
    assert w[0] == pytest.approx(0, abs=1e-12) and w[1] > 0


def test_lambda_examples():
    s = StateSpaceSystem([[-1.0]], [[1.0]], [[0.0]], [[0.0]])
    assert np.allclose(lambda_lmi(s, [[2.0]]), [[4, -2], [-2, 1]])
    assert np.allclose(lambda_lmi(fx.scalar(-1, 1, 1, 0), [[1.0]]), [[1, -1], [-1, 1]])
    s = StateSpaceSystem([[-1.0]], [[1.0]], [[3.0]], [[1.0]])
    assert np.allclose(lambda_lmi(s, [[0.0]]), [[-9, -3], [-3, 0]])


def test_gamma_examples():
    assert gamma_are(OBS1, [[0.25]])[0, 0] == pytest.approx(0, abs=1e-15)
    assert a_gamma(OBS1, [[0.25]])[0, 0] == pytest.approx(-1)
    s = fx.scalar(-1, 1, 1, 1)
    X = [[3 - 2 * R2]]
    assert gamma_are(s, X)[0, 0] == pytest.approx(0, abs=1e-12)
    assert a_gamma(s, X)[0, 0] == pytest.approx(-R2)
    s0 = StateSpaceSystem([[-1.0]], [[1.0]], [[0.0]], [[1.0]])
    assert gamma_are(s0, [[0.0]])[0, 0] == 0


def test_pi_examples():
    s = fx.scalar(-1, 1, 1, 0)
    assert pi_are(s, [[1.0]])[0, 0] == pytest.approx(0)
    assert a_pi(s, [[1.0]])[0, 0] == pytest.approx(0)
    for x in (0.0, 0.5, 2.0):
        assert pi_are(s, [[x]])[0, 0] == pytest.approx(-(x - 1) ** 2)
    s2 = StateSpaceSystem([[-1.0]], [[0.0]], [[2.0]], [[0.0]])
    assert pi_are(s2, [[3.0]])[0, 0] == pytest.approx(6 - 4)


def test_min_are_matches_quadratic_formula():
    roots, cl = scalar_are_roots(-1.0, 1.0, 1.0, 1.0)
    sol = solve_min_are(fx.scalar(-1, 1, 1, 1), PASSIVE)
    i = int(np.argmin(cl))
    assert sol.X[0, 0] == pytest.approx(roots[i], abs=1e-12)
    assert sol.closed_loop[0] == pytest.approx(cl[i], abs=1e-12)


@pytest.mark.parametrize("a, b, c, d", [(-2, 1, 3, 2), (-1, 2, 1, 1), (-3, 1, 1, 5), (-0.5, 1, 0.2, 1)])
def test_min_are_scalar_family(a, b, c, d):
    roots, cl = scalar_are_roots(float(a), float(b), float(c), float(d))
    sol = solve_min_are(fx.scalar(a, b, c, d), PASSIVE)
    k = [i for i in range(2) if cl[i] <= 1e-12]
    assert len(k) == 1
    assert sol.X[0, 0] == pytest.approx(roots[k[0]], rel=1e-10)


def test_min_are_examples():
    assert solve_min_are(OBS1, PASSIVE).X[0, 0] == pytest.approx(0.25, abs=1e-12)
    sol = solve_min_are(fx.scalar(-1, 1, 1, 0), GAIN)
    assert sol.X[0, 0] == pytest.approx(1, abs=1e-9) and sol.boundary


def test_min_are_singular_feedthrough():
    with pytest.raises(SingularFeedthroughError):
        solve_min_are(fx.scalar(-1, 1, 1, 0), PASSIVE)


def test_available_energy_circuit1():
    st, rep = available_energy(fx.circuit1(), PASSIVE)
    T = fx.CIRCUIT1_T
    assert np.allclose(st.X, T.T @ np.diag([0.25, 0, 0, 0]) @ T, atol=1e-9)
    assert rep.feasible and not rep.bounded_above
    (c, v), = st.terms()
    assert c == pytest.approx(0.125) and np.allclose(v, [1, 1, -1, -1])


def test_available_energy_memoryless_and_gain():
    st, _ = available_energy(fx.memoryless(1), PASSIVE)
    assert st.X.size == 0 and st.value(np.zeros(0)) == 0
    st, _ = available_energy(fx.scalar(-1, 1, 1, 0), GAIN)
    assert st.value([2.0]) == pytest.approx(4.0)


@pytest.mark.parametrize("sys_, supply", [
    (fx.scalar(-1, 1, 1, -1), PASSIVE),
    (fx.scalar(1, 1, 1, 1), PASSIVE),
    (fx.scalar(-1, 1, 3, 0), GAIN),
    (fx.scalar(-1, 2, -1, 1), PASSIVE),
    (fx.scalar(F(1, 2), 1, 2, 3), PASSIVE),
])
def test_not_dissipative(sys_, supply):
    with pytest.raises(NotDissipativeError):
        available_energy(sys_, supply)


def test_passive_needs_square():
    s = StateSpaceSystem([[-1.0]], [[1.0, 0.0]], [[1.0]], [[0.0, 0.0]])
    with pytest.raises(ValueError):
        available_energy(s, PASSIVE)


def test_lmi_feasibility_examples():
    c1 = fx.circuit1()
    st, _ = available_energy(c1, PASSIVE)
    assert lmi_feasibility_check(c1, st.X, PASSIVE).passed
    assert not lmi_feasibility_check(c1, np.zeros((4, 4)), PASSIVE).passed
    D = unbounded_direction(fx.CIRCUIT1_WITNESS)
    for alpha in (0.1, 1.0, 100.0):
        assert lmi_feasibility_check(c1, st.X + alpha * D, PASSIVE).passed


def test_bounded_above_for_controllable():
    g = fx.random_passive(np.random.default_rng(5), 3, 1, "regular")
    _, rep = available_energy(g.sys, PASSIVE)
    assert rep.bounded_above and rep.unbounded_witness is None
