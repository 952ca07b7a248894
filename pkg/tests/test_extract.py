import numpy as np
import pytest

from oracles import expm_trajectory, feedback_limit_energy
from passivity import fixtures as fx
from passivity.extract import (FeedbackLaw, MarginalClosedLoopError, default_horizon,
                               energy_identity_check, epsilon_feedback, epsilon_schedule,
                               epsilon_transform, exact_feedback, extrapolate_epsilon,
                               simulate_extraction, simulate_input)
from passivity.reduction import run_chain_passive
from passivity.statespace import StateSpaceSystem
from passivity.storage import GAIN, PASSIVE, SingularFeedthroughError, available_energy

R2 = np.sqrt(2)


def test_exact_feedback_circuit1():
    c1 = fx.circuit1()
    st, _ = available_energy(c1, PASSIVE)
    law = exact_feedback(c1, st.X, PASSIVE)
    assert law.kind == "exact"
    assert np.allclose(law.K, [[0.5, 0.5, -0.5, -0.5]], atol=1e-12)


def test_exact_feedback_scalar():
    s = fx.scalar(-1, 1, 1, 1)
    X = 3 - 2 * R2
    law = exact_feedback(s, [[X]], PASSIVE)
    assert law.K[0, 0] == pytest.approx((X - 1) / 2) and law.K[0, 0] == pytest.approx(-0.41421, abs=1e-5)
    assert law.closed_loop_spectrum[0].real == pytest.approx(-R2)


def test_exact_feedback_zero_output():
    s = StateSpaceSystem([[-1.0]], [[1.0]], [[0.0]], [[1.0]])
    assert np.allclose(exact_feedback(s, [[0.0]], PASSIVE).K, 0)


def test_exact_feedback_guards():
    with pytest.raises(SingularFeedthroughError):
        exact_feedback(fx.scalar(-1, 1, 1, 0), [[1.0]], PASSIVE)
    # y = u plus a lossless mode seen at the output: the optimal loop is marginal
    s = fx.from_rational([[0, 1], [-1, 0]], [[0], [1]], [[0, 1]], [[1]])
    st, _ = available_energy(s, PASSIVE)
    with pytest.raises(MarginalClosedLoopError):
        exact_feedback(s, st.X + np.eye(2), PASSIVE)


def test_epsilon_transform_circuit2():
    obs = fx.circuit2_observable()
    for eps in (0.1, 0.01):
        es = epsilon_transform(obs, eps, PASSIVE)
        s = np.sqrt(1 + eps ** 2)
        assert np.allclose(es.A, [[0, 1], [-1, -2 * eps]])
        assert np.allclose(es.B, [[0], [2 * s]])
        assert np.allclose(es.C, [[0, (1 - eps ** 2) / s]])
        assert np.allclose(es.D, [[eps]])


def test_epsilon_transform_scalar_and_limit():
    s = fx.scalar(-1, 2, 3, 0)
    es = epsilon_transform(s, 0.05, PASSIVE)
    assert es.D[0, 0] == pytest.approx(0.05)
    assert es.A[0, 0] == pytest.approx(-1 - 0.05 * 6)
    small = epsilon_transform(s, 1e-9, PASSIVE)
    for a, b in ((small.A, s.A), (small.B, s.B), (small.C, s.C), (small.D, s.D)):
        assert np.abs(a - b).max() <= 1e-8
    with pytest.raises(ValueError):
        epsilon_transform(s, 0.0, PASSIVE)


def test_epsilon_feedback_circuit2():
    obs = fx.circuit2_observable()
    for eps in (0.1, 0.01):
        law, Xe = epsilon_feedback(obs, eps, PASSIVE)
        assert np.allclose(Xe, (1 - eps) ** 2 / (2 * (1 + eps ** 2)) * np.eye(2), atol=1e-9)
        assert np.allclose(law.K, [[0, -1]], atol=1e-9)  # u = -y
        assert law.kind == "epsilon"


def test_epsilon_sweep_increases():
    s = fx.scalar(-1, 1, 1, 0)
    vals = [epsilon_feedback(s, e, PASSIVE)[1][0, 0] for e in (0.2, 0.1, 0.05)]
    assert vals[0] < vals[1] < vals[2] < 1


def test_schedule_is_geometric():
    sched = epsilon_schedule(fx.scalar(-1, 1, 1, 0), PASSIVE)
    eps = [e for e, _ in sched]
    assert eps[0] == 0.2 and all(b == a / 2 for a, b in zip(eps, eps[1:]))
    assert len(eps) <= 13


@pytest.mark.parametrize("sys_, x_ref", [
    (fx.scalar(-1, 1, 1, 0), 1.0),
    (fx.scalar(-0.5, 0.5, 1, 0), 2.0),
    (fx.scalar(-2, 1, 3, 0), 3.0),
])
def test_extrapolation_matches_chain(sys_, x_ref):
    st, _, _ = run_chain_passive(sys_)
    assert st.X[0, 0] == pytest.approx(x_ref, abs=1e-9)
    Xx = extrapolate_epsilon(sys_, PASSIVE)
    assert abs(Xx[0, 0] - st.X[0, 0]) <= 2e-4 * max(1.0, x_ref)


def test_extrapolation_circuit2():
    Xx = extrapolate_epsilon(fx.circuit2_observable(), PASSIVE)
    assert np.allclose(Xx, 0.5 * np.eye(2), atol=2e-4)


def test_simulation_circuit1_voltage():
    c1 = fx.circuit1()
    st, _ = available_energy(c1, PASSIVE)
    law = exact_feedback(c1, st.X, PASSIVE)
    x0 = np.array([1.0, -0.5, 0.25, 2.0])
    run = simulate_extraction(c1, law, x0, 30.0, 1e-3)
    assert np.abs(run.y[:, 0] - fx.circuit1_voltage(run.t, x0)).max() <= 1e-5
    assert run.extracted_energy == pytest.approx(st.value(x0), abs=1e-5)
    assert run.extracted_energy <= run.target + 1e-6
    grid = run.t[::5000]
    ref = expm_trajectory(c1.A + c1.B @ law.K, x0, grid)
    assert np.allclose(run.x[::5000], ref, atol=1e-9)


def test_simulation_circuit2_current():
    c2 = fx.circuit2()
    law, _ = epsilon_feedback(c2, 0.05, PASSIVE)
    x0 = np.array([0.3, -1.2, 0.7, 0.1])
    run = simulate_extraction(c2, law, x0, 40.0, 1e-3, target=0.25 * (x0[0] ** 2 + x0[1] ** 2))
    assert np.abs(run.u[:, 0] - fx.circuit2_closed_form(run.t, x0)).max() <= 1e-5
    assert run.extracted_energy == pytest.approx(run.target, abs=1e-5)


def test_zero_state_zero_energy():
    s = fx.scalar(-1, 1, 1, 1)
    law = FeedbackLaw(np.zeros((1, 1)), "epsilon", PASSIVE, np.array([-1.0]))
    run = simulate_extraction(s, law, [0.0], 5.0, 1e-2)
    assert run.extracted_energy == 0


def test_supremum_approach_singular():
    s = fx.scalar(-1, 1, 1, 0)
    x0 = np.array([1.3])
    st, _, _ = run_chain_passive(s)
    target = st.value(x0)
    energies = []
    for eps in (0.1, 0.05, 0.025):
        law, Xe = epsilon_feedback(s, eps, PASSIVE)
        run = simulate_extraction(s, law, x0, step=1e-3, target=target)
        energies.append(run.extracted_energy)
        assert run.extracted_energy <= target + 1e-6
        assert target - run.extracted_energy <= 0.5 * x0 @ (st.X - Xe) @ x0 + 1e-4
    assert energies[0] <= energies[1] <= energies[2]


def test_feedback_limit_oracle():
    s = fx.scalar(-1, 1, 1, 0)
    for k in (10, 100):
        law = FeedbackLaw(np.array([[-float(k)]]), "epsilon", PASSIVE, np.array([-1.0 - k]))
        run = simulate_extraction(s, law, [1.0], 40.0 / (1 + k), 0.01 / (1 + k), target=0.5)
        assert run.extracted_energy == pytest.approx(feedback_limit_energy(k, 1.0), abs=1e-7)


def test_default_horizon():
    law = FeedbackLaw(np.zeros((1, 1)), "epsilon", PASSIVE, np.array([-0.5, -2.0]))
    assert default_horizon(law) == pytest.approx(80.0)
    law = FeedbackLaw(np.zeros((1, 1)), "epsilon", PASSIVE, np.array([-1e-9]))
    assert default_horizon(law) == 1e4


def test_energy_identity_zero_storage():
    s = fx.scalar(-1, 1, 1, 1)
    run = simulate_input(s, [0.5], lambda t: np.array([np.cos(t)]), 3.0, 1e-3, PASSIVE)
    assert energy_identity_check(s, [[0.0]], run) <= 1e-5 * 3.0


def test_energy_identity_random_passive():
    rng = np.random.default_rng(4)
    g = fx.random_passive(rng, 3, 2, "regular")
    st, _ = available_energy(g.sys, PASSIVE)
    run = simulate_input(g.sys, rng.standard_normal(3),
                         lambda t: np.array([np.sin(2 * t), np.cos(t)]), 4.0, 1e-3, PASSIVE)
    assert energy_identity_check(g.sys, st.X, run) <= 1e-5 * 4.0


def test_energy_identity_gain():
    s = fx.scalar(-1, 1, 1, 0)
    run = simulate_input(s, [1.0], lambda t: np.array([np.sin(3 * t)]), 4.0, 1e-3, GAIN)
    assert energy_identity_check(s, [[1.0]], run) <= 1e-5 * 4.0


def test_run_table():
    s = fx.scalar(-1, 1, 1, 1)
    law = FeedbackLaw(np.array([[-0.4]]), "epsilon", PASSIVE, np.array([-1.4]))
    run = simulate_extraction(s, law, [1.0], 0.01, 1e-3, target=1.0)
    lines = run.table().splitlines()
    assert lines[0].split("\t") == ["t", "x1", "u1", "y1", "energy"]
    assert len(lines) == run.t.size + 1
