import numpy as np
import pytest

from koopnnm.dynamics import (
    IntegratorConfig,
    Trajectory,
    default_horizon,
    integrate,
    nmse,
    order_decomposition,
    spectral_trajectory,
    uniform_times,
)
from koopnnm.exceptions import ContractError, DegenerateReferenceError, StiffnessError
from koopnnm.koopman import compute_identity_modes
from koopnnm.manifold import eval_states, validation_nmse
from koopnnm.models import TwoDofParams, build_2dof_cubic
from koopnnm.polyfield import PolynomialVectorField, jacobian_at_origin
from koopnnm.spectral import decompose, eigenfunction_linear

from conftest import random_stable_matrix
from oracles import nmse_loop


def test_exponential_decay():
    field = PolynomialVectorField.from_matrix([[-1.0]])
    traj = integrate(field, [1.0], [0.0, 0.5, 1.0])
    assert abs(traj.states[-1, 0] - 0.3678794412) < 1e-8


def test_zero_initial_state_stays_put(two_dof):
    field, _, _ = two_dof(4.3)
    traj = integrate(field, np.zeros(4), uniform_times(5.0, 11))
    assert np.all(traj.states == 0)


def test_linear_energy_decays_monotonically():
    p = TwoDofParams(k_nl=0.0)
    field = build_2dof_cubic(p)
    traj = integrate(field, [0.4, -0.2, 0.1, 0.3], uniform_times(30.0, 600))
    x1, x2, y1, y2 = traj.states.T
    energy = 0.5 * (y1**2 + y2**2 + p.k_a * (x1**2 + x2**2) + p.k_b * (x1 - x2) ** 2)
    assert np.all(np.diff(energy) < 0)


def test_integrate_contracts(two_dof):
    field, _, _ = two_dof(4.3)
    with pytest.raises(ContractError):
        integrate(field, np.zeros(3), [0.0, 1.0])
    with pytest.raises(ContractError):
        integrate(field, np.ones(4), [0.5, 1.0])
    with pytest.raises(ContractError):
        integrate(field, np.ones(4), [0.0, 1.0, 1.0])
    with pytest.raises(ContractError):
        IntegratorConfig(rel_tol=0)


def test_blow_up_guard():
    field = PolynomialVectorField.from_terms(1, [(0, (1,), -1.0), (0, (3,), 1.0)])
    with pytest.raises(StiffnessError):
        integrate(field, [2.0], uniform_times(5.0, 10), max_norm=1e3)


def test_linear_eigenfunction_along_flow(rng):
    A = random_stable_matrix(rng, 2)
    field = PolynomialVectorField.from_matrix(A)
    dec = decompose(A)
    x0 = rng.normal(size=4)
    times = uniform_times(4.0, 41)
    traj = integrate(field, x0, times)
    for k in range(4):
        s0 = eigenfunction_linear(dec, k, x0)
        got = np.array([eigenfunction_linear(dec, k, x) for x in traj.states])
        np.testing.assert_allclose(got, s0 * np.exp(dec.eigenvalues[k] * times), atol=1e-8)


def test_linear_spectral_trajectory_is_modal_solution(rng):
    A = random_stable_matrix(rng, 2)
    field = PolynomialVectorField.from_matrix(A)
    dec = decompose(A)
    tab = compute_identity_modes(field, dec, (0, 1), 5)
    xi0 = 0.7 - 0.4j
    times = uniform_times(default_horizon(tab), 500)
    est = spectral_trajectory(tab, xi0, times)
    modal = 2 * (np.outer(np.exp(tab.lam * times), tab[(1, 0)]) * xi0).real
    np.testing.assert_allclose(est.states, modal, atol=1e-10)
    ref = integrate(field, est.states[0], times)
    np.testing.assert_allclose(est.states, ref.states, atol=1e-8)


def test_zero_xi_gives_origin(two_dof):
    _, _, tab = two_dof(4.3)
    assert np.all(spectral_trajectory(tab, 0, uniform_times(3.0, 7)).states == 0)


@pytest.mark.parametrize("k_b", [4.1, 4.7])
def test_two_evaluation_paths_agree(two_dof, k_b):
    _, _, tab = two_dof(k_b)
    xi0 = 0.5 * np.exp(2.0j)
    times = uniform_times(default_horizon(tab), 200)
    est = spectral_trajectory(tab, xi0, times)
    direct = eval_states(tab, xi0 * np.exp(tab.lam * times))
    np.testing.assert_allclose(est.states, direct, atol=1e-12)


def test_semigroup(two_dof):
    _, _, tab = two_dof(4.3)
    xi0 = 0.4 + 0.3j
    t1, t2 = 2.7, np.linspace(0, 5, 11)
    a = spectral_trajectory(tab, xi0, t1 + t2).states
    b = spectral_trajectory(tab, xi0 * np.exp(tab.lam * t1), t2).states
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_nmse_hand_values():
    t = np.arange(4.0)
    ref = Trajectory(t, np.array([[1.0], [-1.0], [1.0], [-1.0]]))
    assert nmse(ref, ref) == 0.0
    assert nmse(Trajectory(t, np.zeros((4, 1))), ref) == pytest.approx(100.0)


def test_nmse_matches_loop_oracle():
    t = np.linspace(0, 10, 201)
    ref = np.column_stack([np.sin(0.5 * t), np.cos(0.3 * t)])
    est = np.roll(ref, 1, axis=0)
    est[0] = ref[0]
    got = nmse(Trajectory(t, est), Trajectory(t, ref))
    assert got > 0
    assert got == pytest.approx(nmse_loop(est.tolist(), ref.tolist()), rel=1e-12)


def test_nmse_errors():
    t = np.arange(3.0)
    with pytest.raises(DegenerateReferenceError):
        nmse(Trajectory(t, np.zeros((3, 2))), Trajectory(t, np.ones((3, 2))))
    with pytest.raises(ContractError):
        nmse(Trajectory(t, np.zeros((3, 2))), Trajectory(t + 1, np.ones((3, 2))))


def test_trajectory_validation():
    with pytest.raises(ContractError):
        Trajectory([0.0, 1.0], np.zeros((3, 2)))
    with pytest.raises(ContractError):
        Trajectory([1.0, 0.0], np.zeros((2, 2)))


def test_order_decomposition_sums_to_trajectory(two_dof):
    _, _, tab = two_dof(4.1)
    xi0 = 0.6 * np.exp(0.3j)
    times = uniform_times(default_horizon(tab), 300)
    parts = order_decomposition(tab, xi0, times, range(1, 51))
    total = sum(p.states for _, p in parts)
    np.testing.assert_allclose(total, spectral_trajectory(tab, xi0, times).states, atol=1e-12)
    for h, p in parts:
        if h % 2 == 0:
            assert np.all(p.states == 0)
    with pytest.raises(ContractError):
        order_decomposition(tab, xi0, times, [51])


def test_linear_decomposition_only_first_order(rng):
    A = random_stable_matrix(rng, 2)
    field = PolynomialVectorField.from_matrix(A)
    tab = compute_identity_modes(field, decompose(A), (0, 1), 4)
    times = uniform_times(5.0, 50)
    parts = dict(order_decomposition(tab, 0.5j, times, [1, 2, 3, 4]))
    np.testing.assert_allclose(parts[1].states, spectral_trajectory(tab, 0.5j, times).states, atol=1e-14)
    for h in (2, 3, 4):
        assert np.max(np.abs(parts[h].states)) < 1e-12


def test_tolerance_refinement_does_not_move_nmse(two_dof):
    field, _, tab = two_dof(4.3)
    cfg = IntegratorConfig()
    a = validation_nmse(tab, field, 0.6, cfg)
    b = validation_nmse(tab, field, 0.6, cfg.refined())
    assert np.max(np.abs(a - b)) < 1e-3


def test_default_horizon(two_dof):
    _, _, tab = two_dof(4.3)
    assert default_horizon(tab) == pytest.approx(10 * 2 * np.pi / tab.lam.imag)
