import numpy as np
import numpy.testing as npt
import pytest

from ptfourwell import two_mode
from ptfourwell.two_mode import TwoModeParams


def test_eigenvalues_below_and_above_the_exceptional_point():
    rng = np.random.default_rng(11)
    for _ in range(50):
        j = rng.uniform(0.2, 3.0)
        g = rng.uniform(0.0, 2.0) * j
        if abs(g - j) < 1e-3:
            continue
        eig = two_mode.eigensystem(TwoModeParams(j, g))
        w = np.sqrt(complex(j * j - g * g))
        npt.assert_allclose(eig.energies, [w, -w], atol=1e-13)
        if g < j:
            assert abs(eig.energies[0].imag) == 0.0
        else:
            assert abs(eig.energies[0].real) == 0.0


def test_eigenvectors_solve_the_eigenproblem():
    for g in (0.0, 0.3, 0.8, 1.7):
        params = TwoModeParams(1.0, g)
        h = two_mode.hamiltonian(params)
        eig = two_mode.eigensystem(params)
        for energy, state in zip(eig.energies, eig.states):
            npt.assert_allclose(h @ state, energy * state, atol=1e-12)
            npt.assert_allclose(np.linalg.norm(state), 1.0, atol=1e-14)


def test_degenerate_flag_at_the_exceptional_point():
    assert two_mode.eigensystem(TwoModeParams(1.0, 1.0)).degenerate
    assert not two_mode.eigensystem(TwoModeParams(1.0, 0.5)).degenerate


def test_symmetry_residual_vanishes_below_and_not_above():
    for g in (0.0, 0.25, 0.9):
        eig = two_mode.eigensystem(TwoModeParams(1.0, g))
        for state in eig.states:
            assert two_mode.pt_symmetry_residual(state) < 1e-12
    for g in (1.1, 2.0):
        eig = two_mode.eigensystem(TwoModeParams(1.0, g))
        for state in eig.states:
            assert two_mode.pt_symmetry_residual(state) > 0.1


def test_symmetry_residual_is_phase_invariant():
    rng = np.random.default_rng(3)
    state = rng.normal(size=2) + 1j * rng.normal(size=2)
    base = two_mode.pt_symmetry_residual(state)
    for alpha in rng.uniform(0.0, 2.0 * np.pi, 10):
        rotated = np.exp(1j * alpha) * state
        npt.assert_allclose(two_mode.pt_symmetry_residual(rotated), base,
                            atol=1e-12)


def test_symmetry_residual_rejects_zero_state():
    with pytest.raises(ValueError):
        two_mode.pt_symmetry_residual(np.zeros(2))


def test_observables_match_direct_formulas():
    params = TwoModeParams(1.3, 0.4)
    state = np.array([0.6 + 0.2j, -0.1 + 0.7j])
    obs = two_mode.observables(state, params)
    npt.assert_allclose(obs.n1, abs(state[0]) ** 2, rtol=1e-15)
    npt.assert_allclose(obs.n2, abs(state[1]) ** 2, rtol=1e-15)
    expected = -2.0 * 1.3 * (state[0] * np.conj(state[1])).imag
    npt.assert_allclose(obs.j12, expected, rtol=1e-14)


def test_observable_equations_match_wave_function_dynamics():
    # closed (n1, n2, j12) equations against a finite difference of the
    # propagated wave function
    params = TwoModeParams(1.0, 0.35)
    state = two_mode.eigensystem(TwoModeParams(1.0, 0.1)).states[0]
    dt = 1e-5
    traj = two_mode.propagate(state, params, 2.0 * dt, dt)
    early = two_mode.observables(traj.states[0], params)
    late = two_mode.observables(traj.states[2], params)
    rhs = two_mode.observable_ode_rhs(
        two_mode.observables(traj.states[1], params), params)
    fd = ((late.n1 - early.n1) / (2.0 * dt),
          (late.n2 - early.n2) / (2.0 * dt),
          (late.j12 - early.j12) / (2.0 * dt))
    npt.assert_allclose(fd, rhs, atol=1e-7)


def test_propagation_matches_the_spectral_solution():
    params = TwoModeParams(1.0, 0.4)
    eig = two_mode.eigensystem(params)
    state = np.array([0.8, 0.1 - 0.5j])
    state /= np.linalg.norm(state)
    t_end = 3.0
    traj = two_mode.propagate(state, params, t_end, 0.05, rtol=1e-12)
    # expand in the (non-orthogonal) eigenbasis and evolve each component
    basis = eig.states.T
    coeff = np.linalg.solve(basis, state)
    exact = basis @ (np.exp(-1j * eig.energies * t_end) * coeff)
    npt.assert_allclose(traj.states[-1], exact, atol=1e-10)


def test_nonlinear_propagation_reduces_to_linear_at_zero_coupling():
    params = TwoModeParams(1.0, 0.3)
    state = np.array([0.9, -0.2 + 0.3j])
    state /= np.linalg.norm(state)
    lin = two_mode.propagate(state, params, 1.0, 0.01)
    non = two_mode.nonlinear_propagate(state, params, 0.0, 1.0, 0.01)
    npt.assert_allclose(non.states, lin.states, atol=1e-15)


def test_nonlinear_propagation_conserves_norm_without_gain_loss():
    params = TwoModeParams(1.0, 0.0)
    state = np.array([0.6, 0.8], dtype=complex)
    traj = two_mode.nonlinear_propagate(state, params, 2.5, 5.0, 1e-3)
    norms = np.sum(np.abs(traj.states) ** 2, axis=1)
    npt.assert_allclose(norms, 1.0, atol=1e-11)


def test_slow_gain_loss_ramp_tracks_the_balanced_eigenstate():
    from ptfourwell.prepare import GainLossSchedule, stationary_middle_state
    params = TwoModeParams(1.0, 0.0)
    schedule = GainLossSchedule.cosine_ramp(0.5, 40.0)
    state = np.array([1.0, 1.0]) / np.sqrt(2.0)  # Hermitian ground state
    traj = two_mode.propagate(state, params, 40.0, 0.05, schedule=schedule,
                              rtol=1e-10)
    target = stationary_middle_state(1.0, 0.5, branch=-1)
    final = traj.states[-1] / np.linalg.norm(traj.states[-1])
    assert abs(np.vdot(target, final)) > 0.9999
    # the amplitude of the tracked eigenstate is not conserved: the final
    # norm carries the eigenbasis skewness factor 1/sqrt(1 - (g/j)^2)
    norms = np.sum(np.abs(traj.states) ** 2, axis=1)
    npt.assert_allclose(norms[-1], 1.0 / np.sqrt(1.0 - 0.25), rtol=1e-2)
