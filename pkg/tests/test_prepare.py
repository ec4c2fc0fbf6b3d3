import numpy as np
import numpy.testing as npt
import pytest

from ptfourwell import four_mode, prepare, two_mode
from ptfourwell.four_mode import FourModeParams
from ptfourwell.two_mode import TwoModeParams


def test_gamma_ramp_endpoints_and_clamping():
    assert prepare.gamma_ramp(-1.0, 0.5, 10.0) == (0.0, 0.0)
    assert prepare.gamma_ramp(0.0, 0.5, 10.0) == (0.0, 0.0)
    assert prepare.gamma_ramp(10.0, 0.5, 10.0) == (0.5, 0.0)
    assert prepare.gamma_ramp(25.0, 0.5, 10.0) == (0.5, 0.0)
    g, _ = prepare.gamma_ramp(5.0, 0.5, 10.0)
    npt.assert_allclose(g, 0.25, atol=1e-15)


def test_gamma_ramp_slope_matches_a_finite_difference():
    eps = 1e-7
    for t in np.linspace(0.5, 9.5, 13):
        up = prepare.gamma_ramp(t + eps, 0.5, 10.0)[0]
        dn = prepare.gamma_ramp(t - eps, 0.5, 10.0)[0]
        slope = prepare.gamma_ramp(t, 0.5, 10.0)[1]
        npt.assert_allclose((up - dn) / (2.0 * eps), slope, atol=1e-6)


def test_schedule_constructors():
    const = prepare.GainLossSchedule.constant(0.3)
    assert const(17.0) == (0.3, 0.0)
    ramp = prepare.GainLossSchedule.cosine_ramp(0.5, 8.0)
    assert ramp(8.0) == (0.5, 0.0)
    with pytest.raises(ValueError):
        prepare.GainLossSchedule.cosine_ramp(0.5, 0.0)


def test_adiabaticity_margin_grows_with_slower_ramps():
    omega = 2.0 * np.sqrt(1.0 - 0.25)
    quick = prepare.adiabaticity_margin(
        prepare.GainLossSchedule.cosine_ramp(0.5, 10.0), omega)
    slow = prepare.adiabaticity_margin(
        prepare.GainLossSchedule.cosine_ramp(0.5, 100.0), omega)
    npt.assert_allclose(slow / quick, 10.0, rtol=1e-6)
    assert prepare.adiabaticity_margin(
        prepare.GainLossSchedule.constant(0.5), omega) == np.inf


def test_stationary_state_is_a_balanced_eigenstate():
    for branch in (+1, -1):
        state = prepare.stationary_middle_state(1.0, 0.5, branch=branch)
        h = two_mode.hamiltonian(TwoModeParams(1.0, 0.5))
        energy = branch * np.sqrt(1.0 - 0.25)
        npt.assert_allclose(h @ state, energy * state, atol=1e-14)
        npt.assert_allclose(abs(state[0]) ** 2, 0.5, atol=1e-14)
        npt.assert_allclose(abs(state[1]) ** 2, 0.5, atol=1e-14)
        obs = two_mode.observables(state, TwoModeParams(1.0, 0.5))
        npt.assert_allclose(obs.j12, 0.5, atol=1e-14)


def test_minus_branch_continues_the_hermitian_ground_state():
    state = prepare.stationary_middle_state(1.0, 0.0, branch=-1)
    npt.assert_allclose(np.abs(np.vdot(state, [1.0, 1.0] / np.sqrt(2.0))),
                        1.0, atol=1e-14)


def test_broken_phase_raises():
    with pytest.raises(prepare.BrokenPhase):
        prepare.stationary_middle_state(1.0, 1.0)
    with pytest.raises(prepare.BrokenPhase):
        prepare.oscillatory_middle_state(1.0, 1.2)


def test_oscillatory_state_is_the_weighted_superposition():
    weight = 0.4
    state = prepare.oscillatory_middle_state(1.0, 0.5, weight)
    eig = two_mode.eigensystem(TwoModeParams(1.0, 0.5))
    combo = eig.states_raw[0] + weight * eig.states_raw[1]
    combo /= np.linalg.norm(combo)
    npt.assert_allclose(state, combo, atol=1e-14)
    npt.assert_allclose(np.sum(np.abs(state) ** 2), 1.0, atol=1e-14)


def test_embedding_satisfies_the_current_conditions():
    gamma, j12 = 0.5, 1.0
    middle = prepare.stationary_middle_state(j12, gamma)
    scale, phases = prepare.auto_control_scale(middle, 40.0, 40.0, gamma, j12,
                                               with_phases=True)
    spec = prepare.EmbeddingSpec(middle, 40.0, 40.0, gamma, scale)
    state = prepare.embed_pt_state(spec, initial_phases=phases)
    npt.assert_allclose(abs(state[0]) ** 2, 40.0, rtol=1e-12)
    npt.assert_allclose(abs(state[3]) ** 2, 40.0, rtol=1e-12)
    npt.assert_allclose(state[1:3], middle, atol=1e-15)
    params = FourModeParams(0.0, 0.0, 0.0, j12, 0.0, control_scale=scale)
    obs = four_mode.observables(state, params)
    j01, j23 = four_mode.controller_tunneling(obs, scale)
    applied = params.with_controls(0.0, 0.0, j01, j23)
    res = four_mode.condition_residuals(state, applied, gamma)
    assert max(abs(res.r1), abs(res.r2)) < 1e-11


def test_auto_control_scale_matches_the_strongest_coupling():
    gamma, j12 = 0.4, 1.0
    middle = prepare.oscillatory_middle_state(j12, gamma)
    scale, phases = prepare.auto_control_scale(middle, 30.0, 50.0, gamma, j12,
                                               with_phases=True)
    spec = prepare.EmbeddingSpec(middle, 30.0, 50.0, gamma, scale)
    state = prepare.embed_pt_state(spec, initial_phases=phases)
    obs = four_mode.observables(
        state, FourModeParams(0.0, 0.0, 0.0, j12, 0.0, control_scale=scale))
    j01, j23 = four_mode.controller_tunneling(obs, scale)
    npt.assert_allclose(max(abs(j01), abs(j23)), j12, rtol=1e-9)


def test_embedding_rejects_unusable_reservoirs():
    middle = prepare.stationary_middle_state(1.0, 0.5)
    with pytest.raises(ValueError):
        prepare.embed_pt_state(
            prepare.EmbeddingSpec(middle, 0.0, 40.0, 0.5, 0.1))
    # currents j01 = 2*gamma*n1 = 0.5 are out of reach for this gain
    with pytest.raises(prepare.NoEmbedding):
        prepare.embed_pt_state(
            prepare.EmbeddingSpec(middle, 0.01, 0.01, 0.5, 0.01))


def test_linear_ground_state_matches_dense_diagonalization():
    params = FourModeParams(-6.0, -6.0, 0.5, 1.0, 0.5)
    state = prepare.hermitian_ground_state(params)
    h = np.zeros((4, 4))
    h[0, 0] = h[3, 3] = -6.0
    h[0, 1] = h[1, 0] = h[2, 3] = h[3, 2] = -0.5
    h[1, 2] = h[2, 1] = -1.0
    energies, vectors = np.linalg.eigh(h)
    overlap = abs(vectors[:, 0] @ state)
    npt.assert_allclose(overlap, 1.0, atol=1e-12)
    npt.assert_allclose(np.linalg.norm(state), 1.0, atol=1e-12)


def test_interacting_ground_state_is_stationary_and_variational():
    params = FourModeParams(-6.0, -6.0, 0.5, 1.0, 0.5, interaction=0.2)
    state = prepare.hermitian_ground_state(params)
    h = np.zeros((4, 4))
    h[0, 0] = h[3, 3] = -6.0
    h[0, 1] = h[1, 0] = h[2, 3] = h[3, 2] = -0.5
    h[1, 2] = h[2, 1] = -1.0
    h_psi = h @ state + 0.2 * state**3
    mu = state @ h_psi
    assert np.max(np.abs(h_psi - mu * state)) < 1e-10

    def energy(psi):
        return psi @ h @ psi + 0.1 * np.sum(psi**4)

    rng = np.random.default_rng(23)
    e0 = energy(state)
    for _ in range(50):
        trial = state + 0.05 * rng.normal(size=4)
        trial /= np.linalg.norm(trial)
        assert energy(trial) >= e0 - 1e-12


def test_interacting_ground_state_approaches_the_linear_one():
    params = FourModeParams(-6.0, -6.0, 0.5, 1.0, 0.5)
    linear = prepare.hermitian_ground_state(params)
    weak = prepare.hermitian_ground_state(
        FourModeParams(-6.0, -6.0, 0.5, 1.0, 0.5, interaction=1e-6))
    npt.assert_allclose(weak, linear, atol=1e-5)


def test_rescale_to_middle_preserves_the_dynamics():
    params = FourModeParams(-6.0, -6.0, 0.5, 1.0, 0.5, interaction=0.2)
    ground = prepare.hermitian_ground_state(params)
    state, c_run = prepare.rescale_to_middle(ground, 0.2)
    npt.assert_allclose(abs(state[1]) ** 2 + abs(state[2]) ** 2, 1.0,
                        atol=1e-13)
    s2 = float(np.sum(np.abs(ground[1:3]) ** 2))
    npt.assert_allclose(c_run, 0.2 * s2, rtol=1e-14)
    # scaling invariance of the mean-field equation: both states evolve to
    # rescaled copies of each other under their compensated couplings
    c02 = 2.0 * (state[0] * np.conj(state[2])).real
    schedule = prepare.GainLossSchedule.cosine_ramp(0.5, 10.0)
    run_a = four_mode.run_trajectory(
        state, schedule,
        FourModeParams(-6.0, -6.0, 0.5, 1.0, 0.5, interaction=c_run,
                       control_scale=0.5 / c02),
        0.5, 1e-3)
    scale = np.sqrt(s2)
    c02_g = 2.0 * (ground[0] * np.conj(ground[2])).real
    run_b = four_mode.run_trajectory(
        ground.astype(complex), schedule,
        FourModeParams(-6.0, -6.0, 0.5, 1.0, 0.5, interaction=0.2,
                       control_scale=0.5 / c02_g),
        0.5, 1e-3)
    npt.assert_allclose(run_a.states * scale, run_b.states, atol=1e-12)


def test_ground_state_not_converged_is_reported():
    params = FourModeParams(-6.0, -6.0, 0.5, 1.0, 0.5, interaction=0.2)
    with pytest.raises(prepare.GroundStateNotConverged):
        prepare.hermitian_ground_state(params, max_iter=3)
