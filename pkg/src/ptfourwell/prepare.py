"""Initial states and gain/loss schedules for the controlled four-well chain.

Contains the cosine switch-on profile for gamma(t), target states of the
middle pair (stationary eigenstate or eigenstate superposition), the phase
embedding that attaches reservoir amplitudes to a middle state so that the
current conditions hold at t = 0, and Hermitian/mean-field ground states of
the static chain.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import four_mode
from .solvers import multistart_newton

EMBED_GRID = 8
EMBED_RESIDUAL = 1e-12
GROUND_STATE_RESIDUAL = 1e-12


class BrokenPhase(ValueError):
    """Requested a symmetric eigenstate at or beyond the exceptional point."""


class NoEmbedding(RuntimeError):
    """No reservoir phases reproduce the required currents."""


class GroundStateNotConverged(RuntimeError):
    """Imaginary-time relaxation did not reach the requested tolerance."""


def gamma_ramp(t, gamma_final, ramp_time):
    """Cosine switch-on of the gain/loss strength, clamped outside [0, ramp_time].

    Returns (gamma, dgamma/dt); the profile is continuously differentiable,
    with vanishing slope at both ends.
    """
    if t <= 0.0:
        return 0.0, 0.0
    if t >= ramp_time:
        return gamma_final, 0.0
    x = math.pi * t / ramp_time
    return (0.5 * gamma_final * (1.0 - math.cos(x)),
            0.5 * gamma_final * math.pi * math.sin(x) / ramp_time)


@dataclass(frozen=True)
class GainLossSchedule:
    """gamma(t) profile; ramp_time = 0 means a constant strength."""

    final: float
    ramp_time: float = 0.0

    @classmethod
    def constant(cls, value):
        return cls(final=value, ramp_time=0.0)

    @classmethod
    def cosine_ramp(cls, final, ramp_time):
        if ramp_time <= 0.0:
            raise ValueError("ramp_time must be positive")
        return cls(final=final, ramp_time=ramp_time)

    def __call__(self, t):
        if self.ramp_time == 0.0:
            return self.final, 0.0
        return gamma_ramp(t, self.final, self.ramp_time)


def adiabaticity_margin(schedule: GainLossSchedule, omega, *, samples=256,
                        start_fraction=0.1):
    """min over t of omega*gamma/gamma_dot; large values mean a slow ramp.

    Evaluated on a uniform grid over [start_fraction*ramp_time, ramp_time]:
    the ratio vanishes for t -> 0 on any ramp starting from zero, so the
    initial transient (where gamma itself is negligible) is excluded.
    Constant schedules have an infinite margin.
    """
    if schedule.ramp_time == 0.0:
        return np.inf
    ts = np.linspace(start_fraction * schedule.ramp_time, schedule.ramp_time,
                     samples)
    margin = np.inf
    for t in ts:
        g, gd = schedule(t)
        if gd != 0.0:
            margin = min(margin, omega * g / gd)
    return float(margin)


def stationary_middle_state(tunneling, gain_loss, branch=+1):
    """Symmetric eigenstate of the open two-mode system, normalized to n1+n2=1.

    Both of its wells hold exactly half a particle and both branches carry
    the current j12 = gamma needed to balance gain and loss, so the middle
    pair stays strictly stationary.  `branch` selects the eigenvalue sign;
    the -1 branch continues the Hermitian two-well ground state and is the
    end point of an adiabatic gain/loss ramp.  Only defined below the
    exceptional point.
    """
    if abs(gain_loss) >= tunneling:
        raise BrokenPhase(
            f"|gain_loss|={abs(gain_loss):g} >= tunneling={tunneling:g}")
    w = np.sqrt(tunneling**2 - gain_loss**2)
    state = np.array([1j * gain_loss + branch * w, -tunneling])
    return state / np.linalg.norm(state)


def oscillatory_middle_state(tunneling, gain_loss, minus_weight=0.4):
    """Superposition of the two symmetric eigenstates, normalized to n1+n2=1.

    `minus_weight` scales the lower-energy component relative to the upper
    one; the populations beat at 2*sqrt(j^2-gamma^2) for any weights.  Equal
    weights are a poor choice for embedded runs: they put the relative phase
    of the two wells a quarter turn apart for all times, which makes the
    on-site controller rows degenerate (see four_mode._solve_onsite).
    """
    if abs(gain_loss) >= tunneling:
        raise BrokenPhase(
            f"|gain_loss|={abs(gain_loss):g} >= tunneling={tunneling:g}")
    w = np.sqrt(tunneling**2 - gain_loss**2)
    state = np.array([
        1j * gain_loss * (1.0 + minus_weight) + w * (1.0 - minus_weight),
        -tunneling * (1.0 + minus_weight),
    ])
    norm = np.linalg.norm(state)
    if norm == 0.0:
        raise ValueError("weights cancel the state")
    return state / norm


@dataclass(frozen=True)
class EmbeddingSpec:
    """Middle amplitudes plus reservoir populations to be phase-matched."""

    middle: np.ndarray
    reservoir0: float
    reservoir3: float
    gain_loss: float
    control_scale: float


def _phase_residual(spec: EmbeddingSpec):
    m1, m2 = complex(spec.middle[0]), complex(spec.middle[1])
    a0 = np.sqrt(spec.reservoir0)
    a3 = np.sqrt(spec.reservoir3)
    d = spec.control_scale
    g = spec.gain_loss
    n1 = m1.real**2 + m1.imag**2
    n2 = m2.real**2 + m2.imag**2

    def residual(phases):
        psi0 = a0 * np.exp(1j * phases[0])
        psi3 = a3 * np.exp(1j * phases[1])
        c13 = 2.0 * (m1 * np.conj(psi3)).real
        c02 = 2.0 * (psi0 * np.conj(m2)).real
        jt01 = -2.0 * (psi0 * np.conj(m1)).imag
        jt23 = -2.0 * (m2 * np.conj(psi3)).imag
        return (d * c13 * jt01 - 2.0 * g * n1,
                d * c02 * jt23 - 2.0 * g * n2)

    def couplings(phases):
        psi0 = a0 * np.exp(1j * phases[0])
        psi3 = a3 * np.exp(1j * phases[1])
        return (d * 2.0 * (m1 * np.conj(psi3)).real,
                d * 2.0 * (psi0 * np.conj(m2)).real)

    return residual, couplings


def _phase_grid():
    grid = 2.0 * np.pi * np.arange(EMBED_GRID) / EMBED_GRID
    return [(p0, p3) for p0 in grid for p3 in grid]


def _embed_phases(spec: EmbeddingSpec, starts=None):
    residual, couplings = _phase_residual(spec)
    if starts is None:
        starts = _phase_grid()

    def positive(phases):
        j01, j23 = couplings(phases)
        return j01 > 0.0 and j23 > 0.0

    # prefer the branch with both outer couplings positive; some middle
    # states (quarter-turn relative phase) only admit mixed-sign couplings,
    # which propagate just as well
    found = multistart_newton(residual, starts, positive,
                              residual_limit=EMBED_RESIDUAL)
    if found is None:
        found = multistart_newton(residual, starts,
                                  residual_limit=EMBED_RESIDUAL)
    return found


def _assemble(spec: EmbeddingSpec, phases):
    return np.array([
        np.sqrt(spec.reservoir0) * np.exp(1j * phases[0]),
        complex(spec.middle[0]),
        complex(spec.middle[1]),
        np.sqrt(spec.reservoir3) * np.exp(1j * phases[1]),
    ])


def embed_pt_state(spec: EmbeddingSpec, *, initial_phases=None) -> np.ndarray:
    """Attach reservoir amplitudes sqrt(n) e^{i phi} to the middle pair.

    The two phases are found by a damped Newton search over an 8x8 phase
    grid (deterministic scan order, first converged root wins) such that
    j01 = 2*gamma*n1 and j23 = 2*gamma*n2 hold to better than 1e-12.
    Raises NoEmbedding when the requested currents are unreachable, e.g.
    for reservoirs too small to carry them.
    """
    if spec.reservoir0 <= 0.0 or spec.reservoir3 <= 0.0:
        raise ValueError("reservoir populations must be positive")
    starts = None if initial_phases is None else [tuple(initial_phases)]
    phases = _embed_phases(spec, starts)
    if phases is None and initial_phases is not None:
        phases = _embed_phases(spec)
    if phases is None:
        raise NoEmbedding(
            "no reservoir phases reproduce the required currents; "
            "increase the reservoir populations or the control scale")
    return _assemble(spec, phases)


def auto_control_scale(middle, reservoir0, reservoir3, gain_loss, j12, *,
                       max_iter=60, rtol=1e-10, with_phases=False):
    """Feedback gain d such that the embedded max(J01, J23) matches j12.

    Iterates d -> d * j12/max(|J01|, |J23|) while continuing the same
    embedding branch (previous phases seed the next Newton solve).  The loop
    is deterministic; the best iterate is returned when the fixed point is
    not reached exactly.  With `with_phases` the reservoir phases of the
    matched branch are returned as well, to be passed to embed_pt_state:
    a fresh grid search at the final d may otherwise settle on a different
    branch whose couplings do not meet the max(J01, J23) = j12 target.
    """
    middle = np.asarray(middle, dtype=complex)
    n1 = abs(middle[0]) ** 2
    n2 = abs(middle[1]) ** 2
    reach = 2.0 * np.sqrt(reservoir0 * reservoir3)
    d_min = abs(gain_loss) / reach if gain_loss != 0.0 else 0.0
    d_scale = j12 / (2.0 * max(np.sqrt(n1 * reservoir3),
                               np.sqrt(reservoir0 * n2)))
    d = max(2.0 * d_min, d_scale)
    phases = None
    best = None
    for it in range(max_iter):
        spec = EmbeddingSpec(middle, reservoir0, reservoir3, gain_loss, d)
        starts = None if phases is None else [tuple(phases)]
        found = _embed_phases(spec, starts)
        if found is None and starts is not None:
            found = _embed_phases(spec)
        if found is None:
            d *= 2.0
            phases = None
            continue
        phases = found
        _, couplings = _phase_residual(spec)
        j01, j23 = couplings(phases)
        strongest = max(abs(j01), abs(j23))
        mismatch = abs(strongest / j12 - 1.0)
        if best is None or mismatch < best[0]:
            best = (mismatch, d, phases)
        if mismatch < rtol:
            return (d, phases) if with_phases else d
        relax = 1.0 if it < 12 else 0.5
        d *= (j12 / strongest) ** relax
    if best is None:
        raise NoEmbedding("no feedback gain admits an embedding")
    return (best[1], best[2]) if with_phases else best[1]


def hermitian_ground_state(params: "four_mode.FourModeParams", *,
                           tol=GROUND_STATE_RESIDUAL, max_iter=200000):
    """Ground state of the static chain, normalized to total population 1.

    For c = 0 this is a dense symmetric eigenproblem.  For c != 0 the state
    relaxes under imaginary-time evolution with per-step renormalization,
    with the time step set by the largest energy scale in the chain, until
    the stationarity residual max|H psi - mu psi| drops below `tol` times
    that scale; the mean-field strength refers to total-norm-1 states.  The
    returned vector is real with nonnegative overall sign.
    """
    h_static = np.zeros((4, 4))
    h_static[0, 0] = params.e0
    h_static[3, 3] = params.e3
    h_static[0, 1] = h_static[1, 0] = -params.j01
    h_static[1, 2] = h_static[2, 1] = -params.j12
    h_static[2, 3] = h_static[3, 2] = -params.j23
    if params.interaction == 0.0:
        _, vectors = np.linalg.eigh(h_static)
        state = vectors[:, 0]
        if state[np.argmax(np.abs(state))] < 0.0:
            state = -state
        return state
    scale = max(params.j12, abs(params.j01), abs(params.j23),
                abs(params.e0), abs(params.e3), abs(params.interaction))
    dtau = 0.1 / scale
    limit = tol * scale
    state = np.full(4, 0.5)
    for _ in range(max_iter):
        h_psi = h_static @ state + params.interaction * state**3
        mu = float(state @ h_psi)
        if np.max(np.abs(h_psi - mu * state)) <= limit:
            break
        trial = state - dtau * (h_psi - mu * state)
        state = trial / np.linalg.norm(trial)
    else:
        raise GroundStateNotConverged(
            f"stationarity residual above {limit:g} after {max_iter} steps")
    if state[np.argmax(np.abs(state))] < 0.0:
        state = -state
    return state


def rescale_to_middle(state, interaction):
    """Rescale so the middle pair holds one particle; compensate c accordingly.

    The mean-field equation is invariant under psi -> s*psi, c -> c/s^2, so
    this changes the bookkeeping but not the dynamics.
    """
    state = np.asarray(state, dtype=complex)
    s2 = float(abs(state[1]) ** 2 + abs(state[2]) ** 2)
    if s2 <= 0.0:
        raise ValueError("middle pair is empty")
    return state / np.sqrt(s2), interaction * s2
