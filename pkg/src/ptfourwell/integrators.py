"""Fixed-step Runge-Kutta propagation for small complex ODE systems.

All dynamical equations in this package are integrated with the classical
fourth-order scheme.  A tolerance-controlled variant repeats the propagation
with halved step sizes until two successive refinements agree on the output
grid, which keeps the integrator strictly deterministic.
"""

from typing import Callable, NamedTuple

import numpy as np

MAX_REFINEMENTS = 14


class Trajectory(NamedTuple):
    """Sampled solution: times (m,) and states (m, n) complex."""

    times: np.ndarray
    states: np.ndarray


def rk4_step(rhs: Callable, t: float, y: np.ndarray, dt: float) -> np.ndarray:
    """One classical RK4 step for y' = rhs(t, y)."""
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = rhs(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_propagate(rhs, y0, t_end, dt, substeps: int = 1) -> Trajectory:
    """Propagate y' = rhs(t, y) on the grid k*dt with `substeps` internal steps.

    The grid always contains t = 0 and t = t_end; the last interval is
    shortened when t_end is not a multiple of dt.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if t_end < 0.0:
        raise ValueError("t_end must be nonnegative")
    n_out = int(np.ceil(t_end / dt - 1e-12)) if t_end > 0.0 else 0
    times = np.empty(n_out + 1)
    states = np.empty((n_out + 1, np.size(y0)), dtype=complex)
    y = np.asarray(y0, dtype=complex).copy()
    times[0] = 0.0
    states[0] = y
    t = 0.0
    for k in range(1, n_out + 1):
        t_next = min(k * dt, t_end)
        h = (t_next - t) / substeps
        for j in range(substeps):
            y = rk4_step(rhs, t + j * h, y, h)
        t = t_next
        times[k] = t
        states[k] = y
    return Trajectory(times, states)


def rk4_refined(rhs, y0, t_end, dt, rtol: float) -> Trajectory:
    """Step-halving refinement until successive output grids agree to rtol."""
    if rtol <= 0.0:
        raise ValueError("rtol must be positive")
    substeps = 1
    previous = rk4_propagate(rhs, y0, t_end, dt, substeps)
    for _ in range(MAX_REFINEMENTS):
        substeps *= 2
        current = rk4_propagate(rhs, y0, t_end, dt, substeps)
        scale = max(1.0, float(np.max(np.abs(current.states))))
        err = float(np.max(np.abs(current.states - previous.states)))
        if err < rtol * scale:
            return current
        previous = current
    raise RuntimeError(
        f"step halving did not reach rtol={rtol:g} within "
        f"{MAX_REFINEMENTS} refinements"
    )
