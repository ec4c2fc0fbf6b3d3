"""Map between the four-mode model and a four-Gaussian optical trap.

The trap is a line of four red-detuned Gaussian beams along z.  A frozen
Gaussian ansatz (one packet per well, common width parameters A_alpha,
centers pinned to the wells) reduces the Gross-Pitaevskii equation to the
four-mode chain; keeping only nearest-neighbor integrals gives closed forms
for the on-site energies, the tunneling rates and the mean-field strength.
Inverting those forms for the outer wells turns the controller outputs
(e0, e3, J01, J23) into laboratory quantities: two trap depths and two
displacements.

All geometry here is dimensionless: lengths in units of the middle-well
distance l, energies in E_l = hbar^2/(m l^2), times in t_l = hbar/E_l.
SI values enter only through PhysicalConstants and leave through
PhysicalUnits.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from . import prepare
from .four_mode import FourModeParams
from .solvers import multistart_newton

# CODATA values; mass from the AME2020 evaluation
ATOMIC_MASS_KG = 1.66053906660e-27
BOHR_RADIUS_M = 5.29177210903e-11
HBAR_JS = 1.054571817e-34
RB87_MASS_U = 86.909180527

INVERSION_GRID = 5
INVERSION_RESIDUAL = 1e-10
MIDDLE_SYMMETRY_TOL = 1e-9


class OutOfRange(RuntimeError):
    """Requested matrix elements are not reachable by any outer-well trap."""


class WidthsNotConverged(RuntimeError):
    """Simplex search for the ansatz widths hit its iteration cap."""


@dataclass(frozen=True)
class PhysicalConstants:
    """Atom species and condensate size, in SI units."""

    mass: float
    scattering_length: float
    particle_number: float
    hbar: float = HBAR_JS

    def __post_init__(self):
        if min(self.mass, self.scattering_length, self.particle_number,
               self.hbar) <= 0.0:
            raise ValueError("all physical constants must be positive")


def rubidium87(particle_number=1e5, scattering_bohr=10.9) -> PhysicalConstants:
    """87Rb with the scattering length tuned to `scattering_bohr` Bohr radii."""
    return PhysicalConstants(
        mass=RB87_MASS_U * ATOMIC_MASS_KG,
        scattering_length=scattering_bohr * BOHR_RADIUS_M,
        particle_number=particle_number,
    )


@dataclass(frozen=True)
class PhysicalUnits:
    """Length, energy and time scales of the lattice, plus its reference
    outer-well deviations (zero for the equidistant lattice)."""

    length: float         # middle-well distance l in meters
    energy: float         # E_l = hbar^2 / (m l^2) in joules
    time: float           # t_l = hbar / E_l in seconds
    delta0: float = 0.0   # outer-well deviations, units of l
    delta3: float = 0.0


def physical_units(length, constants: PhysicalConstants, *,
                   delta0=0.0, delta3=0.0) -> PhysicalUnits:
    """Unit system for a lattice with middle-well distance `length` (meters)."""
    if length <= 0.0:
        raise ValueError("length must be positive")
    energy = constants.hbar**2 / (constants.mass * length**2)
    return PhysicalUnits(length=length, energy=energy,
                         time=constants.hbar / energy,
                         delta0=delta0, delta3=delta3)


@dataclass(frozen=True)
class TrapGeometry:
    """Four-Gaussian trap: depths in E_l, centers and widths in units of l."""

    depths: tuple
    centers: tuple
    widths: tuple  # (w_x, w_y, w_z)

    def __post_init__(self):
        if len(self.depths) != 4 or len(self.centers) != 4:
            raise ValueError("need four wells")
        if any(v >= 0.0 for v in self.depths):
            raise ValueError("well depths must be negative")
        if len(self.widths) != 3 or any(w <= 0.0 for w in self.widths):
            raise ValueError("widths must be three positive numbers")

    @classmethod
    def lattice(cls, depths, widths, delta0=0.0, delta3=0.0):
        """Wells at -3/2 + delta0, -1/2, +1/2, +3/2 + delta3 (units of l)."""
        centers = (-1.5 + delta0, -0.5, 0.5, 1.5 + delta3)
        return cls(depths=tuple(depths), centers=centers,
                   widths=tuple(widths))

    def with_outer(self, v0, v3, delta0, delta3) -> "TrapGeometry":
        """Same trap with the outer depths and displacements replaced."""
        depths = (v0, self.depths[1], self.depths[2], v3)
        centers = (-1.5 + delta0, self.centers[1], self.centers[2],
                   1.5 + delta3)
        return replace(self, depths=depths, centers=centers)


@dataclass(frozen=True)
class GaussianAnsatz:
    """Frozen Gaussian packets: common widths A_alpha (units 1/l^2) and
    centers pinned to the wells they sit in."""

    widths: tuple   # (A_x, A_y, A_z)
    centers: tuple

    def __post_init__(self):
        if len(self.widths) != 3 or any(a <= 0.0 for a in self.widths):
            raise ValueError("width parameters must be three positive numbers")
        if len(self.centers) != 4:
            raise ValueError("need four packet centers")

    @classmethod
    def for_trap(cls, trap: TrapGeometry, widths) -> "GaussianAnsatz":
        return cls(widths=tuple(widths), centers=trap.centers)


@dataclass(frozen=True)
class TrapMatrixElements:
    """Four-mode matrix elements produced by the trap, in E_l units.

    These are the literal values of the nearest-neighbor reduction; on-site
    energies carry the common offset of the middle wells and tunneling rates
    may be of either sign.  chain_parameters() converts them to the gauge
    the dynamics modules use.
    """

    e0: float
    e1: float
    e2: float
    e3: float
    j01: float
    j12: float
    j23: float
    interaction: float


def _beta(a, w):
    x = a * w * w
    return math.sqrt(x / (1.0 + x))


def _pair_coupling(az, wz, depth_factor, dq, vl, vk):
    """Tunneling rate of an adjacent pair at center distance dq.

    `depth_factor` is the product beta_x beta_y beta_z shared by the whole
    trap.  The exponent of the second gamma factor comes from completing the
    square between the beam profile and the two packets.
    """
    gamma = math.exp(-0.5 * az * dq * dq)
    shape = 0.5 - gamma ** (1.0 / (1.0 + az * wz * wz))
    return (0.5 * az * az * dq * dq * gamma
            + (vl + vk) * depth_factor * gamma * shape)


def matrix_elements(trap: TrapGeometry, ansatz: GaussianAnsatz,
                    constants: PhysicalConstants,
                    units: PhysicalUnits) -> TrapMatrixElements:
    """Closed-form four-mode matrix elements of the nearest-neighbor reduction."""
    ax, ay, az = ansatz.widths
    wx, wy, wz = trap.widths
    kinetic = 0.5 * (ax + ay + az)
    depth_factor = _beta(ax, wx) * _beta(ay, wy) * _beta(az, wz)
    onsite = [kinetic + v * depth_factor for v in trap.depths]
    couplings = []
    for k in range(3):
        dq = ansatz.centers[k + 1] - ansatz.centers[k]
        couplings.append(_pair_coupling(az, wz, depth_factor, dq,
                                        trap.depths[k], trap.depths[k + 1]))
    scattering = constants.scattering_length / units.length
    interaction = (4.0 * constants.particle_number * scattering
                   * math.sqrt(ax * ay * az / math.pi))
    return TrapMatrixElements(
        e0=onsite[0], e1=onsite[1], e2=onsite[2], e3=onsite[3],
        j01=couplings[0], j12=couplings[1], j23=couplings[2],
        interaction=interaction)


def chain_parameters(elements: TrapMatrixElements):
    """(FourModeParams, offset, signs) equivalent to the literal elements.

    The dynamics modules measure on-site energies relative to the middle
    wells (which must be degenerate) and take all tunneling rates positive;
    the sign pattern is pure gauge on a chain and `signs` records the
    per-site amplitude flips that map the literal Hamiltonian onto the
    returned parameters.
    """
    if abs(elements.e1 - elements.e2) > MIDDLE_SYMMETRY_TOL * max(
            1.0, abs(elements.e1)):
        raise ValueError(
            f"middle wells are detuned by {elements.e1 - elements.e2:.3e}; "
            "the four-mode reduction assumes degenerate middle wells")
    if 0.0 in (elements.j01, elements.j12, elements.j23):
        raise ValueError("chain is disconnected: a tunneling rate is zero")
    offset = 0.5 * (elements.e1 + elements.e2)
    signs = [1.0]
    for j in (elements.j01, elements.j12, elements.j23):
        signs.append(signs[-1] * math.copysign(1.0, j))
    params = FourModeParams(
        e0=elements.e0 - offset, e3=elements.e3 - offset,
        j01=abs(elements.j01), j12=abs(elements.j12), j23=abs(elements.j23),
        interaction=elements.interaction)
    return params, offset, tuple(signs)


def mean_field_energy(trap: TrapGeometry, ansatz: GaussianAnsatz,
                      constants: PhysicalConstants, units: PhysicalUnits,
                      amplitudes) -> float:
    """Energy functional of the four-mode reduction at the given amplitudes.

    <psi|H_lin|psi> + (c/2) sum_k |psi_k|^4 with the matrix elements of this
    trap and ansatz; `amplitudes` must be normalized to one.
    """
    psi = np.asarray(amplitudes, dtype=complex)
    norm = float(np.sum(np.abs(psi) ** 2))
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"amplitudes norm {norm:.12f} is not 1")
    el = matrix_elements(trap, ansatz, constants, units)
    h = np.zeros((4, 4))
    h[0, 0], h[1, 1], h[2, 2], h[3, 3] = el.e0, el.e1, el.e2, el.e3
    h[0, 1] = h[1, 0] = -el.j01
    h[1, 2] = h[2, 1] = -el.j12
    h[2, 3] = h[3, 2] = -el.j23
    linear = float(np.real(np.conj(psi) @ (h @ psi)))
    return linear + 0.5 * el.interaction * float(np.sum(np.abs(psi) ** 4))


def _self_consistent_energy(trap, constants, units, widths):
    ansatz = GaussianAnsatz.for_trap(trap, widths)
    el = matrix_elements(trap, ansatz, constants, units)
    params, offset, signs = chain_parameters(el)
    state = prepare.hermitian_ground_state(params)
    # undo the gauge so the amplitudes match the literal elements
    psi = state * np.asarray(signs)
    return mean_field_energy(trap, ansatz, constants, units, psi), ansatz


def optimize_widths(trap: TrapGeometry, constants: PhysicalConstants,
                    units: PhysicalUnits, initial_widths,
                    *, max_iter=2000) -> GaussianAnsatz:
    """Widths A_alpha minimizing the mean-field energy of the ground state.

    Derivative-free simplex search over log(A_alpha), which keeps the widths
    positive without constraints; the amplitudes are recomputed
    self-consistently as the mean-field ground state at every evaluation.
    Converged when the simplex has collapsed to 1e-10 relative in the
    widths.
    """
    if any(a <= 0.0 for a in initial_widths):
        raise ValueError("initial widths must be positive")

    def objective(log_widths):
        widths = tuple(math.exp(x) for x in log_widths)
        energy, _ = _self_consistent_energy(trap, constants, units, widths)
        return energy

    x0 = [math.log(a) for a in initial_widths]
    result = minimize(objective, x0, method="Nelder-Mead",
                      options={"xatol": 1e-10, "fatol": 1e-10,
                               "maxiter": max_iter, "maxfev": 4 * max_iter})
    if not result.success:
        raise WidthsNotConverged(result.message)
    widths = tuple(math.exp(x) for x in result.x)
    return GaussianAnsatz.for_trap(trap, widths)


def _outer_pair_residual(side, trap, ansatz, e_target, j_target):
    """Residual closure for one outer well; x = (depth, displacement)."""
    ax, ay, az = ansatz.widths
    wx, wy, wz = trap.widths
    kinetic = 0.5 * (ax + ay + az)
    depth_factor = _beta(ax, wx) * _beta(ay, wy) * _beta(az, wz)
    if side == 0:
        neighbor_center = trap.centers[1]
        base_center = -1.5
        v_neighbor = trap.depths[1]
    else:
        neighbor_center = trap.centers[2]
        base_center = 1.5
        v_neighbor = trap.depths[2]
    e_scale = max(abs(e_target), 1.0)
    j_scale = max(abs(j_target), 1e-6)

    def residual(x):
        v, delta = x
        dq = neighbor_center - (base_center + delta)
        e_k = kinetic + v * depth_factor
        j_k = _pair_coupling(az, wz, depth_factor, dq, v, v_neighbor)
        return ((e_k - e_target) / e_scale, (j_k - j_target) / j_scale)

    return residual


def invert_trap_parameters(targets, trap: TrapGeometry,
                           ansatz: GaussianAnsatz,
                           constants: PhysicalConstants,
                           units: PhysicalUnits):
    """(V0, V3, delta0, delta3) reproducing the targets (E0, E3, J01, J23).

    The two outer wells give two independent 2D root problems (the on-site
    energy fixes the depth, the adjacent tunneling rate then fixes the
    displacement), solved by damped Newton from a 5x5 grid of starts over
    depths in [1.5 V1, 0.5 V1] and displacements in [-0.1, 0.1].  Targets
    are literal matrix-element values in E_l units.  Raises OutOfRange when
    a side converges from no start.
    """
    e0_t, e3_t, j01_t, j23_t = targets
    solution = []
    for side, e_t, j_t in ((0, e0_t, j01_t), (3, e3_t, j23_t)):
        v_middle = trap.depths[1] if side == 0 else trap.depths[2]
        residual = _outer_pair_residual(side, trap, ansatz, e_t, j_t)
        starts = [(v, delta)
                  for v in np.linspace(1.5 * v_middle, 0.5 * v_middle,
                                       INVERSION_GRID)
                  for delta in np.linspace(-0.1, 0.1, INVERSION_GRID)]
        root = multistart_newton(residual, starts,
                                 accept=lambda x: x[0] < 0.0,
                                 tol=1e-13,
                                 residual_limit=INVERSION_RESIDUAL)
        if root is None:
            raise OutOfRange(
                f"no outer-well parameters reach E={e_t:g}, J={j_t:g} "
                f"on side {side}")
        solution.append(root)
    (v0, delta0), (v3, delta3) = solution
    return v0, v3, delta0, delta3
