"""Physical model of the two-ion crystal and the gate configuration record.

Units: all frequencies in the dataclasses are plain Hz unless a field name
says otherwise; Rabi rates and light shifts are angular (rad/s); masses in
atomic mass units; magnetic field in gauss. SI constants are used internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

HBAR = 1.054571817e-34  # J s
AMU = 1.66053906660e-27  # kg

#: default Raman wavelength of the gate beams, m
DEFAULT_WAVELENGTH = 402e-9


def raman_delta_k(wavelength: float = DEFAULT_WAVELENGTH, angle_deg: float = 90.0) -> float:
    """Wave-vector difference |k1 - k2| of two beams crossing at `angle_deg`.

    The default 90 degree geometry gives |dk| = sqrt(2) * 2 pi / lambda.
    """
    k = 2.0 * np.pi / wavelength
    return 2.0 * k * np.sin(np.radians(angle_deg) / 2.0)


@dataclass(frozen=True)
class QubitSpec:
    """One qubit transition.

    sensitivity is the linear magnetic sensitivity df0/dB in Hz per gauss
    (zero for a clock qubit); offset is a static qubit-frequency offset in Hz
    modelling field drift or uncompensated light shifts.
    """

    label: str
    f0: float  # Hz
    sensitivity: float = 0.0  # Hz / G
    offset: float = 0.0  # Hz

    def __post_init__(self):
        if self.f0 <= 0:
            raise ValueError(f"qubit frequency must be positive, got {self.f0}")


@dataclass(frozen=True)
class IonSpec:
    """One ion: mass, qubit choice and drive couplings.

    For MS gates `rabi` is the carrier Rabi rate Omega_j (rad/s).  For LS
    gates `shift_up`/`shift_down` are the light shifts (rad/s) of the upper
    and lower qubit states (signed; their difference drives the gate).
    """

    mass: float  # amu
    qubit: QubitSpec
    rabi: float = 0.0  # rad/s (MS)
    shift_up: float = 0.0  # rad/s (LS)
    shift_down: float = 0.0  # rad/s (LS)

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError(f"ion mass must be positive, got {self.mass}")

    def light_shift(self, s: int) -> float:
        """Light shift of spin state s = +1 (upper) or -1 (lower), rad/s."""
        return self.shift_up if s == +1 else self.shift_down


@dataclass(frozen=True)
class MotionalMode:
    """One axial normal mode of the two-ion crystal.

    `vector` is the mass-weighted normal-mode vector (b1, b2), orthonormal
    across the two axial modes; `eta` are the per-ion Lamb-Dicke factors
    including the vector sign (out-of-phase eta of the heavy ion is
    negative).  `heating_rate` is in quanta per second.
    """

    label: str  # "ip" | "oop"
    frequency: float  # Hz
    vector: tuple[float, float]
    eta: tuple[float, float] | None = None
    heating_rate: float = 0.0  # quanta / s


def axial_normal_modes(
    m1: float, m2: float, f_single: float, idealized: bool = False
) -> tuple[MotionalMode, MotionalMode]:
    """Axial normal modes of a two-ion crystal.

    Solves the standard two-ion axial eigenproblem: the electrostatic axial
    stiffness k = m1 (2 pi f_single)^2 is mass independent, and the Coulomb
    coupling at equilibrium equals k, giving the Hessian k [[2, -1], [-1, 2]].
    `f_single` is the axial frequency of ion 1 alone in the same potential.

    With `idealized` the textbook equal-mass vectors (1, +-1)/sqrt(2) are
    forced while keeping the true frequencies.

    Returns (ip, oop) modes without Lamb-Dicke factors or heating rates.
    """
    if m1 <= 0 or m2 <= 0:
        raise ValueError("masses must be positive")
    if f_single <= 0:
        raise ValueError("single-ion frequency must be positive")
    w1 = 2.0 * np.pi * f_single
    # mass-weighted dynamical matrix in units of w1^2 (masses in amu cancel)
    mu = np.sqrt(m1 / m2)
    dyn = np.array([[2.0, -mu], [-mu, 2.0 * m1 / m2]]) * w1**2
    evals, evecs = np.linalg.eigh(dyn)
    modes = []
    for i, label in enumerate(("ip", "oop")):
        vec = evecs[:, i]
        if vec[0] < 0:
            vec = -vec
        if idealized:
            vec = np.array([1.0, 1.0 if label == "ip" else -1.0]) / np.sqrt(2.0)
        modes.append(
            MotionalMode(
                label=label,
                frequency=np.sqrt(evals[i]) / (2.0 * np.pi),
                vector=(float(vec[0]), float(vec[1])),
            )
        )
    return modes[0], modes[1]


def two_ion_modes(
    m1: float, m2: float, f_ip: float, idealized: bool = False
) -> tuple[MotionalMode, MotionalMode]:
    """Normal modes with the single-ion frequency back-solved so that the
    in-phase mode lands at `f_ip` (mode frequencies scale linearly with it)."""
    ip, _ = axial_normal_modes(m1, m2, 1.0e6, idealized)
    f_single = 1.0e6 * f_ip / ip.frequency
    return axial_normal_modes(m1, m2, f_single, idealized)


def lamb_dicke(
    mode: MotionalMode, masses: tuple[float, float], delta_k: float
) -> tuple[float, float]:
    """Per-ion Lamb-Dicke factors of `mode` for wave-vector difference `delta_k`.

    eta_j = delta_k * b_j * sqrt(hbar / (2 m_j omega)), with b_j the
    mass-weighted mode-vector element; the sign of b_j is kept.
    """
    if delta_k <= 0:
        raise ValueError("delta_k must be positive")
    norm = np.hypot(*mode.vector)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"mode vector {mode.vector} is not normalized")
    omega = 2.0 * np.pi * mode.frequency
    eta = tuple(
        float(delta_k * b * np.sqrt(HBAR / (2.0 * m * AMU * omega)))
        for b, m in zip(mode.vector, masses)
    )
    return eta


def with_lamb_dicke(
    mode: MotionalMode,
    masses: tuple[float, float],
    delta_k: float,
    heating_rate: float = 0.0,
) -> MotionalMode:
    """Copy of `mode` carrying its Lamb-Dicke factors and a heating rate."""
    return replace(mode, eta=lamb_dicke(mode, masses, delta_k), heating_rate=heating_rate)


def qubit_offset_from_field(qubit: QubitSpec, delta_b: float) -> float:
    """Qubit frequency offset (Hz) produced by a field change of `delta_b` gauss."""
    return qubit.sensitivity * delta_b


def standing_wave_phase(ion_spacing: float, delta_k: float) -> float:
    """Travelling-standing-wave phase difference between the two ion positions,
    phi_z = delta_k * spacing reduced mod 2 pi."""
    if ion_spacing <= 0:
        raise ValueError("ion spacing must be positive")
    return float(np.mod(delta_k * ion_spacing, 2.0 * np.pi))


@dataclass(frozen=True)
class GateConfig:
    """Control-field record consumed by both gate engines.

    Phases (all rad):
      LS: `phi0` is the initial beat phase of the travelling standing wave
      (drive proportional to cos(w t + phi0)); `phi_z` is the standing-wave
      phase difference between the ion positions, entering the ion-2 force
      as exp(+i phi_z).
      MS: `phi_s`/`phi_d` are the per-ion sum and difference phases of the
      two bichromatic tones, phi_{+-} = phi_s +- phi_d.

    `ion_scale` and `tone_scale` are dimensionless drive-amplitude factors
    (per ion, and per bichromatic tone for MS) used for calibration and for
    asymmetry injection.  `delta_ca`/`delta_sr` are the Raman detunings in Hz
    (budget module); when `delta_sr` is None it follows the fixed level-gap
    offset of the shared-beam configuration.
    """

    mechanism: str  # "ls" | "ms"
    mode_label: str = "oop"
    delta_g: float = -2.0 * np.pi * 40e3  # rad/s
    loops: int = 2
    phi0: float = 0.0
    phi_z: float = np.pi
    phi_s: tuple[float, float] = (0.0, 0.0)
    phi_d: tuple[float, float] = (0.0, 0.0)
    ion_scale: tuple[float, float] = (1.0, 1.0)
    tone_scale: tuple[float, float] = (1.0, 1.0)
    delta_ca: float = -9.0e12  # Hz
    delta_sr: float | None = None

    def __post_init__(self):
        if self.mechanism not in ("ls", "ms"):
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if self.delta_g == 0.0:
            raise ValueError("gate detuning delta_g must be nonzero (resonant drive)")
        if self.loops < 1:
            raise ValueError("loop count must be >= 1")
        if any(s <= 0 for s in self.ion_scale) or any(s <= 0 for s in self.tone_scale):
            raise ValueError("amplitude scales must be positive")

    @property
    def loop_time(self) -> float:
        """Duration of one phase-space loop, 2 pi / |delta_g| (s)."""
        return 2.0 * np.pi / abs(self.delta_g)

    def scaled(self, factor: float) -> "GateConfig":
        """Copy with both ion amplitude scales multiplied by `factor`."""
        return replace(self, ion_scale=(self.ion_scale[0] * factor, self.ion_scale[1] * factor))


# ---------------------------------------------------------------------------
# reference Ca-43 / Sr-88 crystal of the shipped example configurations

MASS_CA43 = 42.958766
MASS_SR88 = 87.905612

SR_ZEEMAN = QubitSpec("Sr-Zeeman", f0=409e6, sensitivity=2.80e6)
CA_STRETCH = QubitSpec("Ca-stretch", f0=2.874e9, sensitivity=-2.36e6)
CA_CLOCK = QubitSpec("Ca-clock", f0=3.200e9, sensitivity=0.0)


def ca_sr_modes(
    f_ip: float = 1.49e6,
    heating: tuple[float, float] = (93.0, 27.0),
    delta_k: float | None = None,
    idealized: bool = False,
) -> tuple[MotionalMode, MotionalMode]:
    """Ca-Sr axial modes with Lamb-Dicke factors and heating rates filled in."""
    dk = raman_delta_k() if delta_k is None else delta_k
    masses = (MASS_CA43, MASS_SR88)
    ip, oop = two_ion_modes(*masses, f_ip=f_ip, idealized=idealized)
    return (
        with_lamb_dicke(ip, masses, dk, heating_rate=heating[0]),
        with_lamb_dicke(oop, masses, dk, heating_rate=heating[1]),
    )
