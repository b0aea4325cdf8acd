"""Closed-form engine for the rotating-wave gate Hamiltonians.

Every spin branch of either gate mechanism reduces to a driven oscillator

    H_branch / hbar = (1/2) (F a e^(i dg t) + F* a^dag e^(-i dg t)),

where F is the complex branch force (rad/s) and dg the gate detuning.  The
convention used everywhere in this package:

* the stored branch force `f` is the coefficient multiplying a e^(i dg t)
  (for the light-shift gate the extra factor i of its Hamiltonian is folded
  into the displacement's rigid rotation and drops out of all phases),
* alpha(t) = (conj(F) e^(i phi0) / (2 dg)) (e^(-i dg t) - 1), which closes
  exactly at integer multiples of 2 pi / |dg|,
* the geometric phase is the signed enclosed area,
  Phi(t) = Im integral conj(alpha) d(alpha)
         = -(|F|^2 / (4 dg^2)) (dg t - sin(dg t)),
  i.e. Phi(loop) = -sign(dg) pi |F|^2 / (2 dg^2): negative detunings wind
  the trajectory so the accumulated phase is positive.

phi0 rotates alpha rigidly and cancels in every phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hilbert import ID2, tensor
from .model import GateConfig, IonSpec, MotionalMode

BRANCHES: tuple[tuple[int, int], ...] = ((+1, +1), (+1, -1), (-1, +1), (-1, -1))


class CalibrationError(ValueError):
    """Raised when a configuration cannot be calibrated or decomposed."""


@dataclass(frozen=True)
class BranchForce:
    """Force on one spin branch; labels are +-1 in the gate eigenbasis
    (sigma_z for LS, sigma_(pi/2 - phi_s) for MS)."""

    branch: tuple[int, int]
    f: complex  # rad/s


@dataclass(frozen=True)
class BranchTrajectory:
    branch: tuple[int, int]
    t: np.ndarray
    alpha: np.ndarray
    phase: np.ndarray


@dataclass(frozen=True)
class PhaseDecomposition:
    """Two-qubit phase content theta1, theta2, psi plus the global phase,
    defined by branch_phase = (phi_global + theta1 z1 + theta2 z2 + psi z1 z2)/2."""

    theta1: float
    theta2: float
    psi: float
    phi_global: float

    def reconstruct(self) -> np.ndarray:
        return np.array(
            [
                0.5 * (self.phi_global + self.theta1 * z1 + self.theta2 * z2 + self.psi * z1 * z2)
                for z1, z2 in BRANCHES
            ]
        )


def _couplings(config: GateConfig, ions: tuple[IonSpec, IonSpec], mode: MotionalMode):
    if mode.eta is None:
        raise ValueError(f"mode {mode.label!r} has no Lamb-Dicke factors")
    if config.mode_label != mode.label:
        raise ValueError(
            f"config addresses mode {config.mode_label!r} but got {mode.label!r}"
        )
    return mode.eta


def branch_forces(
    config: GateConfig, ions: tuple[IonSpec, IonSpec], mode: MotionalMode
) -> list[BranchForce]:
    """Complex force on each of the four spin branches.

    LS: f(s1, s2) = eta1 W_s1 + eta2 e^(i phi_z) W_s2 with W the (scaled)
    light shifts.  MS: f(z1, z2) = z1 eta1 W1 e^(-i phi_d1) + z2 eta2 W2
    e^(-i phi_d2) with W the (scaled) carrier Rabi rates; unequal tone scales
    are averaged here since the four-branch picture only exists for balanced
    tones.
    """
    eta = _couplings(config, ions, mode)
    out = []
    if config.mechanism == "ls":
        for s1, s2 in BRANCHES:
            f = eta[0] * ions[0].light_shift(s1) * config.ion_scale[0] + eta[1] * np.exp(
                1j * config.phi_z
            ) * ions[1].light_shift(s2) * config.ion_scale[1]
            out.append(BranchForce((s1, s2), complex(f)))
    else:
        tone = 0.5 * (config.tone_scale[0] + config.tone_scale[1])
        for z1, z2 in BRANCHES:
            f = sum(
                z * eta[j] * ions[j].rabi * config.ion_scale[j] * tone * np.exp(-1j * config.phi_d[j])
                for j, z in ((0, z1), (1, z2))
            )
            out.append(BranchForce((z1, z2), complex(f)))
    return out


def trajectory(
    f: complex, delta_g: float, t_samples: np.ndarray, phi0: float = 0.0,
    branch: tuple[int, int] = (+1, +1),
) -> BranchTrajectory:
    """Closed-form displacement and accumulated geometric phase of one branch."""
    if delta_g == 0.0:
        raise ValueError("resonant drive (delta_g = 0) has no closed trajectory")
    t = np.asarray(t_samples, dtype=float)
    alpha = (np.conj(f) * np.exp(1j * phi0) / (2.0 * delta_g)) * (np.exp(-1j * delta_g * t) - 1.0)
    phase = -(abs(f) ** 2 / (4.0 * delta_g**2)) * (delta_g * t - np.sin(delta_g * t))
    return BranchTrajectory(branch, t, alpha, phase)


def loop_phase(f: complex, delta_g: float, loops: int = 1) -> float:
    """Geometric phase after `loops` closed loops (signed; see module doc)."""
    if delta_g == 0.0:
        raise ValueError("resonant drive (delta_g = 0)")
    return -np.sign(delta_g) * loops * np.pi * abs(f) ** 2 / (2.0 * delta_g**2)


def branch_phases(
    config: GateConfig, ions: tuple[IonSpec, IonSpec], mode: MotionalMode,
    loops: int | None = None,
) -> np.ndarray:
    """Per-branch geometric phases after the configured number of loops,
    ordered like BRANCHES."""
    k = config.loops if loops is None else loops
    return np.array(
        [loop_phase(bf.f, config.delta_g, k) for bf in branch_forces(config, ions, mode)]
    )


def phase_decomposition(phases: np.ndarray) -> PhaseDecomposition:
    """Split four branch phases (BRANCHES order) into single-qubit, two-qubit
    and global parts; exact linear bijection."""
    p = np.asarray(phases, dtype=float)
    if p.shape != (4,):
        raise ValueError("need exactly four branch phases")
    pp, pm, mp, mm = p
    return PhaseDecomposition(
        theta1=0.5 * (pp + pm - mp - mm),
        theta2=0.5 * (pp - pm + mp - mm),
        psi=0.5 * (pp - pm - mp + mm),
        phi_global=0.5 * (pp + pm + mp + mm),
    )


def gate_efficiency(phases: np.ndarray) -> float:
    """zeta = (Phi_odd - Phi_even) / (Phi_odd + Phi_even) with the parities
    taken in the gate's own eigenbasis."""
    p = np.asarray(phases, dtype=float)
    even = 0.5 * (p[0] + p[3])
    odd = 0.5 * (p[1] + p[2])
    if even == 0.0 and odd == 0.0:
        raise CalibrationError("both parities acquire zero phase; efficiency undefined")
    return float((odd - even) / (odd + even))


def calibrate_amplitude(
    config: GateConfig,
    ions: tuple[IonSpec, IonSpec],
    mode: MotionalMode,
    target: float = np.pi / 2,
) -> float:
    """Common drive-amplitude factor that makes |psi| equal `target` after the
    configured loops.  psi scales quadratically in the amplitude, so the
    factor is sqrt(target / |psi(1)|)."""
    psi = phase_decomposition(branch_phases(config, ions, mode)).psi
    if psi == 0.0:
        raise CalibrationError("psi vanishes for this configuration (zeta = 0); cannot calibrate")
    return float(np.sqrt(abs(target) / abs(psi)))


def _ms_basis(phi_s: float) -> np.ndarray:
    """Columns are the +1/-1 eigenvectors of the MS gate operator.

    The tone fields are written with exp(-i(phi_k - detuning * t)) on the
    raising operator, which puts the gate basis at sigma_(pi/2 + phi_s); the
    calibrated two-loop gate then maps |down down> onto the Bell state
    (|up up> - i exp(i(phi_s1 + phi_s2)) |down down>)/sqrt(2).
    """
    chi = np.pi / 2.0 + phi_s
    plus = np.array([1.0, np.exp(1j * chi)]) / np.sqrt(2.0)
    minus = np.array([1.0, -np.exp(1j * chi)]) / np.sqrt(2.0)
    return np.column_stack([plus, minus])


def ideal_gate_unitary(
    config: GateConfig,
    ions: tuple[IonSpec, IonSpec],
    mode: MotionalMode,
    loops: float | None = None,
) -> np.ndarray:
    """Two-qubit unitary of the closed-loop gate: diagonal phases in the gate
    eigenbasis (sigma_z for LS, rotated for MS).

    Only integer loop counts close the phase-space loops; anything else needs
    the numerical engine in `dynamics`.
    """
    k = config.loops if loops is None else loops
    if abs(k - round(k)) > 1e-12:
        raise ValueError(
            "loops must be an integer for the closed-form unitary; "
            "use dynamics.simulate_gate for open trajectories"
        )
    phases = branch_phases(config, ions, mode, loops=int(round(k)))
    diag = np.diag(np.exp(1j * phases))
    if config.mechanism == "ls":
        return diag
    r = tensor(_ms_basis(config.phi_s[0]), _ms_basis(config.phi_s[1]))
    return r @ diag @ r.conj().T
