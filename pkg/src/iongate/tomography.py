"""Partial state tomography: populations, parity scans, sinusoid fits and
Bell-state fidelities.

The parity after analysis pi/2 pulses about an equatorial axis phi is
P = p_uu + p_dd - (p_ud + p_du).  With exact pi/2 pulses P(phi) contains
only a constant and the second harmonic, P = P0 + A sin(2 phi) + B cos(2 phi),
so the least-squares fit of Fig-5 form P0 + C sin(2(phi - phi_p)) is exact
linear algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hilbert import tensor
from .sequence import rotation_unitary


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class ParityScan:
    phases: np.ndarray  # rad
    parity: np.ndarray  # in [-1, 1]
    shots: int = 0  # 0 = exact expectation values
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "phases", np.asarray(self.phases, dtype=float))
        object.__setattr__(self, "parity", np.asarray(self.parity, dtype=float))
        if self.phases.shape != self.parity.shape:
            raise ValueError("phases and parity must have the same length")


@dataclass(frozen=True)
class ParityFit:
    p0: float
    contrast: float
    phi_p: float  # in (-pi/2, pi/2]
    residual_rms: float


def populations(rho: np.ndarray) -> np.ndarray:
    """Two-qubit basis populations (p_uu, p_ud, p_du, p_dd); sums to one."""
    rho = np.asarray(rho)
    p = np.real(np.diag(rho))
    if abs(p.sum() - 1.0) > 1e-10:
        raise ValueError(f"populations sum to {p.sum()}, not 1")
    return p


def apply_readout_error(p: np.ndarray, confusion: np.ndarray) -> np.ndarray:
    """Measured populations from true ones, p_meas = M p_true."""
    return np.asarray(confusion, dtype=float) @ np.asarray(p, dtype=float)


def correct_readout(p: np.ndarray, confusion: np.ndarray) -> np.ndarray:
    """Invert an independently measured confusion matrix (the SPAM correction)."""
    return np.linalg.solve(np.asarray(confusion, dtype=float), np.asarray(p, dtype=float))


def _analysed(rho: np.ndarray, phi: float) -> np.ndarray:
    u = tensor(rotation_unitary(np.pi / 2.0, phi), rotation_unitary(np.pi / 2.0, phi))
    return u @ rho @ u.conj().T


def parity_after_analysis(rho: np.ndarray, phi: float,
                          confusion: np.ndarray | None = None) -> float:
    """Parity after pi/2 analysis rotations of both qubits about axis phi."""
    p = np.real(np.diag(_analysed(np.asarray(rho, dtype=complex), phi)))
    if confusion is not None:
        p = apply_readout_error(p, confusion)
    return float(p[0] + p[3] - p[1] - p[2])


def parity_scan(rho: np.ndarray, phases: np.ndarray, shots: int = 0,
                rng: np.random.Generator | None = None,
                confusion: np.ndarray | None = None) -> ParityScan:
    """Parity at each analysis phase; with shots > 0 the four populations are
    sampled multinomially (seeded rng required)."""
    phases = np.asarray(phases, dtype=float)
    out = np.empty_like(phases)
    for i, phi in enumerate(phases):
        p = np.real(np.diag(_analysed(np.asarray(rho, dtype=complex), phi)))
        if confusion is not None:
            p = apply_readout_error(p, confusion)
        if shots > 0:
            if rng is None:
                raise ValueError("shot sampling needs an explicit seeded rng")
            p = rng.multinomial(shots, np.clip(p, 0.0, 1.0) / np.clip(p, 0.0, 1.0).sum()) / shots
        out[i] = p[0] + p[3] - p[1] - p[2]
    return ParityScan(phases, out, shots=shots)


def fit_parity(scan: ParityScan) -> ParityFit:
    """Least-squares fit of P = P0 + C sin(2 (phi - phi_p)).

    Linear in (P0, A, B) with A = C cos(2 phi_p), B = -C sin(2 phi_p);
    phi_p is mapped into (-pi/2, pi/2] (the fringe is pi-periodic).
    """
    phi = scan.phases
    if len(np.unique(np.mod(phi, np.pi).round(12))) < 3:
        raise FitError("need at least three distinct analysis phases (mod pi)")
    design = np.column_stack([np.ones_like(phi), np.sin(2 * phi), np.cos(2 * phi)])
    if np.linalg.matrix_rank(design) < 3:
        raise FitError("rank-deficient design matrix")
    coef, *_ = np.linalg.lstsq(design, scan.parity, rcond=None)
    p0, a, b = coef
    contrast = float(np.hypot(a, b))
    phi_p = float(-np.arctan2(b, a) / 2.0)
    if phi_p <= -np.pi / 2.0:
        phi_p += np.pi
    elif phi_p > np.pi / 2.0:
        phi_p -= np.pi
    resid = scan.parity - design @ coef
    return ParityFit(float(p0), contrast, phi_p, float(np.sqrt(np.mean(resid**2))))


def bell_fidelity_two_point(rho: np.ndarray, phi_prime: float,
                            confusion: np.ndarray | None = None) -> float:
    """Two-point Bell fidelity F = ((p_uu + p_dd) + contrast)/2 with
    contrast = (P(phi') - P(phi' + pi/2))/2; sensitive to Bell-phase offsets."""
    rho = np.asarray(rho, dtype=complex)
    p = np.real(np.diag(rho))
    if confusion is not None:
        p = apply_readout_error(p, confusion)
    contrast = 0.5 * (
        parity_after_analysis(rho, phi_prime, confusion)
        - parity_after_analysis(rho, phi_prime + np.pi / 2.0, confusion)
    )
    return float(0.5 * ((p[0] + p[3]) + contrast))


def bell_fidelity(rho: np.ndarray, n_phases: int = 16) -> float:
    """Populations-plus-fitted-contrast fidelity against the best-matched
    z-basis Bell state (the dense-scan version of the two-point method)."""
    rho = np.asarray(rho, dtype=complex)
    p = np.real(np.diag(rho))
    fit = fit_parity(parity_scan(rho, np.linspace(0.0, np.pi, n_phases, endpoint=False)))
    return float(0.5 * ((p[0] + p[3]) + fit.contrast))


def state_fidelity(rho: np.ndarray, target: np.ndarray) -> float:
    """<target| rho |target> for a pure target state."""
    target = np.asarray(target, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        return float(abs(np.vdot(target, rho)) ** 2)
    return float(np.real(target.conj() @ rho @ target))


def target_bell(phase: float = -np.pi / 2.0) -> np.ndarray:
    """(|up up> + e^(i phase) |down down>)/sqrt(2); the default phase -pi/2
    is the Ramsey-prepared LS Bell state."""
    return np.array([1.0, 0.0, 0.0, np.exp(1j * phase)]) / np.sqrt(2.0)
