"""Numerical engine: time-dependent Hamiltonians on the truncated composite
space, fixed-step propagation of pure states and density matrices (Lindblad
heating), pulse shaping and the end-to-end sequence driver.

All Hamiltonians are returned in angular-frequency units (H / hbar, rad/s)
in the interaction picture of the qubits and the motional mode(s):
mode operators carry explicit exp(-+ i w_m t) factors.  `level` selects how
much of the drive is kept:

* "rwa": only the slow spin-dependent-force terms rotating at the gate
  detuning (the closed-form engine's branch structure, generalised to
  unbalanced bichromatic tones for the MS gate),
* "full": additionally the carrier terms and the counter-rotating force
  terms, and for the LS gate both axial modes simultaneously.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .hilbert import (
    DensityMatrix,
    ID2,
    SIGMA_P,
    SIGMA_Z,
    ladder_operators,
    mode_operator,
    partial_trace,
    qubit_operator,
    tensor,
)
from .model import GateConfig, IonSpec, MotionalMode
from .sequence import PulseSequence, SequenceElement, rotation_unitary

TWO_PI = 2.0 * np.pi


class StepSizeError(RuntimeError):
    """Raised when the fixed-step integrator loses unitarity or trace."""


@dataclass(frozen=True)
class NoiseModel:
    """Imperfections applied during propagation.

    heating turns on the infinite-temperature Lindblad pair sqrt(rate) a,
    sqrt(rate) a^dag per mode (rates from the modes unless overridden);
    qubit_offsets are frequency offsets in Hz added to the ions' static
    offsets; randomize_phi0 averages the outcome over uniformly random LS
    drive phases (shot-to-shot laser phase).
    """

    heating: bool = False
    heating_rates: tuple[float, ...] | None = None  # quanta/s per mode
    qubit_offsets: tuple[float, float] = (0.0, 0.0)  # Hz
    randomize_phi0: bool = False
    shots: int = 16


@dataclass(frozen=True)
class PropagationOptions:
    step: float | None = None  # s; None -> level-dependent default
    fock_dim: int = 15
    master: bool = False  # force density-matrix propagation
    ramp: float = 0.0  # s, default sin^2 rise/fall of gate pulses
    samples_per_pulse: int = 32
    norm_tol: float = 1e-6  # allowed norm/trace drift before StepSizeError


@dataclass
class TimeDependentHamiltonian:
    """Sum over (constant operator, complex scalar envelope of time) pairs.

    `dims` are the subsystem dimensions of the composite space.  When
    `spin_blocks` is set the spin part of every term is diagonal and each of
    the four spin branches evolves under its own motion-space Hamiltonian
    scalar_env(t) * 1 + sum over modes of g(t) a_m + conj(g)(t) a_m^dag;
    the block terms are (mode index, "a" | "ad", envelope) descriptors so the
    ladder operators can be applied in O(dim) without matrices.
    """

    dims: tuple[int, ...]
    terms: list[tuple[np.ndarray, Callable[[float], complex]]]
    window: tuple[float, float]
    spin_blocks: list[tuple[Callable[[float], complex],
                            list[tuple[int, str, Callable[[float], complex]]]]] | None = None

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def __call__(self, t: float) -> np.ndarray:
        h = np.zeros((self.dim, self.dim), dtype=complex)
        for op, env in self.terms:
            h += env(t) * op
        return h

    def hermiticity_defect(self, times: np.ndarray) -> float:
        return max(float(np.max(np.abs(self(t) - self(t).conj().T))) for t in times)


def pulse_envelope(t: np.ndarray | float, element: SequenceElement, ramp: float) -> np.ndarray | float:
    """sin^2-shaped rise and fall of duration `ramp`, flat top, zero outside
    the element window; ramp = 0 gives a rectangular pulse."""
    if ramp < 0:
        raise ValueError("ramp must be >= 0")
    if ramp > element.duration / 2.0 + 1e-15:
        raise ValueError(
            f"ramp {ramp} longer than half the pulse duration {element.duration}"
        )
    tau = np.asarray(t, dtype=float) - element.start
    inside = (tau >= 0.0) & (tau <= element.duration)
    if ramp == 0.0:
        out = np.where(inside, 1.0, 0.0)
        return float(out) if np.isscalar(t) else out
    up = np.clip(tau / ramp, 0.0, 1.0)
    down = np.clip((element.duration - tau) / ramp, 0.0, 1.0)
    out = np.where(inside, np.minimum(np.sin(np.pi * up / 2.0) ** 2,
                                      np.sin(np.pi * down / 2.0) ** 2), 0.0)
    return float(out) if np.isscalar(t) else out


def _envelope_fn(element: SequenceElement, default_ramp: float):
    ramp = element.ramp if element.ramp is not None else default_ramp
    amp = element.amplitude
    if ramp == 0.0:
        t0, t1 = element.start, element.end
        return lambda t: amp if t0 - 1e-15 <= t <= t1 + 1e-15 else 0.0
    return lambda t: amp * pulse_envelope(t, element, ramp)


def _whole_gate_element(config: GateConfig) -> SequenceElement:
    return SequenceElement(kind="gate", start=0.0, duration=config.loops * config.loop_time)


def _offset_terms(dims, offsets_hz: tuple[float, float]):
    terms = []
    for j, d0 in enumerate(offsets_hz):
        if d0 != 0.0:
            op = qubit_operator(SIGMA_Z, j, dims[2:])
            terms.append((np.pi * d0 * op, _const(1.0)))
    return terms


def _const(c: complex):
    return lambda t: c


def build_ms_hamiltonian(
    config: GateConfig,
    ions: tuple[IonSpec, IonSpec],
    mode: MotionalMode,
    level: str = "rwa",
    element: SequenceElement | None = None,
    offsets: tuple[float, float] | None = None,
    fock_dim: int = 15,
    default_ramp: float = 0.0,
) -> TimeDependentHamiltonian:
    """Molmer-Sorensen Hamiltonian on qubit x qubit x mode.

    "full" keeps the carrier terms and both bichromatic tones with their
    counter-rotating parts; "rwa" keeps only the terms rotating at the gate
    detuning (which reproduces the closed-form branch structure when the
    tone amplitudes are balanced).  Qubit frequency offsets enter as
    pi * d0_j * sigma_z_j.
    """
    if config.mechanism != "ms":
        raise ValueError("config is not an MS gate")
    if mode.eta is None:
        raise ValueError("mode has no Lamb-Dicke factors")
    if element is None:
        element = _whole_gate_element(config)
    if offsets is None:
        offsets = (ions[0].qubit.offset, ions[1].qubit.offset)
    dims = (2, 2, fock_dim)
    a, ad = ladder_operators(fock_dim)
    env = _envelope_fn(element, default_ramp)
    dg = config.delta_g
    wz = TWO_PI * mode.frequency
    terms: list[tuple[np.ndarray, Callable[[float], complex]]] = []

    for j in (0, 1):
        eta = mode.eta[j]
        sp = qubit_operator(SIGMA_P, j, (fock_dim,))
        sm = sp.conj().T
        sp_a = sp @ mode_operator(a, 0, (fock_dim,))
        sp_ad = sp @ mode_operator(ad, 0, (fock_dim,))
        om = {
            +1: ions[j].rabi * config.ion_scale[j] * config.tone_scale[0],
            -1: ions[j].rabi * config.ion_scale[j] * config.tone_scale[1],
        }
        phi = {
            +1: config.phi_s[j] + config.phi_d[j] + element.tone_offsets[0],
            -1: config.phi_s[j] - config.phi_d[j] + element.tone_offsets[1],
        }
        if level == "rwa":
            # slow terms only: the tone field carries exp(-i(phi_k - det_k t))
            # on sigma+, so sigma+ a survives from the blue tone and
            # sigma+ a^dag from the red one
            c_a = -0.5j * eta * om[+1] * np.exp(-1j * phi[+1])
            c_ad = -0.5j * eta * om[-1] * np.exp(-1j * phi[-1])
            terms.append((sp_a, lambda t, c=c_a, w=dg: c * np.exp(1j * w * t) * env(t)))
            terms.append((sp_a.conj().T, lambda t, c=c_a, w=dg: np.conj(c) * np.exp(-1j * w * t) * env(t)))
            terms.append((sp_ad, lambda t, c=c_ad, w=dg: c * np.exp(-1j * w * t) * env(t)))
            terms.append((sp_ad.conj().T, lambda t, c=c_ad, w=dg: np.conj(c) * np.exp(1j * w * t) * env(t)))
        elif level == "full":
            for k, sgn in ((+1, +1.0), (-1, -1.0)):
                det = sgn * (wz + dg)  # tone detuning from the carrier
                c0 = -0.5 * om[k] * np.exp(-1j * phi[k])
                cs = -0.5j * eta * om[k] * np.exp(-1j * phi[k])
                terms.append((sp, lambda t, c=c0, w=det: c * np.exp(1j * w * t) * env(t)))
                terms.append((sm, lambda t, c=c0, w=det: np.conj(c) * np.exp(-1j * w * t) * env(t)))
                terms.append((sp_a, lambda t, c=cs, w=det - wz: c * np.exp(1j * w * t) * env(t)))
                terms.append((sp_a.conj().T, lambda t, c=cs, w=det - wz: np.conj(c) * np.exp(-1j * w * t) * env(t)))
                terms.append((sp_ad, lambda t, c=cs, w=det + wz: c * np.exp(1j * w * t) * env(t)))
                terms.append((sp_ad.conj().T, lambda t, c=cs, w=det + wz: np.conj(c) * np.exp(-1j * w * t) * env(t)))
        else:
            raise ValueError(f"unknown level {level!r}")

    terms.extend(_offset_terms(dims, offsets))
    return TimeDependentHamiltonian(dims=dims, terms=terms, window=(element.start, element.end))


def _ls_shift_diag(config: GateConfig, ions: tuple[IonSpec, IonSpec], j: int) -> np.ndarray:
    """Light shift of ion j on each two-qubit basis state, as a length-4 diagonal."""
    shifts = []
    for s1, s2 in ((+1, +1), (+1, -1), (-1, +1), (-1, -1)):
        s = s1 if j == 0 else s2
        shifts.append(ions[j].light_shift(s) * config.ion_scale[j])
    return np.array(shifts)


def build_ls_hamiltonian(
    config: GateConfig,
    ions: tuple[IonSpec, IonSpec],
    modes: tuple[MotionalMode, ...],
    level: str = "rwa",
    element: SequenceElement | None = None,
    offsets: tuple[float, float] | None = None,
    fock_dim: int = 15,
    default_ramp: float = 0.0,
) -> TimeDependentHamiltonian:
    """Light-shift Hamiltonian.

    "rwa" keeps the single addressed mode's slow force terms (the
    closed-form branch structure); "full" keeps the carrier-like term and
    the force on every supplied mode, with counter-rotating parts.  The
    drive at ion j is proportional to cos(w t + phi0 + phi_z_j) with
    phi_z_1 = 0 and phi_z_2 = phi_z; the pulse element's phi0_offset adds to
    phi0.  All spin operators are diagonal, so the Hamiltonian also carries
    the per-branch block decomposition used by the fast propagation path.
    """
    if config.mechanism != "ls":
        raise ValueError("config is not an LS gate")
    if element is None:
        element = _whole_gate_element(config)
    if offsets is None:
        offsets = (ions[0].qubit.offset, ions[1].qubit.offset)
    addressed = [m for m in modes if m.label == config.mode_label]
    if not addressed:
        raise ValueError(f"no mode labelled {config.mode_label!r} supplied")
    if any(m.eta is None for m in modes):
        raise ValueError("modes need Lamb-Dicke factors")
    env = _envelope_fn(element, default_ramp)
    phi0 = config.phi0 + element.phi0_offset
    phiz = (0.0, config.phi_z)
    dg = config.delta_g
    w_drive = TWO_PI * addressed[0].frequency + dg

    use_modes = addressed if level == "rwa" else list(modes)
    fdims = tuple(fock_dim for _ in use_modes)
    dims = (2, 2) + fdims
    a, ad = ladder_operators(fock_dim)
    shift1 = _ls_shift_diag(config, ions, 0)
    shift2 = _ls_shift_diag(config, ions, 1)

    terms: list[tuple[np.ndarray, Callable[[float], complex]]] = []
    blocks: list[tuple[Callable, list]] = []
    block_offsets = np.array(
        [np.pi * (offsets[0] * s1 + offsets[1] * s2) for s1, s2 in ((1, 1), (1, -1), (-1, 1), (-1, -1))]
    )

    if level == "rwa":
        eta = addressed[0].eta
        f_branch = shift1 * eta[0] + shift2 * eta[1] * np.exp(1j * config.phi_z)
        w_spin_a = np.diag(f_branch)
        op_a = tensor(w_spin_a, a)
        op_ad = op_a.conj().T
        e_a = lambda t: 0.5j * np.exp(1j * (dg * t + phi0)) * env(t)
        e_ad = lambda t: -0.5j * np.exp(-1j * (dg * t + phi0)) * env(t)
        terms.append((op_a, e_a))
        terms.append((op_ad, e_ad))
        for b in range(4):
            fb = f_branch[b]
            blocks.append((
                _const(block_offsets[b]),
                [
                    (0, "a", lambda t, c=fb: 0.5j * c * np.exp(1j * (dg * t + phi0)) * env(t)),
                    (0, "ad", lambda t, c=fb: -0.5j * np.conj(c) * np.exp(-1j * (dg * t + phi0)) * env(t)),
                ],
            ))
    elif level == "full":
        # carrier-like term: -sum_j W_j cos(w t + phi0 + phi_z_j), spin-diagonal
        spin_c = [np.diag(shift_j) for shift_j in (shift1, shift2)]
        for j, sc in enumerate(spin_c):
            op = tensor(sc, *[np.eye(fock_dim) for _ in use_modes])
            terms.append((op, lambda t, pj=phiz[j]: -np.cos(w_drive * t + phi0 + pj) * env(t)))
        for mi, m in enumerate(use_modes):
            wm = TWO_PI * m.frequency
            for j, shift_j in enumerate((shift1, shift2)):
                eta = m.eta[j]
                sc = np.diag(shift_j)
                op_a = tensor(sc, *[a if k == mi else np.eye(fock_dim) for k in range(len(use_modes))])
                terms.append((op_a, lambda t, e=eta, pj=phiz[j], w=wm:
                              -e * np.sin(w_drive * t + phi0 + pj) * np.exp(-1j * w * t) * env(t)))
                terms.append((op_a.conj().T, lambda t, e=eta, pj=phiz[j], w=wm:
                              -e * np.sin(w_drive * t + phi0 + pj) * np.exp(1j * w * t) * env(t)))
        for b in range(4):
            w1, w2 = shift1[b], shift2[b]
            scal = lambda t, u=w1, v=w2, d0=block_offsets[b]: (
                d0 - (u * np.cos(w_drive * t + phi0) + v * np.cos(w_drive * t + phi0 + phiz[1])) * env(t)
            )
            ops = []
            for mi, m in enumerate(use_modes):
                wm = TWO_PI * m.frequency
                g = lambda t, u=w1, v=w2, e1=m.eta[0], e2=m.eta[1], w=wm: (
                    -(u * e1 * np.sin(w_drive * t + phi0) + v * e2 * np.sin(w_drive * t + phi0 + phiz[1]))
                    * np.exp(-1j * w * t) * env(t)
                )
                ops.append((mi, "a", g))
                ops.append((mi, "ad", lambda t, gg=g: np.conj(gg(t))))
            blocks.append((scal, ops))
    else:
        raise ValueError(f"unknown level {level!r}")

    terms.extend(_offset_terms(dims, offsets))
    return TimeDependentHamiltonian(dims=dims, terms=terms,
                                    window=(element.start, element.end), spin_blocks=blocks)


def _lift_mode(op: np.ndarray, which: int, fdims: tuple[int, ...]) -> np.ndarray:
    mats = [op if k == which else np.eye(d, dtype=complex) for k, d in enumerate(fdims)]
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def ls_quadrature_phases(
    config: GateConfig,
    ions: tuple[IonSpec, IonSpec],
    modes: tuple[MotionalMode, ...],
    element: SequenceElement | None = None,
    ramp: float = 0.0,
    level: str = "rwa",
    points_per_period: int = 60,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact branch phases (and residual displacements) of one LS gate pulse
    by scalar quadrature.

    Every spin branch of the light-shift Hamiltonian is a c-number plus a
    linearly driven oscillator per mode, so its evolution follows from
    alpha' = -i conj(G)(t), Phi' = Im(conj(alpha) alpha') with G the
    coefficient of a, plus the integral of the scalar.  This holds with the
    carrier term, both modes and the counter-rotating parts included, which
    makes the quadrature an independent oracle for (and calibration of) the
    full-level propagation.

    Returns (phases[4], |alpha_residual|[4, n_modes]).
    """
    if config.mechanism != "ls":
        raise ValueError("config is not an LS gate")
    if element is None:
        element = _whole_gate_element(config)
    addressed = [m for m in modes if m.label == config.mode_label]
    if not addressed:
        raise ValueError(f"no mode labelled {config.mode_label!r} supplied")
    use_modes = addressed if level == "rwa" else list(modes)
    env_fn = _envelope_fn(element, ramp)
    dg = config.delta_g
    w_drive = TWO_PI * addressed[0].frequency + dg
    phi0 = config.phi0 + element.phi0_offset
    phiz = (0.0, config.phi_z)
    shift1 = _ls_shift_diag(config, ions, 0)
    shift2 = _ls_shift_diag(config, ions, 1)

    f_max = max(m.frequency for m in use_modes) if level == "full" else abs(dg) / TWO_PI
    n = max(2000, int(np.ceil(element.duration * f_max * 2.0 * points_per_period)))
    t = np.linspace(element.start, element.end, n + 1)
    envv = np.array([env_fn(tt) for tt in t])

    phases = np.zeros(4)
    resid = np.zeros((4, len(use_modes)))
    eta_addr = addressed[0].eta
    for b in range(4):
        w1, w2 = shift1[b], shift2[b]
        if level == "full":
            # the spin-diagonal carrier scalar c_b(t) advances the branch
            # phase by -integral(c_b); c_b = -(W1 cos x1 + W2 cos x2) env
            x1 = w_drive * t + phi0
            x2 = x1 + phiz[1]
            phases[b] += np.trapz((w1 * np.cos(x1) + w2 * np.cos(x2)) * envv, t)
        for mi, m in enumerate(use_modes):
            wm = TWO_PI * m.frequency
            if level == "full":
                x1 = w_drive * t + phi0
                x2 = x1 + phiz[1]
                g = -(w1 * m.eta[0] * np.sin(x1) + w2 * m.eta[1] * np.sin(x2)) * np.exp(-1j * wm * t) * envv
            else:
                fb = w1 * eta_addr[0] + w2 * eta_addr[1] * np.exp(1j * config.phi_z)
                g = 0.5j * fb * np.exp(1j * (dg * t + phi0)) * envv
            dalpha = -1j * np.conj(g)
            h = t[1] - t[0]
            alpha = np.concatenate([[0.0], np.cumsum(0.5 * (dalpha[1:] + dalpha[:-1]) * h)])
            phases[b] += np.trapz(np.imag(np.conj(alpha) * dalpha), t)
            resid[b, mi] = abs(alpha[-1])
    return phases, resid


def heating_jumps(rates: tuple[float, ...], dims: tuple[int, ...]) -> list[np.ndarray]:
    """Infinite-temperature Lindblad pair sqrt(rate) a, sqrt(rate) a^dag for
    every mode (the subsystems after the two qubits)."""
    jumps = []
    mode_dims = dims[2:]
    for m, rate in enumerate(rates):
        if rate <= 0.0:
            continue
        a, ad = ladder_operators(mode_dims[m])
        jumps.append(np.sqrt(rate) * mode_operator(a, m, mode_dims))
        jumps.append(np.sqrt(rate) * mode_operator(ad, m, mode_dims))
    return jumps


def default_step(level: str, config: GateConfig, modes: tuple[MotionalMode, ...]) -> float:
    """Integration step: 1/(200 f_oop) resolves the fastest oscillation at the
    full level; at the RWA level only the gate detuning sets the scale."""
    if level == "full":
        fmax = max(m.frequency for m in modes)
        return 1.0 / (200.0 * fmax)
    return config.loop_time / 800.0


# ---------------------------------------------------------------------------
# fixed-step RK4 propagation


def _rk4_pure(terms, psi, t0, t1, step):
    def rhs(t, y):
        out = np.zeros_like(y)
        for op, env in terms:
            c = env(t)
            if c != 0.0:
                out += c * (op @ y)
        return -1j * out

    n = max(1, int(np.ceil((t1 - t0) / step)))
    h = (t1 - t0) / n
    t = t0
    for _ in range(n):
        k1 = rhs(t, psi)
        k2 = rhs(t + 0.5 * h, psi + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, psi + 0.5 * h * k2)
        k4 = rhs(t + h, psi + h * k3)
        psi = psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return psi


def _rk4_lindblad(terms, jumps, rho, t0, t1, step):
    jd = [(c, c.conj().T, c.conj().T @ c) for c in jumps]

    def rhs(t, r):
        h = None
        for op, env in terms:
            c = env(t)
            if c != 0.0:
                h = c * op if h is None else h + c * op
        out = -1j * (h @ r - r @ h) if h is not None else np.zeros_like(r)
        for c, cd, cdc in jd:
            out += c @ r @ cd - 0.5 * (cdc @ r + r @ cdc)
        return out

    n = max(1, int(np.ceil((t1 - t0) / step)))
    h = (t1 - t0) / n
    t = t0
    for _ in range(n):
        k1 = rhs(t, rho)
        k2 = rhs(t + 0.5 * h, rho + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, rho + 0.5 * h * k2)
        k4 = rhs(t + h, rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)  # Hermitization guard
        t += h
    return rho


def _ladder_apply(y: np.ndarray, mode: int, kind: str, sqrt_n: list[np.ndarray]) -> np.ndarray:
    """(a y) or (a^dag y) on mode `mode` of a motion tensor y with one axis
    per mode; O(dim) slicing instead of a matrix product."""
    w = sqrt_n[mode][1:].reshape((-1,) + (1,) * (y.ndim - 1))
    out = np.zeros_like(y)
    src = np.moveaxis(y, mode, 0)
    dst = np.moveaxis(out, mode, 0)
    if kind == "a":
        dst[:-1] = w * src[1:]
    else:
        dst[1:] = w * src[:-1]
    return out


def _rk4_blocks(blocks, psi_mat, t0, t1, step, fdims):
    """Propagate the four spin branches of a spin-diagonal Hamiltonian;
    psi_mat has shape (4, motion_dim)."""
    sqrt_n = [np.sqrt(np.arange(d, dtype=float)) for d in fdims]
    shape = (len(fdims) and fdims) or (psi_mat.shape[1],)

    def rhs(t, y):
        out = np.empty_like(y)
        for b, (scal, ops) in enumerate(blocks):
            yb = y[b].reshape(shape)
            acc = scal(t) * yb
            for mode, kind, env in ops:
                c = env(t)
                if c != 0.0:
                    acc = acc + c * _ladder_apply(yb, mode, kind, sqrt_n)
            out[b] = (-1j * acc).ravel()
        return out

    n = max(1, int(np.ceil((t1 - t0) / step)))
    h = (t1 - t0) / n
    t = t0
    for _ in range(n):
        k1 = rhs(t, psi_mat)
        k2 = rhs(t + 0.5 * h, psi_mat + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, psi_mat + 0.5 * h * k2)
        k4 = rhs(t + h, psi_mat + h * k3)
        psi_mat = psi_mat + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return psi_mat


@dataclass
class PropagationResult:
    times: np.ndarray
    states: list[np.ndarray]
    is_density: bool


def propagate(
    h: TimeDependentHamiltonian,
    state: np.ndarray,
    t_eval: np.ndarray,
    options: PropagationOptions | None = None,
    jump_ops: list[np.ndarray] | None = None,
    step: float | None = None,
    norm_tol: float | None = None,
) -> PropagationResult:
    """Propagate `state` under `h`, returning it at every time in `t_eval`.

    Pure states evolve under the Schrodinger equation; density matrices (or
    pure states with jump operators / options.master) under the Lindblad
    master equation.  The fixed RK4 step is `step`, options.step, or a
    conservative default from the window length.  Unitarity/trace drift
    beyond `norm_tol` raises StepSizeError.
    """
    options = options or PropagationOptions()
    if norm_tol is None:
        norm_tol = options.norm_tol
    t_eval = np.atleast_1d(np.asarray(t_eval, dtype=float))
    dt = step if step is not None else options.step
    if dt is None:
        dt = (h.window[1] - h.window[0]) / 2000.0 if h.window[1] > h.window[0] else 1e-7
    state = np.asarray(state, dtype=complex)
    is_density = state.ndim == 2
    if (jump_ops or options.master) and not is_density:
        state = np.outer(state, state.conj())
        is_density = True

    use_blocks = (h.spin_blocks is not None and not is_density and not jump_ops
                  and state.shape[0] == h.dim)
    states = []
    t = h.window[0] if h.window[0] < t_eval[0] else t_eval[0]
    cur = state.reshape(4, -1).copy() if use_blocks else state.copy()
    for te in t_eval:
        if te < t - 1e-15:
            raise ValueError("t_eval must be non-decreasing")
        if te > t:
            if use_blocks:
                cur = _rk4_blocks(h.spin_blocks, cur, t, te, dt, h.dims[2:])
            elif is_density:
                cur = _rk4_lindblad(h.terms, jump_ops or [], cur, t, te, dt)
            else:
                cur = _rk4_pure(h.terms, cur, t, te, dt)
            t = te
        states.append(cur.reshape(h.dim, -1).squeeze().copy() if use_blocks else cur.copy())

    final = states[-1]
    if is_density:
        drift = abs(np.real(np.trace(final)) - 1.0)
    else:
        drift = abs(np.linalg.norm(final) - 1.0)
    if drift > norm_tol:
        raise StepSizeError(
            f"norm/trace drifted by {drift:.2e} over the propagation window; "
            f"reduce the integration step (used {dt:.3e} s)"
        )
    return PropagationResult(times=t_eval, states=states, is_density=is_density)


# ---------------------------------------------------------------------------
# sequence driver


@dataclass
class SimOutcome:
    """End-to-end result: populations are the two-qubit basis populations in
    the order (upper-upper, upper-lower, lower-upper, lower-lower)."""

    times: np.ndarray
    populations: np.ndarray  # (T, 4)
    nbar: np.ndarray  # (T, n_modes)
    final: DensityMatrix  # two-qubit reduced state
    final_full: np.ndarray  # full-space state (vector or matrix)
    dims: tuple[int, ...]


def ground_state(dims: tuple[int, ...]) -> np.ndarray:
    """|lower lower> (x) |0...0>: the two-qubit lower state with cold motion."""
    psi = np.zeros(int(np.prod(dims)), dtype=complex)
    # qubit basis index 1 = lower for both qubits, all modes in n = 0
    idx = np.ravel_multi_index((1, 1) + (0,) * (len(dims) - 2), dims)
    psi[idx] = 1.0
    return psi


def _rotation_matrix(element: SequenceElement, dims: tuple[int, ...]) -> np.ndarray:
    u = np.eye(int(np.prod(dims)), dtype=complex)
    for tgt in element.targets:
        u = qubit_operator(rotation_unitary(element.theta, element.phi), tgt, dims[2:]) @ u
    return u


def _free_terms(dims, offsets):
    return _offset_terms(dims, offsets)


def _number_ops(dims):
    ops = []
    for m, d in enumerate(dims[2:]):
        a, ad = ladder_operators(d)
        ops.append(mode_operator(ad @ a, m, dims[2:]))
    return ops


def simulate_gate(
    config: GateConfig,
    ions: tuple[IonSpec, IonSpec],
    modes: tuple[MotionalMode, ...],
    seq: PulseSequence,
    initial_state: np.ndarray | None = None,
    options: PropagationOptions | None = None,
    noise: NoiseModel | None = None,
    level: str = "rwa",
    record_times: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> SimOutcome:
    """Propagate an initial state through a pulse sequence.

    Gate pulses build the configured mechanism's Hamiltonian at the given
    level; rotations apply as instantaneous unitaries (or as finite carrier
    pulses when they carry a duration); the stretches in between evolve
    under the qubit offsets alone (exactly for pure states).  With
    noise.randomize_phi0 the outcome is averaged over `noise.shots` uniform
    drive phases using the supplied rng.
    """
    options = options or PropagationOptions()
    noise = noise or NoiseModel()

    if noise.randomize_phi0:
        if rng is None:
            raise ValueError("randomize_phi0 needs an explicit seeded rng")
        outcomes = []
        for _ in range(max(1, noise.shots)):
            phi0 = rng.uniform(0.0, TWO_PI)
            out = simulate_gate(replace(config, phi0=phi0), ions, modes, seq,
                                initial_state, options,
                                replace(noise, randomize_phi0=False),
                                level, record_times)
            outcomes.append(out)
        pops = np.mean([o.populations for o in outcomes], axis=0)
        nbar = np.mean([o.nbar for o in outcomes], axis=0)
        rho2 = np.mean([o.final.matrix for o in outcomes], axis=0)
        first = outcomes[0]
        return SimOutcome(first.times, pops, nbar, DensityMatrix(rho2, (2, 2)),
                          first.final_full, first.dims)

    if config.mechanism == "ls":
        use_modes = tuple(m for m in modes if m.label == config.mode_label) if level == "rwa" else tuple(modes)
    else:
        use_modes = tuple(m for m in modes if m.label == config.mode_label)
    if not use_modes:
        raise ValueError(f"no mode labelled {config.mode_label!r} supplied")
    dims = (2, 2) + tuple(options.fock_dim for _ in use_modes)

    offsets = (
        ions[0].qubit.offset + noise.qubit_offsets[0],
        ions[1].qubit.offset + noise.qubit_offsets[1],
    )
    state = ground_state(dims) if initial_state is None else np.asarray(initial_state, dtype=complex)
    rates = None
    if noise.heating:
        rates = noise.heating_rates if noise.heating_rates is not None else tuple(
            m.heating_rate for m in use_modes
        )
    jumps = heating_jumps(rates, dims) if rates else []
    if (jumps or options.master) and state.ndim == 1:
        state = np.outer(state, state.conj())

    step = options.step if options.step is not None else default_step(level, config, use_modes)
    n_ops = _number_ops(dims)

    total = seq.total_duration
    if record_times is None:
        marks = {0.0, total}
        for e in seq.elements:
            marks.add(e.start)
            marks.add(e.end)
            if e.kind == "gate" and e.duration > 0:
                marks.update(np.linspace(e.start, e.end, options.samples_per_pulse).tolist())
        record_times = np.array(sorted(marks))
    record_times = np.atleast_1d(np.asarray(record_times, dtype=float))

    # event walk: instantaneous rotations + propagation windows between them
    events = sorted(seq.elements, key=lambda e: (e.start, e.duration))
    times_out, pops_out, nbar_out = [], [], []
    t = 0.0
    ri = 0

    def record(state, tnow):
        nonlocal ri
        while ri < len(record_times) and record_times[ri] <= tnow + 1e-15:
            rho2 = _reduced_qubits(state, dims)
            times_out.append(record_times[ri])
            pops_out.append(np.real(np.diag(rho2)))
            nbar_out.append([_expect(state, nop) for nop in n_ops])
            ri += 1

    def drift(state, t0, t1):
        if t1 <= t0 + 1e-18:
            return state
        terms = _free_terms(dims, offsets)
        if state.ndim == 2 or jumps:
            h = TimeDependentHamiltonian(dims, terms, (t0, t1))
            res = propagate(h, state, np.array([t1]), options, jump_ops=jumps,
                            step=max(step, (t1 - t0) / 400.0))
            return res.states[-1]
        # exact diagonal evolution for pure states
        phases = np.zeros(int(np.prod(dims)))
        for j, d0 in enumerate(offsets):
            if d0 != 0.0:
                diag = np.real(np.diag(qubit_operator(SIGMA_Z, j, dims[2:])))
                phases = phases + np.pi * d0 * diag
        return np.exp(-1j * phases * (t1 - t0)) * state

    record(state, 0.0)
    for e in events:
        # free evolution up to the element, recording inside the window
        while ri < len(record_times) and record_times[ri] < e.start - 1e-15:
            state = drift(state, t, record_times[ri])
            t = record_times[ri]
            record(state, t)
        state = drift(state, t, e.start)
        t = e.start
        record(state, t)
        if e.kind == "rotation":
            if e.duration == 0.0:
                u = _rotation_matrix(e, dims)
                state = u @ state @ u.conj().T if state.ndim == 2 else u @ state
            else:
                # finite-duration carrier pulse driven at theta/duration
                rot_terms = []
                for tgt in e.targets:
                    op = qubit_operator(
                        0.5 * (e.theta / e.duration) *
                        (np.cos(e.phi) * np.array([[0, 1], [1, 0]]) + np.sin(e.phi) * np.array([[0, -1j], [1j, 0]])),
                        tgt, dims[2:],
                    )
                    rot_terms.append((op, _const(1.0)))
                h = TimeDependentHamiltonian(dims, rot_terms + _free_terms(dims, offsets), (t, e.end))
                state = propagate(h, state, np.array([e.end]), options, jump_ops=jumps, step=step).states[-1]
                t = e.end
        elif e.kind == "gate":
            if e.duration > 0.0:
                if config.mechanism == "ms":
                    h = build_ms_hamiltonian(config, ions, use_modes[0], level, e, offsets,
                                             options.fock_dim, options.ramp)
                else:
                    h = build_ls_hamiltonian(config, ions, use_modes, level, e, offsets,
                                             options.fock_dim, options.ramp)
                inside = record_times[(record_times > t + 1e-15) & (record_times <= e.end + 1e-15)]
                t_eval = np.unique(np.append(inside, e.end))
                res = propagate(h, state, t_eval, options, jump_ops=jumps, step=step)
                for tt, st in zip(res.times, res.states):
                    state = st
                    record(state, tt)
                t = e.end
        # delays need no action beyond the free drift above

    # trailing records
    while ri < len(record_times):
        state = drift(state, t, record_times[ri])
        t = record_times[ri]
        record(state, t)

    rho2 = _reduced_qubits(state, dims)
    return SimOutcome(
        times=np.array(times_out),
        populations=np.array(pops_out),
        nbar=np.array(nbar_out),
        final=DensityMatrix(rho2, (2, 2)),
        final_full=state,
        dims=dims,
    )


def _expect(state: np.ndarray, op: np.ndarray) -> float:
    if state.ndim == 2:
        return float(np.real(np.trace(op @ state)))
    return float(np.real(state.conj() @ (op @ state)))


def _reduced_qubits(state: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    rho = state if state.ndim == 2 else np.outer(state, state.conj())
    red, _ = partial_trace(rho, dims, (0, 1))
    return red
