"""Pulse-sequence composition: rotations, Walsh-2 gate constructions and the
phase-insensitive wrapper.

Timing and phase bookkeeping: gate drives are phase-continuous in global
time.  The LS drive is proportional to cos(w t + phi0 + offset); the MS tone
fields carry phases phi_{+-}, with the spin-dependent force rotating as
exp(i (delta_g t - phi_d)).  A second Walsh loop starting t_delay after the
first therefore re-starts its force trajectory when the LS drive phase is
shifted by -delta_g * t_delay, or the MS tone phases by (pi + delta_g
t_delay, pi - delta_g t_delay); the pi in the MS law flips the gate basis,
and for the LS gate the spin-echo pi pulse supplies the equivalent flip.

Microwave/rf and laser phase references are independent: rotation elements
record their driver and an absolute axis phase, and the builders derive
those phases from inputs (phi_uw, phi_rf vs phi_s) that have no fixed
relation to each other.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .hilbert import pauli_phi
from .model import GateConfig


class SequenceError(ValueError):
    """Raised for ill-formed pulse sequences."""


@dataclass(frozen=True)
class SequenceElement:
    kind: str  # "gate" | "rotation" | "delay"
    start: float  # s
    duration: float  # s
    # rotation fields
    targets: tuple[int, ...] = (0, 1)
    theta: float = 0.0
    phi: float = 0.0
    driver: str = "uwrf"  # "uwrf" | "laser"
    # gate-pulse fields
    phi0_offset: float = 0.0  # LS drive-phase offset of this pulse
    tone_offsets: tuple[float, float] = (0.0, 0.0)  # MS (+, -) tone phase offsets
    amplitude: float = 1.0
    ramp: float | None = None  # s; None -> propagation default

    def __post_init__(self):
        if self.kind not in ("gate", "rotation", "delay"):
            raise SequenceError(f"unknown element kind {self.kind!r}")
        if self.duration < 0:
            raise SequenceError("element duration must be >= 0")
        if self.kind == "rotation" and not (-2.0 * np.pi < self.theta <= 2.0 * np.pi):
            raise SequenceError(f"rotation angle {self.theta} outside (-2 pi, 2 pi]")

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class PulseSequence:
    elements: tuple[SequenceElement, ...]

    def __post_init__(self):
        elems = tuple(sorted(self.elements, key=lambda e: (e.start, e.duration)))
        object.__setattr__(self, "elements", elems)
        t = None
        for e in elems:
            if e.duration == 0.0:
                continue
            if t is not None and e.start < t - 1e-15:
                raise SequenceError(
                    f"element starting at {e.start} overlaps the previous one ending at {t}"
                )
            t = e.end

    @property
    def total_duration(self) -> float:
        return max((e.end for e in self.elements), default=0.0)

    def shifted(self, dt: float) -> "PulseSequence":
        return PulseSequence(tuple(replace(e, start=e.start + dt) for e in self.elements))

    def gate_pulses(self) -> list[SequenceElement]:
        return [e for e in self.elements if e.kind == "gate"]


def rotation(
    theta: float,
    phi: float,
    targets: tuple[int, ...] = (0, 1),
    driver: str = "uwrf",
    start: float = 0.0,
    duration: float = 0.0,
) -> SequenceElement:
    """Single-qubit rotation exp(-i theta sigma_phi / 2) on the target ion(s);
    instantaneous unless a duration is given."""
    return SequenceElement(
        kind="rotation", start=start, duration=duration, targets=tuple(targets),
        theta=theta, phi=phi, driver=driver,
    )


def rotation_unitary(theta: float, phi: float) -> np.ndarray:
    """2x2 unitary exp(-i theta sigma_phi / 2)."""
    return np.cos(theta / 2.0) * np.eye(2, dtype=complex) - 1j * np.sin(theta / 2.0) * pauli_phi(phi)


def delay(start: float, duration: float) -> SequenceElement:
    return SequenceElement(kind="delay", start=start, duration=duration)


def _gate_pulse(start: float, duration: float, **kw) -> SequenceElement:
    return SequenceElement(kind="gate", start=start, duration=duration, **kw)


DEFAULT_LOOP_GAP = 1e-6  # s between Walsh loops when t_delay is not given


def build_ls_walsh2(config: GateConfig, t_delay: float | None = None,
                    ramp: float | None = None) -> PulseSequence:
    """Two-loop LS gate in its Bell-preparation sequence.

    pi/2 x-rotations on both qubits, first loop, a uw/rf spin-echo pi_x
    centred between the loops, second loop with its drive phase shifted by
    -delta_g * t_delay, and a final pair of pi/2 x-rotations.  The echo sits
    at the temporal midpoint of the sequence so a constant qubit-frequency
    offset cancels exactly.
    """
    if config.mechanism != "ls":
        raise SequenceError("build_ls_walsh2 needs an LS gate config")
    if config.loops != 2:
        raise SequenceError("Walsh-2 construction needs config.loops == 2")
    tau = config.loop_time
    if t_delay is None:
        t_delay = tau + DEFAULT_LOOP_GAP
    if t_delay < tau:
        raise SequenceError(f"t_delay {t_delay} shorter than the loop duration {tau}")
    shift = -config.delta_g * t_delay
    end = t_delay + tau
    return PulseSequence((
        rotation(np.pi / 2.0, 0.0, (0, 1), "uwrf", start=0.0),
        _gate_pulse(0.0, tau, ramp=ramp),
        rotation(np.pi, 0.0, (0, 1), "uwrf", start=0.5 * end),
        _gate_pulse(t_delay, tau, phi0_offset=shift, ramp=ramp),
        rotation(np.pi / 2.0, 0.0, (0, 1), "uwrf", start=end),
    ))


def build_ms_walsh2(config: GateConfig, t_delay: float | None = None,
                    ramp: float | None = None) -> PulseSequence:
    """Two-loop MS gate: second pulse tone phases adjusted by
    pi +- delta_g * t_delay relative to the first; no spin echo."""
    if config.mechanism != "ms":
        raise SequenceError("build_ms_walsh2 needs an MS gate config")
    if config.loops != 2:
        raise SequenceError("Walsh-2 construction needs config.loops == 2")
    tau = config.loop_time
    if t_delay is None:
        t_delay = tau + DEFAULT_LOOP_GAP
    if t_delay < tau:
        raise SequenceError(f"t_delay {t_delay} shorter than the loop duration {tau}")
    adj = (np.pi + config.delta_g * t_delay, np.pi - config.delta_g * t_delay)
    return PulseSequence((
        _gate_pulse(0.0, tau, ramp=ramp),
        _gate_pulse(t_delay, tau, tone_offsets=adj, ramp=ramp),
    ))


def wrap_phase_insensitive(
    gate_sequence: PulseSequence,
    config: GateConfig,
    phi_uw: float = 0.0,
    phi_rf: float = 0.0,
    phi_s: tuple[float, float] | None = None,
) -> PulseSequence:
    """Make a phase-sensitive MS gate insensitive to the laser sum phases.

    Five stages: uw/rf pi/2 pulses (axes -phi_uw, -phi_rf, no fixed relation
    to the laser), laser pi/2 pulses that write the laser phase onto each
    qubit, the gate, laser pi/2 pulses that unwrite it, and closing uw/rf
    pi/2 pulses returning the state to the z axis.  With the gate basis at
    sigma_(pi/2 + phi_s) the write/unwrite axes are phi_s + pi and phi_s;
    the final Bell state is then independent of both phi_s.
    """
    if config.mechanism != "ms":
        raise SequenceError("the phase-insensitive wrapper only applies to MS gates")
    if phi_s is None:
        phi_s = config.phi_s
    t_end = gate_sequence.total_duration
    elems = [
        rotation(np.pi / 2.0, -phi_uw, (0,), "uwrf", start=0.0),
        rotation(np.pi / 2.0, -phi_rf, (1,), "uwrf", start=0.0),
        rotation(np.pi / 2.0, phi_s[0] + np.pi, (0,), "laser", start=0.0),
        rotation(np.pi / 2.0, phi_s[1] + np.pi, (1,), "laser", start=0.0),
    ]
    elems.extend(gate_sequence.elements)
    elems.extend([
        rotation(np.pi / 2.0, phi_s[0], (0,), "laser", start=t_end),
        rotation(np.pi / 2.0, phi_s[1], (1,), "laser", start=t_end),
        rotation(np.pi / 2.0, -phi_uw, (0,), "uwrf", start=t_end),
        rotation(np.pi / 2.0, -phi_rf, (1,), "uwrf", start=t_end),
    ])
    return PulseSequence(tuple(elems))
