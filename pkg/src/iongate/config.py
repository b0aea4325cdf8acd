"""Run-configuration file parsing and validation.

Format: `[section]` headers with `key = value` lines; `#` starts a comment.
Numeric values carry a required unit suffix (Hz, kHz, MHz, THz, us, mW, G,
rad) or are bare dimensionless; booleans are true/false; a few enumerated
keys take bare words (mechanism, mode, level).  Drive amplitudes (Rabi
rates, light shifts) are quoted as ordinary frequencies and converted to
angular units internally.  Unknown keys are rejected with the offending
line number; every default that fills a missing key is recorded so the
result envelope can report it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import dynamics
from .model import (
    GateConfig,
    IonSpec,
    MotionalMode,
    QubitSpec,
    two_ion_modes,
    raman_delta_k,
    with_lamb_dicke,
)

TWO_PI = 2.0 * np.pi


class ConfigError(ValueError):
    pass


_UNIT_FACTORS = {
    "freq": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "THz": 1e12},
    "time": {"us": 1e-6},
    "power": {"mW": 1e-3},
    "field": {"G": 1.0},
    "angle": {"rad": 1.0},
}

# (section, key) -> (kind, default); kind is a unit class, "bare", "int",
# "bool", "str", or an enum tuple.  A default of REQUIRED marks a mandatory key.
REQUIRED = object()

_SCHEMA: dict[str, dict[str, tuple]] = {
    "species": {
        "mass1": ("bare", 42.958766),
        "mass2": ("bare", 87.905612),
        "qubit1": ("str", "Ca-stretch"),
        "qubit2": ("str", "Sr-Zeeman"),
        "f0_1": ("freq", 2.874e9),
        "f0_2": ("freq", 409e6),
        "sens1_hz_per_g": ("bare", -2.36e6),
        "sens2_hz_per_g": ("bare", 2.80e6),
    },
    "modes": {
        "f_ip": ("freq", 1.49e6),
        "heating_ip_per_s": ("bare", 93.0),
        "heating_oop_per_s": ("bare", 27.0),
        "idealized_vectors": ("bool", False),
    },
    "gate": {
        "mechanism": (("ls", "ms"), REQUIRED),
        "mode": (("ip", "oop"), "oop"),
        "delta_g": ("freq", REQUIRED),
        "loops": ("int", 2),
        "phi0": ("angle", 0.0),
        "phi_z": ("angle", np.pi),
        "phi_s1": ("angle", 0.0),
        "phi_s2": ("angle", 0.0),
        "phi_d1": ("angle", 0.0),
        "phi_d2": ("angle", 0.0),
        "rabi1": ("freq", 0.0),
        "rabi2": ("freq", 0.0),
        "shift_up1": ("freq", 0.0),
        "shift_down1": ("freq", 0.0),
        "shift_up2": ("freq", 0.0),
        "shift_down2": ("freq", 0.0),
        "scale1": ("bare", 1.0),
        "scale2": ("bare", 1.0),
        "tone_scale_plus": ("bare", 1.0),
        "tone_scale_minus": ("bare", 1.0),
        "calibrate": ("bool", True),
        "delta_ca": ("freq", -9.0e12),
    },
    "sequence": {
        "t_delay": ("time", None),
        "ramp": ("time", 0.0),
        "wrapper": ("bool", False),
        "phi_uw": ("angle", 0.0),
        "phi_rf": ("angle", 0.0),
    },
    "noise": {
        "heating": ("bool", False),
        "offset1": ("freq", 0.0),
        "offset2": ("freq", 0.0),
        "randomize_phi0": ("bool", False),
        "shots": ("int", 16),
    },
    "options": {
        "fock_dim": ("int", 15),
        "level": (("rwa", "full"), "rwa"),
        "step": ("time", None),
    },
    "scan": {
        "pulse_t_max": ("time", None),
        "pulse_points": ("int", 48),
        "parity_points": ("int", 24),
        "parity_shots": ("int", 0),
        "offset_max": ("freq", 1e3),
        "offset_points": ("int", 11),
        "offset_qubit": ("int", 0),
        "budget_min": ("freq", -19.5e12),
        "budget_max": ("freq", -1.5e12),
        "budget_points": ("int", 16),
        "heating_points": ("int", 10),
        "budget_fock_dim": ("int", 10),
        "tone_asym": ("bare", 0.0),
        "species_asym": ("bare", 0.0),
        "power": ("power", 70e-3),
        "beam_radius_um": ("bare", 25.0),
    },
}

_TOP_KEYS = {"seed": ("int", 0)}


def _parse_value(raw: str, kind, path: str, lineno: int, key: str):
    err = lambda msg: ConfigError(f"{path}:{lineno}: key {key!r}: {msg}")
    if isinstance(kind, tuple):  # enumeration
        if raw not in kind:
            raise err(f"expected one of {kind}, got {raw!r}")
        return raw
    if kind == "str":
        return raw
    if kind == "bool":
        if raw not in ("true", "false"):
            raise err(f"expected true/false, got {raw!r}")
        return raw == "true"
    parts = raw.split()
    if kind == "int":
        if len(parts) != 1:
            raise err(f"expected a bare integer, got {raw!r}")
        try:
            return int(parts[0])
        except ValueError:
            raise err(f"not an integer: {raw!r}") from None
    if kind == "bare":
        if len(parts) != 1:
            raise err(f"expected a bare dimensionless number, got {raw!r}")
        try:
            return float(parts[0])
        except ValueError:
            raise err(f"not a number: {raw!r}") from None
    factors = _UNIT_FACTORS[kind]
    if len(parts) != 2:
        raise err(f"expected '<number> <unit>' with unit in {sorted(factors)}, got {raw!r}")
    try:
        num = float(parts[0])
    except ValueError:
        raise err(f"not a number: {parts[0]!r}") from None
    if parts[1] not in factors:
        raise err(f"unit {parts[1]!r} invalid here; expected one of {sorted(factors)}")
    return num * factors[parts[1]]


def _read_sections(text: str, path: str):
    values: dict[tuple[str, str], object] = {}
    top: dict[str, object] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if section is None:
            if key not in _TOP_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown top-level key {key!r}")
            top[key] = _parse_value(raw, _TOP_KEYS[key][0], path, lineno, key)
            continue
        if key not in _SCHEMA[section]:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r} in section [{section}]")
        values[(section, key)] = _parse_value(raw, _SCHEMA[section][key][0], path, lineno, key)
    return top, values


@dataclass
class RunConfig:
    ions: tuple[IonSpec, IonSpec]
    modes: tuple[MotionalMode, MotionalMode]  # (ip, oop)
    gate: GateConfig
    t_delay: float | None
    ramp: float
    wrapper: bool
    phi_uw: float
    phi_rf: float
    noise: dynamics.NoiseModel
    options: dynamics.PropagationOptions
    scan: dict[str, object]
    level: str
    calibrate: bool
    seed: int
    config_hash: str
    defaults_applied: dict[str, object] = field(default_factory=dict)

    @property
    def addressed_mode(self) -> MotionalMode:
        return self.modes[0] if self.gate.mode_label == "ip" else self.modes[1]


def _canonical(top: dict, values: dict) -> str:
    lines = [f"{k} = {v!r}" for k, v in sorted(top.items())]
    for section in sorted(_SCHEMA):
        keys = sorted(k for (s, k) in values if s == section)
        if keys:
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {values[(section, k)]!r}" for k in keys)
    return "\n".join(lines)


def parse_config(path: str) -> RunConfig:
    """Parse, validate and resolve a configuration file into a RunConfig.

    Defaults fill any missing key and are recorded in `defaults_applied`;
    the config hash is taken over the canonicalised (sorted, unit-resolved)
    key/value pairs, so key order in the file does not matter.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    top, values = _read_sections(text, path)

    defaults: dict[str, object] = {}

    def get(section: str, key: str):
        kind, default = _SCHEMA[section][key]
        if (section, key) in values:
            return values[(section, key)]
        if default is REQUIRED:
            raise ConfigError(f"{path}: missing required key {key!r} in section [{section}]")
        defaults[f"{section}.{key}"] = default
        return default

    seed = top.get("seed")
    if seed is None:
        seed = _TOP_KEYS["seed"][1]
        defaults["seed"] = seed

    q1 = QubitSpec(get("species", "qubit1"), get("species", "f0_1"),
                   get("species", "sens1_hz_per_g"), get("noise", "offset1"))
    q2 = QubitSpec(get("species", "qubit2"), get("species", "f0_2"),
                   get("species", "sens2_hz_per_g"), get("noise", "offset2"))
    masses = (get("species", "mass1"), get("species", "mass2"))

    mechanism = get("gate", "mechanism")
    ions = (
        IonSpec(masses[0], q1, rabi=TWO_PI * get("gate", "rabi1"),
                shift_up=TWO_PI * get("gate", "shift_up1"),
                shift_down=TWO_PI * get("gate", "shift_down1")),
        IonSpec(masses[1], q2, rabi=TWO_PI * get("gate", "rabi2"),
                shift_up=TWO_PI * get("gate", "shift_up2"),
                shift_down=TWO_PI * get("gate", "shift_down2")),
    )

    dk = raman_delta_k()
    ip, oop = two_ion_modes(masses[0], masses[1], get("modes", "f_ip"),
                            idealized=get("modes", "idealized_vectors"))
    ip = with_lamb_dicke(ip, masses, dk, heating_rate=get("modes", "heating_ip_per_s"))
    oop = with_lamb_dicke(oop, masses, dk, heating_rate=get("modes", "heating_oop_per_s"))

    delta_g = get("gate", "delta_g")
    if delta_g == 0.0:
        raise ConfigError(f"{path}: delta_g = 0 is a resonant drive; the gate "
                          "detuning must be nonzero")
    try:
        gate = GateConfig(
            mechanism=mechanism,
            mode_label=get("gate", "mode"),
            delta_g=TWO_PI * delta_g,
            loops=get("gate", "loops"),
            phi0=get("gate", "phi0"),
            phi_z=get("gate", "phi_z"),
            phi_s=(get("gate", "phi_s1"), get("gate", "phi_s2")),
            phi_d=(get("gate", "phi_d1"), get("gate", "phi_d2")),
            ion_scale=(get("gate", "scale1"), get("gate", "scale2")),
            tone_scale=(get("gate", "tone_scale_plus"), get("gate", "tone_scale_minus")),
            delta_ca=get("gate", "delta_ca"),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    noise = dynamics.NoiseModel(
        heating=get("noise", "heating"),
        qubit_offsets=(0.0, 0.0),  # static offsets live on the QubitSpec records
        randomize_phi0=get("noise", "randomize_phi0"),
        shots=get("noise", "shots"),
    )
    options = dynamics.PropagationOptions(
        step=get("options", "step"),
        fock_dim=get("options", "fock_dim"),
    )
    scan = {k: get("scan", k) for k in _SCHEMA["scan"]}

    return RunConfig(
        ions=ions,
        modes=(ip, oop),
        gate=gate,
        t_delay=get("sequence", "t_delay"),
        ramp=get("sequence", "ramp"),
        wrapper=get("sequence", "wrapper"),
        phi_uw=get("sequence", "phi_uw"),
        phi_rf=get("sequence", "phi_rf"),
        noise=noise,
        options=options,
        scan=scan,
        level=get("options", "level"),
        calibrate=get("gate", "calibrate"),
        seed=seed,
        config_hash=hashlib.sha256(_canonical(top, values).encode()).hexdigest(),
        defaults_applied=defaults,
    )


def resolve(run: RunConfig) -> RunConfig:
    """Apply the amplitude calibration when requested, returning a RunConfig
    whose gate drives give |psi| = pi/2 over the configured loops."""
    if not run.calibrate:
        return run
    from . import analytic

    mode = run.addressed_mode
    factor = analytic.calibrate_amplitude(run.gate, run.ions, mode)
    return replace(run, gate=run.gate.scaled(factor))
