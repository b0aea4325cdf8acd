"""Error-budget modelling and calibration diagnostics.

The photon-scattering side is deliberately parametric: each species is a
two-level system with one effective linewidth, a 1/|Delta| two-photon
coupling law and a 1/Delta^2 scattering-rate law, with all coefficients
exposed.

The error decomposition of the detuning curve is the artifact's own and
follows the taxonomy that reduced gate efficiency acts through two separate
channels, longer duration (heating and decoherence) and larger phase-space
loops (closure-type errors):

* per-species Raman scattering, rate times gate time,
* a heating component proportional to heating-rate times gate time, whose
  sensitivity coefficient is calibrated per mode from master-equation
  evaluations at the most efficient operating geometry,
* a closure/efficiency component holding the residual-displacement error of
  a fixed motional-frequency uncertainty plus the loop-area-driven excess of
  the master-equation heating infidelity over the duration-proportional
  part.

The sum of the heating and closure components therefore reproduces the full
master-equation heating infidelity (interpolated between evaluation
points), and every component stays non-negative.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import least_squares

from . import analytic, dynamics, sequence, tomography
from .model import GateConfig, IonSpec, MotionalMode

H_PLANCK = 6.62607015e-34  # J s
C_LIGHT = 299792458.0  # m/s

#: level-structure gap between the two species' Raman resonances, Hz
RAMAN_GAP = 20.2e12


class ClassificationError(RuntimeError):
    def __init__(self, message: str, best: tuple[float, float], residual: float):
        super().__init__(message)
        self.best = best
        self.residual = residual


@dataclass(frozen=True)
class SpeciesOptics:
    """Two-level optical parameters of one species."""

    linewidth: float  # effective Gamma, rad/s
    wavelength: float  # transition wavelength, m
    coupling: float  # dimensionless differential-shift fraction of the two-photon Rabi

    @property
    def i_sat(self) -> float:
        """Two-level saturation intensity, W/m^2."""
        nu = C_LIGHT / self.wavelength
        return (
            np.pi * H_PLANCK * nu * self.linewidth / (3.0 * self.wavelength**2)
        )


@dataclass(frozen=True)
class ScatteringModel:
    """Beam parameters plus the per-species two-level laws.

    The second species' Raman detuning follows the first's by `gap` (Hz),
    the shared-beam level-structure offset.
    """

    species: tuple[SpeciesOptics, SpeciesOptics]
    power: float = 70e-3  # W per beam
    radius: float = 25e-6  # 1/e^2 intensity radius, m
    n_beams: int = 2
    gap: float = RAMAN_GAP

    @property
    def intensity(self) -> float:
        return 2.0 * self.power / (np.pi * self.radius**2)

    def detunings(self, delta_1: float) -> tuple[float, float]:
        return delta_1, delta_1 + self.gap


DEFAULT_OPTICS = ScatteringModel(
    species=(
        SpeciesOptics(linewidth=2 * np.pi * 21.6e6, wavelength=397e-9, coupling=0.07),
        SpeciesOptics(linewidth=2 * np.pi * 24.0e6, wavelength=408e-9, coupling=0.07),
    )
)


def rabi_vs_detuning(delta: float, model: ScatteringModel, species: int) -> float:
    """Gate coupling (differential light shift amplitude, rad/s) of one
    species at Raman detuning `delta` (Hz of the first species' reference).

    Two-photon law: proportional to P / (r^2 |Delta_j|), with the species'
    detuning derived from the shared-beam gap.
    """
    d_j = model.detunings(delta)[species]
    if d_j == 0.0:
        raise ValueError("Raman detuning on resonance")
    sp = model.species[species]
    s = model.intensity / sp.i_sat
    omega_single = sp.linewidth * np.sqrt(s / 2.0)
    return sp.coupling * omega_single**2 / (2.0 * abs(2.0 * np.pi * d_j))


def scattering_rate(delta: float, model: ScatteringModel, species: int) -> float:
    """Raman photon-scattering rate (1/s) of one species, 1/Delta^2 law."""
    d_j = model.detunings(delta)[species]
    if d_j == 0.0:
        raise ValueError("Raman detuning on resonance")
    sp = model.species[species]
    s = model.intensity / sp.i_sat
    return model.n_beams * sp.linewidth**3 * s / (16.0 * (2.0 * np.pi * d_j) ** 2)


def scattering_error(delta: float, gate_time: float, model: ScatteringModel,
                     species: int) -> float:
    """Per-gate scattering error of one species, rate times gate time."""
    if gate_time <= 0:
        raise ValueError("gate time must be positive")
    return scattering_rate(delta, model, species) * gate_time


def _budget_ions(delta: float, model: ScatteringModel,
                 ions: tuple[IonSpec, IonSpec]) -> tuple[IonSpec, IonSpec]:
    """Ions with light shifts set by the optics model at this detuning
    (pure differential shifts of opposite sign per spin state)."""
    out = []
    for j, ion in enumerate(ions):
        w = rabi_vs_detuning(delta, model, j)
        out.append(replace(ion, shift_up=w, shift_down=-w))
    return tuple(out)


def _calibrated_detuning(config: GateConfig, ions, mode) -> tuple[float, float]:
    """Gate detuning magnitude at which the configured couplings give
    |psi| = pi/2 with unit amplitude scale, and the resulting drive time."""
    psi_ref = analytic.phase_decomposition(analytic.branch_phases(config, ions, mode)).psi
    if psi_ref == 0.0:
        raise analytic.CalibrationError("zero entangling phase; cannot set a gate time")
    dg = abs(config.delta_g) * np.sqrt(abs(psi_ref) / (np.pi / 2.0))
    t_drive = config.loops * 2.0 * np.pi / dg
    return np.sign(config.delta_g) * dg, t_drive


@dataclass
class BudgetCurve:
    detunings: np.ndarray  # Hz (first species' Raman detuning)
    scatter_1: np.ndarray
    scatter_2: np.ndarray
    heating: np.ndarray
    closure: np.ndarray
    gate_times: np.ndarray  # s
    argmin_detuning: float
    argmin_error: float

    @property
    def total(self) -> np.ndarray:
        return self.scatter_1 + self.scatter_2 + self.heating + self.closure


def _heating_infidelity(config: GateConfig, ions, mode, fock_dim: int) -> float:
    """Master-equation Bell infidelity attributable to heating: the Walsh-2
    sequence is propagated with and without the Lindblad pair and the
    fidelities against the analytic composition are differenced (which also
    cancels the integration bias)."""
    seq = sequence.build_ls_walsh2(config)
    # the interaction-picture master equation is slow at the RWA level, so a
    # coarser step than the coherent default is sufficient for a difference;
    # the relaxed trace tolerance absorbs truncation leakage of the a^dag
    # jump at large loop excursions
    opts = dynamics.PropagationOptions(fock_dim=fock_dim, step=config.loop_time / 200.0,
                                       samples_per_pulse=2, norm_tol=1e-3)
    target = _walsh2_ls_target(config, ions, mode)
    fids = []
    for heat in (False, True):
        out = dynamics.simulate_gate(config, ions, (mode,), seq, level="rwa",
                                     options=opts,
                                     noise=dynamics.NoiseModel(heating=heat))
        fids.append(tomography.state_fidelity(out.final.matrix, target))
    return max(fids[0] - fids[1], 0.0)


def _walsh2_ls_target(config: GateConfig, ions, mode) -> np.ndarray:
    from .hilbert import tensor
    from .sequence import rotation_unitary
    r = tensor(rotation_unitary(np.pi / 2, 0.0), rotation_unitary(np.pi / 2, 0.0))
    e = tensor(rotation_unitary(np.pi, 0.0), rotation_unitary(np.pi, 0.0))
    u1 = analytic.ideal_gate_unitary(config, ions, mode, loops=1)
    psi0 = np.array([0.0, 0.0, 0.0, 1.0], dtype=complex)
    return r @ u1 @ e @ u1 @ r @ psi0


def _closure_error(config: GateConfig, ions, mode, sigma_f: float, nbar: float) -> float:
    """Residual-displacement error for a motional-frequency uncertainty
    sigma_f (Hz): per branch |alpha_res| ~ pi |f| (2 pi sigma_f) / delta_g^2
    for one loop, weighted by the thermal factor."""
    forces = analytic.branch_forces(config, ions, mode)
    eps = 2.0 * np.pi * sigma_f
    err = 0.0
    for bf in forces:
        alpha_res = np.pi * abs(bf.f) * eps / config.delta_g**2
        err += 0.125 * (2.0 * nbar + 1.0) * alpha_res**2
    return err


def total_error_vs_detuning(
    grid: np.ndarray,
    mode: MotionalMode,
    ions: tuple[IonSpec, IonSpec],
    model: ScatteringModel = DEFAULT_OPTICS,
    delta_g_ref: float = 2.0 * np.pi * 40e3,
    loops: int = 2,
    phi_z: float = np.pi,
    n_heating_points: int = 10,
    exact_heating: bool = False,
    fock_dim: int = 10,
    sigma_f: float = 100.0,
    nbar: float = 0.1,
    argmin_tol: float = 10e9,
) -> BudgetCurve:
    """Gate error against the first species' Raman detuning.

    Per grid point the gate detuning (and so the drive time) is solved from
    the amplitude calibration at fixed beam power, then the scattering,
    heating and loop-closure components are evaluated and summed.  Heating
    uses the master equation at `n_heating_points` detunings with monotone
    interpolation unless `exact_heating` forces a per-point evaluation.
    The argmin is refined by golden-section search to `argmin_tol` Hz.
    """
    grid = np.asarray(grid, dtype=float)
    lo, hi = -model.gap, 0.0
    if np.any(grid <= lo) or np.any(grid >= hi):
        raise ValueError(
            f"detuning grid must stay strictly inside ({lo:.3e}, {hi:.3e}) Hz"
        )

    def at(delta: float):
        b_ions = _budget_ions(delta, model, ions)
        cfg = GateConfig(mechanism="ls", mode_label=mode.label, delta_g=delta_g_ref,
                         loops=loops, phi_z=phi_z)
        dg, t_drive = _calibrated_detuning(cfg, b_ions, mode)
        cfg = replace(cfg, delta_g=dg)
        return cfg, b_ions, t_drive

    def smooth_parts(delta: float):
        cfg, b_ions, t_drive = at(delta)
        s1 = scattering_error(delta, t_drive, model, 0)
        s2 = scattering_error(delta, t_drive, model, 1)
        cl = _closure_error(cfg, b_ions, mode, sigma_f, nbar)
        return s1, s2, cl, t_drive

    # master-equation heating infidelity on the evaluation sub-grid
    heat_x = np.linspace(grid[0], grid[-1], n_heating_points) if not exact_heating else grid
    heat_exact = np.empty_like(heat_x)
    heat_tg = np.empty_like(heat_x)
    for i, d in enumerate(heat_x):
        cfg, b_ions, heat_tg[i] = at(d)
        heat_exact[i] = _heating_infidelity(cfg, b_ions, mode, fock_dim)
    rate = mode.heating_rate
    if rate > 0.0:
        # duration-proportional sensitivity, calibrated at the most efficient
        # geometry; the remainder is the loop-area-driven excess
        c_mode = float(np.min(heat_exact / (rate * heat_tg)))
        excess = np.clip(heat_exact - rate * heat_tg * c_mode, 0.0, None)
        excess_interp = PchipInterpolator(heat_x, excess)
    else:
        c_mode = 0.0
        excess_interp = None

    def heating_split(delta: float, t_drive: float) -> tuple[float, float]:
        if rate <= 0.0:
            return 0.0, 0.0
        duration_part = rate * t_drive * c_mode
        extra = float(np.clip(excess_interp(delta), 0.0, None))
        return duration_part, extra

    s1 = np.empty_like(grid)
    s2 = np.empty_like(grid)
    cl = np.empty_like(grid)
    tg = np.empty_like(grid)
    he = np.empty_like(grid)
    for i, d in enumerate(grid):
        s1[i], s2[i], cl[i], tg[i] = smooth_parts(d)
        duration_part, extra = heating_split(d, tg[i])
        he[i] = duration_part
        cl[i] += extra

    def total_at(delta: float) -> float:
        a, b, c, t_drive = smooth_parts(delta)
        duration_part, extra = heating_split(delta, t_drive)
        return a + b + c + duration_part + extra

    total = s1 + s2 + he + cl
    k = int(np.argmin(total))
    lo_b = grid[max(k - 1, 0)]
    hi_b = grid[min(k + 1, len(grid) - 1)]
    d_star, e_star = _golden_section(total_at, lo_b, hi_b, argmin_tol)

    return BudgetCurve(grid, s1, s2, he, cl, tg, d_star, e_star)


def _golden_section(fun, a: float, b: float, tol: float) -> tuple[float, float]:
    """Golden-section minimisation of a unimodal scalar function on [a, b]."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    x = 0.5 * (a + b)
    return x, fun(x)


# ---------------------------------------------------------------------------
# MS calibration diagnostics (gate-length scans and parity-phase curves)


def _asym_config(config: GateConfig, tone_asym: float, species_asym: float) -> GateConfig:
    if not (-0.5 < tone_asym < 0.5 and -0.5 < species_asym < 0.5):
        raise ValueError("asymmetries must lie in (-0.5, 0.5)")
    return replace(
        config,
        tone_scale=(config.tone_scale[0] * (1.0 + tone_asym),
                    config.tone_scale[1] * (1.0 - tone_asym)),
        ion_scale=(config.ion_scale[0] * (1.0 + species_asym),
                   config.ion_scale[1] * (1.0 - species_asym)),
    )


def asymmetry_scan(
    config: GateConfig,
    ions: tuple[IonSpec, IonSpec],
    modes: tuple[MotionalMode, ...],
    tone_asym: float,
    species_asym: float,
    t_grid: np.ndarray,
    level: str = "rwa",
    options: dynamics.PropagationOptions | None = None,
) -> np.ndarray:
    """Populations versus gate-pulse length for a Walsh-2 MS gate with
    bichromatic-tone and/or per-species intensity asymmetry.

    Returns an array of shape (len(t_grid), 4) ordered (p00, p01, p10, p11)
    with 0 the lower and 1 the upper qubit state, i.e. p00 is the initial
    |down down> population.
    """
    cfg = _asym_config(config, tone_asym, species_asym)
    seq = sequence.build_ms_walsh2(cfg)
    out = dynamics.simulate_gate(cfg, ions, modes, seq, level=level, options=options,
                                 record_times=np.asarray(t_grid, dtype=float))
    # internal ordering (uu, ud, du, dd) -> measurement labels (dd, du, ud, uu)
    return out.populations[:, [3, 2, 1, 0]]


def classify_asymmetry(
    traces: np.ndarray,
    config: GateConfig,
    ions: tuple[IonSpec, IonSpec],
    modes: tuple[MotionalMode, ...],
    t_grid: np.ndarray,
    level: str = "rwa",
    options: dynamics.PropagationOptions | None = None,
    max_nfev: int = 40,
) -> tuple[float, float, float]:
    """Invert the forward model: nonlinear least squares for the (tone,
    species) asymmetry pair that reproduces the four population traces.

    Returns (tone_asym, species_asym, residual rms).  Raises
    ClassificationError with the best point found if the fit does not
    converge within the iteration budget.
    """
    traces = np.asarray(traces, dtype=float)

    def resid(x):
        m = asymmetry_scan(config, ions, modes, x[0], x[1], t_grid, level, options)
        return (m - traces).ravel()

    res = least_squares(resid, x0=(0.0, 0.0), bounds=((-0.4, -0.4), (0.4, 0.4)),
                        diff_step=1e-3, max_nfev=max_nfev)
    rms = float(np.sqrt(np.mean(res.fun**2)))
    if not res.success:
        raise ClassificationError(
            f"asymmetry fit did not converge within {max_nfev} evaluations",
            best=(float(res.x[0]), float(res.x[1])), residual=rms,
        )
    return float(res.x[0]), float(res.x[1]), rms


def parity_phase_vs_offset(
    config: GateConfig,
    ions: tuple[IonSpec, IonSpec],
    modes: tuple[MotionalMode, ...],
    offsets: np.ndarray,
    which_qubit: int = 0,
    n_phases: int = 24,
    level: str = "rwa",
    options: dynamics.PropagationOptions | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fitted parity-fringe phase of the MS Walsh-2 Bell state versus a
    qubit-frequency offset (Hz) applied to one qubit.

    The analysis pulses keep fixed local-oscillator phases, so the curve is
    odd in the offset and linear near zero.  Returns (offsets, phi_p,
    contrast)."""
    offsets = np.asarray(offsets, dtype=float)
    seq = sequence.build_ms_walsh2(config)
    t_total = seq.total_duration
    if np.any(np.abs(2.0 * np.pi * offsets) * t_total >= np.pi / 2.0):
        warnings.warn("offset large enough to wrap the parity phase out of its "
                      "principal interval", RuntimeWarning)
    phases = np.linspace(0.0, np.pi, n_phases, endpoint=False)
    phi_p = np.empty_like(offsets)
    contrast = np.empty_like(offsets)
    for i, d0 in enumerate(offsets):
        off = (d0, 0.0) if which_qubit == 0 else (0.0, d0)
        out = dynamics.simulate_gate(config, ions, modes, seq, level=level, options=options,
                                     noise=dynamics.NoiseModel(qubit_offsets=off))
        fit = tomography.fit_parity(tomography.parity_scan(out.final.matrix, phases))
        phi_p[i] = fit.phi_p
        contrast[i] = fit.contrast
    return offsets, phi_p, contrast
