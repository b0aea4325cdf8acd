"""Command-line front end: deterministic scan drivers with CSV/JSON output.

Commands: `simulate`, `scan pulse-length`, `scan parity`, `scan
qubit-offset`, `scan detuning-budget`, `fit parity`, `classify asymmetry`.
All outputs are reproducible byte-for-byte from (config, seed): every CSV
starts with a `#` header block carrying the tool version, config hash and
seed; floats are printed with 17 significant digits; `summary.json` holds
the envelope and the scalar results of the run.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, analytic, budget, dynamics, sequence, tomography
from .budget import DEFAULT_OPTICS, ScatteringModel
from .config import ConfigError, RunConfig, parse_config, resolve

_EPOCH = "1970-01-01T00:00:00Z"


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def envelope(run: RunConfig) -> dict:
    # wall-clock timestamps would break byte-identical reruns, so the stamp
    # is fixed unless the caller provides one via IONGATE_TIMESTAMP
    return {
        "tool_version": __version__,
        "config_hash": run.config_hash,
        "seed": run.seed,
        "timestamp": os.environ.get("IONGATE_TIMESTAMP", _EPOCH),
        "defaults_applied": dict(sorted(run.defaults_applied.items())),
    }


def write_csv(path: Path, run: RunConfig, columns: list[str], rows) -> None:
    lines = [
        f"# iongate {__version__}",
        f"# config_hash = {run.config_hash}",
        f"# seed = {run.seed}",
        ",".join(columns),
    ]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_summary(outdir: Path, run: RunConfig, results: dict) -> None:
    payload = {"envelope": envelope(run), "results": results}
    (outdir / "summary.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_csv(path: Path, expected: list[str]) -> np.ndarray:
    rows = []
    header = None
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = [c.strip() for c in line.split(",")]
            if header != expected:
                raise ConfigError(f"{path}: expected columns {expected}, found {header}")
            continue
        rows.append([float(v) for v in line.split(",")])
    if header is None:
        raise ConfigError(f"{path}: no column header found")
    return np.asarray(rows, dtype=float)


def _build_sequence(run: RunConfig) -> sequence.PulseSequence:
    if run.gate.mechanism == "ls":
        seq = sequence.build_ls_walsh2(run.gate, t_delay=run.t_delay, ramp=run.ramp or None)
    else:
        seq = sequence.build_ms_walsh2(run.gate, t_delay=run.t_delay, ramp=run.ramp or None)
        if run.wrapper:
            seq = sequence.wrap_phase_insensitive(seq, run.gate, run.phi_uw, run.phi_rf)
    return seq


def _analytic_target(run: RunConfig) -> np.ndarray:
    """Final state of the ideal (closed-form) sequence for fidelity reporting."""
    from .hilbert import tensor
    from .sequence import rotation_unitary

    psi = np.array([0.0, 0.0, 0.0, 1.0], dtype=complex)
    mode = run.addressed_mode
    u1 = analytic.ideal_gate_unitary(run.gate, run.ions, mode, loops=1)
    if run.gate.mechanism == "ls":
        r = tensor(rotation_unitary(np.pi / 2, 0.0), rotation_unitary(np.pi / 2, 0.0))
        e = tensor(rotation_unitary(np.pi, 0.0), rotation_unitary(np.pi, 0.0))
        return r @ u1 @ e @ u1 @ r @ psi
    seq = _build_sequence(run)
    u = np.eye(4, dtype=complex)
    loop = 0
    for el in seq.elements:
        if el.kind == "rotation":
            mats = [np.eye(2, dtype=complex)] * 2
            for t in el.targets:
                mats[t] = rotation_unitary(el.theta, el.phi)
            u = tensor(*mats) @ u
        elif el.kind == "gate":
            cfg = run.gate
            if loop == 1:  # second Walsh pulse: basis flipped by pi
                cfg = replace(cfg, phi_s=(cfg.phi_s[0] + np.pi, cfg.phi_s[1] + np.pi))
            u = analytic.ideal_gate_unitary(cfg, run.ions, mode, loops=1) @ u
            loop += 1
    return u @ psi


def _simulate(run: RunConfig, record_times=None) -> dynamics.SimOutcome:
    rng = np.random.default_rng(run.seed)
    return dynamics.simulate_gate(
        run.gate, run.ions, run.modes, _build_sequence(run),
        options=run.options, noise=run.noise, level=run.level,
        record_times=record_times, rng=rng,
    )


def _population_rows(out: dynamics.SimOutcome):
    # internal ordering (uu, ud, du, dd) -> measurement labels p00..p11
    for t, p in zip(out.times, out.populations):
        yield [t * 1e6, p[3], p[2], p[1], p[0]]


def cmd_simulate(run: RunConfig, outdir: Path) -> dict:
    run = resolve(run)
    out = _simulate(run)
    write_csv(outdir / "populations.csv", run,
              ["t_us", "p00", "p01", "p10", "p11"], _population_rows(out))
    target = _analytic_target(run)
    phases = np.linspace(0.0, np.pi, run.scan["parity_points"], endpoint=False)
    fit = tomography.fit_parity(tomography.parity_scan(out.final.matrix, phases))
    ph = analytic.branch_phases(run.gate, run.ions, run.addressed_mode)
    results = {
        "bell_fidelity_vs_ideal": tomography.state_fidelity(out.final.matrix, target),
        "bell_fidelity_tomography": 0.5 * (out.final.matrix[0, 0].real
                                           + out.final.matrix[3, 3].real + fit.contrast),
        "psi": analytic.phase_decomposition(ph).psi,
        "zeta": analytic.gate_efficiency(ph),
        "parity_phi_p": fit.phi_p,
        "parity_contrast": fit.contrast,
    }
    write_summary(outdir, run, results)
    return results


def cmd_scan_pulse_length(run: RunConfig, outdir: Path) -> dict:
    run = resolve(run)
    t_max = run.scan["pulse_t_max"]
    if t_max is None:
        t_max = 1.2 * (2 * run.gate.loop_time + sequence.DEFAULT_LOOP_GAP)
    grid = np.linspace(0.0, t_max, run.scan["pulse_points"])
    traces = budget.asymmetry_scan(
        run.gate, run.ions, run.modes,
        run.scan["tone_asym"], run.scan["species_asym"], grid,
        level=run.level, options=run.options,
    )
    rows = ([t * 1e6] + list(p) for t, p in zip(grid, traces))
    write_csv(outdir / "pulse_length.csv", run,
              ["t_us", "p00", "p01", "p10", "p11"], rows)
    results = {
        "tone_asym": run.scan["tone_asym"],
        "species_asym": run.scan["species_asym"],
        "max_p01_p10_asymmetry": float(np.max(np.abs(traces[:, 1] - traces[:, 2]))),
    }
    write_summary(outdir, run, results)
    return results


def cmd_scan_parity(run: RunConfig, outdir: Path) -> dict:
    run = resolve(run)
    out = _simulate(run)
    phases = np.linspace(0.0, np.pi, run.scan["parity_points"], endpoint=False)
    rng = np.random.default_rng(run.seed + 1)
    scan = tomography.parity_scan(out.final.matrix, phases,
                                  shots=run.scan["parity_shots"], rng=rng)
    write_csv(outdir / "parity.csv", run, ["phi_rad", "parity"],
              zip(scan.phases, scan.parity))
    fit = tomography.fit_parity(scan)
    results = {"p0": fit.p0, "contrast": fit.contrast, "phi_p": fit.phi_p,
               "residual_rms": fit.residual_rms}
    write_summary(outdir, run, results)
    return results


def cmd_scan_qubit_offset(run: RunConfig, outdir: Path, threads: int = 1) -> dict:
    run = resolve(run)
    if run.gate.mechanism != "ms":
        raise ConfigError("scan qubit-offset drives the MS Walsh-2 gate; set mechanism = ms")
    n = run.scan["offset_points"]
    offsets = np.linspace(-run.scan["offset_max"], run.scan["offset_max"], n)

    def point(d0: float):
        _, phi_p, contrast = budget.parity_phase_vs_offset(
            run.gate, run.ions, run.modes, np.array([d0]),
            which_qubit=run.scan["offset_qubit"],
            n_phases=run.scan["parity_points"], level=run.level, options=run.options,
        )
        return phi_p[0], contrast[0]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            vals = list(ex.map(point, offsets))
    else:
        vals = [point(d) for d in offsets]
    phi_p = np.array([v[0] for v in vals])
    contrast = np.array([v[1] for v in vals])
    write_csv(outdir / "qubit_offset.csv", run,
              ["delta0_hz", "phi_p_rad", "contrast"],
              zip(offsets, phi_p, contrast))
    slope = float(np.polyfit(offsets, phi_p, 1)[0])
    results = {"phi_p_slope_rad_per_hz": slope,
               "max_abs_phi_p": float(np.max(np.abs(phi_p)))}
    write_summary(outdir, run, results)
    return results


def _scattering_model(run: RunConfig) -> ScatteringModel:
    return replace(DEFAULT_OPTICS, power=run.scan["power"],
                   radius=run.scan["beam_radius_um"] * 1e-6)


def cmd_scan_detuning_budget(run: RunConfig, outdir: Path) -> dict:
    grid = np.linspace(run.scan["budget_min"], run.scan["budget_max"],
                       run.scan["budget_points"])
    curve = budget.total_error_vs_detuning(
        grid, run.addressed_mode, run.ions, _scattering_model(run),
        delta_g_ref=abs(run.gate.delta_g), loops=run.gate.loops,
        phi_z=run.gate.phi_z, n_heating_points=run.scan["heating_points"],
        fock_dim=run.scan["budget_fock_dim"],
    )
    rows = (
        [d / 1e12, s1, s2, h, c, t]
        for d, s1, s2, h, c, t in zip(curve.detunings, curve.scatter_1,
                                      curve.scatter_2, curve.heating,
                                      curve.closure, curve.total)
    )
    write_csv(outdir / "detuning_budget.csv", run,
              ["delta_ca_thz", "eps_scatter_ca", "eps_scatter_sr",
               "eps_heating", "eps_closure", "eps_total"], rows)
    results = {"argmin_delta_ca_thz": curve.argmin_detuning / 1e12,
               "argmin_total_error": curve.argmin_error}
    write_summary(outdir, run, results)
    return results


def cmd_fit_parity(run: RunConfig, outdir: Path, input_csv: Path) -> dict:
    data = read_csv(input_csv, ["phi_rad", "parity"])
    fit = tomography.fit_parity(tomography.ParityScan(data[:, 0], data[:, 1]))
    results = {"p0": fit.p0, "contrast": fit.contrast, "phi_p": fit.phi_p,
               "residual_rms": fit.residual_rms}
    write_summary(outdir, run, results)
    return results


def cmd_classify_asymmetry(run: RunConfig, outdir: Path, input_csv: Path) -> dict:
    run = resolve(run)
    data = read_csv(input_csv, ["t_us", "p00", "p01", "p10", "p11"])
    tone, species, resid = budget.classify_asymmetry(
        data[:, 1:], run.gate, run.ions, run.modes, data[:, 0] * 1e-6,
        level=run.level, options=run.options,
    )
    results = {"tone_asym": tone, "species_asym": species, "residual_rms": resid}
    write_summary(outdir, run, results)
    return results


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iongate",
                                description="mixed-species entangling-gate simulator")
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--fock-dim", type=int, default=None, help="override the Fock truncation")
    p.add_argument("--level", choices=("rwa", "full"), default=None,
                   help="override the Hamiltonian level")
    p.add_argument("--threads", type=int, default=1, help="worker threads for scan points")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate")
    scan = sub.add_parser("scan")
    scan.add_argument("what", choices=("pulse-length", "parity", "qubit-offset",
                                       "detuning-budget"))
    fit = sub.add_parser("fit")
    fit.add_argument("what", choices=("parity",))
    fit.add_argument("input", help="parity scan CSV")
    cls = sub.add_parser("classify")
    cls.add_argument("what", choices=("asymmetry",))
    cls.add_argument("input", help="pulse-length scan CSV")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = parse_config(args.config)
        if args.seed is not None:
            run = replace(run, seed=args.seed)
        if args.fock_dim is not None:
            run = replace(run, options=replace(run.options, fock_dim=args.fock_dim))
        if args.level is not None:
            run = replace(run, level=args.level)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            cmd_simulate(run, outdir)
        elif args.command == "scan":
            dispatch = {
                "pulse-length": cmd_scan_pulse_length,
                "parity": cmd_scan_parity,
                "detuning-budget": cmd_scan_detuning_budget,
            }
            if args.what == "qubit-offset":
                cmd_scan_qubit_offset(run, outdir, threads=args.threads)
            else:
                dispatch[args.what](run, outdir)
        elif args.command == "fit":
            cmd_fit_parity(run, outdir, Path(args.input))
        elif args.command == "classify":
            cmd_classify_asymmetry(run, outdir, Path(args.input))
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
