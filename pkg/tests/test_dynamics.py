import numpy as np
import pytest
from dataclasses import replace

from iongate import analytic, dynamics, model, sequence, tomography
from iongate.dynamics import (
    NoiseModel,
    PropagationOptions,
    StepSizeError,
    TimeDependentHamiltonian,
    build_ls_hamiltonian,
    build_ms_hamiltonian,
    heating_jumps,
    ls_quadrature_phases,
    propagate,
    pulse_envelope,
    simulate_gate,
)
from iongate.hilbert import SIGMA_X, ladder_operators, ket, qubit_operator, tensor
from iongate.model import GateConfig, IonSpec
from iongate.sequence import SequenceElement, rotation_unitary


def _gate_element(duration, **kw):
    return SequenceElement(kind="gate", start=0.0, duration=duration, **kw)


class TestPulseEnvelope:
    def test_rectangular(self):
        el = _gate_element(10e-6)
        t = np.linspace(-1e-6, 11e-6, 100)
        env = pulse_envelope(t, el, 0.0)
        inside = (t >= 0) & (t <= 10e-6)
        assert np.all(env[inside] == 1.0)
        assert np.all(env[~inside] == 0.0)

    def test_flat_top_and_continuity(self):
        el = _gate_element(10e-6)
        assert pulse_envelope(5e-6, el, 2e-6) == 1.0
        assert pulse_envelope(0.0, el, 2e-6) == pytest.approx(0.0, abs=1e-12)
        assert pulse_envelope(1e-6, el, 2e-6) == pytest.approx(0.5, abs=1e-12)
        t = np.linspace(0, 10e-6, 2001)
        env = pulse_envelope(t, el, 2e-6)
        assert np.max(np.abs(np.diff(env))) < 0.01  # no jumps

    def test_ramp_too_long(self):
        with pytest.raises(ValueError):
            pulse_envelope(0.0, _gate_element(10e-6), 6e-6)


class TestPropagate:
    def test_zero_hamiltonian(self):
        psi0 = ket(1, 1, 0, fock_dim=4)
        h = TimeDependentHamiltonian((2, 2, 4), [], (0.0, 1e-5))
        res = propagate(h, psi0, np.array([1e-5]), PropagationOptions(step=1e-7))
        assert np.allclose(res.states[-1], psi0, atol=1e-14)

    def test_rabi_oscillation(self):
        # oracle: closed-form p_upper(t) = sin^2(Omega t / 2) from |down>
        omega = 2 * np.pi * 50e3
        op = 0.5 * omega * qubit_operator(SIGMA_X, 0, (2,))
        h = TimeDependentHamiltonian((2, 2, 2), [(op, lambda t: 1.0)], (0.0, 4e-5))
        psi0 = ket(1, 1, 0, fock_dim=2)
        times = np.linspace(0, 4e-5, 9)
        res = propagate(h, psi0, times, PropagationOptions(step=2e-8))
        for t, psi in zip(times, res.states):
            rho2, _ = __import__("iongate.hilbert", fromlist=["partial_trace"]).partial_trace(
                np.outer(psi, psi.conj()), (2, 2, 2), (0, 1))
            p_up = rho2[0, 0].real + rho2[1, 1].real
            assert p_up == pytest.approx(np.sin(omega * t / 2) ** 2, abs=1e-6)

    def test_pure_heating(self):
        # oracle: <n>(t) = rate * t for the infinite-temperature pair
        rate = 93.0
        dims = (2, 2, 15)
        jumps = heating_jumps((rate,), dims)
        h = TimeDependentHamiltonian(dims, [], (0.0, 1e-3))
        rho0 = np.outer(ket(1, 1, 0, fock_dim=15), ket(1, 1, 0, fock_dim=15).conj())
        res = propagate(h, rho0, np.array([0.5e-3, 1e-3]), PropagationOptions(step=2e-6),
                        jump_ops=jumps)
        a, ad = ladder_operators(15)
        n_op = qubit_operator(np.eye(2), 0, (15,)) * 0  # placeholder
        from iongate.hilbert import mode_operator
        n_op = mode_operator(ad @ a, 0, (15,))
        for t, rho in zip([0.5e-3, 1e-3], res.states):
            nbar = np.real(np.trace(n_op @ rho))
            assert nbar == pytest.approx(rate * t, rel=0.01)
            assert abs(np.trace(rho).real - 1.0) < 1e-8

    def test_step_size_error(self):
        omega = 2 * np.pi * 1e6
        op = 0.5 * omega * qubit_operator(SIGMA_X, 0, ())
        h = TimeDependentHamiltonian((2, 2), [(op, lambda t: 1.0)], (0.0, 1e-4))
        with pytest.raises(StepSizeError):
            propagate(h, ket(1, 1), np.array([1e-4]), PropagationOptions(step=4e-7))


class TestBuildMS:
    def test_hermiticity_random_times(self, crystal_modes, ms_ions, ms_config):
        ip, _ = crystal_modes
        rng = np.random.default_rng(2)
        for level in ("rwa", "full"):
            h = build_ms_hamiltonian(ms_config, ms_ions, ip, level, fock_dim=5)
            assert h.hermiticity_defect(rng.uniform(0, 50e-6, 1000)) < 1e-10

    def test_branch_projection_matches_forces(self, crystal_modes, ms_ions, ms_config):
        # project H(t) onto each gate-basis branch and compare the
        # coefficient of a e^(i dg t) with the closed-form branch force
        ip, _ = crystal_modes
        nf = 6
        h = build_ms_hamiltonian(ms_config, ms_ions, ip, "rwa", fock_dim=nf)
        forces = {bf.branch: bf.f for bf in analytic.branch_forces(ms_config, ms_ions, ip)}
        basis = analytic._ms_basis(ms_config.phi_s[0]), analytic._ms_basis(ms_config.phi_s[1])
        a, _ = ladder_operators(nf)
        dg = ms_config.delta_g
        for i, (z1, z2) in enumerate(analytic.BRANCHES):
            v1 = basis[0][:, 0 if z1 > 0 else 1]
            v2 = basis[1][:, 0 if z2 > 0 else 1]
            spin = np.kron(v1, v2)
            for t in (0.0, 3.7e-6, 11.1e-6):
                hm = h(t).reshape(4, nf, 4, nf)
                block = np.einsum("s,smtn,t->mn", spin.conj(), hm, spin)
                # coefficient of a: overlap with the lowering operator
                coeff = np.sum(block * a.conj()) / np.sum(np.abs(a) ** 2)
                expect = 0.5 * forces[(z1, z2)] * np.exp(1j * dg * t)
                assert coeff == pytest.approx(expect, abs=abs(dg) * 1e-12 + 1e-9)

    def test_eta_zero_pure_carrier(self, ms_ions, ms_config):
        ip = model.MotionalMode("ip", 1.49e6, (0.7, 0.7), eta=(0.0, 0.0))
        h = build_ms_hamiltonian(ms_config, ms_ions, ip, "full", fock_dim=4)
        from iongate.hilbert import mode_operator
        a, ad = ladder_operators(4)
        n_op = mode_operator(ad @ a, 0, (4,))
        for t in (0.0, 1e-6, 5e-6):
            assert np.max(np.abs(h(t) @ n_op - n_op @ h(t))) < 1e-9  # no spin-motion coupling


class TestBuildLS:
    def test_hermiticity(self, crystal_modes, ls_ions, ls_config):
        rng = np.random.default_rng(3)
        for level in ("rwa", "full"):
            h = build_ls_hamiltonian(ls_config, ls_ions, crystal_modes, level, fock_dim=4)
            assert h.hermiticity_defect(rng.uniform(0, 50e-6, 1000)) < 1e-10

    def test_branch_structure_matches_forces(self, crystal_modes, ls_ions, ls_config):
        _, oop = crystal_modes
        nf = 5
        h = build_ls_hamiltonian(ls_config, ls_ions, (oop,), "rwa", fock_dim=nf)
        forces = [bf.f for bf in analytic.branch_forces(ls_config, ls_ions, oop)]
        a, _ = ladder_operators(nf)
        dg = ls_config.delta_g
        for t in (0.0, 4.2e-6):
            hm = h(t).reshape(4, nf, 4, nf)
            for b in range(4):
                block = hm[b, :, b, :]
                coeff = np.sum(block * a.conj()) / np.sum(np.abs(a) ** 2)
                expect = 0.5j * forces[b] * np.exp(1j * (dg * t + ls_config.phi0))
                assert coeff == pytest.approx(expect, abs=abs(dg) * 1e-12 + 1e-9)

    def test_clock_like_cancellation(self, crystal_modes):
        # equal shifts on both spin states: no spin-dependent force
        _, oop = crystal_modes
        w = 2 * np.pi * 100e3
        ions = (IonSpec(43.0, model.CA_STRETCH, shift_up=w, shift_down=w),
                IonSpec(88.0, model.SR_ZEEMAN, shift_up=w, shift_down=w))
        cfg = GateConfig(mechanism="ls", mode_label="oop", delta_g=-2 * np.pi * 40e3,
                         phi_z=np.pi)
        forces = [bf.f for bf in analytic.branch_forces(cfg, ions, oop)]
        assert np.ptp(np.abs(forces)) < 1e-12  # all branches identical
        psi = analytic.phase_decomposition(
            np.array([analytic.loop_phase(f, cfg.delta_g) for f in forces])).psi
        assert abs(psi) < 1e-12

    def test_phi_z_pi_flips_second_ion(self, crystal_modes, ls_ions):
        _, oop = crystal_modes
        cfg0 = GateConfig(mechanism="ls", mode_label="oop", delta_g=-2 * np.pi * 40e3,
                          phi_z=0.0)
        cfg1 = replace(cfg0, phi_z=np.pi)
        f0 = np.array([bf.f for bf in analytic.branch_forces(cfg0, ls_ions, oop)])
        f1 = np.array([bf.f for bf in analytic.branch_forces(cfg1, ls_ions, oop)])
        eta = oop.eta
        ion2 = np.array([eta[1] * ls_ions[1].light_shift(s2) for _, s2 in analytic.BRANCHES])
        assert np.allclose(f1, f0 - 2 * ion2, atol=1e-9)

    def test_quadrature_oracle_matches_closed_form(self, crystal_modes, ls_ions, ls_config):
        _, oop = crystal_modes
        el = _gate_element(ls_config.loop_time)
        phases, resid = ls_quadrature_phases(ls_config, ls_ions, (oop,), el, 0.0, "rwa")
        assert np.allclose(phases, analytic.branch_phases(ls_config, ls_ions, oop, loops=1),
                           atol=2e-6)
        assert np.max(resid) < 1e-12


class TestSimulateGate:
    def test_ls_walsh_bell_vs_analytic_oracle(self, crystal_modes, ls_ions, ls_config):
        _, oop = crystal_modes
        r = tensor(rotation_unitary(np.pi / 2, 0), rotation_unitary(np.pi / 2, 0))
        e = tensor(rotation_unitary(np.pi, 0), rotation_unitary(np.pi, 0))
        u1 = analytic.ideal_gate_unitary(ls_config, ls_ions, oop, loops=1)
        bell = r @ u1 @ e @ u1 @ r @ np.array([0, 0, 0, 1], dtype=complex)
        out = simulate_gate(ls_config, ls_ions, crystal_modes,
                            sequence.build_ls_walsh2(ls_config), level="rwa")
        assert tomography.state_fidelity(out.final.matrix, bell) > 0.9999
        out.final.validate()

    def test_ms_walsh_symmetric_dynamics(self, crystal_modes, ms_ions, ms_config):
        out = simulate_gate(ms_config, ms_ions, crystal_modes,
                            sequence.build_ms_walsh2(ms_config), level="rwa")
        assert np.max(np.abs(out.populations[:, 1] - out.populations[:, 2])) < 1e-10
        assert np.max(np.abs(out.populations.sum(axis=1) - 1.0)) < 1e-8

    def test_zero_duration_sequence(self, crystal_modes, ms_ions, ms_config):
        seq = sequence.PulseSequence((sequence.delay(0.0, 0.0),))
        out = simulate_gate(ms_config, ms_ions, crystal_modes, seq)
        assert out.populations[-1] == pytest.approx([0, 0, 0, 1.0], abs=1e-14)

    def test_fock_truncation_convergence(self, crystal_modes, ls_ions, ls_config):
        _, oop = crystal_modes
        seq = sequence.build_ls_walsh2(ls_config)
        outs = [simulate_gate(ls_config, ls_ions, crystal_modes, seq, level="rwa",
                              options=PropagationOptions(fock_dim=nf, samples_per_pulse=2))
                for nf in (15, 30)]
        dpop = np.max(np.abs(outs[0].populations[-1] - outs[1].populations[-1]))
        assert dpop < 1e-8

    def test_step_halving_convergence(self, crystal_modes, ls_ions, ls_config):
        _, oop = crystal_modes
        seq = sequence.build_ls_walsh2(ls_config)
        step = ls_config.loop_time / 800.0
        rhos = [simulate_gate(ls_config, ls_ions, crystal_modes, seq, level="rwa",
                              options=PropagationOptions(step=s, samples_per_pulse=2)).final.matrix
                for s in (step, step / 2)]
        r = tensor(rotation_unitary(np.pi / 2, 0), rotation_unitary(np.pi / 2, 0))
        e = tensor(rotation_unitary(np.pi, 0), rotation_unitary(np.pi, 0))
        u1 = analytic.ideal_gate_unitary(ls_config, ls_ions, crystal_modes[1], loops=1)
        bell = r @ u1 @ e @ u1 @ r @ np.array([0, 0, 0, 1], dtype=complex)
        f = [tomography.state_fidelity(m, bell) for m in rhos]
        assert abs(f[0] - f[1]) < 1e-8

    def test_phi0_randomization_leaves_ls_gate_unchanged(self, crystal_modes, ls_ions, ls_config):
        seq = sequence.build_ls_walsh2(ls_config)
        det = simulate_gate(ls_config, ls_ions, crystal_modes, seq, level="rwa",
                            options=PropagationOptions(samples_per_pulse=2))
        rng = np.random.default_rng(77)
        avg = simulate_gate(ls_config, ls_ions, crystal_modes, seq, level="rwa",
                            options=PropagationOptions(samples_per_pulse=2),
                            noise=NoiseModel(randomize_phi0=True, shots=6), rng=rng)
        assert np.max(np.abs(det.final.matrix - avg.final.matrix)) < 1e-9

    def test_heating_preserves_trace_and_hermiticity(self, crystal_modes, ls_ions, ls_config):
        seq = sequence.build_ls_walsh2(ls_config)
        out = simulate_gate(ls_config, ls_ions, crystal_modes, seq, level="rwa",
                            options=PropagationOptions(fock_dim=12, samples_per_pulse=8,
                                                       step=ls_config.loop_time / 200),
                            noise=NoiseModel(heating=True))
        assert np.max(np.abs(out.populations.sum(axis=1) - 1.0)) < 1e-8
        out.final.validate()
        full = out.final_full
        assert np.max(np.abs(full - full.conj().T)) < 1e-8

    def test_finite_duration_rotation(self, crystal_modes, ms_ions, ms_config):
        # a finite-length carrier pulse approaches the instantaneous unitary
        seq = sequence.PulseSequence((
            sequence.rotation(np.pi, 0.0, (0,), "uwrf", start=0.0, duration=2e-6),
        ))
        out = simulate_gate(ms_config, ms_ions, crystal_modes, seq,
                            options=PropagationOptions(step=5e-9))
        assert out.populations[-1][2] == pytest.approx(1.0, abs=1e-9)  # |down up ... >


class TestLevelConvergence:
    def test_full_vs_rwa_small_lamb_dicke(self, crystal_modes):
        # 0.2x Lamb-Dicke factors with proportionally larger mode
        # frequencies: the full-level propagation converges to the RWA one
        ip, oop = crystal_modes
        for mech in ("ms", "ls"):
            if mech == "ms":
                mode = replace(ip, frequency=5 * ip.frequency,
                               eta=(0.2 * ip.eta[0], 0.2 * ip.eta[1]))
                w = 2 * np.pi * 200e3
                ions = (IonSpec(43.0, model.CA_STRETCH, rabi=w),
                        IonSpec(88.0, model.SR_ZEEMAN, rabi=w * mode.eta[0] / mode.eta[1]))
                cfg = GateConfig(mechanism="ms", mode_label="ip", delta_g=2 * np.pi * 40e3,
                                 loops=2)
                modes = (mode, replace(oop, frequency=5 * oop.frequency))
                cfg = cfg.scaled(analytic.calibrate_amplitude(cfg, ions, mode))
                seq = sequence.build_ms_walsh2(cfg)
            else:
                mode = replace(oop, frequency=5 * oop.frequency,
                               eta=(0.2 * oop.eta[0], 0.2 * oop.eta[1]))
                w = 2 * np.pi * 150e3
                ions = (IonSpec(43.0, model.CA_STRETCH, shift_up=w, shift_down=-w),
                        IonSpec(88.0, model.SR_ZEEMAN, shift_up=w, shift_down=-w))
                cfg = GateConfig(mechanism="ls", mode_label="oop", delta_g=-2 * np.pi * 40e3,
                                 loops=2, phi_z=np.pi)
                modes = (replace(ip, frequency=5 * ip.frequency,
                                 eta=(0.2 * ip.eta[0], 0.2 * ip.eta[1])), mode)
                cfg = cfg.scaled(analytic.calibrate_amplitude(cfg, ions, mode))
                seq = sequence.build_ls_walsh2(cfg)
            opts = PropagationOptions(fock_dim=8, samples_per_pulse=2)
            finals = [simulate_gate(cfg, ions, modes, seq, level=lv, options=opts).final.matrix
                      for lv in ("rwa", "full")]
            vals, vecs = np.linalg.eigh(finals[0])
            top = vecs[:, -1]
            fid = np.real(top.conj() @ finals[1] @ top)
            assert fid >= 0.9999, f"{mech}: full-vs-rwa fidelity {fid}"
