import numpy as np
import pytest

from iongate import model
from iongate.model import (
    CA_CLOCK,
    CA_STRETCH,
    GateConfig,
    MASS_CA43,
    MASS_SR88,
    SR_ZEEMAN,
    axial_normal_modes,
    lamb_dicke,
    qubit_offset_from_field,
    raman_delta_k,
    standing_wave_phase,
    two_ion_modes,
    with_lamb_dicke,
)


def mass_weighted_dot(v1, v2):
    return v1[0] * v2[0] + v1[1] * v2[1]  # vectors already mass-weighted


class TestNormalModes:
    def test_equal_mass_limit(self):
        ip, oop = axial_normal_modes(40.0, 40.0, 1.0e6)
        assert ip.frequency == pytest.approx(1.0e6, rel=1e-12)
        assert oop.frequency == pytest.approx(np.sqrt(3) * 1.0e6, rel=1e-12)
        assert np.allclose(ip.vector, (1 / np.sqrt(2), 1 / np.sqrt(2)), atol=1e-12)
        assert np.allclose(oop.vector, (1 / np.sqrt(2), -1 / np.sqrt(2)), atol=1e-12)

    def test_ca_sr_frequencies(self):
        ip, oop = two_ion_modes(43.0, 88.0, 1.49e6)
        assert ip.frequency == pytest.approx(1.49e6, rel=1e-12)
        assert oop.frequency == pytest.approx(2.91e6, rel=0.05)

    def test_mode_vectors_match_eigensolver(self):
        # oracle: eigensolver on the independently built 2x2 stiffness matrix
        m1, m2 = 43.0, 88.0
        k = 1.0  # the common stiffness scales out of the vectors
        dyn = np.array([
            [2 * k / m1, -k / np.sqrt(m1 * m2)],
            [-k / np.sqrt(m1 * m2), 2 * k / m2],
        ])
        _, vecs = np.linalg.eigh(dyn)
        ip, oop = axial_normal_modes(m1, m2, 1.0e6)
        for mode, col in ((ip, 0), (oop, 1)):
            v = vecs[:, col]
            if v[0] < 0:
                v = -v
            assert np.allclose(mode.vector, v, atol=1e-12)

    def test_mass_weighted_orthonormality_random(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            ratio = 10.0 ** rng.uniform(-1, 1)
            ip, oop = axial_normal_modes(40.0, 40.0 * ratio, 1.2e6)
            assert abs(mass_weighted_dot(ip.vector, ip.vector) - 1) < 1e-12
            assert abs(mass_weighted_dot(oop.vector, oop.vector) - 1) < 1e-12
            assert abs(mass_weighted_dot(ip.vector, oop.vector)) < 1e-12
            assert ip.frequency < oop.frequency
            assert ip.vector[0] > 0 and oop.vector[0] > 0

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            axial_normal_modes(-1.0, 40.0, 1e6)
        with pytest.raises(ValueError):
            axial_normal_modes(40.0, 40.0, 0.0)


class TestLambDicke:
    def test_table_values_ip(self):
        ip, _ = two_ion_modes(MASS_CA43, MASS_SR88, 1.49e6)
        eta = lamb_dicke(ip, (MASS_CA43, MASS_SR88), raman_delta_k())
        assert eta[0] == pytest.approx(0.090, rel=0.05)
        assert eta[1] == pytest.approx(0.124, rel=0.05)

    def test_table_values_oop(self):
        _, oop = two_ion_modes(MASS_CA43, MASS_SR88, 1.49e6)
        eta = lamb_dicke(oop, (MASS_CA43, MASS_SR88), raman_delta_k())
        assert eta[0] == pytest.approx(0.127, rel=0.05)
        assert eta[1] == pytest.approx(-0.045, rel=0.05)
        assert eta[1] < 0  # sign follows the mode vector

    def test_scaling_laws(self):
        ip, _ = two_ion_modes(43.0, 88.0, 1.0e6)
        masses = (43.0, 88.0)
        dk = raman_delta_k()
        base = np.array(lamb_dicke(ip, masses, dk))
        assert np.allclose(lamb_dicke(ip, masses, 2 * dk), 2 * base, rtol=1e-12)
        # doubling the frequency at fixed vector reduces eta by sqrt(2)
        from dataclasses import replace
        ip2 = replace(ip, frequency=2 * ip.frequency)
        assert np.allclose(lamb_dicke(ip2, masses, dk), base / np.sqrt(2), rtol=1e-12)
        # m -> 4 m at fixed vector halves eta
        assert np.allclose(lamb_dicke(ip, (4 * 43.0, 4 * 88.0), dk), base / 2, rtol=1e-12)

    def test_unnormalized_vector_rejected(self):
        from dataclasses import replace
        ip, _ = two_ion_modes(43.0, 88.0, 1.0e6)
        bad = replace(ip, vector=(1.0, 1.0))
        with pytest.raises(ValueError):
            lamb_dicke(bad, (43.0, 88.0), raman_delta_k())


class TestFieldOffsets:
    def test_zeeman_offset(self):
        assert qubit_offset_from_field(SR_ZEEMAN, 0.4e-3) == pytest.approx(1.12e3, rel=1e-9)

    def test_clock_insensitive(self):
        assert qubit_offset_from_field(CA_CLOCK, 5.0) == 0.0

    def test_sum_sensitivity(self):
        db = 1.0e-3
        total = qubit_offset_from_field(CA_STRETCH, db) + qubit_offset_from_field(SR_ZEEMAN, db)
        assert total == pytest.approx(0.44e6 * db, rel=1e-9)

    def test_exactly_linear(self):
        rng = np.random.default_rng(3)
        for db in rng.uniform(-1, 1, 20):
            assert qubit_offset_from_field(SR_ZEEMAN, 2 * db) == pytest.approx(
                2 * qubit_offset_from_field(SR_ZEEMAN, db), abs=1e-12)


class TestStandingWavePhase:
    def test_half_integer_spacing(self):
        dk = raman_delta_k()
        lam_eff = 2 * np.pi / dk
        assert standing_wave_phase(12.5 * lam_eff, dk) == pytest.approx(np.pi, abs=1e-9)
        # the quoted 3.57 um spacing is a rounded half-integer multiple of
        # lambda_eff = 402 nm / sqrt(2) = 284 nm (12.5 x 284 nm = 3.553 um)
        assert 3.57e-6 / lam_eff == pytest.approx(12.5, rel=0.005)

    def test_full_wavelength(self):
        dk = raman_delta_k()
        lam_eff = 2 * np.pi / dk
        assert standing_wave_phase(lam_eff, dk) == pytest.approx(0.0, abs=1e-9)
        assert standing_wave_phase(lam_eff / 4, dk) == pytest.approx(np.pi / 2, abs=1e-9)

    def test_invalid_spacing(self):
        with pytest.raises(ValueError):
            standing_wave_phase(0.0, raman_delta_k())


class TestGateConfig:
    def test_resonant_rejected(self):
        with pytest.raises(ValueError):
            GateConfig(mechanism="ls", delta_g=0.0)

    def test_bad_loops_and_scales(self):
        with pytest.raises(ValueError):
            GateConfig(mechanism="ms", loops=0)
        with pytest.raises(ValueError):
            GateConfig(mechanism="ms", ion_scale=(1.0, 0.0))

    def test_loop_time(self):
        cfg = GateConfig(mechanism="ls", delta_g=-2 * np.pi * 40e3)
        assert cfg.loop_time == pytest.approx(25e-6, rel=1e-12)

    def test_delta_k_default_geometry(self):
        # two beams at 90 degrees: |dk| = sqrt(2) k
        assert raman_delta_k() == pytest.approx(np.sqrt(2) * 2 * np.pi / 402e-9, rel=1e-12)
        assert raman_delta_k(angle_deg=180.0) == pytest.approx(2 * 2 * np.pi / 402e-9, rel=1e-12)


def test_with_lamb_dicke_attaches_eta():
    ip, _ = two_ion_modes(43.0, 88.0, 1.49e6)
    mode = with_lamb_dicke(ip, (43.0, 88.0), raman_delta_k(), heating_rate=93.0)
    assert mode.eta is not None
    assert mode.heating_rate == 93.0


def test_idealized_vectors_option():
    ip, oop = two_ion_modes(43.0, 88.0, 1.49e6, idealized=True)
    assert np.allclose(ip.vector, (1 / np.sqrt(2), 1 / np.sqrt(2)))
    assert np.allclose(oop.vector, (1 / np.sqrt(2), -1 / np.sqrt(2)))
    # frequencies keep the true mixed-species values
    assert oop.frequency / ip.frequency == pytest.approx(1.9449, rel=1e-3)
