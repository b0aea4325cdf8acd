import numpy as np
import pytest

from iongate import analytic, model


@pytest.fixture(scope="session")
def crystal_modes():
    """Ca-43 / Sr-88 axial modes pinned to the 1.49 MHz in-phase frequency."""
    return model.ca_sr_modes(f_ip=1.49e6, heating=(93.0, 27.0))


@pytest.fixture(scope="session")
def ls_ions():
    w = 2 * np.pi * 150e3
    return (
        model.IonSpec(model.MASS_CA43, model.CA_STRETCH, shift_up=w, shift_down=-w),
        model.IonSpec(model.MASS_SR88, model.SR_ZEEMAN, shift_up=w, shift_down=-w),
    )


@pytest.fixture(scope="session")
def ls_config(crystal_modes, ls_ions):
    """Calibrated two-loop LS gate on the out-of-phase mode (half-integer
    spacing, delta_g = -2 pi 40 kHz)."""
    _, oop = crystal_modes
    cfg = model.GateConfig(mechanism="ls", mode_label="oop",
                           delta_g=-2 * np.pi * 40e3, loops=2, phi_z=np.pi)
    return cfg.scaled(analytic.calibrate_amplitude(cfg, ls_ions, oop))


@pytest.fixture(scope="session")
def ms_ions(crystal_modes):
    ip, _ = crystal_modes
    w_ca = 2 * np.pi * 200e3
    w_sr = w_ca * ip.eta[0] / ip.eta[1]  # matched sideband Rabi rates
    return (
        model.IonSpec(model.MASS_CA43, model.CA_STRETCH, rabi=w_ca),
        model.IonSpec(model.MASS_SR88, model.SR_ZEEMAN, rabi=w_sr),
    )


@pytest.fixture(scope="session")
def ms_config(crystal_modes, ms_ions):
    """Calibrated two-loop MS gate on the in-phase mode (delta_g = +2 pi 40 kHz)."""
    ip, _ = crystal_modes
    cfg = model.GateConfig(mechanism="ms", mode_label="ip",
                           delta_g=2 * np.pi * 40e3, loops=2)
    return cfg.scaled(analytic.calibrate_amplitude(cfg, ms_ions, ip))
