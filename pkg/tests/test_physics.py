import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spsbench.constants import GHz_to_ueV, linewidth_to_sigma, sigma_to_linewidth, ueV_to_GHz
from spsbench.exceptions import DomainError
from spsbench.physics import (CavityModel, EmitterConfig, bose_einstein, calibrate_linewidth, cavity_mode_wavelength,
                              correct_visibility, dephasing_coherence_time, fourier_limited_t2, fourier_linewidth,
                              phonon_dephasing_rate, purcell_lifetime, purcell_vs_detuning, thermal_factor,
                              visibility_inhomogeneous, visibility_temperature)

# mpmath (30 digits), computed independently of the package
GAMMA_ANCHOR = 4.08445602891287137
V45_ANCHOR = 0.639689425608753476
GAMMA_54 = 5.11867674851464521
GAMMA_STAR_30K = 19.8016209077245987
V_FP25 = {30.0: 0.695388565535317218, 40.0: 0.637538540441674729}


def test_purcell_lifetime_examples():
    assert purcell_lifetime(680.0, 25.0) == pytest.approx(27.2)
    assert purcell_lifetime(680.0, 1.0) == 680.0
    assert purcell_lifetime(680.0, 25.28) == pytest.approx(26.8987341772151899, rel=1e-12)
    assert purcell_lifetime(680.0, 12.6) == pytest.approx(53.9682539682539683, rel=1e-12)
    with pytest.raises(DomainError):
        purcell_lifetime(680.0, 0.0)
    with pytest.warns(UserWarning):
        purcell_lifetime(680.0, 0.5)


def test_fourier_linewidth_examples():
    assert fourier_linewidth(26.9) == pytest.approx(24.4688459814, rel=1e-10)
    assert fourier_linewidth(680.0) == pytest.approx(0.967958760147, rel=1e-10)
    assert fourier_linewidth(658.2119569) == pytest.approx(1.0, rel=1e-12)


def test_fourier_limit_conventions():
    assert fourier_limited_t2(50.0) == 100.0
    assert fourier_limited_t2(50.0, "half") == 25.0
    with pytest.raises(ValueError):
        fourier_limited_t2(50.0, "other")


def test_bose_einstein():
    assert bose_einstein(1.0, 0.0) == 0.0
    assert bose_einstein(1.0, 30.0) == pytest.approx(2.11735368312631112, rel=1e-12)
    t = np.array([0.0, 4.0, 45.0])
    assert bose_einstein(1.0, t).shape == (3,)
    with pytest.raises(DomainError):
        bose_einstein(0.0, 4.0)


def test_phonon_dephasing_reference():
    cfg = EmitterConfig(temperature=30.0)
    assert phonon_dephasing_rate(cfg) == pytest.approx(GAMMA_STAR_30K, rel=1e-6)
    assert phonon_dephasing_rate(cfg, 0.0) == 0.0


@given(st.floats(0.0, 300.0), st.floats(0.0, 300.0))
def test_dephasing_monotone_in_temperature(t_a, t_b):
    cfg = EmitterConfig()
    lo, hi = sorted((t_a, t_b))
    assert phonon_dephasing_rate(cfg, lo) <= phonon_dephasing_rate(cfg, hi) + 1e-12


def test_visibility_limits():
    assert visibility_inhomogeneous(50.0, 0.0) == 1.0
    assert visibility_inhomogeneous(1e9, 5.0) < 1e-3
    with pytest.raises(DomainError):
        visibility_inhomogeneous(0.0, 1.0)
    with pytest.raises(DomainError):
        visibility_inhomogeneous(10.0, -1.0)


@settings(max_examples=200)
@given(st.floats(1.0, 5000.0), st.floats(1.0, 5000.0), st.floats(0.01, 20.0))
def test_visibility_monotone_in_t1(t1a, t1b, gamma):
    lo, hi = sorted((t1a, t1b))
    v_lo, v_hi = visibility_inhomogeneous(lo, gamma), visibility_inhomogeneous(hi, gamma)
    assert 0.0 <= v_hi <= v_lo + 1e-12 <= 1.0 + 1e-12


def test_anchor_calibration():
    gamma = calibrate_linewidth(30.0, 0.76)
    assert gamma == pytest.approx(GAMMA_ANCHOR, rel=1e-9)
    assert visibility_inhomogeneous(45.0, gamma) == pytest.approx(V45_ANCHOR, rel=1e-9)
    assert calibrate_linewidth(54.0, 0.51) == pytest.approx(GAMMA_54, rel=1e-9)


@given(st.floats(5.0, 1000.0), st.floats(0.02, 0.98))
def test_calibration_round_trip(t1, v):
    assert visibility_inhomogeneous(t1, calibrate_linewidth(t1, v)) == pytest.approx(v, abs=1e-9)


def test_temperature_model_reference():
    gamma = calibrate_linewidth(30.0, 0.76)
    cfg = EmitterConfig(purcell_factor=25.0, gamma_inhom=gamma)
    for temp, v in V_FP25.items():
        assert visibility_temperature(cfg, temp) == pytest.approx(v, rel=1e-6)


def test_thermal_factor_conventions():
    t1, gs = 27.2, 10.0
    gamma = fourier_linewidth(t1)
    assert thermal_factor(t1, gs, "hbar") == pytest.approx(gamma / (gamma + gs))
    assert thermal_factor(t1, gs, "planck") == pytest.approx(gamma / (gamma + gs / (2 * math.pi)))
    assert thermal_factor(t1, 0.0) == 1.0


def test_coherence_time_reproduces_thermal_factor():
    cfg = EmitterConfig(purcell_factor=12.6, temperature=30.0)
    t2 = dephasing_coherence_time(cfg)
    f = thermal_factor(cfg.t1, phonon_dephasing_rate(cfg))
    assert 1.0 / (1.0 + 2.0 * cfg.t1 / t2) == pytest.approx(f, rel=1e-12)
    assert dephasing_coherence_time(EmitterConfig(temperature=0.0)) is None


def test_purcell_detuning():
    cav = CavityModel()
    assert purcell_vs_detuning(cav, 0.0) == pytest.approx(30.0)
    assert purcell_vs_detuning(cav, 1e4) == pytest.approx(1.0, abs=1e-3)
    w = cav.lambda_c0 / cav.q_factor
    assert purcell_vs_detuning(cav, w / 2) == pytest.approx(1.0 + 29.0 / 2)
    assert purcell_vs_detuning(cav, 0.0, derating=0.5) == pytest.approx(15.5)
    assert cavity_mode_wavelength(CavityModel(delta_r=10.0)) == pytest.approx(933.0)
    # plug-in evaluation at 2 nm detuning (30 digits)
    assert purcell_vs_detuning(cav, 2.0) == pytest.approx(14.2937608318890815, rel=1e-12)


def test_tuning_span():
    lo = cavity_mode_wavelength(CavityModel(delta_r=-20.0))
    hi = cavity_mode_wavelength(CavityModel(delta_r=30.0))
    assert hi - lo == pytest.approx(65.0)
    assert lo < 900.0 < 940.0 < hi


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_purcell_detuning_symmetric_and_bounded(d, dr):
    cav = CavityModel(delta_r=dr)
    fp = purcell_vs_detuning(cav, d)
    assert 1.0 <= fp <= cav.fp_max
    assert fp == pytest.approx(purcell_vs_detuning(cav, -d))


def test_correct_visibility_arithmetic():
    assert correct_visibility(0.43, 0.039, 2.0).v_corrected == pytest.approx(0.508)
    assert correct_visibility(0.88, 0.086, 1.0).v_corrected == pytest.approx(0.966)
    assert correct_visibility(0.99, 0.1, 2.0).v_corrected == 1.0
    with pytest.raises(DomainError):
        correct_visibility(0.5, 0.01, 2.5)


def test_emitter_validation():
    with pytest.raises(DomainError):
        EmitterConfig(slow_fraction=1.5)
    with pytest.raises(DomainError):
        EmitterConfig(t1_free=-1.0)
    with pytest.raises(DomainError):
        EmitterConfig(reservoir_jitter=0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert EmitterConfig(purcell_factor=25.0).t1 == pytest.approx(27.2)


def test_unit_helpers():
    assert sigma_to_linewidth(linewidth_to_sigma(3.3)) == pytest.approx(3.3)
    assert ueV_to_GHz(GHz_to_ueV(2.0)) == pytest.approx(2.0)
