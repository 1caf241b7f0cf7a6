import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spsbench.correlate import cross_correlate, g2_zero, hom_visibility
from spsbench.fitting import t2_from_dip
from spsbench.exceptions import DomainError
from spsbench.interferometer import (BenchConfig, outcome_probabilities, pair_photons, pair_visibility_oracle,
                                     route_hbt, route_hom)
from spsbench.physics import EmitterConfig, fourier_limited_t2, visibility_inhomogeneous
from spsbench.source import DetectorModel, PulseTrain, expected_g2_zero, simulate_emission


def test_bench_validation():
    assert BenchConfig(polarization_mode="cross").chi == 0.0
    with pytest.raises(DomainError):
        BenchConfig(topology="MZ")
    with pytest.raises(DomainError):
        BenchConfig(splitter_ratio=1.0)
    with pytest.raises(DomainError):
        BenchConfig("HOM", delay=-5.0)


probs = st.floats(0.0, 1.0)


@settings(max_examples=300)
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-1, 1), probs, st.floats(0.01, 0.99))
def test_outcome_probabilities_valid(la, lb, beat, chi, r):
    p = outcome_probabilities(np.array([la]), np.array([lb]), np.array([beat]), chi, r)
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100)
@given(st.floats(-20, 20), st.floats(-20, 20), st.floats(0, 1), st.floats(0.05, 0.95))
def test_coincidence_probability_lower_with_interference(la, lb, beat, r):
    args = (np.array([la]), np.array([lb]), np.array([beat]))
    co = outcome_probabilities(*args, 1.0, r)
    cross = outcome_probabilities(*args, 0.0, r)
    assert co[0, :2].sum() <= cross[0, :2].sum() + 1e-12


def test_identical_photons_bunch_completely():
    p = outcome_probabilities(np.array([0.0]), np.array([0.0]), np.array([1.0]), 1.0, 0.5)
    assert np.allclose(p, [[0.0, 0.0, 0.5, 0.5]])


def test_pairing_by_pulse_and_rank():
    il, is_ = pair_photons(np.array([0, 0, 2]), np.array([1.0, 2.0, 3.0]),
                           np.array([1, 1, 3, 5]), np.array([5.0, 4.0, 6.0, 7.0]), 1)
    pairs = sorted(zip(il.tolist(), is_.tolist()))
    assert pairs == [(0, 1), (1, 0), (2, 2)]


def test_hbt_conserves_photons():
    ph = simulate_emission(EmitterConfig(leak_rate=0.1), PulseTrain(n_pulses=20_000), seed=1)
    a, b = route_hbt(ph, DetectorModel(), seed=1)
    assert a.accounting["n_input"] + b.accounting["n_input"] == len(ph)
    assert sum(len(s) + s.accounting["n_dead"] for s in (a, b)) == len(ph)


@pytest.mark.parametrize("mode", ["co", "cross"])
def test_hom_conserves_photons(mode):
    ph = simulate_emission(EmitterConfig(gamma_inhom=3.0, leak_rate=0.2), PulseTrain(n_pulses=20_000), seed=2)
    a, b = route_hom(ph, BenchConfig("HOM", polarization_mode=mode), DetectorModel(), seed=2)
    assert sum(len(s) + s.accounting["n_dead"] for s in (a, b)) == len(ph)
    assert a.accounting["n_pairs"] > 0


def test_non_integer_delay_warns_and_pairs_nothing():
    ph = simulate_emission(EmitterConfig(), PulseTrain(n_pulses=1000), seed=3)
    with pytest.warns(UserWarning):
        a, _ = route_hom(ph, BenchConfig("HOM", delay=5000.0), DetectorModel(), seed=3)
    assert a.accounting["n_pairs"] == 0


def test_oracle_matches_closed_form_and_dephasing_limit():
    for t1, g in ((20.0, 1.0), (54.0, 5.1187), (300.0, 0.3)):
        assert pair_visibility_oracle(t1, g) == pytest.approx(visibility_inhomogeneous(t1, g), abs=1e-6)
    assert pair_visibility_oracle(54.0, 0.0, t2_pure=100.0) == pytest.approx(1.0 / (1.0 + 2 * 54.0 / 100.0),
                                                                            abs=1e-7)


def _hom(em, n, seed, t2=None):
    train = PulseTrain(n_pulses=n)
    ph = simulate_emission(em, train, seed=seed)
    hists = {}
    for mode in ("co", "cross"):
        a, b = route_hom(ph, BenchConfig("HOM", polarization_mode=mode, t2_pure_dephasing=t2), DetectorModel(), seed)
        hists[mode] = cross_correlate(a, b, 10, 44_000)
    return hom_visibility(hists["co"], hists["cross"], train.period)


@pytest.mark.parametrize("t1,gamma,t2", [(54.0, 5.0, None), (30.0, 0.0, 60.0), (120.0, 2.0, None)])
def test_monte_carlo_matches_quadrature(t1, gamma, t2):
    rep = _hom(EmitterConfig(t1_free=t1, gamma_inhom=gamma), 200_000, 7, t2)
    target = pair_visibility_oracle(t1, gamma, t2)
    assert abs(rep.v_raw - target) < 4 * rep.v_raw_err + 0.01


def test_cross_polarised_control_is_flat():
    # two independent cross-polarised runs must agree to within statistics
    train = PulseTrain(n_pulses=200_000)
    ph = simulate_emission(EmitterConfig(t1_free=54.0), train, seed=8)
    bench = BenchConfig("HOM", polarization_mode="cross")
    h = [cross_correlate(*route_hom(ph, bench, DetectorModel(), s), 10, 44_000) for s in (8, 9)]
    rep = hom_visibility(h[0], h[1], train.period)
    assert abs(rep.v_raw) < 0.02


def test_seeded_routing_is_reproducible():
    ph = simulate_emission(EmitterConfig(gamma_inhom=1.0), PulseTrain(n_pulses=5000), seed=4)
    bench = BenchConfig("HOM")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        a1, b1 = route_hom(ph, bench, DetectorModel(irf_sigma=20.0), seed=4)
        a2, b2 = route_hom(ph, bench, DetectorModel(irf_sigma=20.0), seed=4)
    assert np.array_equal(a1.tags, a2.tags) and np.array_equal(b1.tags, b2.tags)


def test_leak_centre_peak_matches_enumeration():
    em = EmitterConfig(leak_rate=0.05, reexcite_prob=0.03)
    train = PulseTrain(n_pulses=300_000)
    ph = simulate_emission(em, train, seed=10)
    a, b = route_hbt(ph, DetectorModel(), seed=10)
    g2, err = g2_zero(cross_correlate(a, b, 10, 43_750), train.period)
    assert abs(g2 - expected_g2_zero(1.0, 0.03, 0.05)) < 4 * err


def test_narrow_line_short_lifetime_is_nearly_indistinguishable():
    rep = _hom(EmitterConfig(t1_free=41.7, gamma_inhom=0.3), 200_000, 11, t2=20_000.0)
    assert rep.v_raw >= 0.96


def test_dip_coherence_time_near_fourier_line():
    # weak pure dephasing: the total coherence time approaches 2 T1
    t1, t2_pure = 41.7, 2000.0
    train = PulseTrain(n_pulses=1_000_000)
    ph = simulate_emission(EmitterConfig(t1_free=t1), train, seed=12)
    h = [cross_correlate(*route_hom(ph, BenchConfig("HOM", polarization_mode=m, t2_pure_dephasing=t2_pure),
                                    DetectorModel(), 12), 4, 43_752) for m in ("co", "cross")]
    fit = t2_from_dip(h[0], h[1], fit_range=400.0)
    assert fit.converged
    assert abs(fit["t2"] - t2_pure) < 3 * fit.errors["t2"]
    t2_total = 1.0 / (1.0 / (2.0 * t1) + 1.0 / fit["t2"])
    assert t2_total == pytest.approx(fourier_limited_t2(t1), rel=0.1)
