import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spsbench.correlate import CorrelationHistogram
from spsbench.exceptions import DipNotResolvableError, DomainError
from spsbench.fitting import DECAY_PARAMS, _dip, _dip_jac, decay_model, fit_decay, fit_fano, t2_from_dip
from spsbench.pipeline import synthetic_fano_spectrum


def central_difference(f, t, p, h=1e-6):
    p = np.asarray(p, dtype=float)
    cols = []
    for i in range(p.size):
        step = h * max(abs(p[i]), 1.0)
        up, dn = p.copy(), p.copy()
        up[i] += step
        dn[i] -= step
        cols.append((f(t, up) - f(t, dn)) / (2 * step))
    return np.column_stack(cols)


@pytest.mark.parametrize("model,params,irf", [
    ("exp", [1000.0, 54.0, 3.0], None),
    ("biexp", [5e4, 30.0, 400.0, 0.2, 2.0], None),
    ("exp_irf", [2000.0, 27.0, 100.0, 1.0], 10.0),
    ("exp_irf", [2000.0, 5.0, 100.0, 1.0], 40.0),
])
def test_jacobian_matches_finite_difference(model, params, irf):
    f, jac = decay_model(model, irf)
    t = np.linspace(0.0, 500.0, 301)
    if jac is None:
        pytest.skip("model uses numerical derivatives")
    assert np.allclose(jac(t, params), central_difference(f, t, params), rtol=1e-5, atol=1e-6 * max(params))


def test_dip_jacobian_matches_finite_difference():
    t = np.linspace(-500.0, 500.0, 201)
    p = [1.0, 0.8, 120.0]
    assert np.allclose(_dip_jac(t, p), central_difference(_dip, t, p), rtol=1e-5, atol=1e-8)


@pytest.mark.parametrize("model,params,irf", [
    ("exp", [1000.0, 54.0, 3.0], None),
    ("biexp", [5e4, 30.0, 400.0, 0.2, 2.0], None),
    ("exp_irf", [2000.0, 27.0, 100.0, 1.0], 10.0),
])
def test_noiseless_round_trip(model, params, irf):
    f, _ = decay_model(model, irf)
    t = np.arange(0.0, 3000.0 if model == "biexp" else 600.0, 1.0)
    y = f(t, np.array(params))
    if model != "exp_irf":
        t = t - t[np.argmax(y)]
    fit = fit_decay(t, y, model, irf_sigma=irf)
    assert fit.converged, fit.message
    for name, v in zip(DECAY_PARAMS[model], params):
        assert fit[name] == pytest.approx(v, rel=1e-6), name


def test_few_bins_flags_unreliable():
    t = np.arange(100.0)
    y = np.zeros(100)
    y[:5] = [100, 50, 25, 12, 6]
    fit = fit_decay(t, y)
    assert not fit.converged and not fit.reliable
    assert math.isnan(fit["tau"])


def test_unknown_model():
    with pytest.raises(DomainError):
        fit_decay(np.arange(10.0), np.ones(10), "stretched")


def test_poisson_counts_use_weighted_fit():
    rng = np.random.default_rng(0)
    t = np.arange(0.0, 400.0, 2.0)
    y = rng.poisson(5000 * np.exp(-t / 40.0) + 20)
    fit = fit_decay(t, y)
    assert fit.metadata["weighting"] == "poisson"
    assert fit["tau"] == pytest.approx(40.0, abs=4 * fit.errors["tau"])


def test_fano_recovery():
    lam, r = synthetic_fano_spectrum(920.0, 250.0, 1.0, 0.01, seed=1)
    fit = fit_fano(lam, r)
    assert fit.converged
    assert fit["lambda_c"] == pytest.approx(920.0, abs=0.05)
    assert fit["Q"] == pytest.approx(250.0, rel=0.05)
    assert fit["q"] == pytest.approx(1.0, rel=0.2)


def test_lorentzian_submodel_selected_for_symmetric_line():
    lam = np.linspace(910.0, 930.0, 300)
    e = 2 * (lam - 920.0) / (920.0 / 300.0)
    r = 0.5 - 0.3 / (1 + e * e) + 1e-4 * np.random.default_rng(2).standard_normal(lam.size)
    fit = fit_fano(lam, r)
    assert fit.metadata["submodel"] == "lorentz"
    assert math.isinf(fit["q"])
    assert fit["Q"] == pytest.approx(300.0, rel=0.02)


@settings(max_examples=15, deadline=None)
@given(st.floats(-30.0, 30.0))
def test_fano_shift_equivariance(shift):
    lam, r = synthetic_fano_spectrum(920.0, 250.0, 1.0, 0.005, seed=3)
    a, b = fit_fano(lam, r), fit_fano(lam + shift, r)
    assert b["lambda_c"] - a["lambda_c"] == pytest.approx(shift, abs=1e-6)
    assert b["width"] == pytest.approx(a["width"], rel=1e-6)


def test_fano_needs_samples():
    with pytest.raises(DomainError):
        fit_fano(np.arange(10.0), np.ones(10))


def _dip_histograms(t2, vis, bw=4, r=2000, amp=5000.0):
    nb = 2 * r // bw
    centers = -r + bw * (np.arange(nb) + 0.5)
    cross = np.full(nb, amp)
    co = cross * (1 - vis * np.exp(-2 * np.abs(centers) / t2))
    return (CorrelationHistogram(bw, r, np.rint(co).astype(np.int64)),
            CorrelationHistogram(bw, r, np.rint(cross).astype(np.int64)))


def test_dip_ratio_fit_recovers_t2():
    co, cross = _dip_histograms(150.0, 0.9)
    fit = t2_from_dip(co, cross, fit_range=1000.0)
    assert fit.converged
    assert fit["t2"] == pytest.approx(150.0, rel=0.01)
    assert fit["visibility"] == pytest.approx(0.9, abs=0.01)


def test_flat_histogram_has_no_dip():
    co, cross = _dip_histograms(150.0, 0.0)
    with pytest.raises(DipNotResolvableError):
        t2_from_dip(co, cross)
    with pytest.raises(DipNotResolvableError):
        t2_from_dip(co)


def test_empty_co_histogram_is_not_resolvable():
    co, cross = _dip_histograms(150.0, 0.9)
    co.counts[:] = 0
    with pytest.raises(DipNotResolvableError):
        t2_from_dip(co, cross)
