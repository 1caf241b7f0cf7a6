import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spsbench.correlate import (CorrelationHistogram, center_area, correlate_files, cross_correlate, decay_histogram,
                                g2_zero, hom_visibility, integrate_peaks)
from spsbench.exceptions import DomainError
from spsbench.source import TimeTagStream
from spsbench.tagio import write_timetags


def brute_force(a, b, bw, r):
    nbins = -(-2 * r // bw)
    counts = np.zeros(nbins, dtype=np.int64)
    for ta in a:
        for tb in b:
            d = tb - ta
            if -r <= d <= r:
                counts[min((d + r) // bw, nbins - 1)] += 1
    return counts


tag_lists = st.lists(st.integers(0, 5000), min_size=0, max_size=60, unique=True).map(sorted)


@settings(max_examples=150, deadline=None)
@given(tag_lists, tag_lists, st.integers(1, 40), st.integers(1, 600), st.sampled_from([1, 2, 3, 7]))
def test_matches_brute_force(a, b, bw, r, chunk):
    a, b = np.array(a, dtype=np.int64), np.array(b, dtype=np.int64)
    h = cross_correlate(a, b, bw, r, chunk=chunk)
    assert np.array_equal(h.counts, brute_force(a.tolist(), b.tolist(), bw, r))


@settings(max_examples=40, deadline=None)
@given(tag_lists, tag_lists, st.integers(1, 20), st.integers(1, 300))
def test_swap_preserves_pair_count(a, b, bw, r):
    a, b = np.array(a, dtype=np.int64), np.array(b, dtype=np.int64)
    assert cross_correlate(a, b, bw, r).total_pairs == cross_correlate(b, a, bw, r).total_pairs


def test_thread_and_chunk_invariance():
    rng = np.random.default_rng(0)
    a = np.cumsum(rng.integers(1, 3000, 200_000))
    b = np.cumsum(rng.integers(1, 3000, 200_000))
    ref = cross_correlate(a, b, 5, 4000)
    for threads, chunk in ((1, 1000), (4, 777), (3, 1 << 20)):
        assert np.array_equal(cross_correlate(a, b, 5, 4000, threads, chunk).counts, ref.counts)


def test_file_streaming_matches_in_memory(tmp_path):
    rng = np.random.default_rng(1)
    a = np.cumsum(rng.integers(1, 500, 50_000))
    b = np.cumsum(rng.integers(1, 500, 50_000))
    pa = write_timetags(tmp_path / "a.ptt", TimeTagStream(0, a, 7, b"x" * 32))
    pb = write_timetags(tmp_path / "b.ptt", TimeTagStream(1, b, 7, b"x" * 32))
    ref = cross_correlate(a, b, 4, 2000)
    for block, threads in ((1000, 1), (4096, 2), (1 << 22, 1)):
        h = correlate_files(pa, pb, 4, 2000, block=block, threads=threads)
        assert np.array_equal(h.counts, ref.counts)
        assert h.channel_pair == (0, 1)


def test_rejects_unsorted_and_fractional_bins():
    with pytest.raises(ValueError):
        cross_correlate(np.array([3, 1]), np.array([1, 2]), 1, 10)
    with pytest.raises(DomainError):
        cross_correlate(np.array([1]), np.array([2]), 0.5, 10)


def test_edges_and_rebin():
    h = CorrelationHistogram(2, 10, np.arange(10))
    assert h.edges[0] == -10 and h.edges[-1] == 10
    assert np.allclose(h.centers[:2], [-9, -7])
    r = h.rebin(2)
    assert r.bin_width == 4 and r.counts.tolist() == [1, 5, 9, 13, 17]


def synthetic_pulsed(center, side, period=1000, nside=3, bw=10):
    r = int((nside + 0.5) * period)
    h = CorrelationHistogram(bw, r, np.zeros(2 * r // bw, dtype=np.int64))
    k = np.floor(h.centers / period + 0.5).astype(int)
    peak = np.abs(h.centers - k * period) < bw
    for i in np.flatnonzero(peak):
        h.counts[i] = (center if k[i] == 0 else side) // 2
    return h


def test_peak_integration_and_g2():
    h = synthetic_pulsed(100, 1000)
    p = integrate_peaks(h, 1000)
    assert p.center_area == 100
    assert p.n_side == 6
    assert np.all(p.side_areas == 1000)
    g2, err = g2_zero(h, 1000)
    assert g2 == pytest.approx(0.1)
    assert err == pytest.approx(math.sqrt(100 / 1000 ** 2 + 0.01 / 6000))


def test_g2_needs_three_periods_and_side_counts():
    h = CorrelationHistogram(10, 2000, np.zeros(400, dtype=np.int64))
    with pytest.raises(DomainError):
        g2_zero(h, 1000)
    with pytest.raises(ValueError):
        g2_zero(CorrelationHistogram(10, 3500, np.zeros(700, dtype=np.int64)), 1000)


def test_hom_visibility_from_areas():
    co, cross = synthetic_pulsed(250, 1000), synthetic_pulsed(1000, 1000)
    rep = hom_visibility(co, cross, 1000, g2_zero=0.05, b_factor=2.0)
    assert rep.v_raw == pytest.approx(0.75)
    assert rep.v_corrected == pytest.approx(0.85)
    assert center_area(co, 1000) == 250
    with pytest.raises(ValueError):
        hom_visibility(co, CorrelationHistogram(5, co.range, np.zeros(2 * co.range // 5, dtype=np.int64)), 1000)


def test_g2_of_poisson_streams_is_unity():
    # independent Poisson-per-pulse counts have g2(0) = 1
    period, n = 1000, 400_000
    vals = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        tags = []
        for _ in range(2):
            k = rng.poisson(0.05, n)
            t = np.repeat(np.arange(n) * period, k) + rng.integers(0, 50, k.sum())
            tags.append(np.unique(t))
        g2, err = g2_zero(cross_correlate(tags[0], tags[1], 10, 3500), period)
        vals.append((g2 - 1.0) / err)
    assert abs(np.mean(vals)) < 3.0 / math.sqrt(len(vals))


def test_uncorrelated_streams_give_flat_histogram():
    rng = np.random.default_rng(5)
    duration, r1, r2, bw, rng_ps = 2e9, 2e-5, 3e-5, 100, 20_000
    a = np.unique(rng.integers(0, int(duration), rng.poisson(r1 * duration)))
    b = np.unique(rng.integers(0, int(duration), rng.poisson(r2 * duration)))
    h = cross_correlate(a, b, bw, rng_ps)
    expected = a.size * b.size / duration * bw * (1 - 0.5 * rng_ps / duration)
    assert abs(h.counts.mean() - expected) <= 3 * math.sqrt(expected / h.nbins)
    chi2 = np.sum((h.counts - expected) ** 2 / expected)
    assert chi2 < h.nbins + 5 * math.sqrt(2 * h.nbins)


def test_identical_histograms_give_zero_visibility():
    h = synthetic_pulsed(400, 1000)
    assert hom_visibility(h, h, 1000).v_raw == 0.0


def test_decay_histogram_folds_period():
    h_t, h_c = decay_histogram([5, 1005, 2010, 3999], 1000, bin_width=10)
    assert h_c.sum() == 4 and h_c[0] == 2 and h_c[1] == 1 and h_c[-1] == 1
    assert h_t[0] == 5.0
