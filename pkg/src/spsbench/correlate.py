"""Start-stop correlation of timetag streams and peak-area analysis."""

from __future__ import annotations

import bisect
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .exceptions import DomainError
from .physics import VisibilityReport, correct_visibility
from .source import TimeTagStream, is_strictly_increasing
from .tagio import HEADER, TAG_DTYPE, open_tags, read_header


@dataclass
class CorrelationHistogram:
    """Counts of t_b - t_a in bins [-range + i w, -range + (i + 1) w).

    A delay of exactly +range is counted in the last bin.
    """

    bin_width: int
    range: int
    counts: np.ndarray
    channel_pair: tuple = (0, 1)
    metadata: dict = field(default_factory=dict)

    @property
    def nbins(self) -> int:
        return self.counts.size

    @property
    def total_pairs(self) -> int:
        return int(self.counts.sum())

    @property
    def edges(self) -> np.ndarray:
        return -self.range + self.bin_width * np.arange(self.nbins + 1, dtype=np.float64)

    @property
    def centers(self) -> np.ndarray:
        return self.edges[:-1] + 0.5 * self.bin_width

    def to_csv(self, path):
        data = np.column_stack([self.centers, self.counts])
        np.savetxt(path, data, fmt=["%.1f", "%d"], delimiter=",", header="bin_center_ps,counts", comments="")

    def rebin(self, factor: int) -> "CorrelationHistogram":
        n = self.nbins // factor
        return CorrelationHistogram(self.bin_width * factor, self.range,
                                    self.counts[: n * factor].reshape(n, factor).sum(axis=1),
                                    self.channel_pair, dict(self.metadata))


def _grid(bin_width, range_ps):
    bw, r = int(round(bin_width)), int(round(range_ps))
    if bw != bin_width or r != range_ps or bw < 1 or r < 1:
        raise DomainError("bin_width and range must be positive whole picoseconds")
    return bw, r, -(-2 * r // bw)


@njit(nogil=True, cache=True)
def _accumulate(a, b, rng, bw, counts):
    nb = b.size
    nbins = counts.size
    j0 = 0
    for i in range(a.size):
        ta = a[i]
        lo = ta - rng
        while j0 < nb and b[j0] < lo:
            j0 += 1
        hi = ta + rng
        j = j0
        while j < nb and b[j] <= hi:
            k = (b[j] - lo) // bw
            if k >= nbins:
                k = nbins - 1
            counts[k] += 1
            j += 1


def _chunk_counts(a, b, r, bw, nbins):
    counts = np.zeros(nbins, dtype=np.int64)
    if a.size and b.size:
        lo = np.searchsorted(b, a[0] - r, side="left")
        hi = np.searchsorted(b, a[-1] + r, side="right")
        _accumulate(np.ascontiguousarray(a, dtype=np.int64), np.ascontiguousarray(b[lo:hi], dtype=np.int64),
                    r, bw, counts)
    return counts


def cross_correlate(a, b, bin_width, range_ps, threads=1, chunk=1 << 20) -> CorrelationHistogram:
    """Exact histogram of all delays t_b - t_a within +-``range_ps``.

    ``a`` and ``b`` are TimeTagStreams or sorted integer arrays.  A two-pointer
    sweep runs over chunks of ``a``; chunk histograms are integer sums, so the
    result is identical for every thread count.
    """
    pair = (getattr(a, "channel", 0), getattr(b, "channel", 1))
    ta = a.tags if isinstance(a, TimeTagStream) else np.asarray(a, dtype=np.int64)
    tb = b.tags if isinstance(b, TimeTagStream) else np.asarray(b, dtype=np.int64)
    for t in (ta, tb):
        if not is_strictly_increasing(t):
            raise ValueError("cross_correlate needs strictly increasing timetags")
    bw, r, nbins = _grid(bin_width, range_ps)
    starts = range(0, ta.size, chunk)
    job = lambda s: _chunk_counts(ta[s:s + chunk], tb, r, bw, nbins)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(job, starts))
    else:
        parts = [job(s) for s in starts]
    counts = np.sum(parts, axis=0, dtype=np.int64) if parts else np.zeros(nbins, dtype=np.int64)
    return CorrelationHistogram(bw, r, counts, pair)


def correlate_files(path_a, path_b, bin_width, range_ps, block=1 << 22, threads=1) -> CorrelationHistogram:
    """Streaming ``cross_correlate`` of two timetag files.

    Files are read in blocks of ``block`` tags, so the resident memory stays
    bounded by a few blocks regardless of file length.
    """
    ha, hb = read_header(path_a), read_header(path_b)
    ma, mb = open_tags(path_a), open_tags(path_b)
    bw, r, nbins = _grid(bin_width, range_ps)
    counts = np.zeros(nbins, dtype=np.int64)

    def load(path, start, count):
        # explicit reads keep the page cache out of the resident set
        return np.fromfile(path, dtype=TAG_DTYPE, count=count, offset=HEADER.size + 8 * start).view(np.int64)

    def job(s):
        a = load(path_a, s, min(block, ma.size - s))
        if a.size and np.any(a[1:] <= a[:-1]):
            raise ValueError(f"{path_a}: timetags not strictly increasing")
        # bisect touches ~log2(n) elements; np.searchsorted would page in the whole map
        lo = bisect.bisect_left(mb, max(int(a[0]) - r, 0))
        hi = bisect.bisect_right(mb, int(a[-1]) + r)
        b = load(path_b, lo, hi - lo)
        if b.size and np.any(b[1:] <= b[:-1]):
            raise ValueError(f"{path_b}: timetags not strictly increasing")
        c = np.zeros(nbins, dtype=np.int64)
        _accumulate(a, b, r, bw, c)
        return c

    starts = range(0, ma.size, block)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            for c in ex.map(job, starts):
                counts += c
    else:
        for s in starts:
            counts += job(s)
    meta = {"config_hash_a": ha["config_hash"].hex(), "config_hash_b": hb["config_hash"].hex()}
    return CorrelationHistogram(bw, r, counts, (ha["channel"], hb["channel"]), meta)


@dataclass(frozen=True)
class PeakIntegration:
    window: float
    center_area: int
    side_areas: np.ndarray
    side_index: np.ndarray

    @property
    def n_side(self) -> int:
        return int(self.side_areas.size)


def integrate_peaks(hist: CorrelationHistogram, period) -> PeakIntegration:
    """Areas of period-wide windows centred on multiples of ``period``.

    Bins belong to the window containing their centre; only windows lying
    entirely inside the histogram range are returned.
    """
    k = np.floor(hist.centers / period + 0.5).astype(np.int64)
    kmax = int(math.floor(hist.range / period - 0.5 + 1e-9))
    if kmax < 1:
        raise DomainError("histogram range must cover at least one side peak")
    areas = np.bincount(k[np.abs(k) <= kmax] + kmax, weights=hist.counts[np.abs(k) <= kmax],
                        minlength=2 * kmax + 1).astype(np.int64)
    idx = np.arange(-kmax, kmax + 1)
    side = idx != 0
    return PeakIntegration(float(period), int(areas[kmax]), areas[side], idx[side])


def g2_zero(hist: CorrelationHistogram, period):
    """Centre-peak area over the mean side-peak area, with Poisson error.

    Returns
    -------
    (float, float)
        g2(0) and its 1-sigma counting uncertainty.
    """
    if hist.range < 3 * period:
        raise DomainError("g2_zero needs range >= 3 periods")
    peaks = integrate_peaks(hist, period)
    total_side = int(peaks.side_areas.sum())
    if total_side == 0:
        raise ValueError("side peaks are empty; g2(0) is undefined")
    mean = total_side / peaks.n_side
    g2 = peaks.center_area / mean
    err = math.sqrt(max(peaks.center_area, 1) / mean ** 2 + g2 ** 2 / total_side)
    return g2, err


def center_area(hist: CorrelationHistogram, window) -> int:
    c = hist.centers
    return int(hist.counts[(c >= -0.5 * window) & (c < 0.5 * window)].sum())


def hom_visibility(co: CorrelationHistogram, cross: CorrelationHistogram, window,
                   g2_zero=0.0, b_factor=2.0) -> VisibilityReport:
    """V = 1 - A_co / A_cross over the centre window, plus multi-photon correction."""
    if co.bin_width != cross.bin_width or co.range != cross.range:
        raise ValueError("co and cross histograms must share binning")
    a_co, a_cross = center_area(co, window), center_area(cross, window)
    if a_cross == 0:
        raise ValueError("cross-polarised centre area is zero; visibility undefined")
    ratio = a_co / a_cross
    err = ratio * math.sqrt(1.0 / max(a_co, 1) + 1.0 / a_cross)
    return correct_visibility(1.0 - ratio, g2_zero, b_factor, err)


def decay_histogram(times, period, bin_width=1.0, t_max=None, offset=0.0):
    """Histogram of arrival time modulo the pulse period (TCSPC start-stop).

    Returns bin centres [ps] and integer counts over [0, ``t_max``).
    """
    t_max = period if t_max is None else t_max
    phase = np.mod(np.asarray(times, dtype=np.float64) - offset, period)
    nb = int(math.ceil(t_max / bin_width))
    edges = bin_width * np.arange(nb + 1)
    counts, _ = np.histogram(phase, bins=edges)
    return edges[:-1] + 0.5 * bin_width, counts
