"""Monte Carlo pulsed single-photon source and detector model.

Photons are kept as a struct of arrays (``PhotonRecords``).  Random numbers
come from Philox generators keyed by (seed, stage, chunk), with a fixed chunk
size, so the output does not depend on how many worker threads are used.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import brentq

from .constants import linewidth_to_sigma
from .exceptions import CalibrationError, DomainError
from .physics import EmitterConfig

CHUNK = 1 << 16
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))

ORIGIN_EMITTER, ORIGIN_LEAK, ORIGIN_DARK = 0, 1, 2
ORIGIN_NAMES = {ORIGIN_EMITTER: "emitter", ORIGIN_LEAK: "leak", ORIGIN_DARK: "dark"}

# spawn-key stages
_STAGE_RESERVOIR, _STAGE_EMISSION, _STAGE_DETECT, _STAGE_ROUTE = 0, 1, 2, 3


def rng_for(seed, *key):
    """Counter-based generator for one (seed, stage, ...) stream."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))


def config_hash(*parts) -> bytes:
    """SHA-256 of the canonical JSON serialisation of ``parts``."""
    def norm(p):
        return asdict(p) if hasattr(p, "__dataclass_fields__") else p
    doc = json.dumps([norm(p) for p in parts], sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(doc.encode()).digest()


def _pmap(fn, items, threads):
    if threads is None or threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


@dataclass(frozen=True)
class PulseTrain:
    base_rate: float = 80.0      # MHz
    multiplier: int = 1
    pulse_fwhm: float = 2.0      # ps
    pulse_area: float = 1.0      # in units of pi
    n_pulses: int = 100_000

    def __post_init__(self):
        if self.multiplier not in (1, 2, 4, 8, 16):
            raise DomainError("multiplier must be one of 1, 2, 4, 8, 16")
        if not self.base_rate > 0 or self.n_pulses < 1 or self.pulse_fwhm < 0:
            raise DomainError("base_rate > 0, n_pulses >= 1 and pulse_fwhm >= 0 required")

    @property
    def rate(self) -> float:
        """Effective repetition rate [MHz]."""
        return self.base_rate * self.multiplier

    @property
    def period(self) -> float:
        return 1e6 / self.rate

    @property
    def duration(self) -> float:
        return self.n_pulses * self.period

    @property
    def excitation_probability(self) -> float:
        return math.sin(0.5 * math.pi * self.pulse_area) ** 2


@dataclass
class PhotonRecords:
    """Truth-level photons, one entry per array element, sorted by emission time.

    ``start_time`` and ``lifetime`` describe the photon's exponential
    wavepacket; the interferometer needs them for the two-photon density.
    """

    emission_time: np.ndarray
    pulse_index: np.ndarray
    frequency_offset: np.ndarray
    origin: np.ndarray
    start_time: np.ndarray
    lifetime: np.ndarray
    period: float
    n_pulses: int
    seed: int = 0
    config_hash: bytes = bytes(32)
    n_occupied: int = 0

    def __len__(self):
        return self.emission_time.size

    @property
    def duration(self) -> float:
        return self.n_pulses * self.period

    def subset(self, mask) -> "PhotonRecords":
        return PhotonRecords(
            self.emission_time[mask], self.pulse_index[mask], self.frequency_offset[mask],
            self.origin[mask], self.start_time[mask], self.lifetime[mask],
            self.period, self.n_pulses, self.seed, self.config_hash, self.n_occupied,
        )

    def count(self, origin) -> int:
        return int(np.count_nonzero(self.origin == origin))


@dataclass
class TimeTagStream:
    channel: int
    tags: np.ndarray
    seed: int = 0
    config_hash: bytes = bytes(32)
    duration: float = 0.0
    resolution_ps: int = 1
    accounting: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tags = np.asarray(self.tags, dtype=np.int64)
        if not is_strictly_increasing(self.tags):
            raise ValueError("timetags must be strictly increasing")

    def __len__(self):
        return self.tags.size


@dataclass(frozen=True)
class DetectorModel:
    irf_sigma: float = 0.0       # ps
    efficiency: float = 1.0
    dark_rate: float = 0.0       # Hz
    dead_time: float = 0.0       # ps

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise DomainError("efficiency must lie in (0, 1]")
        if self.irf_sigma < 0 or self.dark_rate < 0 or self.dead_time < 0:
            raise DomainError("irf_sigma, dark_rate and dead_time must be non-negative")


def is_strictly_increasing(a, block=1 << 22) -> bool:
    for i in range(0, max(a.size - 1, 0), block):
        seg = a[i:i + block + 1]
        if np.any(seg[1:] <= seg[:-1]):
            return False
    return True


# ---------------------------------------------------------------------------
# charge reservoir

def refill_probability(dt, reservoir_tau, jitter=0.1):
    """Probability that the hole reservoir has refilled ``dt`` ps after the last emission.

    The refill time is a fixed delay (1 - jitter) tau followed by an
    exponential of mean jitter * tau.  ``jitter = 1`` is 1 - exp(-dt / tau).
    """
    dt = np.asarray(dt, dtype=float)
    if reservoir_tau == 0:
        return np.ones_like(dt)
    delay = (1.0 - jitter) * reservoir_tau
    scale = jitter * reservoir_tau
    return np.where(dt > delay, -np.expm1(-(dt - delay) / scale), 0.0)


def reservoir_yield(period, reservoir_tau, jitter=0.1, p_exc=1.0):
    """Steady-state emission probability per pulse.

    Emissions form a renewal process: ``k`` pulses after an emission the next
    pulse succeeds with probability p_exc * F(k * period).  The yield is the
    inverse of the mean renewal interval.
    """
    if reservoir_tau == 0:
        return p_exc
    total, surv, k0, block = 0.0, 1.0, 1, 4096
    while True:
        k = np.arange(k0, k0 + block)
        q = p_exc * refill_probability(k * period, reservoir_tau, jitter)
        s = surv * np.cumprod(1.0 - q)
        total += surv + s[:-1].sum()
        surv = s[-1]
        k0 += block
        if surv < 1e-16 or k0 > 10_000_000:
            break
    return 1.0 / total


def saturation_ratio(multiplier, reservoir_tau, jitter=0.1, base_rate=80.0, p_exc=1.0):
    """Per-pulse yield at ``multiplier`` relative to the single-pulse yield."""
    p1 = 1e6 / base_rate
    return reservoir_yield(p1 / multiplier, reservoir_tau, jitter, p_exc) / reservoir_yield(p1, reservoir_tau, jitter, p_exc)


def calibrate_reservoir(target_ratio=0.25, multiplier=16, base_rate=80.0, jitter=0.1, p_exc=1.0):
    """Mean refill time [ps] that gives ``target_ratio`` at ``multiplier``.

    Raises
    ------
    CalibrationError
        If no refill time reaches the target (for example ``jitter = 1``,
        whose ratio only approaches 1/sqrt(multiplier) asymptotically).
    """
    if not 0 < target_ratio <= 1:
        raise DomainError("target_ratio must lie in (0, 1]")
    if target_ratio == 1:
        return 0.0

    def f(tau):
        return saturation_ratio(multiplier, tau, jitter, base_rate, p_exc) - target_ratio

    p1 = 1e6 / base_rate
    grid = p1 / multiplier * np.geomspace(0.05, 200.0, 160)
    vals = [f(t) for t in grid]
    lo = next((i for i in range(len(grid) - 1) if vals[i] > 0 >= vals[i + 1]), None)
    if lo is None:
        raise CalibrationError(
            f"ratio {target_ratio} at x{multiplier} unreachable; closest {min(vals) + target_ratio:.3f}")
    tau = brentq(f, grid[lo], grid[lo + 1], xtol=1e-9, rtol=1e-12)
    if abs(f(tau)) > 0.01:
        raise CalibrationError(f"calibration residual {f(tau):.3g} exceeds 0.01")
    return float(tau)


@njit(cache=True)
def _reservoir_scan(u, k0, last, period, tau, jitter, p_exc):
    n = u.size
    occ = np.zeros(n, dtype=np.bool_)
    delay = (1.0 - jitter) * tau
    scale = jitter * tau
    for i in range(n):
        if last < 0:
            p = 1.0
        else:
            dt = (k0 + i - last) * period
            p = 0.0 if dt <= delay else 1.0 - math.exp(-(dt - delay) / scale)
        if u[i] < p * p_exc:
            occ[i] = True
            last = k0 + i
    return occ, last


def _occupation(emitter, train, seed, threads):
    n = train.n_pulses
    chunks = range((n + CHUNK - 1) // CHUNK)
    p_exc = train.excitation_probability

    def draw(c):
        size = min(CHUNK, n - c * CHUNK)
        return rng_for(seed, _STAGE_RESERVOIR, c).random(size)

    u = _pmap(draw, chunks, threads)
    if emitter.reservoir_tau == 0:
        return [ui < p_exc for ui in u]
    out, last = [], -1
    for c, ui in zip(chunks, u):
        occ, last = _reservoir_scan(ui, c * CHUNK, last, train.period, emitter.reservoir_tau,
                                    emitter.reservoir_jitter, p_exc)
        out.append(occ)
    return out


def simulate_emission(emitter: EmitterConfig, train: PulseTrain, seed=0, threads=1) -> PhotonRecords:
    """Sample the emitted photons of a pulse train.

    Per pulse: the reservoir decides occupation; an occupied dot emits after
    an exponential delay (T1, or ``tau_slow`` with probability
    ``slow_fraction``); with ``reexcite_prob`` a second photon follows from a
    re-excitation inside the laser pulse; Poisson(``leak_rate``) laser photons
    are added with the laser pulse shape.  Every emitter photon of a pulse
    shares one Gaussian spectral-diffusion offset.
    """
    t1 = emitter.t1
    period = train.period
    sig_laser = train.pulse_fwhm * FWHM_TO_SIGMA
    sig_f = linewidth_to_sigma(emitter.gamma_inhom)
    occ_chunks = _occupation(emitter, train, seed, threads)

    def sample(c):
        occ = occ_chunks[c]
        size = occ.size
        rng = rng_for(seed, _STAGE_EMISSION, c)
        k = c * CHUNK + np.arange(size, dtype=np.int64)
        t_pulse = k * period
        # fixed draw order for every pulse of the chunk
        f_off = rng.normal(0.0, 1.0, size) * sig_f
        slow = rng.random(size) < emitter.slow_fraction
        d1 = rng.standard_exponential(size)
        rex = rng.random(size) < emitter.reexcite_prob
        g = np.abs(rng.normal(0.0, 1.0, size)) * sig_laser
        d2 = rng.standard_exponential(size)
        n_leak = rng.poisson(emitter.leak_rate, size) if emitter.leak_rate > 0 else np.zeros(size, np.int64)
        leak_jit = rng.normal(0.0, 1.0, int(n_leak.sum())) * sig_laser

        life1 = np.where(slow, emitter.tau_slow, t1)[occ]
        parts = [(t_pulse[occ] + d1[occ] * life1, k[occ], f_off[occ], ORIGIN_EMITTER, t_pulse[occ], life1)]
        second = occ & rex
        start2 = t_pulse[second] + g[second]
        parts.append((start2 + d2[second] * t1, k[second], f_off[second], ORIGIN_EMITTER, start2,
                      np.full(start2.size, t1)))
        if leak_jit.size:
            kl = np.repeat(k, n_leak)
            tl = kl * period + leak_jit
            parts.append((tl, kl, np.zeros(tl.size), ORIGIN_LEAK, tl, np.zeros(tl.size)))
        return parts

    parts = [p for chunk in _pmap(sample, range(len(occ_chunks)), threads) for p in chunk]
    t = np.concatenate([p[0] for p in parts])
    order = np.argsort(t, kind="stable")
    origin = np.concatenate([np.full(p[0].size, p[3], dtype=np.int8) for p in parts])
    return PhotonRecords(
        emission_time=t[order],
        pulse_index=np.concatenate([p[1] for p in parts])[order],
        frequency_offset=np.concatenate([p[2] for p in parts])[order],
        origin=origin[order],
        start_time=np.concatenate([p[4] for p in parts])[order],
        lifetime=np.concatenate([p[5] for p in parts])[order],
        period=period,
        n_pulses=train.n_pulses,
        seed=int(seed),
        config_hash=config_hash(emitter, train, int(seed)),
        n_occupied=int(sum(int(o.sum()) for o in occ_chunks)),
    )


def expected_g2_zero(p_emit, reexcite_prob, leak_rate):
    """g2(0) of independent pulses by enumerating the photon-number sources.

    A pulse carries E (1 with probability ``p_emit``) emitter photons, plus one
    re-excited photon with probability ``reexcite_prob`` given E = 1, plus
    Poisson(``leak_rate``) laser photons.  g2(0) = <N(N-1)> / <N>^2.
    """
    mean_e = p_emit * (1.0 + reexcite_prob)
    pairs_e = p_emit * 2.0 * reexcite_prob
    mean = mean_e + leak_rate
    pairs = pairs_e + 2.0 * mean_e * leak_rate + leak_rate ** 2
    return pairs / mean ** 2


def leak_for_g2(target_g2, p_emit=1.0, reexcite_prob=0.0):
    """Leak rate that, together with ``reexcite_prob``, produces ``target_g2``."""
    if expected_g2_zero(p_emit, reexcite_prob, 0.0) > target_g2:
        raise CalibrationError("re-excitation alone already exceeds the target g2(0)")
    return brentq(lambda mu: expected_g2_zero(p_emit, reexcite_prob, mu) - target_g2, 0.0, 10.0, xtol=1e-14)


# ---------------------------------------------------------------------------
# detection

@njit(cache=True)
def _dead_time_prune(tags, dead):
    out = np.empty_like(tags)
    m = 0
    last = 0
    for i in range(tags.size):
        t = tags[i]
        if m == 0 or t - last >= dead:
            out[m] = t
            m += 1
            last = t
    return out[:m]


def detect(photons: PhotonRecords, detector: DetectorModel, seed=0, channel=0, times=None) -> TimeTagStream:
    """Turn photons into detector clicks on the 1 ps grid.

    Applies efficiency thinning, Gaussian timing jitter, uniformly distributed
    dark counts and non-paralysable dead time (at least one grid step, so tags
    are strictly increasing).  ``times`` overrides the photon arrival times,
    which the interferometer uses after adding path delays.
    """
    t_in = photons.emission_time if times is None else np.asarray(times, dtype=float)
    rng = rng_for(seed, _STAGE_DETECT, channel)
    n_in = t_in.size
    keep = rng.random(n_in) < detector.efficiency
    t = t_in[keep]
    if detector.irf_sigma > 0:
        t = t + rng.normal(0.0, detector.irf_sigma, t.size)
    n_dark = int(rng.poisson(detector.dark_rate * photons.duration * 1e-12)) if detector.dark_rate > 0 else 0
    if n_dark:
        t = np.concatenate([t, rng.uniform(0.0, photons.duration, n_dark)])
    tags = np.rint(t).astype(np.int64)
    valid = tags >= 0
    n_clipped = int(tags.size - np.count_nonzero(valid))
    tags = np.sort(tags[valid])
    out = _dead_time_prune(tags, max(detector.dead_time, 1.0))
    accounting = {
        "n_input": int(n_in),
        "n_thinned": int(n_in - keep.sum()),
        "n_dark": n_dark,
        "n_clipped": n_clipped,
        "n_dead": int(tags.size - out.size),
        "n_detected": int(out.size),
    }
    return TimeTagStream(channel, out, int(photons.seed), photons.config_hash, photons.duration, 1, accounting)
