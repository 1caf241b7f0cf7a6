"""Optical bench: beamsplitter (HBT) and unbalanced Mach-Zehnder (HOM) routing.

In the HOM bench a photon of pulse p that took the long arm meets the
short-arm photon of pulse p + delay/period at the output splitter.  For each
such pair the four output outcomes are drawn from the two-photon detection
density of exponential wavepackets, including a frequency beat from the
spectral-diffusion offsets and an exp(-2|t1 - t2| / T2') pure-dephasing
damping of the interference term.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import expit, roots_laguerre

from .constants import linewidth_to_sigma
from .exceptions import DomainError, NumericalError
from .source import ORIGIN_EMITTER, DetectorModel, PhotonRecords, detect, rng_for

_STAGE_ROUTE = 3


@dataclass(frozen=True)
class BenchConfig:
    topology: str = "HBT"
    delay: float | None = None          # ps; None means one pulse period
    polarization_mode: str = "co"
    splitter_ratio: float = 0.5
    t2_pure_dephasing: float | None = None

    def __post_init__(self):
        if self.topology not in ("HBT", "HOM"):
            raise DomainError("topology must be 'HBT' or 'HOM'")
        if self.polarization_mode not in ("co", "cross"):
            raise DomainError("polarization_mode must be 'co' or 'cross'")
        if not 0 < self.splitter_ratio < 1:
            raise DomainError("splitter_ratio must lie in (0, 1)")
        if self.topology == "HOM" and self.delay is not None and not self.delay > 0:
            raise DomainError("HOM requires a positive delay")
        if self.t2_pure_dephasing is not None and not self.t2_pure_dephasing > 0:
            raise DomainError("t2_pure_dephasing must be positive or None")

    @property
    def chi(self) -> float:
        return 1.0 if self.polarization_mode == "co" else 0.0


def _pair(detectors):
    if isinstance(detectors, DetectorModel):
        return detectors, detectors
    d1, d2 = detectors
    return d1, d2


def route_hbt(photons: PhotonRecords, detectors, seed=0, splitter_ratio=0.5):
    """Split photons at a beamsplitter and detect both arms.

    Each photon goes to output 1 with probability ``splitter_ratio``.
    """
    d1, d2 = _pair(detectors)
    to1 = rng_for(seed, _STAGE_ROUTE, 0).random(len(photons)) < splitter_ratio
    t = photons.emission_time
    s1 = detect(photons, d1, seed, channel=0, times=t[to1])
    s2 = detect(photons, d2, seed, channel=1, times=t[~to1])
    return s1, s2


def _log_density(t, start, tau):
    # log of the one-sided exponential wavepacket intensity; -inf before start
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -(t - start) / tau - np.log(tau)
    return np.where(t >= start, out, -np.inf)


def _rank_in_group(keys):
    # keys sorted; position of each element within its run of equal keys
    n = keys.size
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    first = np.r_[True, keys[1:] != keys[:-1]]
    starts = np.flatnonzero(first)
    run = np.repeat(starts, np.diff(np.r_[starts, n]))
    return np.arange(n) - run


def pair_photons(pulse_long, t_long, pulse_short, t_short, shift):
    """Indices (i_long, i_short) of interfering pairs.

    Long-arm photons of pulse p pair with short-arm photons of pulse p + shift;
    several photons of one pulse are paired by arrival order.
    """
    ol = np.lexsort((t_long, pulse_long + shift))
    os_ = np.lexsort((t_short, pulse_short))
    kl, ks = pulse_long[ol] + shift, pulse_short[os_]
    rl, rs = _rank_in_group(kl), _rank_in_group(ks)
    width = int(max(rl.max(initial=0), rs.max(initial=0))) + 1
    _, il, is_ = np.intersect1d(kl * width + rl, ks * width + rs, assume_unique=True, return_indices=True)
    return ol[il], os_[is_]


def outcome_probabilities(la, lb, beat, chi, reflect):
    """Probabilities of the four output outcomes of an interfering pair.

    ``la`` / ``lb`` are log densities of the direct and exchanged time
    assignments, ``beat`` the cosine-and-damping factor.  Columns: (long
    photon at det 1, short at det 2), (short at det 1, long at det 2), both at
    det 1, both at det 2.  Rows sum to 1 and are non-negative.
    """
    trans = 1.0 - reflect
    w = expit(np.where(np.isneginf(lb), -np.inf, lb - la))
    i = chi * np.sqrt(w * (1.0 - w)) * beat
    rt = reflect * trans
    p = np.empty((w.size, 4))
    p[:, 0] = trans ** 2 * (1.0 - w) + reflect ** 2 * w - 2.0 * rt * i
    p[:, 1] = trans ** 2 * w + reflect ** 2 * (1.0 - w) - 2.0 * rt * i
    p[:, 2] = rt * (1.0 + 2.0 * i)
    p[:, 3] = p[:, 2]
    return np.clip(p, 0.0, None)


def route_hom(photons: PhotonRecords, bench: BenchConfig, detectors, seed=0):
    """Route photons through the unbalanced Mach-Zehnder and detect both outputs.

    Returns the two detector streams; their ``accounting`` also records the
    number of interfering pairs and classically routed photons.
    """
    if bench.topology != "HOM":
        raise DomainError("route_hom needs a HOM bench")
    d1, d2 = _pair(detectors)
    period = photons.period
    delay = period if bench.delay is None else float(bench.delay)
    shift_f = delay / period
    shift = int(round(shift_f))
    interfering = abs(shift_f - shift) < 1e-6 and shift > 0
    if not interfering:
        warnings.warn(f"delay {delay} ps is not a multiple of the {period} ps pulse period; no pairs meet",
                      stacklevel=2)

    rng = rng_for(seed, _STAGE_ROUTE, 1)
    n = len(photons)
    long_arm = rng.random(n) < 0.5
    arrival = photons.emission_time + np.where(long_arm, delay, 0.0)
    emitter = photons.origin == ORIGIN_EMITTER

    idx_l = np.flatnonzero(long_arm & emitter)
    idx_s = np.flatnonzero(~long_arm & emitter)
    if interfering:
        pl, ps = pair_photons(photons.pulse_index[idx_l], arrival[idx_l],
                              photons.pulse_index[idx_s], arrival[idx_s], shift)
        ia, ib = idx_l[pl], idx_s[ps]
    else:
        ia = ib = np.zeros(0, dtype=np.int64)

    r = bench.splitter_ratio
    u_pair = rng.random(ia.size)
    u_single = rng.random(n)

    ta, tb = arrival[ia], arrival[ib]
    sa, taua = photons.start_time[ia] + delay, photons.lifetime[ia]
    sb, taub = photons.start_time[ib], photons.lifetime[ib]
    la = _log_density(ta, sa, taua) + _log_density(tb, sb, taub)
    lb = _log_density(tb, sa, taua) + _log_density(ta, sb, taub)
    dt = ta - tb
    beat = np.cos(2e-3 * math.pi * (photons.frequency_offset[ia] - photons.frequency_offset[ib]) * dt)
    if bench.t2_pure_dephasing is not None:
        beat = beat * np.exp(-2.0 * np.abs(dt) / bench.t2_pure_dephasing)
    prob = outcome_probabilities(la, lb, beat, bench.chi, r)
    outcome = (u_pair[:, None] > np.cumsum(prob, axis=1)[:, :-1]).sum(axis=1)

    to_det1 = np.zeros(n, dtype=bool)
    paired = np.zeros(n, dtype=bool)
    paired[ia] = paired[ib] = True
    # classical routing: long-arm photons reach det 1 in transmission, short-arm ones in reflection
    single = ~paired
    to_det1[single] = u_single[single] < np.where(long_arm[single], 1.0 - r, r)
    to_det1[ia] = (outcome == 0) | (outcome == 2)
    to_det1[ib] = (outcome == 1) | (outcome == 2)

    s1 = detect(photons, d1, seed, channel=0, times=arrival[to_det1])
    s2 = detect(photons, d2, seed, channel=1, times=arrival[~to_det1])
    info = {"n_pairs": int(ia.size), "n_classical": int(single.sum()), "delay_ps": delay}
    s1.accounting.update(info)
    s2.accounting.update(info)
    return s1, s2


def pair_visibility_oracle(t1, gamma_inhom, t2_pure=None, tol=1e-7):
    """Integrated HOM visibility of two identical exponential photons by quadrature.

    V = 1 - A_co / A_cross, where the pair density is integrated over both
    detection times and the Gaussian frequency difference.  Sum time: Gauss-
    Laguerre; time difference: Fourier-weighted QUADPACK (QAWF); frequency
    difference: adaptive quadrature.  No closed forms are used.

    Raises
    ------
    NumericalError
        If an integral's error estimate exceeds ``tol`` (``achieved`` holds it).
    """
    if not t1 > 0:
        raise DomainError("t1 must be positive")
    if gamma_inhom < 0:
        raise DomainError("gamma_inhom must be non-negative")
    decay = 1.0 / t1 + (0.0 if t2_pure is None else 2.0 / t2_pure)
    # u = t1 + t2 >= |v|; substitute u = |v| + s and integrate s numerically
    nodes, weights = roots_laguerre(24)
    sum_integral = t1 * float(np.sum(weights))                       # int_0^inf exp(-s/t1) ds
    pref = 2.0 * 0.5 / t1 ** 2 * sum_integral                        # Jacobian 1/2, v -> |v| symmetry 2
    worst = [0.0]

    def interference(df):
        omega = 2e-3 * math.pi * df
        f = lambda v: pref * math.exp(-decay * v)
        if omega < decay:
            # QAWF is unreliable when the beat period is long compared with the decay
            val, err = quad(lambda v: f(v) * math.cos(omega * v), 0.0, math.inf, epsabs=tol * 1e-2)
        else:
            val, err = quad(f, 0.0, math.inf, weight="cos", wvar=omega, epsabs=tol * 1e-2)
        worst[0] = max(worst[0], err)
        return val

    # cross-polarised area: same integrand without the beat and damping
    a_cross, err_c = quad(lambda v: 2.0 * 0.5 / t1 ** 2 * sum_integral * math.exp(-v / t1), 0.0, math.inf)
    if gamma_inhom == 0:
        i_mean, err_o = interference(0.0), 0.0
    else:
        s = math.sqrt(2.0) * linewidth_to_sigma(gamma_inhom)
        gauss = lambda x: math.exp(-0.5 * (x / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
        i_mean, err_o = quad(lambda x: 2.0 * gauss(x) * interference(x), 0.0, math.inf,
                             epsabs=tol, limit=200)
    achieved = max(err_o, err_c, worst[0])
    if achieved > 1e3 * tol or not math.isfinite(i_mean):
        raise NumericalError(f"quadrature error estimate {achieved:.2e} exceeds tolerance", achieved=achieved)
    v = i_mean / a_cross
    return float(min(max(v, 0.0), 1.0))
