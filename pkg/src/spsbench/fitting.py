"""Bounded Levenberg-Marquardt fits: decays, Fano resonances and HOM dips.

Bounds are enforced by smooth reparametrisation (sine for two-sided bounds,
square root for one-sided ones), so the unconstrained LM solver can be used.
Every fit is repeated from three jittered starting points and the lowest
cost wins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.special import erfc, erfcx

from .correlate import CorrelationHistogram
from .exceptions import DipNotResolvableError, DomainError

XTOL, GTOL, MAX_NFEV, N_STARTS = 1e-10, 1e-8, 500, 3
POISSON_MIN_COUNTS = 10


@dataclass
class FitResult:
    model: str
    params: dict
    errors: dict
    residual_norm: float
    converged: bool
    message: str = ""
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.params[name]

    @property
    def reliable(self) -> bool:
        return self.converged

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": {k: float(v) for k, v in self.params.items()},
            "errors": {k: float(v) for k, v in self.errors.items()},
            "residual_norm": float(self.residual_norm),
            "converged": bool(self.converged),
            "reliable": bool(self.converged),
            "message": self.message,
            "metadata": self.metadata,
        }


def _failed(model, names, message, **meta) -> FitResult:
    nan = float("nan")
    return FitResult(model, {n: nan for n in names}, {n: nan for n in names}, nan, False, message, meta)


# ---------------------------------------------------------------------------
# bound transforms

class _Bounds:
    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)

    def to_internal(self, x):
        lo, hi, p = self.lo, self.hi, np.array(x, dtype=float)
        for i in range(p.size):
            l, h = lo[i], hi[i]
            if np.isfinite(l) and np.isfinite(h):
                p[i] = math.asin(np.clip(2.0 * (x[i] - l) / (h - l) - 1.0, -1.0, 1.0))
            elif np.isfinite(l):
                p[i] = math.sqrt(max((x[i] - l + 1.0) ** 2 - 1.0, 0.0))
            elif np.isfinite(h):
                p[i] = math.sqrt(max((h - x[i] + 1.0) ** 2 - 1.0, 0.0))
        # a start exactly on a bound has zero slope and would never move
        both = np.isfinite(lo) & np.isfinite(hi)
        one = np.isfinite(lo) ^ np.isfinite(hi)
        p[both] = np.clip(p[both], -0.5 * math.pi + 0.05, 0.5 * math.pi - 0.05)
        p[one] = np.maximum(p[one], 0.1)
        return p

    def to_external(self, p):
        lo, hi = self.lo, self.hi
        both = np.isfinite(lo) & np.isfinite(hi)
        low = np.isfinite(lo) & ~np.isfinite(hi)
        high = ~np.isfinite(lo) & np.isfinite(hi)
        x = np.array(p, dtype=float)
        x[both] = lo[both] + 0.5 * (hi[both] - lo[both]) * (np.sin(p[both]) + 1.0)
        x[low] = lo[low] - 1.0 + np.sqrt(p[low] ** 2 + 1.0)
        x[high] = hi[high] + 1.0 - np.sqrt(p[high] ** 2 + 1.0)
        return x

    def derivative(self, p):
        lo, hi = self.lo, self.hi
        both = np.isfinite(lo) & np.isfinite(hi)
        low = np.isfinite(lo) & ~np.isfinite(hi)
        high = ~np.isfinite(lo) & np.isfinite(hi)
        d = np.ones_like(p, dtype=float)
        d[both] = 0.5 * (hi[both] - lo[both]) * np.cos(p[both])
        d[low] = p[low] / np.sqrt(p[low] ** 2 + 1.0)
        d[high] = -p[high] / np.sqrt(p[high] ** 2 + 1.0)
        return d


def levenberg_marquardt(f, jac, x, y, p0, names, lo, hi, sigma=None, seed=0, starts=None):
    """Weighted least squares of ``f(x, p)`` to ``y`` within bounds.

    ``jac(x, p)`` returns d f / d p (shape n x k) or is None for finite
    differences.  ``sigma=None`` means uniform weights; the covariance is then
    scaled by the reduced chi-square.

    Returns
    -------
    (p, cov, cost, result)
    """
    bounds = _Bounds(lo, hi)
    w = 1.0 / (np.ones_like(y, dtype=float) if sigma is None else np.asarray(sigma, dtype=float))
    p0 = np.asarray(p0, dtype=float)
    if starts is None:
        rng = np.random.default_rng(seed)
        starts = [p0] + [p0 * (1.0 + 0.1 * rng.standard_normal(p0.size)) for _ in range(N_STARTS - 1)]

    def res(q):
        return (f(x, bounds.to_external(q)) - y) * w

    if jac is not None:
        def res_jac(q):
            return jac(x, bounds.to_external(q)) * w[:, None] * bounds.derivative(q)[None, :]
    else:
        res_jac = "2-point"

    best = None
    for s in starts:
        s = np.clip(s, np.nextafter(bounds.lo, np.inf), np.nextafter(bounds.hi, -np.inf))
        q0 = bounds.to_internal(s)
        try:
            r = least_squares(res, q0, jac=res_jac, method="lm", xtol=XTOL, gtol=GTOL, max_nfev=MAX_NFEV)
        except (ValueError, FloatingPointError):
            continue
        if np.isfinite(r.cost) and (best is None or r.cost < best.cost):
            best = r
    if best is None:
        return None, None, math.inf, None
    p = bounds.to_external(best.x)
    if jac is not None:
        j_ext = jac(x, p) * w[:, None]
    else:
        dq = bounds.derivative(best.x)
        j_ext = best.jac / np.where(dq == 0, np.nan, dq)[None, :]
    dof = max(y.size - p.size, 1)
    try:
        cov = np.linalg.inv(j_ext.T @ j_ext)
    except np.linalg.LinAlgError:
        cov = np.full((p.size, p.size), np.nan)
    if sigma is None:
        cov = cov * (2.0 * best.cost / dof)
    return p, cov, best.cost, best


def _poisson_sigma(counts):
    if np.all(counts >= POISSON_MIN_COUNTS):
        return np.sqrt(counts), "poisson"
    return None, "uniform"


def _assemble(model, names, p, cov, cost, r, meta) -> FitResult:
    if p is None:
        return _failed(model, names, "all starts failed", **meta)
    err = np.sqrt(np.clip(np.diag(cov), 0.0, None)) if np.all(np.isfinite(np.diag(cov))) else np.full(p.size, np.nan)
    ok = bool(r.status > 0 and np.all(np.isfinite(err)) and np.all(np.diag(cov) >= 0))
    meta = dict(meta, nfev=int(r.nfev), status=int(r.status))
    return FitResult(model, dict(zip(names, map(float, p))), dict(zip(names, map(float, err))),
                     float(math.sqrt(2.0 * cost)), ok, r.message, meta)


# ---------------------------------------------------------------------------
# decay models

def _exp_model(t, p):
    a, tau, bg = p
    return a * np.exp(-t / tau) + bg


def _exp_jac(t, p):
    a, tau, bg = p
    e = np.exp(-t / tau)
    return np.column_stack([e, a * e * t / tau ** 2, np.ones_like(t)])


def _biexp_model(t, p):
    a, tau1, tau2, frac, bg = p
    return a * ((1.0 - frac) / tau1 * np.exp(-t / tau1) + frac / tau2 * np.exp(-t / tau2)) + bg


def _biexp_jac(t, p):
    a, tau1, tau2, frac, bg = p
    e1, e2 = np.exp(-t / tau1), np.exp(-t / tau2)
    s = (1.0 - frac) / tau1 * e1 + frac / tau2 * e2
    d1 = a * (1.0 - frac) * e1 * (t / tau1 ** 3 - 1.0 / tau1 ** 2)
    d2 = a * frac * e2 * (t / tau2 ** 3 - 1.0 / tau2 ** 2)
    df = a * (e2 / tau2 - e1 / tau1)
    return np.column_stack([s, d1, d2, df, np.ones_like(t)])


def _irf_shape(t, tau, t0, sigma):
    """Gaussian(sigma) convolved with exp(-t / tau) for t >= 0, plus d/dtau and d/du.

    Uses 0.5 exp(-u^2 / 2 sigma^2) erfcx(z) for z >= 0 and the equivalent
    erfc form for z < 0, so neither overflows.
    """
    u = t - t0
    z = (sigma / tau - u / sigma) / math.sqrt(2.0)
    gauss = np.exp(-0.5 * (u / sigma) ** 2)
    dz_dtau = -sigma / (math.sqrt(2.0) * tau ** 2)
    dz_du = -1.0 / (math.sqrt(2.0) * sigma)
    g = np.empty_like(u)
    dg_dtau = np.empty_like(u)
    dg_du = np.empty_like(u)
    pos = z >= 0
    zp, gp = z[pos], gauss[pos]
    ex = erfcx(zp)
    dex = 2.0 * zp * ex - 2.0 / math.sqrt(math.pi)
    g[pos] = 0.5 * gp * ex
    dg_dtau[pos] = 0.5 * gp * dex * dz_dtau
    dg_du[pos] = 0.5 * (-u[pos] / sigma ** 2 * gp * ex + gp * dex * dz_du)
    neg = ~pos
    un = u[neg]
    h = 0.5 * np.exp(0.5 * (sigma / tau) ** 2 - un / tau) * erfc(z[neg])
    k = gauss[neg] / math.sqrt(math.pi)
    g[neg] = h
    dg_dtau[neg] = h * (un / tau ** 2 - sigma ** 2 / tau ** 3) - k * dz_dtau
    dg_du[neg] = -h / tau - k * dz_du
    return g, dg_dtau, dg_du


def _make_irf_model(sigma):
    def model(t, p):
        a, tau, t0, bg = p
        return a * _irf_shape(t, tau, t0, sigma)[0] + bg

    def jac(t, p):
        a, tau, t0, bg = p
        g, dtau, du = _irf_shape(t, tau, t0, sigma)
        return np.column_stack([g, a * dtau, -a * du, np.ones_like(t)])

    return model, jac


DECAY_PARAMS = {
    "exp": ("amplitude", "tau", "background"),
    "biexp": ("amplitude", "tau_fast", "tau_slow", "slow_fraction", "background"),
    "exp_irf": ("amplitude", "tau", "t0", "background"),
}


def decay_model(model, irf_sigma=None):
    """(function, jacobian) of a decay model; the time axis is relative to the fit origin."""
    if model == "exp":
        return _exp_model, _exp_jac
    if model == "biexp":
        return _biexp_model, _biexp_jac
    if model == "exp_irf":
        if not irf_sigma or irf_sigma <= 0:
            raise DomainError("exp_irf needs a positive irf_sigma")
        return _make_irf_model(irf_sigma)
    raise DomainError(f"unknown decay model {model!r}")


def _above_noise_floor(counts):
    med = float(np.median(counts))
    return int(np.count_nonzero(counts > med + 3.0 * math.sqrt(max(med, 1.0))))


def _tail_slope(t, y, bg):
    # rough decay constant from the log of the first e-fold(s)
    yy = np.clip(y - bg, 1e-12, None)
    peak = yy[0]
    k = np.flatnonzero(yy < peak / math.e)
    return float(t[k[0]] - t[0]) if k.size else float(t[-1] - t[0]) / 3.0


def fit_decay(times, counts, model="exp", irf_sigma=None, min_bins=30) -> FitResult:
    """Lifetime fit of a time-resolved histogram.

    ``exp`` and ``biexp`` fit the tail from the histogram maximum onward
    (amplitudes refer to that origin); ``exp_irf`` fits the full trace with a
    Gaussian-IRF reconvolution and also returns the onset ``t0``.
    """
    names = DECAY_PARAMS.get(model)
    if names is None:
        raise DomainError(f"unknown decay model {model!r}")
    t = np.asarray(times, dtype=float)
    y = np.asarray(counts, dtype=float)
    n_signal = _above_noise_floor(y)
    if n_signal < min_bins:
        return _failed(model, names, f"only {n_signal} bins above the noise floor (need {min_bins})",
                       bins_above_floor=n_signal)
    f, jac = decay_model(model, irf_sigma)
    bg0 = float(np.median(y[-max(y.size // 10, 1):]))
    ipk = int(np.argmax(y))
    if model == "exp_irf":
        tau0 = _tail_slope(t[ipk:], y[ipk:], bg0)
        tf, yf = t, y
        p0 = [max((y[ipk] - bg0) * 2.0, 1.0), max(tau0, 1e-3), t[ipk] - min(irf_sigma, tau0), max(bg0, 0.0)]
        lo, hi = [0.0, 1e-3, t[0] - 10 * irf_sigma, 0.0], [np.inf, np.inf, t[-1], np.inf]
        origin = 0.0
    else:
        origin = t[ipk]
        tf, yf = t[ipk:] - origin, y[ipk:]
        tau0 = _tail_slope(tf, yf, bg0)
        if model == "exp":
            p0 = [max(yf[0] - bg0, 1.0), max(tau0, 1e-3), max(bg0, 0.0)]
            lo, hi = [0.0, 1e-3, 0.0], [np.inf, np.inf, np.inf]
        else:
            late = _tail_slope(tf[tf > 3 * tau0], yf[tf > 3 * tau0], bg0) if np.sum(tf > 3 * tau0) > 5 else 5 * tau0
            p0 = [max(yf[0] - bg0, 1.0) * tau0, tau0, max(late, 2 * tau0), 0.2, max(bg0, 0.0)]
            lo, hi = [0.0, 1e-3, 1e-3, 0.0, 0.0], [np.inf, np.inf, np.inf, 1.0, np.inf]
    sigma, weighting = _poisson_sigma(yf)
    p, cov, cost, r = levenberg_marquardt(f, jac, tf, yf, p0, names, lo, hi, sigma)
    res = _assemble(model, names, p, cov, cost, r,
                    {"weighting": weighting, "time_origin": float(origin), "bins_above_floor": n_signal,
                     "irf_sigma": irf_sigma})
    if res.converged and model == "biexp" and res.params["tau_fast"] > res.params["tau_slow"]:
        # label swap keeps tau_fast < tau_slow
        pr, er = res.params, res.errors
        pr["tau_fast"], pr["tau_slow"] = pr["tau_slow"], pr["tau_fast"]
        er["tau_fast"], er["tau_slow"] = er["tau_slow"], er["tau_fast"]
        pr["slow_fraction"] = 1.0 - pr["slow_fraction"]
    return res


# ---------------------------------------------------------------------------
# Fano resonance

FANO_PARAMS = ("amplitude", "q", "lambda_c", "width", "offset")


def _fano(x, p):
    c, q, lc, w, off = p
    e = 2.0 * (x - lc) / w
    return c * (q + e) ** 2 / (1.0 + e * e) + off


def _lorentz(x, p):
    c, lc, w, off = p
    e = 2.0 * (x - lc) / w
    return c / (1.0 + e * e) + off


def _bic(rss, n, k):
    return n * math.log(max(rss, 1e-300) / n) + k * math.log(n)


def fit_fano(wavelength, reflectance, min_samples=50) -> FitResult:
    """Fano (or, by BIC, Lorentzian) fit of a reflectance spectrum.

    Reports ``lambda_c`` [nm], ``width`` [nm], ``Q = lambda_c / width`` and the
    asymmetry ``q`` (infinite for the Lorentzian submodel).
    """
    lam = np.asarray(wavelength, dtype=float)
    y = np.asarray(reflectance, dtype=float)
    if lam.size < min_samples:
        raise DomainError(f"fit_fano needs at least {min_samples} samples")
    order = np.argsort(lam)
    lam, y = lam[order], y[order]
    centre = float(np.mean(lam))
    x = lam - centre
    span = x[-1] - x[0]
    step = float(np.median(np.diff(x)))

    i_min, i_max = int(np.argmin(y)), int(np.argmax(y))
    base = float(np.median(y))
    depth_up, depth_dn = y[i_max] - base, base - y[i_min]
    fits = []

    # Fano starting points: the zero (eps = -q) and the peak (eps = 1/q) bracket lambda_c
    sep = abs(x[i_max] - x[i_min])
    width0 = max(sep, 5 * step)
    q0 = 1.0 if x[i_max] > x[i_min] else -1.0
    c0 = max(y[i_max] - y[i_min], 1e-12) / 2.0
    lc0 = 0.5 * (x[i_max] + x[i_min])
    lo = [0.0, -np.inf, x[0] - span, step, -np.inf]
    hi = [np.inf, np.inf, x[-1] + span, 10 * span, np.inf]
    starts = [np.array([c0, q, lc0, width0, y[i_min]]) for q in (q0, 2 * q0, 0.5 * q0)]
    p, cov, cost, r = levenberg_marquardt(_fano, None, x, y, starts[0], FANO_PARAMS, lo, hi, starts=starts)
    if p is not None:
        fits.append(("fano", FANO_PARAMS, p, cov, cost, r))

    # Lorentzian submodel: dip or peak, whichever departs more from the median
    dip = depth_dn >= depth_up
    i_ext = i_min if dip else i_max
    half = np.flatnonzero(np.abs(y - base) > 0.5 * abs(y[i_ext] - base))
    w_l = max(float(x[half[-1]] - x[half[0]]) if half.size else width0, 2 * step)
    l_names = ("amplitude", "lambda_c", "width", "offset")
    p_l0 = np.array([y[i_ext] - base, x[i_ext], w_l, base])
    lo_l = [-np.inf, x[0] - span, step, -np.inf]
    hi_l = [np.inf, x[-1] + span, 10 * span, np.inf]
    rng = np.random.default_rng(1)
    starts_l = [p_l0] + [p_l0 * np.r_[1, 1, 1 + 0.1 * rng.standard_normal(), 1] + np.r_[0, step * rng.standard_normal(), 0, 0]
                         for _ in range(N_STARTS - 1)]
    pl, covl, costl, rl = levenberg_marquardt(_lorentz, None, x, y, p_l0, l_names, lo_l, hi_l, starts=starts_l)
    if pl is not None:
        fits.append(("lorentz", l_names, pl, covl, costl, rl))
    if not fits:
        return _failed("fano", FANO_PARAMS + ("Q",), "all starts failed")

    n = y.size
    scored = sorted(fits, key=lambda f: _bic(2.0 * f[4], n, len(f[1])))
    kind, names, p, cov, cost, r = scored[0]
    res = _assemble("fano", names, p, cov, cost, r, {"submodel": kind, "axis_centre_nm": centre,
                                                     "bic": {f[0]: _bic(2.0 * f[4], n, len(f[1])) for f in fits}})
    if kind == "lorentz":
        res.params["q"], res.errors["q"] = math.inf, float("nan")
    res.params["lambda_c"] += centre
    lc, w = res.params["lambda_c"], res.params["width"]
    res.params["Q"] = lc / w
    res.errors["Q"] = res.params["Q"] * math.hypot(res.errors["lambda_c"] / lc, res.errors["width"] / w)
    if not lam[0] <= lc <= lam[-1]:
        res.converged = False
        res.message = "resonance outside the sampled span"
    return res


# ---------------------------------------------------------------------------
# HOM dip

DIP_PARAMS = ("shoulder", "visibility", "t2")
# counting noise can push the fitted dip depth past 1; a bound at exactly 1 stalls the fit
VISIBILITY_MAX = 1.5


def _dip(t, p):
    s, v, t2 = p
    return s * (1.0 - v * np.exp(-2.0 * np.abs(t) / t2))


def _dip_jac(t, p):
    s, v, t2 = p
    e = np.exp(-2.0 * np.abs(t) / t2)
    return np.column_stack([1.0 - v * e, -s * e, -s * v * e * 2.0 * np.abs(t) / t2 ** 2])


def _dip_env(t, p):
    s, v, t2, te = p
    return s * np.exp(-np.abs(t) / te) * (1.0 - v * np.exp(-2.0 * np.abs(t) / t2))


def t2_from_dip(co: CorrelationHistogram, cross: CorrelationHistogram | None = None, fit_range=1000.0,
                threshold=0.8) -> FitResult:
    """Coherence time from the co-polarised HOM centre dip.

    With a cross-polarised reference the ratio co / cross is fitted with
    shoulder (1 - V exp(-2|t| / T2)).  Without it the co histogram is fitted
    with an extra exp(-|t| / tau_env) envelope for the wavepacket overlap.

    Raises
    ------
    DipNotResolvableError
        If the centre is not below ``threshold`` times the shoulder.
    """
    t = co.centers
    sel = np.abs(t) <= fit_range
    tc, yc = t[sel], co.counts[sel].astype(float)
    core = np.abs(tc) <= max(co.bin_width, 0.05 * fit_range)
    if cross is not None:
        if cross.bin_width != co.bin_width or cross.range != co.range:
            raise ValueError("co and cross histograms must share binning")
        yx = cross.counts[sel].astype(float)
        good = yx > 0
        tc, yc, yx, core = tc[good], yc[good], yx[good], core[good]
        ratio = yc / yx
        outer = np.abs(tc) >= 0.5 * fit_range
        shoulder = float(np.sum(yc[outer]) / max(np.sum(yx[outer]), 1.0))
        centre = float(np.sum(yc[core]) / max(np.sum(yx[core]), 1.0))
        if shoulder <= 0:
            raise DipNotResolvableError("no co-polarised counts outside the dip window")
        if not centre < threshold * shoulder:
            raise DipNotResolvableError(f"centre/shoulder = {centre / shoulder:.2f}; no resolvable dip")
        hw = _half_recovery(tc, ratio, shoulder, centre)
        p0 = [shoulder, min(max(1.0 - centre / shoulder, 0.05), 1.0), max(2.0 * hw / math.log(2.0), co.bin_width)]
        # sparse bins bias a ratio fit; keep well-populated ones and weight by the model ratio
        dense = yx >= POISSON_MIN_COUNTS
        if dense.sum() < len(DIP_PARAMS) + 2:
            raise DipNotResolvableError(f"only {int(dense.sum())} bins hold >= {POISSON_MIN_COUNTS} reference counts")
        tc, ratio, yx = tc[dense], ratio[dense], yx[dense]
        lo, hi = [0.0, 0.0, 1e-3], [np.inf, VISIBILITY_MAX, np.inf]
        expected = ratio
        for _ in range(2):
            sigma = np.sqrt(np.maximum(expected, 1.0 / yx) * (1.0 + expected) / yx)
            p, cov, cost, r = levenberg_marquardt(_dip, _dip_jac, tc, ratio, p0, DIP_PARAMS, lo, hi, sigma)
            if p is None:
                break
            p0, expected = p, _dip(tc, p)
        return _assemble("dip_exp", DIP_PARAMS, p, cov, cost, r,
                         {"reference": "cross", "fit_range_ps": fit_range, "bins_fitted": int(tc.size)})

    smooth = np.convolve(yc, np.ones(5) / 5.0, mode="same")
    shoulder = float(smooth.max())
    centre = float(np.mean(yc[core]))
    if not centre < threshold * shoulder:
        raise DipNotResolvableError(f"centre/shoulder = {centre / max(shoulder, 1e-300):.2f}; no resolvable dip")
    names = DIP_PARAMS + ("tau_env",)
    t_pk = abs(float(tc[int(np.argmax(smooth))]))
    env0 = max(float(np.sum(yc * np.abs(tc)) / max(np.sum(yc), 1.0)), co.bin_width)
    p0 = [shoulder * 1.5, min(max(1.0 - centre / shoulder, 0.05), 1.0), max(2.0 * t_pk, co.bin_width), env0]
    lo, hi = [0.0, 0.0, 1e-3, 1e-3], [np.inf, 1.0, np.inf, np.inf]
    sigma, weighting = _poisson_sigma(yc)
    p, cov, cost, r = levenberg_marquardt(_dip_env, None, tc, yc, p0, names, lo, hi, sigma)
    return _assemble("dip_exp", names, p, cov, cost, r,
                     {"reference": "none", "weighting": weighting, "fit_range_ps": fit_range})


def _half_recovery(t, y, shoulder, centre):
    # |t| where the dip has recovered half-way to the shoulder
    target = 0.5 * (shoulder + centre)
    order = np.argsort(np.abs(t))
    at, yy = np.abs(t[order]), y[order]
    k = np.flatnonzero(yy >= target)
    return float(at[k[0]]) if k.size else float(at[-1]) / 2.0
