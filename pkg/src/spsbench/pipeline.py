"""Run configuration, measurement pipelines and figure presets."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.optimize import brentq

from .constants import constants_block
from .correlate import cross_correlate, decay_histogram, g2_zero, hom_visibility
from .exceptions import ConfigError, DomainError
from .fitting import fit_decay, fit_fano
from .interferometer import BenchConfig, pair_visibility_oracle, route_hbt, route_hom
from .physics import (CavityModel, EmitterConfig, calibrate_linewidth, cavity_mode_wavelength,
                      dephasing_coherence_time, purcell_vs_detuning,
                      visibility_inhomogeneous, visibility_temperature)
from .source import (DetectorModel, PulseTrain, calibrate_reservoir, detect, expected_g2_zero, leak_for_g2,
                     saturation_ratio, simulate_emission)

VERSION = "0.1.0"
SECTIONS = {"emitter": EmitterConfig, "cavity": CavityModel, "train": PulseTrain,
            "bench": BenchConfig, "detector": DetectorModel}


@dataclass(frozen=True)
class RunConfig:
    emitter: EmitterConfig = field(default_factory=EmitterConfig)
    cavity: CavityModel = field(default_factory=CavityModel)
    train: PulseTrain = field(default_factory=PulseTrain)
    bench: BenchConfig = field(default_factory=BenchConfig)
    detector: DetectorModel = field(default_factory=DetectorModel)
    seed: int = 0
    output_dir: str = "out"

    @classmethod
    def from_dict(cls, doc) -> "RunConfig":
        """Build a config from nested mappings, naming the field at fault on error."""
        if not isinstance(doc, dict):
            raise ConfigError("config: top level must be a mapping")
        unknown = set(doc) - set(SECTIONS) - {"seed", "output_dir"}
        if unknown:
            raise ConfigError(f"config: unknown section(s) {sorted(unknown)}")
        kw = {}
        for name, typ in SECTIONS.items():
            sec = doc.get(name) or {}
            if not isinstance(sec, dict):
                raise ConfigError(f"{name}: must be a mapping")
            allowed = {f.name: f for f in fields(typ)}
            for key, val in sec.items():
                if key not in allowed:
                    raise ConfigError(f"{name}.{key}: unknown field")
                if val is not None and not isinstance(val, (int, float, str, bool)):
                    raise ConfigError(f"{name}.{key}: expected a scalar, got {type(val).__name__}")
            try:
                kw[name] = typ(**sec)
            except (DomainError, TypeError, ValueError) as exc:
                raise ConfigError(f"{name}: {exc}") from None
        seed = doc.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
            raise ConfigError("seed: must be an unsigned 64-bit integer")
        return cls(seed=seed, output_dir=str(doc.get("output_dir", "out")), **kw)

    def to_dict(self) -> dict:
        return {k: (asdict(v) if hasattr(v, "__dataclass_fields__") else v) for k, v in
                ((f.name, getattr(self, f.name)) for f in fields(self))}

    def config_hash(self) -> str:
        """SHA-256 of the sorted-key JSON of everything except ``output_dir``."""
        doc = self.to_dict()
        doc.pop("output_dir")
        return canonical_hash(doc)


def canonical_hash(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def correlation_range(period, n_peaks=3):
    """Whole-ps histogram half-range covering ``n_peaks`` side windows."""
    return int(math.ceil((n_peaks + 0.5) * period))


# ---------------------------------------------------------------------------
# measurements

def measure_g2(emitter, train, detector, seed, threads=1, bin_width=10):
    photons = simulate_emission(emitter, train, seed, threads)
    a, b = route_hbt(photons, detector, seed)
    hist = cross_correlate(a, b, bin_width, correlation_range(train.period), threads=threads)
    g2, err = g2_zero(hist, train.period)
    return {"g2": g2, "g2_err": err, "counts": len(a) + len(b), "duration_ps": photons.duration,
            "n_occupied": photons.n_occupied, "hist": hist, "photons": photons}


def measure_hom(emitter, train, detector, seed, t2_pure=None, threads=1, bin_width=10,
                g2=0.0, b_factor=2.0, photons=None):
    """Co- and cross-polarised HOM runs on one photon ensemble.

    Both runs share the photons and the routing random numbers, so the
    difference between them isolates the interference term.
    """
    if photons is None:
        photons = simulate_emission(emitter, train, seed, threads)
    rng_ps = correlation_range(train.period)
    hists = {}
    for mode in ("co", "cross"):
        bench = BenchConfig("HOM", None, mode, 0.5, t2_pure)
        s1, s2 = route_hom(photons, bench, detector, seed)
        hists[mode] = cross_correlate(s1, s2, bin_width, rng_ps, threads=threads)
        n_pairs = s1.accounting["n_pairs"]
    report = hom_visibility(hists["co"], hists["cross"], train.period, g2, b_factor)
    return {"report": report, "co": hists["co"], "cross": hists["cross"], "n_pairs": n_pairs}


def rate_sweep(emitter, detector, multipliers=(1, 2, 4, 8, 16), base_rate=80.0, n_pulses=100_000,
               pulse_fwhm=8.0, pulse_area=1.0, seed=0, threads=1, quantum=(), t2_pure=None, b_factor=1.0):
    """Count rate (and optionally g2(0), V_HOM) versus repetition-rate multiplier.

    The run duration is the same at every multiplier.  ``normalized_rate`` is
    the detected rate divided by ``multiplier`` times the x1 rate, so linear
    scaling gives 1.  ``quantum`` lists the multipliers at which g2(0) and the
    HOM visibility are measured as well.
    """
    rows, rate1 = [], None
    for m in multipliers:
        train = PulseTrain(base_rate, m, pulse_fwhm, pulse_area, n_pulses * m)
        g = measure_g2(emitter, train, detector, seed, threads)
        rate = g["counts"] / (g["duration_ps"] * 1e-12)
        if rate1 is None:
            rate1 = rate / multipliers[0]
        row = {
            "multiplier": m,
            "f_MHz": train.rate,
            "count_rate_Hz": rate,
            "normalized_rate": rate / (m * rate1),
            "normalized_rate_err": math.sqrt(1.0 / g["counts"] + 1.0 / (rate1 * g["duration_ps"] * 1e-12)) * rate / (m * rate1),
            "analytic_ratio": saturation_ratio(m, emitter.reservoir_tau, emitter.reservoir_jitter, base_rate,
                                               train.excitation_probability),
            "g2": g["g2"], "g2_err": g["g2_err"],
            "v_raw": float("nan"), "v_raw_err": float("nan"), "v_corr": float("nan"),
        }
        if m in quantum:
            h = measure_hom(emitter, train, detector, seed, t2_pure, threads, g2=g["g2"], b_factor=b_factor,
                            photons=g["photons"])
            rep = h["report"]
            row.update(v_raw=rep.v_raw, v_raw_err=rep.v_raw_err, v_corr=rep.v_corrected)
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# reference configurations

def quasi_resonant_emitter(target_v=0.51, target_g2=0.039, t1=54.0):
    """p-shell emitter at 80 MHz: Gamma from the corrected visibility, leak from g2(0)."""
    gamma = calibrate_linewidth(t1, target_v)
    return EmitterConfig(t1_free=t1, gamma_inhom=gamma, leak_rate=leak_for_g2(target_g2, 1.0, 0.0))


def resonant_emitter(target_g2=0.086, reexcite_share=0.5, t1=41.7, gamma=0.0):
    """s-shell pi-pulse emitter whose g2(0) splits between re-excitation and laser leak.

    ``reexcite_share`` is the fraction of the target g2(0) assigned to
    re-excitation (2r / (1 + r)^2 for probability r); the leak supplies the rest.
    """
    r = brentq(lambda r: expected_g2_zero(1.0, r, 0.0) - reexcite_share * target_g2, 0.0, 1.0) if reexcite_share > 0 else 0.0
    return EmitterConfig(t1_free=t1, gamma_inhom=gamma, reexcite_prob=r, leak_rate=leak_for_g2(target_g2, 1.0, r))


# ---------------------------------------------------------------------------
# presets

@dataclass
class PresetResult:
    name: str
    seed: int
    parameters: dict
    tables: dict                 # table name -> (columns, rows)
    checks: list                 # dicts: name, value, target, passed
    summary: dict = field(default_factory=dict)

    def document(self) -> dict:
        return {
            "preset": self.name,
            "seed": self.seed,
            "version": VERSION,
            "config_hash": self.config_hash(),
            "constants": constants_block(),
            "parameters": self.parameters,
            "checks": self.checks,
            "summary": self.summary,
        }

    def config_hash(self) -> str:
        return canonical_hash({"preset": self.name, "seed": self.seed, "parameters": self.parameters})


def _check(name, value, target, passed):
    return {"name": name, "value": float(value), "target": target, "passed": bool(passed)}


def preset_fig4a(seed=4001, threads=1, n_pulses=200_000):
    """V_HOM versus T1 for the p-shell and s-shell linewidths, analytic and Monte Carlo."""
    gamma_p = calibrate_linewidth(30.0, 0.76)
    gamma_s = calibrate_linewidth(41.7, 0.96)
    t1_grid = np.geomspace(10.0, 700.0, 60)
    curve = [(float(t), float(visibility_inhomogeneous(t, gamma_p)), float(visibility_inhomogeneous(t, gamma_s)))
             for t in t1_grid]
    mc_rows, checks = [], []
    for i, (label, gamma, t1) in enumerate([("p-shell", gamma_p, 26.9), ("p-shell", gamma_p, 54.0),
                                            ("p-shell", gamma_p, 120.0), ("s-shell", gamma_s, 41.7)]):
        em = EmitterConfig(t1_free=t1, gamma_inhom=gamma)
        train = PulseTrain(80.0, 1, 2.0, 1.0, n_pulses)
        h = measure_hom(em, train, DetectorModel(), seed + i, threads=threads)
        rep = h["report"]
        v_th = visibility_inhomogeneous(t1, gamma)
        ok = abs(rep.v_raw - v_th) <= max(4 * rep.v_raw_err, 0.02)
        mc_rows.append((label, t1, gamma, v_th, rep.v_raw, rep.v_raw_err, h["n_pairs"]))
        checks.append(_check(f"{label} T1={t1} MC vs analytic", rep.v_raw, f"{v_th:.4f} +- max(4 sigma, 0.02)", ok))
    checks.append(_check("p-shell Gamma in [2.5, 6] GHz", gamma_p, "[2.5, 6]", 2.5 <= gamma_p <= 6.0))
    return PresetResult(
        "fig4a", seed, {"gamma_p_GHz": gamma_p, "gamma_s_GHz": gamma_s, "n_pulses": n_pulses},
        {"curve": (("t1_ps", "v_pshell", "v_sshell"), curve),
         "mc": (("excitation", "t1_ps", "gamma_GHz", "v_analytic", "v_mc", "v_mc_err", "n_pairs"), mc_rows)},
        checks)


FIG4D_PURCELL = (1.7, 12.6, 25.0)


def preset_fig4d(seed=4004, threads=1, n_pulses=120_000):
    """V_HOM versus temperature for three Purcell factors.

    The analytic curves use one spectral-diffusion linewidth, calibrated on
    V(30 ps) = 0.76.  Monte Carlo points apply the equivalent pure-dephasing
    time and are compared with the quadrature oracle for that damping.
    """
    gamma = calibrate_linewidth(30.0, 0.76)
    temps = np.arange(5.0, 45.0 + 1e-9, 1.0)
    emitters = {fp: EmitterConfig(purcell_factor=fp, gamma_inhom=gamma) for fp in FIG4D_PURCELL}
    curve = [(float(t),) + tuple(float(visibility_temperature(emitters[fp], t)) for fp in FIG4D_PURCELL)
             for t in temps]
    arr = np.array([c[1:] for c in curve])
    ordered = bool(np.all(np.diff(arr, axis=1) > 0))
    v30 = float(visibility_temperature(emitters[25.0], 30.0))
    checks = [_check("V_corr(30 K, F_P=25) > 0.60", v30, "> 0.60", v30 > 0.60),
              _check("F_P curves strictly ordered", float(ordered), "all temperatures", ordered)]
    mc_rows = []
    for i, fp in enumerate(FIG4D_PURCELL):
        for j, temp in enumerate((5.0, 30.0, 45.0)):
            em = EmitterConfig(purcell_factor=fp, gamma_inhom=gamma, temperature=temp)
            t2 = dephasing_coherence_time(em)
            train = PulseTrain(80.0, 1, 2.0, 1.0, n_pulses)
            h = measure_hom(em, train, DetectorModel(), seed + 10 * i + j, t2, threads)
            rep = h["report"]
            v_or = pair_visibility_oracle(em.t1, gamma, t2)
            ok = abs(rep.v_raw - v_or) <= max(4 * rep.v_raw_err, 0.02)
            mc_rows.append((fp, temp, em.t1, t2, float(visibility_temperature(em)), v_or, rep.v_raw,
                            rep.v_raw_err, rep.v_corrected))
            checks.append(_check(f"F_P={fp} T={temp} K MC vs oracle", rep.v_raw, f"{v_or:.4f}", ok))
    return PresetResult(
        "fig4d", seed, {"gamma_GHz": gamma, "alpha_ueV": 3.0, "e_phonon_meV": 1.0,
                        "purcell": list(FIG4D_PURCELL), "n_pulses": n_pulses},
        {"curve": (("temperature_K",) + tuple(f"v_fp{fp:g}" for fp in FIG4D_PURCELL), curve),
         "mc": (("purcell", "temperature_K", "t1_ps", "t2_pure_ps", "v_analytic", "v_oracle", "v_mc",
                 "v_mc_err", "v_mc_corr"), mc_rows)},
        checks)


PSHELL_SATURATION = 0.95


def preset_fig5f(seed=5006, threads=1, n_pulses=60_000):
    """Normalised count rate versus pulse multiplication, s-shell and p-shell-like.

    The s-shell reservoir is calibrated to 25 % at x16; the p-shell-like one
    saturates weakly.  g2(0) and V_HOM of the p-shell-like source are
    measured at x1 and x16.
    """
    tau_s = calibrate_reservoir(0.25, 16)
    tau_p = calibrate_reservoir(PSHELL_SATURATION, 16)
    analytic = [(m, 80.0 * m, saturation_ratio(m, tau_s), saturation_ratio(m, tau_p)) for m in range(1, 17)]
    det = DetectorModel()
    s_em = EmitterConfig(t1_free=45.0, reservoir_tau=tau_s)
    s_rows = rate_sweep(s_em, det, n_pulses=n_pulses, pulse_fwhm=8.0, seed=seed, threads=threads)
    p_em = EmitterConfig(t1_free=54.0, gamma_inhom=calibrate_linewidth(54.0, 0.51), reservoir_tau=tau_p,
                         leak_rate=leak_for_g2(0.039, 1.0, 0.0))
    p_rows = rate_sweep(p_em, det, n_pulses=n_pulses * 2, pulse_fwhm=2.0, seed=seed + 1, threads=threads,
                        quantum=(1, 16), b_factor=2.0)
    ratios = [r["normalized_rate"] for r in s_rows]
    r16, r4 = ratios[-1], ratios[2]
    monotone = all(b <= a + 3 * r["normalized_rate_err"] for a, b, r in zip(ratios, ratios[1:], s_rows[1:]))
    p1, p16 = p_rows[0], p_rows[-1]
    dg2 = abs(p16["g2"] - p1["g2"]) / math.hypot(p16["g2_err"], p1["g2_err"])
    dv = abs(p16["v_raw"] - p1["v_raw"]) / math.hypot(p16["v_raw_err"], p1["v_raw_err"])
    checks = [
        _check("s-shell ratio x16", r16, "0.25 +- 0.05", abs(r16 - 0.25) <= 0.05),
        _check("s-shell ratio x4", r4, ">= 0.90", r4 >= 0.90),
        _check("s-shell ratios monotone", float(monotone), "non-increasing within 3 sigma", monotone),
        _check("p-shell ratio x16", p16["normalized_rate"], ">= 0.8", p16["normalized_rate"] >= 0.8),
        _check("p-shell g2 x16 vs x1 [sigma]", dg2, "<= 3", dg2 <= 3.0),
        _check("p-shell V x16 vs x1 [sigma]", dv, "<= 3", dv <= 3.0),
    ]
    cols = ("multiplier", "f_MHz", "count_rate_Hz", "normalized_rate", "normalized_rate_err", "analytic_ratio",
            "g2", "g2_err", "v_raw", "v_raw_err", "v_corr")
    return PresetResult(
        "fig5f", seed, {"reservoir_tau_sshell_ps": tau_s, "reservoir_tau_pshell_ps": tau_p,
                        "reservoir_jitter": s_em.reservoir_jitter, "n_pulses_x1": n_pulses},
        {"analytic": (("multiplier", "f_MHz", "ratio_sshell", "ratio_pshell"), analytic),
         "mc_sshell": (cols, [tuple(r[c] for c in cols) for r in s_rows]),
         "mc_pshell": (cols, [tuple(r[c] for c in cols) for r in p_rows])},
        checks)


FIG2E_DELTA_R = (-20.0, -10.0, 0.0, 10.0, 20.0, 30.0)


def synthetic_fano_spectrum(lambda_c, q_factor=250.0, q=1.0, noise=0.01, n=200, span=12.0, seed=0):
    """Reflectance samples of a Fano resonance with relative Gaussian noise."""
    rng = np.random.default_rng(seed)
    lam = np.linspace(lambda_c - span, lambda_c + span, n)
    w = lambda_c / q_factor
    e = 2.0 * (lam - lambda_c) / w
    r = 0.2 * (q + e) ** 2 / (1.0 + e * e) + 0.1
    return lam, r * (1.0 + noise * rng.standard_normal(n))


def preset_fig2e(seed=2005, threads=1, n_pulses=100_000, derating=0.5):
    """Purcell factor versus QD-cavity detuning, plus fitted tuning series.

    Analytic curves for each disc-radius change; Monte Carlo points recover
    F_P from reconvolution lifetime fits; Fano fits of synthetic spectra
    recover the cavity tuning slope.
    """
    base = CavityModel()
    det_grid = np.linspace(-15.0, 15.0, 121)
    curve = [(float(d), float(purcell_vs_detuning(base, d)), float(purcell_vs_detuning(base, d, derating)))
             for d in det_grid]
    tuning_rows, checks = [], []
    for k, dr in enumerate(FIG2E_DELTA_R):
        cav = CavityModel(delta_r=dr)
        lam_c = cavity_mode_wavelength(cav)
        lam, refl = synthetic_fano_spectrum(lam_c, cav.q_factor, seed=seed + k)
        fit = fit_fano(lam, refl)
        tuning_rows.append((dr, lam_c, fit["lambda_c"], fit.errors["lambda_c"], fit["Q"], fit["q"]))
    slope = float(np.polyfit([r[0] for r in tuning_rows], [r[2] for r in tuning_rows], 1)[0])
    checks.append(_check("tuning slope [nm/nm]", slope, "1.3 +- 0.05", abs(slope - 1.3) <= 0.05))

    mc_rows = []
    irf = 10.0
    for i, d in enumerate((0.0, 1.0, 2.0, 4.0)):
        fp = float(purcell_vs_detuning(base, d))
        em = EmitterConfig(purcell_factor=fp)
        train = PulseTrain(80.0, 1, 2.0, 1.0, n_pulses)
        photons = simulate_emission(em, train, seed + 100 + i, threads)
        tags = detect(photons, DetectorModel(irf_sigma=irf), seed + 100 + i).tags
        t, c = decay_histogram(tags, train.period, 2.0, t_max=min(train.period, 40 * em.t1 + 200.0), offset=-100.0)
        fit = fit_decay(t, c, "exp_irf", irf_sigma=irf)
        fp_fit = em.t1_free / fit["tau"]
        ok = fit.converged and abs(fp_fit / fp - 1.0) <= 0.05
        mc_rows.append((d, fp, em.t1, fit["tau"], fit.errors["tau"], fp_fit))
        checks.append(_check(f"detuning {d} nm F_P recovery", fp_fit, f"{fp:.3f} +- 5%", ok))
    return PresetResult(
        "fig2e", seed, {"cavity": asdict(base), "derating": derating, "irf_sigma_ps": irf, "n_pulses": n_pulses},
        {"curve": (("detuning_nm", "purcell", "purcell_derated"), curve),
         "tuning": (("delta_r_nm", "lambda_c_true_nm", "lambda_c_fit_nm", "lambda_c_err_nm", "Q_fit", "q_fit"),
                    tuning_rows),
         "mc": (("detuning_nm", "purcell", "t1_true_ps", "t1_fit_ps", "t1_fit_err_ps", "purcell_fit"), mc_rows)},
        checks, {"tuning_slope": slope})


PRESETS = {"fig4a": preset_fig4a, "fig4d": preset_fig4d, "fig5f": preset_fig5f, "fig2e": preset_fig2e}
