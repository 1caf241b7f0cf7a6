"""Closed-form emitter and cavity physics.

Purcell scaling, the parametric cavity, the spectral-diffusion limited
two-photon visibility and its phonon-dephasing extension.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfcx

from .constants import HBAR_UEV_PS, KB_MEV_PER_K, LINEWIDTH_LOG
from .exceptions import DomainError


@dataclass(frozen=True)
class EmitterConfig:
    """Physical parameters of the quantum-dot emitter.

    Times in ps, linewidth in GHz, ``alpha`` in ueV, ``e_phonon`` in meV,
    ``temperature`` in K.  ``reservoir_tau`` is the mean hole-refill time;
    ``reservoir_jitter`` is the exponential share of it (1.0 gives a purely
    exponential refill, small values a sharp refill threshold).
    """

    t1_free: float = 680.0
    purcell_factor: float = 1.0
    gamma_inhom: float = 0.0
    alpha: float = 3.0
    e_phonon: float = 1.0
    temperature: float = 4.0
    slow_fraction: float = 0.0
    tau_slow: float = 400.0
    reservoir_tau: float = 0.0
    reservoir_jitter: float = 0.1
    reexcite_prob: float = 0.0
    leak_rate: float = 0.0

    def __post_init__(self):
        if not self.t1_free > 0:
            raise DomainError("t1_free must be positive")
        if self.purcell_factor <= 0:
            raise DomainError("purcell_factor must be positive")
        if self.gamma_inhom < 0 or self.alpha < 0 or self.temperature < 0:
            raise DomainError("gamma_inhom, alpha and temperature must be non-negative")
        if not self.e_phonon > 0:
            raise DomainError("e_phonon must be positive")
        if not 0.0 <= self.slow_fraction <= 1.0:
            raise DomainError("slow_fraction must lie in [0, 1]")
        if self.slow_fraction > 0 and not self.tau_slow > self.t1:
            raise DomainError("tau_slow must exceed the radiative lifetime")
        if self.reservoir_tau < 0 or not 0.0 < self.reservoir_jitter <= 1.0:
            raise DomainError("reservoir_tau >= 0 and 0 < reservoir_jitter <= 1 required")
        if not 0.0 <= self.reexcite_prob <= 1.0:
            raise DomainError("reexcite_prob must lie in [0, 1]")
        if self.leak_rate < 0:
            raise DomainError("leak_rate must be non-negative")

    @property
    def t1(self) -> float:
        """Radiative lifetime inside the cavity [ps]."""
        return purcell_lifetime(self.t1_free, self.purcell_factor)


@dataclass(frozen=True)
class CavityModel:
    lambda_c0: float = 920.0
    delta_r: float = 0.0
    tuning_slope: float = 1.3
    q_factor: float = 250.0
    fp_max: float = 30.0
    mode_splitting: float = 0.0

    def __post_init__(self):
        if not self.q_factor > 0:
            raise DomainError("q_factor must be positive")
        if self.fp_max < 1:
            raise DomainError("fp_max must be >= 1")
        if not self.tuning_slope > 0:
            raise DomainError("tuning_slope must be positive")
        if self.mode_splitting < 0:
            raise DomainError("mode_splitting must be non-negative")


@dataclass(frozen=True)
class VisibilityReport:
    v_raw: float
    g2_zero: float
    b_factor: float
    v_corrected: float
    v_raw_err: float = float("nan")


def bose_einstein(e, temperature):
    """Phonon occupation n(E) = 1 / (exp(E / kB T) - 1); zero at T = 0.

    ``e`` in meV, ``temperature`` in K.  Accepts arrays for ``temperature``.
    """
    if np.any(np.asarray(e) <= 0):
        raise DomainError("phonon energy must be positive")
    t = np.asarray(temperature, dtype=float)
    if np.any(t < 0):
        raise DomainError("temperature must be non-negative")
    with np.errstate(divide="ignore", over="ignore"):
        x = np.where(t > 0, np.asarray(e, dtype=float) / (KB_MEV_PER_K * np.where(t > 0, t, 1.0)), np.inf)
        n = np.where(np.isinf(x), 0.0, 1.0 / np.expm1(x))
    return float(n) if n.ndim == 0 else n


def phonon_dephasing_rate(config: EmitterConfig, temperature=None):
    """Zero-phonon-line broadening alpha * n(E) * (n(E) + 1) [ueV]."""
    t = config.temperature if temperature is None else temperature
    n = bose_einstein(config.e_phonon, t)
    return config.alpha * n * (n + 1.0)


def fourier_linewidth(t1):
    """Fourier-limited linewidth hbar / T1 [ueV] for T1 in ps."""
    t1 = np.asarray(t1, dtype=float)
    if np.any(t1 <= 0):
        raise DomainError("t1 must be positive")
    g = HBAR_UEV_PS / t1
    return float(g) if g.ndim == 0 else g


def fourier_limited_t2(t1, convention="double"):
    """Coherence time on the Fourier-limit line: ``"double"`` is T2 = 2 T1, ``"half"`` is T2 = T1 / 2."""
    if convention == "double":
        return 2.0 * t1
    if convention == "half":
        return 0.5 * t1
    raise ValueError(f"unknown Fourier-limit convention {convention!r}")


def purcell_lifetime(t1_free, fp):
    if t1_free <= 0:
        raise DomainError("t1_free must be positive")
    if fp <= 0:
        raise DomainError("Purcell factor must be positive")
    if fp < 1:
        warnings.warn("Purcell factor < 1: emission is suppressed, not enhanced", stacklevel=2)
    return t1_free / fp


def cavity_mode_wavelength(cavity: CavityModel) -> float:
    return cavity.lambda_c0 + cavity.tuning_slope * cavity.delta_r


def purcell_vs_detuning(cavity: CavityModel, detuning, derating=1.0):
    """Lorentzian Purcell factor versus emitter-cavity detuning [nm].

    Falls back to the membrane value 1 far from resonance.  ``derating`` in
    (0, 1] scales the enhancement above 1 to account for spatial mismatch.
    """
    if not 0 < derating <= 1:
        raise DomainError("derating must lie in (0, 1]")
    lam = cavity_mode_wavelength(cavity)
    eps = 2.0 * cavity.q_factor * np.asarray(detuning, dtype=float) / lam
    fp = 1.0 + derating * (cavity.fp_max - 1.0) / (1.0 + eps * eps)
    return float(fp) if fp.ndim == 0 else fp


def overlap_parameter(gamma_inhom):
    """A(Gamma) [ps] for Gamma in GHz; infinite for Gamma = 0."""
    if gamma_inhom == 0:
        return math.inf
    return math.sqrt(LINEWIDTH_LOG) / (math.sqrt(2.0) * math.pi * gamma_inhom) * 1e3


def _v_of_x(x):
    # sqrt(pi) x exp(x^2) erfc(x); erfcx keeps it finite for large x.
    return math.sqrt(math.pi) * x * erfcx(x)


def visibility_inhomogeneous(t1, gamma_inhom):
    """Two-photon visibility of lifetime-limited photons under Gaussian spectral diffusion.

    Parameters
    ----------
    t1 : float or array
        Radiative lifetime [ps].
    gamma_inhom : float
        Spectral-diffusion linewidth Gamma [GHz].

    Returns
    -------
    float or ndarray
        sqrt(pi) x exp(x^2) erfc(x) with x = A(Gamma) / T1.  Exactly 1 for
        Gamma = 0 and tends to 0 for T1 -> inf.
    """
    t1 = np.asarray(t1, dtype=float)
    if np.any(t1 <= 0):
        raise DomainError("t1 must be positive")
    if gamma_inhom < 0:
        raise DomainError("gamma_inhom must be non-negative")
    if gamma_inhom == 0:
        v = np.ones_like(t1)
    else:
        x = overlap_parameter(gamma_inhom) / t1
        v = np.sqrt(np.pi) * x * erfcx(x)
        v = np.clip(v, 0.0, 1.0)
    return float(v) if v.ndim == 0 else v


def calibrate_linewidth(t1, target_visibility):
    """Gamma [GHz] for which ``visibility_inhomogeneous(t1, Gamma)`` equals the target."""
    if not 0 < target_visibility < 1:
        raise DomainError("target visibility must lie in (0, 1)")
    x = brentq(lambda x: _v_of_x(x) - target_visibility, 1e-9, 1e6, xtol=1e-14, rtol=1e-14)
    a = x * t1
    return math.sqrt(LINEWIDTH_LOG) / (math.sqrt(2.0) * math.pi * a) * 1e3


def thermal_factor(t1, gamma_star, convention="planck"):
    """Markovian dephasing factor gamma / (gamma + gamma*).

    ``"planck"`` weighs hbar/T1 against gamma* / (2 pi), i.e. the radiative
    rate against gamma*/h; ``"hbar"`` weighs hbar/T1 against gamma* directly.
    """
    gamma = fourier_linewidth(t1)
    if convention == "planck":
        gs = np.asarray(gamma_star) / (2.0 * math.pi)
    elif convention == "hbar":
        gs = np.asarray(gamma_star)
    else:
        raise ValueError(f"unknown dephasing convention {convention!r}")
    f = gamma / (gamma + gs)
    return float(f) if np.ndim(f) == 0 else f


def visibility_temperature(config: EmitterConfig, temperature=None, convention="planck"):
    t1 = config.t1
    gs = phonon_dephasing_rate(config, temperature)
    return visibility_inhomogeneous(t1, config.gamma_inhom) * thermal_factor(t1, gs, convention)


def dephasing_coherence_time(config: EmitterConfig, temperature=None, convention="planck"):
    """Per-photon coherence time T2' [ps] that damps interference like the thermal factor.

    With damping exp(-2|t1 - t2| / T2') the lifetime-averaged interference is
    1 / (1 + 2 T1 / T2'); this returns the T2' for which that equals
    ``thermal_factor``.  ``None`` when there is no dephasing.
    """
    gs = phonon_dephasing_rate(config, temperature)
    if gs == 0:
        return None
    f = thermal_factor(config.t1, gs, convention)
    return 2.0 * config.t1 * f / (1.0 - f)


def correct_visibility(v_raw, g2_zero, b_factor, v_raw_err=float("nan")) -> VisibilityReport:
    """Multi-photon correction V_corr = min(1, V_raw + B g2(0)) with 1 <= B <= 2."""
    if not 1.0 <= b_factor <= 2.0:
        raise DomainError("b_factor must lie in [1, 2]")
    if g2_zero < 0:
        raise DomainError("g2_zero must be non-negative")
    v_corr = min(1.0, v_raw + b_factor * g2_zero)
    return VisibilityReport(float(v_raw), float(g2_zero), float(b_factor), float(v_corr), float(v_raw_err))
