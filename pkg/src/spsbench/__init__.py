"""Simulation and analysis toolkit for pulsed, Purcell-enhanced single-photon sources."""

from .correlate import (CorrelationHistogram, PeakIntegration, correlate_files, cross_correlate, decay_histogram,
                        g2_zero, hom_visibility, integrate_peaks)
from .exceptions import (CalibrationError, ConfigError, DipNotResolvableError, DomainError, FormatError,
                         NumericalError)
from .fitting import FitResult, fit_decay, fit_fano, t2_from_dip
from .interferometer import BenchConfig, pair_visibility_oracle, route_hbt, route_hom
from .physics import (CavityModel, EmitterConfig, VisibilityReport, bose_einstein, calibrate_linewidth,
                      correct_visibility, phonon_dephasing_rate, purcell_lifetime, purcell_vs_detuning,
                      visibility_inhomogeneous, visibility_temperature)
from .pipeline import VERSION as __version__
from .pipeline import RunConfig, rate_sweep
from .source import (DetectorModel, PhotonRecords, PulseTrain, TimeTagStream, calibrate_reservoir, detect,
                     simulate_emission)

__all__ = [
    "BenchConfig", "CalibrationError", "CavityModel", "ConfigError", "CorrelationHistogram", "DetectorModel",
    "DipNotResolvableError", "DomainError", "EmitterConfig", "FitResult", "FormatError", "NumericalError",
    "PeakIntegration", "PhotonRecords", "PulseTrain", "RunConfig", "TimeTagStream", "VisibilityReport",
    "bose_einstein", "calibrate_linewidth", "calibrate_reservoir", "correct_visibility", "correlate_files",
    "cross_correlate", "decay_histogram", "detect", "fit_decay", "fit_fano", "g2_zero", "hom_visibility",
    "integrate_peaks", "pair_visibility_oracle", "phonon_dephasing_rate", "purcell_lifetime",
    "purcell_vs_detuning", "rate_sweep", "route_hbt", "route_hom", "simulate_emission", "t2_from_dip",
    "visibility_inhomogeneous", "visibility_temperature",
]
