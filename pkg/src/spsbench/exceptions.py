class DomainError(ValueError):
    """An argument lies outside the physical domain of an operation."""


class CalibrationError(RuntimeError):
    """A calibration target cannot be reached by the model."""


class NumericalError(RuntimeError):
    """Numerical integration or optimisation did not reach its tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message if achieved is None else f"{message} (achieved {achieved:.3g})")
        self.achieved = achieved


class DipNotResolvableError(ValueError):
    """The central HOM dip is masked (no dip, or multi-photon floor too high)."""


class FormatError(ValueError):
    """A timetag file does not match the expected binary layout."""


class ConfigError(ValueError):
    """A run configuration is malformed; the message names the offending field."""
