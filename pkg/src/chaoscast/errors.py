"""Named error types raised across the pipeline."""


class ChaoscastError(Exception):
    """Base class for all library errors."""


class IntegrationDivergedError(ChaoscastError):
    """The surrogate integrator produced a non-finite state."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"integration diverged at step {step}")


class StationarityNotReachedError(ChaoscastError):
    """No window of the monitored series satisfied the slope tolerance."""


class ConfigError(ChaoscastError):
    """Invalid pipeline configuration or window schedule."""


class PanelFormatError(ChaoscastError):
    """Malformed ground-panel input file."""
