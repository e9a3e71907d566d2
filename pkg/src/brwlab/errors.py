"""Error types shared across the package."""

__all__ = [
    "BrwLabError",
    "ConfigError",
    "DegenerateLawError",
    "CalibrationError",
    "PopulationOverflowError",
    "OutcomeExplosionError",
    "SizeBiasError",
    "InsufficientExcursionsError",
    "InconsistentClassificationError",
]


class BrwLabError(Exception):
    """Base class for all package errors."""


class ConfigError(BrwLabError):
    """Invalid configuration (unknown key, bad value, missing law)."""


class DegenerateLawError(BrwLabError):
    """Offspring sampler yields empty child sets with probability 1."""


class CalibrationError(BrwLabError):
    """Boundary calibration of a custom law did not converge."""


class PopulationOverflowError(BrwLabError):
    """A generation would exceed the particle cap."""

    def __init__(self, size, cap, generation):
        self.size, self.cap, self.generation = size, cap, generation
        super().__init__(
            f"population overflow: {size} particles exceeds cap {cap} "
            f"at generation {generation}"
        )


class OutcomeExplosionError(BrwLabError):
    """Exact enumeration would exceed the outcome cap."""


class SizeBiasError(BrwLabError):
    """Rejection sampling of the size-biased offspring law failed."""


class InsufficientExcursionsError(BrwLabError):
    """Empirical renewal measure built from too few ladder epochs."""


class InconsistentClassificationError(BrwLabError):
    """Integral test and moment condition disagree (the point of the check)."""
