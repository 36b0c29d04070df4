"""Per-utterance switching between an observed mixture and its enhanced
version as input to a black-box speech recognizer."""

from .errors import (
    AdapterError,
    ArchitectureMismatchError,
    ConfigurationError,
    EstimationUnavailableError,
    FormatError,
    InvalidInputError,
    UndefinedRatioError,
)
from .signals import SAMPLE_RATE, MixtureBundle, level_db, mix_at, power

__version__ = "0.1.0"

__all__ = [
    "AdapterError",
    "ArchitectureMismatchError",
    "ConfigurationError",
    "EstimationUnavailableError",
    "FormatError",
    "InvalidInputError",
    "UndefinedRatioError",
    "SAMPLE_RATE",
    "MixtureBundle",
    "level_db",
    "mix_at",
    "power",
]
