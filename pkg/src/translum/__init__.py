"""Transcranial optical telemetry and focused-ultrasound power simulator."""

from .core import (
    BitStream,
    ConfigError,
    LinkConfig,
    Modulation,
    NoSignalError,
    SafetyViolation,
    SyncError,
    TranslumError,
    TruncatedFrameError,
)

__version__ = "0.1.0"

__all__ = [
    "BitStream", "ConfigError", "LinkConfig", "Modulation", "NoSignalError",
    "SafetyViolation", "SyncError", "TranslumError", "TruncatedFrameError", "__version__",
]
