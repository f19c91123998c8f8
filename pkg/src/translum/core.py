"""Shared domain types, error classes and the seeded random-number contract."""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

MASK64 = (1 << 64) - 1


class TranslumError(Exception):
    """Base class for all simulator errors."""


class ConfigError(TranslumError, ValueError):
    """Invalid or unparseable configuration."""


class NoSignalError(TranslumError):
    """The receiver found no usable pulses in a capture."""


class SyncError(TranslumError):
    """The frame prefix could not be located in a decoded stream."""


class TruncatedFrameError(TranslumError):
    """Not enough decoded bits follow the prefix to recover a payload."""


class SafetyViolation(TranslumError):
    """An acoustic operating point exceeds one or more safety limits."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("safety limits exceeded: " + "; ".join(self.violations))


class Modulation(str, enum.Enum):
    PWM = "PWM"
    PDM = "PDM"

    @classmethod
    def parse(cls, value) -> "Modulation":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ConfigError(f"unknown modulation {value!r}; expected PWM or PDM") from None


# --------------------------------------------------------------------------- bits


class BitStream:
    """Immutable ordered sequence of 0/1 symbols backed by a uint8 array."""

    __slots__ = ("_bits",)

    def __init__(self, bits=()):
        arr = np.array(bits, dtype=np.int64).ravel()
        if arr.size and (arr.min() < 0 or arr.max() > 1):
            raise ValueError("bit values must be 0 or 1")
        arr = arr.astype(np.uint8)
        arr.flags.writeable = False
        self._bits = arr

    @classmethod
    def from_bytes(cls, data) -> "BitStream":
        """MSB-first expansion of a byte sequence."""
        raw = np.frombuffer(bytes(data), dtype=np.uint8)
        return cls(np.unpackbits(raw))

    @classmethod
    def from_str(cls, text: str) -> "BitStream":
        text = "".join(text.split())
        return cls([int(c) for c in text])

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    def to_bytes(self) -> bytes:
        if len(self) % 8:
            raise ValueError("bit count is not a multiple of 8")
        return np.packbits(self._bits).tobytes()

    def popcount(self) -> int:
        return int(self._bits.sum())

    def __len__(self) -> int:
        return int(self._bits.size)

    def __iter__(self):
        return iter(self._bits.tolist())

    def __getitem__(self, item):
        if isinstance(item, slice):
            return BitStream(self._bits[item])
        return int(self._bits[item])

    def __add__(self, other) -> "BitStream":
        return BitStream(np.concatenate([self._bits, as_bits(other)]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitStream):
            return NotImplemented
        return np.array_equal(self._bits, other._bits)

    def __hash__(self):
        return hash(self._bits.tobytes())

    def __repr__(self) -> str:
        head = "".join(map(str, self._bits[:32].tolist()))
        more = "..." if len(self) > 32 else ""
        return f"BitStream(len={len(self)}, bits={head}{more})"


def as_bits(bits) -> np.ndarray:
    """Return a uint8 0/1 array view of a BitStream or array-like."""
    if isinstance(bits, BitStream):
        return bits.bits
    return np.asarray(bits, dtype=np.uint8)


# ------------------------------------------------------------------------- config

# PWM needs >= 4 samples in a 0.25T pulse, PDM >= 4 in a 0.2T pulse
DEFAULT_OVERSAMPLING = {Modulation.PWM: 16, Modulation.PDM: 20}


@dataclass(frozen=True)
class LinkConfig:
    data_rate: float = 5e6
    modulation: Modulation = Modulation.PWM
    oversampling: int | None = None
    led_peak_power: float = 1e-3
    prefix_pattern: int = 0xA5
    payload_len: int = 190
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "modulation", Modulation.parse(self.modulation))
        if self.oversampling is None:
            object.__setattr__(self, "oversampling", DEFAULT_OVERSAMPLING[self.modulation])
        if not self.data_rate > 0:
            raise ConfigError("data_rate must be > 0")
        if int(self.oversampling) != self.oversampling or self.oversampling < 4:
            raise ConfigError("oversampling must be an integer >= 4")
        if self.led_peak_power < 0:
            raise ConfigError("led_peak_power must be >= 0")
        if not 0 <= self.prefix_pattern <= 0xFF:
            raise ConfigError("prefix_pattern must be an 8-bit value")
        if self.payload_len < 1:
            raise ConfigError("payload_len must be >= 1")
        object.__setattr__(self, "oversampling", int(self.oversampling))
        object.__setattr__(self, "seed", int(self.seed) & MASK64)

    @property
    def symbol_period(self) -> float:
        return 1.0 / self.data_rate

    @property
    def sample_rate(self) -> float:
        return self.data_rate * self.oversampling

    def to_dict(self) -> dict:
        d = asdict(self)
        d["modulation"] = self.modulation.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LinkConfig":
        from .config import parse_link

        return parse_link(d)


def config_digest(obj) -> str:
    """SHA-256 over the canonical JSON form of a (nested) config mapping."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _jsonable(o):
    if isinstance(o, enum.Enum):
        return o.value
    if isinstance(o, np.generic):
        return o.item()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"not serializable: {type(o).__name__}")


# ---------------------------------------------------------------------------- rng


@dataclass(frozen=True)
class RngStream:
    """Key of one counter-based random substream.

    The key is fed straight into a Philox generator, so the sequence for a
    given (master_seed, stream_id) pair does not depend on which other
    substreams exist or the order in which they are consumed.
    """

    master_seed: int
    stream_id: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "master_seed", int(self.master_seed) & MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & MASK64)

    def generator(self) -> np.random.Generator:
        key = np.array([self.stream_id, self.master_seed], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def make_substream(master_seed: int, stream_id: int) -> np.random.Generator:
    """Fresh generator for substream ``stream_id`` of ``master_seed``."""
    return RngStream(master_seed, stream_id).generator()


def derive_seed(*parts) -> int:
    """Stable 64-bit seed derived from arbitrary printable parts."""
    text = "\x1f".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
