"""Transmit frame assembly and prefix-based payload recovery."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BitStream, SyncError, TruncatedFrameError, as_bits

PREFIX_REPEATS = 4
PREFIX_BITS = 8 * PREFIX_REPEATS
DEFAULT_PATTERN = 0xA5
PAYLOAD_BITS = 1520


def prefix_bits(pattern: int = DEFAULT_PATTERN) -> np.ndarray:
    """The 32-bit start marker: ``pattern`` repeated four times, MSB first."""
    if not 0 <= pattern <= 0xFF:
        raise ValueError("pattern must fit in 8 bits")
    return np.tile(np.unpackbits(np.array([pattern], dtype=np.uint8)), PREFIX_REPEATS)


@dataclass(frozen=True)
class Frame:
    prefix: BitStream
    payload: BitStream

    def __post_init__(self):
        if len(self.prefix) != PREFIX_BITS:
            raise ValueError("prefix must be exactly 32 bits")
        p = self.prefix.bits
        if not np.array_equal(p, np.tile(p[:8], PREFIX_REPEATS)):
            raise ValueError("prefix must be one 8-bit pattern repeated four times")

    @property
    def bits(self) -> BitStream:
        return self.prefix + self.payload

    def __len__(self) -> int:
        return len(self.prefix) + len(self.payload)


def build_frame(payload, pattern: int = DEFAULT_PATTERN) -> Frame:
    """Prepend the 32-bit prefix to a byte payload."""
    payload = bytes(payload)
    if not payload:
        raise ValueError("payload must not be empty")
    return Frame(BitStream(prefix_bits(pattern)), BitStream.from_bytes(payload))


def locate_prefix(bits, pattern: int = DEFAULT_PATTERN) -> int:
    """Index of the earliest full 32-bit prefix match in ``bits``.

    Candidates are seeded by matching the single 8-bit pattern, then each is
    confirmed against the whole prefix.
    """
    b = as_bits(bits)
    if b.size < PREFIX_BITS:
        raise SyncError(f"stream of {b.size} bits is shorter than the prefix")
    # value of the 8-bit window starting at each index
    weights = (1 << np.arange(7, -1, -1)).astype(np.int64)
    window8 = np.convolve(b.astype(np.int64), weights[::-1], mode="valid")
    last = b.size - PREFIX_BITS
    candidates = np.flatnonzero(window8[: last + 1] == pattern)
    if candidates.size == 0:
        raise SyncError("prefix not found")
    # the full prefix is four consecutive byte-aligned 8-bit matches
    ok = np.ones(candidates.size, dtype=bool)
    for k in range(1, PREFIX_REPEATS):
        ok &= window8[candidates + 8 * k] == pattern
    hits = candidates[ok]
    if hits.size == 0:
        raise SyncError("prefix not found")
    return int(hits[0])


def extract_payload(bits, offset: int, n: int = PAYLOAD_BITS) -> BitStream:
    """The ``n`` bits that follow the prefix starting at ``offset``."""
    b = as_bits(bits)
    start = offset + PREFIX_BITS
    if offset < 0 or start + n > b.size:
        raise TruncatedFrameError(
            f"need {n} bits after offset {offset}, only {max(b.size - start, 0)} available"
        )
    return BitStream(b[start : start + n])
