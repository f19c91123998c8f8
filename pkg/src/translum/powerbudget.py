"""Telemetry power and throughput arithmetic."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .core import Modulation

FRAME_BITS = 1552
PAYLOAD_BITS = 1520
FRAMING_OVERHEAD = Fraction(FRAME_BITS, PAYLOAD_BITS)


@dataclass(frozen=True)
class RatePowerPoint:
    data_rate: float  # bit/s
    power: float  # W
    tissue_preset: str = ""
    modulation: Modulation = Modulation.PWM

    def __post_init__(self):
        object.__setattr__(self, "modulation", Modulation.parse(self.modulation))
        if not self.data_rate > 0:
            raise ValueError("data_rate must be > 0")
        if self.power < 0:
            raise ValueError("power must be >= 0")


@dataclass(frozen=True)
class Table1Row:
    point: RatePowerPoint
    printed_nj_per_bit: float

    @property
    def key(self) -> str:
        return f"{self.point.data_rate / 1e6:g}mbps-{self.point.modulation.value.lower()}"


def _row(rate_mbps, bone_mm, mod, power_mw, nj):
    return Table1Row(
        RatePowerPoint(rate_mbps * 1e6, power_mw * 1e-3, f"bone{bone_mm}_skin7", mod), nj
    )


# Measured transmitter power at the bench supply, with the printed efficiency.
TABLE1 = (
    _row(0.5, 5, "PWM", 1.1, 2.3),
    _row(1, 5, "PWM", 1.3, 1.3),
    _row(2, 5, "PWM", 1.8, 0.9),
    _row(5, 5, "PWM", 2.7, 0.54),
    _row(1, 5, "PDM", 1.4, 1.4),
    _row(3, 5, "PDM", 2.7, 0.9),
    _row(2, 8, "PWM", 2.1, 1.05),
    _row(5, 8, "PWM", 3.4, 0.68),
    _row(3, 8, "PDM", 2.4, 0.8),
    _row(2, 10, "PWM", 2.6, 1.3),
    _row(5, 10, "PWM", 3.8, 0.76),
    _row(3, 10, "PDM", 2.9, 0.96),
)

EFFICIENCY_TOLERANCE_NJ = 0.01


def energy_per_bit(p: RatePowerPoint) -> float:
    """Joules per transmitted bit."""
    if not p.data_rate > 0:
        raise ValueError("data_rate must be > 0")
    return p.power / p.data_rate


def efficiency_check(row: Table1Row, tol_nj: float = EFFICIENCY_TOLERANCE_NJ) -> dict:
    """Compare the computed nJ/bit with the printed value for one row."""
    nj = energy_per_bit(row.point) * 1e9
    return {
        "key": row.key,
        "preset": row.point.tissue_preset,
        "computed_nj_per_bit": nj,
        "printed_nj_per_bit": row.printed_nj_per_bit,
        "consistent": abs(nj - row.printed_nj_per_bit) <= tol_nj + 1e-12,
    }


def required_rate(channels: int, fs: float, resolution: int) -> int | Fraction:
    """Raw payload bit rate of a multichannel recording, no framing."""
    if channels <= 0 or fs <= 0 or resolution <= 0:
        raise ValueError("channels, fs and resolution must all be positive")
    r = Fraction(channels) * Fraction(fs) * Fraction(resolution)
    return int(r) if r.denominator == 1 else r


def framed_rate(channels: int, fs: float, resolution: int) -> Fraction:
    """Line rate once every 1520 payload bits carry a 32-bit prefix."""
    return Fraction(required_rate(channels, fs, resolution)) * FRAMING_OVERHEAD


@dataclass(frozen=True)
class Feasibility:
    required: int | Fraction
    framed: Fraction
    link_rate: float
    raw_ok: bool
    framed_ok: bool
    margin: float  # link_rate - framed requirement, bit/s

    def to_dict(self) -> dict:
        return {
            "required_bps": float(self.required),
            "framed_bps": float(self.framed),
            "link_rate_bps": self.link_rate,
            "raw_ok": self.raw_ok,
            "framed_ok": self.framed_ok,
            "margin_bps": self.margin,
        }


def feasibility(channels: int, fs: float, resolution: int, link_rate: float) -> Feasibility:
    if not link_rate > 0:
        raise ValueError("link_rate must be > 0")
    raw = required_rate(channels, fs, resolution)
    framed = framed_rate(channels, fs, resolution)
    lr = Fraction(link_rate)
    return Feasibility(raw, framed, float(link_rate), raw <= lr, framed <= lr, float(lr - framed))
