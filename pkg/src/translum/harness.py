"""Monte Carlo BER experiments over the simulated optical link."""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import beta

from . import channel, modem
from .core import (
    ConfigError,
    LinkConfig,
    NoSignalError,
    SyncError,
    TruncatedFrameError,
    config_digest,
    derive_seed,
    make_substream,
)
from .framing import PREFIX_BITS, build_frame, extract_payload, locate_prefix
from .powerbudget import TABLE1, RatePowerPoint, energy_per_bit

log = logging.getLogger(__name__)

GAP_SYMBOLS = 32  # max idle symbols before a frame; the actual gap is random
TAIL_SYMBOLS = 3

CSV_COLUMNS = [
    "rate_bps", "modulation", "preset", "frames", "bits", "errors", "sync_failures",
    "ber", "ber_upper_95", "power_mw", "nj_per_bit", "seconds",
]


def ber_upper_bound(errors: int, bits: int, confidence: float = 0.95) -> float:
    """One-sided Clopper-Pearson upper bound on the bit error probability."""
    if bits <= 0:
        raise ValueError("bits must be > 0")
    if errors < 0 or errors > bits:
        raise ValueError("errors must lie in [0, bits]")
    if not 0 < confidence < 1:
        raise ValueError("confidence must be in (0, 1)")
    if errors == bits:
        return 1.0
    if errors == 0:
        return -math.expm1(math.log1p(-confidence) / bits)
    return float(beta.ppf(confidence, errors + 1, bits - errors))


@dataclass(frozen=True)
class BerReport:
    bits_compared: int = 0
    bit_errors: int = 0
    frames_sent: int = 0
    sync_failures: int = 0
    config_digest: str = ""
    wall_seconds: float = 0.0

    @property
    def ber(self) -> float | None:
        return self.bit_errors / self.bits_compared if self.bits_compared else None

    @property
    def ber_upper_95(self) -> float:
        if self.bits_compared == 0:
            return 1.0
        return ber_upper_bound(self.bit_errors, self.bits_compared, 0.95)

    def __add__(self, other: "BerReport") -> "BerReport":
        if self.config_digest and other.config_digest and self.config_digest != other.config_digest:
            raise ValueError("cannot merge reports from different configurations")
        return BerReport(
            self.bits_compared + other.bits_compared,
            self.bit_errors + other.bit_errors,
            self.frames_sent + other.frames_sent,
            self.sync_failures + other.sync_failures,
            self.config_digest or other.config_digest,
            self.wall_seconds + other.wall_seconds,
        )

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "bits_compared": self.bits_compared,
            "bit_errors": self.bit_errors,
            "frames_sent": self.frames_sent,
            "sync_failures": self.sync_failures,
            "ber": self.ber,
            "ber_upper_95": self.ber_upper_95,
            "config_digest": self.config_digest,
        }
        if timing:
            d["wall_seconds"] = self.wall_seconds
        return d


@dataclass(frozen=True)
class FrameOutcome:
    sent: np.ndarray  # payload bits
    received: np.ndarray | None  # None when the frame was lost
    failure: str | None = None


def frame_slot_symbols(cfg: LinkConfig) -> int:
    return GAP_SYMBOLS + PREFIX_BITS + 8 * cfg.payload_len + TAIL_SYMBOLS


def simulate_frame(index: int, cfg: LinkConfig, stack: channel.TissueStack,
                   rx: channel.RxModel, master_seed: int | None = None) -> FrameOutcome:
    """Send one frame through modem and channel and try to recover its payload.

    Every random draw (payload, idle gap, sub-symbol phase, noise) comes from
    substream ``index`` of the master seed, so frames are independent work items.
    """
    rng = make_substream(cfg.seed if master_seed is None else master_seed, index)
    payload = rng.integers(0, 256, cfg.payload_len, dtype=np.uint8)
    gap = int(rng.integers(0, GAP_SYMBOLS))
    frac = float(rng.random())
    frame = build_frame(payload.tobytes(), cfg.prefix_pattern)
    sent = frame.payload.bits
    T = cfg.symbol_period
    train = modem.encode(frame.bits, cfg).shifted((gap + frac) * T)
    duration = (gap + len(frame) + TAIL_SYMBOLS) * T
    tx = modem.rasterize(train, cfg.sample_rate, cfg.led_peak_power, duration=duration)
    t_start = index * frame_slot_symbols(cfg) * T
    try:
        wave = channel.end_to_end(tx, stack, rx, rng, t0=t_start)
        bits = modem.decode(wave, cfg)
        offset = locate_prefix(bits, cfg.prefix_pattern)
        got = extract_payload(bits, offset, sent.size).bits
    except (NoSignalError, SyncError, TruncatedFrameError) as exc:
        return FrameOutcome(sent, None, type(exc).__name__)
    return FrameOutcome(sent, got)


def tally(outcomes, digest: str = "") -> BerReport:
    bits = errors = frames = lost = 0
    for o in outcomes:
        frames += 1
        if o.received is None:
            lost += 1
            continue
        bits += o.sent.size
        errors += int(np.count_nonzero(o.sent != o.received))
    return BerReport(bits, errors, frames, lost, digest)


def _run_range(args) -> BerReport:
    start, stop, cfg, stack, rx, master_seed, digest = args
    return tally(
        (simulate_frame(i, cfg, stack, rx, master_seed) for i in range(start, stop)), digest
    )


def link_digest(cfg: LinkConfig, stack: channel.TissueStack, rx: channel.RxModel,
                master_seed: int | None = None) -> str:
    """Hash of everything that shapes a frame; the frame range is left out so runs merge."""
    return config_digest({
        "link": cfg.to_dict(),
        "tissue": stack.to_dict(),
        "receiver": rx.to_dict(),
        "master_seed": cfg.seed if master_seed is None else master_seed,
    })


def _chunks(n: int, parts: int):
    size = max(1, -(-n // parts))
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def run_link(cfg: LinkConfig, stack: channel.TissueStack, rx: channel.RxModel,
             n_frames: int, workers: int = 1, master_seed: int | None = None,
             first_frame: int = 0) -> BerReport:
    """Run frames ``first_frame .. first_frame + n_frames - 1`` and accumulate error counts.

    The result depends only on the configuration, seed and frame range;
    ``workers`` only changes how frames are spread over processes. Reports
    for adjacent ranges add up to the report for their union.
    """
    if n_frames < 1:
        raise ConfigError("n_frames must be >= 1")
    if first_frame < 0:
        raise ConfigError("first_frame must be >= 0")
    rx.validate_for(cfg.data_rate)
    modem.rasterize(modem.encode([1, 0], cfg), cfg.sample_rate, 1.0)  # undersampling check
    digest = link_digest(cfg, stack, rx, master_seed)
    t0 = time.perf_counter()
    if workers <= 1 or n_frames < 2:
        report = _run_range((first_frame, first_frame + n_frames, cfg, stack, rx, master_seed,
                             digest))
    else:
        jobs = [(first_frame + a, first_frame + b, cfg, stack, rx, master_seed, digest)
                for a, b in _chunks(n_frames, 4 * workers)]
        report = BerReport(config_digest=digest)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_run_range, jobs):
                report = report + part
    return replace(report, wall_seconds=time.perf_counter() - t0)


# ---------------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepRow:
    data_rate: float
    preset: str
    modulation: str
    power: float | None = None  # W, measured transmitter power if known

    @classmethod
    def from_point(cls, p: RatePowerPoint) -> "SweepRow":
        return cls(p.data_rate, p.tissue_preset, p.modulation.value, p.power)


TABLE1_ROWS = tuple(SweepRow.from_point(r.point) for r in TABLE1)


def airtime(report: BerReport, cfg: LinkConfig) -> float:
    """Seconds of link time the frames in ``report`` occupy at the nominal rate."""
    return report.frames_sent * (PREFIX_BITS + 8 * cfg.payload_len) / cfg.data_rate


def sweep(table, n_frames: int = 100, rx: channel.RxModel | None = None,
          base: LinkConfig | None = None, workers: int = 1) -> list[dict]:
    """One BER run per (rate, preset, modulation) row.

    Each row draws from substreams keyed on the row content, so duplicate rows
    give identical reports. Errors are captured per row and the sweep goes on.
    """
    rx = rx or channel.RxModel()
    base = base or LinkConfig()
    records = []
    for row in table:
        rec = {
            "rate_bps": row.data_rate, "modulation": row.modulation, "preset": row.preset,
            "power_mw": None if row.power is None else row.power * 1e3,
            "nj_per_bit": None, "report": None, "error": None, "seconds": None,
        }
        try:
            cfg = replace(base, data_rate=row.data_rate, modulation=row.modulation,
                          oversampling=None)
            if row.power is not None:
                rec["nj_per_bit"] = energy_per_bit(
                    RatePowerPoint(row.data_rate, row.power, row.preset, row.modulation)) * 1e9
            seed = derive_seed(base.seed, row.data_rate, row.preset, cfg.modulation.value)
            report = run_link(cfg, channel.tissue_preset(row.preset), rx, n_frames,
                              workers=workers, master_seed=seed)
            rec["report"] = report
            rec["seconds"] = airtime(report, cfg)
        except Exception as exc:  # recorded per row, sweep continues
            log.warning("sweep row %s failed: %s", row, exc)
            rec["error"] = f"{type(exc).__name__}: {exc}"
        records.append(rec)
    return records


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def record_to_csv_row(rec: dict) -> list[str]:
    r = rec["report"]
    vals = [
        rec["rate_bps"], rec["modulation"], rec["preset"],
        r.frames_sent if r else None, r.bits_compared if r else None,
        r.bit_errors if r else None, r.sync_failures if r else None,
        r.ber if r else None, r.ber_upper_95 if r else None,
        rec["power_mw"], rec["nj_per_bit"], rec["seconds"],
    ]
    return [_fmt(v) for v in vals]


def write_sweep_csv(records, path, extra_columns: dict | None = None) -> None:
    """Write sweep records; ``extra_columns`` maps header -> per-record values."""
    extra_columns = extra_columns or {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS + list(extra_columns))
        for i, rec in enumerate(records):
            w.writerow(record_to_csv_row(rec) + [_fmt(v[i]) for v in extra_columns.values()])
