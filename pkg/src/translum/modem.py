"""Pulse modulation (PWM / PDM), rasterization and receiver-side decoding."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .core import BitStream, LinkConfig, Modulation, NoSignalError, as_bits

PWM_WIDTHS = (0.25, 0.75)  # duty for bit 0, bit 1
PDM_WIDTH = 0.2
DUTY_THRESHOLD = 0.5
THRESHOLD_WINDOW = 64  # symbols
NOISE_FLOOR = 1e-9
SLOT_TOLERANCE = 0.25  # a slot counts when at least 3/4 of it lies inside the capture


@dataclass(frozen=True)
class PulseTrain:
    """Pulses as parallel arrays of start time, width (s) and amplitude (0..1)."""

    symbol_period: float
    starts: np.ndarray
    widths: np.ndarray
    amplitudes: np.ndarray
    n_symbols: int

    def __post_init__(self):
        for name in ("starts", "widths", "amplitudes"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if not (self.starts.shape == self.widths.shape == self.amplitudes.shape):
            raise ValueError("pulse arrays must have equal length")
        if np.any(self.widths <= 0) or np.any(self.widths > self.symbol_period * (1 + 1e-12)):
            raise ValueError("pulse widths must lie in (0, symbol_period]")
        if self.starts.size > 1:
            ends = self.starts[:-1] + self.widths[:-1]
            if np.any(self.starts[1:] < ends - 1e-15 * self.symbol_period):
                raise ValueError("pulses must be time ordered and non-overlapping")

    @property
    def pulses(self) -> list[tuple[float, float, float]]:
        return list(zip(self.starts.tolist(), self.widths.tolist(), self.amplitudes.tolist()))

    @property
    def duration(self) -> float:
        end = float((self.starts + self.widths).max()) if self.starts.size else 0.0
        return max(self.n_symbols * self.symbol_period, end)

    def shifted(self, dt: float) -> "PulseTrain":
        return PulseTrain(self.symbol_period, self.starts + dt, self.widths, self.amplitudes,
                          self.n_symbols)

    def __len__(self):
        return int(self.starts.size)


@dataclass(frozen=True)
class Waveform:
    sample_rate: float
    samples: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be > 0")
        s = np.asarray(self.samples, dtype=float)
        if not np.all(np.isfinite(s)):
            raise ValueError("waveform samples must be finite")
        object.__setattr__(self, "samples", s)

    @classmethod
    def trusted(cls, sample_rate: float, samples: np.ndarray, t0: float = 0.0) -> "Waveform":
        """Build without validation, for internal producers of finite float arrays."""
        w = object.__new__(cls)
        object.__setattr__(w, "sample_rate", sample_rate)
        object.__setattr__(w, "samples", samples)
        object.__setattr__(w, "t0", t0)
        return w

    @property
    def times(self) -> np.ndarray:
        """Sample instants; each sample sits at the middle of its interval."""
        return self.t0 + (np.arange(self.samples.size) + 0.5) / self.sample_rate

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def __len__(self):
        return int(self.samples.size)

    def __mul__(self, k):
        return Waveform(self.sample_rate, self.samples * k, self.t0)

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, Waveform):
            if other.sample_rate != self.sample_rate or other.samples.size != self.samples.size:
                raise ValueError("waveforms are not aligned")
            other = other.samples
        return Waveform(self.sample_rate, self.samples + other, self.t0)

    __radd__ = __add__

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "value"])
            for t, v in zip(self.times.tolist(), self.samples.tolist()):
                w.writerow([repr(t), repr(v)])


def read_waveform_csv(path) -> Waveform:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t, v = data[:, 0], data[:, 1]
    if t.size < 2:
        raise ValueError("need at least two samples to infer the sample rate")
    dt = (t[-1] - t[0]) / (t.size - 1)
    return Waveform(1.0 / dt, v, t0=t[0] - 0.5 * dt)


# ------------------------------------------------------------------ modulation


def pwm_encode(bits, cfg: LinkConfig) -> PulseTrain:
    """One pulse per bit, rising at the symbol start; duty 0.25 for 0, 0.75 for 1."""
    if cfg.modulation is not Modulation.PWM:
        raise ValueError("pwm_encode needs a PWM link config")
    b = as_bits(bits)
    T = cfg.symbol_period
    widths = np.where(b == 1, PWM_WIDTHS[1], PWM_WIDTHS[0]) * T
    return PulseTrain(T, np.arange(b.size) * T, widths, np.ones(b.size), b.size)


def pdm_encode(bits, cfg: LinkConfig) -> PulseTrain:
    """A centred pulse of width 0.2T for each 1, nothing for a 0."""
    if cfg.modulation is not Modulation.PDM:
        raise ValueError("pdm_encode needs a PDM link config")
    b = as_bits(bits)
    T = cfg.symbol_period
    slots = np.flatnonzero(b == 1)
    starts = (slots + 0.5 - PDM_WIDTH / 2) * T
    n = slots.size
    return PulseTrain(T, starts, np.full(n, PDM_WIDTH * T), np.ones(n), b.size)


def encode(bits, cfg: LinkConfig) -> PulseTrain:
    if cfg.modulation is Modulation.PWM:
        return pwm_encode(bits, cfg)
    return pdm_encode(bits, cfg)


def rasterize(train: PulseTrain, sample_rate: float, peak_power: float,
              duration: float | None = None) -> Waveform:
    """Sample a pulse train: ``peak_power`` x amplitude inside a pulse, 0 elsewhere.

    Sample ``k`` is taken at ``(k + 0.5) / sample_rate``.
    """
    if len(train) and sample_rate * train.widths.min() < 4 * (1 - 1e-9):
        raise ValueError("undersampled: need at least 4 samples per narrowest pulse")
    span = train.duration if duration is None else duration
    n = int(np.ceil(span * sample_rate - 1e-9))
    if len(train) == 0:
        return Waveform(sample_rate, np.zeros(n))
    # first sample index whose instant is >= edge time
    lo = np.ceil(train.starts * sample_rate - 0.5 - 1e-9).astype(np.int64)
    hi = np.ceil((train.starts + train.widths) * sample_rate - 0.5 - 1e-9).astype(np.int64)
    lo = np.clip(lo, 0, n)
    hi = np.clip(hi, 0, n)
    if np.all(train.amplitudes == 1.0):
        step = np.bincount(lo, minlength=n + 1) - np.bincount(hi, minlength=n + 1)
    else:
        step = (np.bincount(lo, weights=train.amplitudes, minlength=n + 1)
                - np.bincount(hi, weights=train.amplitudes, minlength=n + 1))
    level = np.cumsum(step[:n], dtype=float)
    if peak_power != 1.0:
        level *= peak_power
    return Waveform.trusted(sample_rate, level)


# ------------------------------------------------------------------- detection


def adaptive_threshold(window, noise_floor: float = NOISE_FLOOR) -> float:
    """Midpoint between the minimum and maximum of a waveform segment."""
    s = window.samples if isinstance(window, Waveform) else np.asarray(window, dtype=float)
    if s.size < 2:
        raise ValueError("window too short")
    lo, hi = float(s.min()), float(s.max())
    if hi - lo < noise_floor:
        raise NoSignalError("flat window: no pulses above the noise floor")
    return 0.5 * (lo + hi)


def _block_extremes(s: np.ndarray, blk: int):
    full = s.size // blk
    nblk = -(-s.size // blk)
    bmin, bmax = np.empty(nblk), np.empty(nblk)
    # column-major copy: reducing along axis 0 is much faster than along short rows
    head = np.ascontiguousarray(s[: full * blk].reshape(full, blk).T)
    head.min(axis=0, out=bmin[:full])
    head.max(axis=0, out=bmax[:full])
    if nblk > full:
        bmin[-1], bmax[-1] = s[full * blk:].min(), s[full * blk:].max()
    return bmin, bmax


def rolling_threshold(wave: Waveform, samples_per_symbol: float,
                      window_symbols: int = THRESHOLD_WINDOW,
                      noise_floor: float = NOISE_FLOOR) -> np.ndarray:
    """Per-sample threshold from a sliding min/max over ``window_symbols`` symbols.

    Extremes are first taken per symbol-sized block, then rolled, which keeps
    the cost independent of the window length. Where the local swing is
    below half the typical (median) swing, as in an idle gap holding only
    noise, the threshold sits half a typical swing above the local minimum
    instead of at the local midpoint.
    """
    s = wave.samples
    if s.size < 2:
        raise ValueError("window too short")
    blk = max(int(round(samples_per_symbol)), 1)
    bmin, bmax = _block_extremes(s, blk)
    lo, hi = bmin.min(), bmax.max()
    if hi - lo < noise_floor:
        raise NoSignalError("flat window: no pulses above the noise floor")
    if bmin.size <= window_symbols:
        return np.full(s.size, 0.5 * (lo + hi))
    rmin = minimum_filter1d(bmin, window_symbols, mode="nearest")
    rmax = maximum_filter1d(bmax, window_symbols, mode="nearest")
    local = rmax - rmin
    typical = float(np.median(local))
    if typical < noise_floor:
        typical = hi - lo
    thr = np.where(local >= 0.5 * typical, 0.5 * (rmin + rmax), rmin + 0.5 * typical)
    return np.repeat(thr, blk)[: s.size]


def _crossings(wave: Waveform, thr: np.ndarray, above: np.ndarray | None = None):
    """Interpolated rising and falling threshold-crossing times."""
    s = wave.samples
    if above is None:
        above = s > thr
    change = np.flatnonzero(above[1:] != above[:-1]) + 1
    if change.size == 0:
        return np.empty(0), np.empty(0), above, change
    y0 = s[change - 1] - thr[change - 1]
    y1 = s[change] - thr[change]
    frac = np.clip(y0 / (y0 - y1), 0.0, 1.0)
    t = wave.t0 + (change - 0.5 + frac) / wave.sample_rate
    rising = above[change]
    return t[rising], t[~rising], above, change


def _pair(rise, fall, above):
    """Rising edges paired with the falling edge that follows each."""
    if above[0] and fall.size and (rise.size == 0 or fall[0] < rise[0]):
        fall = fall[1:]
    n = min(rise.size, fall.size)
    return rise[:n], fall[:n]


def _pulse_edges(wave: Waveform, thr: np.ndarray):
    rise, fall, above, _ = _crossings(wave, thr)
    return _pair(rise, fall, above)


def _high_before(above: np.ndarray, change: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Number of high samples in ``above[:i]`` for each ``i`` in ``idx``.

    Works from the run boundaries ``change`` rather than a prefix sum over
    every sample.
    """
    start = np.concatenate([[0], change])
    state = (np.arange(start.size) + int(above[0])) % 2
    length = np.diff(np.append(start, above.size))
    before = np.concatenate([[0], np.cumsum(length * state)[:-1]])
    j = np.searchsorted(start, idx, side="right") - 1
    return before[j] + (idx - start[j]) * state[j]


@dataclass(frozen=True)
class ClockEstimate:
    period: float
    phase: float
    residual_rms: float
    n_edges: int

    def __iter__(self):
        return iter((self.period, self.phase))


def _min_width(cfg: LinkConfig) -> float:
    """Narrowest nominal pulse, in symbols."""
    return PWM_WIDTHS[0] if cfg.modulation is Modulation.PWM else PDM_WIDTH


def _edge_offset(cfg: LinkConfig) -> float:
    """Position of a pulse's rising edge within its symbol slot, in symbols."""
    return 0.0 if cfg.modulation is Modulation.PWM else 0.5 - PDM_WIDTH / 2


def _line(k, t):
    """Least-squares intercept and slope of ``t`` against ``k``."""
    n = k.size
    sk, st = k.sum(), t.sum()
    skk, skt = k @ k, k @ t
    den = n * skk - sk * sk
    b = (n * skt - sk * st) / den
    return float((st - b * sk) / n), float(b)


def _fit_clock(rise: np.ndarray, T0: float):
    """Fit edge times to ``a + T*k`` with integer ``k``, tolerating stray edges.

    The coarse period comes from spacings that sit near whole symbols; the
    fit then grows from the first 32 symbols outward, re-indexing edges
    against the current line each time and ignoring those more than a quarter
    symbol off it.
    """
    gaps = np.diff(rise)
    ratio = gaps / T0
    steps = np.rint(ratio)
    ok = (steps >= 1) & (steps <= 64) & (np.abs(ratio - steps) < 0.2)
    if not ok.any():
        raise NoSignalError("edge spacing inconsistent with the nominal symbol rate")
    T = float(np.median(gaps[ok] / steps[ok]))
    # times relative to the first edge keep the regression well conditioned
    t_all = rise - rise[0]
    first = t_all[t_all < 32 * T]
    a = np.angle(np.exp(2j * np.pi / T * first).sum()) / (2 * np.pi) * T
    span = 32 * T
    while True:
        t = t_all[t_all < a + span] if a + span <= t_all[-1] else t_all
        k = np.rint((t - a) / T)
        inl = np.abs(t - a - T * k) < 0.25 * T
        ki = k[inl]
        if ki.size < 3 or ki[0] == ki[-1]:
            raise NoSignalError("too few edges on a common symbol grid")
        a, T = _line(ki, t[inl])
        if t.size == t_all.size:
            break
        span *= 8
    k = np.rint((t_all - a) / T)
    resid = t_all - a - T * k
    inl = np.abs(resid) < 0.25 * T
    ki = k[inl]
    if ki.size >= 3 and ki[0] != ki[-1]:
        a, T = _line(ki, t_all[inl])
        resid = t_all - a - T * k
    return rise[0] + a, T, resid, inl


def _clock_from_edges(rise, fall, wave: Waveform, cfg: LinkConfig,
                      max_rel_error: float = 0.02, max_jitter: float = 0.15) -> ClockEstimate:
    T_nom = cfg.symbol_period
    rise = rise[(fall - rise) >= 0.5 * _min_width(cfg) * T_nom]
    if rise.size < 4:
        raise NoSignalError(f"only {rise.size} rising edges found")
    a, period, resid, inl = _fit_clock(rise, T_nom)
    rms = float(np.sqrt(resid[inl] @ resid[inl] / inl.sum())) if inl.any() else float("inf")
    if (abs(period / T_nom - 1) > max_rel_error or inl.mean() < 0.5
            or rms > max_jitter * period):
        raise NoSignalError("edges do not form a regular symbol clock")
    phase = a - _edge_offset(cfg) * period
    phase -= np.floor((phase - wave.t0) / period + SLOT_TOLERANCE) * period
    return ClockEstimate(float(period), float(phase), rms, int(rise.size))


def clock_recover(wave: Waveform, cfg: LinkConfig, thr: np.ndarray | None = None,
                  max_rel_error: float = 0.02, max_jitter: float = 0.15) -> ClockEstimate:
    """Estimate the symbol period and phase from rising-edge timing.

    Pulses narrower than half the narrowest nominal pulse are dropped as
    glitches. Each remaining rising edge gets an integer symbol index and a
    least-squares line through (index, time) gives period and phase. The
    estimate is rejected when the period is off nominal by more than
    ``max_rel_error``, when fewer than half the edges sit on the grid, or
    when their rms deviation exceeds ``max_jitter`` symbols. The returned
    phase is the earliest symbol boundary no more than ``SLOT_TOLERANCE``
    symbols before the capture start.
    """
    if thr is None:
        thr = rolling_threshold(wave, wave.sample_rate * cfg.symbol_period)
    rise, fall = _pulse_edges(wave, thr)
    return _clock_from_edges(rise, fall, wave, cfg, max_rel_error, max_jitter)


def _decoder_clock(wave: Waveform, cfg: LinkConfig, rise, fall, above) -> ClockEstimate:
    """Recovered clock, or the nominal one for captures too short to fit (1 to 3 edges).

    With too few edges the period is taken as nominal and the phase as the
    circular mean of the edge positions modulo one symbol.
    """
    try:
        return _clock_from_edges(rise, fall, wave, cfg)
    except NoSignalError:
        if rise.size >= 4:
            raise
        if rise.size == 0:
            if not above[0]:
                raise
            rise = np.array([wave.t0])  # capture opens inside a pulse
    T = cfg.symbol_period
    ang = 2 * np.pi * (rise / T - _edge_offset(cfg))
    a = np.angle(np.exp(1j * ang).mean()) / (2 * np.pi) * T
    phase = a - np.floor((a - wave.t0) / T + SLOT_TOLERANCE) * T
    return ClockEstimate(T, float(phase), 0.0, int(rise.size))


def _slot_count(wave: Waveform, clk: ClockEstimate) -> int:
    end = wave.t0 + wave.duration
    return max(int(np.floor((end - clk.phase) / clk.period + SLOT_TOLERANCE)), 0)


def _detect(wave: Waveform, cfg: LinkConfig):
    thr = rolling_threshold(wave, wave.sample_rate * cfg.symbol_period)
    rise, fall, above, change = _crossings(wave, thr)
    rise, fall = _pair(rise, fall, above)
    return above, change, rise, fall


def pwm_decode(wave: Waveform, cfg: LinkConfig, return_duty: bool = False):
    """Duty-cycle labelling: a symbol is 1 when >= half its samples are high."""
    above, change, rise, fall = _detect(wave, cfg)
    clk = _decoder_clock(wave, cfg, rise, fall, above)
    n = _slot_count(wave, clk)
    # first sample at or after each slot boundary; sample k sits at t0 + (k + 1/2)/fs
    edges = (clk.phase + clk.period * np.arange(n + 1) - wave.t0) * wave.sample_rate - 0.5
    idx = np.clip(np.ceil(edges), 0, above.size).astype(np.int64)
    total = np.diff(idx)
    high = np.diff(_high_before(above, change, idx))
    duty = high / np.maximum(total, 1)
    bits = (duty >= DUTY_THRESHOLD).astype(np.uint8)
    out = BitStream(bits)
    return (out, duty) if return_duty else out


def duty_to_bit(duty: float) -> int:
    return int(duty >= DUTY_THRESHOLD)


def pdm_pulse_centers(wave: Waveform, cfg: LinkConfig, thr: np.ndarray | None = None):
    """Centre times of detected pulses, dropping glitches narrower than half a pulse."""
    if thr is None:
        thr = rolling_threshold(wave, wave.sample_rate * cfg.symbol_period)
    rise, fall = _pulse_edges(wave, thr)
    return _centers(rise, fall, cfg)


def _centers(rise, fall, cfg: LinkConfig):
    ok = (fall - rise) >= 0.5 * PDM_WIDTH * cfg.symbol_period
    return 0.5 * (rise[ok] + fall[ok])


def pdm_decode(wave: Waveform, cfg: LinkConfig) -> BitStream:
    """Peak search: mark pulse centres on the recovered slot grid."""
    above, _, rise, fall = _detect(wave, cfg)
    centers = _centers(rise, fall, cfg)
    if centers.size == 0:
        raise NoSignalError("no pulses in capture")
    clk = _decoder_clock(wave, cfg, rise, fall, above)
    n = _slot_count(wave, clk)
    slot = np.floor((centers - clk.phase) / clk.period).astype(np.int64)
    slot = slot[(slot >= 0) & (slot < n)]
    bits = np.zeros(n, dtype=np.uint8)
    bits[slot] = 1
    return BitStream(bits)


def decode(wave: Waveform, cfg: LinkConfig) -> BitStream:
    if cfg.modulation is Modulation.PWM:
        return pwm_decode(wave, cfg)
    return pdm_decode(wave, cfg)
