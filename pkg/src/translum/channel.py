"""Optical signal path: LED -> layered tissue -> ambient light -> APD/TIA -> ADC."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.constants import elementary_charge
from scipy.signal import lfilter

from .core import ConfigError
from .modem import Waveform

# Effective attenuation at 810 nm, mm^-1. Order-of-magnitude tissue optics,
# treated as calibration parameters rather than measured truth.
BOVINE_BENCH = {
    "skin": 0.25,
    "bone": 0.35,
    "connective": 0.2,
    "dura": 0.2,
    "sinus_wall": 0.1,
}
INTERFACE_REFLECTANCE = 0.02
GEOMETRY_GAIN = 0.1


@dataclass(frozen=True)
class TissueLayer:
    name: str
    thickness: float  # mm
    mu_eff: float  # mm^-1
    interface_reflectance: float = INTERFACE_REFLECTANCE

    def __post_init__(self):
        if self.thickness < 0:
            raise ConfigError(f"layer {self.name}: thickness must be >= 0")
        if self.mu_eff < 0:
            raise ConfigError(f"layer {self.name}: mu_eff must be >= 0")
        if not 0 <= self.interface_reflectance < 1:
            raise ConfigError(f"layer {self.name}: interface_reflectance must be in [0, 1)")

    @property
    def transmission(self) -> float:
        return (1.0 - self.interface_reflectance) * float(np.exp(-self.mu_eff * self.thickness))


@dataclass(frozen=True)
class TissueStack:
    layers: tuple[TissueLayer, ...] = ()
    geometry_gain: float = GEOMETRY_GAIN
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not 0 < self.geometry_gain <= 1:
            raise ConfigError("geometry_gain must be in (0, 1]")

    @property
    def gain(self) -> float:
        """Optical power transmission factor of the whole stack."""
        g = self.geometry_gain
        for layer in self.layers:
            g *= layer.transmission
        return g

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "geometry_gain": self.geometry_gain,
            "layers": [asdict(l) for l in self.layers],
        }


def bench_stack(bone_mm: float, skin_mm: float = 7.0, geometry_gain: float = GEOMETRY_GAIN,
                name: str | None = None) -> TissueStack:
    """Bovine bench sample: bone slabs (implant side) under skin with subcutaneous fat."""
    layers = (
        TissueLayer("bone", bone_mm, BOVINE_BENCH["bone"]),
        TissueLayer("skin", skin_mm, BOVINE_BENCH["skin"]),
    )
    return TissueStack(layers, geometry_gain, name or f"bone{bone_mm:g}_skin{skin_mm:g}")


def head_stack(geometry_gain: float = GEOMETRY_GAIN) -> TissueStack:
    """Sinus wall to scalp, implant side first."""
    layers = (
        TissueLayer("sinus_wall", 0.5, BOVINE_BENCH["sinus_wall"]),
        TissueLayer("dura", 1.0, BOVINE_BENCH["dura"]),
        TissueLayer("skull", 7.0, BOVINE_BENCH["bone"]),
        TissueLayer("connective", 3.0, BOVINE_BENCH["connective"]),
        TissueLayer("skin", 7.0, BOVINE_BENCH["skin"]),
    )
    return TissueStack(layers, geometry_gain, "human_head")


TISSUE_PRESETS = {
    "bone5_skin7": lambda: bench_stack(5.0),
    "bone8_skin7": lambda: bench_stack(8.0),
    "bone10_skin7": lambda: bench_stack(10.0),
    "human_head": head_stack,
    "none": lambda: TissueStack((), 1.0, "none"),
}


def tissue_preset(name: str) -> TissueStack:
    try:
        return TISSUE_PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown tissue preset {name!r}; choose from {sorted(TISSUE_PRESETS)}") from None


@dataclass(frozen=True)
class RxModel:
    """APD + TIA + ADC front end.

    ``adc_rate=None`` locks the ADC to the incoming sample clock.
    """

    responsivity: float = 0.5  # A/W at 810 nm
    apd_gain: float = 50.0
    tia_gain: float = 1e4  # V/A
    bandwidth: float = 25e6  # Hz, single pole
    thermal_noise_vrms: float = 8e-3
    shot_noise: bool = True
    ambient_lux: float = 200.0
    lux_to_power: float = 5e-9  # W/lux reaching the detector
    flicker: float = 0.1  # relative amplitude of mains flicker
    flicker_hz: float = 100.0
    adc_bits: int = 14
    adc_fs: float = 1.0  # V
    adc_rate: float | None = None

    def __post_init__(self):
        for name in ("responsivity", "apd_gain", "tia_gain", "bandwidth", "adc_fs"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"receiver {name} must be > 0")
        for name in ("thermal_noise_vrms", "ambient_lux", "lux_to_power", "flicker"):
            if getattr(self, name) < 0:
                raise ConfigError(f"receiver {name} must be >= 0")
        if self.adc_bits < 8 or int(self.adc_bits) != self.adc_bits:
            raise ConfigError("adc_bits must be an integer >= 8")
        if self.adc_rate is not None and not self.adc_rate > 0:
            raise ConfigError("adc_rate must be > 0")

    @property
    def transimpedance(self) -> float:
        """Volts out per watt of optical input."""
        return self.responsivity * self.apd_gain * self.tia_gain

    @property
    def lsb(self) -> float:
        # codes k * fs / 2^bits; the top code k = 2^bits is reached only by clipping
        return self.adc_fs / 2 ** self.adc_bits

    def validate_for(self, data_rate: float) -> None:
        if not self.bandwidth > data_rate / 2:
            raise ConfigError(
                f"receiver bandwidth {self.bandwidth:g} Hz is below half the data rate"
            )

    def noiseless(self) -> "RxModel":
        return replace(self, thermal_noise_vrms=0.0, shot_noise=False, ambient_lux=0.0)

    def to_dict(self) -> dict:
        return asdict(self)


# ------------------------------------------------------------------ operations


def propagate(tx: Waveform, stack: TissueStack) -> Waveform:
    """Linear, memoryless attenuation by the tissue stack."""
    if tx.samples.size and tx.samples.min() < 0:
        raise ValueError("optical power cannot be negative")
    return Waveform.trusted(tx.sample_rate, tx.samples * stack.gain, tx.t0)


def ambient(duration: float, sample_rate: float, rx: RxModel, t0: float = 0.0) -> Waveform:
    """Room light at the detector: DC plus mains flicker."""
    if not duration > 0:
        raise ValueError("duration must be > 0")
    n = int(np.ceil(duration * sample_rate - 1e-9))
    dc = rx.ambient_lux * rx.lux_to_power
    if dc == 0 or rx.flicker == 0:
        return Waveform(sample_rate, np.full(n, dc), t0)
    # sin(w(t0 + u)) = sin(w t0) cos(w u) + cos(w t0) sin(w u), with u cached per length
    w = 2 * np.pi * rx.flicker_hz
    cap = -(-n // 65536) * 65536
    cos_u, sin_u = _phasor(cap, sample_rate, rx.flicker_hz)
    cos_u, sin_u = cos_u[:n], sin_u[:n]
    a = dc * rx.flicker * np.sin(w * t0)
    b = dc * rx.flicker * np.cos(w * t0)
    return Waveform.trusted(sample_rate, dc + a * cos_u + b * sin_u, t0)


@lru_cache(maxsize=16)
def _phasor(n: int, sample_rate: float, freq: float):
    u = 2 * np.pi * freq * (np.arange(n) + 0.5) / sample_rate
    c, s = np.cos(u), np.sin(u)
    c.flags.writeable = False
    s.flags.writeable = False
    return c, s


def apd_tia(optical: Waveform, rx: RxModel, rng: np.random.Generator | None = None) -> Waveform:
    """Photocurrent with shot noise, transimpedance gain, single-pole roll-off, thermal noise."""
    p = optical.samples
    if p.size and p.min() < 0:
        raise ValueError("optical power cannot be negative")
    current = (rx.responsivity * rx.apd_gain) * p
    shot = rx.shot_noise and bool(p.size) and p.max() > 0
    if (shot or rx.thermal_noise_vrms > 0) and rng is None:
        raise ValueError("a random generator is required when noise is enabled")
    if shot:
        sigma = np.sqrt((2 * elementary_charge * rx.bandwidth) * current)
        sigma *= rng.standard_normal(current.size)
        current += sigma
    v = current
    v *= rx.tia_gain
    if v.size:
        a = float(np.exp(-2 * np.pi * rx.bandwidth / optical.sample_rate))
        # start settled at the first sample's level
        v = lfilter([1 - a], [1, -a], v, zi=[a * v[0]])[0]
    if rx.thermal_noise_vrms > 0:
        n = rng.standard_normal(v.size)
        n *= rx.thermal_noise_vrms
        v += n
    return Waveform.trusted(optical.sample_rate, v, optical.t0)


def adc_sample(analog: Waveform, rx: RxModel) -> Waveform:
    """Decimate to the ADC rate, clip to [0, full scale] and quantize."""
    rate = analog.sample_rate if rx.adc_rate is None else rx.adc_rate
    if rate > analog.sample_rate * (1 + 1e-12):
        raise ValueError("adc_rate exceeds the analog sample rate")
    s = analog.samples
    if rate != analog.sample_rate:
        n = int(np.floor(analog.duration * rate + 1e-9))
        idx = np.floor((np.arange(n) + 0.5) * analog.sample_rate / rate).astype(np.int64)
        s = s[np.minimum(idx, s.size - 1)]
    lsb = rx.lsb
    q = np.clip(s, 0.0, rx.adc_fs)
    q *= 1.0 / lsb
    np.rint(q, out=q)
    q *= lsb
    return Waveform.trusted(rate, q, analog.t0)


def end_to_end(tx: Waveform, stack: TissueStack, rx: RxModel,
               rng: np.random.Generator | None = None, t0: float | None = None) -> Waveform:
    """propagate -> + ambient -> apd_tia -> adc_sample."""
    start = tx.t0 if t0 is None else t0
    rx_opt = propagate(tx, stack)
    if rx.ambient_lux > 0 and tx.samples.size:
        amb = ambient(tx.duration, tx.sample_rate, rx, t0=start)
        rx_opt = Waveform.trusted(tx.sample_rate, rx_opt.samples + amb.samples, tx.t0)
    return adc_sample(apd_tia(rx_opt, rx, rng), rx)


def link_snr_db(stack: TissueStack, rx: RxModel, led_peak_power: float) -> float:
    """Pulse amplitude over total noise rms at the TIA output, in dB."""
    p_sig = led_peak_power * stack.gain
    v_sig = p_sig * rx.transimpedance
    i_mean = rx.responsivity * rx.apd_gain * (p_sig + rx.ambient_lux * rx.lux_to_power)
    var = rx.thermal_noise_vrms ** 2
    if rx.shot_noise:
        var += rx.tia_gain ** 2 * 2 * elementary_charge * i_mean * rx.bandwidth
    var += (rx.lsb ** 2) / 12
    return float(20 * np.log10(v_sig / np.sqrt(var))) if v_sig > 0 else float("-inf")
