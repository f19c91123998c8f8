"""JSON configuration: sections ``link``, ``tissue``, ``receiver`` and ``fus``.

Numeric keys may carry a unit suffix (``data_rate_mbps``, ``led_peak_power_mw``,
``P0_kpa`` ...); values are converted to the internal units at parse time.
Unknown keys are rejected.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import channel, fus
from .core import ConfigError, LinkConfig, config_digest

UNITS = {
    "rate": {"bps": 1.0, "kbps": 1e3, "mbps": 1e6},
    "power": {"w": 1.0, "mw": 1e-3, "uw": 1e-6, "nw": 1e-9},
    "freq": {"hz": 1.0, "khz": 1e3, "mhz": 1e6},
    "volt": {"v": 1.0, "mv": 1e-3, "uv": 1e-6},
    "pressure": {"pa": 1.0, "kpa": 1e3},
    "mm": {"mm": 1.0, "cm": 10.0, "um": 1e-3},
    "per_mm": {"per_mm": 1.0, "per_cm": 0.1},
    "farad": {"f": 1.0, "nf": 1e-9, "pf": 1e-12},
    "plain": {},
}


class _Section:
    def __init__(self, data, where: str):
        if not isinstance(data, dict):
            raise ConfigError(f"[{where}] must be an object")
        self.data = dict(data)
        self.where = where

    def take(self, name: str, kind: str = "plain", default=None, required: bool = False):
        keys = [name] + [f"{name}_{sfx}" for sfx in UNITS[kind]]
        found = [k for k in keys if k in self.data]
        if len(found) > 1:
            raise ConfigError(f"[{self.where}] {name} given more than once: {found}")
        if not found:
            if required:
                raise ConfigError(f"[{self.where}] missing required key {name!r}")
            return default
        key = found[0]
        value = self.data.pop(key)
        if key == name or value is None:
            return value
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"[{self.where}] {key} must be a number")
        return value * UNITS[kind][key[len(name) + 1:]]

    def done(self):
        if self.data:
            raise ConfigError(f"[{self.where}] unknown key(s): {sorted(self.data)}")


def _num(value, what):
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{what} must be a number, got {value!r}")
    return value


def _int(value, what):
    if isinstance(value, str):
        try:
            return int(value, 0)
        except ValueError:
            raise ConfigError(f"{what} must be an integer, got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigError(f"{what} must be an integer, got {value!r}")
    return value


# ------------------------------------------------------------------------ link


def parse_link(d) -> LinkConfig:
    s = _Section(d, "link")
    defaults = LinkConfig()
    kw = {
        "data_rate": _num(s.take("data_rate", "rate", defaults.data_rate), "data_rate"),
        "modulation": s.take("modulation", default=defaults.modulation.value),
        "oversampling": s.take("oversampling"),
        "led_peak_power": _num(s.take("led_peak_power", "power", defaults.led_peak_power),
                               "led_peak_power"),
        "prefix_pattern": _int(s.take("prefix_pattern", default=defaults.prefix_pattern),
                               "prefix_pattern"),
        "payload_len": _int(s.take("payload_len", default=defaults.payload_len), "payload_len"),
        "seed": _int(s.take("seed", default=defaults.seed), "seed"),
    }
    if kw["oversampling"] is not None:
        kw["oversampling"] = _int(kw["oversampling"], "oversampling")
    s.done()
    return LinkConfig(**kw)


# ---------------------------------------------------------------------- tissue


def _parse_tissue_layer(d, i) -> channel.TissueLayer:
    s = _Section(d, f"tissue.layers[{i}]")
    layer = channel.TissueLayer(
        name=str(s.take("name", default=f"layer{i}")),
        thickness=_num(s.take("thickness", "mm", required=True), "thickness"),
        mu_eff=_num(s.take("mu_eff", "per_mm", required=True), "mu_eff"),
        interface_reflectance=_num(
            s.take("interface_reflectance", default=channel.INTERFACE_REFLECTANCE),
            "interface_reflectance"),
    )
    s.done()
    return layer


def parse_tissue(d) -> channel.TissueStack:
    s = _Section(d, "tissue")
    preset = s.take("preset")
    layers = s.take("layers")
    gain = _num(s.take("geometry_gain"), "geometry_gain")
    name = s.take("name")
    s.done()
    if preset is not None and layers is not None:
        raise ConfigError("[tissue] give either a preset or explicit layers, not both")
    if layers is not None:
        if not isinstance(layers, list):
            raise ConfigError("[tissue] layers must be a list")
        parsed = [_parse_tissue_layer(l, i) for i, l in enumerate(layers)]
        return channel.TissueStack(parsed, channel.GEOMETRY_GAIN if gain is None else gain,
                                   name or "custom")
    stack = channel.tissue_preset(preset or "bone10_skin7")
    if gain is not None or name is not None:
        stack = channel.TissueStack(stack.layers, stack.geometry_gain if gain is None else gain,
                                    name or stack.name)
    return stack


# -------------------------------------------------------------------- receiver

_RX_FIELDS = {
    "responsivity": "plain", "apd_gain": "plain", "tia_gain": "plain", "bandwidth": "freq",
    "thermal_noise_vrms": "volt", "ambient_lux": "plain", "lux_to_power": "power",
    "flicker": "plain", "flicker_hz": "freq", "adc_fs": "volt", "adc_rate": "freq",
}


def parse_receiver(d) -> channel.RxModel:
    s = _Section(d, "receiver")
    kw = {}
    for name, kind in _RX_FIELDS.items():
        v = s.take(name, kind)
        if v is not None:
            kw[name] = _num(v, name)
    shot = s.take("shot_noise")
    if shot is not None:
        if not isinstance(shot, bool):
            raise ConfigError("[receiver] shot_noise must be true or false")
        kw["shot_noise"] = shot
    bits = s.take("adc_bits")
    if bits is not None:
        kw["adc_bits"] = _int(bits, "adc_bits")
    noiseless = s.take("noiseless", default=False)
    s.done()
    rx = channel.RxModel(**kw)
    return rx.noiseless() if noiseless else rx


# ------------------------------------------------------------------------- fus


@dataclass(frozen=True)
class FusConfig:
    path: fus.AcousticPath = field(default_factory=fus.default_path)
    limits: fus.SafetyLimits = field(default_factory=fus.SafetyLimits)
    array: str = "six-element"
    element: fus.PiezoElement = field(default_factory=fus.PiezoElement)

    def to_dict(self) -> dict:
        return {
            "path": self.path.to_dict(),
            "limits": vars(self.limits).copy(),
            "array": self.array,
            "element": vars(self.element).copy(),
        }


def _parse_acoustic_layer(d, i) -> fus.AcousticLayer:
    s = _Section(d, f"fus.layers[{i}]")
    layer = fus.AcousticLayer(
        name=str(s.take("name", default=f"layer{i}")),
        thickness=_num(s.take("thickness", "mm", required=True), "thickness"),
        attenuation=_num(s.take("attenuation", required=True), "attenuation"),
        impedance=_num(s.take("impedance", required=True), "impedance"),
        thermal_weight=_num(s.take("thermal_weight", default=1.0), "thermal_weight"),
    )
    s.done()
    return layer


def parse_fus(d) -> FusConfig:
    s = _Section(d, "fus")
    base = fus.default_path()
    layers = s.take("layers")
    P0 = _num(s.take("P0", "pressure", base.P0), "P0")
    f = _num(s.take("f", "freq", base.f), "f")
    gain = _num(s.take("focal_gain", default=base.focal_gain), "focal_gain")
    r_th = _num(s.take("thermal_resistance"), "thermal_resistance")
    limits_d = s.take("limits", default={})
    array = s.take("array", default="six-element")
    elem_d = s.take("element", default={})
    s.done()
    if layers is not None:
        if not isinstance(layers, list):
            raise ConfigError("[fus] layers must be a list")
        layer_objs = [_parse_acoustic_layer(l, i) for i, l in enumerate(layers)]
    else:
        layer_objs = base.layers
    path = fus.AcousticPath(layer_objs, focal_gain=gain, f=f, P0=P0, thermal_resistance=r_th)
    ls = _Section(limits_d, "fus.limits")
    limits = fus.SafetyLimits(
        p0_max=_num(ls.take("p0_max", "pressure", 30e3), "p0_max"),
        dT_max=_num(ls.take("dT_max", default=2.0), "dT_max"),
    )
    ls.done()
    fus.array_preset(array)  # validates the name
    es = _Section(elem_d, "fus.element")
    ekw = {}
    for name, kind in (("area", "plain"), ("clamped_capacitance", "farad"), ("coupling_k", "plain"),
                       ("resonance_f", "freq"), ("quality_q", "plain"), ("orientation", "plain")):
        v = es.take(name, kind)
        if v is not None:
            ekw[name] = _num(v, name)
    es.done()
    return FusConfig(path, limits, array, fus.PiezoElement(**ekw))


# ---------------------------------------------------------------------- top level

SECTIONS = ("link", "tissue", "receiver", "fus")

DEFAULT_CONFIG = {
    "link": {"data_rate_mbps": 5, "modulation": "PWM", "led_peak_power_mw": 1.0,
             "prefix_pattern": "0xA5", "payload_len": 190, "seed": 0},
    "tissue": {"preset": "bone10_skin7"},
    "receiver": {},
    "fus": {"P0_kpa": 30, "f_mhz": 1, "array": "six-element"},
}


@dataclass(frozen=True)
class SimConfig:
    link: LinkConfig = field(default_factory=LinkConfig)
    tissue: channel.TissueStack = field(default_factory=lambda: channel.tissue_preset("bone10_skin7"))
    receiver: channel.RxModel = field(default_factory=channel.RxModel)
    fus: FusConfig = field(default_factory=FusConfig)

    def to_dict(self) -> dict:
        return {
            "link": self.link.to_dict(),
            "tissue": self.tissue.to_dict(),
            "receiver": self.receiver.to_dict(),
            "fus": self.fus.to_dict(),
        }

    @property
    def digest(self) -> str:
        return config_digest(self.to_dict())


def parse_config(d) -> SimConfig:
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(d) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {unknown}")
    return SimConfig(
        link=parse_link(d.get("link", {})),
        tissue=parse_tissue(d.get("tissue", {})),
        receiver=parse_receiver(d.get("receiver", {})),
        fus=parse_fus(d.get("fus", {})),
    )


def default_config() -> SimConfig:
    return parse_config(copy.deepcopy(DEFAULT_CONFIG))


def load_config(path) -> SimConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return parse_config(data)


_UNIT_FIELDS = {
    "link": {"data_rate": "rate", "led_peak_power": "power"},
    "receiver": {k: v for k, v in _RX_FIELDS.items() if v != "plain"},
    "fus": {"P0": "pressure", "f": "freq"},
}


def _field_of(section: str, key: str) -> str:
    for name, kind in _UNIT_FIELDS.get(section, {}).items():
        if key == name or key in (f"{name}_{sfx}" for sfx in UNITS[kind]):
            return name
    return key


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings (values parsed as JSON when possible).

    An override replaces the field under any of its unit spellings.
    """
    data = copy.deepcopy(data)
    for item in overrides or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        lhs, raw = item.split("=", 1)
        section, key = lhs.split(".", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        sec = data.setdefault(section, {})
        if isinstance(sec, dict):
            target = _field_of(section, key)
            for k in [k for k in sec if _field_of(section, k) == target]:
                del sec[k]
        else:
            raise ConfigError(f"[{section}] must be an object")
        sec[key] = value
    return data
