import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from translum import modem
from translum.core import BitStream, LinkConfig, NoSignalError
from translum.framing import build_frame
from translum.modem import PulseTrain, Waveform

TABLE1_COMBOS = [(0.5e6, "PWM"), (1e6, "PWM"), (2e6, "PWM"), (5e6, "PWM"), (1e6, "PDM"), (3e6, "PDM")]

bit_lists = st.lists(st.integers(0, 1), min_size=8, max_size=200)


def wave_of(bits, cfg, peak=1.0):
    return modem.rasterize(modem.encode(bits, cfg), cfg.sample_rate, peak)


# ------------------------------------------------------------------ encoders


def test_pwm_single_one(pwm_cfg):
    t = modem.pwm_encode([1], pwm_cfg)
    assert t.pulses == [(0.0, pytest.approx(750e-9), 1.0)]


def test_pwm_widths_and_starts(pwm_cfg):
    T = pwm_cfg.symbol_period
    t = modem.pwm_encode([0, 1], pwm_cfg)
    np.testing.assert_allclose(t.widths, [0.25 * T, 0.75 * T])
    np.testing.assert_allclose(t.starts, [0, T])


def test_pwm_frame_pulse_count():
    cfg = LinkConfig(data_rate=5e6)
    f = build_frame(bytes(190))
    t = modem.pwm_encode(f.bits, cfg)
    assert len(t) == 1552
    assert t.duration == pytest.approx(1552 * cfg.symbol_period)


def test_pdm_zeros_empty():
    cfg = LinkConfig(modulation="PDM")
    assert len(modem.pdm_encode([0, 0, 0], cfg)) == 0


def test_pdm_single_pulse_3mbps():
    cfg = LinkConfig(data_rate=3e6, modulation="PDM")
    (start, width, amp), = modem.pdm_encode([1], cfg).pulses
    T = 1 / 3e6
    assert width == pytest.approx(66.6667e-9, rel=1e-5)
    assert start + width / 2 == pytest.approx(T / 2)


def test_pdm_pulse_count_is_popcount(rng, pdm_cfg):
    b = rng.integers(0, 2, 1520, dtype=np.uint8)
    assert len(modem.pdm_encode(b, pdm_cfg)) == int(b.sum())


def test_encoder_checks_modulation(pwm_cfg, pdm_cfg):
    with pytest.raises(ValueError):
        modem.pdm_encode([1], pwm_cfg)
    with pytest.raises(ValueError):
        modem.pwm_encode([1], pdm_cfg)


def test_pulse_train_validation():
    with pytest.raises(ValueError):
        PulseTrain(1.0, [0.0, 0.5], [0.6, 0.2], [1, 1], 2)  # overlap
    with pytest.raises(ValueError):
        PulseTrain(1.0, [0.0], [1.5], [1], 1)  # wider than a symbol
    with pytest.raises(ValueError):
        PulseTrain(1.0, [0.0], [0.0], [1], 1)


# ---------------------------------------------------------------- rasterize


def test_rasterize_empty():
    t = PulseTrain(1e-6, [], [], [], 4)
    w = modem.rasterize(t, 16e6, 1e-3)
    assert len(w) == 64 and not w.samples.any()


def test_rasterize_075_width_gives_12_samples(pwm_cfg):
    w = wave_of([1], pwm_cfg)
    nz = np.flatnonzero(w.samples)
    assert nz.size == 12
    assert np.all(np.diff(nz) == 1)


@given(bit_lists, st.sampled_from(["PWM", "PDM"]), st.integers(0, 7))
def test_rasterize_on_time_matches_widths(bits, mod, extra_os):
    cfg = LinkConfig(data_rate=1e6, modulation=mod, oversampling=(16 if mod == "PWM" else 20) + extra_os)
    train = modem.encode(bits, cfg)
    w = modem.rasterize(train, cfg.sample_rate, 1.0)
    on_time = w.samples.sum() / w.sample_rate  # rectangle-rule integral
    # every pulse edge is off by at most half a sample
    assert abs(on_time - train.widths.sum()) <= len(train) / w.sample_rate + 1e-15
    assert set(np.unique(w.samples)) <= {0.0, 1.0}


def test_rasterize_undersampled():
    cfg = LinkConfig(data_rate=1e6, modulation="PDM", oversampling=16)  # 0.2T -> 3.2 samples
    with pytest.raises(ValueError, match="undersampled"):
        modem.rasterize(modem.encode([1], cfg), cfg.sample_rate, 1.0)


# ------------------------------------------------------------------ waveform


def test_waveform_rejects_non_finite():
    with pytest.raises(ValueError):
        Waveform(1e6, [0.0, np.nan])
    with pytest.raises(ValueError):
        Waveform(0, [0.0])


def test_waveform_csv_round_trip(tmp_path, pwm_cfg):
    w = wave_of([1, 0, 1, 1], pwm_cfg) * 0.3
    p = tmp_path / "w.csv"
    w.to_csv(p)
    assert p.read_text().splitlines()[0] == "t_s,value"
    back = modem.read_waveform_csv(p)
    np.testing.assert_array_equal(back.samples, w.samples)
    assert back.sample_rate == pytest.approx(w.sample_rate)


# ---------------------------------------------------------------- threshold


def test_threshold_alternating():
    assert modem.adaptive_threshold([0, 1, 0, 1, 0, 1]) == 0.5


def test_threshold_with_offset():
    assert modem.adaptive_threshold([0.2, 1.2, 0.2, 0.2, 1.2]) == pytest.approx(0.7)


def test_threshold_flat():
    with pytest.raises(NoSignalError):
        modem.adaptive_threshold(np.full(32, 0.3))


def test_rolling_threshold_follows_drift(pwm_cfg, rng):
    bits = rng.integers(0, 2, 2000)
    w = wave_of(bits, pwm_cfg)
    drift = 0.4 * np.sin(2 * np.pi * np.arange(len(w)) / len(w))
    drifted = Waveform(w.sample_rate, w.samples + drift)
    assert modem.decode(drifted, pwm_cfg) == BitStream(bits)


# -------------------------------------------------------------------- decode


def test_pdm_round_trip_short():
    cfg = LinkConfig(data_rate=3e6, modulation="PDM")
    assert list(modem.pdm_decode(wave_of([1, 0, 1], cfg), cfg)) == [1, 0, 1]


def test_pdm_short_with_noise():
    cfg = LinkConfig(data_rate=3e6, modulation="PDM")
    w = wave_of([1, 0, 1], cfg)
    noise = 0.1 * np.random.default_rng(2024).standard_normal(len(w))
    assert list(modem.pdm_decode(Waveform(w.sample_rate, w.samples + noise), cfg)) == [1, 0, 1]


@pytest.mark.parametrize("mod", ["PWM", "PDM"])
def test_all_zero_waveform_no_signal(mod):
    cfg = LinkConfig(modulation=mod)
    with pytest.raises(NoSignalError):
        modem.decode(Waveform(cfg.sample_rate, np.zeros(4000)), cfg)


def test_duty_rule():
    assert modem.duty_to_bit(0.75) == 1
    assert modem.duty_to_bit(0.25) == 0
    assert modem.duty_to_bit(0.5) == 1


@settings(max_examples=1000)
@given(st.lists(st.integers(0, 1), min_size=6, max_size=64), st.integers(8, 24))
def test_exact_half_duty_decodes_as_one(marks, os2):
    # pulses of exactly half a symbol in the marked slots, 0.25T pulses elsewhere;
    # even oversampling makes 0.5T an exact whole number of samples
    cfg = LinkConfig(data_rate=1e6, oversampling=2 * os2)
    T = cfg.symbol_period
    n = len(marks)
    widths = np.where(np.array(marks) == 1, 0.5, 0.25) * T
    train = PulseTrain(T, np.arange(n) * T, widths, np.ones(n), n)
    w = modem.rasterize(train, cfg.sample_rate, 1.0)
    bits, duty = modem.pwm_decode(w, cfg, return_duty=True)
    marked = np.array(marks) == 1
    assert np.all(duty[marked] == 0.5)
    assert list(bits) == marks


@settings(max_examples=1000)
@given(bit_lists, st.sampled_from(["PWM", "PDM"]), st.floats(1e-6, 1e6))
def test_amplitude_invariance(bits, mod, k):
    if mod == "PDM" and sum(bits) == 0:
        bits = bits[:-1] + [1]
    cfg = LinkConfig(data_rate=2e6, modulation=mod)
    w = wave_of(bits, cfg)
    assert modem.decode(w * k, cfg) == modem.decode(w, cfg) == BitStream(bits)


@settings(max_examples=1000)
@given(bit_lists, st.sampled_from(["PWM", "PDM"]), st.floats(-0.499, 0.499))
def test_dc_invariance(bits, mod, dc):
    if mod == "PDM" and sum(bits) == 0:
        bits = bits[:-1] + [1]
    cfg = LinkConfig(data_rate=2e6, modulation=mod)
    w = wave_of(bits, cfg)
    assert modem.decode(w + dc, cfg) == BitStream(bits)


@settings(max_examples=1000)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=300))
def test_pdm_pulse_count_conservation(bits):
    cfg = LinkConfig(data_rate=3e6, modulation="PDM")
    if sum(bits) == 0:
        with pytest.raises(NoSignalError):
            modem.pdm_decode(wave_of(bits, cfg), cfg)
        return
    w = wave_of(bits, cfg)
    assert modem.pdm_pulse_centers(w, cfg).size == sum(bits)
    assert modem.pdm_decode(w, cfg).popcount() == sum(bits)


@pytest.mark.parametrize("rate,mod", TABLE1_COMBOS)
def test_noiseless_round_trip_1e5_bits(rate, mod):
    cfg = LinkConfig(data_rate=rate, modulation=mod)
    bits = np.random.default_rng(int(rate) + len(mod)).integers(0, 2, 10**5, dtype=np.uint8)
    bits[0] = 1  # anchor the first slot for PDM
    got = modem.decode(wave_of(bits, cfg, peak=2e-4), cfg)
    assert got == BitStream(bits)


# ------------------------------------------------------------ clock recovery


def test_clock_noiseless_1mbps(pwm_cfg):
    f = build_frame(np.random.default_rng(5).integers(0, 256, 190, dtype=np.uint8).tobytes())
    clk = modem.clock_recover(wave_of(f.bits, pwm_cfg), pwm_cfg)
    assert 0.9999e-6 <= clk.period <= 1.0001e-6
    period, phase = clk
    assert abs(phase) < 1e-3 * period


@pytest.mark.parametrize("mod", ["PWM", "PDM"])
@pytest.mark.parametrize("ppm", [-50, 50])
def test_clock_skew_tracking(mod, ppm):
    cfg = LinkConfig(data_rate=1e6, modulation=mod, oversampling=24)
    skewed = LinkConfig(data_rate=1e6 / (1 + ppm * 1e-6), modulation=mod, oversampling=24)
    f = build_frame(np.random.default_rng(8).integers(0, 256, 190, dtype=np.uint8).tobytes())
    # transmitter clock runs off nominal; receiver samples at the nominal rate
    w = modem.rasterize(modem.encode(f.bits, skewed), cfg.sample_rate, 1.0)
    clk = modem.clock_recover(w, cfg)
    assert abs(clk.period / skewed.symbol_period - 1) < 100e-6
    assert modem.decode(w, cfg) == f.bits


def test_clock_constant_waveform():
    cfg = LinkConfig()
    with pytest.raises(NoSignalError):
        modem.clock_recover(Waveform(cfg.sample_rate, np.full(2000, 0.4)), cfg)


def test_clock_too_few_edges(pwm_cfg):
    with pytest.raises(NoSignalError):
        modem.clock_recover(wave_of([0, 0, 1], pwm_cfg), pwm_cfg)


def test_clock_rejects_wrong_rate():
    tx = LinkConfig(data_rate=1e6)
    rx = LinkConfig(data_rate=1.1e6, oversampling=16)
    bits = np.random.default_rng(1).integers(0, 2, 500)
    w = modem.rasterize(modem.encode(bits, tx), tx.sample_rate, 1.0)
    with pytest.raises(NoSignalError):
        modem.clock_recover(w, rx)
