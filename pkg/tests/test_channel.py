import numpy as np
import pytest
from scipy.special import j0

from wolalink.channel import (
    ChannelRealization,
    apply_channel,
    estimate_ul_channel,
    jakes_process,
    make_tdl_channel,
    quantize_pdp,
)
from wolalink.grid import build_grid
from wolalink.synth import SampleStream, synthesize_cp_ofdm

from conftest import single_user_scenario


FS = 7.68e6


def _static_channel(delays, gains, duration, fs=FS, offset=0):
    d = np.asarray(delays, dtype=int)
    g = np.tile(np.asarray(gains, dtype=np.complex128)[:, None], (1, duration))
    return ChannelRealization(delays=d, gains=g, delay_offset=offset,
                              pdp="custom", doppler_hz=0.0, sample_rate=fs)


def test_zero_doppler_taps_constant():
    ch = make_tdl_channel("TDL-A", 30.0, 0.0, FS, duration=512, seed=0)
    assert np.allclose(ch.gains, ch.gains[:, :1])


def test_jakes_autocorrelation_matches_bessel():
    fd = 100.0
    lag = 0.5 / fd                      # fD * tau = 0.5
    times = np.array([0.0, lag])
    acc = 0.0
    n = 10_000
    rng = np.random.default_rng(42)
    for _ in range(n):
        h = jakes_process(rng, fd, times)
        acc += h[0] * np.conj(h[1])
    rho = acc / n
    assert abs(rho.real - j0(2 * np.pi * fd * lag)) < 0.05
    assert abs(rho.imag) < 0.05


def test_quantized_tdl_b_keeps_delay_spread():
    delays, powers = quantize_pdp("TDL-B", 100.0, FS)
    t = delays / FS
    mean = np.sum(powers * t)
    rms = np.sqrt(np.sum(powers * t**2) - mean**2)
    assert abs(rms - 100e-9) / 100e-9 < 0.10


def test_realization_power_normalized():
    ch = make_tdl_channel("TDL-B", 100.0, 444.0, FS, duration=4096, seed=3)
    total = np.mean(np.sum(np.abs(ch.gains) ** 2, axis=0))
    assert abs(total - 1.0) < 1e-12


def test_identity_channel_noiseless_is_transparent():
    x = SampleStream(np.exp(1j * np.linspace(0, 5, 257)), FS)
    ch = _static_channel([0], [1.0], duration=300)
    y = apply_channel(x, ch, snr_db=np.inf, noise_seed=None)
    assert np.allclose(y.samples[:257], x.samples, atol=1e-15)


def test_noise_only_has_unit_variance():
    n = 40_000
    x = SampleStream(np.ones(n, dtype=np.complex128), FS)
    ch = _static_channel([0], [1.0], duration=n + 1)
    y = apply_channel(x, ch, snr_db=-np.inf, noise_seed=9)
    var = np.mean(np.abs(y.samples) ** 2)
    assert abs(var - 1.0) < 3.0 / np.sqrt(n)


def test_two_tap_impulse_response():
    x = np.zeros(16, dtype=np.complex128)
    x[0] = 1.0
    ch = _static_channel([0, 3], [0.8, 0.3j], duration=32)
    y = apply_channel(SampleStream(x, FS), ch, snr_db=np.inf, noise_seed=None)
    expect = np.zeros(19, dtype=np.complex128)
    expect[0], expect[3] = 0.8, 0.3j
    assert np.allclose(y.samples, expect, atol=1e-15)


def test_propagation_delay_shifts_signal():
    x = np.zeros(8, dtype=np.complex128)
    x[0] = 1.0
    ch = _static_channel([0], [1.0], duration=80, offset=5)
    y = apply_channel(SampleStream(x, FS), ch, snr_db=np.inf, noise_seed=None)
    assert y.samples[5] == 1.0
    assert np.count_nonzero(y.samples) == 1


def test_power_conservation_long_stream():
    rng = np.random.default_rng(11)
    n = 30_000
    x = np.exp(1j * 2 * np.pi * rng.random(n))
    ch = make_tdl_channel("TDL-C", 100.0, 200.0, FS, duration=n + 16, seed=5)
    y = apply_channel(SampleStream(x, FS), ch, snr_db=np.inf, noise_seed=None)
    p = np.mean(np.abs(y.samples[:n]) ** 2)
    assert abs(p - 1.0) < 0.03


def test_doppler_spectrum_concentrates_in_band():
    fd, fs = 50.0, 2000.0
    rng = np.random.default_rng(21)
    h = jakes_process(rng, fd, np.arange(8192) / fs)
    spec = np.abs(np.fft.fft(h * np.hanning(h.size))) ** 2
    freqs = np.fft.fftfreq(h.size, 1 / fs)
    in_band = np.abs(freqs) <= 1.1 * fd
    assert spec[in_band].sum() / spec.sum() > 0.95


def test_delay_exceeding_cp_rejected():
    with pytest.raises(ValueError, match="CP"):
        make_tdl_channel("TDL-C", 500.0, 0.0, FS, duration=64, seed=0,
                         cp_len=9)


def test_zero_sample_rate_rejected():
    with pytest.raises(ValueError, match="sample rate"):
        make_tdl_channel("TDL-A", 30.0, 0.0, 0.0, duration=64, seed=0)


# ---------------------------------------------------------------------------
# uplink estimation
# ---------------------------------------------------------------------------

def _ul_setup(snr_db, seed, doppler=0.0):
    # full-band pilots keep the delay-basis fit perfectly conditioned
    sc = single_user_scenario(n=64, m=64, l=4, cp_rate="1/8", start=-32,
                              spacing=120e3, snr_db=snr_db,
                              ul_dmrs="every-nth:1")
    alloc = sc.users[0]
    grid = build_grid(alloc, "every-nth:1", seed=seed)
    x = synthesize_cp_ofdm(sc, [grid])
    ch = make_tdl_channel("TDL-B", 80.0, doppler, sc.sample_rate,
                          duration=x.samples.size + sc.ul_timing_offset + 16,
                          seed=seed + 1, cp_len=alloc.numerology.cp_len)
    ch.delay_offset = sc.ul_timing_offset
    return sc, alloc, grid, x, ch


def test_ul_estimate_exact_when_noiseless_static():
    sc, alloc, grid, x, ch = _ul_setup(snr_db=10.0, seed=2)
    y = apply_channel(x, ch, snr_db=np.inf, noise_seed=None)
    (taps,) = estimate_ul_channel(y, sc, [grid])
    true = np.zeros(alloc.numerology.cp_len, dtype=np.complex128)
    dense = ch.mean_taps()
    true[:dense.size] = dense
    assert np.max(np.abs(taps - true)) < 1e-6


def test_ul_estimate_genie_passthrough():
    sc, alloc, grid, x, ch = _ul_setup(snr_db=13.0, seed=4, doppler=100.0)
    (taps,) = estimate_ul_channel(SampleStream(np.zeros(1), FS), sc, [grid],
                                  genie=[ch])
    k = alloc.numerology.cp_len
    expect = np.sqrt(10 ** 1.3) * ch.mean_taps()[:k]
    assert np.allclose(taps[:expect.size], expect)


def test_ul_estimate_mse_at_10db():
    err, power = 0.0, 0.0
    for seed in range(100):
        sc, alloc, grid, x, ch = _ul_setup(snr_db=10.0, seed=seed)
        y = apply_channel(x, ch, snr_db=10.0, noise_seed=seed + 500)
        (taps,) = estimate_ul_channel(y, sc, [grid])
        true = np.zeros(alloc.numerology.cp_len, dtype=np.complex128)
        dense = ch.mean_taps()
        true[:dense.size] = dense
        true *= np.sqrt(10.0)
        err += np.sum(np.abs(taps - true) ** 2)
        power += np.sum(np.abs(true) ** 2)
    assert err / power < 0.1


def test_ul_estimate_requires_pilots():
    sc, alloc, grid, x, ch = _ul_setup(snr_db=10.0, seed=6)
    grid.pilots = np.zeros_like(grid.pilots)
    y = apply_channel(x, ch, snr_db=np.inf, noise_seed=None)
    with pytest.raises(ValueError, match="pilot"):
        estimate_ul_channel(y, sc, [grid])
