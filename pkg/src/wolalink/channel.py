"""Time-varying multipath channel: TDL profiles, Jakes fading, application,
and the uplink-based time-invariant CIR estimate used for prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Scenario
from .synth import SampleStream

# 3GPP TR 38.901 tapped-delay-line profiles: (normalized delay, power dB).
# Delays scale with the target RMS delay spread.
TDL_PROFILES = {
    "TDL-A": (
        (0.0000, -13.4), (0.3819, 0.0), (0.4025, -2.2), (0.5868, -4.0),
        (0.4610, -6.0), (0.5375, -8.2), (0.6708, -9.9), (0.5750, -10.5),
        (0.7618, -7.5), (1.5375, -15.9), (1.8978, -6.6), (2.2242, -16.7),
        (2.1718, -12.4), (2.4942, -15.2), (2.5119, -10.8), (3.0582, -11.3),
        (4.0810, -12.7), (4.4579, -16.2), (4.5695, -18.3), (4.7966, -18.9),
        (5.0066, -16.6), (5.3043, -19.9), (9.6586, -29.7),
    ),
    "TDL-B": (
        (0.0000, 0.0), (0.1072, -2.2), (0.2155, -4.0), (0.2095, -3.2),
        (0.2870, -9.8), (0.2986, -1.2), (0.3752, -3.4), (0.5055, -5.2),
        (0.3681, -7.6), (0.3697, -3.0), (0.5700, -8.9), (0.5283, -9.0),
        (1.1021, -4.8), (1.2756, -5.7), (1.5474, -7.5), (1.7842, -1.9),
        (2.0169, -7.6), (2.8294, -12.2), (3.0219, -9.8), (3.6187, -11.4),
        (4.1067, -14.9), (4.2790, -9.2), (4.7834, -11.3),
    ),
    "TDL-C": (
        (0.0000, -4.4), (0.2099, -1.2), (0.2219, -3.5), (0.2329, -5.2),
        (0.2176, -2.5), (0.6366, 0.0), (0.6448, -2.2), (0.6560, -3.9),
        (0.6584, -7.4), (0.7935, -7.1), (0.8213, -10.7), (0.9336, -11.1),
        (1.2285, -5.1), (1.3083, -6.8), (2.1704, -8.7), (2.7105, -13.2),
        (4.2589, -13.9), (4.6003, -13.9), (5.4902, -15.8), (5.6077, -17.1),
        (6.3065, -16.0), (6.6374, -15.7), (7.0427, -21.6), (8.6523, -22.8),
    ),
}


@dataclass
class ChannelRealization:
    """Tap gains over time at integer-sample delays, unit mean total power."""

    delays: np.ndarray            # int, ascending, samples
    gains: np.ndarray             # complex (n_delays, duration)
    delay_offset: int             # propagation delay in samples
    pdp: str
    doppler_hz: float
    sample_rate: float

    @property
    def duration(self) -> int:
        return self.gains.shape[1]

    @property
    def max_delay(self) -> int:
        return int(self.delays[-1]) if self.delays.size else 0

    def mean_taps(self) -> np.ndarray:
        """Time-averaged dense CIR, length max_delay + 1."""
        dense = np.zeros(self.max_delay + 1, dtype=np.complex128)
        dense[self.delays] = self.gains.mean(axis=1)
        return dense

    def cfr(self, bins: np.ndarray, fft_size: int,
            time_slice: slice | None = None) -> np.ndarray:
        """Frequency response at the given bins, time-averaged over a slice."""
        g = self.gains if time_slice is None else self.gains[:, time_slice]
        taps = g.mean(axis=1)
        phases = np.exp(2j * np.pi * np.outer(np.asarray(bins, dtype=float),
                                              self.delays) / fft_size)
        return phases @ taps


def quantize_pdp(profile: str, rms_ds_ns: float,
                 sample_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Scale a TDL profile to the target RMS delay spread and snap delays to
    the sample grid, merging taps that land on the same sample."""
    if profile not in TDL_PROFILES:
        raise ValueError(f"unknown PDP profile {profile!r}")
    rows = TDL_PROFILES[profile]
    delays_s = np.array([r[0] for r in rows]) * rms_ds_ns * 1e-9
    powers = 10.0 ** (np.array([r[1] for r in rows]) / 10.0)
    samples = np.round(delays_s * sample_rate).astype(int)
    uniq = np.unique(samples)
    merged = np.array([powers[samples == d].sum() for d in uniq])
    merged /= merged.sum()
    return uniq, merged


def jakes_process(rng: np.random.Generator, doppler_hz: float,
                  times_s: np.ndarray, n_sinusoids: int = 64) -> np.ndarray:
    """One classical-Doppler fading process via a sum of sinusoids.

    Arrival angles and phases are drawn uniformly, giving ensemble
    autocorrelation J0(2*pi*fD*tau) and unit mean power.
    """
    if doppler_hz == 0.0:
        amp = (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2)
        return np.full(times_s.size, amp, dtype=np.complex128)
    angles = rng.uniform(0, 2 * np.pi, size=n_sinusoids)
    phases = rng.uniform(0, 2 * np.pi, size=n_sinusoids)
    arg = (2 * np.pi * doppler_hz * np.cos(angles)[:, None] * times_s[None, :]
           + phases[:, None])
    return np.exp(1j * arg).sum(axis=0) / np.sqrt(n_sinusoids)


def make_tdl_channel(profile: str, rms_ds_ns: float, doppler_hz: float,
                     sample_rate: float, duration: int,
                     seed: int | np.random.Generator,
                     cp_len: int | None = None,
                     n_sinusoids: int = 64) -> ChannelRealization:
    """Draw one fading realization of a scaled TDL profile.

    Each tap fades independently with a classical Doppler spectrum; the
    realization is rescaled so its time-averaged total power is exactly one.
    """
    if sample_rate <= 0:
        raise ValueError("sample rate must be positive")
    rng = np.random.default_rng(seed)
    delays, powers = quantize_pdp(profile, rms_ds_ns, sample_rate)
    if cp_len is not None and delays[-1] >= cp_len:
        raise ValueError(f"maximum tap delay {delays[-1]} samples reaches the "
                         f"CP length {cp_len}")
    times = np.arange(duration) / sample_rate
    gains = np.empty((delays.size, duration), dtype=np.complex128)
    for i, p in enumerate(powers):
        gains[i] = np.sqrt(p) * jakes_process(rng, doppler_hz, times,
                                              n_sinusoids)
    mean_power = np.mean(np.sum(np.abs(gains) ** 2, axis=0))
    gains /= np.sqrt(mean_power)
    return ChannelRealization(delays=delays, gains=gains, delay_offset=0,
                              pdp=profile, doppler_hz=doppler_hz,
                              sample_rate=sample_rate)


def propagate_channel(stream: SampleStream, ch: ChannelRealization,
                      snr_db: float) -> np.ndarray:
    """Noiseless time-varying convolution, scaled by sqrt(SNR).

    ``snr_db=inf`` means an ideal unit-gain link.  Out-of-range input
    indices read as zero.
    """
    x = stream.samples
    out_len = x.size + ch.delay_offset + ch.max_delay
    if ch.duration < out_len:
        raise ValueError("channel realization shorter than the output span")
    scale = 1.0 if np.isposinf(snr_db) else np.sqrt(10.0 ** (snr_db / 10.0))
    out = np.zeros(out_len, dtype=np.complex128)
    for i, d in enumerate(ch.delays):
        start = ch.delay_offset + int(d)
        seg = slice(start, start + x.size)
        out[seg] += ch.gains[i, seg] * x
    return out * scale


def apply_channel(stream: SampleStream, ch: ChannelRealization,
                  snr_db: float, noise_seed: int | np.random.Generator | None,
                  ) -> SampleStream:
    """Propagate a stream through the channel and add unit-variance noise.

    The signal is scaled by sqrt(SNR); the noise floor stays at unit
    variance.  ``snr_db=inf`` means an ideal noiseless link at unit gain.
    """
    out = propagate_channel(stream, ch, snr_db)
    if not np.isposinf(snr_db):
        rng = np.random.default_rng(noise_seed)
        out = out + (rng.standard_normal(out.size)
                     + 1j * rng.standard_normal(out.size)) / np.sqrt(2)
    return SampleStream(out, stream.sample_rate, origin="received")


# ---------------------------------------------------------------------------
# uplink channel estimation (time-invariant prediction input)
# ---------------------------------------------------------------------------

def _delay_basis(bins: np.ndarray, fft_size: int, n_taps: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.outer(np.asarray(bins, dtype=float),
                                        np.arange(n_taps)) / fft_size)


def cir_to_cfr(taps: np.ndarray, bins: np.ndarray, fft_size: int) -> np.ndarray:
    """Frequency response of a dense CIR at the given bins."""
    return _delay_basis(bins, fft_size, taps.size) @ taps


def fit_cir_taps(cfr: np.ndarray, bins: np.ndarray, fft_size: int,
                 n_taps: int, rcond: float = 3e-2) -> np.ndarray:
    """Least-squares fit of a delay-limited CIR to frequency samples.

    For partial-band measurements the delay basis is badly conditioned;
    singular values below ``rcond`` times the largest are truncated to keep
    noise amplification bounded.  In-band response accuracy is preserved,
    tap-level accuracy is only exact for full-band measurements.
    """
    basis = _delay_basis(bins, fft_size, n_taps)
    taps, *_ = np.linalg.lstsq(basis, cfr, rcond=rcond)
    return taps


def estimate_ul_channel(received: SampleStream, scenario: Scenario,
                        ul_grids: list, genie: list[ChannelRealization] | None = None,
                        ) -> list[np.ndarray]:
    """Per-user time-invariant CIR estimates from the uplink observation.

    For each user: extract its uplink symbols at the known timing offset,
    least-squares the frequency response at its pilot REs, fit a CIR limited
    to the CP length, and average over pilot symbols.  The estimate absorbs
    the sqrt(SNR) link scale.  With ``genie`` realizations given, estimation
    is bypassed and the true time-averaged scaled taps are returned.
    """
    from .rx import extract_symbols, fft_receive

    if genie is not None:
        out = []
        for alloc, ch in zip(scenario.users, genie):
            k = alloc.numerology.cp_len
            dense = np.zeros(k, dtype=np.complex128)
            mean = ch.mean_taps()
            dense[:min(k, mean.size)] = mean[:k]
            out.append(np.sqrt(10.0 ** (alloc.snr_db / 10.0)) * dense)
        return out

    estimates = []
    for alloc, grid in zip(scenario.users, ul_grids):
        num = alloc.numerology
        pilot_cols = sorted(set(np.nonzero(grid.pilots)[1]))
        if not pilot_cols:
            raise ValueError(f"user {alloc.name}: no uplink pilots configured")
        n_sym = grid.pilots.shape[1]
        blocks = extract_symbols(received, num, timing=scenario.ul_timing_offset,
                                 num_symbols=n_sym)
        taps = np.zeros(num.cp_len, dtype=np.complex128)
        for l in pilot_cols:
            sym = fft_receive(blocks[l], alloc)
            mask = grid.pilots[:, l] != 0
            ls = sym[mask] / grid.pilots[mask, l]
            taps += fit_cir_taps(ls, alloc.bins[mask], num.fft_size,
                                 num.cp_len)
        estimates.append(taps / len(pilot_cols))
    return estimates
