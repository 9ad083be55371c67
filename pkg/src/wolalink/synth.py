"""CP-OFDM sample synthesis and per-RE transmitter windowing.

The synthesis kernel maps the symbol on FFT bin ``m`` to time samples
``exp(-2j*pi*m*n/N)/sqrt(N)`` (body index ``n`` starting after the CP); the
matching receiver analysis kernel lives in :mod:`wolalink.rx`.

Transmitter windowing never extends a symbol: it reuses cyclic-prefix
samples as the transition region between consecutive symbols of one
resource element.  Windowed streams are produced differentially, by adding
per-sample correction terms to the conventional CP-OFDM stream, which makes
per-RE window durations cheap to probe and to commit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ResourceGrid, Scenario, UserAllocation


@dataclass
class SampleStream:
    """Complex baseband samples with rate and origin metadata."""

    samples: np.ndarray
    sample_rate: float
    origin: str = "base"        # "base" | "tx-windowed" | "received"

    def copy(self, origin: str | None = None) -> "SampleStream":
        return SampleStream(self.samples.copy(), self.sample_rate,
                            origin if origin is not None else self.origin)


@dataclass
class TxWindowPlan:
    """Integer window durations per user, each bounded by that user's CP."""

    durations: list[np.ndarray]   # per user, int (M, L)
    shape: str = "raised-cosine"

    def validate(self, scenario: Scenario) -> None:
        for alloc, t in zip(scenario.users, self.durations):
            if t.shape != (alloc.num_subcarriers, alloc.numerology.num_symbols):
                raise ValueError(f"plan shape {t.shape} mismatches grid of "
                                 f"user {alloc.name}")
            if t.min() < 0 or t.max() > alloc.numerology.cp_len:
                raise ValueError("window duration outside [0, CP length]")


def zero_plan(scenario: Scenario, shape: str = "raised-cosine") -> TxWindowPlan:
    return TxWindowPlan(
        [np.zeros((u.num_subcarriers, u.numerology.num_symbols), dtype=int)
         for u in scenario.users],
        shape=shape,
    )


# ---------------------------------------------------------------------------
# taper family
# ---------------------------------------------------------------------------

def raised_cosine_edge(duration: int) -> np.ndarray:
    """Rising raised-cosine edge weights w_1..w_T, half-sample offset."""
    if duration == 0:
        return np.zeros(0)
    i = np.arange(1, duration + 1)
    return 0.5 * (1.0 - np.cos(np.pi * (i - 0.5) / duration))


TAPER_FAMILIES = {"raised-cosine": raised_cosine_edge}


def tx_window_taper(duration: int, fft_size: int, cp_len: int,
                    family: str = "raised-cosine") -> np.ndarray:
    """Full transmitter taper of length CP + body + duration.

    The first ``duration`` entries ramp up over the CP, the interior is one,
    and the trailing cyclic-suffix entries are the exact complements of the
    leading edge, so ``t[k] == 1 - t[k + N + K]`` holds sample-wise.
    """
    if not 0 <= duration <= cp_len:
        raise ValueError(f"duration {duration} outside [0, {cp_len}]")
    edge = TAPER_FAMILIES[family](duration)
    taper = np.ones(cp_len + fft_size + duration)
    taper[:duration] = edge
    if duration:
        taper[cp_len + fft_size:] = 1.0 - edge
    return taper


# ---------------------------------------------------------------------------
# conventional synthesis
# ---------------------------------------------------------------------------

def _user_stream(alloc: UserAllocation, grid: ResourceGrid) -> np.ndarray:
    num = alloc.numerology
    n, k = num.fft_size, num.cp_len
    spectrum = np.zeros((n, num.num_symbols), dtype=np.complex128)
    spectrum[alloc.bins, :] = grid.symbols
    body = np.fft.fft(spectrum, axis=0) / np.sqrt(n)
    with_cp = np.concatenate([body[n - k:, :], body], axis=0)
    return with_cp.reshape(-1, order="F")


def synthesize_cp_ofdm(scenario: Scenario,
                       grids: list[ResourceGrid]) -> SampleStream:
    """Sum of all users' CP-prepended OFDM symbol streams."""
    if len(grids) != scenario.num_users:
        raise ValueError("one grid per user required")
    out = np.zeros(scenario.slot_samples, dtype=np.complex128)
    for alloc, grid in zip(scenario.users, grids):
        expect = (alloc.num_subcarriers, alloc.numerology.num_symbols)
        if grid.symbols.shape != expect:
            raise ValueError(f"grid shape {grid.symbols.shape} mismatches "
                             f"allocation {expect} of user {alloc.name}")
        out += _user_stream(alloc, grid)
    return SampleStream(out, scenario.sample_rate, origin="base")


# ---------------------------------------------------------------------------
# differential transmitter windowing
# ---------------------------------------------------------------------------

def _predecessor(symbols: np.ndarray, m: int, l: int) -> complex:
    # the slot-initial symbol blends from silence
    return symbols[m, l - 1] if l > 0 else 0.0


def transition_term(symbols: np.ndarray, m_bin: int, m_row: int, l: int,
                    fft_size: int, cp_len: int) -> complex:
    """Phase-rotated difference between predecessor and current RE symbol.

    The term is zero exactly when consecutive symbols are phase-continuous
    across the CP boundary, in which case windowing changes nothing.
    """
    rot = np.exp(2j * np.pi * m_bin * cp_len / fft_size)
    return _predecessor(symbols, m_row, l) - rot * symbols[m_row, l]


def tx_window_sample_delta(grid: ResourceGrid, alloc: UserAllocation,
                           m: int, l: int, k: int, duration: int,
                           family: str = "raised-cosine") -> complex:
    """Correction for CP sample ``k`` (1-based, k <= duration) of RE (m, l).

    Adding the returned value to the conventional stream converts that
    sample to its windowed value.
    """
    num = alloc.numerology
    if not 1 <= k <= duration:
        raise ValueError(f"sample index {k} outside windowed range "
                         f"[1, {duration}]")
    if duration > num.cp_len:
        raise ValueError("duration exceeds CP length")
    taper = tx_window_taper(duration, num.fft_size, num.cp_len, family)
    suffix_w = taper[num.cp_len + num.fft_size + k - 1]
    m_bin = int(alloc.bins[m])
    delta = transition_term(grid.symbols, m_bin, m, l,
                            num.fft_size, num.cp_len)
    phase = np.exp(-2j * np.pi * m_bin * (k - 1) / num.fft_size)
    return suffix_w * phase * delta / np.sqrt(num.fft_size)


def _column_deltas(alloc: UserAllocation, symbols: np.ndarray,
                   durations: np.ndarray, l: int,
                   family: str) -> np.ndarray:
    """Summed per-sample corrections for all windowed REs of symbol ``l``."""
    num = alloc.numerology
    n, k = num.fft_size, num.cp_len
    t_col = durations[:, l]
    t_max = int(t_col.max())
    out = np.zeros(t_max, dtype=np.complex128)
    if t_max == 0:
        return out
    bins = alloc.bins
    rot = np.exp(2j * np.pi * bins * k / n)
    prev = symbols[:, l - 1] if l > 0 else np.zeros(symbols.shape[0])
    delta = prev - rot * symbols[:, l]
    for d in np.unique(t_col):
        d = int(d)
        if d == 0:
            continue
        rows = np.where(t_col == d)[0]
        suffix_w = 1.0 - TAPER_FAMILIES[family](d)          # weights at k=1..d
        phases = np.exp(-2j * np.pi
                        * np.outer(np.arange(d), bins[rows]) / n)
        out[:d] += suffix_w * (phases @ delta[rows]) / np.sqrt(n)
    return out


def apply_tx_windowing(base: SampleStream, scenario: Scenario,
                       grids: list[ResourceGrid],
                       plan: TxWindowPlan) -> SampleStream:
    """Convert a conventional CP-OFDM stream into its per-RE windowed form.

    Only the first ``plan`` CP samples of each windowed RE's symbol change;
    every other sample is bit-identical to the input stream.
    """
    plan.validate(scenario)
    out = base.samples.copy()
    for alloc, grid, durations in zip(scenario.users, grids, plan.durations):
        num = alloc.numerology
        symbols = grid.symbols
        for l in range(num.num_symbols):
            deltas = _column_deltas(alloc, symbols, durations, l, plan.shape)
            if deltas.size:
                start = l * num.symbol_len
                out[start:start + deltas.size] += deltas
    return SampleStream(out, base.sample_rate, origin="tx-windowed")
