"""Reception chain: symbol extraction, FFT demapping, per-RE receiver
windowing via symbol-level correction terms, transform-domain channel
estimation and MMSE equalization.

The analysis kernel is ``exp(+2j*pi*m*n/N)/sqrt(N)``, the inverse of the
synthesis kernel in :mod:`wolalink.synth`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Numerology, UserAllocation
from .synth import TAPER_FAMILIES, SampleStream


@dataclass
class ReceivedGrid:
    """Base and receiver-windowed symbol planes plus the chosen durations."""

    base: np.ndarray              # complex (M, L)
    windowed: np.ndarray          # complex (M, L)
    rx_plan: np.ndarray           # int (M, L)

    def validate(self, cp_len: int) -> None:
        if self.rx_plan.min() < 0 or self.rx_plan.max() > cp_len:
            raise ValueError("receiver window duration outside [0, CP length]")
        unwindowed = self.rx_plan == 0
        if not np.array_equal(self.windowed[unwindowed], self.base[unwindowed]):
            raise ValueError("windowed plane differs where duration is zero")


def extract_symbols(stream: SampleStream, numerology: Numerology,
                    timing: int = 0,
                    num_symbols: int | None = None) -> np.ndarray:
    """Split a received stream into per-symbol CP+body blocks, shape (L, N+K)."""
    L = num_symbols if num_symbols is not None else numerology.num_symbols
    sym_len = numerology.symbol_len
    needed = timing + L * sym_len
    if stream.samples.size < needed:
        raise ValueError(f"stream of {stream.samples.size} samples too short "
                         f"for {L} symbols at offset {timing}")
    seg = stream.samples[timing:needed]
    return seg.reshape(L, sym_len)


def fft_receive(symbol_samples: np.ndarray, alloc: UserAllocation) -> np.ndarray:
    """CP removal plus normalized analysis transform, demapped to the
    allocated subcarriers."""
    num = alloc.numerology
    body = np.asarray(symbol_samples)[..., num.cp_len:]
    full = np.fft.ifft(body, axis=-1) * np.sqrt(num.fft_size)
    return full[..., alloc.bins].T if body.ndim == 2 else full[alloc.bins]


def receive_grid(stream: SampleStream, alloc: UserAllocation,
                 timing: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Extract all symbols and demap: returns (base plane (M, L), blocks)."""
    blocks = extract_symbols(stream, alloc.numerology, timing=timing)
    return fft_receive(blocks, alloc), blocks


# ---------------------------------------------------------------------------
# receiver windowing
# ---------------------------------------------------------------------------

def rx_window_taper(duration: int, fft_size: int, cp_len: int,
                    family: str = "raised-cosine") -> np.ndarray:
    """Full receive taper over one CP+body block.

    Keeps the last ``duration`` CP samples with rising edge weights and
    complements the last ``duration`` body samples, so that
    ``taper[s] == 1 - taper[s - N]`` over the windowed region.
    """
    if not 0 <= duration <= cp_len:
        raise ValueError(f"duration {duration} outside [0, {cp_len}]")
    taper = np.zeros(cp_len + fft_size)
    taper[cp_len:] = 1.0
    if duration:
        edge = TAPER_FAMILIES[family](duration)
        taper[cp_len - duration:cp_len] = edge
        taper[cp_len + fft_size - duration:] = 1.0 - edge
    return taper


def rx_window_symbol_delta(symbol_samples: np.ndarray, m_bin: int, r: int,
                           taper: np.ndarray,
                           numerology: Numerology) -> complex:
    """Correction that turns the plain FFT output into the windowed symbol.

    Sums, over the last ``r`` body samples, the difference between the CP
    sample one period earlier and the body sample, weighted by the taper's
    CP edge and the analysis phase.  Adding it to the base symbol gives the
    receiver-windowed symbol.
    """
    n, k = numerology.fft_size, numerology.cp_len
    if not 0 <= r <= k:
        raise ValueError(f"duration {r} outside [0, {k}]")
    if r == 0:
        return 0.0 + 0.0j
    y = np.asarray(symbol_samples)
    s = np.arange(n + k - r + 1, n + k + 1)        # 1-based sample indices
    diff = y[s - n - 1] - y[s - 1]
    weights = taper[s - n - 1]
    phases = np.exp(2j * np.pi * m_bin * (s - k - 1) / n) / np.sqrt(n)
    return complex(np.sum(diff * weights * phases))


def rx_window_column_deltas(symbol_samples: np.ndarray,
                            alloc: UserAllocation, r: int,
                            family: str = "raised-cosine") -> np.ndarray:
    """Corrections for every allocated subcarrier of one symbol at duration r."""
    num = alloc.numerology
    n, k = num.fft_size, num.cp_len
    if r == 0:
        return np.zeros(alloc.num_subcarriers, dtype=np.complex128)
    y = np.asarray(symbol_samples)
    taper = rx_window_taper(r, n, k, family)
    s = np.arange(n + k - r + 1, n + k + 1)
    diff = (y[s - n - 1] - y[s - 1]) * taper[s - n - 1]
    phases = np.exp(2j * np.pi * np.outer(alloc.bins.astype(float),
                                          s - k - 1) / n) / np.sqrt(n)
    return phases @ diff


# ---------------------------------------------------------------------------
# channel estimation and equalization
# ---------------------------------------------------------------------------

def estimate_channel(symbols: np.ndarray, pilots: np.ndarray,
                     numerology: Numerology) -> tuple[np.ndarray, float]:
    """Transform-domain channel estimate and scalar noise variance.

    Least-squares ratios at pilot REs, then per pilot symbol a denoising
    pass that keeps only the first ``cp_len`` transform-domain coefficients.
    The kept coefficients are interpolated linearly across symbols (constant
    beyond the outermost pilot symbols) and transformed back to frequency.
    """
    M, L = symbols.shape
    pilot_cols = sorted(set(np.nonzero(pilots)[1]))
    if not pilot_cols:
        raise ValueError("at least one pilot symbol required")
    k = numerology.cp_len
    coeffs = np.zeros((M, len(pilot_cols)), dtype=np.complex128)
    for j, l in enumerate(pilot_cols):
        mask = pilots[:, l] != 0
        ls = np.zeros(M, dtype=np.complex128)
        ls[mask] = symbols[mask, l] / pilots[mask, l]
        # forward transform maps delay tau to coefficient index +tau under
        # the exp(+j...) analysis kernel
        c = np.fft.fft(ls) / M
        if k < M:
            c[k:] = 0.0
        coeffs[:, j] = c

    if len(pilot_cols) == 1:
        interp = np.repeat(coeffs, L, axis=1)
    else:
        interp = np.empty((M, L), dtype=np.complex128)
        cols = np.arange(L, dtype=float)
        for row in range(M):
            interp[row] = (np.interp(cols, pilot_cols, coeffs[row].real)
                           + 1j * np.interp(cols, pilot_cols, coeffs[row].imag))
    h_hat = np.fft.ifft(interp, axis=0) * M

    mask = pilots != 0
    resid = symbols[mask] - h_hat[mask] * pilots[mask]
    sigma2 = float(np.mean(np.abs(resid) ** 2))
    return h_hat, sigma2


def equalize(symbols: np.ndarray, h_hat: np.ndarray,
             sigma2: float) -> np.ndarray:
    """Per-RE MMSE equalization."""
    if symbols.shape != h_hat.shape:
        raise ValueError("symbol/estimate shape mismatch")
    return symbols * np.conj(h_hat) / (sigma2 + np.abs(h_hat) ** 2)
