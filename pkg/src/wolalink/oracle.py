"""Brute-force reference implementations used by tests and acceptance runs.

Everything here is a deliberately plain transcription: full overlap-add
windowed synthesis, full-taper folded reception, full-chain greedy duration
search and a two-pass variance.  None of it shares code with the optimized
modules, so agreement between the two is a meaningful check.  Oracles gate
scenario size; they exist for correctness, not speed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .grid import ResourceGrid, Scenario
from .synth import TxWindowPlan


@dataclass
class OracleReport:
    max_abs_error: float
    mismatches: list[tuple] = field(default_factory=list)
    runtime_s: float = 0.0


def compare_arrays(reference: np.ndarray, candidate: np.ndarray,
                   tol: float = 1e-12) -> OracleReport:
    start = time.perf_counter()
    err = np.abs(np.asarray(reference) - np.asarray(candidate))
    worst = float(err.max()) if err.size else 0.0
    locs = [tuple(np.atleast_1d(i)) for i in zip(*np.nonzero(err > tol))]
    return OracleReport(worst, locs, time.perf_counter() - start)


def _edge(duration: int) -> np.ndarray:
    # complementary raised-cosine rising edge, half-sample offset
    if duration == 0:
        return np.zeros(0)
    i = np.arange(1, duration + 1)
    return 0.5 * (1.0 - np.cos(np.pi * (i - 0.5) / duration))


# ---------------------------------------------------------------------------
# transmitter-side reference
# ---------------------------------------------------------------------------

def brute_force_tx_window(scenario: Scenario, grids: list[ResourceGrid],
                          plan: TxWindowPlan) -> np.ndarray:
    """Full overlap-add synthesis of the per-RE windowed stream.

    Every RE contributes its complete tapered pulse: the head taper shapes
    the symbol's own CP, and the cyclic-suffix tail of the preceding symbol
    is summed in underneath, weighted by the complement of that head taper.
    """
    total = scenario.slot_samples
    out = np.zeros(total, dtype=np.complex128)
    for alloc, grid, durations in zip(scenario.users, grids, plan.durations):
        num = alloc.numerology
        n, k, L = num.fft_size, num.cp_len, num.num_symbols
        sym_len = n + k
        symbols = grid.symbols
        for row, m_bin in enumerate(alloc.bins):
            m_bin = int(m_bin)
            # samples of one CP-prepended symbol carrying a unit symbol
            idx = np.arange(1, sym_len + 1)
            pulse = np.exp(-2j * np.pi * m_bin * (idx - 1 - k) / n) / np.sqrt(n)
            # cyclic suffix continues the body periodically
            suffix_phase = np.exp(-2j * np.pi * m_bin
                                  * np.arange(k) / n) / np.sqrt(n)
            for l in range(L):
                t_here = int(durations[row, l])
                head = np.ones(sym_len)
                head[:t_here] = _edge(t_here)
                out[l * sym_len:(l + 1) * sym_len] += (head * pulse
                                                       * symbols[row, l])
                if l + 1 < L:
                    t_next = int(durations[row, l + 1])
                    if t_next:
                        tail_w = 1.0 - _edge(t_next)
                        seg = slice((l + 1) * sym_len, (l + 1) * sym_len + t_next)
                        out[seg] += (tail_w * suffix_phase[:t_next]
                                     * symbols[row, l])
    return out


# ---------------------------------------------------------------------------
# receiver-side reference
# ---------------------------------------------------------------------------

def brute_force_rx_window(symbol_samples: np.ndarray, m_bin: int, r: int,
                          fft_size: int, cp_len: int) -> complex:
    """Weight all CP+body samples by the full receive taper, fold, transform.

    The taper keeps the last ``r`` CP samples with rising weights, drops the
    rest of the CP, and complements the last ``r`` body samples; folding adds
    each kept CP sample onto the body sample one period later.
    """
    n, k = fft_size, cp_len
    if not 0 <= r <= k:
        raise ValueError(f"window duration {r} outside [0, {k}]")
    y = np.asarray(symbol_samples)
    if y.shape != (n + k,):
        raise ValueError("expected one CP-prepended symbol")
    taper = np.zeros(n + k)
    taper[k:] = 1.0
    if r:
        edge = _edge(r)
        taper[k - r:k] = edge
        taper[n + k - r:] = 1.0 - edge
    weighted = y * taper
    folded = weighted[k:].copy()
    folded[n - k:] += weighted[:k]   # CP sample s folds one period later
    phases = np.exp(2j * np.pi * m_bin * np.arange(n) / n) / np.sqrt(n)
    return complex(np.sum(folded * phases))


# ---------------------------------------------------------------------------
# variance reference
# ---------------------------------------------------------------------------

def two_pass_variance(values: np.ndarray) -> float:
    """Population variance via mean first, deviations second."""
    v = np.asarray(values)
    if v.size == 0:
        raise ValueError("empty input")
    mean = v.mean()
    return float(np.mean(np.abs(v - mean) ** 2))


# ---------------------------------------------------------------------------
# exhaustive duration search
# ---------------------------------------------------------------------------

def _receive_grid(stream: np.ndarray, alloc) -> np.ndarray:
    """Plain CP-drop reception of every symbol, via an explicit DFT matrix."""
    num = alloc.numerology
    n, k, L = num.fft_size, num.cp_len, num.num_symbols
    blocks = stream[:num.slot_samples].reshape(n + k, L, order="F")
    body = blocks[k:, :]
    kernel = np.exp(2j * np.pi * np.outer(alloc.bins, np.arange(n)) / n)
    return (kernel @ body) / np.sqrt(n)


def _network_capacity(scenario: Scenario, grids, cirs,
                      stream: np.ndarray) -> float:
    """Geometric mean over users of the mean per-RE capacity estimate."""
    means = []
    for alloc, grid, cir in zip(scenario.users, grids, cirs):
        num = alloc.numerology
        received = np.convolve(stream, cir)[:stream.size]
        sym = _receive_grid(received, alloc)
        cfr = np.array([np.sum(cir * np.exp(2j * np.pi * int(b)
                                            * np.arange(cir.size)
                                            / num.fft_size))
                        for b in alloc.bins])
        resid = sym - cfr[:, None] * grid.symbols
        cap = np.log2(1.0 + np.abs(cfr[:, None]) ** 2
                      / (1.0 + np.abs(resid) ** 2))
        if grid.mcs_bits is not None:
            cap = np.minimum(grid.mcs_bits, cap)
        means.append(cap.mean())
    return float(np.prod(means) ** (1.0 / len(means)))


def exhaustive_tx_search(scenario: Scenario, grids: list[ResourceGrid],
                         cirs: list[np.ndarray],
                         order: list[tuple[int, int, int]] | None = None,
                         ) -> TxWindowPlan:
    """Greedy per-RE duration search scoring every candidate by full rechain.

    Visits REs in descending capacity-estimate order (same ordering rule as
    the fast algorithm), tries every duration from zero to the CP length,
    re-synthesizes and re-receives the whole network for each, and keeps the
    duration with the highest fair proportional capacity.  Ties go to the
    shorter duration.  Guard-railed to desk-scale scenarios.
    """
    if any(u.numerology.fft_size > 64 for u in scenario.users):
        raise ValueError("exhaustive search is limited to FFT sizes <= 64")
    if scenario.num_users > 2:
        raise ValueError("exhaustive search is limited to 2 users")
    if any(u.numerology.num_symbols > 4 for u in scenario.users):
        raise ValueError("exhaustive search is limited to 4 symbols")

    plan = TxWindowPlan([np.zeros(g.symbols.shape, dtype=int) for g in grids])

    if order is None:
        base = brute_force_tx_window(scenario, grids, plan)
        entries = []
        for ui, (alloc, grid, cir) in enumerate(zip(scenario.users, grids, cirs)):
            num = alloc.numerology
            received = np.convolve(base, cir)[:base.size]
            sym = _receive_grid(received, alloc)
            cfr = np.array([np.sum(cir * np.exp(2j * np.pi * int(b)
                                                * np.arange(cir.size)
                                                / num.fft_size))
                            for b in alloc.bins])
            resid = sym - cfr[:, None] * grid.symbols
            cap = np.log2(1.0 + np.abs(cfr[:, None]) ** 2
                          / (1.0 + np.abs(resid) ** 2))
            if grid.mcs_bits is not None:
                cap = cap - grid.mcs_bits
            for m in range(cap.shape[0]):
                for l in range(cap.shape[1]):
                    entries.append((-cap[m, l], ui, m, l))
        entries.sort()
        order = [(u, m, l) for _, u, m, l in entries]

    for (u, m, l) in order:
        k_u = scenario.users[u].numerology.cp_len
        best_t, best_eta = 0, -np.inf
        for t in range(0, k_u + 1):
            plan.durations[u][m, l] = t
            stream = brute_force_tx_window(scenario, grids, plan)
            eta = _network_capacity(scenario, grids, cirs, stream)
            if eta > best_eta + 1e-15:
                best_t, best_eta = t, eta
        plan.durations[u][m, l] = best_t
    return plan
