"""Greedy per-RE transmitter window duration estimation.

The transmitter predicts every user's noiseless reception of the composite
downlink stream from its uplink CIR estimates, caches per-RE capacities,
and then visits REs in descending excess-capacity order.  For each RE it
extends the window duration one sample at a time, scoring each extension by
a differential capacity delta that touches only the symbol columns
temporally overlapping the probed symbol, and stops at the first
non-improving duration.

The arithmetic cost of every probe is tracked with the per-equation cost
model of the published complexity accounting (complex multiply = 4 real
multiplies + 2 real adds, twiddle factors from tables, cached old column
products), so instrumented counts can be checked against closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .capacity import CapacityState
from .channel import cir_to_cfr
from .grid import ResourceGrid, Scenario
from .rx import receive_grid
from .synth import TAPER_FAMILIES, SampleStream, TxWindowPlan, synthesize_cp_ofdm


@dataclass
class OpCounters:
    """Real-arithmetic operation counters, monotone nondecreasing."""

    adds: int = 0
    mults: int = 0

    def snapshot(self) -> tuple[int, int]:
        return self.adds, self.mults


def probe_cost(duration: int, num_users: int, total_subcarriers: int,
               ) -> tuple[int, int]:
    """Closed-form real adds/multiplies of one duration probe."""
    t, u, sm = duration, num_users, total_subcarriers
    adds = 2 * u * t**2 + t * (4 * sm + 6) + 2 * sm + 1 - u
    mults = 2 * u * t**2 + t * (2 * u + 4 * sm + 10) + u + 3 * sm - 1
    return adds, mults


@dataclass
class Predictions:
    """Noiseless reception emulation used by the duration search."""

    base_stream: SampleStream
    cirs: list[np.ndarray]          # per user, dense CIR (absorbs link scale)
    streams: list[np.ndarray]       # per user, predicted received samples
    symbols: list[np.ndarray]       # per user, predicted symbol plane (M, L)
    cfrs: list[np.ndarray]          # per user, per-subcarrier response (M,)
    rx_aware: bool = False


def predict_rx(stream: SampleStream, cirs: list[np.ndarray],
               scenario: Scenario, rx_aware: bool = False,
               neighbor_count: int = 33) -> Predictions:
    """Emulate every user's reception of the stream through its CIR estimate.

    The emulation is noiseless; with ``rx_aware`` the virtual receivers also
    run the receiver window duration search, so cached capacities reflect
    window-adapted reception.
    """
    if len(cirs) != scenario.num_users:
        raise ValueError("one CIR estimate per user required")
    streams, symbols, cfrs = [], [], []
    for alloc, cir in zip(scenario.users, cirs):
        rec = np.convolve(stream.samples, cir)[:stream.samples.size]
        rec_stream = SampleStream(rec, stream.sample_rate, origin="received")
        plane, blocks = receive_grid(rec_stream, alloc)
        if rx_aware:
            from .rxopt import algorithm2, build_neighbor_sets

            nbrs = build_neighbor_sets(
                alloc, alloc.rms_delay_spread_ns,
                alloc.doppler_hz(scenario.carrier_freq_hz),
                min(neighbor_count,
                    alloc.num_subcarriers * alloc.numerology.num_symbols))
            plane = algorithm2(plane, blocks, alloc, nbrs).windowed
        streams.append(rec)
        symbols.append(plane)
        cfrs.append(cir_to_cfr(cir, alloc.bins, alloc.numerology.fft_size))
    return Predictions(base_stream=stream, cirs=cirs, streams=streams,
                       symbols=symbols, cfrs=cfrs, rx_aware=rx_aware)


def excess_metric(uncapped: np.ndarray,
                  bit_caps: np.ndarray | None = None) -> np.ndarray:
    """Ordering key of the duration search: capacity, or margin above the
    scheduled bit load when modulation and coding are already fixed."""
    if bit_caps is None:
        return uncapped
    return uncapped - bit_caps


@dataclass
class ProbeResult:
    eta_delta: float
    duration: int
    sample_deltas: np.ndarray                 # (T,) stream corrections
    updates: dict[int, tuple[int, np.ndarray]]
    new_columns: dict[int, np.ndarray]


class OptimizerState:
    """Working state of one transmitter duration search pass."""

    def __init__(self, scenario: Scenario, grids: list[ResourceGrid],
                 predictions: Predictions,
                 taper_family: str = "raised-cosine"):
        self.scenario = scenario
        self.grids = grids
        self.predictions = predictions
        self.taper_family = taper_family
        self.sent = [g.symbols for g in grids]
        self.bit_caps = [g.mcs_bits for g in grids]
        self.capacity = CapacityState.from_predictions(
            predictions.cfrs, [s.copy() for s in predictions.symbols],
            self.sent, self.bit_caps)
        self.stream = predictions.base_stream.copy(origin="tx-windowed")
        self.plans = [np.zeros(s.shape, dtype=int) for s in self.sent]
        self.counters = OpCounters()

        k_max = max(u.numerology.cp_len for u in scenario.users)
        self._edges = {t: TAPER_FAMILIES[taper_family](t)
                       for t in range(1, k_max + 1)}
        # analysis twiddles at the first CP-length body offsets of each user
        self._twiddles = [
            np.exp(2j * np.pi * np.outer(u.bins.astype(float),
                                         np.arange(k_max)) / u.numerology.fft_size)
            / np.sqrt(u.numerology.fft_size)
            for u in scenario.users
        ]
        self.total_subcarriers = sum(u.num_subcarriers for u in scenario.users)

    def affected_column(self, probe_user: int, probe_sym: int,
                        user: int) -> int:
        """Symbol column of ``user`` containing the probed symbol's start."""
        start = probe_sym * self.scenario.users[probe_user].numerology.symbol_len
        return start // self.scenario.users[user].numerology.symbol_len

    def sample_deltas(self, u: int, m: int, l: int, duration: int) -> np.ndarray:
        """Stream corrections for the first ``duration`` CP samples of RE (m, l)."""
        alloc = self.scenario.users[u]
        num = alloc.numerology
        m_bin = int(alloc.bins[m])
        symbols = self.sent[u]
        prev = symbols[m, l - 1] if l > 0 else 0.0
        rot = np.exp(2j * np.pi * m_bin * num.cp_len / num.fft_size)
        term = prev - rot * symbols[m, l]
        suffix_w = 1.0 - self._edges[duration]
        phases = np.exp(-2j * np.pi * m_bin
                        * np.arange(duration) / num.fft_size)
        return suffix_w * phases * term / np.sqrt(num.fft_size)


def probe_duration(state: OptimizerState, re: tuple[int, int, int],
                   duration: int) -> ProbeResult:
    """Score setting RE ``re``'s transmitter window to ``duration``.

    Computes the stream corrections, the received-sample corrections each
    user's CIR would leak into its affected symbol, the resulting symbol
    corrections for every allocated subcarrier, and the capacity delta over
    the affected columns.  State is not modified; counters advance by the
    probe's cost-model total.
    """
    u, m, l = re
    k_probe = state.scenario.users[u].numerology.cp_len
    if duration < 1:
        raise ValueError("probing a zero duration is meaningless")
    if duration > k_probe:
        raise ValueError(f"duration {duration} exceeds CP length {k_probe}")

    c = state.counters
    t = duration

    xdot = state.sample_deltas(u, m, l, t)
    c.adds += 6 * t
    c.mults += 10 * t

    updates: dict[int, tuple[int, np.ndarray]] = {}
    for v, alloc in enumerate(state.scenario.users):
        k_v = alloc.numerology.cp_len
        conv = np.convolve(xdot, state.predictions.cirs[v])
        ydot = np.zeros(t, dtype=np.complex128)
        avail = conv[k_v:k_v + t]
        ydot[:avail.size] = avail
        c.adds += 2 * t**2
        c.mults += 2 * t**2 + 2 * t

        sym_delta = state._twiddles[v][:, :t] @ ydot
        m_v = alloc.num_subcarriers
        c.adds += m_v * (4 * t - 2)
        c.mults += m_v * 4 * t

        updates[v] = (state.affected_column(u, l, v), sym_delta)
        c.adds += m_v * 3          # candidate capacity refresh
        c.mults += m_v * 3

    eta_delta, new_cols = state.capacity.capacity_delta(updates)
    c.adds += 1 + state.total_subcarriers - state.scenario.num_users
    c.mults += state.scenario.num_users - 1

    return ProbeResult(eta_delta=eta_delta, duration=t, sample_deltas=xdot,
                       updates=updates, new_columns=new_cols)


@dataclass
class Alg1Result:
    plan: TxWindowPlan
    stream: SampleStream
    counters: OpCounters
    estimate_before: float         # column-geometric network capacity
    estimate_after: float
    fair_before: float             # geometric mean of per-user mean capacity
    fair_after: float
    state: OptimizerState


def algorithm1(scenario: Scenario, grids: list[ResourceGrid],
               predictions: Predictions,
               taper_family: str = "raised-cosine") -> Alg1Result:
    """Estimate all transmitter window durations and the windowed stream.

    REs are visited once, in descending excess-capacity order (ties broken
    by user, subcarrier, symbol).  Each RE's duration grows while the
    capacity delta stays positive; the last improving duration is committed
    into the stream, the cached residuals and the cached capacities.
    """
    state = OptimizerState(scenario, grids, predictions, taper_family)
    est_before = state.capacity.column_geometric_capacity()
    fair_before = state.capacity.fair_capacity()

    order = []
    for u, alloc in enumerate(scenario.users):
        lam = excess_metric(state.capacity.uncapped[u], state.bit_caps[u])
        for m in range(alloc.num_subcarriers):
            for l in range(alloc.numerology.num_symbols):
                order.append((-lam[m, l], u, m, l))
    order.sort()

    for _, u, m, l in order:
        k_u = scenario.users[u].numerology.cp_len
        accepted: ProbeResult | None = None
        for t in range(1, k_u + 1):
            probe = probe_duration(state, (u, m, l), t)
            if probe.eta_delta > 0:
                state.capacity.commit_capacities(probe.updates,
                                                 probe.new_columns)
                accepted = probe
            elif probe.eta_delta == 0.0:
                # exactly neutral: the corrections cannot reach any FFT
                # window yet (CP-limited CIR support), so the duration
                # carries no information either way; keep searching without
                # committing it
                continue
            else:
                break
        if accepted is not None:
            t_final = accepted.duration
            state.plans[u][m, l] = t_final
            state.capacity.commit_residuals(accepted.updates)
            start = l * scenario.users[u].numerology.symbol_len
            state.stream.samples[start:start + t_final] += \
                accepted.sample_deltas
            state.counters.adds += 2 * t_final

    plan = TxWindowPlan([p.copy() for p in state.plans], shape=taper_family)
    return Alg1Result(
        plan=plan,
        stream=state.stream,
        counters=state.counters,
        estimate_before=est_before,
        estimate_after=state.capacity.column_geometric_capacity(),
        fair_before=fair_before,
        fair_after=state.capacity.fair_capacity(),
        state=state,
    )


def baseline_predictions(scenario: Scenario, grids: list[ResourceGrid],
                         cirs: list[np.ndarray],
                         rx_aware: bool = False) -> Predictions:
    """Convenience wrapper: synthesize the base stream and predict reception."""
    base = synthesize_cp_ofdm(scenario, grids)
    return predict_rx(base, cirs, scenario, rx_aware=rx_aware)
