"""Receiver window duration estimation from received-symbol statistics.

Each RE is assigned the window duration that minimizes the equal-weight
variance of the windowed symbols over a neighborhood of REs expected to
share a correlated channel.  Constant channel-and-data contributions drop
out of the variance, so its changes track the combined interference energy
alone; durations grow from zero and stop at the first increase.

The variance is evaluated incrementally: per-neighborhood sums are carried
from one anchor to the next by adding and removing the few differing
members, and windowed variances reuse the cached unwindowed sums plus the
per-RE window correction terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import UserAllocation
from .rx import ReceivedGrid, rx_window_column_deltas


@dataclass
class NeighborSets:
    """Per-anchor member sets (flat RE indices) plus anchor-to-anchor diffs."""

    members: np.ndarray            # (A, P) flat indices, row-major anchors
    size: int                      # P
    grid_shape: tuple[int, int]
    added: list[np.ndarray] | None = None
    removed: list[np.ndarray] | None = None

    def __post_init__(self):
        if self.added is None:
            prev: set[int] = set()
            added, removed = [], []
            for a in range(self.members.shape[0]):
                cur = set(self.members[a].tolist())
                added.append(np.fromiter(sorted(cur - prev), dtype=np.intp))
                removed.append(np.fromiter(sorted(prev - cur), dtype=np.intp))
                prev = cur
            self.added, self.removed = added, removed


def build_neighbor_sets(alloc: UserAllocation, rms_ds_ns: float,
                        doppler_hz: float, size: int) -> NeighborSets:
    """Choose, per anchor RE, the ``size`` REs with the most correlated
    channels under a normalized time-frequency coherence distance.

    Distance between REs offset by (dm, dl) is
    ``(dm * df / Bc)^2 + (dl * Tsym / Tc)^2`` with coherence bandwidth
    ``Bc = 1 / (5 * rms_ds)`` and coherence time ``Tc = 0.423 / fD``;
    vanishing delay spread or Doppler zeroes the respective term.  Ties
    break deterministically by (|dm|, |dl|, dm, dl), which keeps each
    anchor inside its own set.
    """
    num = alloc.numerology
    m_n, l_n = alloc.num_subcarriers, num.num_symbols
    if size > m_n * l_n:
        raise ValueError(f"neighborhood size {size} exceeds grid {m_n * l_n}")
    df = num.subcarrier_spacing
    t_sym = num.symbol_len / (num.fft_size * df)
    freq_w = 0.0 if rms_ds_ns == 0 else df * 5.0 * rms_ds_ns * 1e-9
    time_w = 0.0 if doppler_hz == 0 else t_sym * doppler_hz / 0.423

    template = []
    for dm in range(-(m_n - 1), m_n):
        for dl in range(-(l_n - 1), l_n):
            d = (dm * freq_w) ** 2 + (dl * time_w) ** 2
            template.append((d, abs(dm), abs(dl), dm, dl))
    template.sort()
    offsets = [(dm, dl) for _, _, _, dm, dl in template]

    members = np.empty((m_n * l_n, size), dtype=np.intp)
    for m in range(m_n):
        for l in range(l_n):
            out = []
            for dm, dl in offsets:
                mm, ll = m + dm, l + dl
                if 0 <= mm < m_n and 0 <= ll < l_n:
                    out.append(mm * l_n + ll)
                    if len(out) == size:
                        break
            members[m * l_n + l] = out
    return NeighborSets(members=members, size=size, grid_shape=(m_n, l_n))


def incremental_set_sums(values: np.ndarray, nbrs: NeighborSets) -> np.ndarray:
    """Per-anchor member sums via add/remove walks along the anchor order.

    The walk restarts at each subcarrier row to keep rounding drift bounded.
    """
    flat = values.reshape(-1)
    n_anchors, l_n = nbrs.members.shape[0], nbrs.grid_shape[1]
    sums = np.empty(n_anchors, dtype=np.complex128)
    for a in range(n_anchors):
        if a % l_n == 0:
            sums[a] = flat[nbrs.members[a]].sum()
        else:
            sums[a] = (sums[a - 1] + flat[nbrs.added[a]].sum()
                       - flat[nbrs.removed[a]].sum())
    return sums


def variance_statistic(base_symbols: np.ndarray, window_deltas: np.ndarray,
                       members: np.ndarray,
                       base_sum: complex | None = None,
                       delta_sum: complex | None = None) -> float:
    """Equal-weight variance of windowed symbols over one member set.

    Uses the scaled mean-difference form: with P members and per-member
    windowed value Z_i, the variance is sum(|P*Z_i - sum(Z)|^2) / P^3.  The
    base-symbol part of the sums can be supplied from a cache so windowed
    evaluations only add the window-correction terms.
    """
    base = base_symbols.reshape(-1)[members]
    delta = window_deltas.reshape(-1)[members]
    p = members.size
    if base_sum is None:
        base_sum = base.sum()
    if delta_sum is None:
        delta_sum = delta.sum()
    centered = p * (base + delta) - (base_sum + delta_sum)
    return float(np.sum(np.abs(centered) ** 2) / p**3)


@dataclass
class VarianceTable:
    """Variance trajectories of the duration search, kept for inspection."""

    values: np.ndarray             # (A, K+1), NaN where never evaluated
    visited: np.ndarray            # (A,) largest evaluated duration


@dataclass
class Alg2Result:
    plan: np.ndarray               # int (M, L)
    windowed: np.ndarray           # complex (M, L)
    base: np.ndarray
    table: VarianceTable

    def as_received_grid(self) -> ReceivedGrid:
        return ReceivedGrid(base=self.base, windowed=self.windowed,
                            rx_plan=self.plan)


def algorithm2(base_plane: np.ndarray, symbol_blocks: np.ndarray,
               alloc: UserAllocation, nbrs: NeighborSets,
               taper_family: str = "raised-cosine") -> Alg2Result:
    """Estimate every RE's receiver window duration and the windowed plane.

    Durations start at zero and are extended while the neighborhood variance
    of the windowed symbols does not increase; the first increase stops the
    search at the previous duration.  REs whose variance never increases up
    to the CP length use the full CP, where the duration distribution of
    interference-dominated REs is known to pile up.
    """
    num = alloc.numerology
    m_n, l_n = base_plane.shape
    k = num.cp_len
    p = nbrs.size
    a_n = nbrs.members.shape[0]

    deltas = np.zeros((k + 1, m_n * l_n), dtype=np.complex128)
    for r in range(1, k + 1):
        plane = np.empty((m_n, l_n), dtype=np.complex128)
        for l in range(l_n):
            plane[:, l] = rx_window_column_deltas(symbol_blocks[l], alloc, r,
                                                  taper_family)
        deltas[r] = plane.reshape(-1)

    base_flat = base_plane.reshape(-1)
    base_sums = incremental_set_sums(base_flat, nbrs)

    def variances(r: int) -> np.ndarray:
        z = base_flat + deltas[r]
        z_sums = base_sums + incremental_set_sums(deltas[r], nbrs)
        centered = p * z[nbrs.members] - z_sums[:, None]
        return np.sum(np.abs(centered) ** 2, axis=1) / p**3

    table = np.full((a_n, k + 1), np.nan)
    visited = np.zeros(a_n, dtype=int)
    plan_flat = np.full(a_n, k, dtype=int)     # completion: full CP
    active = np.ones(a_n, dtype=bool)
    prev = variances(0)
    table[:, 0] = prev
    for r in range(1, k + 1):
        if not active.any():
            break
        cur = variances(r)
        table[active, r] = cur[active]
        visited[active] = r
        stopped = active & (cur > prev)
        plan_flat[stopped] = r - 1
        active &= ~stopped
        prev = np.where(active, cur, prev)

    windowed_flat = base_flat + deltas[plan_flat, np.arange(a_n)]
    return Alg2Result(
        plan=plan_flat.reshape(m_n, l_n),
        windowed=windowed_flat.reshape(m_n, l_n),
        base=base_plane,
        table=VarianceTable(values=table, visited=visited.reshape(-1)),
    )
