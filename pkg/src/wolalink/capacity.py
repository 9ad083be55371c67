"""Capacity metrics: per-RE capacity from cached interference residuals,
per-user means, fair proportional network capacity, and the differential
column-level capacity delta used by the transmitter duration search."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def re_capacity(cfr: np.ndarray, received: np.ndarray,
                sent: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-RE conveyable bits against a unit noise floor.

    Returns (capacity, residual); the residual ``received - cfr * sent`` is
    the cached interference term reused by differential updates.
    """
    resid = received - cfr * sent
    cap = np.log2(1.0 + np.abs(cfr) ** 2 / (1.0 + np.abs(resid) ** 2))
    return cap, resid


def capped_capacity(uncapped: np.ndarray,
                    bit_caps: np.ndarray | None) -> np.ndarray:
    """Apply the per-RE modulation-and-coding bit cap, if one is scheduled."""
    if bit_caps is None:
        return uncapped
    return np.minimum(bit_caps, uncapped)


def user_mean_capacity(capacity: np.ndarray,
                       mask: np.ndarray | None = None) -> float:
    """Arithmetic mean capacity per RE, optionally over a subset of REs."""
    if mask is None:
        return float(capacity.mean())
    if not np.any(mask):
        return 0.0
    return float(capacity[mask].mean())


def network_fair_capacity(per_user_means: list[float]) -> float:
    """Geometric mean of the users' mean capacities."""
    if not per_user_means:
        raise ValueError("at least one user required")
    means = np.asarray(per_user_means, dtype=float)
    if np.any(means < 0):
        raise ValueError("negative mean capacity")
    return float(np.prod(means) ** (1.0 / means.size))


@dataclass
class CapacityState:
    """Cached per-user capacity state owned by one optimizer pass.

    Residuals are kept relative to the committed stream; effective (bit-cap
    applied) capacities and their per-symbol column sums support constant
    time evaluation of candidate updates.
    """

    residuals: list[np.ndarray]          # complex (M, L) per user
    cfr_power: list[np.ndarray]          # real (M, L) per user
    uncapped: list[np.ndarray]           # real (M, L) per user
    bit_caps: list[np.ndarray | None]
    effective: list[np.ndarray] = field(default_factory=list)
    colsums: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.effective:
            self.effective = [capped_capacity(c, b)
                              for c, b in zip(self.uncapped, self.bit_caps)]
        if not self.colsums:
            # contiguous per-column sums: bit-identical to candidate sums
            self.colsums = [
                np.array([np.ascontiguousarray(e[:, l]).sum()
                          for l in range(e.shape[1])])
                for e in self.effective
            ]

    @classmethod
    def from_predictions(cls, cfrs: list[np.ndarray],
                         predicted: list[np.ndarray],
                         sent: list[np.ndarray],
                         bit_caps: list[np.ndarray | None] | None = None,
                         ) -> "CapacityState":
        if bit_caps is None:
            bit_caps = [None] * len(cfrs)
        residuals, powers, caps = [], [], []
        for cfr, rec, s in zip(cfrs, predicted, sent):
            cfr_mat = np.broadcast_to(cfr[:, None], s.shape) \
                if cfr.ndim == 1 else cfr
            cap, resid = re_capacity(cfr_mat, rec, s)
            residuals.append(resid)
            powers.append(np.abs(cfr_mat) ** 2)
            caps.append(cap)
        return cls(residuals=residuals, cfr_power=powers, uncapped=caps,
                   bit_caps=bit_caps)

    @property
    def num_users(self) -> int:
        return len(self.residuals)

    # -- differential evaluation ------------------------------------------

    def candidate_columns(self, updates: dict[int, tuple[int, np.ndarray]],
                          ) -> dict[int, np.ndarray]:
        """Uncapped capacities of the affected columns under the updates.

        ``updates`` maps user index to (column, per-subcarrier received
        symbol deltas).  Cached residuals stay untouched.
        """
        out = {}
        for u, (col, delta) in updates.items():
            resid = self.residuals[u][:, col] + delta
            out[u] = np.log2(1.0 + self.cfr_power[u][:, col]
                             / (1.0 + np.abs(resid) ** 2))
        return out

    def capacity_delta(self, updates: dict[int, tuple[int, np.ndarray]],
                       ) -> tuple[float, dict[int, np.ndarray]]:
        """Product-of-column-sums change caused by the candidate updates.

        Positive means the network gains from applying the updates; only the
        columns temporally overlapping the probed symbol participate.
        """
        for u, (col, _) in updates.items():
            if not 0 <= col < self.colsums[u].size:
                raise IndexError(f"user {u}: column {col} out of range")
        new_cols = self.candidate_columns(updates)
        new_prod, old_prod = 1.0, 1.0
        for u, (col, _) in updates.items():
            cand = capped_capacity(
                new_cols[u],
                None if self.bit_caps[u] is None else self.bit_caps[u][:, col])
            new_prod *= cand.sum()
            old_prod *= self.colsums[u][col]
        return float(new_prod - old_prod), new_cols

    def commit(self, updates: dict[int, tuple[int, np.ndarray]],
               new_cols: dict[int, np.ndarray]) -> None:
        """Fold accepted updates into residuals, capacities and column sums."""
        for u, (col, delta) in updates.items():
            self.residuals[u][:, col] += delta
            self.uncapped[u][:, col] = new_cols[u]
            eff = capped_capacity(
                new_cols[u],
                None if self.bit_caps[u] is None else self.bit_caps[u][:, col])
            self.effective[u][:, col] = eff
            self.colsums[u][col] = eff.sum()

    def commit_capacities(self, updates: dict[int, tuple[int, np.ndarray]],
                          new_cols: dict[int, np.ndarray]) -> None:
        """Refresh cached capacities only, leaving residuals untouched.

        Used while a single RE's duration is still being extended: candidate
        deltas are always expressed against the unwindowed stream, so the
        residual update is deferred until the final duration is known.
        """
        for u, (col, _) in updates.items():
            self.uncapped[u][:, col] = new_cols[u]
            eff = capped_capacity(
                new_cols[u],
                None if self.bit_caps[u] is None else self.bit_caps[u][:, col])
            self.effective[u][:, col] = eff
            self.colsums[u][col] = eff.sum()

    def commit_residuals(self, updates: dict[int, tuple[int, np.ndarray]],
                         ) -> None:
        for u, (col, delta) in updates.items():
            self.residuals[u][:, col] += delta

    # -- aggregate metrics -------------------------------------------------

    def column_geometric_capacity(self) -> float:
        """Geometric mean over all user-symbol columns of per-RE column means.

        This is the aggregate the column-sum product rule improves
        monotonically: each accepted update raises the product of the
        affected column sums while leaving every other column untouched.
        """
        logs, count = 0.0, 0
        for u in range(self.num_users):
            m = self.effective[u].shape[0]
            vals = np.maximum(self.colsums[u] / m, 1e-300)
            logs += np.sum(np.log(vals))
            count += vals.size
        return float(np.exp(logs / count))

    def fair_capacity(self) -> float:
        """Geometric mean across users of arithmetic mean RE capacity."""
        return network_fair_capacity(
            [user_mean_capacity(e) for e in self.effective])
