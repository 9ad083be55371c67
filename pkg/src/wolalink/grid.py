"""Scenario configuration, resource allocation and pilot/data grid construction.

A scenario describes a set of users that share one downlink band in pure FDMA,
each with its own OFDM numerology (FFT size, CP length, subcarrier spacing,
symbol count).  Subcarrier positions are expressed as signed offsets from DC
and stored as FFT bin indices (DC at bin 0, negative offsets in the upper
half of the FFT grid).
"""

from __future__ import annotations

import configparser
import dataclasses
import zlib
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np


class ScenarioError(ValueError):
    """Raised when a scenario configuration violates an invariant."""


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Numerology:
    """OFDM parameter set of one user."""

    fft_size: int                 # samples per symbol body
    cp_len: int                   # cyclic prefix samples
    subcarrier_spacing: float     # Hz
    num_symbols: int              # symbols per downlink slot

    @property
    def symbol_len(self) -> int:
        return self.fft_size + self.cp_len

    @property
    def slot_samples(self) -> int:
        return self.symbol_len * self.num_symbols


@dataclass(frozen=True)
class UserAllocation:
    """One user's spectral allocation, link quality and channel statistics."""

    name: str
    numerology: Numerology
    offsets: tuple[int, ...]      # signed subcarrier offsets, ascending, contiguous
    snr_db: float
    mobility_kmh: float
    rms_delay_spread_ns: float
    pdp_profile: dict[str, float]  # TDL profile name -> draw probability
    dl_dmrs: str = "every-nth:4"
    ul_dmrs: str = "every-nth:4"
    ul_num_symbols: int = 0
    mcs_bits: float | None = None  # per-RE bit cap; None = uncapped objective

    @property
    def num_subcarriers(self) -> int:
        return len(self.offsets)

    @property
    def bins(self) -> np.ndarray:
        """FFT bin indices of the allocated subcarriers (offsets mod N)."""
        n = self.numerology.fft_size
        return np.asarray([o % n for o in self.offsets], dtype=np.intp)

    @property
    def band_edges_hz(self) -> tuple[float, float]:
        """Occupied band edges, half a subcarrier beyond the outermost centres."""
        df = self.numerology.subcarrier_spacing
        return (self.offsets[0] * df - df / 2, self.offsets[-1] * df + df / 2)

    def doppler_hz(self, carrier_freq_hz: float) -> float:
        return self.mobility_kmh / 3.6 / 299792458.0 * carrier_freq_hz


@dataclass
class ResourceGrid:
    """Per-user data and pilot matrices over the allocated subcarriers."""

    data: np.ndarray              # complex (M, L)
    pilots: np.ndarray            # complex (M, L), sparse
    mcs_bits: np.ndarray | None = None

    @property
    def symbols(self) -> np.ndarray:
        return self.data + self.pilots

    @property
    def pilot_mask(self) -> np.ndarray:
        return self.pilots != 0

    def validate(self) -> None:
        if self.data.shape != self.pilots.shape:
            raise ValueError("data/pilot shape mismatch")
        if np.any((self.data != 0) & (self.pilots != 0)):
            raise ValueError("data and pilot entries overlap")
        nz = np.abs(self.symbols[self.symbols != 0])
        if nz.size and abs(np.mean(nz**2) - 1.0) > 1e-9:
            raise ValueError("nonzero symbol energy is not unit on average")


@dataclass(frozen=True)
class Scenario:
    """Validated multi-user scenario; immutable and safe to share."""

    bandwidth_hz: float
    cp_rate: Fraction
    guard_band_hz: float
    carrier_freq_hz: float
    ul_timing_offset: int
    users: tuple[UserAllocation, ...]

    def __post_init__(self) -> None:
        if not self.users:
            raise ScenarioError("scenario has no users")
        slot = {u.numerology.slot_samples for u in self.users}
        if len(slot) != 1:
            raise ScenarioError(f"slot durations differ across users: {slot}")
        for u in self.users:
            num = u.numerology
            if Fraction(num.cp_len, num.fft_size) != self.cp_rate:
                raise ScenarioError(
                    f"user {u.name}: CP rate {num.cp_len}/{num.fft_size} "
                    f"differs from system rate {self.cp_rate}")
            if abs(num.fft_size * num.subcarrier_spacing - self.bandwidth_hz) > 1e-3:
                raise ScenarioError(
                    f"user {u.name}: N * spacing != system bandwidth")
            if tuple(u.offsets) != tuple(range(u.offsets[0],
                                               u.offsets[0] + len(u.offsets))):
                raise ScenarioError(f"user {u.name}: offsets not contiguous")
        spans = sorted((u.band_edges_hz, u.name) for u in self.users)
        for u in self.users:
            df = u.numerology.subcarrier_spacing
            # subcarrier centres must lie inside [-B/2, B/2); +B/2 aliases -B/2
            if (u.offsets[0] * df < -self.bandwidth_hz / 2 - 1e-6
                    or u.offsets[-1] * df >= self.bandwidth_hz / 2 - 1e-6):
                raise ScenarioError(f"user {u.name}: allocation exceeds band")
        for ((_, hi_a), name_a), ((lo_b, _), name_b) in zip(spans, spans[1:]):
            gap = lo_b - hi_a
            if gap < self.guard_band_hz - 1e-6:
                raise ScenarioError(
                    f"users {name_a}/{name_b}: spectral gap {gap} Hz below "
                    f"guard band {self.guard_band_hz} Hz")

    @property
    def sample_rate(self) -> float:
        return self.bandwidth_hz

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def slot_samples(self) -> int:
        return self.users[0].numerology.slot_samples

    def with_snr(self, snr_db: list[float]) -> "Scenario":
        """Copy of the scenario with per-user SNRs replaced."""
        users = tuple(dataclasses.replace(u, snr_db=s)
                      for u, s in zip(self.users, snr_db))
        return Scenario(self.bandwidth_hz, self.cp_rate, self.guard_band_hz,
                        self.carrier_freq_hz, self.ul_timing_offset, users)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class UserConfig:
    name: str
    subcarrier_spacing_hz: float
    num_subcarriers: int
    num_symbols: int
    snr_db: float = 10.0
    mobility_kmh: float = 3.0
    rms_delay_spread_ns: float = 100.0
    pdp_profile: str = "TDL-A"
    dl_dmrs: str = "every-nth:4"
    ul_dmrs: str = "every-nth:4"
    ul_num_symbols: int = 0
    subcarrier_start: int | None = None   # signed offset of lowest subcarrier
    mcs_bits: float | None = None


@dataclass
class ScenarioConfig:
    bandwidth_hz: float
    cp_rate: Fraction | str
    guard_band_hz: float
    users: list[UserConfig]
    carrier_freq_hz: float = 4e9
    ul_timing_offset: int = 64


def _parse_pdp(text: str) -> dict[str, float]:
    """Parse 'TDL-A' or 'TDL-A:0.5,TDL-B:0.3333,TDL-C:0.1667' into a prob map."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if len(parts) == 1 and ":" not in parts[0]:
        return {parts[0]: 1.0}
    out: dict[str, float] = {}
    for p in parts:
        name, prob = p.split(":")
        out[name.strip()] = float(prob)
    total = sum(out.values())
    if abs(total - 1.0) > 1e-6:
        raise ScenarioError(f"PDP mix probabilities sum to {total}, expected 1")
    return out


def load_scenario_config(path: str | Path) -> ScenarioConfig:
    """Read the flat INI scenario file ([system] plus [user.N] sections)."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ScenarioError(f"cannot read scenario file {path}")
    if "system" not in parser:
        raise ScenarioError("scenario file lacks a [system] section")
    sys_sec = parser["system"]
    users = []
    for section in parser.sections():
        if not section.startswith("user."):
            continue
        sec = parser[section]
        users.append(UserConfig(
            name=sec.get("name", section.split(".", 1)[1]),
            subcarrier_spacing_hz=float(sec["subcarrier_spacing_hz"]),
            num_subcarriers=int(sec["num_subcarriers"]),
            num_symbols=int(sec["num_symbols"]),
            snr_db=float(sec.get("snr_db", 10.0)),
            mobility_kmh=float(sec.get("mobility_kmh", 3.0)),
            rms_delay_spread_ns=float(sec.get("rms_delay_spread_ns", 100.0)),
            pdp_profile=sec.get("pdp_profile", "TDL-A"),
            dl_dmrs=sec.get("dl_dmrs", "every-nth:4"),
            ul_dmrs=sec.get("ul_dmrs", "every-nth:4"),
            ul_num_symbols=int(sec.get("ul_num_symbols", 0)),
            subcarrier_start=(int(sec["subcarrier_start"])
                              if "subcarrier_start" in sec else None),
            mcs_bits=(float(sec["mcs_bits"]) if "mcs_bits" in sec else None),
        ))
    if not users:
        raise ScenarioError("scenario file defines no [user.N] sections")
    return ScenarioConfig(
        bandwidth_hz=float(sys_sec["bandwidth_hz"]),
        cp_rate=sys_sec.get("cp_rate", "9/128"),
        guard_band_hz=float(sys_sec.get("guard_band_hz", 0.0)),
        users=users,
        carrier_freq_hz=float(sys_sec.get("carrier_freq_hz", 4e9)),
        ul_timing_offset=int(sys_sec.get("ul_timing_offset_samples", 64)),
    )


def build_scenario(config: ScenarioConfig) -> Scenario:
    """Validate a configuration and resolve it into a Scenario.

    Checks that all users sample the same bandwidth, share one CP rate with
    integer CP lengths, span slots of equal duration, and occupy disjoint
    spectral intervals separated by at least the configured guard band.
    Users without an explicit ``subcarrier_start`` are packed onto their own
    subcarrier grid from the lower band edge upward.
    """
    cp_rate = Fraction(config.cp_rate)
    if not 0 <= cp_rate < 1:
        raise ScenarioError(f"CP rate {cp_rate} outside [0, 1)")
    bw = float(config.bandwidth_hz)
    if bw <= 0:
        raise ScenarioError("bandwidth must be positive")

    users: list[UserAllocation] = []
    slot_samples = None
    cursor = -bw / 2  # lower edge of the unassigned part of the band
    for i, uc in enumerate(config.users):
        df = float(uc.subcarrier_spacing_hz)
        n_float = bw / df
        n = int(round(n_float))
        if abs(n_float - n) > 1e-9 or n <= 0:
            raise ScenarioError(
                f"user {uc.name}: bandwidth / spacing = {n_float} is not an integer")
        k_frac = cp_rate * n
        if k_frac.denominator != 1:
            raise ScenarioError(
                f"user {uc.name}: CP length {k_frac} is not an integer "
                f"(rate {cp_rate}, N={n})")
        k = int(k_frac)
        num = Numerology(n, k, df, uc.num_symbols)
        if slot_samples is None:
            slot_samples = num.slot_samples
        elif num.slot_samples != slot_samples:
            raise ScenarioError(
                f"user {uc.name}: slot duration {num.slot_samples} samples "
                f"differs from {slot_samples}")

        if uc.subcarrier_start is not None:
            start = uc.subcarrier_start
        else:
            limit = cursor if i == 0 else cursor + config.guard_band_hz
            start = int(np.ceil((limit + df / 2) / df - 1e-9))
        offsets = tuple(range(start, start + uc.num_subcarriers))
        cursor = offsets[-1] * df + df / 2

        users.append(UserAllocation(
            name=uc.name,
            numerology=num,
            offsets=offsets,
            snr_db=uc.snr_db,
            mobility_kmh=uc.mobility_kmh,
            rms_delay_spread_ns=uc.rms_delay_spread_ns,
            pdp_profile=_parse_pdp(uc.pdp_profile),
            dl_dmrs=uc.dl_dmrs,
            ul_dmrs=uc.ul_dmrs,
            ul_num_symbols=uc.ul_num_symbols or uc.num_symbols,
            mcs_bits=uc.mcs_bits,
        ))

    ul_samples = {u.ul_num_symbols * u.numerology.symbol_len for u in users}
    if len(ul_samples) != 1:
        raise ScenarioError("uplink intervals differ in duration across users")

    return Scenario(
        bandwidth_hz=bw,
        cp_rate=cp_rate,
        guard_band_hz=float(config.guard_band_hz),
        carrier_freq_hz=float(config.carrier_freq_hz),
        ul_timing_offset=int(config.ul_timing_offset),
        users=tuple(users),
    )


# ---------------------------------------------------------------------------
# pilot and data placement
# ---------------------------------------------------------------------------

# Front-loaded position sets applied per 14-symbol slot chunk.
_DMRS_POSITIONS = {
    "DL-TypeA-pos2-add3": (2, 5, 8, 11),
    "UL-PUSCH-TypeB": (0, 4, 8, 12),
}


def dmrs_symbol_positions(pattern: str, num_symbols: int) -> list[int]:
    """Pilot-carrying symbol indices for a pattern over ``num_symbols`` symbols."""
    if pattern.startswith("every-nth:"):
        k = int(pattern.split(":", 1)[1])
        if k < 1:
            raise ScenarioError(f"every-nth step must be >= 1, got {k}")
        return list(range(0, num_symbols, k))
    if pattern not in _DMRS_POSITIONS:
        raise ScenarioError(f"unknown DMRS pattern {pattern!r}")
    base = _DMRS_POSITIONS[pattern]
    if num_symbols <= max(base):
        raise ScenarioError(
            f"pattern {pattern} needs at least {max(base) + 1} symbols, "
            f"grid has {num_symbols}")
    positions = []
    for chunk in range(0, num_symbols, 14):
        positions.extend(chunk + p for p in base if chunk + p < num_symbols)
    return positions


def _derived_seed(pattern: str, alloc: UserAllocation, num_symbols: int) -> int:
    key = f"{pattern}|{alloc.offsets[0]}|{alloc.num_subcarriers}|{num_symbols}"
    return zlib.crc32(key.encode())


def place_dmrs(alloc: UserAllocation, pattern: str,
               num_symbols: int | None = None,
               seed: int | None = None) -> np.ndarray:
    """Sparse pilot matrix with unit-magnitude QPSK at the pattern positions.

    Positions are deterministic in the pattern and allocation; values come
    from a seeded generator (seed derived from pattern and allocation when
    not given) so the matrix is reproducible.
    """
    L = num_symbols if num_symbols is not None else alloc.numerology.num_symbols
    cols = dmrs_symbol_positions(pattern, L)
    if seed is None:
        seed = _derived_seed(pattern, alloc, L)
    rng = np.random.default_rng(seed)
    M = alloc.num_subcarriers
    pilots = np.zeros((M, L), dtype=np.complex128)
    for l in cols:
        quad = rng.integers(0, 4, size=M)
        pilots[:, l] = np.exp(1j * (np.pi / 4 + np.pi / 2 * quad))
    return pilots


def draw_data_symbols(alloc: UserAllocation, pilot_mask: np.ndarray,
                      seed: int) -> np.ndarray:
    """Unit-energy QPSK payload on every non-pilot resource element."""
    rng = np.random.default_rng(seed)
    M, L = pilot_mask.shape
    quad = rng.integers(0, 4, size=(M, L))
    data = np.exp(1j * (np.pi / 4 + np.pi / 2 * quad))
    data[pilot_mask] = 0.0
    return data


def build_grid(alloc: UserAllocation, pattern: str, seed: int,
               num_symbols: int | None = None) -> ResourceGrid:
    """Pilot placement plus payload draw, validated."""
    pilots = place_dmrs(alloc, pattern, num_symbols=num_symbols)
    data = draw_data_symbols(alloc, pilots != 0, seed)
    if alloc.mcs_bits is not None:
        bits = np.full(pilots.shape, float(alloc.mcs_bits))
        grid = ResourceGrid(data=data, pilots=pilots, mcs_bits=bits)
    else:
        grid = ResourceGrid(data=data, pilots=pilots)
    grid.validate()
    return grid
