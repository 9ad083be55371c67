"""Monte-Carlo orchestration, spectral and throughput metrics, and
machine-readable result emission.

One realization draws independent uplink and downlink channels and payload
for every user, estimates each user's CIR from the uplink, runs the
requested windowing modes on a shared downlink realization, and scores the
actual noisy reception with a capacity proxy (per-RE conveyable bits
against the true channel response).  Realizations are seeded independently
from one master seed, so results are reproducible and independent of the
worker count.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import welch

from .channel import (
    apply_channel,
    estimate_ul_channel,
    make_tdl_channel,
    propagate_channel,
)
from .grid import ResourceGrid, Scenario, build_grid
from .rx import receive_grid
from .rxopt import algorithm2, build_neighbor_sets
from .synth import SampleStream, synthesize_cp_ofdm
from .txopt import algorithm1, predict_rx

SCHEMA_VERSION = 1

MODES = ("baseline", "alg1", "alg2", "alg1+alg2")

DEFAULT_NEIGHBORHOOD = 33


# ---------------------------------------------------------------------------
# spectral estimate
# ---------------------------------------------------------------------------

@dataclass
class PsdEstimate:
    """Averaged-periodogram estimate, normalized so the peak sits at 0 dB.

    Frequencies are reported on the subcarrier-offset axis: a subcarrier
    at signed offset s appears at s times its spacing.
    """

    freqs_hz: np.ndarray
    power_db: np.ndarray
    segment_len: int
    overlap: int


def estimate_psd(stream: SampleStream, segment_len: int = 256,
                 overlap: int | None = None) -> PsdEstimate:
    """Welch estimate with Hann segments over the complex baseband stream."""
    x = stream.samples
    if segment_len > x.size:
        raise ValueError(f"segment of {segment_len} samples exceeds stream "
                         f"of {x.size}")
    if overlap is None:
        overlap = segment_len // 2
    freqs, power = welch(x, fs=stream.sample_rate, window="hann",
                         nperseg=segment_len, noverlap=overlap,
                         return_onesided=False, detrend=False)
    # map physical frequencies onto the subcarrier-offset axis
    freqs = -freqs
    order = np.argsort(freqs)
    freqs, power = freqs[order], power[order]
    power_db = 10 * np.log10(np.maximum(power, 1e-300))
    return PsdEstimate(freqs_hz=freqs, power_db=power_db - power_db.max(),
                       segment_len=segment_len, overlap=overlap)


def band_mean_power_db(psd: PsdEstimate, band: tuple[float, float]) -> float:
    """Linear-average PSD level inside a band, in dB."""
    mask = (psd.freqs_hz >= band[0]) & (psd.freqs_hz <= band[1])
    if not np.any(mask):
        raise ValueError("band contains no PSD bins")
    return float(10 * np.log10(np.mean(10 ** (psd.power_db[mask] / 10))))


# ---------------------------------------------------------------------------
# per-realization pipeline
# ---------------------------------------------------------------------------

def _draw_profile(alloc, rng) -> str:
    names = list(alloc.pdp_profile)
    probs = np.array([alloc.pdp_profile[n] for n in names])
    return names[rng.choice(len(names), p=probs / probs.sum())]


def _true_cfr(alloc, ch, snr_db) -> np.ndarray:
    """Per-RE channel response of the actual downlink realization."""
    num = alloc.numerology
    scale = 1.0 if np.isposinf(snr_db) else np.sqrt(10 ** (snr_db / 10))
    out = np.empty((alloc.num_subcarriers, num.num_symbols),
                   dtype=np.complex128)
    for l in range(num.num_symbols):
        body = slice(l * num.symbol_len + num.cp_len,
                     (l + 1) * num.symbol_len)
        out[:, l] = scale * ch.cfr(alloc.bins, num.fft_size, body)
    return out


def _capacity_plane(cfr, received, sent) -> np.ndarray:
    resid = received - cfr * sent
    return np.log2(1.0 + np.abs(cfr) ** 2 / (1.0 + np.abs(resid) ** 2))


@dataclass
class RealizationOutput:
    index: int
    records: list[dict]
    tx_hists: dict            # mode -> user -> counts per duration
    rx_hists: dict
    tx_adj: dict              # mode -> user -> counts per |difference|
    rx_adj: dict
    psd: dict                 # mode -> linear PSD accumulator (or None)
    psd_freqs: np.ndarray | None


def run_realization(scenario: Scenario, modes: list[str], index: int,
                    seed_seq: np.random.SeedSequence,
                    collect_psd: bool = False,
                    genie: bool = False,
                    neighborhood: int = DEFAULT_NEIGHBORHOOD,
                    ) -> RealizationOutput:
    """Simulate one independent slot pair (uplink then downlink)."""
    for mode in modes:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
    children = seed_seq.spawn(6)
    rng_profiles = np.random.default_rng(children[0])
    rng_data = np.random.default_rng(children[1])
    rng_ul = np.random.default_rng(children[2])
    rng_dl = np.random.default_rng(children[3])
    rng_ul_noise = np.random.default_rng(children[4])
    rng_dl_noise = np.random.default_rng(children[5])

    fs = scenario.sample_rate
    users = scenario.users

    # downlink channels, one per user, shared by all modes
    dl_channels = []
    for alloc in users:
        profile = _draw_profile(alloc, rng_profiles)
        dl_channels.append(make_tdl_channel(
            profile, alloc.rms_delay_spread_ns,
            alloc.doppler_hz(scenario.carrier_freq_hz), fs,
            duration=scenario.slot_samples + alloc.numerology.cp_len + 1,
            seed=rng_dl, cp_len=alloc.numerology.cp_len))

    # uplink phase: independent channels, shared gNB noise, known offset
    if genie:
        cirs = estimate_ul_channel(SampleStream(np.zeros(1), fs), scenario,
                                   [None] * len(users), genie=dl_channels)
    else:
        ul_grids, ul_parts = [], []
        total = 0
        for alloc in users:
            grid = build_grid(alloc, alloc.ul_dmrs,
                              seed=int(rng_data.integers(2**63)),
                              num_symbols=alloc.ul_num_symbols)
            ul_grids.append(grid)
            profile = _draw_profile(alloc, rng_profiles)
            ul_len = alloc.ul_num_symbols * alloc.numerology.symbol_len
            ch = make_tdl_channel(
                profile, alloc.rms_delay_spread_ns,
                alloc.doppler_hz(scenario.carrier_freq_hz), fs,
                duration=ul_len + scenario.ul_timing_offset
                + alloc.numerology.cp_len + 1,
                seed=rng_ul, cp_len=alloc.numerology.cp_len)
            ch.delay_offset = scenario.ul_timing_offset
            ul_alloc = dataclasses.replace(
                alloc, numerology=dataclasses.replace(
                    alloc.numerology, num_symbols=alloc.ul_num_symbols))
            single = Scenario(scenario.bandwidth_hz, scenario.cp_rate,
                              0.0, scenario.carrier_freq_hz,
                              scenario.ul_timing_offset, (ul_alloc,))
            tx = synthesize_cp_ofdm(single, [grid])
            part = propagate_channel(tx, ch, alloc.snr_db)
            ul_parts.append(part)
            total = max(total, part.size)
        composite = np.zeros(total, dtype=np.complex128)
        for part in ul_parts:
            composite[:part.size] += part
        composite += (rng_ul_noise.standard_normal(total)
                      + 1j * rng_ul_noise.standard_normal(total)) / np.sqrt(2)
        cirs = estimate_ul_channel(SampleStream(composite, fs), scenario,
                                   ul_grids)

    # downlink payload and conventional stream
    grids = [build_grid(alloc, alloc.dl_dmrs,
                        seed=int(rng_data.integers(2**63)))
             for alloc in users]
    base = synthesize_cp_ofdm(scenario, grids)

    tx_streams: dict[str, SampleStream] = {}
    alg1_results: dict[str, object] = {}
    for mode in modes:
        if mode in ("baseline", "alg2"):
            tx_streams[mode] = base
        else:
            rx_aware = mode == "alg1+alg2"
            pred = predict_rx(base, cirs, scenario, rx_aware=rx_aware,
                              neighbor_count=neighborhood)
            res = algorithm1(scenario, grids, pred)
            alg1_results[mode] = res
            tx_streams[mode] = res.stream

    # per-user downlink noise, identical across modes for paired comparison
    noise_seeds = [int(rng_dl_noise.integers(2**63)) for _ in users]

    records = []
    tx_hists: dict = {}
    rx_hists: dict = {}
    tx_adj: dict = {}
    rx_adj: dict = {}
    psd_acc: dict = {}
    psd_freqs = None

    for mode in modes:
        stream = tx_streams[mode]
        alg1 = alg1_results.get(mode)
        net_means = []
        user_rows = []
        tx_hists[mode], rx_hists[mode] = {}, {}
        tx_adj[mode], rx_adj[mode] = {}, {}
        for u, (alloc, grid, ch) in enumerate(zip(users, grids, dl_channels)):
            num = alloc.numerology
            k = num.cp_len
            received = apply_channel(stream, ch, alloc.snr_db,
                                     noise_seed=noise_seeds[u])
            plane, blocks = receive_grid(received, alloc)
            r_plan = np.zeros(plane.shape, dtype=int)
            used = plane
            if mode in ("alg2", "alg1+alg2"):
                nbrs = build_neighbor_sets(
                    alloc, alloc.rms_delay_spread_ns,
                    alloc.doppler_hz(scenario.carrier_freq_hz),
                    min(neighborhood, plane.size))
                res2 = algorithm2(plane, blocks, alloc, nbrs)
                used, r_plan = res2.windowed, res2.plan

            cfr = _true_cfr(alloc, ch, alloc.snr_db)
            cap = _capacity_plane(cfr, used, grid.symbols)
            data_mask = grid.data != 0
            mean_cap = float(cap[data_mask].mean()) if data_mask.any() else 0.0
            net_means.append(float(cap.mean()))

            t_plan = (alg1.plan.durations[u] if alg1 is not None
                      else np.zeros(plane.shape, dtype=int))
            row = {
                "realization": index,
                "mode": mode,
                "user": alloc.name,
                "snr_db": alloc.snr_db,
                "mean_capacity": mean_cap,
                "mean_tx_duration_frac": float(t_plan.mean() / k),
                "mean_rx_duration_frac": float(r_plan.mean() / k),
            }
            user_rows.append(row)

            tx_hists[mode][alloc.name] = np.bincount(
                t_plan.ravel(), minlength=k + 1)
            rx_hists[mode][alloc.name] = np.bincount(
                r_plan.ravel(), minlength=k + 1)
            tx_adj[mode][alloc.name] = np.bincount(
                np.abs(np.diff(t_plan, axis=0)).ravel(), minlength=k + 1)
            adj_r = np.concatenate([
                np.abs(np.diff(r_plan, axis=0)).ravel(),
                np.abs(np.diff(r_plan, axis=1)).ravel(),
            ]).astype(int)
            rx_adj[mode][alloc.name] = np.bincount(adj_r, minlength=k + 1)

        net = float(np.prod(net_means) ** (1.0 / len(net_means)))
        for row in user_rows:
            row["network_capacity"] = net
            if alg1 is not None:
                row["estimated_capacity_before"] = alg1.estimate_before
                row["estimated_capacity_after"] = alg1.estimate_after
                row["estimated_fair_before"] = alg1.fair_before
                row["estimated_fair_after"] = alg1.fair_after
                row["op_adds"] = alg1.counters.adds
                row["op_mults"] = alg1.counters.mults
            records.append(row)

        if collect_psd:
            est = estimate_psd(stream,
                               segment_len=min(256, stream.samples.size))
            psd_acc[mode] = 10 ** (est.power_db / 10)
            psd_freqs = est.freqs_hz

    return RealizationOutput(index=index, records=records, tx_hists=tx_hists,
                             rx_hists=rx_hists, tx_adj=tx_adj, rx_adj=rx_adj,
                             psd=psd_acc, psd_freqs=psd_freqs)


# ---------------------------------------------------------------------------
# Monte-Carlo driver
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    scenario: Scenario
    modes: list[str]
    master_seed: int
    records: list[dict] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    histograms: dict = field(default_factory=dict)
    psd: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION


def _worker(args):
    scenario, modes, index, entropy, collect_psd, genie, neighborhood = args
    seq = np.random.SeedSequence(entropy=entropy, spawn_key=(index,))
    return run_realization(scenario, modes, index, seq,
                           collect_psd=collect_psd, genie=genie,
                           neighborhood=neighborhood)


def run_monte_carlo(scenario: Scenario, n_realizations: int,
                    modes: list[str], master_seed: int = 0,
                    workers: int = 1, collect_psd: bool = False,
                    genie: bool = False,
                    neighborhood: int = DEFAULT_NEIGHBORHOOD) -> RunResult:
    """Run seeded independent realizations of the scenario in the given
    windowing modes and aggregate the results deterministically."""
    for mode in modes:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
    result = RunResult(scenario=scenario, modes=list(modes),
                       master_seed=master_seed)
    if n_realizations < 1 or not modes:
        result.aggregates = _aggregate(result.records, modes)
        return result

    payloads = [(scenario, list(modes), i, master_seed, collect_psd, genie,
                 neighborhood) for i in range(n_realizations)]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
            outputs = list(ex.map(_worker, payloads, chunksize=1))
    else:
        outputs = [_worker(p) for p in payloads]
    outputs.sort(key=lambda o: o.index)

    hist: dict = {}
    psd_sum: dict = {}
    psd_freqs = None
    for out in outputs:
        result.records.extend(out.records)
        for mode in modes:
            h = hist.setdefault(mode, {})
            for name in out.tx_hists[mode]:
                entry = h.setdefault(name, {
                    "tx_duration_counts": 0, "rx_duration_counts": 0,
                    "tx_adjacent_diff_counts": 0,
                    "rx_adjacent_diff_counts": 0})
                entry["tx_duration_counts"] = (entry["tx_duration_counts"]
                                               + out.tx_hists[mode][name])
                entry["rx_duration_counts"] = (entry["rx_duration_counts"]
                                               + out.rx_hists[mode][name])
                entry["tx_adjacent_diff_counts"] = (
                    entry["tx_adjacent_diff_counts"] + out.tx_adj[mode][name])
                entry["rx_adjacent_diff_counts"] = (
                    entry["rx_adjacent_diff_counts"] + out.rx_adj[mode][name])
            if out.psd:
                psd_sum[mode] = psd_sum.get(mode, 0) + out.psd[mode]
                psd_freqs = out.psd_freqs

    result.histograms = {
        mode: {name: {k: np.asarray(v).tolist()
                      for k, v in entry.items()}
               for name, entry in users.items()}
        for mode, users in hist.items()
    }
    if psd_sum:
        for mode, acc in psd_sum.items():
            mean = acc / n_realizations
            db = 10 * np.log10(np.maximum(mean, 1e-300))
            result.psd[mode] = {
                "freq_hz": psd_freqs.tolist(),
                "power_db": (db - db.max()).tolist(),
            }
    result.aggregates = _aggregate(result.records, modes)
    return result


def _aggregate(records: list[dict], modes: list[str]) -> dict:
    out = {"runs": len({r["realization"] for r in records})}
    for mode in modes:
        rows = [r for r in records if r["mode"] == mode]
        if not rows:
            out[mode] = {}
            continue
        by_real: dict = {}
        for r in rows:
            by_real.setdefault(r["realization"], r["network_capacity"])
        nets = np.array(list(by_real.values()))
        entry = {
            "network_capacity_mean": float(np.mean(nets)),
            "network_capacity_quantiles": {
                q: float(np.quantile(nets, float(q)))
                for q in ("0.25", "0.5", "0.75")
            },
            "per_user": {},
        }
        for name in sorted({r["user"] for r in rows}):
            urows = [r for r in rows if r["user"] == name]
            entry["per_user"][name] = {
                "mean_capacity": float(np.mean([r["mean_capacity"]
                                                for r in urows])),
                "mean_tx_duration_frac": float(np.mean(
                    [r["mean_tx_duration_frac"] for r in urows])),
                "mean_rx_duration_frac": float(np.mean(
                    [r["mean_rx_duration_frac"] for r in urows])),
            }
        out[mode] = entry
    return out


def run_sweep(scenario: Scenario, deltas: list[float], n_realizations: int,
              modes: list[str], master_seed: int = 0, workers: int = 1,
              collect_psd: bool = False, genie: bool = False,
              neighborhood: int = DEFAULT_NEIGHBORHOOD,
              swept_user: int = 0) -> RunResult:
    """Sweep the first user's SNR offset and merge the per-point results.

    Each sweep point shifts the swept user's SNR by the given delta while
    the other users stay at their configured values; the same master seed is
    reused per point so points are pairwise comparable.  Trend statistics
    (rank correlation of the swept user's mean window durations against the
    SNR offset) are attached to the aggregates.
    """
    from scipy.stats import spearmanr

    merged = RunResult(scenario=scenario, modes=list(modes),
                       master_seed=master_seed)
    point_stats = []
    for delta in deltas:
        snrs = [u.snr_db + (delta if i == swept_user else 0.0)
                for i, u in enumerate(scenario.users)]
        shifted = scenario.with_snr(snrs)
        res = run_monte_carlo(shifted, n_realizations, modes,
                              master_seed=master_seed, workers=workers,
                              collect_psd=collect_psd, genie=genie,
                              neighborhood=neighborhood)
        name = scenario.users[swept_user].name
        stats = {"snr_diff": float(delta)}
        for mode in modes:
            agg = res.aggregates.get(mode, {})
            per_user = agg.get("per_user", {}).get(name, {})
            if mode in ("alg1", "alg1+alg2"):
                stats["mean_tx_duration_frac"] = per_user.get(
                    "mean_tx_duration_frac")
            if mode in ("alg2", "alg1+alg2"):
                stats["mean_rx_duration_frac"] = per_user.get(
                    "mean_rx_duration_frac")
        point_stats.append(stats)
        for row in res.records:
            row = dict(row)
            row["snr_diff"] = float(delta)
            merged.records.append(row)

    merged.aggregates = _aggregate(merged.records, modes)
    trends = {"points": point_stats, "swept_user": name}
    xs = [p["snr_diff"] for p in point_stats]
    for key in ("mean_tx_duration_frac", "mean_rx_duration_frac"):
        ys = [p.get(key) for p in point_stats]
        if all(y is not None for y in ys) and len(set(xs)) > 2:
            rho, pval = spearmanr(xs, ys)
            trends[key] = {"spearman_rho": float(rho),
                           "p_value": float(pval)}
    merged.aggregates["trends"] = trends
    return merged


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

_CSV_FIELDS = [
    "realization", "snr_diff", "mode", "user", "snr_db", "mean_capacity",
    "network_capacity", "mean_tx_duration_frac", "mean_rx_duration_frac",
    "estimated_capacity_before", "estimated_capacity_after",
    "estimated_fair_before", "estimated_fair_after", "op_adds", "op_mults",
]


def emit_results(result: RunResult, out_dir: str | Path) -> dict[str, Path]:
    """Write results.csv, summary.json and optional psd_<mode>.csv files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    csv_path = out / "results.csv"
    with csv_path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=_CSV_FIELDS, restval="",
                                extrasaction="ignore")
        writer.writeheader()
        for row in result.records:
            writer.writerow(row)
    paths["results"] = csv_path

    summary = {
        "schema_version": result.schema_version,
        "master_seed": result.master_seed,
        "modes": result.modes,
        "scenario": {
            "bandwidth_hz": result.scenario.bandwidth_hz,
            "cp_rate": str(result.scenario.cp_rate),
            "guard_band_hz": result.scenario.guard_band_hz,
            "users": [
                {
                    "name": u.name,
                    "fft_size": u.numerology.fft_size,
                    "cp_len": u.numerology.cp_len,
                    "subcarrier_spacing_hz": u.numerology.subcarrier_spacing,
                    "num_subcarriers": u.num_subcarriers,
                    "num_symbols": u.numerology.num_symbols,
                    "snr_db": u.snr_db,
                }
                for u in result.scenario.users
            ],
        },
        "aggregates": result.aggregates,
        "histograms": result.histograms,
    }
    if "trends" in result.aggregates:
        summary["trends"] = result.aggregates["trends"]
    json_path = out / "summary.json"
    json_path.write_text(json.dumps(summary, indent=2))
    paths["summary"] = json_path

    for mode, data in result.psd.items():
        safe = mode.replace("+", "_")
        p = out / f"psd_{safe}.csv"
        with p.open("w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["freq_hz", "power_db"])
            for fr, db in zip(data["freq_hz"], data["power_db"]):
                writer.writerow([fr, db])
        paths[f"psd_{mode}"] = p
    return paths
