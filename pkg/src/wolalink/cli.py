"""Command-line runner: scenario file in, result files out.

Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .grid import ScenarioError, build_scenario, load_scenario_config
from .metrics import (
    DEFAULT_NEIGHBORHOOD,
    MODES,
    emit_results,
    run_monte_carlo,
    run_sweep,
)


def _parse_sweep(text: str) -> list[float]:
    """Parse 'snr-diff=<lo>:<hi>:<step>' into the list of offsets."""
    try:
        key, rng = text.split("=", 1)
        if key != "snr-diff":
            raise ValueError(f"unknown sweep variable {key!r}")
        lo, hi, step = (float(v) for v in rng.split(":"))
        if step <= 0:
            raise ValueError("sweep step must be positive")
    except ValueError as exc:
        raise ScenarioError(f"bad sweep spec {text!r}: {exc}") from exc
    return [float(v) for v in np.arange(lo, hi + step / 2, step)]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wolalink",
        description="Mixed-numerology CP-OFDM link simulator with adaptive "
                    "per-RE transmitter and receiver windowing.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run Monte-Carlo realizations")
    run.add_argument("--scenario", required=True,
                     help="scenario INI file ([system] plus [user.N])")
    run.add_argument("--mode", action="append", default=None,
                     help=f"windowing mode, repeatable; one of {MODES}")
    run.add_argument("--realizations", type=int, default=100)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", default="results")
    run.add_argument("--sweep", default=None,
                     help="sweep spec, e.g. snr-diff=-5:5:2.5 (offsets the "
                          "first user's SNR)")
    run.add_argument("--psd", action="store_true",
                     help="collect averaged transmit PSDs per mode")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--genie", action="store_true",
                     help="bypass uplink estimation with true averaged taps")
    run.add_argument("--neighborhood", type=int, default=DEFAULT_NEIGHBORHOOD,
                     help="receiver-window statistics set size")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    modes = []
    for m in args.mode or ["baseline"]:
        modes.extend(part.strip() for part in m.split(",") if part.strip())

    try:
        scenario = build_scenario(load_scenario_config(args.scenario))
        for mode in modes:
            if mode not in MODES:
                raise ScenarioError(f"unknown mode {mode!r}; "
                                    f"choose from {MODES}")
        if args.realizations < 1:
            raise ScenarioError("need at least one realization")
        if args.sweep:
            deltas = _parse_sweep(args.sweep)
            result = run_sweep(scenario, deltas, args.realizations, modes,
                               master_seed=args.seed, workers=args.workers,
                               collect_psd=args.psd, genie=args.genie,
                               neighborhood=args.neighborhood)
        else:
            result = run_monte_carlo(scenario, args.realizations, modes,
                                     master_seed=args.seed,
                                     workers=args.workers,
                                     collect_psd=args.psd, genie=args.genie,
                                     neighborhood=args.neighborhood)
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    try:
        paths = emit_results(result, args.out)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3

    agg = result.aggregates
    print(f"{agg.get('runs', 0)} realizations x {len(modes)} mode(s) "
          f"-> {paths['results']}")
    for mode in modes:
        entry = agg.get(mode) or {}
        if "network_capacity_mean" in entry:
            print(f"  {mode}: network capacity "
                  f"{entry['network_capacity_mean']:.4f} bits/RE")
    trends = agg.get("trends")
    if trends:
        for key in ("mean_tx_duration_frac", "mean_rx_duration_frac"):
            if key in trends:
                t = trends[key]
                print(f"  trend {key}: rho={t['spearman_rho']:+.3f} "
                      f"p={t['p_value']:.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
