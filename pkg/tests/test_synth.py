import numpy as np
import pytest

from wolalink.grid import ResourceGrid
from wolalink.oracle import brute_force_tx_window
from wolalink.synth import (
    SampleStream,
    TxWindowPlan,
    apply_tx_windowing,
    synthesize_cp_ofdm,
    tx_window_sample_delta,
    tx_window_taper,
    zero_plan,
)

from conftest import (
    random_grids,
    random_plan,
    single_user_scenario,
    toy_mixed_scenario,
)


def test_zero_grids_give_zero_stream():
    sc = toy_mixed_scenario()
    grids = [ResourceGrid(data=np.zeros((u.num_subcarriers,
                                         u.numerology.num_symbols),
                                        dtype=np.complex128),
                          pilots=np.zeros((u.num_subcarriers,
                                           u.numerology.num_symbols),
                                          dtype=np.complex128))
             for u in sc.users]
    out = synthesize_cp_ofdm(sc, grids)
    assert np.all(out.samples == 0)
    assert out.samples.size == sc.slot_samples


def test_single_subcarrier_cp_copy():
    sc = single_user_scenario(n=8, m=1, l=1, cp_rate="1/4", start=2)
    shape = (1, 1)
    grid = ResourceGrid(data=np.ones(shape, dtype=np.complex128),
                        pilots=np.zeros(shape, dtype=np.complex128))
    out = synthesize_cp_ofdm(sc, [grid]).samples
    body = np.exp(-2j * np.pi * 2 * np.arange(8) / 8) / np.sqrt(8)
    assert np.allclose(out[2:], body, atol=1e-15)
    assert np.allclose(out[:2], body[-2:], atol=1e-15)


def test_synthesis_matches_dft_matrix_oracle(rng):
    sc = single_user_scenario(n=16, m=5, l=2, cp_rate="1/4", start=-7)
    grids = random_grids(sc, rng)
    out = synthesize_cp_ofdm(sc, grids).samples
    alloc = sc.users[0]
    n, k = 16, 4
    kernel = np.exp(-2j * np.pi * np.outer(np.arange(n), alloc.bins) / n)
    body = kernel @ grids[0].symbols / np.sqrt(n)
    ref = np.concatenate([body[n - k:, :], body], axis=0).reshape(-1, order="F")
    assert np.max(np.abs(out - ref)) < 1e-12


def test_taper_zero_duration_is_rectangular():
    t = tx_window_taper(0, fft_size=16, cp_len=4)
    assert t.shape == (20,)
    assert np.all(t == 1.0)


@pytest.mark.parametrize("duration", [1, 2, 4])
def test_taper_complementarity_exact(duration):
    n, k = 16, 4
    t = tx_window_taper(duration, n, k)
    for idx in range(duration):
        assert t[idx] + t[idx + n + k] == 1.0


def test_taper_full_cp_duration_monotone():
    n, k = 32, 8
    t = tx_window_taper(k, n, k)
    edge = t[:k]
    assert np.all(np.diff(edge) > 0)
    assert 0.0 < edge[0] < edge[-1] <= 1.0


def test_phase_continuous_symbols_need_no_correction():
    sc = single_user_scenario(n=16, m=1, l=2, cp_rate="1/4", start=3)
    alloc = sc.users[0]
    shape = (1, 2)
    data = np.zeros(shape, dtype=np.complex128)
    cur = 0.4 - 0.9j
    data[0, 1] = cur
    data[0, 0] = np.exp(2j * np.pi * 3 * 4 / 16) * cur
    grid = ResourceGrid(data=data, pilots=np.zeros(shape, dtype=np.complex128))
    for k in (1, 2):
        d = tx_window_sample_delta(grid, alloc, m=0, l=1, k=k, duration=3)
        assert abs(d) < 1e-15


def test_zero_plan_is_identity():
    sc = toy_mixed_scenario()
    rng = np.random.default_rng(5)
    grids = random_grids(sc, rng)
    base = synthesize_cp_ofdm(sc, grids)
    out = apply_tx_windowing(base, sc, grids, zero_plan(sc))
    assert np.array_equal(out.samples, base.samples)


def test_single_windowed_re_is_local(rng):
    sc = toy_mixed_scenario()
    grids = random_grids(sc, rng)
    base = synthesize_cp_ofdm(sc, grids)
    plan = zero_plan(sc)
    t_len = 3
    plan.durations[0][2, 1] = t_len
    out = apply_tx_windowing(base, sc, grids, plan)
    diff = np.nonzero(out.samples != base.samples)[0]
    sym_len = sc.users[0].numerology.symbol_len
    assert diff.size <= t_len
    assert np.all(diff >= sym_len)
    assert np.all(diff < sym_len + t_len)


@pytest.mark.parametrize("seed", range(5))
def test_differential_matches_overlap_add_oracle(seed):
    rng = np.random.default_rng(seed)
    sc = toy_mixed_scenario()
    grids = random_grids(sc, rng)
    plan = random_plan(sc, rng)
    base = synthesize_cp_ofdm(sc, grids)
    fast = apply_tx_windowing(base, sc, grids, plan)
    ref = brute_force_tx_window(sc, grids, plan)
    assert np.max(np.abs(fast.samples - ref)) < 1e-12


def test_single_re_window_matches_oracle(rng):
    sc = single_user_scenario(n=16, m=3, l=2, cp_rate="1/4", start=-5)
    grids = random_grids(sc, rng)
    plan = zero_plan(sc)
    plan.durations[0][1, 1] = 2
    base = synthesize_cp_ofdm(sc, grids)
    fast = apply_tx_windowing(base, sc, grids, plan)
    ref = brute_force_tx_window(sc, grids, plan)
    assert np.max(np.abs(fast.samples - ref)) < 1e-12


def test_plan_dimension_mismatch_rejected(rng):
    sc = toy_mixed_scenario()
    grids = random_grids(sc, rng)
    base = synthesize_cp_ofdm(sc, grids)
    bad = zero_plan(sc)
    bad.durations[0] = bad.durations[0][:, :1]
    with pytest.raises(ValueError, match="mismatches"):
        apply_tx_windowing(base, sc, grids, bad)


def test_windowing_does_not_increase_energy_on_average():
    # independent adjacent symbols: mean energy change must be negative
    sc = single_user_scenario(n=16, m=4, l=4, cp_rate="1/4", start=2)
    deltas = []
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        grids = random_grids(sc, rng, standard_normal=False)
        base = synthesize_cp_ofdm(sc, grids)
        plan = random_plan(sc, rng)
        out = apply_tx_windowing(base, sc, grids, plan)
        deltas.append(np.sum(np.abs(out.samples) ** 2)
                      - np.sum(np.abs(base.samples) ** 2))
    deltas = np.asarray(deltas)
    mean = deltas.mean()
    se = deltas.std(ddof=1) / np.sqrt(deltas.size)
    assert mean + 3 * se < 0


def test_sample_delta_outside_range_rejected(rng):
    sc = single_user_scenario(n=16, m=2, l=2, cp_rate="1/4", start=1)
    grids = random_grids(sc, rng)
    with pytest.raises(ValueError, match="outside"):
        tx_window_sample_delta(grids[0], sc.users[0], m=0, l=1, k=3, duration=2)
