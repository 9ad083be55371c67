import numpy as np
import pytest

from wolalink.grid import (
    ResourceGrid,
    Scenario,
    ScenarioConfig,
    UserConfig,
    build_scenario,
)


def make_scenario(users, bandwidth_hz, cp_rate, guard_band_hz=0.0,
                  carrier_freq_hz=4e9, ul_timing_offset=64):
    """users: list of dicts forwarded to UserConfig."""
    cfgs = [UserConfig(**u) for u in users]
    return build_scenario(ScenarioConfig(
        bandwidth_hz=bandwidth_hz,
        cp_rate=cp_rate,
        guard_band_hz=guard_band_hz,
        users=cfgs,
        carrier_freq_hz=carrier_freq_hz,
        ul_timing_offset=ul_timing_offset,
    ))


def paper_scale_scenario(l_slow=14, snr_fast=10.0, snr_slow=10.0,
                         dmrs_fast="DL-TypeA-pos2-add3",
                         dmrs_slow="DL-TypeA-pos2-add3"):
    """Two users sharing 7.68 MHz: 60 sc at 60 kHz and 120 sc at 30 kHz."""
    return make_scenario(
        users=[
            dict(name="fast", subcarrier_spacing_hz=60e3, num_subcarriers=60,
                 num_symbols=2 * l_slow, snr_db=snr_fast, mobility_kmh=120.0,
                 rms_delay_spread_ns=30.0, pdp_profile="TDL-A",
                 dl_dmrs=dmrs_fast, subcarrier_start=-62,
                 ul_num_symbols=4),
            dict(name="slow", subcarrier_spacing_hz=30e3, num_subcarriers=120,
                 num_symbols=l_slow, snr_db=snr_slow, mobility_kmh=30.0,
                 rms_delay_spread_ns=100.0, pdp_profile="TDL-B",
                 dl_dmrs=dmrs_slow, subcarrier_start=4,
                 ul_num_symbols=2),
        ],
        bandwidth_hz=7.68e6,
        cp_rate="9/128",
        guard_band_hz=240e3,
    )


def toy_mixed_scenario(m_fast=8, m_slow=16, l_fast=2, snr_fast=10.0,
                       snr_slow=10.0):
    """Small mixed-numerology pair: N=32 (K=3) and N=64 (K=6)."""
    if l_fast % 2:
        raise ValueError("fast symbol count must be even")
    return make_scenario(
        users=[
            dict(name="fast", subcarrier_spacing_hz=60e3,
                 num_subcarriers=m_fast, num_symbols=l_fast,
                 snr_db=snr_fast, mobility_kmh=120.0,
                 rms_delay_spread_ns=30.0, pdp_profile="TDL-A",
                 dl_dmrs="every-nth:2", ul_dmrs="every-nth:2",
                 subcarrier_start=-(m_fast + 2), ul_num_symbols=l_fast),
            dict(name="slow", subcarrier_spacing_hz=30e3,
                 num_subcarriers=m_slow, num_symbols=l_fast // 2,
                 snr_db=snr_slow, mobility_kmh=30.0,
                 rms_delay_spread_ns=100.0, pdp_profile="TDL-B",
                 dl_dmrs="every-nth:2", ul_dmrs="every-nth:2",
                 subcarrier_start=4, ul_num_symbols=l_fast // 2),
        ],
        bandwidth_hz=1.92e6,
        cp_rate="3/32",
        guard_band_hz=120e3,
    )


def single_user_scenario(n=16, m=4, l=3, cp_rate="1/4", snr_db=10.0,
                         start=None, spacing=60e3, **user_kw):
    bw = n * spacing
    return make_scenario(
        users=[dict(name="u0", subcarrier_spacing_hz=spacing,
                    num_subcarriers=m, num_symbols=l, snr_db=snr_db,
                    subcarrier_start=start, ul_num_symbols=l, **user_kw)],
        bandwidth_hz=bw,
        cp_rate=cp_rate,
        guard_band_hz=0.0,
    )


def random_grids(scenario: Scenario, rng: np.random.Generator,
                 standard_normal=True):
    """Dense complex grids (as data, no pilots) for numerical equivalence tests."""
    grids = []
    for u in scenario.users:
        shape = (u.num_subcarriers, u.numerology.num_symbols)
        if standard_normal:
            vals = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
            vals /= np.sqrt(2.0)
        else:
            vals = np.exp(1j * (np.pi / 4 + np.pi / 2
                                * rng.integers(0, 4, size=shape)))
        grids.append(ResourceGrid(data=vals,
                                  pilots=np.zeros(shape, dtype=np.complex128)))
    return grids


def random_plan(scenario: Scenario, rng: np.random.Generator):
    from wolalink.synth import TxWindowPlan

    return TxWindowPlan([
        rng.integers(0, u.numerology.cp_len + 1,
                     size=(u.num_subcarriers, u.numerology.num_symbols))
        for u in scenario.users
    ])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
