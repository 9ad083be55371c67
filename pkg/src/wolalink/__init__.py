"""Link-level simulator for mixed-numerology CP-OFDM with adaptive,
extensionless per-RE transmitter and receiver windowing."""

from .grid import (
    Numerology,
    ResourceGrid,
    Scenario,
    ScenarioConfig,
    ScenarioError,
    UserAllocation,
    UserConfig,
    build_grid,
    build_scenario,
    draw_data_symbols,
    load_scenario_config,
    place_dmrs,
)
from .synth import (
    SampleStream,
    TxWindowPlan,
    apply_tx_windowing,
    synthesize_cp_ofdm,
    tx_window_taper,
    zero_plan,
)

__version__ = "0.1.0"
