"""Joint subcarrier pairing, relay selection and relay power allocation for
OFDMA two-way amplify-and-forward relay networks."""

from twrelay.channel import (
    ChannelRealization,
    NetworkConfig,
    place_nodes,
    sample_channels,
)
from twrelay.rate_model import TupleContext, profit, sum_rate
from twrelay.power_opt import PowerSolverConfig, optimal_power, refine_powers
from twrelay.assignment import (
    Allocation,
    ProfitMatrix,
    build_profit_matrix,
    solve_pairing,
)
from twrelay.dual_solver import (
    DualState,
    SolverOptions,
    SolverReport,
    evaluate_dual,
    solve,
    subgradient_step,
)
from twrelay.baselines import epa_solve, rra_solve

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "ChannelRealization",
    "DualState",
    "NetworkConfig",
    "PowerSolverConfig",
    "ProfitMatrix",
    "SolverOptions",
    "SolverReport",
    "TupleContext",
    "build_profit_matrix",
    "epa_solve",
    "evaluate_dual",
    "optimal_power",
    "place_nodes",
    "profit",
    "refine_powers",
    "rra_solve",
    "sample_channels",
    "solve",
    "solve_pairing",
    "subgradient_step",
    "sum_rate",
]
