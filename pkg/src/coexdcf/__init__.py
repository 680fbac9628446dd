"""Coexistence of a primary and a scanning secondary 802.11 DCF network.

Closed-form model (fixed points, scan outcomes, throughput), a grid
optimizer for the secondary design and a slot-level simulator.
"""
from .fixed_point import (
    ConvergenceError,
    State1Solution,
    State2Solution,
    solve_bianchi_saturated,
    solve_state1,
    solve_state2,
    stationary_distribution,
    tau_of_p_saturated,
    tau_of_p_unsaturated,
)
from .optimize import OptimizationProblem, OptimizationResult, optimize, robustness_sweep
from .params import (
    PRESETS,
    NetworkParams,
    Scenario,
    Scheme,
    SchemeConfig,
    TimingParams,
    ValidationError,
    scenario_from_mapping,
    validate,
)
from .scan import ScanOutcomeModel, alpha_b, alpha_c_recursion, alpha_c_steady, alpha_i
from .sim import SimConfig, SimStats, compare_to_analytical, estimate_tau_from_ratios, run_simulation
from .throughput import Analysis, ThroughputReport, analyze

__version__ = "0.1.0"
