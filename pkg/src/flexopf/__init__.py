"""Risk-aware energy and flexibility market clearing for unbalanced
three-phase distribution feeders."""

from .clearing import ClearingArtifacts, clear_market
from .copula import UncertaintyModel, UncertaintySource
from .network import (
    Bus,
    FeederModel,
    Generator,
    Line,
    Load,
    Renewable,
    Storage,
    build_admittance,
    load_feeder,
    save_feeder,
)
from .opf import ClearingSolution, assemble_deterministic, solve
from .powerflow import PowerFlowResult, run_powerflow
from .pricing import PriceReport, charge_prices, reward_prices, settle
from .recovery import VoltageRecovery, recover_voltages
from .scenario import RiskConfig, Scenario, Tariff, load_scenario, save_scenario
from .tracemat import TraceMatrixSet, build_trace_matrices
from .validate import ValidationReport, validate

__version__ = "0.1.0"

__all__ = [
    "Bus", "ClearingArtifacts", "ClearingSolution", "FeederModel", "Generator",
    "Line", "Load", "PowerFlowResult", "PriceReport", "Renewable", "RiskConfig",
    "Scenario", "Storage", "Tariff", "TraceMatrixSet", "UncertaintyModel",
    "UncertaintySource", "ValidationReport", "VoltageRecovery",
    "assemble_deterministic", "build_admittance", "build_trace_matrices",
    "charge_prices", "clear_market", "load_feeder", "load_scenario",
    "recover_voltages", "reward_prices", "run_powerflow", "save_feeder",
    "save_scenario", "settle", "solve", "validate",
]
