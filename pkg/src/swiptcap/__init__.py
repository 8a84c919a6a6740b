"""Capacity and rate-energy region of an AWGN SWIPT link with a nonlinear rectenna."""

from .channel import ChannelParams, InputDistribution, mutual_information, shannon_capacity
from .certificate import KktReport, e_lim, kkt_check, p_lim, support_count_stability
from .rectenna import CircuitParams, EhBudget, e_req_from_power, eh_metric, harvested_power
from .region import RegionPoint, SweepSpec, capacity_vs_ap, emit_csv, rate_energy_region
from .solver import (
    Infeasible,
    Multipliers,
    NonConvergent,
    ProblemSpec,
    Solution,
    SolverError,
    Tolerances,
    dual_solve,
    extract_mass_points,
    no_pp_solve,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelParams", "CircuitParams", "EhBudget", "InputDistribution", "Infeasible",
    "KktReport", "Multipliers", "NonConvergent", "ProblemSpec", "RegionPoint", "Solution",
    "SolverError", "SweepSpec", "Tolerances", "capacity_vs_ap", "dual_solve", "e_lim",
    "e_req_from_power", "eh_metric", "emit_csv", "extract_mass_points", "harvested_power",
    "kkt_check", "mutual_information", "no_pp_solve", "p_lim", "rate_energy_region",
    "shannon_capacity", "support_count_stability",
]
