"""Shared electricity storage among firms facing a peak/off-peak tariff.

The public API re-exports the main entry points of each submodule; see the
submodules for the full set of helpers.
"""

from .coalition import Partition, induced_game_nash, join, stability_report
from .core import Efficiency, Estimate, NoArbitrageError, Tariff, arbitrage_constant, lossy_threshold
from .demand import (
    Empirical,
    GaussianCopulaModel,
    IndependentModel,
    IrwinHall,
    LogNormal,
    PairedEmpiricalModel,
    SampleMatrix,
    TransformModel,
    TransformOfUniform,
    TruncatedGaussian,
    Uniform,
    alignment_check,
    conditional_mean,
    fit_empirical,
    sample,
)
from .marketsim import MarketLedger, savings_report, simulate
from .sharing import Allocation, firm_cost_sharing, nash_equilibrium, social_cost, verify_global_min
from .standalone import optimal_standalone, optimal_standalone_lossy, standalone_cost

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "Efficiency",
    "Empirical",
    "Estimate",
    "GaussianCopulaModel",
    "IndependentModel",
    "IrwinHall",
    "LogNormal",
    "MarketLedger",
    "NoArbitrageError",
    "PairedEmpiricalModel",
    "Partition",
    "SampleMatrix",
    "Tariff",
    "TransformModel",
    "TransformOfUniform",
    "TruncatedGaussian",
    "Uniform",
    "alignment_check",
    "arbitrage_constant",
    "conditional_mean",
    "firm_cost_sharing",
    "fit_empirical",
    "induced_game_nash",
    "join",
    "lossy_threshold",
    "nash_equilibrium",
    "optimal_standalone",
    "optimal_standalone_lossy",
    "sample",
    "savings_report",
    "simulate",
    "social_cost",
    "stability_report",
    "standalone_cost",
    "verify_global_min",
]
