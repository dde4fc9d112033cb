"""divbatch: diversity-constrained batch selection from optimization portfolios.

The package generates portfolios of evaluated points (uniform, Sobol',
CMA-ES trajectories) on a small testbed of box-constrained benchmark
functions, extracts batches of k points whose pairwise distances respect a
threshold while keeping average fitness low (a greedy sweep plus an exact
branch-and-bound reference), and aggregates the resulting diversity versus
fitness trade-off curves.
"""

from .testbed import (
    ObjectiveFunction,
    FunctionDescriptor,
    Portfolio,
    PortfolioFormatError,
    evaluate_portfolio,
    get_function,
    list_functions,
    load_portfolio,
    make_gallagher,
    save_portfolio,
)
from .samplers import SamplerConfig, sample_portfolio, uniform_sample
from .samplers.sobol import sobol_points, sobol_sample
from .samplers.cmaes import CmaesError, CmaEs, cmaes_trajectory
from .selection import (
    Batch,
    ExactResult,
    SelectionConfig,
    TradeoffRecord,
    exact_select,
    greedy_sweep,
    initial_batch,
    make_batch,
    verify_batch,
)
from .analysis import (
    AggregateRow,
    DistanceDistribution,
    TradeoffCurve,
    aggregate,
    distance_distribution,
    interpolate_at,
    lower_envelope,
    pairwise_distance_stats,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateRow",
    "Batch",
    "CmaEs",
    "CmaesError",
    "DistanceDistribution",
    "ExactResult",
    "FunctionDescriptor",
    "ObjectiveFunction",
    "Portfolio",
    "PortfolioFormatError",
    "SamplerConfig",
    "SelectionConfig",
    "TradeoffCurve",
    "TradeoffRecord",
    "aggregate",
    "cmaes_trajectory",
    "evaluate_portfolio",
    "exact_select",
    "get_function",
    "greedy_sweep",
    "initial_batch",
    "interpolate_at",
    "list_functions",
    "load_portfolio",
    "lower_envelope",
    "distance_distribution",
    "make_batch",
    "make_gallagher",
    "pairwise_distance_stats",
    "sample_portfolio",
    "save_portfolio",
    "sobol_points",
    "sobol_sample",
    "uniform_sample",
    "verify_batch",
]
