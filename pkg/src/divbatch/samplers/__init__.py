"""Portfolio generators: uniform random, Sobol', CMA-ES trajectories.

All samplers produce a `testbed.Portfolio` of exactly T evaluated
in-bounds points.  Randomness comes from numpy's default PCG64 generator
seeded from the config, so identical configs give bit-identical
portfolios on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..testbed import (
    LOWER_BOUND,
    UPPER_BOUND,
    ObjectiveFunction,
    Portfolio,
    evaluate_portfolio,
)

SAMPLER_IDS = ("uniform", "sobol", "cmaes")


@dataclass(frozen=True)
class SamplerConfig:
    """How to draw a portfolio.

    `bounds` is a scalar (lo, hi) interval applied to every coordinate and
    must stay inside the testbed box.  The CMA-ES options are ignored by
    the non-adaptive samplers; `seed` is ignored by the (deterministic)
    Sobol' sampler.
    """

    sampler_id: str
    budget: int
    dimension: int
    seed: int = 0
    bounds: tuple[float, float] = (LOWER_BOUND, UPPER_BOUND)
    population_size: int | None = None
    initial_step_size: float | None = None
    initial_mean: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.sampler_id not in SAMPLER_IDS:
            raise ValueError(
                f"unknown sampler {self.sampler_id!r}; expected one of {SAMPLER_IDS}"
            )
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        lo, hi = self.bounds
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ValueError(f"bounds must be a finite interval lo < hi, got {self.bounds}")
        if lo < LOWER_BOUND or hi > UPPER_BOUND:
            raise ValueError(
                f"bounds {self.bounds} exceed the testbed box "
                f"[{LOWER_BOUND}, {UPPER_BOUND}]"
            )
        if self.population_size is not None and self.population_size < 2:
            raise ValueError(
                f"population size must be >= 2, got {self.population_size}"
            )
        if self.initial_step_size is not None and not self.initial_step_size > 0:
            raise ValueError(
                f"initial step size must be positive, got {self.initial_step_size}"
            )
        if self.initial_mean is not None:
            mean = np.asarray(self.initial_mean, dtype=float)
            if mean.shape != (self.dimension,):
                raise ValueError(
                    f"initial mean must have {self.dimension} coordinates"
                )
            if np.any(mean < lo) or np.any(mean > hi):
                raise ValueError("initial mean must lie within the bounds")


def _check_config(fn: ObjectiveFunction, cfg: SamplerConfig, expected: str) -> None:
    if cfg.sampler_id != expected:
        raise ValueError(
            f"config requests sampler {cfg.sampler_id!r}, called {expected!r}"
        )
    if cfg.dimension != fn.dimension:
        raise ValueError(
            f"config dimension {cfg.dimension} does not match function "
            f"dimension {fn.dimension}"
        )


def uniform_sample(fn: ObjectiveFunction, cfg: SamplerConfig) -> Portfolio:
    """T i.i.d. points, each coordinate uniform on [lo, hi)."""
    _check_config(fn, cfg, "uniform")
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.bounds
    points = rng.uniform(lo, hi, (cfg.budget, cfg.dimension))
    return evaluate_portfolio(
        fn,
        points,
        provenance={
            "sampler_id": "uniform",
            "seed": str(cfg.seed),
            "T": str(cfg.budget),
        },
    )


def sample_portfolio(fn: ObjectiveFunction, cfg: SamplerConfig) -> Portfolio:
    """Dispatch to the sampler named by the config."""
    if cfg.sampler_id == "uniform":
        return uniform_sample(fn, cfg)
    if cfg.sampler_id == "sobol":
        return sobol_sample(fn, cfg)
    return cmaes_trajectory(fn, cfg)


# imported last: both submodules import SamplerConfig from this package
from .cmaes import CmaEs, CmaesError, cmaes_trajectory  # noqa: E402
from .sobol import sobol_points, sobol_sample  # noqa: E402

__all__ = [
    "SAMPLER_IDS",
    "CmaEs",
    "CmaesError",
    "SamplerConfig",
    "cmaes_trajectory",
    "sample_portfolio",
    "sobol_points",
    "sobol_sample",
    "uniform_sample",
]
