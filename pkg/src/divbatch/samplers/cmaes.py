"""(mu/mu_w, lambda)-CMA-ES with rank-1 and rank-mu covariance updates.

A compact implementation of the standard strategy: weighted recombination
of the best mu out of lambda offspring, cumulative step-size adaptation,
and the usual evolution-path covariance updates.  Only positive
recombination weights are used (they sum to 1).  No restarts.

The trajectory sampler records every evaluated offspring in evaluation
order, which is what batch selection consumes: the full evaluation
history, not just per-generation bests.
"""

from __future__ import annotations

import math

import numpy as np

from ..testbed import ObjectiveFunction, Portfolio


class CmaesError(RuntimeError):
    """Covariance or step-size state became unusable; carries a diagnostic."""


def default_population_size(dimension: int) -> int:
    return int(4 + 3 * math.log(dimension))


class CmaEs:
    """Strategy state plus ask/tell stepping.

    State fields: `mean`, `sigma`, `cov`, `p_sigma`, `p_c`, `weights`,
    `generation`.  `ask` draws lambda offspring from N(mean, sigma^2 C)
    using the supplied generator; `tell` ranks them and updates the state.
    """

    def __init__(
        self,
        mean: np.ndarray,
        sigma: float,
        population_size: int,
        bounds: tuple[float, float],
    ):
        mean = np.asarray(mean, dtype=float)
        dim = mean.shape[0]
        if population_size < 2:
            raise ValueError(f"population size must be >= 2, got {population_size}")
        if not sigma > 0:
            raise ValueError(f"initial step size must be positive, got {sigma}")
        self.dimension = dim
        self.lam = population_size
        self.mu = population_size // 2
        self.bounds = (float(bounds[0]), float(bounds[1]))

        # log-linear positive weights, normalized to sum 1
        raw = np.log((self.lam + 1) / 2.0) - np.log(np.arange(1, self.mu + 1))
        self.weights = raw / np.sum(raw)
        self.mu_eff = 1.0 / np.sum(self.weights**2)

        self.c_sigma = (self.mu_eff + 2.0) / (dim + self.mu_eff + 5.0)
        self.d_sigma = (
            1.0
            + 2.0 * max(0.0, math.sqrt((self.mu_eff - 1.0) / (dim + 1.0)) - 1.0)
            + self.c_sigma
        )
        self.c_c = (4.0 + self.mu_eff / dim) / (dim + 4.0 + 2.0 * self.mu_eff / dim)
        self.c_1 = 2.0 / ((dim + 1.3) ** 2 + self.mu_eff)
        self.c_mu = min(
            1.0 - self.c_1,
            2.0 * (self.mu_eff - 2.0 + 1.0 / self.mu_eff)
            / ((dim + 2.0) ** 2 + self.mu_eff),
        )
        self.chi_n = math.sqrt(dim) * (1.0 - 1.0 / (4.0 * dim) + 1.0 / (21.0 * dim**2))

        self.mean = mean.copy()
        self.sigma = float(sigma)
        self.cov = np.eye(dim)
        self.p_sigma = np.zeros(dim)
        self.p_c = np.zeros(dim)
        self.generation = 0
        self._decompose()

    def _decompose(self) -> None:
        """Refresh the eigendecomposition of C; reject non-PD states."""
        cov = (self.cov + self.cov.T) / 2.0
        if not np.all(np.isfinite(cov)):
            raise CmaesError(
                f"generation {self.generation}: covariance contains non-finite entries"
            )
        eigvals, eigvecs = np.linalg.eigh(cov)
        if eigvals[0] <= 0.0:
            raise CmaesError(
                f"generation {self.generation}: covariance not positive definite "
                f"(smallest eigenvalue {eigvals[0]:.3e})"
            )
        self.cov = cov
        self._eigvals = eigvals
        self._eigvecs = eigvecs
        self._transform = eigvecs * np.sqrt(eigvals)  # C^(1/2) factor
        self._inv_sqrt = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T

    def ask_one(self, rng: np.random.Generator) -> np.ndarray:
        """One offspring; resampled up to 100 times to land in bounds, then
        coordinate-wise clamped."""
        lo, hi = self.bounds
        x = self.mean  # placeholder for the clamp fallback
        for _ in range(100):
            z = rng.standard_normal(self.dimension)
            x = self.mean + self.sigma * (self._transform @ z)
            if np.all((x >= lo) & (x <= hi)):
                return x
        return np.clip(x, lo, hi)

    def ask(self, rng: np.random.Generator) -> np.ndarray:
        return np.stack([self.ask_one(rng) for _ in range(self.lam)])

    def tell(self, points: np.ndarray, fitness: np.ndarray) -> None:
        """Rank offspring by fitness and apply the state update."""
        points = np.asarray(points, dtype=float)
        fitness = np.asarray(fitness, dtype=float)
        if points.shape != (self.lam, self.dimension):
            raise ValueError(
                f"expected {(self.lam, self.dimension)} points, got {points.shape}"
            )
        if not np.all(np.isfinite(fitness)):
            raise CmaesError(
                f"generation {self.generation}: non-finite fitness in offspring"
            )
        order = np.argsort(fitness, kind="stable")[: self.mu]
        steps = (points[order] - self.mean) / self.sigma  # (mu, D)
        step_w = self.weights @ steps

        self.mean = self.mean + self.sigma * step_w

        self.p_sigma = (1.0 - self.c_sigma) * self.p_sigma + math.sqrt(
            self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff
        ) * (self._inv_sqrt @ step_w)
        norm_ps = float(np.linalg.norm(self.p_sigma))
        expected = math.sqrt(
            1.0 - (1.0 - self.c_sigma) ** (2 * (self.generation + 1))
        )
        h_sigma = 1.0 if norm_ps / expected < (1.4 + 2.0 / (self.dimension + 1.0)) * self.chi_n else 0.0

        self.p_c = (1.0 - self.c_c) * self.p_c + h_sigma * math.sqrt(
            self.c_c * (2.0 - self.c_c) * self.mu_eff
        ) * step_w

        rank_mu = (steps.T * self.weights) @ steps
        delta_h = (1.0 - h_sigma) * self.c_c * (2.0 - self.c_c)
        self.cov = (
            (1.0 - self.c_1 - self.c_mu) * self.cov
            + self.c_1 * (np.outer(self.p_c, self.p_c) + delta_h * self.cov)
            + self.c_mu * rank_mu
        )

        self.sigma = self.sigma * math.exp(
            (self.c_sigma / self.d_sigma) * (norm_ps / self.chi_n - 1.0)
        )
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise CmaesError(
                f"generation {self.generation}: step size degenerated to {self.sigma!r}"
            )
        self.generation += 1
        self._decompose()


def cmaes_trajectory(fn: ObjectiveFunction, cfg) -> Portfolio:
    """Full CMA-ES evaluation history of length exactly T.

    Runs ceil(T / lambda) generations from a uniformly drawn initial mean
    and records every evaluated offspring in evaluation order, truncating
    to T.  If the covariance degenerates mid-run, the partial trajectory
    is returned (with the diagnostic in the provenance) provided at least
    lambda points were recorded; otherwise the error propagates.
    """
    from . import _check_config

    _check_config(fn, cfg, "cmaes")
    dim = cfg.dimension
    lam = cfg.population_size or default_population_size(dim)
    if lam < 2:
        raise ValueError(f"cmaes population size must be >= 2, got {lam}")
    if cfg.budget < lam:
        raise ValueError(
            f"budget {cfg.budget} is below one population of {lam} evaluations"
        )
    lo, hi = cfg.bounds
    sigma0 = cfg.initial_step_size or (hi - lo) / 5.0
    rng = np.random.default_rng(cfg.seed)
    if cfg.initial_mean is not None:
        mean0 = np.asarray(cfg.initial_mean, dtype=float)
    else:
        mean0 = rng.uniform(lo, hi, dim)

    strategy = CmaEs(mean0, sigma0, lam, (lo, hi))
    generations = -(-cfg.budget // lam)
    points: list[np.ndarray] = []
    fitness: list[np.ndarray] = []
    note = ""
    for _ in range(generations):
        try:
            offspring = strategy.ask(rng)
            values = np.asarray(fn.evaluate(offspring), dtype=float)
            points.append(offspring)
            fitness.append(values)
            strategy.tell(offspring, values)
        except CmaesError as exc:
            if sum(len(p) for p in points) < lam:
                raise
            note = str(exc)
            break

    all_points = np.concatenate(points)[: cfg.budget]
    all_fitness = np.concatenate(fitness)[: cfg.budget]
    provenance = {
        "sampler_id": "cmaes",
        "seed": str(cfg.seed),
        "T": str(cfg.budget),
        "population_size": str(lam),
        "sigma0": repr(float(sigma0)),
    }
    if note:
        provenance["aborted"] = note
    return Portfolio(
        dimension=dim,
        points=all_points,
        fitness=all_fitness,
        f_opt=fn.f_opt,
        provenance=provenance,
    )
