"""Shared fixtures and independent oracles.

brute_force_select is the ground truth for the exact solver: it
enumerates every k-subset with its own distance computation
(math.dist) and never touches the branch-and-bound code path.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from divbatch.testbed import Portfolio


def brute_force_select(portfolio, k, d_min):
    """(optimal loss, witness index tuple) over all C(T,k) subsets, or None."""
    points = np.asarray(portfolio.points, dtype=float)
    fitness = [float(f) for f in portfolio.fitness]
    base = 0.0 if portfolio.f_opt is None else float(portfolio.f_opt)
    best_loss = math.inf
    best_combo = None
    for combo in itertools.combinations(range(len(fitness)), k):
        feasible = True
        for i, j in itertools.combinations(combo, 2):
            if math.dist(points[i], points[j]) < d_min:
                feasible = False
                break
        if not feasible:
            continue
        loss = sum(fitness[i] for i in combo) / k - base
        if loss < best_loss:
            best_loss = loss
            best_combo = combo
    if best_combo is None:
        return None
    return best_loss, best_combo


def line_portfolio() -> Portfolio:
    """1-D points {0, 0.1, 1.0, 2.0} under f(x) = x^2, the worked example."""
    points = np.array([[0.0], [0.1], [1.0], [2.0]])
    return Portfolio(
        dimension=1, points=points, fitness=points[:, 0] ** 2, f_opt=0.0
    )


def random_portfolio(rng, size, dimension, f_opt=0.0) -> Portfolio:
    """Random geometry with fitness decoupled from position."""
    return Portfolio(
        dimension=dimension,
        points=rng.uniform(-5.0, 5.0, (size, dimension)),
        fitness=rng.uniform(0.0, 10.0, size),
        f_opt=f_opt,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
