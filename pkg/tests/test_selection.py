"""Greedy sweep and batch plumbing against hand-enumerated examples."""

import numpy as np
import pytest

from divbatch.selection import (
    Batch,
    SelectionConfig,
    euclidean,
    greedy_sweep,
    initial_batch,
    make_batch,
    verify_batch,
)
from divbatch.testbed import Portfolio

from conftest import line_portfolio, random_portfolio


def test_euclidean_metric():
    a = np.array([[0.0, 0.0], [3.0, 4.0]])
    d = euclidean(a, a)
    assert d[0, 1] == 5.0 and d[1, 0] == 5.0 and d[0, 0] == 0.0


def test_config_validation():
    SelectionConfig(k=2)
    with pytest.raises(ValueError):
        SelectionConfig(k=1)
    with pytest.raises(ValueError):
        SelectionConfig(k=2, max_iterations=-1)
    with pytest.raises(ValueError):
        SelectionConfig(k=2, epsilon=-0.1)
    with pytest.raises(ValueError):
        SelectionConfig(k=2, min_distance=0.0)
    with pytest.raises(ValueError):
        SelectionConfig(k=2, time_limit=0.0)
    with pytest.raises(ValueError):
        SelectionConfig(k=2, tie_break="coin-flip")


def test_make_batch_consistency():
    p = line_portfolio()
    b = make_batch(p, [2, 0])
    assert b.indices == (0, 2)  # stored sorted
    assert b.min_pairwise_distance == 1.0
    assert b.loss == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        make_batch(p, [0, 0])
    with pytest.raises(ValueError):
        make_batch(p, [0, 4])
    with pytest.raises(ValueError):
        make_batch(p, [0])


def test_initial_batch_example():
    p = line_portfolio()
    b = initial_batch(p, 2)
    assert b.indices == (0, 1)
    assert b.min_pairwise_distance == pytest.approx(0.1, abs=1e-15)
    assert b.loss == pytest.approx(0.005, abs=1e-15)


def test_initial_batch_whole_portfolio():
    p = line_portfolio()
    b = initial_batch(p, 4)
    assert b.indices == (0, 1, 2, 3)
    with pytest.raises(ValueError):
        initial_batch(p, 5)


def test_initial_batch_fitness_tie_prefers_lower_index():
    p = Portfolio(
        dimension=1,
        points=np.array([[0.0], [1.0], [2.0]]),
        fitness=np.array([5.0, 5.0, 9.0]),
    )
    assert initial_batch(p, 2).indices == (0, 1)


def test_greedy_worked_example():
    p = line_portfolio()
    records = greedy_sweep(p, SelectionConfig(k=2))
    assert len(records) == 3

    r0, r1, r2 = records
    assert r0.iteration == 0
    assert r0.batch.indices == (0, 1)
    assert r0.loss == pytest.approx(0.005, abs=1e-15)

    # swap of point 0.1 wins: batch {0, 1.0} has mean 0.5 < 0.505
    assert r1.batch.indices == (0, 2)
    assert r1.min_distance == 1.0
    assert r1.loss == pytest.approx(0.5, abs=1e-15)

    assert r2.batch.indices == (0, 3)
    assert r2.min_distance == 2.0
    assert r2.loss == pytest.approx(2.0, abs=1e-15)
    assert r2.exhausted  # nothing can push the spread past 2.0
    assert not r1.exhausted


def test_greedy_zero_iterations():
    p = line_portfolio()
    records = greedy_sweep(p, SelectionConfig(k=2, max_iterations=0))
    assert len(records) == 1
    assert records[0].batch.indices == (0, 1)


def test_greedy_coincident_points_terminate_immediately():
    p = Portfolio(
        dimension=2,
        points=np.zeros((5, 2)),
        fitness=np.arange(5.0),
    )
    records = greedy_sweep(p, SelectionConfig(k=3))
    assert len(records) == 1
    assert records[0].exhausted
    assert records[0].min_distance == 0.0


def test_greedy_dmin_non_decreasing(rng):
    for _ in range(5):
        p = random_portfolio(rng, 120, 3)
        records = greedy_sweep(p, SelectionConfig(k=4, max_iterations=200))
        d = [r.min_distance for r in records]
        assert all(a <= b for a, b in zip(d, d[1:]))


def test_greedy_epsilon_forces_strict_progress(rng):
    eps = 0.05
    p = random_portfolio(rng, 150, 2)
    records = greedy_sweep(p, SelectionConfig(k=3, epsilon=eps, max_iterations=500))
    d = [r.min_distance for r in records]
    assert all(b >= a + eps - 1e-12 for a, b in zip(d, d[1:]))


def test_greedy_records_verify_at_their_own_distance(rng):
    p = random_portfolio(rng, 80, 2)
    records = greedy_sweep(p, SelectionConfig(k=3, max_iterations=100))
    for r in records:
        assert verify_batch(p, r.batch, r.min_distance)
        assert r.loss == r.batch.loss
        assert r.min_distance == r.batch.min_pairwise_distance


def test_greedy_k_equals_T():
    p = line_portfolio()
    records = greedy_sweep(p, SelectionConfig(k=4))
    # no point outside the batch exists, so no swap is ever feasible
    assert len(records) == 1
    assert records[0].exhausted


def test_greedy_swap_tie_removes_worse_fitness_member():
    # both swaps are feasible and land on the same mean (4.5/2); the rule
    # drops the worse-fitness member of the closest pair, here index 1
    p = Portfolio(
        dimension=1,
        points=np.array([[0.0], [1.0], [-0.5], [2.0]]),
        fitness=np.array([1.0, 2.0, 2.5, 3.5]),
    )
    records = greedy_sweep(p, SelectionConfig(k=2, max_iterations=1))
    assert records[1].batch.indices == (0, 3)
    assert records[1].min_distance == 2.0
    assert records[1].loss == pytest.approx(2.25, abs=1e-15)


def test_greedy_swap_tie_final_leg_removes_lower_index():
    # equal fitness everywhere in the pair: both swaps bring in the same
    # point with the same mean, so the first pair member leaves
    p = Portfolio(
        dimension=1,
        points=np.array([[0.0], [0.5], [2.0]]),
        fitness=np.array([1.0, 1.0, 2.0]),
    )
    records = greedy_sweep(p, SelectionConfig(k=2, max_iterations=1))
    assert records[1].batch.indices == (1, 2)
    assert records[1].min_distance == 1.5


def test_greedy_is_deterministic(rng):
    p = random_portfolio(rng, 100, 2)
    a = greedy_sweep(p, SelectionConfig(k=4, max_iterations=60))
    b = greedy_sweep(p, SelectionConfig(k=4, max_iterations=60))
    assert [(r.iteration, r.min_distance, r.loss, r.batch.indices) for r in a] == [
        (r.iteration, r.min_distance, r.loss, r.batch.indices) for r in b
    ]


def test_greedy_falls_through_to_a_distance_raising_candidate():
    # for the removal of point 2 the cheapest feasible incoming point (4)
    # would leave both the minimum distance and the mean unimproved; the
    # scan must skip it and take point 5, which lifts the minimum to 2
    p = Portfolio(
        dimension=1,
        points=np.arange(10.0)[:, None] - 4.5,
        fitness=np.array([5.0, 0.0, 1.0, 2.0, 3.0, 4.0, 6.0, 7.0, 8.0, 9.0]),
    )
    records = greedy_sweep(p, SelectionConfig(k=3, max_iterations=1))
    assert len(records) == 2
    assert records[1].batch.indices == (1, 3, 5)
    assert records[1].min_distance == 2.0


def test_greedy_every_swap_makes_progress():
    # on a lattice-like portfolio with many tied distances, each applied
    # swap must either raise the minimum distance or lower the loss
    from divbatch import testbed
    from divbatch.samplers import SamplerConfig, sobol_sample

    fn = testbed.get_function("f1-sphere", 2)
    p = sobol_sample(fn, SamplerConfig("sobol", 300, 2))
    records = greedy_sweep(p, SelectionConfig(k=3, max_iterations=200))
    for prev, cur in zip(records, records[1:]):
        assert (cur.min_distance > prev.min_distance) or (
            cur.min_distance == prev.min_distance and cur.loss < prev.loss
        )


def test_verify_batch_rejects_inconsistency():
    p = line_portfolio()
    good = make_batch(p, [0, 2])
    assert verify_batch(p, good, 1.0)
    assert verify_batch(p, good, 0.5)
    assert not verify_batch(p, good, 1.5)

    duplicated = Batch(indices=(0, 0), min_pairwise_distance=0.0, loss=0.0)
    assert not verify_batch(p, duplicated, 0.0)

    out_of_range = Batch(indices=(0, 9), min_pairwise_distance=1.0, loss=1.0)
    assert not verify_batch(p, out_of_range, 0.5)

    lied_distance = Batch(indices=(0, 2), min_pairwise_distance=2.0, loss=good.loss)
    assert not verify_batch(p, lied_distance, 0.5)

    lied_loss = Batch(indices=(0, 2), min_pairwise_distance=1.0, loss=0.75)
    assert not verify_batch(p, lied_loss, 0.5)
