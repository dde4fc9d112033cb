"""From raw sweep records to reportable artifacts.

Lower envelopes turn a sweep into a dominance-free staircase; curves are
compared on a common distance grid by the conservative "first point
achieving at least d" rule, so every reported loss belongs to a real
batch.  Aggregation produces box-plot-ready quartile tables per
function/sampler group, with unreached distances counted explicitly
rather than hidden as NaNs.
"""

from __future__ import annotations

import csv
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .selection import Batch, Metric, TradeoffRecord, euclidean
from .testbed import Portfolio


@dataclass(frozen=True)
class TradeoffCurve:
    """(min_distance, loss) staircase plus identifying metadata.

    In envelope form the distances are strictly increasing and the losses
    non-decreasing.
    """

    points: tuple[tuple[float, float], ...]
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "metadata", dict(self.metadata))


@dataclass(frozen=True)
class DistanceDistribution:
    """All C(k,2) pairwise distances of one batch, with summary stats."""

    enforced_min_distance: float | None
    distances: tuple[float, ...]
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    mean: float


@dataclass(frozen=True)
class AggregateRow:
    """Quartile summary of one (function, sampler) group at one distance.

    The stats cover the runs whose curve reaches `d`; the rest are counted
    in `unreached`.  All stats are None when no run reaches the distance.
    """

    function_id: str
    sampler_id: str
    d: float
    run_count: int
    unreached: int
    median: float | None
    q1: float | None
    q3: float | None
    minimum: float | None
    maximum: float | None


def _as_pair(record) -> tuple[float, float]:
    if isinstance(record, TradeoffRecord):
        return (float(record.min_distance), float(record.loss))
    d, loss = record
    return (float(d), float(loss))


def lower_envelope(
    records: Sequence, metadata: Mapping[str, object] | None = None
) -> TradeoffCurve:
    """Dominance-free staircase of (min_distance, loss) points.

    A point survives iff no other point has distance >= it and strictly
    smaller loss.  Accepts TradeoffRecords or bare (distance, loss) pairs.
    """
    if not records:
        raise ValueError("cannot build an envelope from zero records")
    pairs = sorted({_as_pair(r) for r in records}, key=lambda p: (p[0], -p[1]))
    kept: list[tuple[float, float]] = []
    best = np.inf
    for d, loss in reversed(pairs):
        if loss <= best:
            kept.append((d, loss))
            best = loss
    kept.reverse()
    return TradeoffCurve(points=tuple(kept), metadata=metadata or {})


def interpolate_at(curve: TradeoffCurve, d: float) -> float | None:
    """Loss of the first curve point whose distance reaches d, else None.

    Conservative by construction: the returned loss belongs to a batch
    whose realized minimum distance is at least d.
    """
    distances = [p[0] for p in curve.points]
    pos = bisect_left(distances, d)
    if pos == len(distances):
        return None
    return curve.points[pos][1]


def distance_distribution(
    distances: Sequence[float], enforced_min_distance: float | None = None
) -> DistanceDistribution:
    """Summary stats over an already-computed distance multiset."""
    values = np.sort(np.asarray(distances, dtype=float))
    if values.size == 0:
        raise ValueError("need at least one pairwise distance")
    return DistanceDistribution(
        enforced_min_distance=enforced_min_distance,
        distances=tuple(float(v) for v in values),
        minimum=float(values[0]),
        q1=float(np.percentile(values, 25)),
        median=float(np.percentile(values, 50)),
        q3=float(np.percentile(values, 75)),
        maximum=float(values[-1]),
        mean=float(np.mean(values)),
    )


def pairwise_distance_stats(
    portfolio: Portfolio,
    batch: Batch,
    enforced_min_distance: float | None = None,
    metric: Metric = euclidean,
) -> DistanceDistribution:
    """The full multiset of pairwise distances inside one batch."""
    idx = list(batch.indices)
    points = portfolio.points[idx]
    dists = metric(points, points)
    iu = np.triu_indices(len(idx), 1)
    return distance_distribution(dists[iu], enforced_min_distance)


def aggregate(
    curves: Sequence[TradeoffCurve], d_grid: Sequence[float]
) -> list[AggregateRow]:
    """Per-(function, sampler, d) quartile stats across curves.

    Curves are grouped by their metadata; quartiles use the linear
    interpolation convention.  Output rows are sorted by group and follow
    the given d_grid order, so the result is independent of the input
    curve ordering.
    """
    if not curves:
        raise ValueError("aggregate requires at least one curve")
    groups: dict[tuple[str, str], list[TradeoffCurve]] = {}
    for curve in curves:
        key = (
            str(curve.metadata.get("function_id", "unknown")),
            str(curve.metadata.get("sampler_id", "unknown")),
        )
        groups.setdefault(key, []).append(curve)
    rows: list[AggregateRow] = []
    for function_id, sampler_id in sorted(groups):
        group = groups[(function_id, sampler_id)]
        for d in d_grid:
            losses = sorted(
                v
                for v in (interpolate_at(c, float(d)) for c in group)
                if v is not None
            )
            unreached = len(group) - len(losses)
            if losses:
                arr = np.asarray(losses)
                stats = dict(
                    median=float(np.percentile(arr, 50)),
                    q1=float(np.percentile(arr, 25)),
                    q3=float(np.percentile(arr, 75)),
                    minimum=float(arr[0]),
                    maximum=float(arr[-1]),
                )
            else:
                stats = dict(median=None, q1=None, q3=None, minimum=None, maximum=None)
            rows.append(
                AggregateRow(
                    function_id=function_id,
                    sampler_id=sampler_id,
                    d=float(d),
                    run_count=len(group),
                    unreached=unreached,
                    **stats,
                )
            )
    return rows


# ──────────────────────────────────────────────────────────────────────
#  Delimited exports
# ──────────────────────────────────────────────────────────────────────


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows(path, header: list[str], rows: Iterable[list]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _seed_key(curve: TradeoffCurve):
    seed = str(curve.metadata.get("seed", ""))
    return (len(seed), seed)  # numeric seeds sort numerically, others after


def write_curves_csv(path, curves: Sequence[TradeoffCurve]) -> None:
    """One row per curve point: function,sampler,seed,d,loss."""
    ordered = sorted(
        curves,
        key=lambda c: (
            str(c.metadata.get("function_id", "")),
            str(c.metadata.get("sampler_id", "")),
            _seed_key(c),
        ),
    )
    rows = []
    for curve in ordered:
        meta = curve.metadata
        for d, loss in curve.points:
            rows.append(
                [
                    meta.get("function_id", ""),
                    meta.get("sampler_id", ""),
                    meta.get("seed", ""),
                    float(d),
                    float(loss),
                ]
            )
    _write_rows(path, ["function", "sampler", "seed", "d", "loss"], rows)


def write_distance_stats_csv(path, entries) -> None:
    """Rows of (metadata, DistanceDistribution) pairs, one per batch."""
    rows = []
    for meta, dist in entries:
        rows.append(
            [
                meta.get("function_id", ""),
                meta.get("sampler_id", ""),
                meta.get("seed", ""),
                dist.enforced_min_distance,
                len(dist.distances),
                dist.minimum,
                dist.q1,
                dist.median,
                dist.q3,
                dist.maximum,
                dist.mean,
            ]
        )
    _write_rows(
        path,
        [
            "function", "sampler", "seed", "dmin", "n_pairs",
            "min", "q1", "median", "q3", "max", "mean",
        ],
        rows,
    )


def write_aggregate_csv(path, rows: Sequence[AggregateRow]) -> None:
    _write_rows(
        path,
        [
            "function", "sampler", "d", "run_count", "unreached",
            "median", "q1", "q3", "min", "max",
        ],
        [
            [
                r.function_id, r.sampler_id, r.d, r.run_count, r.unreached,
                r.median, r.q1, r.q3, r.minimum, r.maximum,
            ]
            for r in rows
        ],
    )
