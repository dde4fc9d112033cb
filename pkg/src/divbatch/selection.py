"""Batch extraction: greedy diversity sweep and exact branch-and-bound.

Both solvers work on the same problem: pick k points from a portfolio,
minimize their mean fitness, subject to every pairwise Euclidean distance
reaching a threshold.  The greedy sweep trades loss for distance
iteratively and emits the whole trade-off path; the exact solver proves
optimality for one fixed threshold.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .testbed import Portfolio

# metric interface: cross-distance matrix (n, m) between two point arrays
Metric = Callable[[np.ndarray, np.ndarray], np.ndarray]


def euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


# ──────────────────────────────────────────────────────────────────────
#  Batches and configs
# ──────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Batch:
    """k distinct portfolio indices with their two summary scores."""

    indices: tuple[int, ...]
    min_pairwise_distance: float
    loss: float


@dataclass(frozen=True)
class SelectionConfig:
    """Knobs shared by both solvers.

    `max_iterations` and `epsilon` drive the greedy sweep; `min_distance`
    and `time_limit` drive the exact solver.  The only tie-break policy is
    the documented deterministic one ("lexicographic").
    """

    k: int
    max_iterations: int = 1000
    epsilon: float = 0.0
    tie_break: str = "lexicographic"
    min_distance: float | None = None
    time_limit: float | None = None

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"batch size k must be >= 2, got {self.k}")
        if self.max_iterations < 0:
            raise ValueError(
                f"iteration budget must be >= 0, got {self.max_iterations}"
            )
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if self.tie_break != "lexicographic":
            raise ValueError(f"unknown tie-break policy {self.tie_break!r}")
        if self.min_distance is not None and not self.min_distance > 0:
            raise ValueError(
                f"enforced distance must be positive, got {self.min_distance}"
            )
        if self.time_limit is not None and not self.time_limit > 0:
            raise ValueError(f"time limit must be positive, got {self.time_limit}")


@dataclass
class TradeoffRecord:
    """One step of a greedy sweep.

    `exhausted` is set on the final record when the sweep stopped because
    no feasible swap remained (as opposed to running out of iterations).
    """

    iteration: int
    min_distance: float
    loss: float
    batch: Batch
    exhausted: bool = False


def make_batch(
    portfolio: Portfolio, indices, metric: Metric = euclidean
) -> Batch:
    """Build a Batch from indices, computing both summary scores."""
    idx = tuple(int(i) for i in indices)
    if len(idx) < 2:
        raise ValueError(f"a batch needs at least 2 points, got {len(idx)}")
    if len(set(idx)) != len(idx):
        raise ValueError(f"batch indices must be distinct, got {idx}")
    if min(idx) < 0 or max(idx) >= portfolio.size:
        raise ValueError(
            f"batch indices {idx} outside portfolio range 0..{portfolio.size - 1}"
        )
    return Batch(
        indices=tuple(sorted(idx)),
        min_pairwise_distance=_min_pairwise(portfolio.points[list(idx)], metric),
        loss=portfolio.loss(idx),
    )


def _min_pairwise(points: np.ndarray, metric: Metric) -> float:
    dists = metric(points, points)
    iu = np.triu_indices(len(points), 1)
    return float(np.min(dists[iu]))


def verify_batch(
    portfolio: Portfolio, batch: Batch, d_min: float, metric: Metric = euclidean
) -> bool:
    """True iff the batch is internally consistent and meets d_min.

    Checks index validity, the cached min-distance and loss against
    recomputation (1e-12 tolerance), and all pairwise distances >= d_min.
    """
    idx = batch.indices
    if len(idx) < 2 or len(set(idx)) != len(idx):
        return False
    if min(idx) < 0 or max(idx) >= portfolio.size:
        return False
    recomputed = _min_pairwise(portfolio.points[list(idx)], metric)
    if abs(recomputed - batch.min_pairwise_distance) > 1e-12:
        return False
    if abs(portfolio.loss(idx) - batch.loss) > 1e-12:
        return False
    return recomputed >= d_min


def initial_batch(
    portfolio: Portfolio, k: int, metric: Metric = euclidean
) -> Batch:
    """The k lowest-fitness points; fitness ties broken by lower index."""
    if k > portfolio.size:
        raise ValueError(f"k={k} exceeds portfolio size {portfolio.size}")
    order = np.argsort(portfolio.fitness, kind="stable")
    return make_batch(portfolio, order[:k], metric)


# ──────────────────────────────────────────────────────────────────────
#  Greedy sweep
# ──────────────────────────────────────────────────────────────────────


def greedy_sweep(
    portfolio: Portfolio, config: SelectionConfig, metric: Metric = euclidean
) -> list[TradeoffRecord]:
    """Iterative swap heuristic tracing the diversity-fitness trade-off.

    Record 0 is the initial batch (the k best points).  Each iteration
    finds the closest pair (a, b) in the batch (ties: lexicographically
    smallest index pair) and, for each of a and b, scans the portfolio in
    fitness order for the first outside point whose minimum distance to
    the rest of the batch is at least the current batch minimum plus
    epsilon.  With a positive epsilon a removal whose surviving pairs sit
    below that bar is skipped outright, so every applied swap raises the
    batch minimum by at least epsilon.  Of the up-to-two feasible swaps,
    the one with the lower
    resulting mean fitness is applied (tie: the worse-fitness point of the
    pair leaves; if still tied, the lower-index one leaves).  A candidate
    that neither raises the batch minimum distance nor lowers the mean is
    skipped, and the scan falls through to the first point that strictly
    raises the minimum, if any: no-progress swaps cannot contribute a new
    trade-off point, and applying them forever would cycle on portfolios
    with tied pairwise distances.

    The recorded minimum distance never decreases along the sweep.  The
    sweep stops after `max_iterations` swaps, or earlier with `exhausted`
    set on the last record when neither swap is feasible.
    """
    X = portfolio.points
    f = portfolio.fitness
    T = portfolio.size
    k = config.k
    if k > T:
        raise ValueError(f"k={k} exceeds portfolio size {T}")
    base = 0.0 if portfolio.f_opt is None else portfolio.f_opt

    order = np.argsort(f, kind="stable")
    members = [int(i) for i in order[:k]]
    in_batch = np.zeros(T, dtype=bool)
    in_batch[members] = True
    rows = metric(X[members], X)  # (k, T), row i: member i to every point
    iu, ju = np.triu_indices(k, 1)

    def snapshot(iteration: int) -> TradeoffRecord:
        sub = rows[:, members]
        dmin = float(np.min(sub[iu, ju]))
        idx = tuple(sorted(members))
        loss = portfolio.loss(idx)
        batch = Batch(idx, dmin, loss)
        return TradeoffRecord(iteration, dmin, loss, batch)

    records = [snapshot(0)]
    for iteration in range(1, config.max_iterations + 1):
        sub = rows[:, members]
        pair_dists = sub[iu, ju]
        dmin = float(np.min(pair_dists))
        # closest pair, lexicographic smallest (index, index) among ties
        best_pair = None
        for t in np.flatnonzero(pair_dists == dmin):
            pair = tuple(sorted((members[iu[t]], members[ju[t]])))
            if best_pair is None or pair < best_pair:
                best_pair = pair
        a, b = best_pair
        threshold = dmin + config.epsilon

        swaps = []  # (new_sum, removed index, position, incoming index)
        batch_sum = float(np.sum(f[members]))
        for removed in (a, b):
            pos = members.index(removed)
            rest_rows = np.delete(np.arange(k), pos)
            rest_dmin = (
                float(np.min(sub[rest_rows][:, rest_rows][np.triu_indices(k - 1, 1)]))
                if k > 2
                else np.inf
            )
            # with a positive epsilon the surviving pairs must clear the
            # new bar too, else no incoming point can lift the minimum
            if config.epsilon > 0.0 and rest_dmin < threshold:
                continue
            dist_to_rest = np.min(rows[rest_rows], axis=0)
            feasible = (dist_to_rest >= threshold) & ~in_batch
            hits = feasible[order]
            first = int(np.argmax(hits))
            if not hits[first]:
                continue
            incoming = int(order[first])
            new_dmin = min(rest_dmin, float(dist_to_rest[incoming]))
            new_sum = batch_sum - float(f[removed]) + float(f[incoming])
            if new_dmin <= dmin and new_sum >= batch_sum:
                # the cheapest feasible point brings no progress on either
                # axis; only a strictly distance-raising point can still
                # help (later points in fitness order cost even more)
                if rest_dmin <= dmin:
                    continue
                raising = feasible & (dist_to_rest > dmin)
                hits = raising[order]
                first = int(np.argmax(hits))
                if not hits[first]:
                    continue
                incoming = int(order[first])
                new_sum = batch_sum - float(f[removed]) + float(f[incoming])
            swaps.append((new_sum, removed, pos, incoming))

        if not swaps:
            records[-1].exhausted = True
            break
        if len(swaps) == 2 and swaps[0][0] == swaps[1][0]:
            # equal means: drop the worse-fitness member; a (the lower
            # index) only when fitnesses tie as well
            chosen = swaps[1] if f[b] > f[a] else swaps[0]
        else:
            chosen = min(swaps, key=lambda s: s[0])
        _, removed, pos, incoming = chosen
        members[pos] = incoming
        in_batch[removed] = False
        in_batch[incoming] = True
        rows[pos] = metric(X[incoming : incoming + 1], X)[0]
        records.append(snapshot(iteration))
    return records


# ──────────────────────────────────────────────────────────────────────
#  Exact branch-and-bound
# ──────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class ExactResult:
    """Outcome of an exact solve.

    status is "optimal" (batch is provably optimal), "infeasible" (no
    k-subset satisfies the distance constraint), or "time_limit" (batch is
    the best incumbent, possibly None, with `lower_bound`/`gap` giving the
    unexplored optimality margin in loss units).
    """

    status: str
    batch: Batch | None
    lower_bound: float | None
    gap: float | None
    nodes: int
    wall_time: float


class _BranchAndBound:
    """Depth-first search over fitness-sorted candidate positions.

    A partial selection is only ever extended by positions that are
    pairwise-feasible with it; the bound below a node adds the smallest
    remaining feasible fitnesses.  Positions are visited in fitness order,
    so the first improving completion at the last level is the best one
    for that node, and a whole sibling tail can be cut once the bound
    passes the incumbent.

    For the built-in metric sharper devices kick in.  A greedy d_min/2-net
    partitions the points into balls whose members are pairwise closer
    than d_min, so a batch takes at most one point per ball.  On top of
    the cheap net-representative bound, large solves precompute, per point
    u and ball j, the cheapest member of j at distance >= d_min from u;
    maxing those floors over the chosen points bounds every child of a
    node in one vectorized pass.  And k = 2 on large portfolios runs on a
    spatial bucket grid instead of the generic scan.
    """

    # distances to candidate partners are computed in blocks this large
    # when only the first feasible partner is needed
    CHUNK = 16384
    ROW_CACHE_LIMIT = 4096
    # k = 2 switches to the bucket grid above this candidate count
    BUCKET_MIN = 2048
    MAX_CELLS = 4096
    BUCKET_MAX_DIM = 8
    # k > 2 builds the ball floor matrix above this candidate count
    BALLS_MIN = 1024
    BALLS_MAX_REPS = 1024
    # nodes with fewer viable children skip the vectorized ball filter
    BALLS_FILTER_MIN = 512

    def __init__(self, points, fitness, k, d_min, metric, deadline):
        self.X = points
        self.F = fitness
        self.k = k
        self.d_min = d_min
        self.metric = metric
        self.deadline = deadline
        # squared-distance prefilter for the default metric; slightly loose
        # so no true hit is ever pre-filtered away, hits are re-checked
        self._fast = metric is euclidean
        self._d2_loose = (d_min * (1.0 - 1e-12)) ** 2
        # open net balls: strictly inside means pairwise infeasible
        self._r2_net = (d_min / 2.0) ** 2 * (1.0 - 1e-12)
        self.nodes = 0
        self.timed_out = False
        self.skipped_lb = np.inf  # best bound among pruned-by-timeout subtrees
        self.inc_sum = np.inf
        self.inc_positions: tuple[int, ...] | None = None
        self.stack: list[int] = []
        self._rows: dict[int, np.ndarray] = {}
        self._balls = False
        self._ball_B: np.ndarray | None = None
        self._ball_C: np.ndarray | None = None
        self._ball_repf: np.ndarray | None = None
        self._vstack: list[np.ndarray] = []

    def _expired(self) -> bool:
        if self.timed_out:
            return True
        if time.monotonic() > self.deadline:
            self.timed_out = True
        return self.timed_out

    def _note_skipped(self, chosen_sum: float, rest: np.ndarray, need: int) -> None:
        if len(rest) >= need:
            bound = chosen_sum + float(np.sum(self.F[rest[:need]]))
            self.skipped_lb = min(self.skipped_lb, bound)

    def _row(self, pos: int) -> np.ndarray:
        row = self._rows.get(pos)
        if row is None:
            dists = self.metric(self.X[pos : pos + 1], self.X)[0]
            row = dists >= self.d_min
            if len(self._rows) < self.ROW_CACHE_LIMIT:
                self._rows[pos] = row
        return row

    def _improve(self, positions: list[int], total: float) -> None:
        if total < self.inc_sum:
            self.inc_sum = total
            self.inc_positions = tuple(positions)

    def first_fit(self) -> None:
        """Greedy incumbent: repeatedly take the best-fitness point that is
        feasible with everything chosen so far."""
        n = len(self.F)
        feasible = np.ones(n, dtype=bool)
        chosen: list[int] = []
        total = 0.0
        pos = 0
        while len(chosen) < self.k:
            nxt = pos + int(np.argmax(feasible[pos:])) if pos < n else n
            if pos >= n or not feasible[nxt]:
                return
            chosen.append(nxt)
            total += float(self.F[nxt])
            if len(chosen) < self.k:
                dists = self.metric(self.X[nxt : nxt + 1], self.X)[0]
                feasible &= dists >= self.d_min
            pos = nxt + 1
        self._improve(chosen, total)

    def polish(self, start: list[int] | None = None) -> None:
        """Swap descent: re-optimize one slot at a time against the others
        until no single swap improves.  A tighter incumbent is the
        cheapest pruning there is."""
        if start is None and self.inc_positions is not None:
            start = list(self.inc_positions)
        if start is None:
            return
        pos = list(start)
        for _ in range(20):
            improved = False
            for s in range(len(pos)):
                feasible = np.ones(len(self.F), dtype=bool)
                for q in pos:
                    if q != pos[s]:
                        feasible &= self._row(q)
                hits = np.flatnonzero(feasible)
                # fitness-sorted points: the first feasible one is cheapest
                if len(hits) and float(self.F[hits[0]]) < float(self.F[pos[s]]):
                    pos[s] = int(hits[0])
                    improved = True
            if not improved:
                break
        self._improve(sorted(pos), float(np.sum(self.F[pos])))

    def multi_start(self) -> None:
        """Polished first-fit batches built from geometrically thinned
        fitness prefixes: skipping the cheapest points escapes local
        optima clustered around them (the single-start trap)."""
        n = len(self.F)
        skip = 0
        while n - skip >= self.k:
            feasible = np.ones(n, dtype=bool)
            feasible[:skip] = False
            chosen: list[int] = []
            pos = skip
            while len(chosen) < self.k and pos < n:
                nxt = pos + int(np.argmax(feasible[pos:]))
                if not feasible[nxt]:
                    break
                chosen.append(nxt)
                feasible &= self._row(nxt)
                pos = nxt + 1
            if len(chosen) == self.k:
                self.polish(chosen)
            skip = max(1, skip * 2)

    def search(self, cand: np.ndarray) -> None:
        self._dfs(0.0, cand)

    def _dfs(self, chosen_sum: float, cand: np.ndarray) -> None:
        self.nodes += 1
        need = self.k - len(self.stack)
        F = self.F
        if self._expired():
            self._note_skipped(chosen_sum, cand, need)
            return
        if need == 1:
            # candidates are feasible and fitness-sorted: first is best
            total = chosen_sum + float(F[cand[0]])
            if total < self.inc_sum:
                self._improve(self.stack + [int(cand[0])], total)
            return
        node_v = self._vstack[-1] if self._balls else None
        if self._balls:
            if chosen_sum + self._ball_floor(node_v, need) >= self.inc_sum:
                return
        elif self._fast:
            if chosen_sum + self._net_bound(cand, need) >= self.inc_sum:
                return
        if need == 2:
            self._pairs(chosen_sum, cand)
            return
        fitc = F[cand]
        prefix = np.cumsum(fitc)
        limit = len(cand) - need + 1
        # children past this point fail even the plain consecutive-sum bound
        naive = prefix[need - 1 :] - np.concatenate(([0.0], prefix[:-need]))
        limit = int(np.searchsorted(naive, self.inc_sum - chosen_sum))
        if self._balls and limit >= self.BALLS_FILTER_MIN:
            # per child: need-1 distinct-ball partners, each clearing the
            # child itself and every chosen point
            M = np.maximum(self._ball_B[cand[:limit]], node_v)
            t = need - 1
            if t > 1:
                comp = np.sum(np.partition(M, t - 1, axis=1)[:, :t], axis=1)
            else:
                comp = np.min(M, axis=1)
            children = np.flatnonzero((chosen_sum + fitc[:limit] + comp) < self.inc_sum)
        else:
            comp = None
            children = range(limit)
        for i in children:
            bound = chosen_sum + prefix[i + need - 1] - (prefix[i - 1] if i else 0.0)
            if bound >= self.inc_sum:
                break
            if (
                comp is not None
                and chosen_sum + fitc[i] + comp[i] >= self.inc_sum
            ):
                continue  # incumbent tightened after the batch bound
            if self._expired():
                self._note_skipped(chosen_sum, cand[i:], need)
                return
            p = int(cand[i])
            rest = cand[i + 1 :]
            sub = rest[self._row(p)[rest]]
            if len(sub) >= need - 1:
                self.stack.append(p)
                if self._balls:
                    self._vstack.append(np.maximum(node_v, self._ball_B[p]))
                self._dfs(chosen_sum + float(F[p]), sub)
                self.stack.pop()
                if self._balls:
                    self._vstack.pop()
                if self.timed_out:
                    self._note_skipped(chosen_sum, cand[i + 1 :], need)
                    return

    def _net_bound(self, cand: np.ndarray, need: int) -> float:
        """Sum of the `need` cheapest greedy-net representatives.

        Walking candidates in fitness order, each representative claims
        everything strictly inside its d_min/2 ball; claimed points are
        pairwise infeasible, so every completion pays at least this much.
        Infinite when fewer than `need` balls can be filled.
        """
        X, F = self.X, self.F
        alive = cand
        total = 0.0
        for picked in range(need):
            if len(alive) == 0:
                return np.inf
            rep = int(alive[0])
            total += float(F[rep])
            if picked == need - 1:
                break
            diff = X[alive] - X[rep]
            sq = np.einsum("ij,ij->i", diff, diff)
            alive = alive[sq >= self._r2_net]
        return total

    def _build_balls(self) -> bool:
        """Partition points into greedy d_min/2-net balls and precompute,
        per point u and ball j, the fitness of the cheapest member of j
        at distance >= d_min from u.

        A feasible batch takes at most one point per ball, and every
        completion point must clear every chosen point, so maxing these
        floors over the chosen set bounds all children of a node at once.
        Returns False (leaving the device off) when the net degenerates
        or the deadline hits during the precompute.
        """
        X, F = self.X, self.F
        n = len(F)
        ballof = np.full(n, -1, dtype=np.int64)
        reps: list[int] = []
        alive = np.arange(n)
        while len(alive):
            if len(reps) >= self.BALLS_MAX_REPS:
                return False
            rep = int(alive[0])
            reps.append(rep)
            diff = X[alive] - X[rep]
            sq = np.einsum("ij,ij->i", diff, diff)
            inside = sq < self._r2_net
            ballof[alive[inside]] = len(reps) - 1
            alive = alive[~inside]
        r = len(reps)
        if r < self.k:
            # fewer balls than batch slots: plainly infeasible, let the
            # ordinary search conclude that
            return False
        B = np.full((n, r), np.inf)
        for j in range(r):
            members = np.flatnonzero(ballof == j)  # ascending = fitness order
            mf = F[members]
            done = np.zeros(n, dtype=bool)
            for s in range(0, len(members), 256):
                if time.monotonic() > self.deadline:
                    return False
                blk = members[s : s + 256]
                diff = X[blk][:, None, :] - X[None, :, :]
                sq = np.einsum("ijk,ijk->ij", diff, diff)
                feas = sq >= self._d2_loose
                hit = feas.any(axis=0) & ~done
                if np.any(hit):
                    first = np.argmax(feas[:, hit], axis=0)
                    B[hit, j] = mf[s + first]
                    done |= hit
                if done.all():
                    break
        # cheapest feasible cross-ball pair; the diagonal is inf because a
        # ball never holds a feasible pair, so it needs no special-casing
        C = np.full((r, r), np.inf)
        for j in range(r):
            members = np.flatnonzero(ballof == j)
            C[j] = np.min(F[members][:, None] + B[members], axis=0)
        self._ball_B = B
        self._ball_C = np.minimum(C, C.T)
        self._ball_repf = F[np.asarray(reps)]
        self._vstack = [self._ball_repf]
        return True

    def _ball_floor(self, node_v: np.ndarray, need: int) -> float:
        """Lower bound on any `need`-point completion: the best ball pair
        (cheapest feasible cross pair, at least the per-ball floors) plus
        the `need`-2 smallest floors over the remaining balls."""
        P = np.maximum(self._ball_C, node_v[:, None] + node_v[None, :])
        if need == 2:
            return float(P.min())
        r = len(node_v)
        idx = np.argpartition(node_v, need - 1)[:need]
        idx = idx[np.argsort(node_v[idx])]
        rows = np.arange(r)[:, None]
        cols = np.arange(r)[None, :]
        rest = np.zeros((r, r))
        cnt = np.zeros((r, r), dtype=np.int64)
        for t in idx:
            use = (cnt < need - 2) & (rows != t) & (cols != t)
            rest = np.where(use, rest + node_v[t], rest)
            cnt += use
        rest[cnt < need - 2] = np.inf
        return float((P + rest).min())

    def search_pairs_bucketed(self) -> None:
        """k = 2 on a spatial bucket grid.

        For each query point in fitness order, cells lying wholly at
        distance >= d_min contribute their cheapest point outright; only
        cells straddling the threshold are checked point by point.  The
        loop is exact: it stops once even the globally cheapest partner
        could no longer beat the incumbent.
        """
        X, F = self.X, self.F
        n, dim = X.shape
        if n < 2:
            return
        m = max(2, int(round(self.MAX_CELLS ** (1.0 / dim))))
        lo = X.min(axis=0)
        span = np.maximum(X.max(axis=0) - lo, 1e-300)
        side = span / m
        ci = np.minimum((np.maximum(X - lo, 0.0) / side).astype(np.int64), m - 1)
        strides = m ** np.arange(dim, dtype=np.int64)
        cid = ci @ strides
        order = np.argsort(cid, kind="stable")  # fitness order inside a cell
        sorted_cid = cid[order]
        starts = np.flatnonzero(np.r_[True, sorted_cid[1:] != sorted_cid[:-1]])
        ends = np.r_[starts[1:], n]
        coords = np.stack([(sorted_cid[starts] // s) % m for s in strides], axis=1)
        cell_lo = lo + coords * side
        cell_hi = cell_lo + side
        cell_min_f = F[order[starts]]
        cell_first = order[starts]
        d2_safe = (self.d_min * (1.0 + 1e-12)) ** 2
        f0 = float(F[0])
        for i in range(n):
            fi = float(F[i])
            if fi + f0 >= self.inc_sum:
                break  # every unvisited pair is bounded by fi + f0
            if (i & 255) == 0 and self._expired():
                self.skipped_lb = min(self.skipped_lb, fi + f0)
                return
            self.nodes += 1
            x = X[i]
            lo_d = cell_lo - x
            hi_d = x - cell_hi
            near = np.maximum(np.maximum(lo_d, hi_d), 0.0)
            near2 = np.einsum("ij,ij->i", near, near)
            far = np.maximum(-lo_d, -hi_d)
            far2 = np.einsum("ij,ij->i", far, far)
            best_f = self.inc_sum - fi  # a partner must stay below this
            best_q = -1
            safe = (near2 >= d2_safe) & (cell_min_f < best_f)
            if np.any(safe):
                t = int(np.argmin(np.where(safe, cell_min_f, np.inf)))
                best_f = float(cell_min_f[t])
                best_q = int(cell_first[t])
            boundary = (far2 >= self._d2_loose) & (near2 < d2_safe)
            for t in np.flatnonzero(boundary & (cell_min_f < best_f)):
                if cell_min_f[t] >= best_f:
                    continue
                block = order[starts[t] : ends[t]]
                cut = int(np.searchsorted(F[block], best_f))
                q = self._first_partner(i, block[:cut])
                if q is not None and float(F[q]) < best_f:
                    best_f = float(F[q])
                    best_q = int(q)
            if best_q >= 0:
                self._improve(sorted((i, best_q)), fi + best_f)

    def _pairs(self, chosen_sum: float, cand: np.ndarray) -> None:
        """Depth k-2 specialization: for each candidate, only the first
        feasible partner below the fitness cutoff matters."""
        F = self.F
        fit = F[cand]
        for i in range(len(cand) - 1):
            first = chosen_sum + fit[i] + fit[i + 1]
            if first >= self.inc_sum:
                return
            if self._expired():
                self._note_skipped(chosen_sum, cand[i:], 2)
                return
            p = int(cand[i])
            # partners beyond this fitness cannot improve the incumbent
            limit = i + 1 + int(
                np.searchsorted(fit[i + 1 :], self.inc_sum - chosen_sum - fit[i])
            )
            start = i + 1
            while start < limit:
                stop = min(start + self.CHUNK, limit)
                block = cand[start:stop]
                q = self._first_partner(p, block)
                if q is not None:
                    total = chosen_sum + fit[i] + float(F[q])
                    self._improve(self.stack + [p, q], total)
                    break
                if self._expired():
                    self._note_skipped(chosen_sum, cand[i:], 2)
                    return
                start = stop

    def _first_partner(self, p: int, block: np.ndarray) -> int | None:
        """Lowest-fitness point in `block` at distance >= d_min from p."""
        if self._fast:
            diff = self.X[block] - self.X[p]
            sq = np.einsum("ij,ij->i", diff, diff)
            for h in np.flatnonzero(sq >= self._d2_loose):
                # exactness: confirm with the very arithmetic verify_batch uses
                q = int(block[h])
                if self.metric(self.X[p : p + 1], self.X[q : q + 1])[0, 0] >= self.d_min:
                    return q
            return None
        dists = self.metric(self.X[p : p + 1], self.X[block])[0]
        hit = np.flatnonzero(dists >= self.d_min)
        return int(block[hit[0]]) if len(hit) else None


def exact_select(
    portfolio: Portfolio,
    config: SelectionConfig,
    metric: Metric = euclidean,
    warm_start: Batch | None = None,
) -> ExactResult:
    """Provably optimal batch at the enforced distance, by branch-and-bound.

    Requires `config.min_distance`.  An optional feasible `warm_start`
    batch seeds the incumbent, which tightens pruning and guarantees the
    returned batch is never worse than it, even on time_limit.  With a
    `time_limit`, the result may be status "time_limit": the incumbent
    plus a lower bound on the unexplored optimum and the corresponding
    gap, both in loss units.
    """
    k = config.k
    d_min = config.min_distance
    if d_min is None:
        raise ValueError("exact_select requires config.min_distance")
    if k > portfolio.size:
        raise ValueError(f"k={k} exceeds portfolio size {portfolio.size}")
    start_time = time.monotonic()
    deadline = np.inf if config.time_limit is None else start_time + config.time_limit
    base = 0.0 if portfolio.f_opt is None else portfolio.f_opt

    order = np.argsort(portfolio.fitness, kind="stable")
    FS = portfolio.fitness[order]
    XS = np.ascontiguousarray(portfolio.points[order])
    inverse = np.empty(portfolio.size, dtype=int)
    inverse[order] = np.arange(portfolio.size)

    solver = _BranchAndBound(XS, FS, k, d_min, metric, deadline)
    warm_positions = None
    if warm_start is not None:
        if not verify_batch(portfolio, warm_start, d_min, metric):
            raise ValueError(
                f"warm start batch is not feasible at d_min={d_min}"
            )
        warm_positions = tuple(sorted(int(inverse[i]) for i in warm_start.indices))
        solver._improve(list(warm_positions), float(np.sum(FS[list(warm_positions)])))
    solver.first_fit()
    solver.polish()
    solver.multi_start()

    # a point can only appear in an improving batch if its fitness plus the
    # k-1 smallest others stays below the incumbent
    csum = np.concatenate([[0.0], np.cumsum(FS)])
    if np.isfinite(solver.inc_sum):
        cutoff = solver.inc_sum - csum[k - 1]
        keep = int(np.searchsorted(FS, cutoff, side="left"))
    else:
        keep = portfolio.size
    if keep >= k:
        # any batch beating the incumbent lives entirely in the kept prefix
        solver.X = XS[:keep]
        solver.F = FS[:keep]
        solver._rows.clear()  # cached rows have pre-slice length
        if (
            metric is euclidean
            and k == 2
            and keep > _BranchAndBound.BUCKET_MIN
            and portfolio.dimension <= _BranchAndBound.BUCKET_MAX_DIM
        ):
            solver.search_pairs_bucketed()
        else:
            if (
                metric is euclidean
                and k > 2
                and keep >= _BranchAndBound.BALLS_MIN
                # only worth the quadratic precompute when time remains to use it
                and deadline - time.monotonic() > 1.0 + keep * keep / 5e7
            ):
                solver._balls = solver._build_balls()
            solver.search(np.arange(keep))
            if solver.timed_out:
                # positions may predate the slice: polish on the full arrays
                solver.X, solver.F = XS, FS
                solver._rows.clear()
                solver.polish()

    wall = time.monotonic() - start_time
    inc_batch = None
    if solver.inc_positions is not None:
        inc_batch = make_batch(
            portfolio, [int(order[p]) for p in solver.inc_positions], metric
        )
    if solver.timed_out and np.isfinite(solver.skipped_lb):
        lb_sum = min(solver.skipped_lb, solver.inc_sum)
        lower = lb_sum / k - base
        gap = None if inc_batch is None else max(0.0, inc_batch.loss - lower)
        return ExactResult("time_limit", inc_batch, lower, gap, solver.nodes, wall)
    if inc_batch is None:
        return ExactResult("infeasible", None, None, None, solver.nodes, wall)
    return ExactResult("optimal", inc_batch, inc_batch.loss, 0.0, solver.nodes, wall)
