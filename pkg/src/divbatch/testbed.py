"""Benchmark objective functions and the portfolio container.

All functions are defined on the box [-5, 5]^D, take points row-wise as
``(n, D)`` arrays and return ``(n,)`` fitness vectors.  Lower is better.
Every function knows its optimal value ``f_opt`` so that losses can be
reported as target precision ``f(x) - f_opt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

LOWER_BOUND = -5.0
UPPER_BOUND = 5.0

GROUP_LABELS = {
    1: "separable",
    2: "low-conditioning",
    3: "high-conditioning",
    4: "multi-modal-adequate",
    5: "multi-modal-weak",
}


class PortfolioFormatError(ValueError):
    """Raised when a portfolio file cannot be parsed.

    Carries the 1-based line number of the offending line when one exists.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


# ──────────────────────────────────────────────────────────────────────
#  Objective functions
# ──────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class ObjectiveFunction:
    """A box-constrained objective with a known optimum.

    `evaluate` accepts a single point ``(D,)`` or a batch ``(n, D)``.
    Out-of-bounds input is an error, not a clamp: the loss metric is only
    meaningful for points inside the box, and bound handling is the
    samplers' job.
    """

    function_id: str
    dimension: int
    group: int
    f_opt: float
    x_opt: np.ndarray | None
    _eval: Callable[[np.ndarray], np.ndarray]

    @property
    def lower(self) -> np.ndarray:
        return np.full(self.dimension, LOWER_BOUND)

    @property
    def upper(self) -> np.ndarray:
        return np.full(self.dimension, UPPER_BOUND)

    def evaluate(self, x: np.ndarray) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.dimension:
            raise ValueError(
                f"expected points of dimension {self.dimension}, got shape "
                f"{x.shape[1:] if not single else x.shape}"
            )
        _check_in_box(x)
        values = self._eval(x)
        return float(values[0]) if single else values

    __call__ = evaluate


def _check_in_box(points: np.ndarray) -> None:
    outside = (points < LOWER_BOUND) | (points > UPPER_BOUND)
    if np.any(outside):
        row, col = np.argwhere(outside)[0]
        raise ValueError(
            f"point {row} coordinate {col} = {points[row, col]!r} lies outside "
            f"[{LOWER_BOUND}, {UPPER_BOUND}]"
        )


@dataclass(frozen=True)
class FunctionDescriptor:
    function_id: str
    group: int
    group_label: str
    min_dimension: int
    f_opt_rule: str
    description: str

    @property
    def dimension_range(self) -> tuple[int, None]:
        # upper end open: every catalog function scales to any D >= min
        return (self.min_dimension, None)


def _rotation_matrix(dimension: int, seed: int) -> np.ndarray:
    """Fixed orthogonal matrix via QR of a seeded Gaussian draw.

    Sign-normalizing the diagonal of R makes the result independent of
    LAPACK's internal sign choices, so the matrix is reproducible.
    """
    rng = np.random.default_rng(seed)
    gauss = rng.standard_normal((dimension, dimension))
    q, r = np.linalg.qr(gauss)
    return q * np.sign(np.diag(r))


def _sphere(x):
    return np.sum(x**2, axis=1)


def _ellipsoid(x):
    n = x.shape[1]
    if n == 1:
        return x[:, 0] ** 2
    exponents = 6.0 * np.arange(n) / (n - 1.0)
    return np.sum(10.0**exponents * x**2, axis=1)


def _rastrigin(x):
    n = x.shape[1]
    return 10.0 * (n - np.sum(np.cos(2.0 * np.pi * x), axis=1)) + np.sum(x**2, axis=1)


def _attractive_sector(x):
    # optimum at the ones vector; coordinates past it cost 100x more
    z = x - 1.0
    s = np.where(z > 0.0, 100.0, 1.0)
    return np.sum((s * z) ** 2, axis=1)


def _rosenbrock(x):
    return np.sum(
        100.0 * (x[:, :-1] ** 2 - x[:, 1:]) ** 2 + (x[:, :-1] - 1.0) ** 2, axis=1
    )


def _sharp_ridge(x):
    return x[:, 0] ** 2 + 100.0 * np.sqrt(np.sum(x[:, 1:] ** 2, axis=1))


def _schaffer_f7(x):
    # defined for D >= 2; pairwise terms over consecutive coordinates
    s = np.sqrt(x[:, :-1] ** 2 + x[:, 1:] ** 2)
    terms = np.sqrt(s) + np.sqrt(s) * np.sin(50.0 * s**0.2) ** 2
    return (np.sum(terms, axis=1) / (x.shape[1] - 1.0)) ** 2


def _double_funnel(x):
    # two basins: a sharp one at +2.5*ones and a broad, penalized one at -2.5*ones
    d_good = np.sum((x - 2.5) ** 2, axis=1)
    d_trap = np.sum((x + 2.5) ** 2, axis=1)
    return np.minimum(d_good, 1.0 + 0.9 * d_trap)


def _rotated(inner: Callable[[np.ndarray], np.ndarray], rotation: np.ndarray):
    def wrapped(x):
        return inner(x @ rotation.T)

    return wrapped


def make_gallagher(
    dimension: int,
    centers: Sequence[Sequence[float]] | np.ndarray | None = None,
    heights: Sequence[float] | None = None,
    widths: Sequence[float] | None = None,
    seed: int = 7,
    n_peaks: int = 21,
) -> ObjectiveFunction:
    """Gaussian multi-peak landscape with a configurable peak list.

    f(x) = -max_i h_i * exp(-|x - c_i|^2 / (2 w_i^2)), so the optimum sits
    at the center of the tallest peak with f_opt = -max(h).  When no peaks
    are given, a fixed seeded layout of `n_peaks` peaks inside the box is
    used; peak 0 is the global one with height 10.
    """
    if centers is None:
        rng = np.random.default_rng(seed)
        centers = rng.uniform(LOWER_BOUND + 0.5, UPPER_BOUND - 0.5, (n_peaks, dimension))
        heights = np.concatenate([[10.0], np.linspace(9.0, 1.0, n_peaks - 1)])
        widths = np.concatenate([[1.0], rng.uniform(0.8, 2.0, n_peaks - 1)])
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    heights = np.asarray(heights, dtype=float)
    widths = np.asarray(widths, dtype=float)
    if centers.shape[1] != dimension:
        raise ValueError("peak centers do not match the requested dimension")
    if not (len(centers) == len(heights) == len(widths)):
        raise ValueError("centers, heights and widths must have equal length")
    if len(centers) == 0:
        raise ValueError("at least one peak is required")
    if np.any(heights <= 0.0) or np.any(widths <= 0.0):
        raise ValueError("peak heights and widths must be positive")

    best = int(np.argmax(heights))

    def evaluate(x, _c=centers, _h=heights, _w=widths):
        sq = np.sum((x[:, None, :] - _c[None, :, :]) ** 2, axis=2)
        return -np.max(_h * np.exp(-sq / (2.0 * _w**2)), axis=1)

    return ObjectiveFunction(
        function_id="f21-gallagher",
        dimension=dimension,
        group=5,
        f_opt=-float(heights[best]),
        x_opt=centers[best].copy(),
        _eval=evaluate,
    )


@dataclass(frozen=True)
class _Recipe:
    descriptor: FunctionDescriptor
    build: Callable[[int], ObjectiveFunction]


def _simple(function_id, group, dimension, evaluate, x_opt, f_opt=0.0):
    return ObjectiveFunction(
        function_id=function_id,
        dimension=dimension,
        group=group,
        f_opt=f_opt,
        x_opt=x_opt,
        _eval=evaluate,
    )


def _build_f1(d):
    return _simple("f1-sphere", 1, d, _sphere, np.zeros(d))


def _build_f2(d):
    return _simple("f2-ellipsoid", 1, d, _ellipsoid, np.zeros(d))


def _build_f3(d):
    return _simple("f3-rastrigin", 1, d, _rastrigin, np.zeros(d))


def _build_f6(d):
    return _simple("f6-attractive-sector", 2, d, _attractive_sector, np.ones(d))


def _build_f8(d):
    return _simple("f8-rosenbrock", 2, d, _rosenbrock, np.ones(d))


def _build_f10(d):
    rot = _rotation_matrix(d, seed=10)
    return _simple("f10-ellipsoid-rotated", 3, d, _rotated(_ellipsoid, rot), np.zeros(d))


def _build_f13(d):
    return _simple("f13-sharp-ridge", 3, d, _sharp_ridge, np.zeros(d))


def _build_f15(d):
    rot = _rotation_matrix(d, seed=15)
    return _simple("f15-rastrigin-rotated", 4, d, _rotated(_rastrigin, rot), np.zeros(d))


def _build_f17(d):
    if d < 2:
        raise ValueError("f17-schaffer-f7 requires dimension >= 2")
    return _simple("f17-schaffer-f7", 4, d, _schaffer_f7, np.zeros(d))


def _build_f24(d):
    return _simple("f24-double-funnel", 5, d, _double_funnel, np.full(d, 2.5))


_CATALOG: dict[str, _Recipe] = {}


def _register(function_id, group, min_dimension, f_opt_rule, description, build):
    _CATALOG[function_id] = _Recipe(
        FunctionDescriptor(
            function_id=function_id,
            group=group,
            group_label=GROUP_LABELS[group],
            min_dimension=min_dimension,
            f_opt_rule=f_opt_rule,
            description=description,
        ),
        build,
    )


_register("f1-sphere", 1, 1, "0 at origin", "sum of squares", _build_f1)
_register("f2-ellipsoid", 1, 1, "0 at origin",
          "axis-aligned ellipsoid, condition 1e6", _build_f2)
_register("f3-rastrigin", 1, 1, "0 at origin", "separable Rastrigin", _build_f3)
_register("f6-attractive-sector", 2, 1, "0 at ones vector",
          "asymmetric quadratic sector", _build_f6)
_register("f8-rosenbrock", 2, 2, "0 at ones vector", "chained banana valleys",
          _build_f8)
_register("f10-ellipsoid-rotated", 3, 1, "0 at origin",
          "rotated ellipsoid, condition 1e6", _build_f10)
_register("f13-sharp-ridge", 3, 1, "0 at origin", "sharp non-smooth ridge",
          _build_f13)
_register("f15-rastrigin-rotated", 4, 1, "0 at origin", "rotated Rastrigin",
          _build_f15)
_register("f17-schaffer-f7", 4, 2, "0 at origin", "Schaffer F7, fractal ripples",
          _build_f17)
_register("f21-gallagher", 5, 1, "negated tallest peak height, from peak list",
          "21 Gaussian peaks", lambda d: make_gallagher(d))
_register("f24-double-funnel", 5, 1, "0 at +2.5 ones vector",
          "two funnels, penalized trap", _build_f24)


def list_functions() -> list[FunctionDescriptor]:
    """Descriptors of all built-in functions, in catalog order."""
    return [recipe.descriptor for recipe in _CATALOG.values()]


def get_function(function_id: str, dimension: int) -> ObjectiveFunction:
    """Instantiate a catalog function at the given dimension.

    errors: unknown id or unsupported dimension raise ValueError naming
    the offending value.
    """
    if function_id not in _CATALOG:
        known = ", ".join(sorted(_CATALOG))
        raise ValueError(f"unknown function id {function_id!r}; known ids: {known}")
    recipe = _CATALOG[function_id]
    if not isinstance(dimension, (int, np.integer)) or dimension < 1:
        raise ValueError(f"dimension must be a positive integer, got {dimension!r}")
    if dimension < recipe.descriptor.min_dimension:
        raise ValueError(
            f"{function_id} requires dimension >= {recipe.descriptor.min_dimension},"
            f" got {dimension}"
        )
    return recipe.build(int(dimension))


# ──────────────────────────────────────────────────────────────────────
#  Portfolios
# ──────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Portfolio:
    """An evaluated point set: points ``(T, D)``, fitness ``(T,)``.

    Arrays are frozen (write-protected views); `provenance` records how
    the portfolio was produced, `f_opt` the optimum used for losses.
    """

    dimension: int
    points: np.ndarray
    fitness: np.ndarray
    f_opt: float | None = None
    provenance: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        fitness = np.asarray(self.fitness, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.dimension:
            raise ValueError(
                f"points must have shape (T, {self.dimension}), got {points.shape}"
            )
        if fitness.shape != (points.shape[0],):
            raise ValueError(
                f"fitness must have shape ({points.shape[0]},), got {fitness.shape}"
            )
        if points.shape[0] == 0:
            raise ValueError("a portfolio must contain at least one point")
        if not np.all(np.isfinite(points)):
            raise ValueError("portfolio points must be finite")
        if not np.all(np.isfinite(fitness)):
            raise ValueError("portfolio fitness values must be finite")
        _check_in_box(points)
        points = points.copy()
        fitness = fitness.copy()
        points.flags.writeable = False
        fitness.flags.writeable = False
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "fitness", fitness)
        object.__setattr__(self, "provenance", dict(self.provenance))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.size

    def loss(self, indices: Iterable[int]) -> float:
        """Mean fitness of the indexed points minus f_opt (0 when unknown)."""
        base = 0.0 if self.f_opt is None else self.f_opt
        idx = np.fromiter(indices, dtype=int)
        return float(np.mean(self.fitness[idx]) - base)


def evaluate_portfolio(
    fn: ObjectiveFunction,
    points: np.ndarray,
    provenance: Mapping[str, str] | None = None,
) -> Portfolio:
    """Evaluate `points` under `fn` and wrap the result as a Portfolio."""
    points = np.asarray(points, dtype=float)
    fitness = fn.evaluate(points)
    meta = {"function_id": fn.function_id}
    if provenance:
        meta.update(provenance)
    return Portfolio(
        dimension=fn.dimension,
        points=points,
        fitness=np.asarray(fitness, dtype=float),
        f_opt=fn.f_opt,
        provenance=meta,
    )


def save_portfolio(path, portfolio: Portfolio) -> None:
    """Write a portfolio as CSV.

    Format: optional ``# key=value`` provenance lines, one ``dim=D`` line,
    then one row per point with D coordinates followed by the fitness
    value.  Floats are written with repr so reading the file back
    reproduces the arrays bit for bit.
    """
    lines = []
    for key, value in portfolio.provenance.items():
        lines.append(f"# {key}={value}")
    if portfolio.f_opt is not None:
        lines.append(f"# f_opt={portfolio.f_opt!r}")
    lines.append(f"dim={portfolio.dimension}")
    for row, fval in zip(portfolio.points, portfolio.fitness):
        fields = [repr(float(v)) for v in row] + [repr(float(fval))]
        lines.append(",".join(fields))
    with open(path, "w", newline="") as handle:
        handle.write("\n".join(lines) + "\n")


def load_portfolio(path) -> Portfolio:
    """Parse a portfolio CSV written by `save_portfolio`.

    errors: PortfolioFormatError naming the offending line number on any
    malformed header, wrong field count, or non-finite value.
    """
    provenance: dict[str, str] = {}
    f_opt: float | None = None
    dimension: int | None = None
    rows: list[list[float]] = []
    with open(path, "r") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    key = key.strip()
                    value = value.strip()
                    if key == "f_opt":
                        try:
                            f_opt = float(value)
                        except ValueError:
                            raise PortfolioFormatError(
                                f"cannot parse f_opt value {value!r}", lineno
                            ) from None
                    else:
                        provenance[key] = value
                continue
            if dimension is None:
                if not line.startswith("dim="):
                    raise PortfolioFormatError(
                        f"expected 'dim=D' header before data, got {line!r}", lineno
                    )
                try:
                    dimension = int(line[4:])
                except ValueError:
                    raise PortfolioFormatError(
                        f"cannot parse dimension from {line!r}", lineno
                    ) from None
                if dimension < 1:
                    raise PortfolioFormatError(
                        f"dimension must be positive, got {dimension}", lineno
                    )
                continue
            fields = line.split(",")
            if len(fields) != dimension + 1:
                raise PortfolioFormatError(
                    f"expected {dimension + 1} fields, got {len(fields)}", lineno
                )
            try:
                values = [float(f) for f in fields]
            except ValueError:
                raise PortfolioFormatError(
                    f"cannot parse row {line!r} as floats", lineno
                ) from None
            if not all(math.isfinite(v) for v in values):
                raise PortfolioFormatError("row contains a non-finite value", lineno)
            rows.append(values)
    if dimension is None:
        raise PortfolioFormatError("file contains no 'dim=D' header")
    if not rows:
        raise PortfolioFormatError("file contains no data rows")
    data = np.asarray(rows, dtype=float)
    return Portfolio(
        dimension=dimension,
        points=data[:, :dimension],
        fitness=data[:, dimension],
        f_opt=f_opt,
        provenance=provenance,
    )
