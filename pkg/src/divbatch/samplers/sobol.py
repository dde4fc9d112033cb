"""Sobol' low-discrepancy sequence, direction numbers included.

Gray-code construction over 32-bit direction numbers derived from
primitive polynomials and Joe-Kuo initial values, supporting up to 21
dimensions.  The generator is fully deterministic; there is no seed.

Ordering: the raw sequence starts with the all-zeros point, which maps to
a box corner and distorts very small portfolios.  The stream is therefore
emitted with positions 0 and 1 swapped: the box center (0.5, ..., 0.5)
comes first and the all-zeros point second.  Every prefix of length 2^m
(m >= 1) is the same point set as the raw sequence's, so the dyadic
stratification of those prefixes is preserved exactly, while a length-1
portfolio gets the center instead of the corner.
"""

from __future__ import annotations

import numpy as np

from ..testbed import ObjectiveFunction, Portfolio, evaluate_portfolio

_BITS = 32
_SCALE = float(2**_BITS)

# Primitive polynomials over GF(2) for dimensions 2..21, bit-encoded as
# x^s + a_1 x^(s-1) + ... + a_(s-1) x + 1 (leading and trailing bits set).
_POLYNOMIALS = (
    3, 7, 11, 13, 19, 25, 37, 41, 47, 55,
    59, 61, 67, 91, 97, 103, 109, 115, 131, 137,
)

# Joe-Kuo initial direction values m_1..m_s per dimension 2..21 (m_i odd,
# m_i < 2^i).  Dimension 1 is the van der Corput sequence (all m_i = 1).
_INITIAL_M = (
    (1,),
    (1, 3),
    (1, 3, 1),
    (1, 1, 1),
    (1, 1, 3, 3),
    (1, 3, 5, 13),
    (1, 1, 5, 5, 17),
    (1, 1, 5, 5, 5),
    (1, 1, 7, 11, 19),
    (1, 1, 5, 1, 1),
    (1, 1, 1, 3, 11),
    (1, 3, 5, 5, 31),
    (1, 3, 3, 9, 7, 49),
    (1, 1, 1, 15, 21, 21),
    (1, 3, 1, 13, 27, 49),
    (1, 1, 1, 15, 7, 5),
    (1, 3, 1, 15, 13, 25),
    (1, 1, 5, 5, 19, 61),
    (1, 3, 7, 11, 23, 15, 103),
    (1, 3, 7, 13, 13, 15, 69),
)

MAX_DIMENSION = 1 + len(_POLYNOMIALS)


def direction_numbers(dimension: int) -> np.ndarray:
    """Scaled direction numbers V as a (dimension, 32) uint32 array.

    V[j, i-1] is the i-th direction number of coordinate j, scaled by
    2^32 (i.e. m_i * 2^(32-i) with the recursion applied past the
    polynomial degree).
    """
    if not 1 <= dimension <= MAX_DIMENSION:
        raise ValueError(
            f"dimension {dimension} outside supported range 1..{MAX_DIMENSION}"
        )
    table = np.zeros((dimension, _BITS), dtype=np.uint32)
    # first coordinate: van der Corput in base 2
    table[0] = [1 << (_BITS - i) for i in range(1, _BITS + 1)]
    for j in range(1, dimension):
        poly = _POLYNOMIALS[j - 1]
        m_init = _INITIAL_M[j - 1]
        degree = poly.bit_length() - 1
        # inner coefficient bits, a_1 first
        a = (poly ^ (1 << degree) ^ 1) >> 1
        v = [0] * (_BITS + 1)
        for i in range(1, degree + 1):
            v[i] = m_init[i - 1] << (_BITS - i)
        for i in range(degree + 1, _BITS + 1):
            value = v[i - degree] ^ (v[i - degree] >> degree)
            for t in range(1, degree):
                if (a >> (degree - 1 - t)) & 1:
                    value ^= v[i - t]
            v[i] = value
        table[j] = v[1:]
    return table


def _trailing_zeros(n: np.ndarray) -> np.ndarray:
    """Count of trailing zero bits for each (positive) entry."""
    n = n.copy()
    tz = np.zeros(n.shape, dtype=np.uint32)
    for shift in (16, 8, 4, 2, 1):
        mask = (n & ((1 << shift) - 1)) == 0
        tz[mask] += shift
        n[mask] >>= shift
    return tz


def sobol_points(n: int, dimension: int) -> np.ndarray:
    """First `n` Sobol' points in the unit cube [0, 1)^dimension.

    Points are produced in Gray-code order with positions 0 and 1 swapped
    (see module docstring), so point 0 is the cube center.
    """
    if n < 1:
        raise ValueError(f"need at least one point, got n={n}")
    table = direction_numbers(dimension)
    count = max(n, 2)
    if count - 1 > 2**_BITS - 1:
        raise ValueError(f"cannot generate {n} points with {_BITS}-bit codes")
    codes = np.zeros((count, dimension), dtype=np.uint32)
    idx = np.arange(1, count, dtype=np.uint64)
    flips = _trailing_zeros(idx)
    # x_i = x_{i-1} XOR V[trailing_zeros(i)] -> cumulative XOR scan
    codes[1:] = table.T[flips]
    codes = np.bitwise_xor.accumulate(codes, axis=0)
    codes[[0, 1]] = codes[[1, 0]]
    return codes[:n].astype(np.float64) / _SCALE


def sobol_sample(fn: ObjectiveFunction, cfg) -> Portfolio:
    """First T Sobol' points mapped affinely to the bounds, evaluated on fn.

    Deterministic: the config seed is ignored.  errors: dimension above
    the shipped direction-number table.
    """
    from . import _check_config  # local import to avoid a cycle

    _check_config(fn, cfg, "sobol")
    if cfg.dimension > MAX_DIMENSION:
        raise ValueError(
            f"sobol supports at most {MAX_DIMENSION} dimensions, "
            f"got {cfg.dimension}"
        )
    lo, hi = cfg.bounds
    unit = sobol_points(cfg.budget, cfg.dimension)
    points = lo + unit * (hi - lo)
    return evaluate_portfolio(
        fn,
        points,
        provenance={"sampler_id": "sobol", "T": str(cfg.budget)},
    )
