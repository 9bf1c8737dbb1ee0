"""Exact 2-Wasserstein distance between uniform empirical measures."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..errors import DimensionMismatchError, UnsupportedSizeError
from ..measures import EmpiricalMeasure

ASSIGNMENT_LIMIT = 512


def _quantile_w2(a: np.ndarray, b: np.ndarray) -> float:
    """1D: integral over (0,1) of |F^-1 - G^-1|^2 with piecewise-constant quantile functions."""
    a, b = np.sort(a), np.sort(b)
    n, m = len(a), len(b)
    # merge the breakpoints i/n and j/m exactly using integer numerators over n*m
    cuts = np.union1d(np.arange(n + 1) * m, np.arange(m + 1) * n)
    lengths = np.diff(cuts)
    mids = cuts[:-1]
    ia = mids // m
    ib = mids // n
    terms = (a[ia] - b[ib]) ** 2 * lengths
    return math.sqrt(math.fsum(terms) / (n * m))


def wasserstein2(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """sqrt of the minimal average squared transport cost between two empirical measures."""
    p, q = mu.points, nu.points
    if p.ndim != 2 or q.ndim != 2:
        raise DimensionMismatchError("wasserstein2 compares single measures, not stacks")
    if p.shape[1] != q.shape[1]:
        raise DimensionMismatchError(f"dimensions {p.shape[1]} and {q.shape[1]} differ")
    if p.shape[1] == 1:
        return _quantile_w2(p[:, 0], q[:, 0])
    n = p.shape[0]
    if n != q.shape[0] or n > ASSIGNMENT_LIMIT:
        raise UnsupportedSizeError(
            f"multivariate W2 needs equal sizes n <= {ASSIGNMENT_LIMIT}, got {n} and {q.shape[0]}"
        )
    cost = np.sum((p[:, None, :] - q[None, :, :]) ** 2, axis=-1)
    rows, cols = linear_sum_assignment(cost)
    return math.sqrt(math.fsum(cost[rows, cols]) / n)
