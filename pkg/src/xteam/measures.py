"""Uniform empirical measures over particle arrays.

Particles are stored in a canonical (lexicographically sorted) order along the
particle axis, so every statistic computed from a measure is bit-identical
under relabeling of the particles.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptySampleError
from .parallel import ordered_sum


def canonical_order(points: np.ndarray) -> np.ndarray:
    """Sort ``points`` of shape [..., n, d] lexicographically along the n axis."""
    if points.shape[-1] == 1:
        return np.sort(points, axis=-2)
    keys = [points[..., j] for j in range(points.shape[-1] - 1, -1, -1)]
    idx = np.lexsort(keys, axis=-1)
    return np.take_along_axis(points, idx[..., None], axis=-2)


def sorted_total(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Order-invariant sum: sort along ``axis`` before summing."""
    values = np.sort(np.asarray(values, dtype=float), axis=axis)
    return ordered_sum(values, axis=axis)


class EmpiricalMeasure:
    """(1/n) * sum of Dirac masses at ``points`` (shape [..., n, d]).

    Leading axes index independent measures (e.g. replications); statistics
    keep the particle axis with length one so they broadcast against agent
    arrays of shape [..., N, d].
    """

    __slots__ = ("points",)

    def __init__(self, points, *, presorted: bool = False):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[-2] < 1:
            raise EmptySampleError("empirical measure needs at least one point")
        self.points = pts if presorted else canonical_order(pts)

    @property
    def size(self) -> int:
        return self.points.shape[-2]

    @property
    def dim(self) -> int:
        return self.points.shape[-1]

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.size, 1.0 / self.size)

    def mean(self) -> np.ndarray:
        """Mean with shape [..., 1, d]."""
        return np.expand_dims(ordered_sum(self.points, axis=-2) / self.size, -2)

    def second_moment(self) -> np.ndarray:
        return np.expand_dims(ordered_sum(self.points**2, axis=-2) / self.size, -2)

    def var(self) -> np.ndarray:
        return self.second_moment() - self.mean() ** 2

    def expect(self, f) -> np.ndarray:
        """Integral of ``f`` (applied to [..., n, d] points, returning [..., n]); shape [..., 1]."""
        vals = np.asarray(f(self.points), dtype=float)
        return np.expand_dims(sorted_total(vals, axis=-1) / self.size, -1)

    def __repr__(self) -> str:
        return f"EmpiricalMeasure(shape={self.points.shape})"
