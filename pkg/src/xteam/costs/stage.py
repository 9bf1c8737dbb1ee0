"""Stage costs: general exchangeable, mean-field and quadratic forms."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import DimensionMismatchError, NegativeCostError, NotPositiveDefiniteError
from ..measures import EmpiricalMeasure, sorted_total
from ..sde.dynamics import apply_matrix
from ..sde.expr import Expression

NEGATIVE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class StageCost:
    """Instantaneous team cost c(x^{1:N}, u^{1:N}) >= 0.

    ``form`` is one of ``exchangeable`` (``fn(x, u)`` on [..., N, d] and
    [..., N, m] arrays), ``mean-field`` (``fn(x, u, mx, mu)`` returning
    per-agent values [..., N], averaged over agents) or ``lqg``. ``bound`` is
    a declared uniform bound; None means the cost is treated as unbounded.
    """

    form: str
    fn: Callable | None = None
    bound: float | None = None
    Q: np.ndarray | None = None
    R: np.ndarray | None = None
    label: str = "custom"
    spec: dict = field(default_factory=dict)

    # constructors
    @classmethod
    def exchangeable(cls, fn, agents: int, state_dim: int = 1, action_dim: int = 1, bound=None,
                     label="exchangeable", samples: int = 8, seed: int = 0, rtol: float = 1e-12):
        """General form; refuses a function that fails a sampled relabeling self-test."""
        cost = cls("exchangeable", fn, bound, label=label)
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(samples, agents, state_dim))
        u = rng.normal(size=(samples, agents, action_dim))
        base = np.asarray(fn(x, u), dtype=float)
        perms = list(itertools.permutations(range(agents))) if agents <= 5 else [
            tuple(rng.permutation(agents)) for _ in range(32)]
        for tau in perms:
            other = np.asarray(fn(x[:, list(tau)], u[:, list(tau)]), dtype=float)
            if not np.allclose(other, base, rtol=rtol, atol=rtol):
                raise ValueError(f"cost {label!r} is not invariant under relabeling {tau}")
        return cost

    @classmethod
    def mean_field(cls, fn, bound=None, label="mean-field", spec=None):
        return cls("mean-field", fn, bound, label=label, spec=dict(spec or {}))

    @classmethod
    def from_expression(cls, expr: str, bound=None, params=None):
        """Mean-field cost from an expression over x, u, mean_x, mean_u (summed over coordinates)."""
        e = Expression(expr, params)

        def fn(x, u, mx, mu):
            val = np.asarray(e(x=x, u=u, mean_x=mx.mean(), mean_u=mu.mean(), t=0.0), dtype=float)
            val = np.broadcast_to(val, np.broadcast_shapes(val.shape, x.shape))
            return np.sum(val, axis=-1)

        return cls.mean_field(fn, bound, label=f"expr:{expr}", spec={"expr": expr, "params": params or {}})

    @classmethod
    def lqg(cls, Q, R, label="lqg"):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        R = np.atleast_2d(np.asarray(R, dtype=float))
        if not np.array_equal(Q, Q.T) or np.linalg.eigvalsh(Q).min() < -1e-12:
            raise NotPositiveDefiniteError("Q must be symmetric positive semidefinite")
        if not np.array_equal(R, R.T) or np.linalg.eigvalsh(R).min() <= 0:
            raise NotPositiveDefiniteError("R must be symmetric positive definite")
        return cls("lqg", None, None, Q, R, label)

    @property
    def declared_bound(self) -> bool:
        return self.bound is not None and np.isfinite(self.bound)

    # evaluation
    def values(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Cost of every configuration along leading axes: [..., N, d], [..., N, m] -> [...]."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if x.shape[:-1] != u.shape[:-1]:
            raise DimensionMismatchError(f"states {x.shape} and actions {u.shape} disagree")
        if self.form == "exchangeable":
            out = np.asarray(self.fn(x, u), dtype=float)
        elif self.form == "mean-field":
            per_agent = np.asarray(self.fn(x, u, EmpiricalMeasure(x), EmpiricalMeasure(u)), dtype=float)
            per_agent = np.broadcast_to(per_agent, x.shape[:-1])
            out = sorted_total(per_agent, axis=-1) / x.shape[-2]
        elif self.form == "lqg":
            out = _quadratic(self.Q, x) + _quadratic(self.R, u)
        else:
            raise ValueError(f"unknown cost form {self.form!r}")
        return out


def _exchangeable_blocks(Q: np.ndarray, n: int, d: int):
    """(diagonal block, off-diagonal block) when Q has exchangeable block structure, else None."""
    blocks = Q.reshape(n, d, n, d).transpose(0, 2, 1, 3)
    D = blocks[0, 0]
    O = blocks[0, 1] if n > 1 else np.zeros_like(D)
    for i in range(n):
        for j in range(n):
            if not np.array_equal(blocks[i, j], D if i == j else O):
                return None
    return D, O


def _quadratic(Q: np.ndarray, z: np.ndarray) -> np.ndarray:
    """z^T Q z for stacked agent vectors z [..., N, d].

    Exchangeable Q uses sum_i z_i^T (D - O) z_i + S^T O S with S = sum_i z_i,
    both sums taken in sorted order, so relabeling agents leaves it unchanged bit for bit.
    """
    n, d = z.shape[-2:]
    if Q.shape != (n * d, n * d):
        raise DimensionMismatchError(f"quadratic form {Q.shape} for {n} agents of dimension {d}")
    blocks = _exchangeable_blocks(Q, n, d)
    if blocks is not None:
        D, O = blocks
        own = np.sum(z * apply_matrix(D - O, z), axis=-1)
        S = sorted_total(np.moveaxis(z, -2, -1), axis=-1)
        return sorted_total(own, axis=-1) + np.sum(S * apply_matrix(O, S), axis=-1)
    flat = z.reshape(z.shape[:-2] + (n * d,))
    return np.einsum("...i,ij,...j->...", flat, Q, flat)


def evaluate_stage_cost(cost: StageCost, x, u, tol: float = NEGATIVE_TOL):
    """c(x^{1:N}, u^{1:N}) for one configuration [N, d] (float) or a stack of them (array)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if u.ndim == 1:
        u = u[:, None]
    val = cost.values(x, u)
    if np.any(val < -tol):
        raise NegativeCostError(f"stage cost {cost.label!r} returned {float(np.min(val))!r} < 0")
    return float(val) if val.ndim == 0 else val
