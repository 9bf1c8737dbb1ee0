"""Generator-based martingale residuals and sampled checks of the standing assumptions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import EmptySampleError, NonFiniteError
from ..measures import EmpiricalMeasure
from .dynamics import Mode, TeamDynamics
from .simulate import PathChunk, SimulationBatch


@dataclass(frozen=True)
class TestFunction:
    """f: [..., d] -> [...], with analytic gradient [..., d] and Hessian [..., d, d]."""

    __test__ = False  # not a pytest class

    f: Callable
    grad: Callable
    hess: Callable

    @classmethod
    def constant(cls, c: float = 1.0) -> "TestFunction":
        return cls(lambda x: np.full(x.shape[:-1], c), np.zeros_like,
                   lambda x: np.zeros(x.shape + (x.shape[-1],)))

    @classmethod
    def coordinate(cls, j: int = 0) -> "TestFunction":
        def grad(x):
            g = np.zeros_like(x)
            g[..., j] = 1.0
            return g
        return cls(lambda x: x[..., j], grad, lambda x: np.zeros(x.shape + (x.shape[-1],)))

    @classmethod
    def square(cls) -> "TestFunction":
        """f(x) = |x|^2."""
        def hess(x):
            return np.broadcast_to(2.0 * np.eye(x.shape[-1]), x.shape + (x.shape[-1],))
        return cls(lambda x: np.sum(x * x, axis=-1), lambda x: 2.0 * x, hess)


def drift_along(batch: SimulationBatch, chunk: PathChunk) -> np.ndarray:
    """Drift b(t_k, x_k, u_k, ...) recomputed along stored paths: [mc, N, K, d]."""
    dyn = batch.dynamics
    K = batch.grid.steps
    out = np.empty(chunk.increments.shape)
    for k in range(K):
        t = batch.grid.times[k]
        x, u = chunk.states[:, :, k], chunk.actions[:, :, k]
        if batch.mode is Mode.DECOUPLED:
            out[:, :, k] = dyn.b(t, x, u)
        elif batch.law is not None:
            mx, mu = batch.law.measures(k)
            out[:, :, k] = dyn.b(t, x, u, mx, mu)
        else:
            out[:, :, k] = dyn.b(t, x, u, EmpiricalMeasure(x), EmpiricalMeasure(u))
    return out


@dataclass(frozen=True)
class MartingaleResidual:
    """Per-time mean and standard error over replications of the agent-averaged residual."""

    times: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    terminal: np.ndarray = field(repr=False)

    @property
    def final(self) -> tuple[float, float]:
        return float(self.mean[-1]), float(self.se[-1])


def _residual_chunk(batch: SimulationBatch, chunk: PathChunk, test: TestFunction) -> np.ndarray:
    dyn, dt = batch.dynamics, batch.grid.dt
    K = batch.grid.steps
    b = drift_along(batch, chunk)
    xs = chunk.states
    gen = np.empty(xs.shape[:2] + (K,))
    for k in range(K):
        x = xs[:, :, k]
        sig = np.broadcast_to(dyn.sigma(batch.grid.times[k], x), x.shape + (x.shape[-1],))
        a = 0.5 * np.einsum("...ij,...kj->...ik", sig, sig)
        gen[:, :, k] = np.einsum("...ij,...ji->...", a, test.hess(x)) + np.sum(b[:, :, k] * test.grad(x), -1)
    fx = test.f(xs)
    integral = np.concatenate([np.zeros(gen.shape[:2] + (1,)), np.cumsum(gen * dt, axis=-1)], axis=-1)
    res = fx - fx[..., :1] - integral
    if not np.all(np.isfinite(res)):
        raise NonFiniteError("martingale residual is not finite")
    return np.mean(res, axis=1)


def martingale_residual(batch: SimulationBatch, dynamics: TeamDynamics | None = None,
                        f: TestFunction | None = None) -> MartingaleResidual:
    """Mean over replications of f(X_t) - f(X_0) - sum_k A^{u_k} f(x_k) dt at every grid time.

    A^u f = Tr(a Hess f) + b . grad f with a = sigma sigma^T / 2.
    """
    if f is None:
        raise ValueError("a test function is required")
    if dynamics is not None and dynamics is not batch.dynamics:
        batch = SimulationBatch(dynamics, batch.profile, batch.grid, batch.init, batch.noise,
                                batch.mode, batch.law)
    rows = np.concatenate(batch.map_chunks(lambda c: _residual_chunk(batch, c, f)))
    M = rows.shape[0]
    mean = np.array([math.fsum(col) / M for col in rows.T])
    if M > 1:
        var = np.array([math.fsum((col - mu) ** 2) / (M - 1) for col, mu in zip(rows.T, mean)])
        se = np.sqrt(var / M)
    else:
        se = np.full_like(mean, np.nan)
    return MartingaleResidual(batch.grid.times, mean, se, rows[:, -1])


@dataclass(frozen=True)
class AssumptionReport:
    lipschitz: float
    growth: float
    min_eigenvalue: float
    flags: tuple[str, ...]
    points: int

    @property
    def ok(self) -> bool:
        return not self.flags


def _drift_at(dyn: TeamDynamics, t, x, u):
    # one agent per point, with the singleton empirical measure in measure modes
    x3, u3 = x[:, None, :], u[:, None, :]
    if dyn.mode is Mode.DECOUPLED:
        return dyn.b(t[:, None, None], x3, u3)[:, 0]
    return dyn.b(t[:, None, None], x3, u3, EmpiricalMeasure(x3), EmpiricalMeasure(u3))[:, 0]


def check_assumptions(dynamics: TeamDynamics, sample_points: dict, radius: float,
                      lipschitz_bound: float | None = None, growth_bound: float | None = None,
                      eig_floor: float = 1e-10) -> AssumptionReport:
    """Sampled diagnostic of local Lipschitz continuity, linear growth and nondegeneracy.

    ``sample_points`` holds arrays t [n], x [n, d], y [n, d], u [n, m], all with
    |x|, |y| <= radius. Ratios are maxima over the sample; nothing is proved.
    """
    t = np.asarray(sample_points.get("t", []), dtype=float).reshape(-1)
    if t.size == 0:
        raise EmptySampleError("no sample points supplied")
    n, d, m = t.size, dynamics.state_dim, dynamics.action_dim
    x = np.asarray(sample_points["x"], dtype=float).reshape(n, d)
    y = np.asarray(sample_points.get("y", x), dtype=float).reshape(n, d)
    u = np.asarray(sample_points.get("u", np.zeros((n, m))), dtype=float).reshape(n, m)
    if np.any(np.linalg.norm(x, axis=1) > radius) or np.any(np.linalg.norm(y, axis=1) > radius):
        raise ValueError(f"sample points must lie in the ball of radius {radius}")
    bx, by = _drift_at(dynamics, t, x, u), _drift_at(dynamics, t, y, u)
    dist = np.linalg.norm(x - y, axis=1)
    moved = dist > 0
    lip = float(np.max(np.linalg.norm(bx - by, axis=1)[moved] / dist[moved])) if np.any(moved) else 0.0
    sig = np.broadcast_to(dynamics.sigma(t[:, None, None], x[:, None, :]), (n, 1, d, d))[:, 0]
    growth = float(np.max((np.sum(bx**2, 1) + np.sum(sig**2, axis=(1, 2))) / (1.0 + np.sum(x**2, 1))))
    min_eig = float(np.min(np.linalg.eigvalsh(np.einsum("nij,nkj->nik", sig, sig))))
    flags = []
    if min_eig <= eig_floor:
        flags.append("nondegeneracy: min eigenvalue of sigma sigma^T is not bounded away from 0")
    if lipschitz_bound is not None and lip > lipschitz_bound:
        flags.append(f"lipschitz: ratio {lip:.4g} exceeds {lipschitz_bound}")
    if growth_bound is not None and growth > growth_bound:
        flags.append(f"growth: ratio {growth:.4g} exceeds {growth_bound}")
    if not np.all(np.isfinite([lip, growth, min_eig])):
        flags.append("non-finite coefficient values in sample")
    return AssumptionReport(lip, growth, min_eig, tuple(flags), n)
