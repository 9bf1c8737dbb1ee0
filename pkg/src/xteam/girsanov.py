"""Change of measure between the coupled team and its mean-field reference.

Under the reference dynamics each agent moves with the drift evaluated at the
frozen law; the coupled team replaces the law by the agents' empirical
measures. On the Euler grid the likelihood ratio of the two chains is exactly
prod_i exp(A^i - B^i) with left-endpoint sums over the stored increments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .costs.estimate import CostEstimate, integrate_stage, mean_se
from .costs.stage import StageCost
from .errors import NonFiniteError, SingularDiffusionError, UnboundedCostRefusedError
from .measures import EmpiricalMeasure, sorted_total
from .sde.dynamics import Mode, TeamDynamics, apply_matrix
from .sde.simulate import SimulationBatch

SINGULAR_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DriftMismatch:
    """bbar = b(t, x, u, emp_x, emp_u) - b(t, x, u, law_x, law_u), scaled by ``scale``."""

    dynamics: TeamDynamics
    scale: float = 1.0

    def __call__(self, t, x, u, emp_x, emp_u, law_x, law_u) -> np.ndarray:
        if self.dynamics.mode is Mode.DECOUPLED:
            return np.zeros_like(x)
        coupled = self.dynamics.b(t, x, u, emp_x, emp_u)
        reference = self.dynamics.b(t, x, u, law_x, law_u)
        diff = coupled - reference
        return diff if self.scale == 1.0 else self.scale * diff

    def scaled(self, factor: float) -> "DriftMismatch":
        return DriftMismatch(self.dynamics, self.scale * factor)


@dataclass(frozen=True)
class LogWeightPath:
    """Per-replication, per-agent A^i and B^i, shapes [M, N]."""

    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    seed: int = 0

    @property
    def agent_log_weights(self) -> np.ndarray:
        return self.A - self.B

    @property
    def product_log_weight(self) -> np.ndarray:
        """sum_i (A^i - B^i) per replication, summed in sorted order."""
        return sorted_total(self.agent_log_weights, axis=-1)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.product_log_weight)


def _inverse_sigma(dyn: TeamDynamics, t, x):
    sig = dyn.sigma(t, x)
    if dyn.constant_diffusion:
        if np.linalg.svd(sig, compute_uv=False).min() <= SINGULAR_TOL:
            raise SingularDiffusionError("diffusion matrix is singular; the change of measure is undefined")
        return np.linalg.inv(sig)
    sig = np.broadcast_to(sig, x.shape + (x.shape[-1],))
    if np.any(np.abs(np.linalg.det(sig)) <= SINGULAR_TOL):
        raise SingularDiffusionError("diffusion matrix is singular along the path")
    return np.linalg.inv(sig)


def _weights_chunk(batch: SimulationBatch, chunk, mismatch: DriftMismatch):
    if batch.law is None:
        raise ValueError("log weights need a reference batch simulated against a frozen law")
    dyn, dt = batch.dynamics, batch.grid.dt
    mc, n = chunk.states.shape[:2]
    A = np.zeros((mc, n))
    B = np.zeros((mc, n))
    for k in range(batch.grid.steps):
        t = batch.grid.times[k]
        x, u = chunk.states[:, :, k], chunk.actions[:, :, k]
        lx, lu = batch.law.measures(k)
        bbar = mismatch(t, x, u, EmpiricalMeasure(x), EmpiricalMeasure(u), lx, lu)
        theta = apply_matrix(_inverse_sigma(dyn, t, x), bbar)
        A = A + np.sum(theta * chunk.increments[:, :, k], axis=-1)
        B = B + 0.5 * np.sum(theta * theta, axis=-1) * dt
    return A, B


def log_radon_nikodym(batch: SimulationBatch, mismatch: DriftMismatch,
                      dynamics: TeamDynamics | None = None) -> LogWeightPath:
    """A^i = sum_k (sigma^-1 bbar)^T dW_k and B^i = 1/2 sum_k |sigma^-1 bbar|^2 dt along reference paths."""
    parts = batch.map_chunks(lambda c: _weights_chunk(batch, c, mismatch))
    A = np.concatenate([p[0] for p in parts])
    B = np.concatenate([p[1] for p in parts])
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise NonFiniteError("non-finite log weights")
    return LogWeightPath(A, B, batch.seed)


@dataclass(frozen=True)
class ReweightedEstimate:
    unnormalized: CostEstimate
    self_normalized: float
    mean_weight: float
    weight_se: float


def reweighted_cost(batch: SimulationBatch, weights: LogWeightPath, cost: StageCost) -> ReweightedEstimate:
    """E[c * prod_i Z^i] under the reference measure, plus the self-normalized ratio."""
    if not cost.declared_bound:
        raise UnboundedCostRefusedError(
            f"cost {cost.label!r} has no declared uniform bound; reweighting requires a bounded cost"
        )
    T = batch.grid.horizon
    c = np.concatenate(batch.map_chunks(lambda ch: integrate_stage(cost, ch.states, ch.actions, T)))
    w = weights.weights
    mean, se = mean_se(w * c)
    wm, wse = mean_se(w)
    sn = math.fsum(w * c) / math.fsum(w)
    est = CostEstimate(mean, se, batch.replications, batch.grid.dt, batch.seed)
    return ReweightedEstimate(est, sn, wm, wse)


@dataclass(frozen=True)
class NovikovReport:
    per_agent: np.ndarray
    value: float
    prefix_estimates: tuple[float, ...]
    heavy_tail: bool

    def __float__(self) -> float:
        return self.value


def novikov_diagnostic(batch: SimulationBatch, mismatch: DriftMismatch,
                       dynamics: TeamDynamics | None = None, weights: LogWeightPath | None = None) -> NovikovReport:
    """Estimate of E exp(1/2 int |sigma^-1 bbar|^2 dt) per agent, largest over agents.

    ``heavy_tail`` is raised when the estimate grows at every doubling of the
    replication prefix and the final jump exceeds three standard errors,
    a symptom of a non-convergent exponential moment.
    """
    if weights is None:
        weights = log_radon_nikodym(batch, mismatch, dynamics)
    eB = np.exp(weights.B)
    M = eB.shape[0]
    per_agent = np.array([math.fsum(col) / M for col in eB.T])
    pooled = eB.reshape(M, -1).max(axis=1)
    prefixes = []
    m = M
    while m >= max(8, M // 16):
        prefixes.append(m)
        m //= 2
    prefixes = prefixes[::-1]
    est = [mean_se(pooled[:p]) for p in prefixes]
    growing = len(est) >= 3 and all(b[0] > a[0] for a, b in zip(est, est[1:]))
    jump = len(est) >= 2 and (est[-1][0] - est[-2][0]) > 3 * max(est[-1][1], 1e-300)
    return NovikovReport(per_agent, float(per_agent.max()), tuple(e[0] for e in est), bool(growing and jump))


@dataclass(frozen=True)
class WeightDiagnostics:
    N: int
    mean_w: float
    var_w: float
    ess: float
    novikov: float
    l1_gap: float
    seed: int

    @classmethod
    def from_weights(cls, weights: LogWeightPath, novikov: float | None = None) -> "WeightDiagnostics":
        w = weights.weights
        M = w.size
        mean = math.fsum(w) / M
        var = math.fsum((w - mean) ** 2) / max(M - 1, 1)
        ess = math.fsum(w) ** 2 / math.fsum(w * w)
        l1 = math.fsum(np.abs(w - 1.0)) / M
        if novikov is None:
            novikov = float(np.exp(weights.B).mean(axis=0).max())
        return cls(weights.A.shape[1], mean, var, ess, float(novikov), l1, weights.seed)

    def to_json(self) -> str:
        rec = {"N": self.N, "mean_w": self.mean_w, "ess": self.ess, "l1_gap": self.l1_gap,
               "novikov": self.novikov, "seed": self.seed}
        return json.dumps(rec, sort_keys=True)


@dataclass(frozen=True)
class L1GapPoint:
    N: int
    gap: float
    se: float


def l1_weight_gap(batches, mismatch: DriftMismatch, dynamics: TeamDynamics | None = None,
                  policy=None) -> list[L1GapPoint]:
    """E|prod_i Z^i - 1| for each batch (one per N), with standard errors."""
    out = []
    for batch in batches:
        if not batch.profile.symmetric:
            raise ValueError("the L1 gap is defined for symmetric profiles")
        if policy is not None and batch.profile[0] != policy:
            raise ValueError("batch profile does not use the declared policy")
        lw = log_radon_nikodym(batch, mismatch, dynamics)
        gap, se = mean_se(np.abs(lw.weights - 1.0))
        out.append(L1GapPoint(batch.agents, gap, se))
    return out


def l1_gap_decreasing(points: list[L1GapPoint], sigmas: float = 3.0) -> bool:
    """First and last points separated by ``sigmas`` combined standard errors, last smaller."""
    a, b = points[0], points[-1]
    return (a.gap - b.gap) > sigmas * math.hypot(a.se, b.se)


def diagnostics_jsonl(diags) -> str:
    return "".join(d.to_json() + "\n" for d in diags)


__all__ = [
    "DriftMismatch", "LogWeightPath", "log_radon_nikodym", "reweighted_cost", "novikov_diagnostic",
    "NovikovReport", "WeightDiagnostics", "L1GapPoint", "l1_weight_gap", "l1_gap_decreasing",
    "ReweightedEstimate", "diagnostics_jsonl",
]
