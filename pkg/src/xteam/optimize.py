"""Search over finite-dimensional symmetric policy families and the mean-field optimality gap."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .costs.estimate import (CostEstimate, estimate_JN, mean_se, mckean_vlasov_cost,
                             per_replication_costs, simulate_profile)
from .errors import DivergenceError
from .policies.kernels import CategoricalGridPolicy, LinearFeedback, Policy
from .policies.profiles import PolicyProfile
from .sde.noise import POLICY, WienerBatch, uniforms

DIVERGENCE_FACTOR = 10.0
DIVERGENCE_PATIENCE = 5
FD_MAX_PARAMS = 8


@dataclass(frozen=True, eq=False)
class PolicyParameterization:
    """theta -> policy for one family, with box constraints on theta.

    ``linear``: gains K_b (and offsets when ``offsets``) on ``bins`` equal time
    bins over [0, horizon], flattened as [B, m, d] then [B, m].
    ``grid-kernel``: softmax of theta per (time bin, state bin) over ``atoms``.
    """

    family: str
    lo: np.ndarray
    hi: np.ndarray
    horizon: float = 1.0
    bins: int = 1
    state_dim: int = 1
    action_dim: int = 1
    offsets: bool = False
    clip: tuple | None = None
    x_bins: np.ndarray | None = None
    atoms: np.ndarray | None = None

    @classmethod
    def linear(cls, lo, hi, horizon=1.0, bins=1, state_dim=1, action_dim=1, offsets=False, clip=None):
        n = bins * action_dim * state_dim + (bins * action_dim if offsets else 0)
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,)).copy()
        return cls("linear", lo, hi, horizon, bins, state_dim, action_dim, offsets, clip)

    @classmethod
    def grid_kernel(cls, x_bins, atoms, horizon=1.0, bins=1, bound=10.0):
        x_bins = np.asarray(x_bins, dtype=float)
        atoms = np.asarray(atoms, dtype=float).reshape(len(atoms), -1)
        n = bins * (len(x_bins) - 1) * len(atoms)
        return cls("grid-kernel", np.full(n, -bound), np.full(n, bound), horizon, bins, 1,
                   atoms.shape[1], x_bins=x_bins, atoms=atoms)

    @property
    def dim(self) -> int:
        return self.lo.size

    def project(self, theta) -> np.ndarray:
        return np.clip(np.asarray(theta, dtype=float), self.lo, self.hi)

    def t_edges(self) -> list[float]:
        edges = list(np.linspace(0.0, self.horizon, self.bins + 1))
        edges[-1] = np.inf
        return edges

    def policy(self, theta) -> Policy:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != self.dim:
            raise ValueError(f"theta has {theta.size} entries, family needs {self.dim}")
        if np.any(theta < self.lo) or np.any(theta > self.hi):
            raise ValueError("theta outside its box")
        B, m, d = self.bins, self.action_dim, self.state_dim
        if self.family == "linear":
            K = theta[:B * m * d].reshape(B, m, d)
            off = theta[B * m * d:].reshape(B, m) if self.offsets else None
            return LinearFeedback(K, off, self.t_edges() if B > 1 else None, self.clip)
        if self.family == "grid-kernel":
            nx, A = len(self.x_bins) - 1, len(self.atoms)
            logits = theta.reshape(B, nx, A)
            z = np.exp(logits - logits.max(axis=-1, keepdims=True))
            probs = z / z.sum(axis=-1, keepdims=True)
            probs[..., -1] = 1.0 - probs[..., :-1].sum(axis=-1)
            return CategoricalGridPolicy(self.t_edges(), self.x_bins, self.atoms, probs)
        raise ValueError(f"unknown family {self.family!r}")


@dataclass(frozen=True, eq=False)
class Objective:
    """Cost of the symmetric profile built from one policy.

    ``N`` agents evaluated by :func:`estimate_JN`; ``N=None`` uses the
    McKean-Vlasov representative with ``particles`` particles per ensemble.
    Every call reuses the same seed (common random numbers) unless
    :meth:`with_seed` is used. ``fn`` turns it into a deterministic objective.
    """

    dynamics: object = None
    cost: object = None
    grid: object = None
    init: object = None
    N: int | None = 1
    replications: int = 1
    seed: int = 0
    particles: int = 1024
    fn: Callable | None = None

    @classmethod
    def deterministic(cls, fn: Callable, seed: int = 0) -> "Objective":
        return cls(fn=fn, seed=seed)

    def with_seed(self, seed: int) -> "Objective":
        return Objective(self.dynamics, self.cost, self.grid, self.init, self.N, self.replications,
                         seed, self.particles, self.fn)

    def with_N(self, N: int | None) -> "Objective":
        return Objective(self.dynamics, self.cost, self.grid, self.init, N, self.replications,
                         self.seed, self.particles, self.fn)

    def evaluate_policy(self, policy: Policy) -> CostEstimate:
        if self.N is None:
            return mckean_vlasov_cost(policy, self.dynamics, self.cost, self.grid, self.init,
                                      self.particles, self.replications, self.seed)
        noise = WienerBatch(self.seed, self.replications, self.N, self.grid.steps,
                            self.dynamics.state_dim, self.grid.dt)
        batch = simulate_profile(self.dynamics, PolicyProfile.symmetric_of(policy, self.N),
                                 self.grid, self.init, noise)
        return estimate_JN(batch, self.cost)

    def __call__(self, family: PolicyParameterization | None, theta) -> CostEstimate:
        if self.fn is not None:
            return CostEstimate(float(self.fn(np.asarray(theta, dtype=float))), 0.0, 1, 0.0, self.seed)
        return self.evaluate_policy(family.policy(theta))


@dataclass
class OptimizationTrace:
    thetas: list = field(default_factory=list)
    means: list = field(default_factory=list)
    ses: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    best_so_far: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    best_index: int = -1

    def record(self, theta, est: CostEstimate, step=None):
        self.thetas.append(np.asarray(theta, dtype=float).copy())
        self.means.append(est.mean)
        self.ses.append(est.se)
        self.steps.append(step)
        self.seeds.append(est.seed)
        if self.best_index < 0 or est.mean < self.means[self.best_index]:
            self.best_index = len(self.means) - 1
        self.best_so_far.append(self.means[self.best_index])

    @property
    def best_theta(self) -> np.ndarray:
        return self.thetas[self.best_index]

    @property
    def best(self) -> tuple[float, float]:
        return self.means[self.best_index], self.ses[self.best_index]

    @property
    def final(self) -> tuple[np.ndarray, float, float]:
        return self.thetas[-1], self.means[-1], self.ses[-1]

    def to_jsonl(self) -> str:
        lines = []
        for i, th in enumerate(self.thetas):
            lines.append(json.dumps({"iter": i, "theta": th.tolist(), "mean": self.means[i], "se": self.ses[i],
                                     "step": self.steps[i], "best": self.best_so_far[i],
                                     "seed": self.seeds[i]}, sort_keys=True))
        return "\n".join(lines) + "\n"


def grid_search(family: PolicyParameterization, thetas, objective: Objective) -> OptimizationTrace:
    """Evaluate every theta on identical noise; the lowest index wins ties."""
    trace = OptimizationTrace()
    for theta in thetas:
        trace.record(theta, objective(family, theta))
    return trace


@dataclass(frozen=True)
class GainSchedule:
    """a_k = a / (k + 1 + A)^alpha, c_k = c / (k + 1)^gamma."""

    a: float = 0.1
    c: float = 0.1
    A: float = 10.0
    alpha: float = 0.602
    gamma: float = 0.101

    def __post_init__(self):
        if self.a <= 0 or self.c <= 0 or self.alpha < 0 or self.gamma < 0 or self.A < 0:
            raise ValueError("gain schedule must be positive and non-increasing")

    def step(self, k: int) -> float:
        return self.a / (k + 1 + self.A) ** self.alpha

    def perturbation(self, k: int) -> float:
        return self.c / (k + 1) ** self.gamma


def _rademacher(seed: int, k: int, dim: int) -> np.ndarray:
    u = uniforms(seed, POLICY, [k], [0], np.arange(dim))[0, 0]
    return np.where(u < 0.5, -1.0, 1.0)


def spsa_descent(family: PolicyParameterization, theta0, objective: Objective, iterations: int,
                 gains: GainSchedule | None = None, seed: int = 0, method: str = "spsa") -> OptimizationTrace:
    """Projected stochastic approximation with CRN-paired two-sided differences.

    Iteration k perturbs with Rademacher directions (``spsa``) or coordinate
    directions (``fd``, at most 8 parameters) and evaluates both sides on the
    noise seed of iteration k. The iterate is then scored on the objective's
    own seed, so recorded costs are comparable across iterations.
    """
    gains = gains or GainSchedule()
    if method == "fd" and family is not None and family.dim > FD_MAX_PARAMS:
        raise ValueError(f"finite differences are limited to {FD_MAX_PARAMS} parameters")
    if method not in ("spsa", "fd"):
        raise ValueError(f"unknown method {method!r}")
    project = family.project if family is not None else (lambda th: np.asarray(th, dtype=float))
    theta = project(theta0)
    trace = OptimizationTrace()
    first = objective(family, theta)
    trace.record(theta, first, 0.0)
    limit = DIVERGENCE_FACTOR * abs(first.mean)
    streak = 0
    dim = theta.size
    for k in range(iterations):
        ak, ck = gains.step(k), gains.perturbation(k)
        paired = objective.with_seed((seed * 1_000_003 + k + 1) & ((1 << 63) - 1))
        if method == "spsa":
            delta = _rademacher(seed, k, dim)
            yp = paired(family, project(theta + ck * delta)).mean
            ym = paired(family, project(theta - ck * delta)).mean
            grad = (yp - ym) / (2.0 * ck) / delta
        else:
            grad = np.empty(dim)
            for j in range(dim):
                e = np.zeros(dim)
                e[j] = ck
                grad[j] = (paired(family, project(theta + e)).mean
                           - paired(family, project(theta - e)).mean) / (2.0 * ck)
        theta = project(theta - ak * grad)
        est = objective(family, theta)
        trace.record(theta, est, ak)
        streak = streak + 1 if est.mean > limit else 0
        if streak >= DIVERGENCE_PATIENCE:
            raise DivergenceError(
                f"cost exceeded {DIVERGENCE_FACTOR:g}x the initial value for {DIVERGENCE_PATIENCE} iterations"
            )
    return trace


@dataclass(frozen=True)
class GapPoint:
    N: int
    gap: float
    se: float
    mf_cost: float
    baseline_cost: float


def epsilon_gap(mf_policy: Policy, schedule, dynamics, cost, grid, init, baseline, replications: int,
                seed: int) -> list[GapPoint]:
    """gap(N) = J_N(mf_policy i.i.d.) - J_N(baseline(N)), paired on shared noise.

    ``baseline`` is a policy or a mapping / callable N -> policy (best found per N).
    """
    out = []
    for n in schedule:
        if callable(baseline) and not isinstance(baseline, Policy):
            base = baseline(n)
        elif isinstance(baseline, dict):
            base = baseline[n]
        else:
            base = baseline
        noise = WienerBatch(seed, replications, n, grid.steps, dynamics.state_dim, grid.dt)
        a = per_replication_costs(simulate_profile(dynamics, PolicyProfile.symmetric_of(mf_policy, n),
                                                   grid, init, noise), cost)
        if base == mf_policy:
            b = a
        else:
            b = per_replication_costs(simulate_profile(dynamics, PolicyProfile.symmetric_of(base, n),
                                                       grid, init, noise), cost)
        gap, se = mean_se(a - b)
        out.append(GapPoint(int(n), gap, se, math.fsum(a) / a.size, math.fsum(b) / b.size))
    return out


def gap_trend(points: list[GapPoint], sigmas: float = 3.0) -> dict:
    """Verdicts for a gap sequence: monotone decrease, final gap near zero, no significant negatives."""
    gaps = [p.gap for p in points]
    return {
        "decreasing": all(b < a for a, b in zip(gaps, gaps[1:])),
        "final_near_zero": abs(points[-1].gap) <= sigmas * points[-1].se,
        "nonnegative": all(p.gap >= -sigmas * p.se for p in points),
    }
