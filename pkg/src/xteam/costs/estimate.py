"""Monte Carlo estimators of finite-N, randomized-policy and mean-field team costs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NegativeCostError, NonFiniteError
from ..parallel import ordered_sum
from ..sde.dynamics import Mode
from ..sde.noise import WienerBatch
from ..sde.simulate import SimulationBatch, simulate_coupled, simulate_decoupled, simulate_mckean_vlasov
from .stage import NEGATIVE_TOL, StageCost


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    se: float
    replications: int
    dt: float
    seed: int
    samples: np.ndarray | None = field(default=None, repr=False, compare=False)

    def as_row(self, **extra) -> dict:
        row = dict(extra)
        row.update(mean=self.mean, se=self.se, M=self.replications, dt=self.dt, seed=self.seed)
        return row


def mean_se(samples: np.ndarray) -> tuple[float, float]:
    """Sample mean and standard error with exactly rounded sums."""
    samples = np.asarray(samples, dtype=float).reshape(-1)
    M = samples.size
    mean = math.fsum(samples) / M
    if M < 2:
        return mean, 0.0
    var = math.fsum((samples - mean) ** 2) / (M - 1)
    return mean, math.sqrt(var / M)


def integrate_stage(cost: StageCost, states: np.ndarray, actions: np.ndarray, horizon: float) -> np.ndarray:
    """Left Riemann sum sum_k c(x_k, u_k) dt per replication, states [mc, N, K+1, d]."""
    K = actions.shape[2]
    x = np.moveaxis(states[:, :, :K], 2, 1)
    u = np.moveaxis(actions, 2, 1)
    stage = cost.values(x, u)
    if np.any(stage < -NEGATIVE_TOL):
        raise NegativeCostError(f"stage cost {cost.label!r} went negative along a path")
    # (sum / K) * T keeps constant costs exact
    return ordered_sum(stage, axis=-1) / K * horizon


def per_replication_costs(batch: SimulationBatch, cost: StageCost) -> np.ndarray:
    T = batch.grid.horizon
    parts = batch.map_chunks(lambda c: integrate_stage(cost, c.states, c.actions, T))
    out = np.concatenate(parts)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("non-finite path cost", replications=np.flatnonzero(~np.isfinite(out)).tolist())
    return out


def estimate_JN(batch: SimulationBatch, cost: StageCost, keep_samples: bool = False) -> CostEstimate:
    samples = per_replication_costs(batch, cost)
    mean, se = mean_se(samples)
    return CostEstimate(mean, se, batch.replications, batch.grid.dt, batch.seed,
                        samples if keep_samples else None)


def simulate_profile(dynamics, profile, grid, init, noise) -> SimulationBatch:
    if dynamics.mode is Mode.DECOUPLED:
        return simulate_decoupled(dynamics, profile, grid, init, noise)
    return simulate_coupled(dynamics.with_mode(Mode.COUPLED), profile, grid, init, noise)


def canonical_stream_ids(profile) -> tuple[int, ...]:
    """Stream of agent i = rank of its policy fingerprint (stable), so relabeled profiles share paths."""
    order = sorted(range(len(profile)), key=lambda i: profile.key[i])
    ids = [0] * len(profile)
    for rank, i in enumerate(order):
        ids[i] = rank
    return tuple(ids)


def estimate_randomized_cost(law, dynamics, cost: StageCost, grid, init, replications: int,
                             seed: int, crn: str = "shared", substeps: int = 1) -> CostEstimate:
    """Sum_a w_a J_N(profile_a) with every atom simulated on the root seed.

    ``crn='shared'`` gives every atom identical substreams per agent slot;
    ``crn='canonical'`` routes substreams by policy identity instead.
    SE is sqrt(sum w_a^2 SE_a^2), plus the between-atom spread when the law's
    atoms were themselves sampled.
    """
    n = law.n_agents
    means, ses, weights = [], [], []
    for profile, w in law.atoms:
        noise = WienerBatch(seed, replications, n, grid.steps, dynamics.state_dim, grid.dt, substeps)
        if crn == "canonical":
            noise = WienerBatch(seed, replications, n, grid.steps, dynamics.state_dim, grid.dt, substeps,
                                canonical_stream_ids(profile))
        elif crn != "shared":
            raise ValueError(f"unknown CRN mode {crn!r}")
        est = estimate_JN(simulate_profile(dynamics, profile, grid, init, noise), cost)
        means.append(est.mean)
        ses.append(est.se)
        weights.append(w)
    w = np.asarray(weights)
    mean = math.fsum(w * np.asarray(means))
    var = math.fsum((w * np.asarray(ses)) ** 2)
    if law.mc_error is not None and len(means) > 1:
        spread = math.fsum(w * (np.asarray(means) - mean) ** 2)
        var += spread * math.fsum(w**2)
    return CostEstimate(mean, math.sqrt(var), replications, grid.dt, seed)


@dataclass(frozen=True)
class JinfReport:
    schedule: tuple[int, ...]
    estimates: tuple[CostEstimate, ...]
    tail_max: float
    trend: tuple[float, float]
    decay_exponent: float
    gap_exponent: float
    mv: CostEstimate | None

    def rows(self) -> list[dict]:
        return [e.as_row(N=n) for n, e in zip(self.schedule, self.estimates)]


def mckean_vlasov_cost(policy, dynamics, cost: StageCost, grid, init, particles: int,
                       replications: int, seed: int) -> CostEstimate:
    """Representative-agent cost E int c(X, U, mu_X, mu_U) dt from P-particle ensembles.

    One sample per ensemble replication: the ensemble average of the
    representative cost, which approximates the mean-field cost as P grows.
    """
    noise = WienerBatch(seed, replications, particles, grid.steps, dynamics.state_dim, grid.dt)
    if dynamics.mode is Mode.DECOUPLED:
        from ..policies.profiles import PolicyProfile

        batch = simulate_decoupled(dynamics, PolicyProfile.symmetric_of(policy, particles), grid, init, noise)
    else:
        batch = simulate_mckean_vlasov(dynamics, policy, grid, init, noise)
    return estimate_JN(batch, cost)


def _slope(logx, logy) -> float:
    ok = np.isfinite(logy)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(logx[ok], logy[ok], 1)[0])


def estimate_Jinf(policy, dynamics, cost: StageCost, schedule, grid, init, replications: int,
                  seed: int, mv_particles: int = 4096, mv_replications: int = 32) -> JinfReport:
    """J_N along an increasing schedule under a common policy, with limsup proxies.

    ``tail_max`` is the larger of the last two estimates. ``trend`` is the least
    squares fit J_N ~ a + b N^{-1/2}. ``decay_exponent`` is the log-log slope of
    J_N, ``gap_exponent`` that of |J_N - J_MV|.
    """
    schedule = tuple(int(n) for n in schedule)
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("N schedule must be increasing")
    from ..policies.profiles import PolicyProfile

    ests = []
    for n in schedule:
        noise = WienerBatch(seed, replications, n, grid.steps, dynamics.state_dim, grid.dt)
        batch = simulate_profile(dynamics, PolicyProfile.symmetric_of(policy, n), grid, init, noise)
        ests.append(estimate_JN(batch, cost))
    means = np.array([e.mean for e in ests])
    tail = float(max(means[-2:])) if len(means) > 1 else float(means[-1])
    X = np.column_stack([np.ones(len(schedule)), np.asarray(schedule, float) ** -0.5])
    a, b = np.linalg.lstsq(X, means, rcond=None)[0]
    mv = None
    if mv_particles:
        mv = mckean_vlasov_cost(policy, dynamics, cost, grid, init, mv_particles, mv_replications, seed ^ 0x5EED)
    logn = np.log(np.asarray(schedule, float))
    with np.errstate(divide="ignore", invalid="ignore"):
        decay = _slope(logn, np.log(np.abs(means)))
        gap = _slope(logn, np.log(np.abs(means - mv.mean))) if mv is not None else float("nan")
    return JinfReport(schedule, tuple(ests), tail, (float(a), float(b)), decay, gap, mv)
