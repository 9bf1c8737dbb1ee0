"""Euler-Maruyama simulation of decoupled, empirically coupled and McKean-Vlasov teams.

Batches are lazy: paths are generated chunk by chunk over replications, so
estimators can stream over very large replication counts. Chunk boundaries
depend only on problem dimensions, and every replication reads its own noise
substreams, hence results do not depend on the worker count or on M.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..errors import DimensionMismatchError, NonFiniteError
from ..measures import EmpiricalMeasure
from ..parallel import chunk_ranges, ordered_map
from .dynamics import InitLaw, Mode, TeamDynamics, apply_matrix
from .grid import TimeGrid
from .noise import WienerBatch

BLOWUP = 1e6
CHUNK_BUDGET = 1 << 21


@dataclass(frozen=True)
class AgentPath:
    states: np.ndarray
    actions: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.actions))):
            raise NonFiniteError("agent path has non-finite entries")


@dataclass(frozen=True)
class PathChunk:
    """Paths for replications ``reps``: states [mc, N, K+1, d], actions [mc, N, K, m]."""

    reps: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    increments: np.ndarray


@dataclass(frozen=True)
class LawPath:
    """Frozen per-step particle approximation of the state and action laws."""

    x: np.ndarray
    u: np.ndarray

    @classmethod
    def from_chunk(cls, chunk: PathChunk, replication: int = 0) -> "LawPath":
        xs = np.stack([EmpiricalMeasure(chunk.states[replication, :, k]).points
                       for k in range(chunk.states.shape[2])])
        us = np.stack([EmpiricalMeasure(chunk.actions[replication, :, k]).points
                       for k in range(chunk.actions.shape[2])])
        return cls(xs, us)

    @property
    def steps(self) -> int:
        return self.u.shape[0]

    def measures(self, k: int) -> tuple[EmpiricalMeasure, EmpiricalMeasure]:
        kk = min(k, self.steps - 1)
        return (EmpiricalMeasure(self.x[k][None], presorted=True),
                EmpiricalMeasure(self.u[kk][None], presorted=True))

    def mean_x(self) -> np.ndarray:
        return np.array([EmpiricalMeasure(self.x[k][None], presorted=True).mean()[0, 0]
                         for k in range(self.x.shape[0])])


def chunk_size_for(agents: int, steps: int, dim: int, action_dim: int) -> int:
    per_rep = agents * (steps + 1) * (2 * dim + action_dim)
    return max(1, CHUNK_BUDGET // per_rep)


class SimulationBatch:
    """M replications of N agent paths; materialized lazily in fixed-size chunks."""

    def __init__(self, dynamics: TeamDynamics, profile, grid: TimeGrid, init: InitLaw,
                 noise: WienerBatch, mode: Mode, law: LawPath | None = None):
        self.dynamics = dynamics
        self.profile = profile
        self.grid = grid
        self.init = init
        self.noise = noise
        self.mode = mode
        self.law = law
        self.chunk_size = chunk_size_for(noise.agents, grid.steps, dynamics.state_dim, dynamics.action_dim)
        self._validate()

    def _validate(self):
        dyn, noise = self.dynamics, self.noise
        if len(self.profile) != noise.agents:
            raise DimensionMismatchError(f"profile has {len(self.profile)} agents, noise has {noise.agents}")
        if noise.steps != self.grid.steps or not np.isclose(noise.dt, self.grid.dt, rtol=1e-12, atol=0):
            raise DimensionMismatchError("noise batch and time grid disagree")
        if noise.dim != dyn.state_dim or self.init.dim != dyn.state_dim:
            raise DimensionMismatchError("noise, init law and dynamics state dimensions disagree")
        if self.profile.action_dim != dyn.action_dim:
            raise DimensionMismatchError(
                f"policies emit {self.profile.action_dim}-dim actions, dynamics expect {dyn.action_dim}"
            )
        if self.law is not None and self.law.steps != self.grid.steps:
            raise DimensionMismatchError("law path and grid disagree")

    @property
    def replications(self) -> int:
        return self.noise.replications

    @property
    def agents(self) -> int:
        return self.noise.agents

    @property
    def seed(self) -> int:
        return self.noise.seed

    def rep_chunks(self) -> list[np.ndarray]:
        return chunk_ranges(self.replications, self.chunk_size)

    def run_chunk(self, reps) -> PathChunk:
        return _integrate(self, np.asarray(reps, dtype=np.int64))

    def map_chunks(self, fn) -> list:
        """``fn(chunk)`` for every chunk, in replication order."""
        return ordered_map(lambda reps: fn(self.run_chunk(reps)), self.rep_chunks())

    @cached_property
    def _full(self) -> PathChunk:
        parts = self.map_chunks(lambda c: c)
        if len(parts) == 1:
            return parts[0]
        return PathChunk(*(np.concatenate([getattr(p, f) for p in parts])
                           for f in ("reps", "states", "actions", "increments")))

    @property
    def states(self) -> np.ndarray:
        return self._full.states

    @property
    def actions(self) -> np.ndarray:
        return self._full.actions

    @property
    def increments(self) -> np.ndarray:
        return self._full.increments

    def path(self, replication: int, agent: int) -> AgentPath:
        return AgentPath(self.states[replication, agent], self.actions[replication, agent])

    @property
    def paths(self) -> list[list[AgentPath]]:
        return [[self.path(r, i) for i in range(self.agents)] for r in range(self.replications)]

    def law_path(self, replication: int = 0) -> LawPath:
        return LawPath.from_chunk(self.run_chunk([replication]), 0)


def _measure_args(batch: SimulationBatch, k: int, x: np.ndarray, u: np.ndarray):
    if batch.law is not None:
        return batch.law.measures(k)
    return EmpiricalMeasure(x), EmpiricalMeasure(u)


def _integrate(batch: SimulationBatch, reps: np.ndarray) -> PathChunk:
    from ..policies.kernels import History

    dyn, grid, noise = batch.dynamics, batch.grid, batch.noise
    mc, n, K, d, m = len(reps), noise.agents, grid.steps, dyn.state_dim, dyn.action_dim
    dw = noise.block(reps)
    x0 = batch.init.sample(noise, reps)
    groups = batch.profile.groups()
    needs_uniforms = any(p.randomized for p, _ in groups)
    uni = noise.policy_uniforms(reps) if needs_uniforms else None
    pre = {}
    for p, idx in groups:
        if p.open_loop:
            ua = p.open_loop_actions(x0[:, idx], dw[:, idx])
            dyn.check_actions(ua)
            pre[p.fingerprint] = ua

    states = np.empty((mc, n, K + 1, d))
    actions = np.empty((mc, n, K, m))
    states[:, :, 0] = x0
    x = x0
    times = grid.times
    for k in range(K):
        t = times[k]
        u = np.empty((mc, n, m))
        for p, idx in groups:
            if p.open_loop:
                u[:, idx] = pre[p.fingerprint][:, :, k]
                continue
            sub_hist = History(x0[:, idx], dw[:, idx]) if p.needs_history else None
            ug = p.actions(k, t, x[:, idx], None if uni is None else uni[:, idx, k], sub_hist)
            u[:, idx] = np.broadcast_to(ug, (mc, len(idx), m))
        dyn.check_actions(u)
        if batch.mode is Mode.DECOUPLED:
            drift = dyn.b(t, x, u)
        else:
            mx, mu = _measure_args(batch, k, x, u)
            drift = dyn.b(t, x, u, mx, mu)
        sig = dyn.sigma(t, x)
        x = (x + drift * grid.dt) + apply_matrix(sig, dw[:, :, k])
        bad = ~np.isfinite(x) | (np.abs(x) > BLOWUP)
        if np.any(bad):
            rows = np.unique(np.argwhere(bad)[:, 0])
            raise NonFiniteError(
                f"state left the blow-up guard |x| <= {BLOWUP:g} at step {k + 1}",
                replications=[int(reps[r]) for r in rows],
            )
        states[:, :, k + 1] = x
        actions[:, :, k] = u
    return PathChunk(reps, states, actions, dw)


def _check_mode(dynamics: TeamDynamics, *modes: Mode):
    if dynamics.mode not in modes:
        raise DimensionMismatchError(
            f"dynamics {dynamics.name!r} has mode {dynamics.mode.value}, expected {[m.value for m in modes]}"
        )


def _as_profile(profile, agents: int):
    from ..policies.kernels import Policy
    from ..policies.profiles import PolicyProfile

    if isinstance(profile, Policy):
        return PolicyProfile.symmetric_of(profile, agents)
    return profile


def simulate_decoupled(dynamics, profile, grid, init, noise) -> SimulationBatch:
    _check_mode(dynamics, Mode.DECOUPLED)
    return SimulationBatch(dynamics, _as_profile(profile, noise.agents), grid, init, noise, Mode.DECOUPLED)


def simulate_coupled(dynamics, profile, grid, init, noise) -> SimulationBatch:
    _check_mode(dynamics, Mode.COUPLED)
    return SimulationBatch(dynamics, _as_profile(profile, noise.agents), grid, init, noise, Mode.COUPLED)


def simulate_mckean_vlasov(dynamics, policy, grid, init, noise, ensemble_size: int | None = None):
    """P-particle ensemble, each particle reading the ensemble frozen at the current step.

    ``noise`` supplies one substream per particle; ``ensemble_size`` defaults
    to (and must equal) its agent count.
    """
    _check_mode(dynamics, Mode.MEAN_FIELD, Mode.COUPLED)
    if ensemble_size is not None and ensemble_size != noise.agents:
        noise = WienerBatch(noise.seed, noise.replications, ensemble_size, noise.steps, noise.dim,
                            noise.dt, noise.substeps)
    dyn = dynamics.with_mode(Mode.MEAN_FIELD)
    return SimulationBatch(dyn, _as_profile(policy, noise.agents), grid, init, noise, Mode.MEAN_FIELD)


def simulate_reference(dynamics, profile, grid, init, noise, law: LawPath) -> SimulationBatch:
    """Agents evolve independently under the mean-field drift evaluated at the frozen ``law``."""
    _check_mode(dynamics, Mode.MEAN_FIELD, Mode.COUPLED)
    dyn = dynamics.with_mode(Mode.MEAN_FIELD)
    return SimulationBatch(dyn, _as_profile(profile, noise.agents), grid, init, noise, Mode.MEAN_FIELD, law)


def mckean_vlasov_law(dynamics, policy, grid, init, seed: int, particles: int = 4096,
                      substeps: int = 1) -> LawPath:
    """Law approximation from a single replication of a ``particles``-particle ensemble."""
    noise = WienerBatch(seed, 1, particles, grid.steps, dynamics.state_dim, grid.dt, substeps)
    return simulate_mckean_vlasov(dynamics, policy, grid, init, noise).law_path(0)
