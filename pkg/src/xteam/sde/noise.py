"""Counter-based Gaussian noise addressable by (seed, stream, replication, agent, counter).

Each value is a pure function of its address, so regenerating any sub-block,
relabeling agents, or growing the replication count never perturbs other
values. Uniforms come from the SplitMix64 output function applied to a
per-substream key plus a Weyl-sequence counter; normals use the inverse CDF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.special import ndtri

from ..errors import DimensionMismatchError

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_REP_GAMMA = 0xD1B54A32D192ED03
_AGENT_GAMMA = 0xABC98388FB8FAC03
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

WIENER = 1
INIT = 2
POLICY = 3


def _mix_int(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _u64(values) -> np.ndarray:
    return np.asarray(values, dtype=np.int64).astype(np.uint64)


def substream_keys(seed: int, stream: int, reps, agents) -> np.ndarray:
    """Keys of shape [len(reps), len(agents)] identifying independent substreams."""
    base = _mix_int((int(seed) & _MASK) ^ _mix_int(stream * _GAMMA))
    with np.errstate(over="ignore"):
        r = _mix(np.uint64(base) + _u64(reps)[:, None] * np.uint64(_REP_GAMMA))
        return _mix(r ^ (_u64(agents)[None, :] * np.uint64(_AGENT_GAMMA) + np.uint64(_GAMMA)))


def uniforms(seed: int, stream: int, reps, agents, counters) -> np.ndarray:
    """Uniform(0, 1) values of shape [len(reps), len(agents), len(counters)]; never 0 or 1."""
    keys = substream_keys(seed, stream, reps, agents)
    with np.errstate(over="ignore"):
        h = _mix(keys[:, :, None] + (_u64(counters) + np.uint64(1))[None, None, :] * np.uint64(_GAMMA))
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0**-53)


def normals(seed: int, stream: int, reps, agents, counters) -> np.ndarray:
    return ndtri(uniforms(seed, stream, reps, agents, counters))


@dataclass(frozen=True)
class Substream:
    """Handle on one (replication, agent) substream, for scalar use."""

    seed: int
    replication: int
    agent: int

    def uniform(self, step: int, stream: int = POLICY) -> float:
        return float(uniforms(self.seed, stream, [self.replication], [self.agent], [step])[0, 0, 0])

    def normal(self, counter: int, stream: int = WIENER) -> float:
        return float(normals(self.seed, stream, [self.replication], [self.agent], [counter])[0, 0, 0])


@dataclass(frozen=True)
class WienerBatch:
    """Brownian increments [replication M][agent N][step K][dim d], each with variance ``dt``.

    ``stream_ids[i]`` names the substream driving agent slot ``i``; relabeling
    permutes it. With ``substeps = s`` each increment is the sum of ``s`` finer
    increments, so batches at grid sizes K*s, 2K*(s/2), ... share one Brownian path.
    """

    seed: int
    replications: int
    agents: int
    steps: int
    dim: int
    dt: float
    substeps: int = 1
    stream_ids: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.replications < 1 or self.agents < 1 or self.steps < 1 or self.dim < 1:
            raise DimensionMismatchError("WienerBatch dimensions must be positive")
        if not self.stream_ids:
            object.__setattr__(self, "stream_ids", tuple(range(self.agents)))
        if len(self.stream_ids) != self.agents:
            raise DimensionMismatchError(
                f"stream_ids has length {len(self.stream_ids)}, expected {self.agents}"
            )
        object.__setattr__(self, "seed", int(self.seed) & _MASK)

    @classmethod
    def from_grid(cls, seed: int, replications: int, agents: int, grid, dim: int, substeps: int = 1):
        return cls(seed, replications, agents, grid.steps, dim, grid.dt, substeps)

    @property
    def ids(self) -> np.ndarray:
        return np.asarray(self.stream_ids, dtype=np.int64)

    def relabel(self, tau) -> "WienerBatch":
        """Agent slot i of the result reads the substream of slot tau(i)."""
        image = tuple(getattr(tau, "image", tau))
        if sorted(image) != list(range(self.agents)):
            raise DimensionMismatchError(f"not a permutation of {self.agents} agents: {image}")
        return replace(self, stream_ids=tuple(self.stream_ids[j] for j in image))

    def with_replications(self, replications: int) -> "WienerBatch":
        return replace(self, replications=replications)

    def block(self, reps) -> np.ndarray:
        reps = np.asarray(reps, dtype=np.int64)
        s = self.substeps
        counters = np.arange(self.steps * s * self.dim, dtype=np.int64)
        z = normals(self.seed, WIENER, reps, self.ids, counters)
        z = z.reshape(len(reps), self.agents, self.steps, s, self.dim)
        if s == 1:
            return z[:, :, :, 0, :] * math.sqrt(self.dt)
        total = z[:, :, :, 0, :].copy()
        for j in range(1, s):
            total += z[:, :, :, j, :]
        return total * math.sqrt(self.dt / s)

    @cached_property
    def increments(self) -> np.ndarray:
        return self.block(np.arange(self.replications))

    def init_normals(self, reps, dim: int) -> np.ndarray:
        return normals(self.seed, INIT, np.asarray(reps), self.ids, np.arange(dim))

    def policy_uniforms(self, reps) -> np.ndarray:
        """One uniform per (replication, agent, step) for randomized decisions."""
        return uniforms(self.seed, POLICY, np.asarray(reps), self.ids, np.arange(self.steps))

    def substream(self, replication: int, agent: int) -> Substream:
        return Substream(self.seed, replication, self.stream_ids[agent])
