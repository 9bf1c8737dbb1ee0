"""Team dynamics specifications and initial laws."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from ..errors import DimensionMismatchError


class Mode(enum.Enum):
    DECOUPLED = "decoupled"
    COUPLED = "coupled"
    MEAN_FIELD = "mean-field"


def apply_matrix(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Row-wise ``mat @ vec`` for mat [..., p, q], vec [..., q].

    Written as an explicit sum over q so every output entry is computed by the
    same floating-point sequence regardless of its position in the batch.
    """
    mat = np.asarray(mat, dtype=float)
    vec = np.asarray(vec, dtype=float)
    if mat.shape[-1] != vec.shape[-1]:
        raise DimensionMismatchError(f"matrix {mat.shape} cannot act on vector {vec.shape}")
    out = mat[..., 0] * vec[..., None, 0]
    for j in range(1, mat.shape[-1]):
        out = out + mat[..., j] * vec[..., None, j]
    return out


@dataclass(frozen=True, eq=False)
class TeamDynamics:
    """Drift and diffusion of one agent's controlled state.

    ``drift`` is vectorized over leading axes: ``drift(t, x, u)`` in decoupled
    mode and ``drift(t, x, u, mx, mu)`` otherwise, where ``mx``/``mu`` are
    :class:`~xteam.measures.EmpiricalMeasure` objects (the agents' empirical
    measures in coupled mode, the law approximation in mean-field mode) and
    ``x`` has shape [..., N, d]. ``diffusion`` is either a constant d x d
    matrix or ``diffusion(t, x) -> [..., N, d, d]``.
    """

    state_dim: int
    action_dim: int
    action_box: np.ndarray
    drift: Callable[..., np.ndarray]
    diffusion: Any
    mode: Mode = Mode.DECOUPLED
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        box = np.asarray(self.action_box, dtype=float).reshape(-1, 2)
        if box.shape[0] != self.action_dim:
            raise DimensionMismatchError(
                f"action_box has {box.shape[0]} rows, action_dim is {self.action_dim}"
            )
        if np.any(box[:, 0] > box[:, 1]):
            raise ValueError("action_box needs lo <= hi in every coordinate")
        object.__setattr__(self, "action_box", box)
        object.__setattr__(self, "mode", Mode(self.mode))
        if not callable(self.diffusion):
            sig = np.atleast_2d(np.asarray(self.diffusion, dtype=float))
            if sig.shape == (1, 1) and self.state_dim > 1:
                sig = sig[0, 0] * np.eye(self.state_dim)
            if sig.shape != (self.state_dim, self.state_dim):
                raise DimensionMismatchError(f"diffusion has shape {sig.shape}")
            object.__setattr__(self, "diffusion", sig)

    @property
    def constant_diffusion(self) -> bool:
        return not callable(self.diffusion)

    def sigma(self, t: float, x: np.ndarray) -> np.ndarray:
        """Diffusion matrix broadcastable to [..., N, d, d]."""
        if self.constant_diffusion:
            return self.diffusion
        return np.asarray(self.diffusion(t, x), dtype=float)

    def b(self, t, x, u, mx=None, mu=None) -> np.ndarray:
        if self.mode is Mode.DECOUPLED:
            out = self.drift(t, x, u)
        else:
            out = self.drift(t, x, u, mx, mu)
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape)

    def with_mode(self, mode: Mode) -> "TeamDynamics":
        """Same drift function reinterpreted under another mode (coupled <-> mean-field)."""
        mode = Mode(mode)
        if (mode is Mode.DECOUPLED) != (self.mode is Mode.DECOUPLED):
            raise ValueError("cannot change the drift signature between decoupled and measure modes")
        return replace(self, mode=mode)

    def check_actions(self, u: np.ndarray) -> None:
        from ..errors import ActionOutOfBoxError

        lo, hi = self.action_box[:, 0], self.action_box[:, 1]
        bad = (u < lo) | (u > hi) | ~np.isfinite(u)
        if np.any(bad):
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise ActionOutOfBoxError(
                f"action {u[idx]!r} at index {idx} outside box {self.action_box.tolist()}"
            )


@dataclass(frozen=True, eq=False)
class InitLaw:
    """Gaussian initial states: ``mean`` of shape [d] (i.i.d. agents) or [N, d]; ``cov`` None means deterministic."""

    mean: np.ndarray
    cov: np.ndarray | None = None

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "mean", mean)
        if self.cov is not None:
            d = mean.shape[-1]
            cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
            if cov.shape == (1, 1) and d > 1:
                cov = cov[0, 0] * np.eye(d)
            if cov.shape != (d, d):
                raise DimensionMismatchError(f"init covariance has shape {cov.shape}, expected {(d, d)}")
            object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    @property
    def chol(self) -> np.ndarray | None:
        if self.cov is None:
            return None
        w, v = np.linalg.eigh(self.cov)
        if w.min() < -1e-12 * max(1.0, w.max()):
            raise ValueError("init covariance is not positive semidefinite")
        try:
            return np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError:
            return v * np.sqrt(np.clip(w, 0.0, None))

    def agent_means(self, agents: int) -> np.ndarray:
        if self.mean.ndim == 1:
            return np.broadcast_to(self.mean, (agents, self.dim))
        if self.mean.shape[0] != agents:
            raise DimensionMismatchError(f"init law has {self.mean.shape[0]} agent means, batch has {agents}")
        return self.mean

    def permuted(self, tau) -> "InitLaw":
        if self.mean.ndim == 1:
            return self
        image = list(getattr(tau, "image", tau))
        return InitLaw(self.mean[image], self.cov)

    def sample(self, noise, reps) -> np.ndarray:
        """Initial states [len(reps), N, d] drawn from the INIT substreams of ``noise``."""
        reps = np.asarray(reps)
        means = self.agent_means(noise.agents)
        out = np.broadcast_to(means, (len(reps), noise.agents, self.dim)).copy()
        chol = self.chol
        if chol is not None:
            z = noise.init_normals(reps, self.dim)
            out = out + apply_matrix(chol, z)
        return out
