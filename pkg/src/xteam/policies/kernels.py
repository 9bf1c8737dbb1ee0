"""Single-agent policy kernels.

Every policy maps a batch of own states ``x`` [..., n, d] at grid step ``k``
to actions [..., n, m]. Randomized policies consume one externally supplied
uniform per (agent, step); no policy holds RNG state.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.special import ndtri

from ..errors import DimensionMismatchError, UnaveragableError
from ..sde.dynamics import apply_matrix


@dataclass(frozen=True)
class History:
    """Own-information available to wide-sense controls: initial state and driving increments."""

    x0: np.ndarray
    increments: np.ndarray


def _bin_index(edges: np.ndarray, values) -> np.ndarray:
    idx = np.searchsorted(edges[1:-1], values, side="right")
    return np.asarray(idx)


def _tolist(a) -> list:
    return np.asarray(a, dtype=float).tolist()


class Policy:
    """Base class. Subclasses implement :meth:`actions` and :meth:`to_dict`."""

    randomized = False
    open_loop = False
    needs_history = False
    action_dim: int

    def actions(self, k: int, t: float, x: np.ndarray, uniforms=None, history=None) -> np.ndarray:
        raise NotImplementedError

    def open_loop_actions(self, x0: np.ndarray, increments: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError(f"{type(self).__name__} has no text serialization")

    @cached_property
    def fingerprint(self) -> str:
        try:
            payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        except NotImplementedError:
            payload = f"{type(self).__name__}@{id(self)}"
        return hashlib.sha256(payload.encode()).hexdigest()

    def __eq__(self, other) -> bool:
        return isinstance(other, Policy) and self.fingerprint == other.fingerprint

    def __hash__(self) -> int:
        return hash(self.fingerprint)

    def __repr__(self) -> str:
        return f"{type(self).__name__}<{self.fingerprint[:10]}>"


class LinearFeedback(Policy):
    """u = K_b x + c_b with (K_b, c_b) piecewise constant over time bins ``t_edges``."""

    def __init__(self, K, offset=None, t_edges=None, clip=None):
        K = np.asarray(K, dtype=float)
        if K.ndim == 0:
            K = K.reshape(1, 1, 1)
        elif K.ndim == 1:
            K = K.reshape(1, 1, -1)
        elif K.ndim == 2:
            K = K[None]
        self.K = K
        B, m, _ = K.shape
        off = np.zeros((B, m)) if offset is None else np.asarray(offset, dtype=float)
        self.offset = np.broadcast_to(off.reshape(-1, m) if off.ndim else off, (B, m)).copy()
        if t_edges is None:
            if B != 1:
                raise DimensionMismatchError("several gain bins need t_edges")
            t_edges = [0.0, np.inf]
        self.t_edges = np.asarray(t_edges, dtype=float)
        if len(self.t_edges) != B + 1:
            raise DimensionMismatchError(f"{B} gain bins need {B + 1} t_edges")
        self.clip = None if clip is None else np.asarray(clip, dtype=float).reshape(m, 2)
        self.action_dim = m

    def gain_at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        b = int(_bin_index(self.t_edges, t))
        return self.K[b], self.offset[b]

    def actions(self, k, t, x, uniforms=None, history=None):
        K, c = self.gain_at(t)
        u = apply_matrix(K, x) + c
        if self.clip is not None:
            u = np.clip(u, self.clip[:, 0], self.clip[:, 1])
        return u

    def to_dict(self):
        out = {"type": "linear", "K": _tolist(self.K[0] if len(self.K) == 1 else self.K)}
        if np.any(self.offset):
            out["offset"] = _tolist(self.offset[0] if len(self.K) == 1 else self.offset)
        if len(self.K) > 1:
            out["t_edges"] = _tolist(self.t_edges)
        if self.clip is not None:
            out["clip"] = _tolist(self.clip)
        return out


class GridPolicy(Policy):
    """Lookup table over (time bin, scalar state bin); ``table`` has shape [n_t, n_x, m]."""

    def __init__(self, t_bins, x_bins, table):
        self.t_bins = np.asarray(t_bins, dtype=float)
        self.x_bins = np.asarray(x_bins, dtype=float)
        table = np.asarray(table, dtype=float)
        if table.ndim == 2:
            table = table[..., None]
        if table.shape[:2] != (len(self.t_bins) - 1, len(self.x_bins) - 1):
            raise DimensionMismatchError(
                f"table shape {table.shape} does not match {len(self.t_bins) - 1} x {len(self.x_bins) - 1} bins"
            )
        self.table = table
        self.action_dim = table.shape[-1]

    def actions(self, k, t, x, uniforms=None, history=None):
        row = self.table[int(_bin_index(self.t_bins, t))]
        return row[_bin_index(self.x_bins, x[..., 0])]

    def to_dict(self):
        return {
            "type": "grid",
            "t_bins": _tolist(self.t_bins),
            "x_bins": _tolist(self.x_bins),
            "table": _tolist(self.table),
        }


class CategoricalGridPolicy(Policy):
    """Randomized Markov kernel: probabilities over ``atoms`` [A, m] per (time bin, state bin)."""

    randomized = True

    def __init__(self, t_bins, x_bins, atoms, table):
        self.t_bins = np.asarray(t_bins, dtype=float)
        self.x_bins = np.asarray(x_bins, dtype=float)
        atoms = np.asarray(atoms, dtype=float)
        self.atoms = atoms[:, None] if atoms.ndim == 1 else atoms
        table = np.asarray(table, dtype=float)
        if table.shape != (len(self.t_bins) - 1, len(self.x_bins) - 1, len(self.atoms)):
            raise DimensionMismatchError(f"probability table has shape {table.shape}")
        if np.any(table < 0) or np.any(np.abs(table.sum(-1) - 1.0) > 1e-12):
            raise ValueError("probability vectors must be nonnegative and sum to 1 within 1e-12")
        self.table = table
        self.cum = np.cumsum(table, axis=-1)
        self.cum[..., -1] = 1.0
        self.action_dim = self.atoms.shape[1]

    @classmethod
    def constant(cls, atoms, probs) -> "CategoricalGridPolicy":
        probs = np.asarray(probs, dtype=float)
        return cls([0.0, np.inf], [-np.inf, np.inf], atoms, probs[None, None])

    def actions(self, k, t, x, uniforms=None, history=None):
        if uniforms is None:
            raise ValueError("randomized policy needs uniforms")
        cum = self.cum[int(_bin_index(self.t_bins, t))][_bin_index(self.x_bins, x[..., 0])]
        choice = np.sum(cum <= np.asarray(uniforms)[..., None], axis=-1)
        choice = np.minimum(choice, len(self.atoms) - 1)
        return self.atoms[choice]

    def to_dict(self):
        return {
            "type": "categorical-grid",
            "t_bins": _tolist(self.t_bins),
            "x_bins": _tolist(self.x_bins),
            "atoms": _tolist(self.atoms),
            "table": _tolist(self.table),
        }


class ClippedGaussianPolicy(Policy):
    """u = clip(K x + c + s * Z, box) with Z standard normal from the agent's uniform."""

    randomized = True

    def __init__(self, K, offset, std, box):
        self.mean_policy = LinearFeedback(K, offset)
        self.std = np.broadcast_to(np.asarray(std, dtype=float), (self.mean_policy.action_dim,)).copy()
        self.box = np.asarray(box, dtype=float).reshape(-1, 2)
        self.action_dim = self.mean_policy.action_dim
        if self.action_dim != 1 and np.any(self.std > 0):
            raise DimensionMismatchError("clipped Gaussian noise supports scalar actions only")

    def actions(self, k, t, x, uniforms=None, history=None):
        mu = self.mean_policy.actions(k, t, x)
        if uniforms is None:
            raise ValueError("randomized policy needs uniforms")
        z = ndtri(np.asarray(uniforms))[..., None]
        return np.clip(mu + self.std * z, self.box[:, 0], self.box[:, 1])

    def to_dict(self):
        base = self.mean_policy.to_dict()
        return {
            "type": "clipped-gaussian",
            "K": base["K"],
            "offset": _tolist(self.mean_policy.offset[0]),
            "std": _tolist(self.std),
            "box": _tolist(self.box),
        }


class WideSenseControl(Policy):
    """Relaxed control on discretized actions.

    ``kernel(k, x0, past)`` returns probabilities [..., n, A] over ``atoms``
    given the agent's own initial state and its increments strictly before
    step k; the structure makes dependence on future noise impossible.
    """

    randomized = True
    needs_history = True

    def __init__(self, atoms, kernel: Callable, label: str):
        atoms = np.asarray(atoms, dtype=float)
        self.atoms = atoms[:, None] if atoms.ndim == 1 else atoms
        self.kernel = kernel
        self.label = label
        self.action_dim = self.atoms.shape[1]

    def probabilities(self, k, history: History) -> np.ndarray:
        probs = np.asarray(self.kernel(k, history.x0, history.increments[..., :k, :]), dtype=float)
        if np.any(probs < 0) or np.any(np.abs(probs.sum(-1) - 1.0) > 1e-12):
            raise ValueError(f"wide-sense control {self.label!r} returned an invalid distribution")
        return probs

    def actions(self, k, t, x, uniforms=None, history=None):
        if history is None or uniforms is None:
            raise ValueError("wide-sense control needs own history and uniforms")
        cum = np.cumsum(self.probabilities(k, history), axis=-1)
        choice = np.minimum(np.sum(cum <= np.asarray(uniforms)[..., None], axis=-1), len(self.atoms) - 1)
        return self.atoms[choice]

    def to_dict(self):
        return {"type": "wide-sense", "label": self.label, "atoms": _tolist(self.atoms)}


class NoiseFeedbackPolicy(Policy):
    """Linear in own primitives: u_k = ubar_k + G_k (x0 - x0_mean) + sum_{l<k} H_{k,l} dW_l.

    ``ubar`` [K, m], ``G`` [K, m, d], ``H`` [K, m, K, d]; entries of H with
    l >= k are ignored. Actions are precomputed for a whole path.
    """

    open_loop = True

    def __init__(self, ubar, G, H, x0_mean):
        self.ubar = np.asarray(ubar, dtype=float)
        K, m = self.ubar.shape
        self.G = np.asarray(G, dtype=float)
        self.x0_mean = np.atleast_1d(np.asarray(x0_mean, dtype=float))
        d = self.x0_mean.shape[0]
        H = np.asarray(H, dtype=float).reshape(K, m, K, d).copy()
        mask = np.tril(np.ones((K, K)), -1).astype(bool)
        H[~np.broadcast_to(mask[:, None, :, None], H.shape)] = 0.0
        self.H = H
        self.action_dim = m
        self.steps = K

    def open_loop_actions(self, x0, increments):
        lead = x0.shape[:-1]
        K, m, d = self.steps, self.action_dim, self.x0_mean.shape[0]
        if increments.shape[-2:] != (K, d):
            raise DimensionMismatchError(f"policy built for {K} steps, path has {increments.shape[-2]}")
        dev = (x0 - self.x0_mean).reshape(-1, d)
        w = increments.reshape(-1, K * d)
        out = self.ubar[None] + np.einsum("kmd,rd->rkm", self.G, dev)
        out += (w @ self.H.reshape(K * m, K * d).T).reshape(-1, K, m)
        return out.reshape(*lead, K, m)

    def actions(self, k, t, x, uniforms=None, history=None):
        if history is None:
            raise ValueError("noise-feedback policy needs own history")
        return self.open_loop_actions(history.x0, history.increments)[..., k, :]

    def to_dict(self):
        return {
            "type": "noise-feedback",
            "ubar": _tolist(self.ubar),
            "G": _tolist(self.G),
            "H": _tolist(self.H),
            "x0_mean": _tolist(self.x0_mean),
        }


class AveragedPolicy(Policy):
    """Pointwise average (1/n) sum_i gamma_i(t, x) of deterministic kernels."""

    def __init__(self, policies):
        self.policies = tuple(policies)
        if any(p.randomized or p.open_loop for p in self.policies):
            raise UnaveragableError("only deterministic Markov kernels can be averaged pointwise")
        self.action_dim = self.policies[0].action_dim

    def actions(self, k, t, x, uniforms=None, history=None):
        out = self.policies[0].actions(k, t, x)
        for p in self.policies[1:]:
            out = out + p.actions(k, t, x)
        return out / len(self.policies)

    def to_dict(self):
        return {"type": "average", "of": [p.to_dict() for p in self.policies]}


def act(policy: Policy, t: float, x, substream=None, k: int = 0) -> np.ndarray:
    """Single-agent action at state ``x`` [d]; randomized kernels draw from ``substream``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise ValueError("state must be finite")
    uniforms = None
    if policy.randomized:
        if substream is None:
            raise ValueError("randomized policy needs a substream")
        uniforms = np.array([[substream.uniform(k)]])
    return policy.actions(k, t, x[None, None, :], uniforms)[0, 0]


def policy_from_dict(spec: dict) -> Policy:
    kind = spec.get("type")
    if kind == "linear":
        return LinearFeedback(spec["K"], spec.get("offset"), spec.get("t_edges"), spec.get("clip"))
    if kind == "grid":
        return GridPolicy(spec["t_bins"], spec["x_bins"], spec["table"])
    if kind == "categorical-grid":
        return CategoricalGridPolicy(
            spec.get("t_bins", [0.0, np.inf]), spec.get("x_bins", [-np.inf, np.inf]), spec["atoms"], spec["table"]
        )
    if kind == "clipped-gaussian":
        return ClippedGaussianPolicy(spec["K"], spec.get("offset", 0.0), spec["std"], spec["box"])
    if kind == "noise-feedback":
        return NoiseFeedbackPolicy(spec["ubar"], spec["G"], spec["H"], spec["x0_mean"])
    if kind == "average":
        return AveragedPolicy([policy_from_dict(p) for p in spec["of"]])
    raise ValueError(f"unknown policy type {kind!r}")
