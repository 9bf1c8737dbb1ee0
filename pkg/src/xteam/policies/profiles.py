"""Policy profiles, permutations of agent slots, and symmetrization."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..errors import SizeMismatchError, UnaveragableError
from .kernels import AveragedPolicy, GridPolicy, LinearFeedback, NoiseFeedbackPolicy, Policy

EXACT_PERMUTATION_LIMIT = 8


@dataclass(frozen=True)
class Permutation:
    """Bijection i -> image[i] on {0, ..., N-1}."""

    image: tuple[int, ...]

    def __post_init__(self):
        image = tuple(int(i) for i in self.image)
        if sorted(image) != list(range(len(image))):
            raise ValueError(f"not a bijection: {image}")
        object.__setattr__(self, "image", image)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @classmethod
    def all(cls, n: int):
        for image in itertools.permutations(range(n)):
            yield cls(image)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "Permutation":
        return cls(tuple(rng.permutation(n).tolist()))

    def __len__(self) -> int:
        return len(self.image)

    def __call__(self, i: int) -> int:
        return self.image[i]

    def compose(self, other: "Permutation") -> "Permutation":
        """(self o other)(i) = self(other(i))."""
        return Permutation(tuple(self.image[j] for j in other.image))

    def inverse(self) -> "Permutation":
        inv = [0] * len(self.image)
        for i, j in enumerate(self.image):
            inv[j] = i
        return Permutation(tuple(inv))


def as_permutation(tau) -> Permutation:
    return tau if isinstance(tau, Permutation) else Permutation(tuple(tau))


class PolicyProfile:
    """N-tuple of per-agent policies."""

    __slots__ = ("agents",)

    def __init__(self, agents):
        agents = tuple(agents)
        if not agents:
            raise ValueError("a profile needs at least one agent")
        if not all(isinstance(p, Policy) for p in agents):
            raise TypeError("profile entries must be Policy instances")
        self.agents = agents

    @classmethod
    def symmetric_of(cls, policy: Policy, n: int) -> "PolicyProfile":
        return cls((policy,) * n)

    def __len__(self) -> int:
        return len(self.agents)

    def __getitem__(self, i):
        return self.agents[i]

    def __iter__(self):
        return iter(self.agents)

    @property
    def key(self) -> tuple[str, ...]:
        return tuple(p.fingerprint for p in self.agents)

    @property
    def symmetric(self) -> bool:
        return len(set(self.key)) == 1

    @property
    def action_dim(self) -> int:
        return self.agents[0].action_dim

    def groups(self) -> list[tuple[Policy, np.ndarray]]:
        """Agents sharing a policy, in order of first appearance."""
        order: dict[str, list[int]] = {}
        first: dict[str, Policy] = {}
        for i, p in enumerate(self.agents):
            order.setdefault(p.fingerprint, []).append(i)
            first.setdefault(p.fingerprint, p)
        return [(first[f], np.asarray(idx)) for f, idx in order.items()]

    def __eq__(self, other) -> bool:
        return isinstance(other, PolicyProfile) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __repr__(self) -> str:
        return f"PolicyProfile({list(self.agents)})"

    def to_list(self) -> list[dict]:
        return [p.to_dict() for p in self.agents]


def permute_profile(profile: PolicyProfile, tau) -> PolicyProfile:
    """Agent i of the result holds policy tau(i) of ``profile``.

    Composition rule: permute(permute(p, tau), rho) == permute(p, tau.compose(rho)).
    """
    tau = as_permutation(tau)
    if len(tau) != len(profile):
        raise SizeMismatchError(f"permutation of size {len(tau)} applied to profile of size {len(profile)}")
    return PolicyProfile(profile.agents[j] for j in tau.image)


def average_policies(policies) -> Policy:
    """Pointwise average of deterministic kernels, in closed form when the family allows it."""
    policies = list(policies)
    if any(p.randomized for p in policies):
        raise UnaveragableError(
            "randomized kernels cannot be averaged pointwise; use the mixture-law symmetrization"
        )
    if len({p.fingerprint for p in policies}) == 1:
        return policies[0]
    n = len(policies)
    if all(isinstance(p, LinearFeedback) and p.clip is None for p in policies) and all(
        np.array_equal(p.t_edges, policies[0].t_edges) for p in policies
    ):
        K, off = policies[0].K.copy(), policies[0].offset.copy()
        for p in policies[1:]:
            K, off = K + p.K, off + p.offset
        return LinearFeedback(K / n, off / n, policies[0].t_edges if len(K) > 1 else None)
    if all(isinstance(p, NoiseFeedbackPolicy) for p in policies):
        parts = [(p.ubar, p.G, p.H, p.x0_mean) for p in policies]
        if any(not np.array_equal(q[3], parts[0][3]) for q in parts):
            raise UnaveragableError("noise-feedback rules centred at different initial means")
        acc = [a.copy() for a in parts[0][:3]]
        for q in parts[1:]:
            acc = [a + b for a, b in zip(acc, q[:3])]
        return NoiseFeedbackPolicy(acc[0] / n, acc[1] / n, acc[2] / n, parts[0][3])
    if all(isinstance(p, GridPolicy) for p in policies) and all(
        np.array_equal(p.t_bins, policies[0].t_bins) and np.array_equal(p.x_bins, policies[0].x_bins)
        for p in policies
    ):
        table = policies[0].table.copy()
        for p in policies[1:]:
            table = table + p.table
        return GridPolicy(policies[0].t_bins, policies[0].x_bins, table / n)
    return AveragedPolicy(policies)


def symmetrize_profile(profile: PolicyProfile, mode: str = "auto", samples: int = 4096, seed: int = 0):
    """Symmetrize a profile.

    ``convex``: the averaged kernel (1/N) sum_i gamma^i, returned as one policy.
    ``general``: the law placing equal mass on every permuted profile; exact
    for N <= 8, otherwise ``samples`` uniformly drawn permutations.
    ``auto`` picks convex for deterministic kernels and general otherwise.
    """
    from .laws import ProfileLaw

    if mode == "auto":
        mode = "general" if any(p.randomized for p in profile) else "convex"
    if mode == "convex":
        return average_policies(profile.agents)
    if mode != "general":
        raise ValueError(f"unknown symmetrization mode {mode!r}")
    n = len(profile)
    if n <= EXACT_PERMUTATION_LIMIT:
        perms = list(Permutation.all(n))
        w = 1.0 / math.factorial(n)
        return ProfileLaw([(permute_profile(profile, t), w) for t in perms])
    rng = np.random.default_rng(seed)
    perms = [Permutation.random(n, rng) for _ in range(samples)]
    law = ProfileLaw([(permute_profile(profile, t), 1.0 / samples) for t in perms])
    return law.with_mc_error(1.0 / math.sqrt(samples))
