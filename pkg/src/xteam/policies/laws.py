"""Finite probability laws over policy profiles and the operations on them."""

from __future__ import annotations

import itertools
import math
from collections import Counter

import numpy as np

from ..errors import ExplosionGuardError, SizeMismatchError
from .kernels import Policy, policy_from_dict
from .profiles import EXACT_PERMUTATION_LIMIT, Permutation, PolicyProfile, permute_profile

EXACT_TUPLE_LIMIT = 10**6
WEIGHT_TOL = 1e-12
EQUALITY_TOL = 1e-9


class ProfileLaw:
    """Discrete law sum_a w_a delta_{profile_a}.

    ``mixture`` optionally records common-randomness structure: a list of
    (weight_z, marginal_z) where marginal_z is a list of (policy, prob) and
    the component is the i.i.d. product of marginal_z over agents.
    ``mc_error`` is set when atoms come from sampling rather than enumeration.
    """

    def __init__(self, atoms, mixture=None, mc_error: float | None = None):
        atoms = [(p if isinstance(p, PolicyProfile) else PolicyProfile(p), float(w)) for p, w in atoms]
        if not atoms:
            raise ValueError("a profile law needs at least one atom")
        sizes = {len(p) for p, _ in atoms}
        if len(sizes) != 1:
            raise SizeMismatchError(f"atoms have different agent counts {sorted(sizes)}")
        w = np.array([w for _, w in atoms])
        if np.any(w < 0) or abs(math.fsum(w) - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights must be nonnegative and sum to 1 within {WEIGHT_TOL}")
        self.atoms = tuple(atoms)
        self.mixture = mixture
        self.mc_error = mc_error

    # construction
    @classmethod
    def point(cls, profile: PolicyProfile) -> "ProfileLaw":
        return cls([(profile, 1.0)])

    @classmethod
    def iid(cls, marginal, n: int) -> "ProfileLaw":
        """Product law: every agent draws independently from ``marginal`` [(policy, prob), ...]."""
        return cls.common_randomness([(1.0, marginal)], n)

    @classmethod
    def common_randomness(cls, components, n: int) -> "ProfileLaw":
        """Mixture over z of i.i.d. product laws; exact enumeration of the support."""
        total: dict[tuple, float] = {}
        lookup: dict[str, Policy] = {}
        support = sum(len(m) ** n for _, m in components)
        if support > EXACT_TUPLE_LIMIT:
            raise ExplosionGuardError(f"product support of size {support} exceeds {EXACT_TUPLE_LIMIT}")
        for wz, marginal in components:
            for p, _ in marginal:
                lookup[p.fingerprint] = p
            for combo in itertools.product(marginal, repeat=n):
                key = tuple(p.fingerprint for p, _ in combo)
                total.setdefault(key, [])
                total[key].append(wz * math.prod(q for _, q in combo))
        atoms = [(PolicyProfile(lookup[f] for f in key), math.fsum(ws)) for key, ws in total.items()]
        atoms = _renormalize(atoms)
        return cls(atoms, mixture=[(float(w), list(m)) for w, m in components]).canonical()

    @classmethod
    def from_dict(cls, spec: dict) -> "ProfileLaw":
        return cls(
            [(PolicyProfile(policy_from_dict(p) for p in a["profile"]), a["weight"]) for a in spec["atoms"]]
        )

    def to_dict(self) -> dict:
        return {"atoms": [{"weight": w, "profile": p.to_list()} for p, w in self.atoms]}

    def with_mc_error(self, err: float) -> "ProfileLaw":
        return ProfileLaw(self.atoms, self.mixture, err)

    # structure
    @property
    def n_agents(self) -> int:
        return len(self.atoms[0][0])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms])

    @property
    def profiles(self) -> list[PolicyProfile]:
        return [p for p, _ in self.atoms]

    def as_dict(self) -> dict[tuple, float]:
        """Profile key -> total weight, merging duplicates."""
        acc: dict[tuple, list] = {}
        for p, w in self.atoms:
            acc.setdefault(p.key, []).append(w)
        return {k: math.fsum(v) for k, v in acc.items()}

    def canonical(self) -> "ProfileLaw":
        """Merge duplicate profiles and sort atoms by fingerprint."""
        lookup = {p.key: p for p, _ in self.atoms}
        merged = self.as_dict()
        atoms = [(lookup[k], merged[k]) for k in sorted(merged)]
        return ProfileLaw(atoms, self.mixture, self.mc_error)

    def equals(self, other: "ProfileLaw", tol: float = EQUALITY_TOL) -> bool:
        a, b = self.as_dict(), other.as_dict()
        keys = set(a) | set(b)
        return all(abs(a.get(k, 0.0) - b.get(k, 0.0)) <= tol for k in keys)

    def permuted(self, tau) -> "ProfileLaw":
        """Image law under relabeling every atom by ``tau``."""
        return ProfileLaw([(permute_profile(p, tau), w) for p, w in self.atoms], None, self.mc_error)

    def marginal(self, m: int) -> "ProfileLaw":
        """Law of the first ``m`` agent slots."""
        if not 1 <= m <= self.n_agents:
            raise SizeMismatchError(f"cannot take a {m}-slot marginal of a {self.n_agents}-agent law")
        if m == self.n_agents:
            return self.canonical()
        return ProfileLaw([(PolicyProfile(p.agents[:m]), w) for p, w in self.atoms], None, self.mc_error).canonical()

    def single_marginal(self) -> list[tuple[Policy, float]]:
        """Uniform-slot marginal: (1/N) sum_i law of slot i."""
        acc: dict[str, list] = {}
        lookup: dict[str, Policy] = {}
        n = self.n_agents
        for p, w in self.atoms:
            for q in p:
                acc.setdefault(q.fingerprint, []).append(w / n)
                lookup[q.fingerprint] = q
        return [(lookup[f], math.fsum(acc[f])) for f in sorted(acc)]

    def __len__(self) -> int:
        return len(self.atoms)

    def __repr__(self) -> str:
        return f"ProfileLaw(N={self.n_agents}, atoms={len(self.atoms)})"


def _renormalize(atoms):
    total = math.fsum(w for _, w in atoms)
    return [(p, w / total) for p, w in atoms]


def _distinct_arrangements(items: tuple):
    """Distinct orderings of a multiset, in lexicographic order of first-occurrence labels."""
    counts = Counter(items)
    keys = sorted(counts)
    n = len(items)
    out: list = []

    def rec(prefix):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for k in keys:
            if counts[k]:
                counts[k] -= 1
                prefix.append(k)
                rec(prefix)
                prefix.pop()
                counts[k] += 1

    rec([])
    return out


def exchangeable_average(law: ProfileLaw) -> ProfileLaw:
    """(1/N!) sum_tau law o tau^{-1}: the uniform mixture over relabelings of every atom.

    Each distinct arrangement of an atom's multiset of policies is reached by
    the same number of permutations, so the mixture is uniform over them.
    """
    n = len(law.atoms[0][0])
    acc: dict[tuple, list] = {}
    lookup: dict[str, Policy] = {}
    for profile, w in law.atoms:
        for q in profile:
            lookup[q.fingerprint] = q
        count = math.factorial(n) // math.prod(math.factorial(c) for c in Counter(profile.key).values())
        if count > EXACT_TUPLE_LIMIT:
            raise ExplosionGuardError(f"{count} distinct arrangements exceed {EXACT_TUPLE_LIMIT}")
        for arr in _distinct_arrangements(profile.key):
            acc.setdefault(arr, []).append(w / count)
    atoms = [(PolicyProfile(lookup[f] for f in k), math.fsum(v)) for k, v in acc.items()]
    return ProfileLaw(_renormalize(atoms)).canonical()


def iid_index_extension(
    law: ProfileLaw, m: int, mode: str = "auto", samples: int = 200_000, seed: int = 0
) -> ProfileLaw:
    """Law of (gamma^{I_1}, ..., gamma^{I_m}) with I_k i.i.d. uniform on the N slots.

    Exact when N**m <= 10**6 (index tuples are grouped by the policies they
    select); otherwise ``mode='auto'`` falls back to ``samples`` Monte Carlo
    draws and records the sampling error, and ``mode='exact'`` refuses.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    n = law.n_agents
    exact = n**m <= EXACT_TUPLE_LIMIT
    if mode == "exact" and not exact:
        raise ExplosionGuardError(f"N**m = {n}**{m} exceeds {EXACT_TUPLE_LIMIT}; use sampled mode")
    lookup: dict[str, Policy] = {}
    acc: dict[tuple, list] = {}
    if exact and mode != "mc":
        for profile, w in law.atoms:
            counts = Counter(profile.key)
            for q in profile:
                lookup[q.fingerprint] = q
            support = sorted(counts)
            for combo in itertools.product(support, repeat=m):
                mult = math.prod(counts[f] for f in combo)
                acc.setdefault(combo, []).append(w * mult / n**m)
        atoms = [(PolicyProfile(lookup[f] for f in k), math.fsum(v)) for k, v in acc.items()]
        return ProfileLaw(_renormalize(atoms)).canonical()
    rng = np.random.default_rng(seed)
    atom_idx = rng.choice(len(law.atoms), size=samples, p=law.weights / law.weights.sum())
    slots = rng.integers(0, n, size=(samples, m))
    for a, row in zip(atom_idx, slots):
        profile = law.atoms[a][0]
        key = tuple(profile.agents[i].fingerprint for i in row)
        for i in row:
            lookup[profile.agents[i].fingerprint] = profile.agents[i]
        acc.setdefault(key, []).append(1.0 / samples)
    atoms = [(PolicyProfile(lookup[f] for f in k), math.fsum(v)) for k, v in acc.items()]
    return ProfileLaw(_renormalize(atoms), mc_error=1.0 / math.sqrt(samples)).canonical()


def marginal_tv_gap(law_a: ProfileLaw, law_b: ProfileLaw, m: int) -> float:
    """Total variation 0.5 * sum |P_a - P_b| between the m-slot marginals."""
    if len(law_a) > EXACT_TUPLE_LIMIT or len(law_b) > EXACT_TUPLE_LIMIT:
        raise ExplosionGuardError("marginal support too large for exact total variation")
    a = law_a.marginal(m).as_dict()
    b = law_b.marginal(m).as_dict()
    return 0.5 * math.fsum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in set(a) | set(b))


def is_exchangeable(law: ProfileLaw, mode: str = "exact", samples: int = 256, seed: int = 0,
                    tol: float = EQUALITY_TOL) -> bool:
    """True iff the law equals its image under every permutation (exact) or under ``samples`` random ones."""
    n = law.n_agents
    base = law.as_dict()

    def invariant(tau: Permutation) -> bool:
        img: dict[tuple, float] = {}
        for key, w in base.items():
            k2 = tuple(key[j] for j in tau.image)
            img[k2] = img.get(k2, 0.0) + w
        return all(abs(img.get(k, 0.0) - base.get(k, 0.0)) <= tol for k in set(img) | set(base))

    if mode == "exact":
        if n > EXACT_PERMUTATION_LIMIT:
            raise ExplosionGuardError(f"exact exchangeability check needs N <= {EXACT_PERMUTATION_LIMIT}")
        return all(invariant(t) for t in Permutation.all(n))
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    return all(invariant(Permutation.random(n, rng)) for _ in range(samples))
