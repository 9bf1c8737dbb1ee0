"""Experiment configuration: JSON text, validated with line-numbered errors."""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field

from ..errors import ParseError, SemanticError

TAGS = (
    "perm-invariance", "symmetrize", "converge-N", "epsilon-gap", "girsanov-check", "tv-bound",
    "lqg-validate", "martingale", "mixture-linearity",
)
DEFAULT_M = 10_000
DEFAULT_K = 100
KNOWN_KEYS = {
    "experiment", "seed", "M", "grid", "N", "N_schedule", "dynamics", "cost", "policy", "law", "init",
    "lqg", "params", "output", "description",
}
BOUNDED_TAGS = ("girsanov-check",)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    M: int
    T: float
    K: int
    N: int | None = None
    N_schedule: tuple[int, ...] | None = None
    dynamics: dict | None = None
    cost: dict | None = None
    policy: dict | None = None
    law: dict | None = None
    init: dict | None = None
    lqg: dict | None = None
    params: dict = field(default_factory=dict)
    output: str | None = None

    def normalized(self) -> dict:
        out = {
            "experiment": self.experiment, "seed": self.seed, "M": self.M,
            "grid": {"T": self.T, "K": self.K},
        }
        for key in ("N", "dynamics", "cost", "policy", "law", "init", "lqg"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        if self.N_schedule is not None:
            out["N_schedule"] = list(self.N_schedule)
        out["params"] = self.params
        return out

    @property
    def digest(self) -> str:
        text = json.dumps(self.normalized(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        data = copy.deepcopy(self.__dict__)
        data["seed"] = int(seed)
        return ExperimentConfig(**data)


def _line_of(text: str, key: str) -> int:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else 1


def validate_config(text: str, seed_override: int | None = None) -> ExperimentConfig:
    """Parse and cross-check a configuration, applying defaults (M = 10^4, K = 100)."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError([(exc.lineno, f"invalid JSON: {exc.msg} (column {exc.colno})")]) from None
    if not isinstance(raw, dict):
        raise ParseError([(1, "configuration must be a JSON object")])
    errors: list[tuple[int, str]] = []

    def err(key, msg):
        errors.append((_line_of(text, key), msg))

    for key in raw:
        if key not in KNOWN_KEYS:
            err(key, f"unknown field {key!r}")
    tag = raw.get("experiment")
    if tag is None:
        errors.append((1, "missing required field 'experiment'"))
    elif tag not in TAGS:
        err("experiment", f"unknown experiment {tag!r}; expected one of {', '.join(TAGS)}")
    seed = raw.get("seed", seed_override)
    if seed_override is not None:
        seed = seed_override
    if seed is None:
        errors.append((1, "missing required field 'seed' (no default seed is used)"))
    elif not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        err("seed", "field 'seed' must be a nonnegative integer")
    M = raw.get("M", DEFAULT_M)
    if not isinstance(M, int) or isinstance(M, bool) or M < 1:
        err("M", "field 'M' must be a positive integer")
    grid = raw.get("grid", {})
    if not isinstance(grid, dict):
        err("grid", "field 'grid' must be an object with T and K")
        grid = {}
    T = grid.get("T", 1.0)
    K = grid.get("K", DEFAULT_K)
    if not isinstance(T, (int, float)) or T <= 0:
        err("grid", "grid.T must be a positive number")
    if not isinstance(K, int) or isinstance(K, bool) or K < 1:
        err("grid", "grid.K must be a positive integer")
    N = raw.get("N")
    if N is not None and (not isinstance(N, int) or N < 1):
        err("N", "field 'N' must be a positive integer")
    sched = raw.get("N_schedule")
    if sched is not None:
        if (not isinstance(sched, list) or not sched or not all(isinstance(n, int) and n >= 1 for n in sched)
                or any(b <= a for a, b in zip(sched, sched[1:]))):
            err("N_schedule", "field 'N_schedule' must be an increasing list of positive integers")
    dyn = raw.get("dynamics")
    if dyn is not None:
        from ..sde.registry import REGISTRY

        if not isinstance(dyn, dict) or dyn.get("name") not in REGISTRY:
            err("dynamics", f"dynamics.name must be one of {sorted(REGISTRY)}")
    cost = raw.get("cost")
    if cost is not None:
        if not isinstance(cost, dict) or cost.get("form") not in ("mean-field", "lqg"):
            err("cost", "cost.form must be 'mean-field' or 'lqg'")
        elif cost["form"] == "mean-field" and "expr" not in cost:
            err("cost", "mean-field cost needs an 'expr'")
    if tag in BOUNDED_TAGS:
        bound = cost.get("bound") if isinstance(cost, dict) else None
        if not isinstance(bound, (int, float)) or bound != bound or bound in (float("inf"),):
            err("cost" if cost is not None else "experiment",
                f"{tag} requires a cost with a declared uniform bound ('bound'): the change-of-measure "
                "consistency check is only valid for uniformly bounded costs")
    params = raw.get("params", {})
    if not isinstance(params, dict):
        err("params", "field 'params' must be an object")
        params = {}
    if errors:
        raise SemanticError(sorted(errors))
    return ExperimentConfig(
        experiment=tag, seed=int(seed), M=int(M), T=float(T), K=int(K), N=N,
        N_schedule=tuple(sched) if sched is not None else None, dynamics=dyn, cost=cost,
        policy=raw.get("policy"), law=raw.get("law"), init=raw.get("init"), lqg=raw.get("lqg"),
        params=params, output=raw.get("output"),
    )
