"""Independent reference computations used by the tests.

Nothing here imports xteam: every value is derived from closed forms or from
plain loops written separately from the package code.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def ou_moments(theta: float, sigma: float, x0: float, T: float) -> tuple[float, float]:
    """Exact mean and variance of dX = -theta X dt + sigma dW at time T."""
    mean = x0 * math.exp(-theta * T)
    var = sigma**2 * (1 - math.exp(-2 * theta * T)) / (2 * theta)
    return mean, var


def euler_ou_moments(theta: float, sigma: float, x0: float, T: float, K: int) -> tuple[float, float]:
    """Mean and variance of the Euler chain for the same OU process."""
    dt = T / K
    m, v = x0, 0.0
    for _ in range(K):
        m = (1 - theta * dt) * m
        v = (1 - theta * dt) ** 2 * v + sigma**2 * dt
    return m, v


def ou_square_residual_bias(theta: float, sigma: float, x0: float, T: float, K: int) -> float:
    """Exact E[f(x_K) - f(x_0) - sum_k A f(x_k) dt] for f = x^2 on the Euler OU chain.

    With x_{k+1} = (1 - theta dt) x_k + sigma dW each step contributes
    E[x_{k+1}^2 - x_k^2] - (-2 theta E x_k^2 + sigma^2) dt = theta^2 dt^2 E x_k^2.
    """
    dt = T / K
    m, s, total = x0, 0.0, 0.0
    for _ in range(K):
        total += theta**2 * dt**2 * (m * m + s)
        m = (1 - theta * dt) * m
        s = (1 - theta * dt) ** 2 * s + sigma**2 * dt
    return total


def scalar_riccati_cost(a: float, b: float, q: float, r: float, T: float, K: int, x0: float,
                        sigma: float = 0.0, x0_var: float = 0.0) -> float:
    """Optimal cost of the Euler-discretized scalar LQ problem by backward dynamic programming.

    Cost sum_k (q x_k^2 + r u_k^2) dt with x_{k+1} = (1 + a dt) x_k + b dt u_k + sigma dW.
    """
    dt = T / K
    F, G = 1 + a * dt, b * dt
    P, c = 0.0, 0.0
    for _ in range(K):
        S = r * dt + G * P * G
        P_new = q * dt + F * P * F - (F * P * G) ** 2 / S
        c += P * sigma**2 * dt
        P = P_new
    return P * (x0**2 + x0_var) + c


def linear_gain_cost(k: float, r: float, qi: float, qm: float, n: int | None, sigma: float, T: float,
                     K: int, v0: float = 1.0) -> float:
    """Exact E sum_j dt (r u^2 + qi x^2 + qm mean_x^2) under u = k x for n i.i.d. agents, zero mean.

    dx = u dt + sigma dW with X_0 ~ N(0, v0). ``n=None`` drops the mean term (infinite population).
    """
    dt = T / K
    v, total = v0, 0.0
    mean_term = 0.0 if n is None else qm / n
    for _ in range(K):
        total += dt * (r * k * k + qi + mean_term) * v
        v = (1 + k * dt) ** 2 * v + sigma**2 * dt
    return total


def brute_force_marginal(profiles_weights, m: int):
    """Exact m-slot marginal of a law over N-tuples, as a dict of tuples -> Fraction-free floats."""
    out: dict = {}
    for prof, w in profiles_weights:
        key = tuple(prof[:m])
        out[key] = out.get(key, 0.0) + w
    return out


def brute_force_index_extension(profiles_weights, m: int):
    """Law of (p[I_1], ..., p[I_m]) with I uniform on all N^m index tuples, by full enumeration."""
    out: dict = {}
    for prof, w in profiles_weights:
        n = len(prof)
        for idx in itertools.product(range(n), repeat=m):
            key = tuple(prof[i] for i in idx)
            out[key] = out.get(key, 0.0) + w / n**m
    return out


def tv(a: dict, b: dict) -> float:
    return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in set(a) | set(b))


def exact_w2_1d(xs, ys) -> float:
    """W2 between equal-size uniform empirical measures by enumerating every matching."""
    best = math.inf
    for perm in itertools.permutations(range(len(ys))):
        best = min(best, sum((x - ys[p]) ** 2 for x, p in zip(xs, perm)))
    return math.sqrt(best / len(xs))


def exact_fraction_mean(values) -> float:
    return float(sum(Fraction(v) for v in values) / len(values))
