"""Built-in dynamics families, selectable by name."""

from __future__ import annotations

import numpy as np

from .dynamics import Mode, TeamDynamics, apply_matrix
from .expr import Expression


def _mean(measure):
    return None if measure is None else measure.mean()


def ou(mode=Mode.DECOUPLED, theta=1.0, mu=0.0, sigma=1.0, gain=0.0, box=(-1e3, 1e3), **_):
    """dX = (theta (mu - X) + gain u) dt + sigma dW, scalar."""
    def core(t, x, u):
        return theta * (mu - x) + gain * u

    return _wrap("ou", core, sigma, 1, 1, box, mode,
                 dict(theta=theta, mu=mu, sigma=sigma, gain=gain))


def lqg_linear(mode=Mode.DECOUPLED, A=0.0, B=1.0, sigma=1.0, C=0.0, box=(-1e3, 1e3), **_):
    """dX = (A X + B u + C mean_x) dt + sigma dW; C only in measure modes."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    d, m = B.shape
    if C.shape == (1, 1) and d > 1:
        C = C[0, 0] * np.eye(d)
    params = dict(A=A.tolist(), B=B.tolist(), C=C.tolist(), sigma=np.asarray(sigma).tolist())
    if Mode(mode) is Mode.DECOUPLED:
        if np.any(C):
            raise ValueError("mean coupling needs coupled or mean-field mode")
        return TeamDynamics(d, m, [box] * m, lambda t, x, u: apply_matrix(A, x) + apply_matrix(B, u),
                            sigma, Mode.DECOUPLED, "lqg-linear", params)

    def drift(t, x, u, mx, mu):
        out = apply_matrix(A, x) + apply_matrix(B, u)
        if np.any(C):
            out = out + apply_matrix(C, mx.mean())
        return out

    return TeamDynamics(d, m, [box] * m, drift, sigma, mode, "lqg-linear", params)


def mf_attraction(mode=Mode.COUPLED, kappa=1.0, gain=1.0, sigma=1.0, box=(-1.0, 1.0), **_):
    """dX = (kappa tanh(mean_x - X) + gain u) dt + sigma dW, scalar; bounded drift."""
    def drift(t, x, u, mx, mu):
        return kappa * np.tanh(mx.mean() - x) + gain * u

    return TeamDynamics(1, 1, [box], drift, sigma, mode, "mf-attraction",
                        dict(kappa=kappa, gain=gain, sigma=sigma))


def from_expression(expr: str, mode=Mode.DECOUPLED, sigma=1.0, state_dim=1, action_dim=1,
                    box=(-1e3, 1e3), params=None, **_):
    e = Expression(expr, params)
    mode = Mode(mode)
    if mode is Mode.DECOUPLED:
        if e.uses_measures:
            raise ValueError("mean_x / mean_u need coupled or mean-field mode")
        drift = lambda t, x, u: e(t=t, x=x, u=u)  # noqa: E731
    else:
        def drift(t, x, u, mx, mu):
            return e(t=t, x=x, u=u, mean_x=mx.mean(), mean_u=mu.mean())
    return TeamDynamics(state_dim, action_dim, [box] * action_dim, drift, sigma, mode, "expr",
                        dict(expr=expr, params=dict(params or {})))


def _wrap(name, core, sigma, d, m, box, mode, params):
    mode = Mode(mode)
    if mode is Mode.DECOUPLED:
        return TeamDynamics(d, m, [box] * m, core, sigma, mode, name, params)
    return TeamDynamics(d, m, [box] * m, lambda t, x, u, mx, mu: core(t, x, u), sigma, mode, name, params)


REGISTRY = {
    "ou": ou,
    "lqg-linear": lqg_linear,
    "mf-attraction": mf_attraction,
    "expr": from_expression,
}


def make_dynamics(name: str, **params) -> TeamDynamics:
    try:
        builder = REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown dynamics {name!r}; choose from {sorted(REGISTRY)}") from None
    return builder(**params)
