"""Exact quadratic oracle for linear dynamics with quadratic team costs.

The Euler recursion x_{k+1} = (I + A dt) x_k + B dt u_k + sigma dW_k is
unrolled into x = Phi x0 + Psi u + Psi_w dW over states k = 0..K-1, ordered
(agent, step, coordinate). With the left Riemann sum the expected cost is the
quadratic U'M1U + 2U'M2x0 + x0'M3x0 plus primitive-variance terms.

Every agent sees its own initial state and its own increments only. After
expressing u in those primitives, the optimal decentralized rule is linear
and splits into one small least-squares problem per primitive coordinate,
each supported on the actions that observe it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .costs.stage import StageCost, _exchangeable_blocks
from .errors import DimensionMismatchError, NotPositiveDefiniteError, SingularDiffusionError
from .policies.kernels import LinearFeedback, NoiseFeedbackPolicy
from .policies.profiles import PolicyProfile
from .sde.dynamics import InitLaw, Mode, TeamDynamics, apply_matrix
from .sde.grid import TimeGrid


def _sym_psd(M: np.ndarray, name: str, strict: bool) -> None:
    if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise NotPositiveDefiniteError(f"{name} must be symmetric")
    lo = np.linalg.eigvalsh(0.5 * (M + M.T)).min()
    if (strict and lo <= 0) or (not strict and lo < -1e-12 * max(1.0, np.abs(M).max())):
        raise NotPositiveDefiniteError(f"{name} must be positive {'definite' if strict else 'semidefinite'}"
                                       f" (min eigenvalue {lo:.3g})")


@dataclass(frozen=True, eq=False)
class LqgSpec:
    """Linear dynamics shared by N agents with quadratic cost x'Qx + u'Ru on stacked vectors.

    ``sigma`` may be singular (including zero); only :func:`recover_noise`
    needs it invertible. ``x0_mean`` is [d] (i.i.d. agents) or [N, d].
    """

    A: np.ndarray
    B: np.ndarray
    sigma: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    T: float
    N: int
    x0_mean: np.ndarray
    x0_cov: np.ndarray | None = None
    box: float = 1e3

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        d, m = B.shape
        sig = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sig.shape == (1, 1) and d > 1:
            sig = sig[0, 0] * np.eye(d)
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        N = int(self.N)
        if A.shape != (d, d) or sig.shape != (d, d):
            raise DimensionMismatchError(f"A {A.shape}, B {B.shape}, sigma {sig.shape} are inconsistent")
        if Q.shape != (N * d, N * d) or R.shape != (N * m, N * m):
            raise DimensionMismatchError(f"Q {Q.shape} and R {R.shape} do not match N={N}, d={d}, m={m}")
        _sym_psd(Q, "Q", strict=False)
        _sym_psd(R, "R", strict=True)
        mean = np.atleast_1d(np.asarray(self.x0_mean, dtype=float))
        if mean.shape not in ((d,), (N, d)):
            raise DimensionMismatchError(f"x0_mean has shape {mean.shape}")
        cov = self.x0_cov
        if cov is not None:
            cov = np.atleast_2d(np.asarray(cov, dtype=float))
            if cov.shape == (1, 1) and d > 1:
                cov = cov[0, 0] * np.eye(d)
            _sym_psd(cov, "x0_cov", strict=False)
        for k, v in dict(A=A, B=B, sigma=sig, Q=Q, R=R, x0_mean=mean, x0_cov=cov, N=N,
                         T=float(self.T)).items():
            object.__setattr__(self, k, v)

    @classmethod
    def exchangeable(cls, N, A, B, sigma, q_self, q_mean, r, T, x0_mean, x0_cov=None, box=1e3):
        """Q = (1/N) I (x) q_self + (1/N^2) 11' (x) q_mean and R = (1/N) I (x) r.

        Stage cost (1/N) sum_i (x_i' q_self x_i + u_i' r u_i) + mean_x' q_mean mean_x.
        """
        q_self, q_mean, r = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (q_self, q_mean, r))
        ones = np.ones((N, N))
        Q = np.kron(np.eye(N), q_self) / N + np.kron(ones, q_mean) / N**2
        R = np.kron(np.eye(N), r) / N
        spec = cls(A, B, sigma, Q, R, T, N, x0_mean, x0_cov, box)
        d, m = spec.d, spec.m
        if _exchangeable_blocks(spec.Q, N, d) is None or _exchangeable_blocks(spec.R, N, m) is None:
            raise ValueError("constructed Q or R is not block-permutation invariant")
        return spec

    @property
    def d(self) -> int:
        return self.B.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def is_exchangeable(self) -> bool:
        return (_exchangeable_blocks(self.Q, self.N, self.d) is not None
                and _exchangeable_blocks(self.R, self.N, self.m) is not None
                and self.x0_mean.ndim == 1)

    def agent_means(self) -> np.ndarray:
        return np.broadcast_to(self.x0_mean, (self.N, self.d)).copy()

    def dynamics(self) -> TeamDynamics:
        A, B = self.A, self.B
        return TeamDynamics(self.d, self.m, [(-self.box, self.box)] * self.m,
                            lambda t, x, u: apply_matrix(A, x) + apply_matrix(B, u),
                            self.sigma, Mode.DECOUPLED, "lqg-linear",
                            dict(A=A.tolist(), B=B.tolist(), sigma=self.sigma.tolist()))

    def cost(self) -> StageCost:
        return StageCost.lqg(self.Q, self.R)

    def init_law(self) -> InitLaw:
        return InitLaw(self.x0_mean, self.x0_cov)

    def to_dict(self) -> dict:
        out = {k: np.asarray(getattr(self, k)).tolist() for k in ("A", "B", "sigma", "Q", "R", "x0_mean")}
        out.update(T=self.T, N=self.N, x0_cov=None if self.x0_cov is None else self.x0_cov.tolist())
        return out

    @classmethod
    def from_dict(cls, spec: dict) -> "LqgSpec":
        if "q_self" in spec:
            return cls.exchangeable(spec["N"], spec["A"], spec["B"], spec["sigma"], spec["q_self"],
                                    spec.get("q_mean", 0.0), spec["r"], spec["T"], spec["x0_mean"],
                                    spec.get("x0_cov"))
        return cls(spec["A"], spec["B"], spec["sigma"], spec["Q"], spec["R"], spec["T"], spec["N"],
                   spec["x0_mean"], spec.get("x0_cov"))


@dataclass(frozen=True, eq=False)
class DiscretizedQuadratic:
    spec: LqgSpec
    grid: TimeGrid
    phi: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    psi_w: np.ndarray = field(repr=False)
    Qbar: np.ndarray = field(repr=False)
    Rbar: np.ndarray = field(repr=False)
    M1: np.ndarray = field(repr=False)
    M2: np.ndarray = field(repr=False)
    M3: np.ndarray = field(repr=False)

    @cached_property
    def Phi(self) -> np.ndarray:
        return np.kron(np.eye(self.spec.N), self.phi)

    @cached_property
    def Psi(self) -> np.ndarray:
        return np.kron(np.eye(self.spec.N), self.psi)

    @cached_property
    def Psi_w(self) -> np.ndarray:
        return np.kron(np.eye(self.spec.N), self.psi_w)


def _expand(M: np.ndarray, n: int, p: int, K: int, dt: float) -> np.ndarray:
    """dt * (M acting per step) in (agent, step, coordinate) ordering."""
    blocks = M.reshape(n, p, n, p)
    out = np.zeros((n, K, p, n, K, p))
    for k in range(K):
        out[:, k, :, :, k, :] = blocks
    return dt * out.reshape(n * K * p, n * K * p)


def build_operators(spec: LqgSpec, grid: TimeGrid) -> DiscretizedQuadratic:
    if not math.isclose(grid.horizon, spec.T, rel_tol=1e-12):
        raise DimensionMismatchError(f"grid horizon {grid.horizon} differs from spec horizon {spec.T}")
    K, dt, d, m, N = grid.steps, grid.dt, spec.d, spec.m, spec.N
    F = np.eye(d) + spec.A * dt
    G = spec.B * dt
    powers = [np.eye(d)]
    for _ in range(K):
        powers.append(F @ powers[-1])
    phi = np.vstack(powers[:K])
    psi = np.zeros((K * d, K * m))
    psi_w = np.zeros((K * d, K * d))
    for k in range(K):
        for l in range(k):
            P = powers[k - 1 - l]
            psi[k * d:(k + 1) * d, l * m:(l + 1) * m] = P @ G
            psi_w[k * d:(k + 1) * d, l * d:(l + 1) * d] = P @ spec.sigma
    Qbar = _expand(spec.Q, N, d, K, dt)
    Rbar = _expand(spec.R, N, m, K, dt)
    Psi = np.kron(np.eye(N), psi)
    Phi = np.kron(np.eye(N), phi)
    QPsi = Qbar @ Psi
    M1 = Rbar + Psi.T @ QPsi
    M1 = 0.5 * (M1 + M1.T)
    M2 = QPsi.T @ Phi
    M3 = Phi.T @ Qbar @ Phi
    return DiscretizedQuadratic(spec, grid, phi, psi, psi_w, Qbar, Rbar, M1, M2, 0.5 * (M3 + M3.T))


@dataclass(frozen=True)
class ConvexityCertificate:
    min_eigenvalue: float
    ok: bool
    eigenvector: np.ndarray | None = field(default=None, repr=False)


def verify_convexity(dq: DiscretizedQuadratic) -> ConvexityCertificate:
    w, v = np.linalg.eigh(0.5 * (dq.M1 + dq.M1.T))
    ok = bool(w[0] > 0)
    return ConvexityCertificate(float(w[0]), ok, None if ok else v[:, 0])


class _TrailingSolver:
    """Solves A[s:, s:] h = b for any s with one factorization A = U U' (U upper triangular)."""

    def __init__(self, A: np.ndarray):
        rev = A[::-1, ::-1]
        try:
            L = np.linalg.cholesky(rev)
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError("M1 is not positive definite") from None
        self.U = L[::-1, ::-1]

    def solve(self, s: int, b: np.ndarray) -> np.ndarray:
        U = self.U[s:, s:]
        y = solve_triangular(U, b, lower=False)
        return solve_triangular(U.T, y, lower=True)


@dataclass(frozen=True, eq=False)
class OracleSolution:
    """Optimal decentralized linear rule and its exact expected cost.

    ``open_loop_cost`` is the expected cost of the mean action sequence alone
    (no use of any observed primitive); ``cost`` uses the optimal feedback on
    own initial state and own increments, which is the team optimum.
    """

    U_star: np.ndarray
    cost: float
    open_loop_cost: float
    residual: float
    min_eig_M1: float
    profile: PolicyProfile = field(repr=False)

    def report(self) -> dict:
        return {"cost": self.cost, "open_loop_cost": self.open_loop_cost, "residual": self.residual,
                "min_eig_M1": self.min_eig_M1}

    def to_json(self) -> str:
        return json.dumps(self.report(), sort_keys=True)


def _x0_columns(spec: LqgSpec) -> list[tuple[int, np.ndarray]]:
    """(agent, stacked x0 direction) for every unit-variance initial-state coordinate."""
    if spec.x0_cov is None:
        return []
    w, v = np.linalg.eigh(spec.x0_cov)
    L = v * np.sqrt(np.clip(w, 0.0, None))
    cols = []
    for j in range(spec.N):
        for a in range(spec.d):
            if np.any(L[:, a]):
                vec = np.zeros(spec.N * spec.d)
                vec[j * spec.d:(j + 1) * spec.d] = L[:, a]
                cols.append((j, vec, a))
    return cols


def solve_open_loop(dq: DiscretizedQuadratic, x0=None, noise_feedback: bool = True) -> OracleSolution:
    """Minimize the discretized expected cost.

    ``x0`` is a realization [N, d] (deterministic start) or None to use the
    spec's initial law. The mean actions solve M1 U* = -M2 x0_mean; with
    ``noise_feedback`` the optimal responses to every primitive are added.
    """
    spec, K, dt = dq.spec, dq.grid.steps, dq.grid.dt
    N, d, m = spec.N, spec.d, spec.m
    cert = verify_convexity(dq)
    if not cert.ok:
        raise NotPositiveDefiniteError(f"M1 has min eigenvalue {cert.min_eigenvalue:.3g}")
    deterministic_start = x0 is not None
    mean = np.asarray(x0, dtype=float).reshape(N, d) if deterministic_start else spec.agent_means()
    xm = mean.reshape(-1)
    rhs = dq.M2 @ xm
    chol = cho_factor(dq.M1)
    U = -cho_solve(chol, rhs)
    resid = float(np.linalg.norm(dq.M1 @ U + rhs))
    base = float(xm @ dq.M3 @ xm + 2 * U @ rhs + U @ dq.M1 @ U)

    Psi, Qbar = dq.Psi, dq.Qbar
    PsiTQ = Psi.T @ Qbar
    Km = K * m
    solvers = [_TrailingSolver(dq.M1[j * Km:(j + 1) * Km, j * Km:(j + 1) * Km]) for j in range(N)]
    G = np.zeros((N, K, m, d))
    H = np.zeros((N, K, m, K, d))
    open_extra, fb_extra = [], []

    # initial-state deviations: support is every action of the owning agent
    x0_cols = [] if deterministic_start else _x0_columns(spec)
    for j, vec, a in x0_cols:
        e = dq.Phi @ vec
        b = (PsiTQ @ e)[j * Km:(j + 1) * Km]
        ee = float(e @ Qbar @ e)
        open_extra.append(ee)
        if noise_feedback:
            h = -solvers[j].solve(0, b)
            fb_extra.append(ee + float(b @ h))
            G[j, :, :, a] = h.reshape(K, m)
        else:
            fb_extra.append(ee)
    # increments: column (j, l, c) scaled to unit variance, observed by agent j from step l+1 on
    if np.any(spec.sigma):
        sq = math.sqrt(dt)
        for j in range(N):
            for l in range(K):
                for c in range(d):
                    col = dq.psi_w[:, l * d + c] * sq
                    if not np.any(col):
                        continue
                    e = np.zeros(N * K * d)
                    e[j * K * d:(j + 1) * K * d] = col
                    ee = float(e @ Qbar @ e)
                    open_extra.append(ee)
                    s = (l + 1) * m
                    if noise_feedback and s < Km:
                        b = (PsiTQ @ e)[j * Km + s:(j + 1) * Km]
                        h = -solvers[j].solve(s, b)
                        fb_extra.append(ee + float(b @ h))
                        H[j, l + 1:, :, l, c] = h.reshape(K - l - 1, m) / sq
                    else:
                        fb_extra.append(ee)
    # the G columns used an orthonormal factor of the covariance; map back to x0 deviations
    if x0_cols:
        w, v = np.linalg.eigh(spec.x0_cov)
        L = v * np.sqrt(np.clip(w, 0.0, None))
        Linv = np.linalg.pinv(L)
        G = np.einsum("nkma,ab->nkmb", G, Linv)
    open_cost = base + math.fsum(open_extra)
    cost = base + math.fsum(fb_extra)
    ubar = U.reshape(N, K, m)
    x0_ref = mean
    policies = [NoiseFeedbackPolicy(ubar[j], G[j], H[j], x0_ref[j]) for j in range(N)]
    return OracleSolution(U, cost, open_cost, resid, cert.min_eigenvalue, PolicyProfile(policies))


def noise_feedback_cost(dq: DiscretizedQuadratic, profile: PolicyProfile) -> float:
    """Exact expected cost of a profile of :class:`NoiseFeedbackPolicy` rules."""
    spec, K, dt = dq.spec, dq.grid.steps, dq.grid.dt
    N, d, m = spec.N, spec.d, spec.m
    Km = K * m
    mean = spec.agent_means()
    shift = np.concatenate([(p.ubar + np.einsum("kmd,d->km", p.G, mean[j] - p.x0_mean)).reshape(-1)
                            for j, p in enumerate(profile)])
    xm = mean.reshape(-1)
    total = [float(xm @ dq.M3 @ xm + 2 * shift @ (dq.M2 @ xm) + shift @ dq.M1 @ shift)]
    Psi, Qbar = dq.Psi, dq.Qbar
    cols_h, cols_e = [], []
    if spec.x0_cov is not None:
        w, v = np.linalg.eigh(spec.x0_cov)
        L = v * np.sqrt(np.clip(w, 0.0, None))
        for j, p in enumerate(profile):
            for a in range(d):
                vec = np.zeros(N * d)
                vec[j * d:(j + 1) * d] = L[:, a]
                h = np.zeros(N * Km)
                h[j * Km:(j + 1) * Km] = np.einsum("kmd,d->km", p.G, L[:, a]).reshape(-1)
                cols_h.append(h)
                cols_e.append(dq.Phi @ vec)
    if np.any(spec.sigma):
        sq = math.sqrt(dt)
        for j, p in enumerate(profile):
            for l in range(K):
                for c in range(d):
                    e = np.zeros(N * K * d)
                    e[j * K * d:(j + 1) * K * d] = dq.psi_w[:, l * d + c] * sq
                    h = np.zeros(N * Km)
                    h[j * Km:(j + 1) * Km] = (p.H[:, :, l, c] * sq).reshape(-1)
                    cols_h.append(h)
                    cols_e.append(e)
    if cols_h:
        Hm = np.column_stack(cols_h)
        Em = np.column_stack(cols_e)
        Z = Psi @ Hm + Em
        total.append(float(np.sum(Z * (Qbar @ Z)) + np.sum(Hm * (dq.Rbar @ Hm))))
    return math.fsum(total)


def state_feedback_cost(spec: LqgSpec, grid: TimeGrid, profile: PolicyProfile) -> float:
    """Exact expected cost of per-agent affine state feedback u_i = K_i(t) x_i + c_i(t)."""
    N, d, m, K, dt = spec.N, spec.d, spec.m, grid.steps, grid.dt
    if any(not isinstance(p, LinearFeedback) or p.clip is not None for p in profile):
        raise TypeError("exact evaluation needs unclipped LinearFeedback policies")
    Ablk = np.kron(np.eye(N), spec.A)
    Bblk = np.kron(np.eye(N), spec.B)
    S = np.kron(np.eye(N), spec.sigma)
    mu = spec.agent_means().reshape(-1)
    P = np.zeros((N * d, N * d)) if spec.x0_cov is None else np.kron(np.eye(N), spec.x0_cov)
    terms = []
    for k in range(K):
        t = grid.times[k]
        gains = [p.gain_at(t) for p in profile]
        Kb = np.zeros((N * m, N * d))
        c = np.zeros(N * m)
        for i, (Ki, ci) in enumerate(gains):
            Kb[i * m:(i + 1) * m, i * d:(i + 1) * d] = Ki
            c[i * m:(i + 1) * m] = ci
        um = Kb @ mu + c
        terms.append(dt * (np.trace(spec.Q @ P) + mu @ spec.Q @ mu
                           + np.trace(Kb.T @ spec.R @ Kb @ P) + um @ spec.R @ um))
        Fk = np.eye(N * d) + (Ablk + Bblk @ Kb) * dt
        mu = Fk @ mu + Bblk @ c * dt
        P = Fk @ P @ Fk.T + S @ S.T * dt
    return math.fsum(terms)


def evaluate_linear_profile(spec: LqgSpec, grid: TimeGrid, profile: PolicyProfile,
                            dq: DiscretizedQuadratic | None = None) -> float:
    """Exact expected cost of a profile of linear rules (state feedback or primitive feedback)."""
    if all(isinstance(p, NoiseFeedbackPolicy) for p in profile):
        return noise_feedback_cost(dq if dq is not None else build_operators(spec, grid), profile)
    return state_feedback_cost(spec, grid, profile)


def recover_noise(path, spec: LqgSpec, grid: TimeGrid) -> np.ndarray:
    """dW_k = sigma^-1 (x_{k+1} - (x_k + (A x_k + B u_k) dt)) for one agent path."""
    sig = spec.sigma
    if np.linalg.svd(sig, compute_uv=False).min() <= 1e-12:
        raise SingularDiffusionError("noise cannot be recovered through a singular diffusion")
    x = np.asarray(path.states, dtype=float)
    u = np.asarray(path.actions, dtype=float)
    drift = apply_matrix(spec.A, x[:-1]) + apply_matrix(spec.B, u)
    resid = x[1:] - (x[:-1] + drift * grid.dt)
    if spec.d == 1:
        return resid / sig[0, 0]
    return np.linalg.solve(sig, resid.T).T


def inconsistent_steps(recovered: np.ndarray, stored: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Steps whose recovered increment differs from the stored one by more than ``tol``."""
    diff = np.max(np.abs(np.asarray(recovered) - np.asarray(stored)).reshape(len(recovered), -1), axis=1)
    return np.flatnonzero(diff > tol)
