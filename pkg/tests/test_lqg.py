from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import scalar_riccati_cost
from xteam.costs import estimate_JN
from xteam.errors import NotPositiveDefiniteError
from xteam.lqg import (LqgSpec, build_operators, inconsistent_steps, noise_feedback_cost, recover_noise,
                       solve_open_loop, state_feedback_cost, verify_convexity)
from xteam.policies.kernels import LinearFeedback, NoiseFeedbackPolicy
from xteam.policies.profiles import Permutation, PolicyProfile, permute_profile
from xteam.sde import TimeGrid, WienerBatch, simulate_decoupled
from xteam.sde.simulate import AgentPath


def scalar(N=1, A=0.0, B=1.0, sigma=0.0, Q=1.0, R=1.0, T=1.0, x0=1.0, cov=None):
    return LqgSpec([[A]], [[B]], [[sigma]], np.eye(N) * Q, np.eye(N) * R, T, N, [x0], cov)


def test_zero_dynamics_operators():
    dq = build_operators(scalar(A=0.0, B=0.0), TimeGrid(1.0, 6))
    assert np.all(dq.Psi == 0) and np.array_equal(dq.M1, dq.Rbar)
    assert np.array_equal(dq.phi, np.ones((6, 1)))


def test_two_step_control_map_by_hand():
    dt = 0.5
    dq = build_operators(scalar(), TimeGrid(1.0, 2))
    # x_0 = x0, x_1 = x0 + dt u_0: rows are the visited states x_0, x_1
    np.testing.assert_array_equal(dq.psi, np.array([[0.0, 0.0], [dt, 0.0]]))


def test_zero_state_weight_gives_zero_control():
    sol = solve_open_loop(build_operators(scalar(Q=0.0), TimeGrid(1.0, 10)))
    assert np.all(sol.U_star == 0) and sol.cost == 0.0


def test_zero_start_without_noise_gives_zero_cost():
    sol = solve_open_loop(build_operators(scalar(x0=0.0), TimeGrid(1.0, 10)))
    assert np.all(sol.U_star == 0) and sol.cost == 0.0


def test_deterministic_optimum_matches_dynamic_programming():
    K = 50
    sol = solve_open_loop(build_operators(scalar(), TimeGrid(1.0, K)))
    assert sol.cost == pytest.approx(scalar_riccati_cost(0, 1, 1, 1, 1.0, K, 1.0), rel=1e-12)


def test_coarse_piecewise_constant_search_upper_bounds_the_optimum():
    K = 50
    spec = scalar()
    dq = build_operators(spec, TimeGrid(1.0, K))
    best = solve_open_loop(dq).cost
    levels = np.linspace(-1.5, 0.5, 9)

    def cost(u):
        U = np.repeat(u, K // 5)
        x = dq.phi[:, 0] * 1.0 + dq.psi @ U
        return float(np.sum(x**2) * (1 / K) + np.sum(U**2) * (1 / K))

    coarse = min(cost(np.array(u)) for u in itertools.product(levels, repeat=5))
    assert best <= coarse
    assert coarse - best < 0.05


def test_noisy_optimum_matches_dynamic_programming():
    K = 40
    spec = scalar(A=-0.5, sigma=0.8, Q=1.0, R=0.5, cov=[[0.25]])
    sol = solve_open_loop(build_operators(spec, TimeGrid(1.0, K)))
    ref = scalar_riccati_cost(-0.5, 1.0, 1.0, 0.5, 1.0, K, 1.0, sigma=0.8, x0_var=0.25)
    assert sol.cost == pytest.approx(ref, rel=1e-10)


def test_convexity_certificate():
    K = 10
    dt = 1 / K
    eye = verify_convexity(build_operators(scalar(Q=0.0), TimeGrid(1.0, K)))
    # the quadrature weight dt multiplies R in the discretized cost
    assert eye.min_eigenvalue == pytest.approx(dt, rel=1e-12) and eye.ok
    other = verify_convexity(build_operators(scalar(Q=3.0, A=0.4), TimeGrid(1.0, K)))
    assert other.min_eigenvalue >= dt - 1e-12


def test_indefinite_weights_are_rejected_at_construction():
    with pytest.raises(NotPositiveDefiniteError):
        scalar(R=-1.0)


def test_simulator_path_gives_back_its_increments():
    spec = LqgSpec([[0.0, 1.0], [-1.0, -0.2]], [[0.0], [1.0]], [[0.3, 0.0], [0.1, 0.6]], np.eye(2), np.eye(1),
                   1.0, 1, [1.0, 0.0], None)
    grid = TimeGrid(1.0, 30)
    noise = WienerBatch(2, 3, 1, 30, 2, grid.dt)
    b = simulate_decoupled(spec.dynamics(), LinearFeedback([[-1.0, -0.5]]), grid, spec.init_law(), noise)
    for r in range(3):
        rec = recover_noise(b.path(r, 0), spec, grid)
        np.testing.assert_allclose(rec, noise.increments[r, 0], rtol=0, atol=1e-12)


def test_zero_path_gives_zero_increments():
    spec = scalar(A=0.0, B=0.0, sigma=1.0, x0=0.0)
    grid = TimeGrid(1.0, 5)
    rec = recover_noise(AgentPath(np.zeros((6, 1)), np.zeros((5, 1))), spec, grid)
    assert np.all(rec == 0)


def test_one_corrupted_state_flags_two_steps():
    spec = scalar(A=-0.3, sigma=0.5)
    grid = TimeGrid(1.0, 20)
    noise = WienerBatch(4, 1, 1, 20, 1, grid.dt)
    b = simulate_decoupled(spec.dynamics(), LinearFeedback(-0.7), grid, spec.init_law(), noise)
    path = b.path(0, 0)
    states = path.states.copy()
    states[7] += 1e-3
    bad = inconsistent_steps(recover_noise(AgentPath(states, path.actions), spec, grid), noise.increments[0, 0])
    assert list(bad) == [6, 7]


# optimality and invariance against the simulator

EXCH = LqgSpec.exchangeable(3, [[-0.2]], [[1.0]], [[0.0]], [[1.0]], [[2.0]], [[0.5]], 1.0, [0.8])


def test_oracle_lower_bounds_simulated_competitors():
    grid = TimeGrid(1.0, 25)
    best = solve_open_loop(build_operators(EXCH, grid)).cost
    rng = np.random.default_rng(0)
    noise = WienerBatch(1, 1, 3, 25, 1, grid.dt)
    for _ in range(30):
        prof = PolicyProfile(LinearFeedback(g, offset=[c]) for g, c in rng.normal(size=(3, 2)))
        sim = estimate_JN(simulate_decoupled(EXCH.dynamics(), prof, grid, EXCH.init_law(), noise), EXCH.cost())
        assert sim.mean >= best - 1e-8
        assert sim.mean == pytest.approx(state_feedback_cost(EXCH, grid, prof), rel=1e-10)


def test_oracle_rule_simulated_cost_matches_oracle():
    spec = LqgSpec.exchangeable(2, [[-0.5]], [[1.0]], [[0.8]], [[1.0]], [[2.0]], [[0.5]], 1.0, [1.0], [[0.25]])
    grid = TimeGrid(1.0, 50)
    sol = solve_open_loop(build_operators(spec, grid))
    est = estimate_JN(simulate_decoupled(spec.dynamics(), sol.profile, grid, spec.init_law(),
                                         WienerBatch(3, 40_000, 2, 50, 1, grid.dt)), spec.cost())
    assert abs(est.mean - sol.cost) <= 3 * est.se + 1e-3 * sol.cost


def test_state_feedback_cost_matches_simulation():
    spec = LqgSpec.exchangeable(2, [[-0.5]], [[1.0]], [[0.8]], [[1.0]], [[2.0]], [[0.5]], 1.0, [1.0], [[0.25]])
    grid = TimeGrid(1.0, 20)
    prof = PolicyProfile([LinearFeedback(-1.0, offset=[0.2]), LinearFeedback(-0.3)])
    exact = state_feedback_cost(spec, grid, prof)
    est = estimate_JN(simulate_decoupled(spec.dynamics(), prof, grid, spec.init_law(),
                                         WienerBatch(5, 40_000, 2, 20, 1, grid.dt)), spec.cost())
    assert abs(est.mean - exact) <= 3 * est.se
    assert exact >= solve_open_loop(build_operators(spec, grid)).cost - 1e-10


def _random_rule(rng, K, scale=0.5):
    return NoiseFeedbackPolicy(rng.normal(size=(K, 1)) * scale, rng.normal(size=(K, 1, 1)) * scale,
                               rng.normal(size=(K, 1, K, 1)) * scale, [0.5])


@given(st.integers(0, 2**32 - 1), st.permutations(range(3)))
def test_oracle_cost_is_relabeling_invariant(seed, image):
    spec = LqgSpec.exchangeable(3, [[-0.3]], [[1.0]], [[0.7]], [[1.0]], [[3.0]], [[0.5]], 1.0, [0.5], [[0.3]])
    grid = TimeGrid(1.0, 8)
    dq = build_operators(spec, grid)
    rng = np.random.default_rng(seed)
    prof = PolicyProfile(_random_rule(rng, 8) for _ in range(3))
    a = noise_feedback_cost(dq, prof)
    b = noise_feedback_cost(dq, permute_profile(prof, Permutation(tuple(image))))
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.0, 0.7]))
def test_symmetrization_never_raises_oracle_cost(seed, sigma):
    from xteam.policies.profiles import average_policies

    spec = LqgSpec.exchangeable(3, [[-0.3]], [[1.0]], [[sigma]], [[1.0]], [[3.0]], [[0.5]], 1.0, [0.5],
                                [[0.3]] if sigma else None)
    grid = TimeGrid(1.0, 8)
    dq = build_operators(spec, grid)
    rng = np.random.default_rng(seed)
    prof = PolicyProfile(_random_rule(rng, 8) for _ in range(3))
    avg = sum(noise_feedback_cost(dq, permute_profile(prof, t)) for t in Permutation.all(3)) / 6
    sym = noise_feedback_cost(dq, PolicyProfile.symmetric_of(average_policies(prof.agents), 3))
    assert sym <= avg + 1e-10


def test_noise_feedback_cost_matches_simulation():
    spec = LqgSpec.exchangeable(2, [[-0.3]], [[1.0]], [[0.7]], [[1.0]], [[3.0]], [[0.5]], 1.0, [0.5], [[0.3]])
    grid = TimeGrid(1.0, 10)
    rng = np.random.default_rng(1)
    prof = PolicyProfile(_random_rule(rng, 10) for _ in range(2))
    exact = noise_feedback_cost(build_operators(spec, grid), prof)
    est = estimate_JN(simulate_decoupled(spec.dynamics(), prof, grid, spec.init_law(),
                                         WienerBatch(6, 50_000, 2, 10, 1, grid.dt)), spec.cost())
    assert abs(est.mean - exact) <= 3 * est.se


def test_spec_round_trip():
    again = LqgSpec.from_dict(EXCH.to_dict())
    assert np.array_equal(again.Q, EXCH.Q) and again.N == EXCH.N and again.is_exchangeable
    assert math.isclose(again.T, EXCH.T)
