from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import exact_w2_1d
from xteam.costs import StageCost, estimate_JN, estimate_randomized_cost, evaluate_stage_cost, wasserstein2
from xteam.costs.estimate import estimate_Jinf, simulate_profile
from xteam.errors import NegativeCostError, NotPositiveDefiniteError, UnsupportedSizeError
from xteam.measures import EmpiricalMeasure
from xteam.policies.kernels import LinearFeedback
from xteam.policies.laws import ProfileLaw, exchangeable_average
from xteam.policies.profiles import Permutation, PolicyProfile, permute_profile
from xteam.sde import InitLaw, TimeGrid, WienerBatch, make_dynamics, simulate_decoupled

finite = st.floats(-10, 10, allow_nan=False)


def test_zero_cost_is_zero():
    c = StageCost.from_expression("0*x")
    assert evaluate_stage_cost(c, np.ones((3, 1)), np.ones((3, 1))) == 0.0


def test_lqg_identity_weights():
    for n in (1, 2, 5):
        c = StageCost.lqg(np.eye(n), np.eye(n))
        assert evaluate_stage_cost(c, np.ones(n), np.zeros(n)) == n


def test_centered_square_two_agents():
    c = StageCost.from_expression("(x - mean_x)**2")
    assert evaluate_stage_cost(c, [0.0, 2.0], [0.0, 0.0]) == 1.0


def test_negative_values_are_rejected():
    with pytest.raises(NegativeCostError):
        evaluate_stage_cost(StageCost.from_expression("x"), [-1.0], [0.0])


def test_lqg_form_checks_definiteness():
    with pytest.raises(NotPositiveDefiniteError):
        StageCost.lqg(np.eye(2), -np.eye(2))
    with pytest.raises(NotPositiveDefiniteError):
        StageCost.lqg(-np.eye(2), np.eye(2))


def test_exchangeable_form_refuses_a_labeled_cost():
    with pytest.raises(ValueError):
        StageCost.exchangeable(lambda x, u: x[..., 0, 0] ** 2, agents=3)
    StageCost.exchangeable(lambda x, u: np.sum(x[..., 0] ** 2, -1), agents=3)


@given(hnp.arrays(float, (4, 1), elements=finite), hnp.arrays(float, (4, 1), elements=finite),
       st.permutations(range(4)))
def test_exchangeable_costs_are_bit_invariant_under_relabeling(x, u, image):
    idx = list(image)
    q_self, q_mean = np.eye(4) * 0.7, np.full((4, 4), 0.3)
    costs = [
        StageCost.from_expression("min(1, (x - mean_x)**2) + 0.1*u**2 + tanh(mean_x)**2"),
        StageCost.lqg(q_self + q_mean, np.eye(4)),
    ]
    for c in costs:
        assert evaluate_stage_cost(c, x[idx], u[idx]) == evaluate_stage_cost(c, x, u)


# estimate_JN

GRID = TimeGrid(1.5, 30)


def _batch(dyn, seed=1, M=200, N=2, init=InitLaw([0.0])):
    return simulate_decoupled(dyn, LinearFeedback(-0.5), GRID, init, WienerBatch(seed, M, N, GRID.steps, 1, GRID.dt))


def test_zero_cost_estimate():
    e = estimate_JN(_batch(make_dynamics("ou")), StageCost.from_expression("0*x"))
    assert e.mean == 0.0 and e.se == 0.0


@given(st.sampled_from(["ou", "lqg-linear"]), st.integers(0, 1000))
def test_unit_cost_integrates_to_horizon_exactly(name, seed):
    e = estimate_JN(_batch(make_dynamics(name), seed, M=5), StageCost.from_expression("1 + 0*x"), keep_samples=True)
    assert e.mean == GRID.horizon and np.all(e.samples == GRID.horizon)


def test_brownian_square_integral():
    T, K, M = 1.0, 50, 100_000
    grid = TimeGrid(T, K)
    b = simulate_decoupled(make_dynamics("expr", expr="0*x"), LinearFeedback(0.0), grid, InitLaw([0.0]),
                           WienerBatch(3, M, 1, K, 1, grid.dt))
    e = estimate_JN(b, StageCost.from_expression("x**2"))
    # left Riemann sum of E X_t^2 = t is exactly T^2/2 - T dt/2
    assert abs(e.mean - T * T / 2) <= 3 * e.se + grid.dt * T
    assert abs(e.mean - (T * T / 2 - T * grid.dt / 2)) <= 3 * e.se


# randomized profiles

DYN = make_dynamics("mf-attraction", mode="coupled")
COST = StageCost.from_expression("min(1, (x - mean_x)**2) + 0.1*u**2")
SMALL = TimeGrid(1.0, 10)
P1 = PolicyProfile([LinearFeedback(-0.2, clip=[[-1, 1]]), LinearFeedback(-0.8, clip=[[-1, 1]]),
                    LinearFeedback(0.1, clip=[[-1, 1]])])
P2 = PolicyProfile.symmetric_of(LinearFeedback(-0.5, clip=[[-1, 1]]), 3)
INIT = InitLaw([[0.5], [0.0], [-0.5]], [[1.0]])


def test_single_atom_law_matches_direct_estimate():
    direct = estimate_JN(simulate_profile(DYN, P1, SMALL, INIT, WienerBatch(5, 300, 3, 10, 1, 0.1)), COST)
    law = estimate_randomized_cost(ProfileLaw.point(P1), DYN, COST, SMALL, INIT, 300, 5)
    assert law.mean == direct.mean and law.se == direct.se


def test_duplicate_atoms_match_a_single_atom():
    one = estimate_randomized_cost(ProfileLaw.point(P1), DYN, COST, SMALL, INIT, 300, 5)
    two = estimate_randomized_cost(ProfileLaw([(P1, 0.5), (P1, 0.5)]), DYN, COST, SMALL, INIT, 300, 5)
    assert two.mean == one.mean


def test_exchangeable_average_with_canonical_streams_reproduces_the_profile():
    init = InitLaw([0.3], [[1.0]])
    base = estimate_randomized_cost(ProfileLaw.point(P1), DYN, COST, SMALL, init, 200, 9, crn="canonical")
    law = exchangeable_average(ProfileLaw.point(P1))
    assert len(law.atoms) == 6
    for prof, _ in law.atoms:
        e = estimate_randomized_cost(ProfileLaw.point(prof), DYN, COST, SMALL, init, 200, 9, crn="canonical")
        assert e.mean == base.mean
    mixed = estimate_randomized_cost(law, DYN, COST, SMALL, init, 200, 9, crn="canonical")
    assert mixed.mean == pytest.approx(base.mean, rel=1e-15)


@given(st.floats(0.0, 1.0))
def test_randomized_cost_is_affine_in_mixture_weights(alpha):
    P = ProfileLaw.point(P1)
    Q = ProfileLaw.point(P2)
    kw = dict(dynamics=DYN, cost=COST, grid=SMALL, init=INIT, replications=50, seed=2)
    eP = estimate_randomized_cost(P, **kw).mean
    eQ = estimate_randomized_cost(Q, **kw).mean
    atoms = [(p, w) for p, w in ((P1, alpha), (P2, 1 - alpha)) if w > 0]
    eM = estimate_randomized_cost(ProfileLaw(atoms), **kw).mean
    assert abs(eM - (alpha * eP + (1 - alpha) * eQ)) <= 1e-12


def test_relabeled_profile_estimate_is_bit_identical():
    noise = WienerBatch(4, 100, 3, 10, 1, 0.1)
    base = estimate_JN(simulate_profile(DYN, P1, SMALL, INIT, noise), COST)
    for tau in Permutation.all(3):
        e = estimate_JN(simulate_profile(DYN, permute_profile(P1, tau), SMALL, INIT.permuted(tau), noise.relabel(tau)),
                        COST)
        assert e.mean == base.mean and e.se == base.se


# J_inf

def test_interaction_free_cost_is_flat_in_N():
    dyn = make_dynamics("ou")
    rep = estimate_Jinf(LinearFeedback(-0.5), dyn, StageCost.from_expression("x**2"), [2, 8, 32], SMALL,
                        InitLaw([1.0]), 2000, 3, mv_particles=0)
    base = rep.estimates[0]
    for e in rep.estimates:
        assert abs(e.mean - base.mean) <= 3 * math.hypot(e.se, base.se)
    assert abs(rep.tail_max - base.mean) <= 3 * math.hypot(max(e.se for e in rep.estimates), base.se)


def test_mean_square_cost_decays_like_one_over_n():
    dyn = make_dynamics("ou")
    rep = estimate_Jinf(LinearFeedback(0.0), dyn, StageCost.from_expression("mean_x**2"), [2, 4, 8, 16, 32],
                        SMALL, InitLaw([0.0], [[1.0]]), 2000, 4, mv_particles=0)
    assert -1.4 <= rep.decay_exponent <= -0.6


def test_mean_field_representative_matches_large_n():
    dyn = make_dynamics("mf-attraction", mode="coupled")
    pol = LinearFeedback(-0.5, clip=[[-1, 1]])
    rep = estimate_Jinf(pol, dyn, COST, [64], SMALL, InitLaw([0.5], [[1.0]]), 400, 5, mv_particles=4096,
                        mv_replications=8)
    e = rep.estimates[-1]
    assert abs(e.mean - rep.mv.mean) <= 3 * math.hypot(e.se, rep.mv.se) + 64**-0.5


# wasserstein

def test_w2_identity_point_masses_and_hand_case():
    mu = EmpiricalMeasure(np.array([[0.3], [1.1], [-2.0]]))
    assert wasserstein2(mu, mu) == 0.0
    assert wasserstein2(EmpiricalMeasure(np.array([[1.0]])), EmpiricalMeasure(np.array([[-2.5]]))) == 3.5
    w = wasserstein2(EmpiricalMeasure(np.array([[0.0], [1.0]])), EmpiricalMeasure(np.array([[0.0], [2.0]])))
    assert w == pytest.approx(math.sqrt(0.5), abs=1e-15)


@given(hnp.arrays(float, 5, elements=finite), hnp.arrays(float, 5, elements=finite))
def test_w2_matches_brute_force_matching(a, b):
    w = wasserstein2(EmpiricalMeasure(a[:, None]), EmpiricalMeasure(b[:, None]))
    assert w == pytest.approx(exact_w2_1d(list(a), list(b)), rel=1e-9, abs=1e-9)


def test_w2_unequal_sizes_against_replicated_support():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=4), rng.normal(size=6)
    # repeating each point to a common size 12 leaves the measures unchanged
    brute = wasserstein2(EmpiricalMeasure(np.repeat(a, 3)[:, None]), EmpiricalMeasure(np.repeat(b, 2)[:, None]))
    assert wasserstein2(EmpiricalMeasure(a[:, None]), EmpiricalMeasure(b[:, None])) == pytest.approx(brute, rel=1e-12)


@given(hnp.arrays(float, (4, 2), elements=finite), hnp.arrays(float, (4, 2), elements=finite),
       hnp.arrays(float, (4, 2), elements=finite))
def test_w2_metric_axioms_multivariate(x, y, z):
    X, Y, Z = (EmpiricalMeasure(p) for p in (x, y, z))
    assert wasserstein2(X, Y) == wasserstein2(Y, X)
    assert wasserstein2(X, Z) <= wasserstein2(X, Y) + wasserstein2(Y, Z) + 1e-9
    assert wasserstein2(X, X) == 0.0


def test_w2_size_limit():
    rng = np.random.default_rng(0)
    with pytest.raises(UnsupportedSizeError):
        wasserstein2(EmpiricalMeasure(rng.normal(size=(3, 2))), EmpiricalMeasure(rng.normal(size=(4, 2))))
