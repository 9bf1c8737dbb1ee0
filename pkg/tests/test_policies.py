from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_force_index_extension, brute_force_marginal, tv
from xteam.errors import ExplosionGuardError, UnaveragableError
from xteam.policies.kernels import (CategoricalGridPolicy, GridPolicy, LinearFeedback, NoiseFeedbackPolicy, act,
                                    policy_from_dict)
from xteam.policies.laws import (ProfileLaw, exchangeable_average, iid_index_extension, is_exchangeable,
                                 marginal_tv_gap)
from xteam.policies.profiles import Permutation, PolicyProfile, permute_profile, symmetrize_profile
from xteam.sde.noise import Substream

A, B, C = LinearFeedback(0.0), LinearFeedback(-1.0), LinearFeedback(0.5)
ALPHABET = (A, B, C)


def profile_of(idx):
    return PolicyProfile(ALPHABET[i] for i in idx)


def names(profile):
    return tuple(ALPHABET.index(p) for p in profile)


# kernels

@given(st.floats(-100, 100), st.floats(0, 1))
def test_zero_gain_gives_zero_action(x, t):
    assert act(LinearFeedback(0.0), t, [x])[0] == 0.0


@given(st.integers(0, 10_000), st.integers(0, 50))
def test_point_mass_kernel_ignores_the_substream(rep, step):
    pol = CategoricalGridPolicy.constant([[0.3], [0.9]], [0.0, 1.0])
    assert act(pol, 0.5, [0.0], Substream(1, rep, 0), step)[0] == 0.9


def test_two_atom_kernel_frequency():
    pol = CategoricalGridPolicy.constant([[0.0], [1.0]], [0.25, 0.75])
    n = 100_000
    u = np.array([Substream(42, r, 0).uniform(0) for r in range(n)])
    draws = pol.actions(0, 0.0, np.zeros((n, 1, 1)), u[:, None])[:, 0, 0]
    freq = np.mean(draws == 0.0)
    assert abs(freq - 0.25) <= 3 * math.sqrt(0.25 * 0.75 / n)


def test_probability_vectors_must_normalize():
    with pytest.raises(ValueError):
        CategoricalGridPolicy.constant([[0.0], [1.0]], [0.5, 0.6])


def test_noise_feedback_uses_only_past_increments():
    rng = np.random.default_rng(0)
    K = 5
    pol = NoiseFeedbackPolicy(rng.normal(size=(K, 1)), rng.normal(size=(K, 1, 1)), rng.normal(size=(K, 1, K, 1)),
                              [0.0])
    x0 = rng.normal(size=(3, 1))
    dw = rng.normal(size=(3, K, 1))
    base = pol.open_loop_actions(x0, dw)
    for k in range(K):
        bumped = dw.copy()
        bumped[:, k] += 1.0
        out = pol.open_loop_actions(x0, bumped)
        assert np.array_equal(out[:, : k + 1], base[:, : k + 1])


@pytest.mark.parametrize("pol", [
    LinearFeedback([[-1.0]], [0.2], clip=[[-1, 1]]),
    GridPolicy([0, 0.5, 1], [-np.inf, 0, np.inf], [[[1.0], [2.0]], [[3.0], [4.0]]]),
    CategoricalGridPolicy.constant([[0.0], [1.0]], [0.5, 0.5]),
])
def test_policy_serialization_round_trip(pol):
    again = policy_from_dict(pol.to_dict())
    assert again == pol and again.fingerprint == pol.fingerprint


# permutations and profiles

@given(st.permutations(range(5)))
def test_permutation_round_trip(image):
    tau = Permutation(tuple(image))
    p = profile_of([0, 1, 2, 1, 0])
    assert permute_profile(permute_profile(p, tau), tau.inverse()) == p
    assert permute_profile(p, Permutation.identity(5)) == p


def test_symmetric_profile_is_fixed_by_every_permutation():
    for n in range(1, 7):
        p = PolicyProfile.symmetric_of(B, n)
        assert all(permute_profile(p, t) == p for t in Permutation.all(n))


def test_group_action_composition_exhaustive():
    for n in range(1, 5):
        p = PolicyProfile(LinearFeedback(float(i)) for i in range(n))
        for tau, rho in itertools.product(Permutation.all(n), repeat=2):
            assert permute_profile(permute_profile(p, tau), rho) == permute_profile(p, tau.compose(rho))


def test_symmetrize_returns_the_policy_of_a_symmetric_profile():
    pol = GridPolicy([0, 1], [-np.inf, 0, np.inf], [[[1.0], [-2.0]]])
    assert symmetrize_profile(PolicyProfile.symmetric_of(pol, 3), "convex") is pol


def test_two_linear_feedbacks_average():
    out = symmetrize_profile(PolicyProfile([LinearFeedback(-1.0), LinearFeedback(-3.0)]), "convex")
    assert np.array_equal(out.K, np.array([[[-2.0]]]))


def test_grid_average_matches_permutation_enumeration():
    rng = np.random.default_rng(3)
    t_bins, x_bins = [0, 0.5, 1], [-np.inf, -1, 0, 1, np.inf]
    pols = [GridPolicy(t_bins, x_bins, rng.normal(size=(2, 4, 1))) for _ in range(3)]
    avg = symmetrize_profile(PolicyProfile(pols), "convex")
    perms = list(Permutation.all(3))
    for t in (0.1, 0.7):
        for x in (-2.0, -0.5, 0.5, 2.0):
            brute = sum(act(permute_profile(PolicyProfile(pols), tau)[0], t, [x]) for tau in perms) / len(perms)
            assert act(avg, t, [x]) == pytest.approx(brute, abs=1e-14)


def test_randomized_kernels_are_not_averaged():
    r = CategoricalGridPolicy.constant([[0.0], [1.0]], [0.5, 0.5])
    with pytest.raises(UnaveragableError):
        symmetrize_profile(PolicyProfile([r, A]), "convex")
    law = symmetrize_profile(PolicyProfile([r, A]))
    assert isinstance(law, ProfileLaw) and is_exchangeable(law)


# profile laws

def test_exchangeable_input_is_unchanged_by_averaging():
    law = ProfileLaw.iid([(A, 0.3), (B, 0.7)], 3)
    assert exchangeable_average(law).equals(law)


def test_single_asymmetric_atom_two_agents():
    out = exchangeable_average(ProfileLaw.point(profile_of([0, 1])))
    d = {names(p): w for p, w in out.atoms}
    assert d == {(0, 1): 0.5, (1, 0): 0.5}


def test_three_distinct_policies_give_six_atoms():
    out = exchangeable_average(ProfileLaw.point(profile_of([0, 1, 2])))
    assert len(out.atoms) == 6
    assert all(abs(w - 1 / 6) < 1e-15 for _, w in out.atoms)
    assert is_exchangeable(out)


def test_index_extension_small_cases():
    one = iid_index_extension(ProfileLaw.point(profile_of([1])), 3)
    assert [(names(p), w) for p, w in one.atoms] == [((1, 1, 1), 1.0)]
    law = ProfileLaw([(profile_of([0, 1, 1]), 0.4), (profile_of([2, 0, 0]), 0.6)])
    m1 = {names(p): w for p, w in iid_index_extension(law, 1).atoms}
    assert m1 == pytest.approx({(0,): 0.4 / 3 + 0.6 * 2 / 3, (1,): 0.4 * 2 / 3, (2,): 0.6 / 3})
    two = {names(p): w for p, w in iid_index_extension(ProfileLaw.point(profile_of([0, 1])), 2).atoms}
    assert two == {(0, 0): 0.25, (0, 1): 0.25, (1, 0): 0.25, (1, 1): 0.25}


def test_tv_gap_trivial_cases():
    p = ProfileLaw.point(profile_of([0, 1]))
    q = ProfileLaw.point(profile_of([2, 2]))
    assert marginal_tv_gap(p, p, 2) == 0.0
    assert marginal_tv_gap(p, q, 2) == 1.0


def test_tv_gap_matches_brute_enumeration():
    rng = np.random.default_rng(8)
    for _ in range(20):
        support = [tuple(rng.integers(0, 3, 5)) for _ in range(4)]
        w = rng.dirichlet(np.ones(4))
        law = exchangeable_average(ProfileLaw([(profile_of(s), x) for s, x in zip(support, w)]))
        raw = [(names(p), x) for p, x in law.atoms]
        for m in (2, 3):
            brute = tv(brute_force_marginal(raw, m), brute_force_index_extension(raw, m))
            ours = marginal_tv_gap(law, iid_index_extension(law, m), m)
            assert ours == pytest.approx(brute, abs=1e-13)
            assert ours <= m * (m - 1) / 10 + 1e-15


def test_urn_without_replacement_attains_the_known_gap():
    # drawing 2 from an urn {a, b} without replacement never repeats; i.i.d. index draws repeat w.p. 1/2
    law = exchangeable_average(ProfileLaw.point(profile_of([0, 1])))
    assert marginal_tv_gap(law, iid_index_extension(law, 2), 2) == pytest.approx(0.5)


def test_exchangeability_checks():
    assert not is_exchangeable(ProfileLaw.point(profile_of([0, 1])))
    assert is_exchangeable(ProfileLaw.iid([(A, 0.2), (B, 0.5), (C, 0.3)], 4))
    mix = ProfileLaw.common_randomness([(0.5, [(A, 1.0)]), (0.5, [(B, 0.3), (C, 0.7)])], 3)
    assert is_exchangeable(mix)
    assert is_exchangeable(mix, mode="sampled", samples=64)


def test_explosion_guard():
    with pytest.raises(ExplosionGuardError):
        ProfileLaw.iid([(A, 0.5), (B, 0.5)], 21)
    with pytest.raises(ExplosionGuardError):
        iid_index_extension(ProfileLaw.point(profile_of([0] * 10)), 7, mode="exact")


laws = st.lists(
    st.tuples(st.lists(st.integers(0, 2), min_size=4, max_size=4), st.floats(0.05, 1.0)),
    min_size=1, max_size=4,
)


def _law(spec):
    total = sum(w for _, w in spec)
    return ProfileLaw([(profile_of(idx), w / total) for idx, w in spec]).canonical()


@given(laws)
def test_exchangeable_average_is_idempotent(spec):
    once = exchangeable_average(_law(spec))
    assert exchangeable_average(once).equals(once)
    assert is_exchangeable(once)


@given(laws, st.integers(1, 4))
def test_index_extension_is_exchangeable(spec, m):
    assert is_exchangeable(iid_index_extension(_law(spec), m))


@given(laws, st.integers(1, 4))
def test_finite_de_finetti_bound_holds(spec, m):
    law = exchangeable_average(_law(spec))
    assert marginal_tv_gap(law, iid_index_extension(law, m), m) <= m * (m - 1) / 8 + 1e-14


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=3), st.integers(1, 5))
def test_private_randomization_laws_are_exchangeable(weights, n):
    w = np.asarray(weights) / sum(weights)
    law = ProfileLaw.iid(list(zip(ALPHABET, w)), n)
    assert is_exchangeable(law)
