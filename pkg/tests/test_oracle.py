import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpg_lab import game_core as gc
from mpg_lab import oracle
from mpg_lab.games import get_game, random_game, random_profile
from mpg_lab.potential import lyapunov_gap, make_team_game

import oracles

seeds = st.integers(0, 2**32 - 1)


def random_mdp(rng, S=3, A=3, discount=0.9):
    T = rng.dirichlet(np.ones(S), size=(S, A))
    return gc.validate_game(gc.GameSpec(rng.normal(size=(1, S, A)), T, discount, np.full(S, 1 / S)))


@given(seeds)
@settings(max_examples=40, deadline=None)
def test_single_player_best_response_matches_policy_iteration(seed):
    rng = np.random.default_rng(seed)
    game = random_mdp(rng, S=int(rng.integers(1, 5)), A=int(rng.integers(1, 4)),
                      discount=float(rng.uniform(0.1, 0.97)))
    choice, V_pi = oracles.policy_iteration(game.payoff[0], game.transition, game.discount)
    policy, V = oracle.best_response(game, gc.uniform_policy(game), 0)
    assert np.allclose(V, V_pi, atol=1e-9)
    assert np.all(policy.max(axis=1) == 1.0)
    # same value whether or not ties were broken the same way
    assert np.allclose(gc.value_function(game, [policy], 0), V_pi, atol=1e-9)
    assert np.allclose(gc.value_function(game, [gc.deterministic_policy(game, [choice])[0]], 0),
                       V, atol=1e-9)


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_best_response_against_opponents_matches_policy_iteration(seed):
    rng = np.random.default_rng(seed)
    game = random_game(rng, num_states=3, num_actions=(3, 2))
    pi = random_profile(rng, game)
    r, P = gc.induced_mdp(game, pi, 1)
    _, V_pi = oracles.policy_iteration(r, P, game.discount)
    _, V = oracle.best_response(game, pi, 1)
    assert np.allclose(V, V_pi, atol=1e-9)


def test_best_response_ignores_own_entry(rng):
    game = random_game(rng)
    pi = random_profile(rng, game)
    other = list(pi)
    other[0] = random_profile(rng, game)[0]
    a, Va = oracle.best_response(game, pi, 0)
    b, Vb = oracle.best_response(game, other, 0)
    assert np.array_equal(a, b) and np.array_equal(Va, Vb)


def test_g2_best_response(g2):
    pi = gc.deterministic_policy(g2.game, [(0,), (1,)])
    policy, V = oracle.best_response(g2.game, pi, 0)
    assert policy.tolist() == [[0.0, 1.0]]
    assert V == pytest.approx([4.0], abs=1e-12)


def test_zero_payoff_best_response_is_lexicographic(rng):
    game = random_game(rng, num_states=3)
    game = gc.GameSpec(np.zeros_like(game.payoff), game.transition, game.discount, game.mu)
    policy, V = oracle.best_response(game, random_profile(rng, game), 1)
    assert np.all(V == 0.0)
    assert np.all(policy[:, 0] == 1.0)


def test_nash_gap_examples(g2):
    high = gc.deterministic_policy(g2.game, [(1,), (1,)])
    report = oracle.nash_gap(g2.game, high)
    assert report.max_gap <= 1e-9 and report.certified
    off = gc.deterministic_policy(g2.game, [(0,), (1,)])
    report = oracle.nash_gap(g2.game, off)
    # player 0 earns 0 and could earn 4; player 1 earns 0 and could earn 2
    assert report.gap_per_player_per_state[:, 0] == pytest.approx([4.0, 2.0], abs=1e-12)
    assert report.max_gap == pytest.approx(4.0) and not report.certified


def test_nash_gap_single_player_optimal_is_zero(rng):
    game = random_mdp(rng)
    policy, _ = oracle.best_response(game, gc.uniform_policy(game), 0)
    assert oracle.nash_gap(game, [policy]).max_gap == pytest.approx(0.0, abs=1e-10)


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_nash_gap_nonnegative(seed):
    rng = np.random.default_rng(seed)
    game = random_game(rng)
    assert oracle.nash_gap(game, random_profile(rng, game)).max_gap >= -1e-9


def test_br_check_mixed_equilibrium(g2):
    mixed = [np.array([[2 / 3, 1 / 3]])] * 2
    Q = gc.q_function(g2.game, mixed, 0)
    assert Q[0, 0] == pytest.approx(Q[0, 1], abs=1e-12)
    ok, violations = oracle.br_fixed_point_check(g2.game, mixed)
    assert ok and violations == []
    assert oracle.nash_gap(g2.game, mixed).certified


def test_br_check_flags_player_zero(g2):
    ok, violations = oracle.br_fixed_point_check(g2.game, gc.deterministic_policy(g2.game, [(0,), (1,)]))
    assert not ok
    assert violations[0][:3] == (0, 0, 0) and violations[0][3] == pytest.approx(2.0)


def test_br_check_one_action_game(rng):
    game = random_game(rng, num_actions=(1, 1))
    assert oracle.br_fixed_point_check(game, gc.uniform_policy(game))[0]


def test_enumerate_g2():
    assert oracle.enumerate_nash_deterministic(get_game("G2").game) == [((0,), (0,)), ((1,), (1,))]


def test_enumerate_unique_optimum_team_game():
    payoff = np.array([[[3.0, 0.0], [0.0, 1.0]], [[0.0, 0.5], [0.2, 0.0]]])
    T = np.full((2, 2, 2, 2), 0.5)
    spec = make_team_game((2, 2), payoff, T, 0.5)
    found = oracle.enumerate_nash_deterministic(spec.game)
    maximizers = [c for c in gc.iter_deterministic_profiles(spec.game)
                  if lyapunov_gap(spec, gc.deterministic_policy(spec.game, c)) <= 1e-12]
    assert len(maximizers) == 1 and maximizers[0] in found


def test_enumerate_single_player_mdp(rng):
    # duplicate an action so ties produce several optimal policies
    r = rng.normal(size=(2, 2))
    r = np.concatenate([r, r[:, :1]], axis=1)
    T = rng.dirichlet(np.ones(2), size=(2, 2))
    T = np.concatenate([T, T[:, :1]], axis=1)
    game = gc.validate_game(gc.GameSpec(r[None], T, 0.8, [0.5, 0.5]))
    found = {c[0] for c in oracle.enumerate_nash_deterministic(game)}
    assert found == oracles.all_optimal_deterministic(r, T, 0.8)
    assert len(found) >= 2
