import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpg_lab import game_core as gc
from mpg_lab.errors import EnumerationTooLarge, PayoffMismatch
from mpg_lab.games import get_game, random_profile
from mpg_lab.potential import (
    TEAM,
    PotentialSpec,
    lyapunov_gap,
    make_single_state_potential,
    make_team_game,
    potential_from_dict,
    potential_max,
    potential_to_dict,
    potential_value,
    state_potential,
    verify_mpg,
)

seeds = st.integers(0, 2**32 - 1)


def random_team(rng, num_states=2, num_actions=(2, 2), discount=0.8):
    T = 0.05 + 0.9 * rng.dirichlet(np.ones(num_states), size=(num_states, *num_actions))
    T[..., -1] = 1.0 - T[..., :-1].sum(axis=-1)
    return make_team_game(num_actions, rng, T, discount)


def four_cycle_sums(payoff):
    """Monderer-Shapley test for a 2-player matrix game: the sum of the
    deviator's payoff changes around every unilateral 4-cycle."""
    u0, u1 = payoff
    sums = []
    for a, b in itertools.permutations(range(u0.shape[0]), 2):
        for c, d in itertools.permutations(range(u0.shape[1]), 2):
            sums.append((u0[b, c] - u0[a, c]) + (u1[b, d] - u1[b, c])
                        + (u0[a, d] - u0[b, d]) + (u1[a, c] - u1[a, d]))
    return np.array(sums)


def test_g2_potential_at_optimum():
    spec = get_game("G2").potential
    pi = gc.deterministic_policy(spec.game, [(1,), (1,)])
    assert potential_value(spec, pi) == pytest.approx(4.0, abs=1e-12)
    assert potential_max(spec) == (pytest.approx(4.0), ((1,), (1,)))


def test_g2_lyapunov_gap_at_low_equilibrium():
    spec = get_game("G2").potential
    pi = gc.deterministic_policy(spec.game, [(0,), (0,)])
    assert potential_value(spec, pi) == pytest.approx(2.0, abs=1e-12)
    assert lyapunov_gap(spec, pi) == pytest.approx(2.0, abs=1e-12)
    best = gc.deterministic_policy(spec.game, [(1,), (1,)])
    assert lyapunov_gap(spec, best) == 0.0


def test_team_payoff_mismatch():
    table = np.array([[[1.0, 0.0], [0.0, 2.0]]])
    stacked = np.stack([table, table.copy()])
    stacked[1, 0, 1, 1] = 2.5
    with pytest.raises(PayoffMismatch):
        make_team_game((2, 2), stacked, np.ones((1, 2, 2, 1)), 0.5)
    ok = make_team_game((2, 2), np.stack([table, table]), np.ones((1, 2, 2, 1)), 0.5)
    assert np.array_equal(ok.game.payoff[1], table)


def test_one_player_game_is_a_team_game(rng):
    T = rng.dirichlet(np.ones(3), size=(3, 4))
    spec = make_team_game((4,), rng.normal(size=(3, 4)), T, 0.9)
    assert verify_mpg(spec, num_samples=30).max_violation <= 1e-10


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_team_games_verify(seed):
    spec = random_team(np.random.default_rng(seed), num_states=3, num_actions=(2, 3))
    assert verify_mpg(spec, num_samples=20, seed=seed).max_violation <= 1e-10


def test_g4_verifies_and_satisfies_cycle_condition():
    entry = get_game("G4")
    assert verify_mpg(entry.potential, num_samples=100, tol=1e-8).passed
    assert np.allclose(four_cycle_sums(entry.game.payoff[:, 0]), 0.0, atol=1e-12)


def test_zero_sum_counterexample_fails():
    entry = get_game("GZ")
    assert not entry.is_mpg
    # the cycle test proves no exact potential exists at all
    assert four_cycle_sums(entry.game.payoff[:, 0]).min() == -8.0
    report = verify_mpg(entry.potential, num_samples=100, tol=1e-8)
    assert not report.passed and report.max_violation > 1.0


def test_zero_sum_counterexample_by_deterministic_deviation():
    spec = get_game("GZ").potential
    game = spec.game
    found = []
    for choices in gc.iter_deterministic_profiles(game):
        for i in range(2):
            for a in range(2):
                dev = [list(c) for c in choices]
                dev[i] = [a]
                base_pi = gc.deterministic_policy(game, choices)
                dev_pi = gc.deterministic_policy(game, dev)
                d_phi = potential_value(spec, dev_pi) - potential_value(spec, base_pi)
                d_v = (gc.value_at_dist(game, dev_pi, i) - gc.value_at_dist(game, base_pi, i))
                if abs(d_phi - d_v) > 1e-8:
                    found.append((choices, i, a))
    assert found


def test_zero_zeta_reduces_to_team_game():
    phi = np.array([[3.0, 1.0, 0.0], [0.5, 2.0, 1.0]])
    single = make_single_state_potential(phi, (np.zeros(3), np.zeros(2)), 0.6)
    team = make_team_game((2, 3), phi[None], np.ones((1, 2, 3, 1)), 0.6)
    assert np.array_equal(single.game.payoff, team.game.payoff)
    pi = [np.array([[0.2, 0.8]]), np.array([[0.1, 0.3, 0.6]])]
    assert state_potential(single, pi) == pytest.approx(state_potential(team, pi), abs=1e-12)


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_lyapunov_gap_nonnegative_and_shift_invariant(seed):
    rng = np.random.default_rng(seed)
    spec = random_team(rng)
    pi = random_profile(rng, spec.game)
    gap = lyapunov_gap(spec, pi)
    assert gap >= -1e-12
    shifted = make_team_game((2, 2), spec.game.payoff[0] + 1.7, spec.game.transition, 0.8)
    assert lyapunov_gap(shifted, pi) == pytest.approx(gap, abs=1e-10)
    assert potential_value(shifted, pi) == pytest.approx(potential_value(spec, pi) + 1.7 / 0.2, abs=1e-10)


def test_potential_max_beats_sampled_policies(rng):
    spec = random_team(rng, num_states=3)
    best, _ = potential_max(spec)
    samples = [potential_value(spec, random_profile(rng, spec.game)) for _ in range(200)]
    assert max(samples) <= best + 1e-12


def test_enumeration_cap(rng):
    spec = random_team(rng, num_states=3, num_actions=(3, 3))
    with pytest.raises(EnumerationTooLarge):
        potential_max(spec, cap=100)


@pytest.mark.parametrize("name", ["G2", "G3", "G4", "GZ"])
def test_serialization_round_trip(name):
    spec = get_game(name).potential
    back = potential_from_dict(potential_to_dict(spec))
    assert back.kind == spec.kind
    assert np.array_equal(back.game.payoff, spec.game.payoff)
    assert np.array_equal(back.game.transition, spec.game.transition)
    if spec.phi is not None:
        assert np.array_equal(back.phi, spec.phi)


def test_tampered_single_state_file_is_rejected():
    doc = potential_to_dict(get_game("G4").potential)
    doc["payoff"][0][0][0] += 1.0
    with pytest.raises(PayoffMismatch):
        potential_from_dict(doc)


def test_claimed_team_kind_on_general_game_is_checked_not_trusted(rng):
    game = gc.validate_game(gc.GameSpec(rng.normal(size=(2, 1, 2, 2)), np.ones((1, 2, 2, 1)), 0.5, [1.0]))
    assert not verify_mpg(PotentialSpec(TEAM, game)).passed
