"""Exact best responses, Nash gaps and equilibrium certification."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import game_core as gc

EXACT_EPSILON = 1e-6
LEARNING_EPSILON = 0.05


def best_response(game: gc.GameSpec, pi, i: int, tol: float = 1e-10):
    """Optimal stationary policy of player i against ``pi[-i]``.

    Value iteration on the induced MDP until the sup-norm error bound drops
    below ``tol``, then greedy extraction with ties broken toward the smallest
    action index.  Returns ``(policy, values)``; ``values`` is the exact value of
    the returned deterministic policy, optimal at every start state.
    Player i's own entry of ``pi`` is ignored.
    """
    pi = list(pi)
    pi[i] = np.full((game.num_states, game.num_actions[i]), 1.0 / game.num_actions[i])
    r, P = gc.induced_mdp(game, pi, i)
    delta = game.discount
    V = np.zeros(game.num_states)
    scale = max(float(np.abs(r).max()), 1e-300) / (1.0 - delta)
    # contraction bound: enough sweeps to bring the initial error below tol
    max_iter = 10 + max(0, math.ceil(math.log(tol * (1.0 - delta) / scale) / math.log(delta)))
    stop = tol * (1.0 - delta) / (2.0 * delta)
    for _ in range(max_iter):
        V_new = (r + delta * P @ V).max(axis=1)
        done = np.abs(V_new - V).max() <= stop
        V = V_new
        if done:
            break
    greedy = np.argmax(r + delta * P @ V, axis=1)
    S = np.arange(game.num_states)
    V_exact = gc._solve(np.eye(game.num_states) - delta * P[S, greedy], r[S, greedy])
    policy = np.zeros((game.num_states, game.num_actions[i]))
    policy[S, greedy] = 1.0
    return policy, V_exact


@dataclass
class NashReport:
    gap_per_player_per_state: np.ndarray
    max_gap: float
    epsilon: float
    certified: bool

    def to_dict(self) -> dict:
        return {
            "gap_per_player_per_state": self.gap_per_player_per_state.tolist(),
            "max_gap": self.max_gap,
            "epsilon": self.epsilon,
            "certified": self.certified,
        }


def nash_gap(game: gc.GameSpec, pi, mu=None, epsilon: float = EXACT_EPSILON) -> NashReport:
    """Best-response improvement of every player at every start state.

    Checking every state certifies every initial distribution, so ``mu`` is
    accepted for interface symmetry but not needed.
    """
    pi = gc.check_policy(game, pi)
    V = gc.values(game, pi, validate=False)
    gaps = np.empty((game.num_players, game.num_states))
    for i in range(game.num_players):
        _, V_br = best_response(game, pi, i)
        gaps[i] = V_br - V[i]
    max_gap = float(gaps.max())
    return NashReport(gaps, max_gap, epsilon, max_gap <= epsilon)


def br_fixed_point_check(game: gc.GameSpec, pi, tol: float = 1e-8):
    """Is every supported action an optimal one-stage deviation?

    Returns ``(ok, violations)`` with one ``(player, state, action, shortfall)``
    tuple per action played with probability above ``tol`` whose Q-value falls
    more than ``tol`` below the row maximum.
    """
    pi = gc.check_policy(game, pi)
    violations = []
    for i in range(game.num_players):
        Q = gc.q_function(game, pi, i, validate=False)
        best = Q.max(axis=1, keepdims=True)
        short = best - Q
        for s, a in zip(*np.nonzero((pi[i] > tol) & (short > tol))):
            violations.append((i, int(s), int(a), float(short[s, a])))
    return not violations, violations


def enumerate_nash_deterministic(game: gc.GameSpec, epsilon: float = EXACT_EPSILON,
                                 cap: int = gc.MAX_PROFILES) -> list:
    """Every deterministic epsilon-Nash profile, as per-player choice tuples."""
    found = []
    for choices in gc.iter_deterministic_profiles(game, cap):
        if nash_gap(game, gc.deterministic_policy(game, choices), epsilon=epsilon).certified:
            found.append(choices)
    return found
