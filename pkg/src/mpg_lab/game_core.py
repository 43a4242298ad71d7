"""Exact evaluation of finite discounted Markov games.

Joint actions are stored as tensor axes, so ``payoff`` has shape
``(n, S, A_1, ..., A_n)`` and ``transition`` has shape ``(S, A_1, ..., A_n, S)``.
Flattening the action axes in C order gives the joint-action index
``sum_i a_i * prod_{j>i} |A_j|`` used by the game file format.

A policy profile is a list with one ``(S, A_i)`` array per player.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import networkx as nx
import numpy as np

from .errors import (
    DeviatorMismatch,
    EnumerationTooLarge,
    GameSpecError,
    IrreducibilityError,
    PolicyError,
    StochasticityError,
    SupportError,
)

ROW_TOL = 1e-12
MAX_JOINT_ACTIONS = 10**6
MAX_PROFILES = 10**6

# einsum subscripts: one letter per player, 'y' = next state, 'z' = state
_AXES = "abcdefghijklmnopqrstuvwx"


@dataclass(frozen=True)
class GameSpec:
    payoff: np.ndarray
    transition: np.ndarray
    discount: float
    mu: np.ndarray
    states: tuple = ()
    actions: tuple = ()
    witness: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        payoff = np.array(self.payoff, dtype=float)
        transition = np.array(self.transition, dtype=float)
        mu = np.array(self.mu, dtype=float).reshape(-1)
        if payoff.ndim < 3:
            raise GameSpecError("payoff must have shape (n, S, A_1, ..., A_n)")
        n, S = payoff.shape[:2]
        if payoff.ndim != 2 + n:
            raise GameSpecError(f"payoff has {payoff.ndim - 2} action axes for {n} players")
        if n > len(_AXES):
            raise GameSpecError(f"at most {len(_AXES)} players supported")
        num_actions = payoff.shape[2:]
        if transition.shape != (S, *num_actions, S):
            raise GameSpecError(
                f"transition shape {transition.shape} != {(S, *num_actions, S)}")
        if mu.shape != (S,):
            raise GameSpecError(f"mu has shape {mu.shape}, expected ({S},)")
        states = tuple(self.states) or tuple(f"s{k}" for k in range(S))
        if len(states) != S:
            raise GameSpecError("number of state names does not match payoff")
        actions = tuple(tuple(a) for a in self.actions) or tuple(
            tuple(f"a{k}" for k in range(m)) for m in num_actions)
        if tuple(len(a) for a in actions) != num_actions:
            raise GameSpecError("action names do not match payoff shape")
        object.__setattr__(self, "payoff", payoff)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)

    @property
    def num_players(self) -> int:
        return self.payoff.shape[0]

    @property
    def num_states(self) -> int:
        return self.payoff.shape[1]

    @property
    def num_actions(self) -> tuple:
        return self.payoff.shape[2:]

    @property
    def num_joint_actions(self) -> int:
        return math.prod(self.num_actions)

    @property
    def u_bar(self) -> float:
        """Largest absolute stage payoff."""
        return float(np.abs(self.payoff).max())

    def flat_payoff(self) -> np.ndarray:
        """Payoffs as ``(n, S, J)`` with J the joint-action index."""
        return self.payoff.reshape(self.num_players, self.num_states, -1)

    def flat_transition(self) -> np.ndarray:
        """Transitions as ``(S, J, S)``."""
        return self.transition.reshape(self.num_states, -1, self.num_states)


def joint_index(game: GameSpec, actions) -> int:
    return int(np.ravel_multi_index(tuple(actions), game.num_actions))


def _is_irreducible_aperiodic(matrix: np.ndarray) -> bool:
    graph = nx.DiGraph()
    graph.add_nodes_from(range(matrix.shape[0]))
    graph.add_edges_from(zip(*np.nonzero(matrix > 0)))
    return nx.is_strongly_connected(graph) and nx.is_aperiodic(graph)


def validate_game(game: GameSpec) -> GameSpec:
    """Check every invariant of the game tuple and find an ergodic witness.

    Returns a copy of ``game`` whose ``witness`` is the first joint action (in
    joint-index order) whose transition matrix is irreducible and aperiodic.
    """
    if not 0.0 < game.discount < 1.0:
        raise GameSpecError(f"discount must lie in (0, 1), got {game.discount}")
    if game.num_joint_actions > MAX_JOINT_ACTIONS:
        raise GameSpecError(
            f"{game.num_joint_actions} joint actions exceeds cap {MAX_JOINT_ACTIONS}")
    if not np.all(np.isfinite(game.payoff)):
        raise GameSpecError("payoffs must be finite")
    P = game.flat_transition()
    if not np.all(np.isfinite(P)) or np.any(P < 0):
        raise StochasticityError("transition probabilities must be finite and nonnegative")
    row_err = np.abs(P.sum(axis=-1) - 1.0)
    if row_err.max() > ROW_TOL:
        s, j = np.unravel_index(np.argmax(row_err), row_err.shape)
        raise StochasticityError(
            f"transition row (state {s}, joint action {j}) sums to {P[s, j].sum()!r}")
    if np.any(game.mu <= 0):
        raise SupportError("initial distribution must give every state positive mass")
    if abs(game.mu.sum() - 1.0) > ROW_TOL:
        raise SupportError(f"initial distribution sums to {game.mu.sum()!r}")
    for j in range(P.shape[1]):
        if _is_irreducible_aperiodic(P[:, j, :]):
            witness = tuple(int(a) for a in np.unravel_index(j, game.num_actions))
            return replace(game, witness=witness)
    raise IrreducibilityError("no joint action induces an irreducible aperiodic chain")


# ---------------------------------------------------------------------------
# policies


def uniform_policy(game: GameSpec) -> list:
    return [np.full((game.num_states, m), 1.0 / m) for m in game.num_actions]


def deterministic_policy(game: GameSpec, choices) -> list:
    """Point-mass profile; ``choices[i][s]`` is player i's action at state s."""
    pi = []
    for i, m in enumerate(game.num_actions):
        row = np.zeros((game.num_states, m))
        row[np.arange(game.num_states), np.asarray(choices[i], dtype=int)] = 1.0
        pi.append(row)
    return pi


def check_policy(game: GameSpec, pi, tol: float = ROW_TOL) -> list:
    if len(pi) != game.num_players:
        raise PolicyError(f"expected {game.num_players} policies, got {len(pi)}")
    out = []
    for i, p in enumerate(pi):
        p = np.asarray(p, dtype=float)
        if p.shape != (game.num_states, game.num_actions[i]):
            raise PolicyError(f"policy {i} has shape {p.shape}")
        if np.any(p < 0) or np.abs(p.sum(axis=1) - 1.0).max() > tol:
            raise PolicyError(f"policy {i} has a row off the simplex")
        out.append(p)
    return out


def iter_deterministic_profiles(game: GameSpec, cap: int = MAX_PROFILES):
    """Yield every deterministic joint policy as a tuple of per-player choice tuples."""
    count = math.prod(m ** game.num_states for m in game.num_actions)
    if count > cap:
        raise EnumerationTooLarge(f"{count} deterministic profiles exceeds cap {cap}")
    per_player = [list(itertools.product(range(m), repeat=game.num_states))
                  for m in game.num_actions]
    yield from itertools.product(*per_player)


def _contract(tensor, pi, keep=None, trailing=False):
    """Average the joint-action axes of ``tensor`` under ``pi``, except player ``keep``."""
    n = len(pi)
    axes = _AXES[:n]
    tail = "y" if trailing else ""
    subs = ["z" + axes + tail]
    operands = [tensor]
    for j in range(n):
        if j != keep:
            subs.append("z" + axes[j])
            operands.append(pi[j])
    out = "z" + (axes[keep] if keep is not None else "") + tail
    return np.einsum(",".join(subs) + "->" + out, *operands)


def _solve(A, b, tol=1e-10, max_refine=3):
    x = np.linalg.solve(A, b)
    for _ in range(max_refine):
        r = b - A @ x
        if np.abs(r).max() <= tol:
            break
        x = x + np.linalg.solve(A, r)
    return x


def _prep(game, pi, validate):
    return check_policy(game, pi) if validate else [np.asarray(p, dtype=float) for p in pi]


def markov_chain(game: GameSpec, pi, validate=True):
    """State transition matrix ``P_pi`` and per-player expected rewards ``r_pi``."""
    pi = _prep(game, pi, validate)
    P_pi = _contract(game.transition, pi, trailing=True)
    r_pi = np.stack([_contract(game.payoff[i], pi) for i in range(game.num_players)])
    return P_pi, r_pi


def values(game: GameSpec, pi, validate=True) -> np.ndarray:
    """``(n, S)`` array of every player's state values under ``pi``."""
    P_pi, r_pi = markov_chain(game, pi, validate)
    A = np.eye(game.num_states) - game.discount * P_pi
    return _solve(A, r_pi.T).T


def value_function(game: GameSpec, pi, i: int, validate=True) -> np.ndarray:
    pi = _prep(game, pi, validate)
    P_pi = _contract(game.transition, pi, trailing=True)
    r = _contract(game.payoff[i], pi)
    return _solve(np.eye(game.num_states) - game.discount * P_pi, r)


def value_at_dist(game: GameSpec, pi, i: int, mu=None, validate=True) -> float:
    mu = game.mu if mu is None else np.asarray(mu, dtype=float)
    return float(mu @ value_function(game, pi, i, validate))


def induced_mdp(game: GameSpec, pi, i: int, validate=True):
    """Player i's single-agent MDP when the others play ``pi[-i]``.

    Returns rewards ``(S, A_i)`` and transitions ``(S, A_i, S)``.
    """
    pi = _prep(game, pi, validate)
    r = _contract(game.payoff[i], pi, keep=i)
    P = _contract(game.transition, pi, keep=i, trailing=True)
    return r, P


def q_function(game: GameSpec, pi, i: int, validate=True) -> np.ndarray:
    """One-stage-deviation values ``Q_i(s, a_i; pi)`` as an ``(S, A_i)`` array."""
    pi = _prep(game, pi, validate)
    r, P = induced_mdp(game, pi, i, validate=False)
    V = value_function(game, pi, i, validate=False)
    return r + game.discount * P @ V


def advantage(game: GameSpec, pi, i: int) -> np.ndarray:
    pi = check_policy(game, pi)
    return q_function(game, pi, i, validate=False) - value_function(game, pi, i, validate=False)[:, None]


def discounted_visitation(game: GameSpec, pi, mu=None, validate=True) -> np.ndarray:
    """Normalized discounted state occupancy ``d^pi_mu``."""
    mu = game.mu if mu is None else np.asarray(mu, dtype=float)
    pi = _prep(game, pi, validate)
    P_pi = _contract(game.transition, pi, trailing=True)
    A = np.eye(game.num_states) - game.discount * P_pi
    return (1.0 - game.discount) * _solve(A.T, mu)


def bellman_operator(game: GameSpec, pi, i: int, q) -> np.ndarray:
    """Apply the policy-evaluation Bellman operator of player i to a q-table."""
    pi = check_policy(game, pi)
    r, P = induced_mdp(game, pi, i, validate=False)
    cont = (pi[i] * np.asarray(q, dtype=float)).sum(axis=1)
    return r + game.discount * P @ cont


def policy_gradient(game: GameSpec, pi, i: int, mu=None, validate=True) -> np.ndarray:
    """Analytic ``dV_i(mu, pi) / dpi_i(s, a_i)`` on the multilinear extension."""
    pi = _prep(game, pi, validate)
    d = discounted_visitation(game, pi, mu, validate=False)
    Q = q_function(game, pi, i, validate=False)
    return d[:, None] * Q / (1.0 - game.discount)


def performance_difference(game: GameSpec, pi, pi_prime, i: int, mu=None):
    """Both sides of the multi-agent performance difference identity.

    ``lhs = V_i(mu, pi) - V_i(mu, pi')`` by direct evaluation; ``rhs`` is the
    visitation-weighted advantage of ``pi_i`` measured under ``pi'``.
    """
    pi = check_policy(game, pi)
    pi_prime = check_policy(game, pi_prime)
    for j in range(game.num_players):
        if j != i and not np.array_equal(pi[j], pi_prime[j]):
            raise DeviatorMismatch(f"profiles also differ for player {j}, deviator is {i}")
    mu = game.mu if mu is None else np.asarray(mu, dtype=float)
    lhs = value_at_dist(game, pi, i, mu, validate=False) - value_at_dist(game, pi_prime, i, mu, validate=False)
    d = discounted_visitation(game, pi, mu, validate=False)
    adv = (pi[i] * advantage(game, pi_prime, i)).sum(axis=1)
    rhs = float(d @ adv) / (1.0 - game.discount)
    return lhs, rhs


# ---------------------------------------------------------------------------
# game file format


def game_to_dict(game: GameSpec) -> dict:
    return {
        "num_players": game.num_players,
        "discount": game.discount,
        "states": list(game.states),
        "actions": [list(a) for a in game.actions],
        "mu": game.mu.tolist(),
        "payoff": game.flat_payoff().tolist(),
        "transition": game.flat_transition().tolist(),
    }


def game_from_dict(doc: dict) -> GameSpec:
    try:
        n = int(doc["num_players"])
        states = list(doc["states"])
        actions = [list(a) if isinstance(a, list) else [f"a{k}" for k in range(int(a))]
                   for a in doc["actions"]]
        S = len(states)
        num_actions = tuple(len(a) for a in actions)
        payoff = np.array(doc["payoff"], dtype=float).reshape(n, S, *num_actions)
        transition = np.array(doc["transition"], dtype=float).reshape(S, *num_actions, S)
        return GameSpec(payoff=payoff, transition=transition, discount=doc["discount"],
                        mu=doc["mu"], states=states, actions=actions)
    except KeyError as exc:
        raise GameSpecError(f"game document is missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, GameSpecError):
            raise
        raise GameSpecError(f"malformed game document: {exc}") from None


def save_game(game: GameSpec, path) -> None:
    Path(path).write_text(json.dumps(game_to_dict(game), indent=1) + "\n")


def load_game(path) -> GameSpec:
    return game_from_dict(json.loads(Path(path).read_text()))


def save_policy(pi, path) -> None:
    Path(path).write_text(json.dumps({"policy": [np.asarray(p).tolist() for p in pi]}) + "\n")


def load_policy(game: GameSpec, path) -> list:
    doc = json.loads(Path(path).read_text())
    return check_policy(game, [np.array(p, dtype=float) for p in doc["policy"]], tol=1e-9)
