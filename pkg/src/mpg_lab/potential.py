"""Markov potential game constructors, potential evaluation, and the Lyapunov gap."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import game_core as gc
from .errors import MPGLabError, PayoffMismatch

TEAM = "team"
SINGLE_STATE = "single_state_potential"


@dataclass(frozen=True)
class PotentialSpec:
    """A game together with a claimed state-dependent potential.

    For ``kind == "team"`` the potential is player 0's value function.  For
    ``kind == "single_state_potential"`` it is ``E_pi[phi(a)] / (1 - delta)``
    on the single state.  Constructing this class directly skips the
    membership checks performed by the ``make_*`` constructors, which is how
    non-potential candidates are fed to :func:`verify_mpg`.
    """

    kind: str
    game: gc.GameSpec
    phi: np.ndarray | None = None
    zeta: tuple | None = None

    def __post_init__(self):
        if self.kind not in (TEAM, SINGLE_STATE):
            raise MPGLabError(f"unknown potential kind {self.kind!r}")
        if self.kind == SINGLE_STATE:
            if self.phi is None or self.game.num_states != 1:
                raise MPGLabError("single-state potential needs phi and a one-state game")
            object.__setattr__(self, "phi", np.array(self.phi, dtype=float))


def make_team_game(num_actions, payoff, transition, discount, mu=None,
                   states=(), actions=()) -> PotentialSpec:
    """Identical-interest Markov game.

    ``payoff`` is either the common ``(S, A_1, ..., A_n)`` table, a stack of
    per-player tables that must agree exactly, or a ``numpy.random.Generator``
    from which a common table is drawn uniformly on [0, 1].
    """
    num_actions = tuple(int(m) for m in num_actions)
    n = len(num_actions)
    transition = np.asarray(transition, dtype=float)
    S = transition.shape[0]
    if isinstance(payoff, np.random.Generator):
        common = payoff.uniform(0.0, 1.0, size=(S, *num_actions))
    else:
        payoff = np.asarray(payoff, dtype=float)
        if payoff.shape == (S, *num_actions):
            common = payoff
        elif payoff.shape == (n, S, *num_actions):
            for i in range(1, n):
                if not np.array_equal(payoff[i], payoff[0]):
                    raise PayoffMismatch(f"player {i}'s payoff differs from player 0's")
            common = payoff[0]
        else:
            raise PayoffMismatch(f"payoff shape {payoff.shape} fits neither a common nor a stacked table")
    if mu is None:
        mu = np.full(S, 1.0 / S)
    game = gc.GameSpec(payoff=np.broadcast_to(common, (n, *common.shape)),
                       transition=transition, discount=discount, mu=mu,
                       states=states, actions=actions)
    return PotentialSpec(TEAM, gc.validate_game(game))


def make_single_state_potential(potential_matrix, zeta, discount) -> PotentialSpec:
    """One-state game with ``u_i(a) = phi(a) + zeta_i(a_{-i})``.

    ``zeta[i]`` is indexed by the other players' actions in player order.
    """
    phi = np.asarray(potential_matrix, dtype=float)
    num_actions = phi.shape
    n = phi.ndim
    zeta = tuple(np.asarray(z, dtype=float) for z in zeta)
    if len(zeta) != n:
        raise MPGLabError(f"need {n} zeta tables, got {len(zeta)}")
    payoff = np.empty((n, 1, *num_actions))
    for i, z in enumerate(zeta):
        others = num_actions[:i] + num_actions[i + 1:]
        if z.shape != others:
            raise MPGLabError(f"zeta[{i}] has shape {z.shape}, expected {others}")
        payoff[i, 0] = phi + np.expand_dims(z, axis=i)
    transition = np.ones((1, *num_actions, 1))
    game = gc.GameSpec(payoff=payoff, transition=transition, discount=discount, mu=[1.0])
    return PotentialSpec(SINGLE_STATE, gc.validate_game(game), phi=phi, zeta=zeta)


def state_potential(spec: PotentialSpec, pi, validate=True) -> np.ndarray:
    """``Phi(s, pi)`` for every state."""
    if spec.kind == TEAM:
        return gc.value_function(spec.game, pi, 0, validate)
    pi = gc.check_policy(spec.game, pi) if validate else pi
    expected = gc._contract(spec.phi[None], [np.asarray(p) for p in pi])
    return expected / (1.0 - spec.game.discount)


def potential_value(spec: PotentialSpec, pi, mu=None, validate=True) -> float:
    mu = spec.game.mu if mu is None else np.asarray(mu, dtype=float)
    return float(mu @ state_potential(spec, pi, validate))


def potential_max(spec: PotentialSpec, mu=None, cap: int = gc.MAX_PROFILES):
    """Maximum of ``Phi(mu, .)`` over policies, by deterministic-profile enumeration.

    Returns ``(value, choices)`` where ``choices`` is the first maximizer in
    enumeration order.
    """
    best, arg = -np.inf, None
    for choices in gc.iter_deterministic_profiles(spec.game, cap):
        v = potential_value(spec, gc.deterministic_policy(spec.game, choices), mu, validate=False)
        if v > best:
            best, arg = v, choices
    return best, arg


def lyapunov_gap(spec: PotentialSpec, pi, mu=None, cap: int = gc.MAX_PROFILES,
                 phi_max: float | None = None) -> float:
    """``max_w Phi(mu, w) - Phi(mu, pi)``; pass ``phi_max`` to skip the enumeration."""
    if phi_max is None:
        phi_max, _ = potential_max(spec, mu, cap)
    return phi_max - potential_value(spec, pi, mu)


@dataclass
class MPGReport:
    max_violation_per_state: np.ndarray
    max_violation_at_mu: float
    tol: float
    num_samples: int

    @property
    def max_violation(self) -> float:
        return max(float(self.max_violation_per_state.max()), self.max_violation_at_mu)

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol


def _random_profile(game, rng):
    return [rng.dirichlet(np.ones(m), size=game.num_states) for m in game.num_actions]


def verify_mpg(spec: PotentialSpec, num_samples: int = 100, tol: float = 1e-8,
               seed: int = 0) -> MPGReport:
    """Sampled check that unilateral deviations move Phi and V_i by the same amount."""
    game = spec.game
    rng = np.random.default_rng(seed)
    worst = np.zeros(game.num_states)
    worst_mu = 0.0
    for _ in range(num_samples):
        i = int(rng.integers(game.num_players))
        pi = _random_profile(game, rng)
        pi_dev = list(pi)
        pi_dev[i] = rng.dirichlet(np.ones(game.num_actions[i]), size=game.num_states)
        d_phi = state_potential(spec, pi_dev) - state_potential(spec, pi)
        d_v = gc.value_function(game, pi_dev, i) - gc.value_function(game, pi, i)
        worst = np.maximum(worst, np.abs(d_phi - d_v))
        worst_mu = max(worst_mu, abs(float(game.mu @ (d_phi - d_v))))
    return MPGReport(worst, worst_mu, tol, num_samples)


def potential_to_dict(spec: PotentialSpec) -> dict:
    doc = gc.game_to_dict(spec.game)
    section = {"kind": spec.kind}
    if spec.kind == SINGLE_STATE:
        section["phi"] = spec.phi.tolist()
        section["zeta"] = [z.tolist() for z in spec.zeta]
    doc["potential"] = section
    return doc


def potential_from_dict(doc: dict) -> PotentialSpec:
    """Rebuild a potential spec; single-state potentials are re-derived from phi and zeta."""
    section = doc["potential"]
    game = gc.validate_game(gc.game_from_dict(doc))
    if section["kind"] == SINGLE_STATE:
        rebuilt = make_single_state_potential(section["phi"], section["zeta"], game.discount)
        if not np.array_equal(rebuilt.game.payoff, game.payoff):
            raise PayoffMismatch("payoff table disagrees with phi + zeta")
        return PotentialSpec(SINGLE_STATE, game, rebuilt.phi, rebuilt.zeta)
    return PotentialSpec(section["kind"], game)
