"""Built-in game catalog."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import game_core as gc
from .potential import TEAM, PotentialSpec, make_single_state_potential, make_team_game

G4_PHI = [[1.0, 0.0], [0.0, 2.0]]
G4_ZETA = ([5.0, -1.0], [0.0, 3.0])
G3_SEED = 0


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    description: str
    potential: PotentialSpec
    # False for counterexamples whose claimed potential is wrong
    is_mpg: bool = True

    @property
    def game(self) -> gc.GameSpec:
        return self.potential.game


def g1() -> CatalogEntry:
    spec = make_team_game((1,), np.ones((1, 1)), np.ones((1, 1, 1)), 0.5)
    return CatalogEntry("G1", "1 state, 1 player, 1 action, u=1, discount 0.5", spec)


def g2() -> CatalogEntry:
    spec = make_team_game((2, 2), [[[1.0, 0.0], [0.0, 2.0]]], np.ones((1, 2, 2, 1)), 0.5)
    return CatalogEntry("G2", "1-state coordination game [[1,0],[0,2]], discount 0.5", spec)


def g3(seed: int = G3_SEED) -> CatalogEntry:
    """Random 2-state 2-player 2-action team game; every transition entry >= 0.05."""
    rng = np.random.default_rng(seed)
    S, A, floor = 2, 2, 0.05
    payoff = rng.uniform(0.0, 1.0, size=(S, A, A))
    transition = floor + (1.0 - S * floor) * rng.dirichlet(np.ones(S), size=(S, A, A))
    # exact row sums after the affine map
    transition[..., -1] = 1.0 - transition[..., :-1].sum(axis=-1)
    spec = make_team_game((A, A), payoff, transition, 0.8)
    return CatalogEntry("G3", f"random 2-state 2x2 team game (seed {seed}), discount 0.8", spec)


def g4() -> CatalogEntry:
    spec = make_single_state_potential(G4_PHI, G4_ZETA, 0.5)
    return CatalogEntry("G4", "single-state potential game phi=[[1,0],[0,2]] plus zeta terms", spec)


def gz() -> CatalogEntry:
    """Matching pennies (zero-sum) posing as a team game; fails MPG verification."""
    u1 = np.array([[1.0, -1.0], [-1.0, 1.0]])
    game = gc.validate_game(gc.GameSpec(
        payoff=np.stack([u1, -u1])[:, None], transition=np.ones((1, 2, 2, 1)),
        discount=0.5, mu=[1.0]))
    return CatalogEntry("GZ", "zero-sum matching pennies with a claimed team potential",
                        PotentialSpec(TEAM, game), is_mpg=False)


_BUILDERS = {"G1": g1, "G2": g2, "G3": g3, "G4": g4, "GZ": gz}


def builtin_games() -> dict:
    return {name: build() for name, build in _BUILDERS.items()}


def get_game(name: str) -> CatalogEntry:
    """Look up a built-in by name; ``G3:<seed>`` selects another G3 instance."""
    base, _, arg = name.partition(":")
    if base == "G3" and arg:
        return g3(int(arg))
    if base not in _BUILDERS or arg:
        raise KeyError(f"unknown built-in game {name!r}; choose from {sorted(_BUILDERS)}")
    return _BUILDERS[base]()


def random_game(rng: np.random.Generator, num_states: int = 2, num_actions=(2, 2),
                discount: float | None = None, low: float = -1.0) -> gc.GameSpec:
    """General-sum game with payoffs uniform on [low, 1] and Dirichlet transition rows."""
    num_actions = tuple(num_actions)
    n = len(num_actions)
    if discount is None:
        discount = float(rng.uniform(0.1, 0.95))
    payoff = rng.uniform(low, 1.0, size=(n, num_states, *num_actions))
    transition = rng.dirichlet(np.ones(num_states), size=(num_states, *num_actions))
    transition[..., -1] = 1.0 - transition[..., :-1].sum(axis=-1)
    mu = rng.dirichlet(np.ones(num_states))
    mu[-1] = 1.0 - mu[:-1].sum()
    return gc.validate_game(gc.GameSpec(payoff, transition, discount, mu))


def random_profile(rng: np.random.Generator, game: gc.GameSpec) -> list:
    return [rng.dirichlet(np.ones(m), size=game.num_states) for m in game.num_actions]
