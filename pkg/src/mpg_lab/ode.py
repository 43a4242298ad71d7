"""Euler integration of the continuous-time best-response flow and its Lyapunov monitor."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import game_core as gc
from . import oracle
from .errors import ConfigError
from .potential import PotentialSpec, lyapunov_gap, potential_max


@dataclass(frozen=True)
class FlowConfig:
    """Euler step, horizon and per-(player, state) rates ``gamma`` (default all ones)."""

    dt: float = 0.01
    horizon: float = 50.0
    gamma: np.ndarray | None = None
    eta: float | None = None

    def rates(self, game: gc.GameSpec) -> np.ndarray:
        gamma = (np.ones((game.num_players, game.num_states)) if self.gamma is None
                 else np.array(self.gamma, dtype=float))
        if gamma.shape != (game.num_players, game.num_states):
            raise ConfigError(f"gamma has shape {gamma.shape}, expected {(game.num_players, game.num_states)}")
        eta = float(gamma.min()) if self.eta is None else self.eta
        if eta <= 0 or gamma.min() < eta:
            raise ConfigError(f"rates must be bounded below by a positive eta (eta={eta}, min={gamma.min()})")
        if self.dt <= 0 or self.horizon <= 0:
            raise ConfigError("dt and horizon must be positive")
        if self.dt * gamma.max() > 1.0:
            raise ConfigError(f"dt * max gamma = {self.dt * gamma.max()} exceeds 1")
        return gamma


@dataclass
class Trajectory:
    tau: np.ndarray
    policies: list
    phi: np.ndarray
    selections: np.ndarray  # (steps, n, S) greedy action used for each step
    nash_gap: np.ndarray | None = None


def greedy_selection(game: gc.GameSpec, pi) -> np.ndarray:
    """Smallest-index maximizer of each exact Q-row, shape ``(n, S)``."""
    return np.stack([np.argmax(gc.q_function(game, pi, i, validate=False), axis=1)
                     for i in range(game.num_players)])


def integrate_flow(spec: PotentialSpec, pi0, cfg: FlowConfig = FlowConfig(), mu=None,
                   track_nash: bool = False) -> Trajectory:
    """Explicit Euler on ``dpi_i(s)/dtau = gamma_i(s) (br_i(s; pi) - pi_i(s))``.

    Every player moves simultaneously toward the point mass on its greedy
    action under the exact Q-function; the step weight ``dt * gamma`` is at
    most one so each iterate stays on the simplex.
    """
    game = spec.game
    gamma = cfg.rates(game)
    pi = gc.check_policy(game, pi0)
    steps = int(round(cfg.horizon / cfg.dt))
    phi_max, _ = potential_max(spec, mu)
    S = np.arange(game.num_states)

    policies = [pi]
    phi = [lyapunov_gap(spec, pi, mu, phi_max=phi_max)]
    gaps = [oracle.nash_gap(game, pi).max_gap] if track_nash else None
    selections = np.empty((steps, game.num_players, game.num_states), dtype=np.int64)
    for k in range(steps):
        sel = greedy_selection(game, pi)
        selections[k] = sel
        new = []
        for i, p in enumerate(pi):
            h = (cfg.dt * gamma[i])[:, None]
            target = np.zeros_like(p)
            target[S, sel[i]] = 1.0
            new.append((1.0 - h) * p + h * target)
        pi = new
        policies.append(pi)
        phi.append(lyapunov_gap(spec, pi, mu, phi_max=phi_max))
        if track_nash:
            gaps.append(oracle.nash_gap(game, pi).max_gap)
    tau = cfg.dt * np.arange(steps + 1)
    return Trajectory(tau, policies, np.array(phi), selections,
                      None if gaps is None else np.array(gaps))


@dataclass
class LyapunovReport:
    deltas: np.ndarray
    switch_steps: np.ndarray
    violations: np.ndarray
    switch_violations: np.ndarray
    tol_step: float

    @property
    def fraction_flagged(self) -> float:
        return self.violations.size / max(self.deltas.size, 1)

    @property
    def max_violation(self) -> float:
        ok = np.ones(self.deltas.size, dtype=bool)
        ok[self.switch_steps] = False
        return float(self.deltas[ok].max()) if ok.any() else 0.0

    @property
    def passed(self) -> bool:
        return self.violations.size == 0


def switch_steps(traj: Trajectory) -> np.ndarray:
    """Steps whose greedy selection differs from the previous step's."""
    sel = traj.selections
    changed = np.any(sel[1:] != sel[:-1], axis=(1, 2))
    return np.nonzero(changed)[0] + 1


def lyapunov_monotonicity_report(traj: Trajectory, tol_step: float | None = None) -> LyapunovReport:
    """Flag every Euler step on which the Lyapunov gap rises by more than ``tol_step``.

    Rises on the first step after a selection switch are reported separately
    and do not fail the report.
    """
    dt = float(traj.tau[1] - traj.tau[0]) if traj.tau.size > 1 else 0.0
    tol_step = 1e-6 * dt if tol_step is None else tol_step
    deltas = np.diff(traj.phi)
    switches = switch_steps(traj)
    rising = deltas > tol_step
    at_switch = np.zeros(deltas.size, dtype=bool)
    at_switch[switches] = True
    return LyapunovReport(deltas, switches, np.nonzero(rising & ~at_switch)[0],
                          np.nonzero(rising & at_switch)[0], tol_step)
