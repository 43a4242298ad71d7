import numpy as np
import pytest

from mpg_lab import game_core as gc
from mpg_lab import ode, oracle
from mpg_lab.errors import ConfigError
from mpg_lab.games import g3, get_game
from mpg_lab.potential import make_team_game, potential_max


def coarse_team_game(seed):
    """3-player 2-state team game with sparse-ish transitions; used at large dt."""
    rng = np.random.default_rng(seed)
    P = 0.02 + 0.96 * rng.dirichlet(0.5 * np.ones(2), size=(2, 2, 2, 2))
    P[..., -1] = 1.0 - P[..., :-1].sum(axis=-1)
    return make_team_game((2, 2, 2), rng, P, 0.9)


@pytest.mark.parametrize("name", ["G2", "G3", "G4"])
def test_maximizer_is_stationary(name):
    spec = get_game(name).potential
    _, choices = potential_max(spec)
    pi0 = gc.deterministic_policy(spec.game, choices)
    traj = ode.integrate_flow(spec, pi0, ode.FlowConfig(dt=0.01, horizon=5.0))
    assert max(np.abs(p - q).max() for pi in traj.policies for p, q in zip(pi, pi0)) <= 1e-9
    report = ode.lyapunov_monotonicity_report(traj)
    assert np.all(report.deltas == 0.0) and report.switch_steps.size == 0


def test_g2_from_uniform():
    spec = get_game("G2").potential
    traj = ode.integrate_flow(spec, gc.uniform_policy(spec.game), ode.FlowConfig(0.01, 50.0),
                              track_nash=True)
    report = ode.lyapunov_monotonicity_report(traj)
    assert report.passed and report.tol_step == pytest.approx(1e-8)
    assert traj.nash_gap[-1] <= 1e-3 and traj.phi[-1] <= 1e-3
    assert oracle.nash_gap(spec.game, traj.policies[-1]).max_gap == pytest.approx(traj.nash_gap[-1])
    assert traj.tau[-1] == pytest.approx(50.0) and len(traj.policies) == 5001


@pytest.mark.parametrize("name", ["G2", "G3", "G4"])
def test_halving_dt_halves_largest_step_change(name):
    spec = get_game(name).potential
    peaks = []
    for dt in (0.02, 0.01, 0.005):
        traj = ode.integrate_flow(spec, gc.uniform_policy(spec.game), ode.FlowConfig(dt, 2.0))
        peaks.append(np.diff(traj.phi).max())
    assert peaks[0] < 0
    for coarse, fine in zip(peaks, peaks[1:]):
        assert fine / coarse == pytest.approx(0.5, abs=0.01)


def test_switch_step_rises_shrink_with_dt():
    spec = coarse_team_game(4)
    rises = []
    for dt in (0.4, 0.2, 0.1):
        traj = ode.integrate_flow(spec, gc.uniform_policy(spec.game), ode.FlowConfig(dt, 10.0))
        report = ode.lyapunov_monotonicity_report(traj)
        assert report.passed
        rises.append(report.deltas[report.switch_violations].max(initial=0.0))
    assert rises[0] > 0.1
    assert rises[1] <= rises[0] / 2 and rises[2] <= rises[1] / 2


@pytest.mark.parametrize("seed", range(10))
def test_random_team_games_converge(seed):
    spec = g3(seed).potential
    traj = ode.integrate_flow(spec, gc.uniform_policy(spec.game), ode.FlowConfig(0.01, 50.0))
    report = ode.lyapunov_monotonicity_report(traj)
    assert report.passed
    assert np.all(traj.phi >= -1e-12)
    assert traj.phi[-1] <= 1e-3
    assert oracle.nash_gap(spec.game, traj.policies[-1]).max_gap <= 1e-3


@pytest.mark.parametrize("name", ["G2", "G3", "G4"])
def test_strict_decrease_away_from_equilibrium(name):
    spec = get_game(name).potential
    traj = ode.integrate_flow(spec, gc.uniform_policy(spec.game), ode.FlowConfig(0.01, 20.0),
                              track_nash=True)
    busy = traj.nash_gap[:-1] > 0.01
    assert busy.any()
    assert np.all(np.diff(traj.phi)[busy] < 0)


def test_iterates_stay_on_simplex_with_uneven_rates():
    spec = get_game("G3").potential
    gamma = np.array([[1.0, 0.3], [0.5, 2.0]])
    cfg = ode.FlowConfig(dt=0.5, horizon=20.0, gamma=gamma, eta=0.3)
    traj = ode.integrate_flow(spec, gc.uniform_policy(spec.game), cfg)
    for pi in traj.policies:
        for p in pi:
            assert np.all(p >= 0) and np.abs(p.sum(axis=1) - 1).max() <= 1e-12
    assert traj.phi[-1] <= 1e-3


@pytest.mark.parametrize("cfg", [
    ode.FlowConfig(dt=1.5),
    ode.FlowConfig(dt=0.6, gamma=[[2.0]] * 2),
    ode.FlowConfig(dt=0.0),
    ode.FlowConfig(gamma=[[1.0], [0.0]]),
    ode.FlowConfig(gamma=[[1.0], [0.5]], eta=0.8),
    ode.FlowConfig(gamma=[[1.0, 1.0]]),
])
def test_flow_config_errors(cfg):
    spec = get_game("G2").potential
    with pytest.raises(ConfigError):
        ode.integrate_flow(spec, gc.uniform_policy(spec.game), cfg)


def test_report_separates_switch_steps():
    tau = np.arange(5) * 0.1
    sel = np.array([0, 0, 1, 1]).reshape(4, 1, 1)
    traj = ode.Trajectory(tau, [None] * 5, np.array([1.0, 0.9, 0.95, 0.97, 0.5]), sel)
    report = ode.lyapunov_monotonicity_report(traj)
    assert report.switch_steps.tolist() == [2]
    assert report.switch_violations.tolist() == [2]
    # step 1 rises without a switch; step 2 rises right after one
    assert report.violations.tolist() == [1]
    assert not report.passed and report.max_violation == pytest.approx(0.05)
