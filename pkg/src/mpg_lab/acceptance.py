"""Acceptance criteria, each runnable on its own and as one suite."""
from __future__ import annotations

import csv
import filecmp
import functools
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import game_core as gc
from . import learner, ode, oracle
from .errors import DivergenceError, ScheduleError, SummabilityError, TimescaleError
from .games import g3, get_game, random_game, random_profile
from .harness import ExperimentConfig, run_experiment
from .potential import verify_mpg

SEEDS = tuple(range(10))
LEARNING_GAMES = ("G2", "G3")


@dataclass
class CriterionResult:
    number: int
    name: str
    target: str
    measured: str
    passed: bool
    seconds: float = 0.0
    budget: float = float("inf")

    @property
    def ok(self) -> bool:
        return self.passed and self.seconds <= self.budget

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return (f"[{status}] {self.number:>2} {self.name}: target {self.target}; "
                f"measured {self.measured}; {self.seconds:.1f}s (budget {self.budget:.0f}s)")


def _timed(number, name, budget):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            target, measured, passed = fn(*args, **kwargs)
            return CriterionResult(number, name, target, measured, bool(passed),
                                   time.perf_counter() - t0, budget)
        return run
    return wrap


@_timed(1, "Bellman contraction", 10)
def bellman_contraction(trials=1000, seed=1):
    rng = np.random.default_rng(seed)
    failures, worst = 0, -np.inf
    for _ in range(trials):
        game = random_game(rng)
        pi = random_profile(rng, game)
        i = int(rng.integers(game.num_players))
        shape = (game.num_states, game.num_actions[i])
        q, q2 = rng.normal(0, 5, shape), rng.normal(0, 5, shape)
        lhs = np.abs(gc.bellman_operator(game, pi, i, q) - gc.bellman_operator(game, pi, i, q2)).max()
        rhs = game.discount * np.abs(q - q2).max()
        worst = max(worst, lhs - rhs)
        failures += lhs > rhs + 1e-12
    return ("0 violations of |Tq-Tq'| <= delta|q-q'| + 1e-12 in 1000 trials",
            f"{failures} violations, max excess {worst:.2e}", failures == 0)


@_timed(2, "Value/Q consistency", 10)
def value_q_consistency(trials=200, seed=2):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        game = random_game(rng)
        pi = random_profile(rng, game)
        V = gc.values(game, pi)
        for i in range(game.num_players):
            Q = gc.q_function(game, pi, i)
            worst = max(worst, float(np.abs((pi[i] * Q).sum(axis=1) - V[i]).max()))
    return "max |sum_a pi Q - V| <= 1e-10 on 200 games", f"{worst:.2e}", worst <= 1e-10


def finite_difference_gradient(game, pi, i, mu, h=1e-6):
    """Central differences of V_i(mu, .) in the raw (unnormalized) entries of pi_i."""
    grad = np.empty_like(pi[i])
    for s in range(game.num_states):
        for a in range(game.num_actions[i]):
            plus = [p.copy() for p in pi]
            minus = [p.copy() for p in pi]
            plus[i][s, a] += h
            minus[i][s, a] -= h
            grad[s, a] = (gc.value_at_dist(game, plus, i, mu, validate=False)
                          - gc.value_at_dist(game, minus, i, mu, validate=False)) / (2 * h)
    return grad


@_timed(3, "Policy gradient theorem", 30)
def policy_gradient_identity(trials=20, seed=3):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        game = random_game(rng, low=0.0)
        pi = random_profile(rng, game)
        for i in range(game.num_players):
            an = gc.policy_gradient(game, pi, i)
            fd = finite_difference_gradient(game, pi, i, game.mu)
            worst = max(worst, float((np.abs(fd - an) / np.abs(an)).max()))
    return "relative error <= 1e-4, all coordinates of 20 games", f"{worst:.2e}", worst <= 1e-4


@_timed(4, "Performance difference lemma", 10)
def performance_difference_identity(trials=200, seed=4):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        game = random_game(rng)
        pi_prime = random_profile(rng, game)
        i = int(rng.integers(game.num_players))
        pi = list(pi_prime)
        pi[i] = rng.dirichlet(np.ones(game.num_actions[i]), size=game.num_states)
        lhs, rhs = gc.performance_difference(game, pi, pi_prime, i)
        worst = max(worst, abs(lhs - rhs))
    return "|lhs - rhs| <= 1e-8 on 200 deviations", f"{worst:.2e}", worst <= 1e-8


@_timed(5, "Nash <=> br fixed point", 60)
def nash_fixed_point_agreement():
    games = [get_game("G2").game] + [g3(seed).game for seed in SEEDS]
    total = agree = 0
    for game in games:
        for choices in gc.iter_deterministic_profiles(game):
            pi = gc.deterministic_policy(game, choices)
            fixed, _ = oracle.br_fixed_point_check(game, pi, tol=1e-8)
            certified = oracle.nash_gap(game, pi, epsilon=1e-6).certified
            total += 1
            agree += fixed == certified
    return "100% agreement on G2 + 10 G3 instances", f"{agree}/{total}", agree == total


def _read_series(path: Path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


@functools.lru_cache(maxsize=None)
def learning_runs(game: str, root: str | None = None):
    """Run the default experiment for ``game`` over SEEDS; returns ``(dir, summary)``."""
    base = Path(root or tempfile.mkdtemp(prefix="mpg_lab_accept_"))
    out = base / game
    summary = run_experiment(ExperimentConfig(game=game, seeds=SEEDS), out_dir=out)
    return out, summary


@_timed(6, "Q-tracking", 600)
def q_tracking():
    parts, ok = [], True
    for game in LEARNING_GAMES:
        out, _ = learning_runs(game)
        good, finals = 0, []
        for seed in SEEDS:
            track = _read_series(out / f"seed_{seed}.csv")["q_tracking_error"]
            tail = track[int(0.75 * track.size):]
            finals.append(track[-1])
            good += bool(track[-1] <= 0.1 and tail.max() < 0.2)
        parts.append(f"{game} {good}/10 (finals {min(finals):.3f}..{max(finals):.3f})")
        ok &= good >= 9
    return "final <= 0.1 and last-25% < 0.2 on >= 9/10 seeds per game", "; ".join(parts), ok


@_timed(7, "Nash convergence", 600)
def nash_convergence():
    parts, ok = [], True
    for game in LEARNING_GAMES:
        _, summary = learning_runs(game)
        gaps = [s["final"]["nash_gap"] for s in summary["seeds"]]
        good = sum(g <= 0.05 for g in gaps)
        parts.append(f"{game} {good}/10 (max gap {max(gaps):.2e})")
        ok &= good >= 9
    return "final nash_gap <= 0.05 on >= 9/10 seeds per game", "; ".join(parts), ok


@_timed(8, "Lyapunov decrease", 60)
def lyapunov_decrease():
    parts, ok = [], True
    cfg = ode.FlowConfig(dt=0.01, horizon=50.0)
    for name in ("G2", "G3", "G4"):
        spec = get_game(name).potential
        traj = ode.integrate_flow(spec, gc.uniform_policy(spec.game), cfg)
        report = ode.lyapunov_monotonicity_report(traj)
        gap = oracle.nash_gap(spec.game, traj.policies[-1]).max_gap
        good = report.passed and traj.phi[-1] <= 1e-3 and gap <= 1e-3
        parts.append(f"{name} viol={report.violations.size} phi={traj.phi[-1]:.1e} gap={gap:.1e}")
        ok &= good
    return "0 rises > 1e-6*dt off switch steps; final phi, nash_gap <= 1e-3", "; ".join(parts), ok


@_timed(9, "MPG verification", 30)
def mpg_verification():
    parts, ok = [], True
    for name in ("G2", "G3", "G4", "GZ"):
        entry = get_game(name)
        report = verify_mpg(entry.potential, num_samples=100, tol=1e-8)
        parts.append(f"{name} {report.max_violation:.1e}")
        ok &= report.passed == entry.is_mpg
    return "G2/G3/G4 pass at 1e-8, GZ fails", "; ".join(parts), ok


@_timed(10, "Step-size validator", 1)
def step_size_validator(accepted=(0.6, 0.85)):
    checks = []
    try:
        learner.validate_schedule(learner.StepSchedule(c1=accepted[0], c2=accepted[1]))
        checks.append(True)
    except ScheduleError:
        checks.append(False)
    for c1, c2, kind in ((0.5, 0.85, SummabilityError), (0.7, 0.7, TimescaleError),
                         (0.6, 1.1, DivergenceError)):
        try:
            learner.validate_schedule(learner.StepSchedule(c1=c1, c2=c2))
            checks.append(False)
        except kind:
            checks.append(True)
        except ScheduleError:
            checks.append(False)
    return (f"accept {accepted}; reject (0.5,.), (c,c), (.,1.1) with their error kinds",
            f"{sum(checks)}/4 checks", all(checks))


@_timed(11, "Determinism", 600)
def determinism():
    parts, ok = [], True
    for game in LEARNING_GAMES:
        dirs = []
        for _ in range(2):
            out = Path(tempfile.mkdtemp(prefix="mpg_lab_det_"))
            run_experiment(ExperimentConfig(game=game, seeds=SEEDS), out_dir=out)
            dirs.append(out)
        names = [f"seed_{s}.csv" for s in SEEDS]
        match, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], names, shallow=False)
        parts.append(f"{game} {len(match)}/10 identical")
        ok &= len(match) == len(names)
    return "byte-identical CSVs across two runs", "; ".join(parts), ok


CRITERIA = (
    bellman_contraction, value_q_consistency, policy_gradient_identity,
    performance_difference_identity, nash_fixed_point_agreement, q_tracking,
    nash_convergence, lyapunov_decrease, mpg_verification, step_size_validator,
    determinism,
)


def run_acceptance_suite(selected=None, accepted_schedule=(0.6, 0.85), echo=print) -> list:
    """Run the criteria (all, or the numbers in ``selected``) and print one line each."""
    results = []
    for number, criterion in enumerate(CRITERIA, start=1):
        if selected and number not in selected:
            continue
        if criterion is step_size_validator:
            res = criterion(accepted=accepted_schedule)
        else:
            res = criterion()
        echo(res.line())
        results.append(res)
    failed = [r.number for r in results if not r.ok]
    echo(f"{len(results) - len(failed)}/{len(results)} criteria passed"
         + (f"; failed: {failed}" if failed else ""))
    return results
