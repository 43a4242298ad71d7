"""Independent two-timescale learners and the environment that drives them.

Each player owns a :class:`LearnerState` and only ever sees the realized
state and its own realized reward.  The per-player primitives are compiled
with numba and take nothing but the player's own arrays, which is what makes
the information boundary structural rather than a convention.

Two engines run the same iteration: ``"python"`` steps :class:`LearnerState`
objects one call at a time, ``"compiled"`` runs blocks of iterates inside a
single numba loop.  Given equal seeds both produce bit-identical results.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from . import game_core as gc
from . import oracle
from .potential import potential_value
from .errors import (
    ConfigError,
    DivergenceError,
    HeterogeneityError,
    ScheduleError,
    SummabilityError,
    TimescaleError,
)

# drift beyond which a policy row is renormalized
RENORM_TOL = 1e-9


@dataclass(frozen=True)
class StepSchedule:
    """Power-law steps ``alpha(n) = z n^-c1`` (q-estimates), ``beta(n) = y n^-c2`` (policies)."""

    z: float = 1.0
    c1: float = 0.6
    y: float = 1.0
    c2: float = 0.85

    def alpha(self, n: int) -> float:
        return self.z * float(n) ** (-self.c1)

    def beta(self, n: int) -> float:
        return self.y * float(n) ** (-self.c2)


def validate_schedule(sched: StepSchedule) -> StepSchedule:
    c1, c2 = sched.c1, sched.c2
    if not (0.0 < sched.z <= 1.0 and 0.0 < sched.y <= 1.0):
        raise ScheduleError(f"scales must lie in (0, 1] so that steps stay in (0, 1]; got z={sched.z}, y={sched.y}")
    if c1 > 1.0 or c2 > 1.0:
        raise DivergenceError(f"exponents must be <= 1 for the steps to sum to infinity; got c1={c1}, c2={c2}")
    if c1 <= 0.0 or c2 <= 0.0:
        raise ScheduleError(f"exponents must be positive for the steps to vanish; got c1={c1}, c2={c2}")
    if c1 <= 0.5:
        raise SummabilityError(f"c1={c1} must exceed 1/2 for alpha^2 to be summable")
    if c2 <= c1:
        raise TimescaleError(f"c2={c2} must exceed c1={c1} so that beta/alpha -> 0")
    return sched


def validate_schedules(schedules) -> list:
    """Validate each schedule and the cross-player bounded-ratio condition."""
    schedules = [validate_schedule(s) for s in schedules]
    exps = {(s.c1, s.c2) for s in schedules}
    if len(exps) > 1:
        raise HeterogeneityError(
            f"players use different exponents {sorted(exps)}; step ratios would be unbounded")
    return schedules


class UniformStream:
    """Buffered stream of U[0, 1) draws from a counter-based (Philox) generator."""

    def __init__(self, seed_seq: np.random.SeedSequence, block: int = 4096):
        self._gen = np.random.Generator(np.random.Philox(seed_seq))
        self._block = block
        self._buf = np.empty(0)
        self._pos = 0

    def next(self) -> float:
        if self._pos >= self._buf.size:
            self._buf = self._gen.random(self._block)
            self._pos = 0
        self._pos += 1
        return float(self._buf[self._pos - 1])

    def take(self, k: int) -> np.ndarray:
        head = self._buf[self._pos:self._pos + k]
        self._pos += head.size
        if head.size == k:
            return head.copy()
        return np.concatenate([head, self._gen.random(k - head.size)])


# ---------------------------------------------------------------------------
# compiled per-player primitives


@njit(cache=True)
def _sample_index(prob, size, u):
    c = 0.0
    for k in range(size):
        c += prob[k]
        if u < c:
            return k
    return size - 1


@njit(cache=True)
def _sample_action(policy_row, num_actions, theta, u):
    c = 0.0
    floor = theta / num_actions
    for a in range(num_actions):
        c += (1.0 - theta) * policy_row[a] + floor
        if u < c:
            return a
    return num_actions - 1


@njit(cache=True)
def _q_update(q, policy, n_sa, num_actions, discount, z, c1, s_prev, a_prev, r_prev, s_curr):
    cont = 0.0
    for a in range(num_actions):
        cont += policy[s_curr, a] * q[s_curr, a]
    old = q[s_prev, a_prev]
    alpha = z * float(n_sa[s_prev, a_prev]) ** (-c1)
    q[s_prev, a_prev] = old + alpha * (r_prev + discount * cont - old)
    return old


@njit(cache=True)
def _policy_update(policy, q, n_s, num_actions, y, c2, s_prev, swap_a, swap_v):
    # greedy on q[s_prev] with entry swap_a read as swap_v (swap_a < 0: no swap)
    best = 0
    best_v = swap_v if swap_a == 0 else q[s_prev, 0]
    for a in range(1, num_actions):
        v = swap_v if a == swap_a else q[s_prev, a]
        if v > best_v:
            best = a
            best_v = v
    beta = y * float(n_s[s_prev]) ** (-c2)
    total = 0.0
    for a in range(num_actions):
        target = 1.0 if a == best else 0.0
        policy[s_prev, a] += beta * (target - policy[s_prev, a])
        total += policy[s_prev, a]
    if abs(total - 1.0) > RENORM_TOL:
        for a in range(num_actions):
            policy[s_prev, a] /= total


@njit(cache=True)
def _learner_iterate(q, policy, n_s, n_sa, num_actions, discount, theta, z, c1, y, c2,
                     stale, s_prev, a_prev, r_prev, s_curr, u):
    n_s[s_prev] += 1
    n_sa[s_prev, a_prev] += 1
    old = _q_update(q, policy, n_sa, num_actions, discount, z, c1, s_prev, a_prev, r_prev, s_curr)
    _policy_update(policy, q, n_s, num_actions, y, c2, s_prev, a_prev if stale else -1, old)
    return _sample_action(policy[s_curr], num_actions, theta, u)


@njit(cache=True)
def _run_block(num_steps, payoff, transition, strides, q, policy, n_s, n_sa, num_actions,
               discount, theta, z, c1, y, c2, stale, actions, rewards, state,
               u_players, u_env):
    # state = [s_prev, s_curr]; actions/rewards hold the previous iterate's values
    n = actions.shape[0]
    num_states = transition.shape[2]
    s_prev = state[0]
    s_curr = state[1]
    for k in range(num_steps):
        for i in range(n):
            actions[i] = _learner_iterate(
                q[i], policy[i], n_s[i], n_sa[i], num_actions[i], discount, theta[i],
                z[i], c1[i], y[i], c2[i], stale[i], s_prev, actions[i], rewards[i],
                s_curr, u_players[i, k])
        j = 0
        for i in range(n):
            j += actions[i] * strides[i]
        for i in range(n):
            rewards[i] = payoff[i, s_curr, j]
        s_next = _sample_index(transition[s_curr, j], num_states, u_env[k])
        s_prev = s_curr
        s_curr = s_next
    state[0] = s_prev
    state[1] = s_curr


# ---------------------------------------------------------------------------
# learners and environment


@dataclass(frozen=True)
class LearnerParams:
    theta: float = 0.05
    z: float = 1.0
    c1: float = 0.6
    y: float = 1.0
    c2: float = 0.85

    @property
    def schedule(self) -> StepSchedule:
        return StepSchedule(self.z, self.c1, self.y, self.c2)


class LearnerState:
    """One player's private learning state.

    The only inputs after construction are realized states and the player's
    own rewards, passed to :meth:`start` and :meth:`step`.
    """

    def __init__(self, num_states: int, num_actions: int, discount: float,
                 schedule: StepSchedule, theta: float, rng: UniformStream,
                 q0=None, pi0=None, br_uses_stale_q: bool = False):
        if not 0.0 < theta < 1.0:
            raise ConfigError(f"exploration rate must lie in (0, 1), got {theta}")
        self.num_states = num_states
        self.num_actions = num_actions
        self.discount = float(discount)
        self.schedule = validate_schedule(schedule)
        self.theta = float(theta)
        self.rng = rng
        self.br_uses_stale_q = bool(br_uses_stale_q)
        shape = (num_states, num_actions)
        self.q = np.zeros(shape) if q0 is None else np.array(q0, dtype=float).reshape(shape)
        self.policy = (np.full(shape, 1.0 / num_actions) if pi0 is None
                       else np.array(pi0, dtype=float).reshape(shape))
        self.state_count = np.zeros(num_states, dtype=np.int64)
        self.state_action_count = np.zeros(shape, dtype=np.int64)
        self.last_state = None
        self.last_action = None
        self.last_reward = None

    def sample_action(self, s: int) -> int:
        return int(_sample_action(self.policy[s], self.num_actions, self.theta, self.rng.next()))

    def q_update(self, s_prev, a_prev, r_prev, s_curr) -> float:
        """Move ``q[s_prev, a_prev]`` toward the one-step target and return its old value.

        Counters must already include this visit.
        """
        sc = self.schedule
        return _q_update(self.q, self.policy, self.state_action_count, self.num_actions,
                         self.discount, sc.z, sc.c1, s_prev, a_prev, float(r_prev), s_curr)

    def policy_update(self, s_prev, swap=None) -> None:
        """Mix ``policy[s_prev]`` toward the greedy point mass of ``q[s_prev]``.

        ``swap=(a, v)`` evaluates the greedy choice as if ``q[s_prev, a]`` were ``v``.
        """
        swap_a, swap_v = (-1, 0.0) if swap is None else (int(swap[0]), float(swap[1]))
        _policy_update(self.policy, self.q, self.state_count, self.num_actions,
                       self.schedule.y, self.schedule.c2, s_prev, swap_a, swap_v)

    def start(self, s: int) -> int:
        self.last_state = s
        self.last_action = self.sample_action(s)
        return self.last_action

    def step(self, s: int, reward: float) -> int:
        """Run one iterate: observe ``s`` and the reward of the previous action, act."""
        sc = self.schedule
        a = _learner_iterate(self.q, self.policy, self.state_count, self.state_action_count,
                             self.num_actions, self.discount, self.theta, sc.z, sc.c1,
                             sc.y, sc.c2, self.br_uses_stale_q, self.last_state,
                             self.last_action, float(reward), s, self.rng.next())
        self.last_state, self.last_action, self.last_reward = s, int(a), float(reward)
        return self.last_action


@dataclass
class EnvState:
    current_state: int
    rng: UniformStream
    iterate: int = 0


def make_env(game: gc.GameSpec, rng: UniformStream) -> EnvState:
    """Environment with its initial state drawn from ``game.mu``."""
    s0 = int(_sample_index(game.mu, game.num_states, rng.next()))
    return EnvState(s0, rng)


def env_step(env: EnvState, game: gc.GameSpec, joint_action):
    """Advance one stage; returns ``(next_state, rewards)`` with ``rewards[i]`` for player i only."""
    s = env.current_state
    j = gc.joint_index(game, joint_action)
    rewards = game.payoff.reshape(game.num_players, game.num_states, -1)[:, s, j].copy()
    row = game.transition.reshape(game.num_states, -1, game.num_states)[s, j]
    env.current_state = int(_sample_index(row, game.num_states, env.rng.next()))
    env.iterate += 1
    return env.current_state, rewards


def make_learners(game: gc.GameSpec, seed: int, params=None, br_uses_stale_q: bool = False):
    """Learners and environment with independent streams spawned from one master seed.

    ``params`` is a single :class:`LearnerParams` shared by all players or a
    list with one entry per player.
    """
    n = game.num_players
    if params is None:
        params = LearnerParams()
    if isinstance(params, LearnerParams):
        params = [params] * n
    if len(params) != n:
        raise ConfigError(f"need learner parameters for {n} players, got {len(params)}")
    validate_schedules([p.schedule for p in params])
    seqs = np.random.SeedSequence(seed).spawn(n + 1)
    learners = [
        LearnerState(game.num_states, game.num_actions[i], game.discount, p.schedule,
                     p.theta, UniformStream(seqs[i]), br_uses_stale_q=br_uses_stale_q)
        for i, p in enumerate(params)
    ]
    return learners, make_env(game, UniformStream(seqs[n]))


# ---------------------------------------------------------------------------
# metrics and the run loop

COLUMNS = ("iterate", "nash_gap", "q_tracking_error", "potential_value", "min_state_visits")


@dataclass
class RunMetrics:
    seed: int | None = None
    series: list = field(default_factory=list)

    @property
    def final(self) -> dict:
        return dict(zip(COLUMNS, self.series[-1]))

    def column(self, name: str) -> np.ndarray:
        return np.array([row[COLUMNS.index(name)] for row in self.series], dtype=float)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(COLUMNS)
            for row in self.series:
                writer.writerow([row[0], *map(repr, row[1:4]), row[4]])


def exploration_mixed_profile(pi, thetas) -> list:
    """Policies actually played: ``(1 - theta_i) pi_i + theta_i / |A_i|``."""
    return [(1.0 - th) * p + th / p.shape[1] for p, th in zip(pi, thetas)]


def behavior_tracking_error(game: gc.GameSpec, learners) -> float:
    """Sup distance from each q-table to Q under own policy and explored opponents.

    This is the fixed point the q-update actually targets, since opponents'
    realized actions come from their exploration-mixed policies.
    """
    pi = _current_profile(learners)
    mixed = exploration_mixed_profile(pi, [L.theta for L in learners])
    err = 0.0
    for i, L in enumerate(learners):
        target = list(mixed)
        target[i] = pi[i]
        err = max(err, float(np.abs(L.q - gc.q_function(game, target, i, validate=False)).max()))
    return err


def _current_profile(learners):
    return [L.policy / L.policy.sum(axis=1, keepdims=True) for L in learners]


def snapshot(game: gc.GameSpec, learners, iterate: int, potential=None) -> tuple:
    """One metrics row computed from the learners' current q-tables and policies."""
    pi = _current_profile(learners)
    gap = oracle.nash_gap(game, pi).max_gap
    track = max(float(np.abs(L.q - gc.q_function(game, pi, i, validate=False)).max())
                for i, L in enumerate(learners))
    pot = potential_value(potential, pi, validate=False) if potential is not None else math.nan
    return (iterate, float(gap), track, float(pot), int(learners[0].state_count.min()))


def _run_python(game, learners, env, steps, rewards):
    for _ in range(steps):
        s = env.current_state
        actions = [L.step(s, r) for L, r in zip(learners, rewards)]
        _, rewards = env_step(env, game, actions)
    return rewards


class _Packed:
    """Learner states stacked into padded arrays for the compiled loop."""

    def __init__(self, game, learners, env, rewards):
        n, S = game.num_players, game.num_states
        A = max(game.num_actions)
        self.q = np.zeros((n, S, A))
        self.policy = np.zeros((n, S, A))
        self.n_s = np.zeros((n, S), dtype=np.int64)
        self.n_sa = np.zeros((n, S, A), dtype=np.int64)
        for i, L in enumerate(learners):
            m = L.num_actions
            self.q[i, :, :m] = L.q
            self.policy[i, :, :m] = L.policy
            self.n_s[i] = L.state_count
            self.n_sa[i, :, :m] = L.state_action_count
        self.num_actions = np.array(game.num_actions, dtype=np.int64)
        self.theta = np.array([L.theta for L in learners])
        self.z = np.array([L.schedule.z for L in learners])
        self.c1 = np.array([L.schedule.c1 for L in learners])
        self.y = np.array([L.schedule.y for L in learners])
        self.c2 = np.array([L.schedule.c2 for L in learners])
        self.stale = np.array([L.br_uses_stale_q for L in learners])
        self.actions = np.array([L.last_action for L in learners], dtype=np.int64)
        self.rewards = np.array(rewards, dtype=float)
        self.state = np.array([learners[0].last_state, env.current_state], dtype=np.int64)
        strides = np.ones(n, dtype=np.int64)
        for i in range(n - 2, -1, -1):
            strides[i] = strides[i + 1] * game.num_actions[i + 1]
        self.strides = strides
        self.payoff = np.ascontiguousarray(game.flat_payoff())
        self.transition = np.ascontiguousarray(game.flat_transition())
        self.discount = game.discount

    def run(self, learners, env, steps):
        u_players = np.stack([L.rng.take(steps) for L in learners])
        u_env = env.rng.take(steps)
        _run_block(steps, self.payoff, self.transition, self.strides, self.q, self.policy,
                   self.n_s, self.n_sa, self.num_actions, self.discount, self.theta,
                   self.z, self.c1, self.y, self.c2, self.stale, self.actions,
                   self.rewards, self.state, u_players, u_env)
        env.iterate += steps

    def unpack(self, learners, env):
        for i, L in enumerate(learners):
            m = L.num_actions
            L.q[:] = self.q[i, :, :m]
            L.policy[:] = self.policy[i, :, :m]
            L.state_count[:] = self.n_s[i]
            L.state_action_count[:] = self.n_sa[i, :, :m]
            L.last_state = int(self.state[0])
            L.last_action = int(self.actions[i])
            L.last_reward = float(self.rewards[i])
        env.current_state = int(self.state[1])
        return self.rewards.copy()


def run_dynamics(game: gc.GameSpec, learners, env: EnvState, T: int,
                 metrics_cadence: int = 10_000, potential=None, engine: str = "compiled",
                 seed: int | None = None) -> RunMetrics:
    """Run ``T`` iterates of the learning dynamics from a fresh start.

    Stage 0 draws every player's first action at the initial state; each
    subsequent iterate updates counters, q-estimates and policies from the
    previous (state, own action, own reward) and the new state, then acts.
    Metrics are recorded after every ``metrics_cadence`` iterates.
    """
    if T % metrics_cadence:
        raise ConfigError(f"iterations {T} must be a multiple of metrics_cadence {metrics_cadence}")
    if engine not in ("compiled", "python"):
        raise ConfigError(f"unknown engine {engine!r}")
    if any(L.last_action is not None for L in learners) or env.iterate:
        raise ConfigError("run_dynamics expects fresh learners and environment")
    s0 = env.current_state
    actions = [L.start(s0) for L in learners]
    _, rewards = env_step(env, game, actions)
    metrics = RunMetrics(seed=seed)
    packed = _Packed(game, learners, env, rewards) if engine == "compiled" else None
    for t in range(metrics_cadence, T + 1, metrics_cadence):
        if packed is None:
            rewards = _run_python(game, learners, env, metrics_cadence, rewards)
        else:
            packed.run(learners, env, metrics_cadence)
            rewards = packed.unpack(learners, env)
        metrics.series.append(snapshot(game, learners, t, potential))
    return metrics


def write_metrics(metrics: RunMetrics, path) -> Path:
    path = Path(path)
    metrics.write_csv(path)
    return path
