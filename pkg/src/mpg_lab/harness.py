"""Experiment configuration, seeded batch runs and metric emission."""
from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import game_core as gc
from . import learner, oracle
from .errors import ConfigError
from .games import get_game
from .potential import PotentialSpec, potential_from_dict

OUT_ENV = "MPG_LAB_OUT"


@dataclass(frozen=True)
class Thresholds:
    nash_gap_final: float = oracle.LEARNING_EPSILON
    q_tracking_final: float = 0.1
    pass_fraction: float = 0.9


@dataclass(frozen=True)
class ExperimentConfig:
    game: str = "G2"
    seeds: tuple = tuple(range(10))
    iterations: int = 2_000_000
    metrics_cadence: int = 10_000
    learners: tuple = (learner.LearnerParams(),)
    br_uses_stale_q: bool = False
    flow: dict = field(default_factory=lambda: {"dt": 0.01, "horizon": 50.0})
    output_dir: str = "runs"
    thresholds: Thresholds = Thresholds()
    engine: str = "compiled"

    def __post_init__(self):
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise ConfigError("field 'seeds': at least one seed is required")
        if len(set(seeds)) != len(seeds):
            raise ConfigError("field 'seeds': seeds must be distinct")
        if any(not 0 <= s < 2**64 for s in seeds):
            raise ConfigError("field 'seeds': seeds must be 64-bit unsigned integers")
        object.__setattr__(self, "seeds", seeds)
        th = self.thresholds
        if min(th.nash_gap_final, th.q_tracking_final, th.pass_fraction) <= 0:
            raise ConfigError("field 'thresholds': thresholds must be positive")
        if self.iterations <= 0 or self.metrics_cadence <= 0:
            raise ConfigError("fields 'iterations' and 'metrics_cadence' must be positive")
        if self.iterations % self.metrics_cadence:
            raise ConfigError("field 'iterations' must be a multiple of 'metrics_cadence'")

    def learner_params(self, num_players: int) -> list:
        if len(self.learners) == 1:
            return list(self.learners) * num_players
        if len(self.learners) != num_players:
            raise ConfigError(f"field 'learners': need 1 or {num_players} entries, got {len(self.learners)}")
        return list(self.learners)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["seeds"] = list(self.seeds)
        doc["learners"] = [asdict(p) for p in self.learners]
        return doc


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown field(s) {unknown}; allowed: {sorted(known)}")
    kwargs = dict(doc)
    try:
        if "learners" in kwargs:
            raw = kwargs["learners"]
            raw = [raw] if isinstance(raw, dict) else raw
            kwargs["learners"] = tuple(learner.LearnerParams(**p) for p in raw)
        if "thresholds" in kwargs:
            kwargs["thresholds"] = Thresholds(**kwargs["thresholds"])
    except TypeError as exc:
        raise ConfigError(f"field 'learners'/'thresholds': {exc}") from None
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return config_from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def resolve_game(name: str):
    """Built-in name or game file -> ``(GameSpec, PotentialSpec | None)``."""
    try:
        entry = get_game(name)
        return entry.game, entry.potential
    except KeyError:
        pass
    path = Path(name)
    if not path.exists():
        raise ConfigError(f"game {name!r} is neither a built-in nor an existing file")
    doc = json.loads(path.read_text())
    if "potential" in doc:
        spec = potential_from_dict(doc)
        return spec.game, spec
    return gc.validate_game(gc.game_from_dict(doc)), None


@dataclass
class SeedResult:
    metrics: learner.RunMetrics
    final_policy: list
    nash: oracle.NashReport


def run_seed(cfg: ExperimentConfig, seed: int) -> SeedResult:
    game, spec = resolve_game(cfg.game)
    learners, env = learner.make_learners(
        game, seed, cfg.learner_params(game.num_players), cfg.br_uses_stale_q)
    metrics = learner.run_dynamics(game, learners, env, cfg.iterations, cfg.metrics_cadence,
                                   potential=spec, engine=cfg.engine, seed=seed)
    pi = [L.policy / L.policy.sum(axis=1, keepdims=True) for L in learners]
    return SeedResult(metrics, pi, oracle.nash_gap(game, pi, epsilon=cfg.thresholds.nash_gap_final))


def output_dir(cfg: ExperimentConfig, cli_out=None) -> Path:
    """Output directory: ``$MPG_LAB_OUT``, else the CLI flag, else the config."""
    return Path(os.environ.get(OUT_ENV) or cli_out or cfg.output_dir)


def run_experiment(cfg: ExperimentConfig, jobs: int | None = None, out_dir=None) -> dict:
    """Run every seed, write ``seed_<seed>.csv`` files and ``summary.json``.

    Seeds run in a process pool of ``jobs`` workers (default: CPU count);
    results are assembled in the configured seed order, so the outputs do
    not depend on scheduling.
    """
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = jobs or os.cpu_count() or 1
    if jobs > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(cfg.seeds))) as pool:
            results = list(pool.map(run_seed, [cfg] * len(cfg.seeds), cfg.seeds))
    else:
        results = [run_seed(cfg, s) for s in cfg.seeds]

    th = cfg.thresholds
    per_seed = []
    for seed, res in zip(cfg.seeds, results):
        res.metrics.write_csv(out / f"seed_{seed}.csv")
        final = res.metrics.final
        ok_gap = final["nash_gap"] <= th.nash_gap_final
        ok_track = final["q_tracking_error"] <= th.q_tracking_final
        per_seed.append({
            "seed": seed,
            "final": final,
            "pass_nash_gap": ok_gap,
            "pass_q_tracking": ok_track,
            "passed": ok_gap and ok_track,
            "final_policy": [p.tolist() for p in res.final_policy],
            "nash_report": res.nash.to_dict(),
        })
    fraction = sum(r["passed"] for r in per_seed) / len(per_seed)
    summary = {
        "config": cfg.to_dict(),
        "seeds": per_seed,
        "pass_fraction": fraction,
        "passed": fraction >= th.pass_fraction,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    return summary


def flow_rows(spec: PotentialSpec, traj) -> tuple:
    """CSV header and rows (tau, phi, nash_gap, policy entries) for a flow trajectory."""
    game = spec.game
    header = ["tau", "phi", "nash_gap"] + [
        f"pi{i}_s{s}_a{a}" for i in range(game.num_players)
        for s in range(game.num_states) for a in range(game.num_actions[i])]
    gaps = traj.nash_gap if traj.nash_gap is not None else [np.nan] * traj.tau.size
    rows = []
    for tau, phi, gap, pi in zip(traj.tau, traj.phi, gaps, traj.policies):
        entries = np.concatenate([p.ravel() for p in pi])
        rows.append([repr(float(tau)), repr(float(phi)), repr(float(gap)), *map(repr, entries.tolist())])
    return header, rows
