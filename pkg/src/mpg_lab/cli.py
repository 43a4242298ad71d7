"""Command line entry point: ``mpg-lab {catalog,validate,run,flow,certify,accept}``."""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import game_core as gc
from . import ode, oracle
from .errors import MPGLabError
from .games import builtin_games
from .harness import (
    OUT_ENV,
    ExperimentConfig,
    flow_rows,
    load_config,
    output_dir,
    resolve_game,
    run_experiment,
)
from .learner import COLUMNS
from .potential import potential_to_dict, verify_mpg

RUN_EPILOG = f"""\
Each seed writes seed_<seed>.csv with the header row
  {",".join(COLUMNS)}
(one row every --cadence iterates) and the batch writes summary.json.
${OUT_ENV} overrides --out.  Exit status is 1 when the pass fraction is
below the configured threshold.
"""


def _seeds(text: str) -> list:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")


def cmd_catalog(args) -> int:
    for name, entry in builtin_games().items():
        report = verify_mpg(entry.potential)
        print(f"{name:3s} {entry.description}; witness={entry.game.witness}; "
              f"MPG check {'pass' if report.passed else 'FAIL'} ({report.max_violation:.1e})")
        if args.write:
            Path(args.write).mkdir(parents=True, exist_ok=True)
            path = Path(args.write) / f"{name}.json"
            path.write_text(json.dumps(potential_to_dict(entry.potential), indent=1) + "\n")
    return 0


def cmd_validate(args) -> int:
    game, spec = resolve_game(args.game)
    print(f"valid: {game.num_players} players, {game.num_states} states, actions {game.num_actions}, "
          f"discount {game.discount}, u_bar {game.u_bar}, ergodic witness {game.witness}")
    if spec is not None:
        report = verify_mpg(spec, num_samples=args.samples, tol=args.tol)
        print(f"potential ({spec.kind}): max violation {report.max_violation:.3e} -> "
              f"{'pass' if report.passed else 'FAIL'}")
        return 0 if report.passed else 1
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.game:
        overrides["game"] = args.game
    if args.seeds:
        overrides["seeds"] = args.seeds
    if args.iterations:
        overrides["iterations"] = args.iterations
    if args.cadence:
        overrides["metrics_cadence"] = args.cadence
    if overrides:
        cfg = replace(cfg, **overrides)
    out = output_dir(cfg, args.out)
    summary = run_experiment(cfg, jobs=args.jobs, out_dir=out)
    for row in summary["seeds"]:
        f = row["final"]
        print(f"seed {row['seed']}: nash_gap {f['nash_gap']:.3e} q_tracking {f['q_tracking_error']:.3e} "
              f"{'pass' if row['passed'] else 'fail'}")
    print(f"pass fraction {summary['pass_fraction']:.2f} -> {out / 'summary.json'}")
    return 0 if summary["passed"] else 1


def cmd_flow(args) -> int:
    game, spec = resolve_game(args.game)
    if spec is None:
        raise MPGLabError("flow needs a game with a potential section")
    pi0 = gc.uniform_policy(game) if args.init == "uniform" else gc.load_policy(game, args.init)
    traj = ode.integrate_flow(spec, pi0, ode.FlowConfig(dt=args.dt, horizon=args.horizon),
                              track_nash=True)
    header, rows = flow_rows(spec, traj)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if args.out:
            fh.close()
    report = ode.lyapunov_monotonicity_report(traj)
    print(f"final phi {traj.phi[-1]:.3e}, nash_gap {traj.nash_gap[-1]:.3e}, "
          f"rises off switch steps {report.violations.size}", file=sys.stderr)
    return 0 if report.passed else 1


def cmd_certify(args) -> int:
    game, _ = resolve_game(args.game)
    pi = gc.load_policy(game, args.policy_file)
    report = oracle.nash_gap(game, pi, epsilon=args.epsilon)
    ok, violations = oracle.br_fixed_point_check(game, pi)
    doc = report.to_dict()
    doc["br_fixed_point"] = ok
    doc["br_violations"] = violations
    print(json.dumps(doc, indent=1))
    return 0 if report.certified else 1


def cmd_accept(args) -> int:
    from .acceptance import run_acceptance_suite

    results = run_acceptance_suite(selected=args.only)
    return 0 if all(r.ok for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpg-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("catalog", help="list built-in games")
    p.add_argument("--write", metavar="DIR", help="also write each built-in as a game file")
    p.set_defaults(func=cmd_catalog)

    p = sub.add_parser("validate", help="validate a game (built-in name or file)")
    p.add_argument("game")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="seeded learning runs", epilog=RUN_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--game")
    p.add_argument("--seeds", type=_seeds, metavar="LIST")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--jobs", type=int, default=os.cpu_count())
    p.add_argument("--cadence", type=int, metavar="N")
    p.add_argument("--iterations", type=int, metavar="N")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("flow", help="integrate the best-response flow")
    p.add_argument("game")
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--horizon", type=float, default=50.0)
    p.add_argument("--init", default="uniform", help="'uniform' or a policy file")
    p.add_argument("--out", metavar="CSV")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("certify", help="Nash certification of a policy file")
    p.add_argument("game")
    p.add_argument("policy_file")
    p.add_argument("--epsilon", type=float, default=oracle.EXACT_EPSILON)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("accept", help="run the acceptance suite")
    p.add_argument("--only", type=_seeds, metavar="LIST", help="criterion numbers to run")
    p.set_defaults(func=cmd_accept)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MPGLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
