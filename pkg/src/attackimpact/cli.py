"""Command line entry point: solve, simulate, verify, compose, rerun."""

import argparse
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .augmentation import augment_binary, augment_counting
from .detectors import compose, load_detector, load_plant
from .errors import ConfigurationError, RejectedInputError, ResourceLimitError
from .lp_solver import SolverOptions
from .mdp_core import load_mdp, save_mdp, validate_mdp
from .models import BUILTIN
from .oracle import backward_induction
from .pipeline import solve_problem1, solve_problem2
from .policy import load_policy
from .simulator import (SimConfig, simulate, write_alarm_pmf_csv, write_conditional_means_csv,
                        write_paths_csv)
from .verify import SUITES, run_suite

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INFEASIBLE = 2
EXIT_INVALID = 3
EXIT_RESOURCE = 4


def write_atomic(path, text):
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj):
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def resolve_model(spec):
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTIN:
            raise RejectedInputError(f"unknown built-in model {name!r}; choose from {sorted(BUILTIN)}")
        return BUILTIN[name]()
    mdp = load_mdp(spec)
    report = validate_mdp(mdp)
    if not report.ok:
        raise RejectedInputError(f"{spec}: invalid MDP\n{report}")
    return mdp


def parse_deltas(args, horizon):
    if args.problem == 1:
        if args.delta is None:
            raise RejectedInputError("problem 1 needs --delta")
        return [args.delta]
    if args.deltas is not None:
        values = [float(v) for v in args.deltas.split(",") if v.strip()]
    elif args.delta is not None:
        # a single value means the geometric schedule delta^i
        values = [args.delta ** i for i in range(1, horizon + 1)]
    else:
        raise RejectedInputError("problem 2 needs --deltas (or --delta for delta^i)")
    if len(values) != horizon:
        raise RejectedInputError(f"problem 2 needs {horizon} deltas, got {len(values)}")
    return values


def solver_options(args):
    opts = SolverOptions()
    if args.tol is not None:
        opts.primal_tol = opts.dual_tol = args.tol
    return opts


def infeasibility_diagnostics(mdp, problem, deltas):
    """Smallest achievable probability of each constrained alarm event, one event at a time."""
    aug = augment_binary(mdp) if problem == 1 else augment_counting(mdp)
    levels = aug.level_of
    out = []
    for i, d in enumerate(deltas, start=1):
        probe = type(aug.mdp)(
            transition=aug.mdp.transition,
            rewards=np.zeros_like(aug.mdp.rewards),
            terminal_reward=-(levels >= i).astype(float),
            alarm_states=aug.mdp.alarm_states,
            initial_state=aug.mdp.initial_state,
        )
        lowest = -backward_induction(probe)[0]
        out.append({"alarms_at_least": i, "delta": d, "min_achievable": lowest,
                    "violated": lowest > d + 1e-12})
    return out


def _manifest(args, command, config, outputs, extra):
    return {
        "command": command,
        "argv": args.argv,
        "inputs": {k: v for k, v in (("model", getattr(args, "model", None)),
                                     ("policy", getattr(args, "policy", None))) if v},
        "config": config,
        "tool_version": __version__,
        "outputs": outputs,
        **extra,
    }


def cmd_solve(args):
    mdp = resolve_model(args.model)
    deltas = parse_deltas(args, mdp.horizon)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    opts = solver_options(args)
    if args.problem == 1:
        result = solve_problem1(mdp, deltas[0], opts)
    else:
        result = solve_problem2(mdp, deltas, opts)
    config = {"problem": args.problem, "deltas": deltas, "tol": args.tol,
              "primal_tol": opts.primal_tol, "dual_tol": opts.dual_tol}
    if not result.optimal:
        diag = infeasibility_diagnostics(mdp, args.problem, deltas)
        write_atomic(out / "solution.json", _dump({"status": result.status, "diagnostics": diag}))
        manifest = _manifest(args, "solve", config, ["solution.json"],
                             {"status": result.status, "optimum": None,
                              "solve_wall_time": result.wall_time})
        write_atomic(out / "manifest.json", _dump(manifest))
        print(f"status: {result.status}", file=sys.stderr)
        for row in diag:
            if row["violated"]:
                print(f"  P(at least {row['alarms_at_least']} alarms) cannot go below "
                      f"{row['min_achievable']:.6g} but delta is {row['delta']:.6g}", file=sys.stderr)
        return EXIT_INFEASIBLE
    solution = {
        "status": result.status,
        "problem": args.problem,
        "optimum": result.value,
        "deltas": deltas,
        "mode": result.aug.mode,
        "index_map": [list(p) for p in result.aug.index_map],
        "occupation_measure": {"stages": result.rho.stages.tolist(),
                               "terminal": result.rho.terminal.tolist()},
        "max_primal_residual": result.solution.max_primal_residual,
    }
    write_atomic(out / "solution.json", _dump(solution))
    write_atomic(out / "policy.json", _dump(result.lifted.to_dict()))
    manifest = _manifest(args, "solve", config, ["solution.json", "policy.json"],
                         {"status": result.status, "optimum": result.value,
                          "solve_wall_time": result.wall_time})
    write_atomic(out / "manifest.json", _dump(manifest))
    print(f"optimum: {result.value!r}")
    return EXIT_OK


def cmd_simulate(args):
    mdp = resolve_model(args.model)
    policy = load_policy(args.policy)
    if policy.num_base_states != mdp.num_states:
        raise RejectedInputError("policy does not match the model's state count")
    cfg = SimConfig(num_trajectories=args.trajectories, seed=args.seed, record_paths=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    stats = simulate(mdp, policy, cfg)
    elapsed = time.perf_counter() - start
    write_alarm_pmf_csv(stats, out / "alarm_pmf.csv")
    write_paths_csv(stats, out / "paths.csv")
    write_conditional_means_csv(stats, out / "conditional_means.csv")
    config = {"seed": args.seed, "trajectories": args.trajectories}
    manifest = _manifest(args, "simulate", config,
                         ["alarm_pmf.csv", "paths.csv", "conditional_means.csv"],
                         {"mean_reward": stats.mean_reward, "simulate_wall_time": elapsed})
    write_atomic(out / "manifest.json", _dump(manifest))
    print(f"mean reward: {stats.mean_reward!r}")
    return EXIT_OK


def cmd_verify(args):
    checks = run_suite(args.suite)
    for check in checks:
        print(check.line())
    failed = [c for c in checks if not c.passed]
    if args.suite in ("table1", "all"):
        print("note: drift model values are computed under the assumption that the process starts at level 1")
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_OK if not failed else EXIT_FAIL


def cmd_compose(args):
    plant, rewards, terminal = load_plant(args.plant)
    det = load_detector(args.detector)
    mdp = compose(plant, det, rewards, args.horizon, terminal)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_mdp(mdp, out)
    print(f"composed MDP with {mdp.num_states} states and {len(mdp.alarm_states)} alarm states")
    return EXIT_OK


def cmd_rerun(args):
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    return main(manifest["argv"])


def build_parser():
    parser = argparse.ArgumentParser(prog="attackimpact", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the stealthy-attack LP and write the optimal policy")
    p.add_argument("--model", required=True, help="MDP JSON path, builtin:appendix or builtin:section5")
    p.add_argument("--problem", type=int, choices=(1, 2), default=1)
    p.add_argument("--delta", type=float)
    p.add_argument("--deltas", help="comma separated thresholds for problem 2")
    p.add_argument("--tol", type=float, help="primal and dual feasibility tolerance of the simplex")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="roll out a saved policy and write CSV statistics")
    p.add_argument("--model", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--trajectories", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run a built-in check suite")
    p.add_argument("suite", choices=sorted(SUITES))
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compose", help="build an MDP from a plant and detector description")
    p.add_argument("--plant", required=True)
    p.add_argument("--detector", required=True)
    p.add_argument("--horizon", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("rerun", help="repeat the run recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except (RejectedInputError, ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, ConfigurationError) and exc.diagnostic:
            print(f"diagnostic: {json.dumps(exc.diagnostic)}", file=sys.stderr)
        return EXIT_INVALID
    except ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
