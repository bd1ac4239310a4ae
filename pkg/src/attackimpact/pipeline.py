"""End-to-end solve: augment, build the LP, solve it, extract and lift the policy."""

import time
from dataclasses import dataclass

from .augmentation import augment_binary, augment_counting
from .lp_builder import OccupationMeasure, build_problem1_lp, build_problem2_lp
from .lp_solver import SolverOptions, solve
from .mdp_core import require_valid
from .policy import extract_policy, lift_policy


@dataclass
class SolveResult:
    problem: int
    aug: object
    lp: object
    solution: object
    rho: OccupationMeasure = None
    policy: object = None       # MarkovPolicy on the augmented space
    lifted: object = None       # HistoryPolicy on the base MDP
    wall_time: float = 0.0

    @property
    def status(self):
        return self.solution.status

    @property
    def optimal(self):
        return self.solution.status == "optimal"

    @property
    def value(self):
        return self.solution.objective


def _finish(problem, aug, lp, options, start):
    solution = solve(lp, options)
    result = SolveResult(problem, aug, lp, solution)
    if result.optimal:
        result.rho = OccupationMeasure.from_vector(lp.variable_map, solution.values)
        result.policy = extract_policy(aug, result.rho)
        result.lifted = lift_policy(result.policy, aug)
    result.wall_time = time.perf_counter() - start
    return result


def solve_problem1(mdp, delta, options=None):
    """Maximize expected reward subject to P(any alarm) <= delta."""
    start = time.perf_counter()
    require_valid(mdp)
    aug = augment_binary(mdp)
    return _finish(1, aug, build_problem1_lp(aug, delta), options or SolverOptions(), start)


def solve_problem2(mdp, deltas, options=None):
    """Maximize expected reward subject to P(at least i alarms) <= deltas[i-1], i = 1..T."""
    start = time.perf_counter()
    require_valid(mdp)
    aug = augment_counting(mdp)
    return _finish(2, aug, build_problem2_lp(aug, deltas), options or SolverOptions(), start)
