"""Reproducible checks of the pipeline against independent references.

Each ``criterion_*`` function returns a list of :class:`Check` records. The CLI
``verify`` command prints them as a table and the acceptance tests assert on
them. Expensive shared computations are cached because they are pure.
"""

import functools
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .augmentation import augment_binary, augment_counting
from .detectors import DetectorSpec, FinitePlant, compose_with_layout, cusum_exact
from .lp_builder import flow_residuals
from .mdp_core import alarm_event_probability, iter_paths, path_probability, validate_mdp
from .models import appendix_mdp, random_mdp, section5_deltas, section5_mdp
from .oracle import (forward_propagate, markov_grid_search,
                     simplex_grid, solve_path_lp, decision_rows)
from .pipeline import solve_problem1, solve_problem2
from .policy import MarkovPolicy, lift_policy, markov_on_base
from .simulator import SimConfig, empirical_chance, simulate

TABLE1 = {"problem1": 84.99, "problem2": 58.16}
TABLE1_TOL = 0.05
X0_ASSUMPTION = "initial state x0 = level 1 (index 0); not stated in the source model description"

# Instances of the agreement suites. The first fifteen come from the unrestricted
# random family. The last five come from the family with two deciding states
# and were picked because grid-searched Markov policies fall short of the
# history-dependent optimum on them, so the suite also covers instances where
# memory of past alarms pays off.
GENERIC_SEEDS = tuple(range(1000, 1015))
GAP_WITNESS_SEEDS = (4, 49, 50, 57, 59)
THEOREM2_SEEDS = tuple(range(3000, 3020))
GRID_CANDIDATE_CAP = 200_000
GAP_MARGIN = 0.01
THEOREM_TOL = 1e-6


@dataclass
class Check:
    criterion: str
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.criterion}: {self.name} ({self.seconds:.2f}s) {self.detail}"


def _timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


# -- instance families ---------------------------------------------------------

def theorem1_instances():
    """``(label, mdp, delta)`` for the single-constraint suite."""
    out = []
    for seed in GENERIC_SEEDS:
        rng = np.random.default_rng(seed)
        mdp = random_mdp(rng)
        out.append((f"generic-{seed}", mdp, float(rng.uniform())))
    for seed in GAP_WITNESS_SEEDS:
        rng = np.random.default_rng(seed)
        mdp = random_mdp(rng, decision_states=2)
        out.append((f"witness-{seed}", mdp, float(rng.uniform())))
    return out


def theorem2_instances():
    """``(label, mdp, deltas)`` with non-increasing thresholds, one per alarm count."""
    out = []
    for seed in THEOREM2_SEEDS:
        rng = np.random.default_rng(seed)
        mdp = random_mdp(rng)
        deltas = np.sort(rng.uniform(size=mdp.horizon))[::-1]
        out.append((f"seed-{seed}", mdp, deltas))
    return out


def finest_grid(mdp, cap=GRID_CANDIDATE_CAP, max_divisions=20):
    """Largest number of simplex divisions whose candidate count stays under ``cap``."""
    n_rows = len(decision_rows(mdp))
    best = None
    for d in range(1, max_divisions + 1):
        if simplex_grid(mdp.num_actions, d).shape[0] ** n_rows > cap:
            break
        best = d
    return best


# -- shared solves --------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _section5_problem1():
    return solve_problem1(section5_mdp(), 0.5)


@functools.lru_cache(maxsize=None)
def _section5_problem2():
    return solve_problem2(section5_mdp(), section5_deltas())


@functools.lru_cache(maxsize=None)
def _theorem1_records():
    records = []
    for label, mdp, delta in theorem1_instances():
        res = solve_problem1(mdp, delta)
        ref = solve_path_lp(mdp, [delta])
        divisions = finest_grid(mdp)
        grid = markov_grid_search(mdp, delta, 1.0 / divisions, limit=GRID_CANDIDATE_CAP) \
            if divisions else None
        records.append((label, mdp, delta, res, ref, divisions, grid))
    return records


@functools.lru_cache(maxsize=None)
def _theorem2_records():
    records = []
    for label, mdp, deltas in theorem2_instances():
        records.append((label, mdp, deltas, solve_problem2(mdp, deltas), solve_path_lp(mdp, deltas)))
    return records


def _agree(res, ref, tol):
    if ref.status == "infeasible" or res.status == "infeasible":
        return ref.status == res.status, float("nan")
    err = abs(res.value - ref.value)
    return err <= tol, err


# -- criteria --------------------------------------------------------------------

def criterion_appendix():
    mdp = appendix_mdp()

    def run():
        res = solve_problem1(mdp, 0.5)
        grid = markov_grid_search(mdp, 0.5, 1.0 / 300)
        return res, grid

    (res, grid), secs = _timed(run)
    lp_ok = res.optimal and abs(res.value - 4.0) <= 1e-6
    grid_ok = abs(grid.value - 11.0 / 3.0) <= 0.02
    return [
        Check("1", "appendix LP optimum = 4", lp_ok, f"value={res.value!r}", secs),
        Check("1", "appendix Markov grid = 11/3 +- 0.02", grid_ok, f"grid={grid.value!r}"),
        Check("1", "strict gap LP > grid", res.value > grid.value, f"gap={res.value - grid.value:.6f}"),
        Check("1", "runtime < 1 s", secs < 1.0, f"{secs:.3f}s"),
    ]


def criterion_table1():
    """Strict comparison with the reference optima, plus a report of computed values and the assumption."""
    # solved afresh so that the timings are not served from the cache
    r1, s1 = _timed(lambda: solve_problem1(section5_mdp(), 0.5))
    r2, s2 = _timed(lambda: solve_problem2(section5_mdp(), section5_deltas()))
    d1 = r1.value - TABLE1["problem1"]
    d2 = r2.value - TABLE1["problem2"]
    note = f"[{X0_ASSUMPTION}]"
    return [
        Check("2", "drift model problem 1 = 84.99 +- 0.05", abs(d1) <= TABLE1_TOL,
              f"computed={r1.value:.6f} diff={d1:+.4f} {note}", s1),
        Check("2", "drift model problem 2 = 58.16 +- 0.05", abs(d2) <= TABLE1_TOL,
              f"computed={r2.value:.6f} diff={d2:+.4f} {note}", s2),
        Check("2", "runtime < 10 s each", s1 < 10 and s2 < 10, f"{s1:.2f}s, {s2:.2f}s"),
    ]


def criterion_theorem1():
    records, secs = _timed(_theorem1_records)
    checks = []
    gaps = 0
    for label, mdp, delta, res, ref, divisions, grid in records:
        ok, err = _agree(res, ref, THEOREM_TOL)
        detail = f"delta={delta:.4f} lp={res.value:.9g} path={ref.value:.9g}"
        if grid is not None:
            gap = ref.value - grid.value if ref.status == "optimal" else float("nan")
            if gap > GAP_MARGIN:
                gaps += 1
            detail += f" grid(1/{divisions})={grid.value:.6g}"
        checks.append(Check("3", f"{label} augmented LP = path LP", ok, detail))
    checks.append(Check("3", f">= 3 instances with Markov grid gap > {GAP_MARGIN}", gaps >= 3,
                        f"{gaps} instances"))
    checks.append(Check("3", "runtime < 60 s", secs < 60, f"{secs:.1f}s", secs))
    return checks


def criterion_theorem2():
    records, secs = _timed(_theorem2_records)
    checks = []
    for label, mdp, deltas, res, ref in records:
        ok, err = _agree(res, ref, THEOREM_TOL)
        checks.append(Check("4", f"{label} counting LP = path LP", ok,
                            f"lp={res.value:.9g} path={ref.value:.9g}"))
    mdp = section5_mdp()
    p1 = _section5_problem1()
    p2 = solve_problem2(mdp, [0.5] + [1.0] * (mdp.horizon - 1))
    diff = abs(p2.value - p1.value)
    checks.append(Check("4", "drift model: problem 2 with (0.5, 1, ..., 1) = problem 1", diff <= 1e-7,
                        f"diff={diff:.3g}", secs))
    return checks


def occupation_report(res):
    """Largest flow residual, largest per-stage mass error and smallest chance-row slack."""
    rho = res.rho
    flow = float(flow_residuals(res.aug.mdp, rho).max())
    masses = list(rho.stages.sum(axis=(1, 2))) + [rho.terminal.sum()]
    mass = float(np.max(np.abs(np.array(masses) - 1.0)))
    slack = float(np.min(res.lp.b_ub - res.lp.a_ub @ res.solution.values))
    return flow, mass, slack


def criterion_occupation():
    solved = [("appendix", solve_problem1(appendix_mdp(), 0.5)),
              ("drift-p1", _section5_problem1()),
              ("drift-p2", _section5_problem2())]
    solved += [(lbl, r[3]) for r in _theorem1_records() for lbl in [r[0]] if r[3].optimal]
    solved += [(lbl, r[3]) for r in _theorem2_records() for lbl in [r[0]] if r[3].optimal]
    worst = [0.0, 0.0, np.inf]
    bad = []
    for label, res in solved:
        flow, mass, slack = occupation_report(res)
        worst = [max(worst[0], flow), max(worst[1], mass), min(worst[2], slack)]
        if flow > 1e-8 or mass > 1e-8 or slack < -1e-8:
            bad.append(label)
    return [Check("5", f"flow <= 1e-8, mass = 1 +- 1e-8, slack >= -1e-8 on {len(solved)} solves",
                  not bad, f"worst flow={worst[0]:.2e} mass={worst[1]:.2e} slack={worst[2]:.2e}"
                  + (f" failing={bad}" if bad else ""))]


def lifted_path_error(mdp, inner, aug):
    """Largest disagreement between base-path and consistent augmented-path probabilities.

    Both directions are enumerated: every positive-probability base path is
    mapped to its consistent augmented path, and every positive-probability
    augmented path must be consistent.
    """
    lifted = lift_policy(inner, aug)
    aug_policy = markov_on_base(inner, aug.mdp)
    worst = 0.0
    base_mass = 0.0
    for states, actions, prob in iter_paths(mdp, lifted):
        ys = [0]
        for x in states[1:]:
            ys.append(aug.next_level(ys[-1], x))
        aug_states = [aug.index(x, y) for x, y in zip(states, ys)]
        worst = max(worst, abs(prob - path_probability(aug.mdp, aug_policy, aug_states, actions)))
        base_mass += prob
    for states, actions, prob in iter_paths(aug.mdp, aug_policy):
        y = 0
        for xh in states[1:]:
            y = aug.next_level(y, aug.base_of[xh])
            if aug.level_of[xh] != y:
                worst = max(worst, prob)
                break
    return max(worst, abs(base_mass - 1.0))


def criterion_policy():
    res = _section5_problem1()
    rho_fwd = forward_propagate(res.aug.mdp, res.policy)
    err = max(np.abs(rho_fwd.stages - res.rho.stages).max(),
              np.abs(rho_fwd.terminal - res.rho.terminal).max())
    checks = [Check("6", "drift model problem 1 round trip within 1e-8", err <= 1e-8, f"max err={err:.2e}")]
    rng = np.random.default_rng(7)
    for k in range(5):
        mdp = random_mdp(rng)
        aug = augment_binary(mdp) if k % 2 == 0 else augment_counting(mdp)
        inner = MarkovPolicy(rng.dirichlet(np.ones(mdp.num_actions),
                                           size=(mdp.horizon, aug.mdp.num_states)))
        e = lifted_path_error(mdp, inner, aug)
        checks.append(Check("6", f"lifted path distribution equality, instance {k} ({aug.mode})",
                            e <= 1e-9, f"max err={e:.2e}"))
    return checks


def criterion_simulation(n=100_000, seed=0):
    checks = []
    r1 = _section5_problem1()
    mdp = section5_mdp()
    cfg = SimConfig(num_trajectories=n, seed=seed)
    s1, secs = _timed(lambda: simulate(mdp, r1.lifted, cfg))
    p1 = empirical_chance(s1, 1)
    bound = 0.5 + 3 * math.sqrt(0.25 / n)
    checks.append(Check("7", "problem 1: P(>=1 alarm) within binomial band", p1 <= bound,
                        f"empirical={p1:.5f} bound={bound:.5f}", secs))
    rel = abs(s1.mean_reward - r1.value) / abs(r1.value)
    checks.append(Check("7", "problem 1: mean reward within 1% of LP optimum", rel <= 0.01,
                        f"mean={s1.mean_reward:.4f} lp={r1.value:.4f} rel={rel:.2e}"))
    again = simulate(mdp, r1.lifted, cfg)
    same = (np.array_equal(again.alarm_counts, s1.alarm_counts)
            and np.array_equal(again.rewards, s1.rewards))
    checks.append(Check("7", "same seed gives bit-identical statistics", same))
    r2 = _section5_problem2()
    s2 = simulate(mdp, r2.lifted, cfg)
    tails = []
    for i in range(1, 5):
        d = 0.5 ** i
        p = empirical_chance(s2, i)
        tails.append(p)
        b = d + 3 * math.sqrt(d * (1 - d) / n)
        checks.append(Check("7", f"problem 2: P(N >= {i}) within band", p <= b,
                            f"empirical={p:.5f} bound={b:.5f}"))
    pmf = s2.alarm_count_pmf
    decreasing = all(pmf[i] > pmf[i + 1] for i in range(4)) and all(
        tails[i] > tails[i + 1] for i in range(3))
    checks.append(Check("7", "problem 2: alarm-count pmf decreasing over 0..4", decreasing,
                        "pmf[0:5]=" + ", ".join(f"{p:.4f}" for p in pmf[:5])))
    return checks


# -- detector composition --------------------------------------------------------

def detector_example():
    """Four-state plant with a three-level CUSUM grid and a fixed stage-dependent plant policy."""
    rng = np.random.default_rng(11)
    Z, A, T = 4, 2, 4
    kernel = rng.dirichlet(np.ones(Z), size=(Z, A))
    plant = FinitePlant(kernel, outputs=[0.0, 0.45, 0.8, 1.3], nominal_outputs=[0.0] * (T + 1))
    det = DetectorSpec("cusum", threshold=0.7, bias=0.2, grid=(0.0, 0.5, 1.0))
    plant_policy = rng.dirichlet(np.ones(A), size=(T, Z))
    return plant, det, plant_policy


def detector_direct(plant, det, plant_policy, threshold, projected):
    """Alarm probability from the plant and detector recursions, path by path.

    With ``projected`` the detector follows the grid recursion; otherwise the
    unprojected recursion capped at ``max_level``. Also returns the largest
    gap between the two level sequences seen at each step, scaled by the
    step count, for comparison with the declared per-step bound.
    """
    from .detectors import cusum_step
    Z, T = plant.num_states, plant.horizon
    total = 0.0
    worst_ratio = 0.0
    for tail in itertools.product(range(Z), repeat=T):
        path = (plant.initial_state,) + tail
        prob = 1.0
        for t in range(T):
            prob *= float(plant_policy[t, path[t]] @ plant.kernel[path[t], :, path[t + 1]])
        if prob == 0.0:
            continue
        residuals = [plant.residual(path[t], t) for t in range(T)]
        exact = cusum_exact(residuals, det.bias, max_level=det.max_level)
        grid_levels = []
        level = 0.0
        for r in residuals:
            level = cusum_step(level, r, det.bias, det.grid, det.max_level, det.rounding)
            grid_levels.append(level)
        for t, (g, e) in enumerate(zip(grid_levels, exact), start=1):
            worst_ratio = max(worst_ratio, abs(g - e) / t)
        levels = grid_levels if projected else exact
        if any(lv > threshold for lv in levels):
            total += prob
    return total, worst_ratio


def criterion_detector():
    plant, det, plant_policy = detector_example()
    mdp, layout = compose_with_layout(plant, det)
    report = validate_mdp(mdp)
    plant_of = [z for (_, z, _) in layout.triples]
    tables = plant_policy[:, plant_of, :]
    exact_mdp = alarm_event_probability(mdp, markov_on_base(MarkovPolicy(tables), mdp), 1)
    direct_grid, worst_ratio = detector_direct(plant, det, plant_policy, det.threshold, True)
    T = plant.horizon
    eps = det.declared_bound(T)
    lo, _ = detector_direct(plant, det, plant_policy, det.threshold + eps, False)
    hi, _ = detector_direct(plant, det, plant_policy, det.threshold - eps, False)
    per_step = det.projection_error()
    return [
        Check("8", "composed CUSUM MDP passes validation", report.ok, f"{mdp.num_states} states"),
        Check("8", "composed alarm probability = direct grid recursion", abs(exact_mdp - direct_grid) <= 1e-12,
              f"composed={exact_mdp:.12f} direct={direct_grid:.12f}"),
        Check("8", "level error per step within declared projection error", worst_ratio <= per_step + 1e-12,
              f"worst={worst_ratio:.4f} declared={per_step:.4f}"),
        Check("8", "alarm probability within declared-bound band of the exact recursion",
              lo - 1e-12 <= exact_mdp <= hi + 1e-12,
              f"{lo:.6f} <= {exact_mdp:.6f} <= {hi:.6f} (bound {eps:.3f})"),
    ]


SUITES = {
    "appendix": [criterion_appendix],
    "table1": [criterion_table1],
    "theorem1": [criterion_theorem1],
    "theorem2": [criterion_theorem2],
    "invariants": [criterion_occupation],
    "policy": [criterion_policy],
    "simulation": [criterion_simulation],
    "detectors": [criterion_detector],
}
SUITES["all"] = [fn for name in list(SUITES) for fn in SUITES[name]]


def run_suite(name):
    return [check for fn in SUITES[name] for check in fn()]

