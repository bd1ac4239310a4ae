import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from attackimpact.augmentation import augment_binary, augment_counting
from attackimpact.errors import RejectedInputError
from attackimpact.lp_builder import LpProblem, build_problem1_lp, build_problem2_lp
from attackimpact.lp_solver import SolverOptions, farkas_gap, solve
from attackimpact.models import section5_mdp


def random_lp(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    m_eq = int(rng.integers(0, 4))
    m_ub = int(rng.integers(0, 4))
    dens = lambda m: np.where(rng.uniform(size=(m, n)) < 0.6, rng.normal(size=(m, n)), 0.0)
    a_eq, a_ub = dens(m_eq), dens(m_ub)
    x0 = rng.uniform(0, 2, size=n)
    b_eq = a_eq @ x0 + (rng.normal(size=m_eq) if rng.uniform() < 0.2 else 0.0)
    b_ub = a_ub @ x0 + rng.uniform(0, 1, size=m_ub)
    upper = np.where(rng.uniform(size=n) < 0.5, rng.uniform(1, 3, size=n), np.inf)
    return LpProblem(rng.normal(size=n), sp.csr_matrix(a_eq), np.asarray(b_eq, float).reshape(m_eq),
                     sp.csr_matrix(a_ub), b_ub, np.zeros(n), upper)


@given(st.integers(0, 100_000))
def test_agrees_with_highs(seed):
    lp = random_lp(seed)
    ours = solve(lp)
    ref = linprog(-lp.objective, A_ub=lp.a_ub.toarray() if lp.a_ub.shape[0] else None,
                  b_ub=lp.b_ub if lp.a_ub.shape[0] else None,
                  A_eq=lp.a_eq.toarray() if lp.a_eq.shape[0] else None,
                  b_eq=lp.b_eq if lp.a_eq.shape[0] else None,
                  bounds=list(zip(lp.lower, [None if np.isinf(u) else u for u in lp.upper])),
                  method="highs")
    expected = {0: "optimal", 2: "infeasible", 3: "unbounded"}[ref.status]
    assert ours.status == expected
    if expected == "optimal":
        assert ours.objective == pytest.approx(-ref.fun, abs=1e-7 * (1 + abs(ref.fun)))
        assert ours.max_primal_residual <= 1e-8
    elif expected == "infeasible":
        assert farkas_gap(lp, ours.farkas) > 0
    else:
        ray = ours.ray
        assert lp.objective @ ray > 0
        assert np.abs(lp.a_eq @ ray).max(initial=0) <= 1e-9
        assert (lp.a_ub @ ray).max(initial=0) <= 1e-9
        assert ray.min() >= -1e-12


def box_lp(b_eq):
    return LpProblem(np.array([1.0, 1.0]), sp.csr_matrix([[1.0, 1.0]]), np.array([b_eq]),
                     sp.csr_matrix((0, 2)), np.zeros(0), np.zeros(2), np.ones(2))


def test_infeasible_certificate():
    res = solve(box_lp(3.0))
    assert res.status == "infeasible"
    assert farkas_gap(box_lp(3.0), res.farkas) > 0


def test_unbounded_ray():
    lp = LpProblem(np.array([1.0, 0.0]), sp.csr_matrix((0, 2)), np.zeros(0),
                   sp.csr_matrix([[0.0, 1.0]]), np.array([1.0]), np.zeros(2), np.full(2, np.inf))
    res = solve(lp)
    assert res.status == "unbounded"
    assert res.ray[0] > 0


@pytest.mark.parametrize("bad", ["nan_obj", "inf_rhs", "free_var"])
def test_rejects_bad_input(bad):
    lp = box_lp(1.0)
    if bad == "nan_obj":
        lp = LpProblem(np.array([np.nan, 1.0]), lp.a_eq, lp.b_eq, lp.a_ub, lp.b_ub, lp.lower, lp.upper)
    elif bad == "inf_rhs":
        lp = LpProblem(lp.objective, lp.a_eq, np.array([np.inf]), lp.a_ub, lp.b_ub, lp.lower, lp.upper)
    else:
        lp = LpProblem(lp.objective, lp.a_eq, lp.b_eq, lp.a_ub, lp.b_ub, np.array([-np.inf, 0.0]), lp.upper)
    with pytest.raises(RejectedInputError):
        solve(lp)


def test_presolve_off_gives_same_value():
    lp = build_problem1_lp(augment_binary(section5_mdp(horizon=6)), 0.3)
    a = solve(lp)
    b = solve(lp, SolverOptions(presolve=False))
    assert a.objective == pytest.approx(b.objective, abs=1e-9)


def test_section5_problem2_matches_highs():
    lp = build_problem2_lp(augment_counting(section5_mdp()), [0.5 ** i for i in range(1, 16)])
    ours = solve(lp)
    ref = linprog(-lp.objective, A_ub=lp.a_ub, b_ub=lp.b_ub, A_eq=lp.a_eq, b_eq=lp.b_eq,
                  bounds=np.column_stack([lp.lower, lp.upper]), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    assert ours.objective == pytest.approx(-ref.fun, abs=1e-7)
