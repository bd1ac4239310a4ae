import numpy as np
import pytest
from hypothesis import given, strategies as st

from attackimpact.augmentation import augment_binary, augment_counting
from attackimpact.errors import RejectedInputError
from attackimpact.lp_builder import (OccupationMeasure, VariableMap, build_problem1_lp,
                                     build_problem2_lp, flow_residuals, objective_value,
                                     read_lp_text, write_lp_text)
from attackimpact.models import appendix_mdp, section5_mdp
from attackimpact.oracle import forward_propagate
from attackimpact.policy import MarkovPolicy

from conftest import tiny_mdp


def test_dimensions_problem1():
    aug = augment_binary(appendix_mdp())
    lp = build_problem1_lp(aug, 0.5)
    T, N, A = 3, 14, 2
    assert lp.num_columns == T * N * A + N
    assert lp.a_eq.shape[0] == 1 + N * (T - 1) + N
    assert lp.a_ub.shape == (1, lp.num_columns)


def test_dimensions_problem2_section5():
    aug = augment_counting(section5_mdp())
    lp = build_problem2_lp(aug, [0.5 ** i for i in range(1, 16)])
    assert lp.num_columns == 15 * 256 * 3 + 256
    assert lp.a_ub.shape[0] == 15


def test_variable_map_inverse():
    vm = VariableMap(3, 5, 2)
    for col in range(vm.num_columns):
        t, xh, a = vm.describe(col)
        assert (vm.terminal_column(xh) if a is None else vm.column(t, xh, a)) == col
    with pytest.raises(RejectedInputError):
        vm.describe(vm.num_columns)


@pytest.mark.parametrize("delta", [-0.1, 1.5, float("nan")])
def test_bad_delta_rejected(delta):
    with pytest.raises(RejectedInputError):
        build_problem1_lp(augment_binary(appendix_mdp()), delta)


def test_wrong_mode_rejected():
    with pytest.raises(RejectedInputError):
        build_problem1_lp(augment_counting(appendix_mdp()), 0.5)
    with pytest.raises(RejectedInputError):
        build_problem2_lp(augment_counting(appendix_mdp()), [0.5])


@given(st.integers(0, 10_000))
def test_policy_measures_are_feasible_points(seed):
    mdp = tiny_mdp(seed)
    aug = augment_counting(mdp)
    rng = np.random.default_rng(seed)
    pol = MarkovPolicy(rng.dirichlet(np.ones(mdp.num_actions), size=(mdp.horizon, aug.mdp.num_states)))
    rho = forward_propagate(aug.mdp, pol)
    assert flow_residuals(aug.mdp, rho).max() <= 1e-14
    lp = build_problem2_lp(aug, np.ones(mdp.horizon))
    v = rho.to_vector()
    assert np.abs(lp.a_eq @ v - lp.b_eq).max() <= 1e-14
    assert np.all(v >= lp.lower) and np.all(v <= lp.upper)
    assert lp.objective @ v == pytest.approx(objective_value(aug, rho), abs=1e-12)
    tails = lp.a_ub @ v
    assert np.all(np.diff(tails) <= 1e-15)


def test_text_round_trip_is_exact():
    lp = build_problem1_lp(augment_binary(appendix_mdp()), 1 / 3)
    text = write_lp_text(lp)
    back = read_lp_text(text)
    assert write_lp_text(back) == text
    assert (back.a_eq != lp.a_eq).nnz == 0
    assert np.array_equal(back.upper, lp.upper)
    assert back.b_ub[0] == 1 / 3
    assert back.variable_map == lp.variable_map


def test_occupation_vector_round_trip():
    vm = VariableMap(2, 3, 2)
    v = np.arange(vm.num_columns, dtype=float)
    assert np.array_equal(OccupationMeasure.from_vector(vm, v).to_vector(), v)
