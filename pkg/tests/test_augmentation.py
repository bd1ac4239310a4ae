import numpy as np
import pytest
from hypothesis import given, strategies as st

from attackimpact.augmentation import augment_binary, augment_counting
from attackimpact.errors import RejectedInputError
from attackimpact.mdp_core import Mdp, validate_mdp
from attackimpact.models import APPENDIX_STATES, appendix_mdp, section5_mdp
from attackimpact.oracle import forward_propagate
from attackimpact.policy import MarkovPolicy

from conftest import tiny_mdp

seeds = st.integers(0, 10_000)


def no_alarm_chain():
    P = np.array([[[0.3, 0.7]], [[0.6, 0.4]]])
    return Mdp(P, np.ones((3, 2, 1)), np.zeros(2), [], 0)


@given(seeds)
def test_sizes_and_validity(seed):
    mdp = tiny_mdp(seed)
    b, c = augment_binary(mdp), augment_counting(mdp)
    assert b.mdp.num_states == 2 * mdp.num_states
    assert c.mdp.num_states == (mdp.horizon + 1) * mdp.num_states
    for aug in (b, c):
        assert validate_mdp(aug.mdp).ok
        assert aug.pair(aug.mdp.initial_state) == (mdp.initial_state, 0)
        assert np.array_equal(aug.mdp.alarm_mask, np.tile(mdp.alarm_mask, aug.num_levels))
        for y in range(aug.num_levels):
            rows = slice(y * mdp.num_states, (y + 1) * mdp.num_states)
            assert np.array_equal(aug.mdp.rewards[:, rows], mdp.rewards)
        assert np.all(aug.mdp.transition.sum(axis=2) == pytest.approx(1.0, abs=1e-15))


@given(seeds)
def test_kernel_cases_binary(seed):
    mdp = tiny_mdp(seed)
    aug = augment_binary(mdp)
    X = mdp.num_states
    P, Ph = mdp.transition, aug.mdp.transition
    hit = mdp.alarm_mask
    # from y=0: non-alarm successors stay at 0, alarm successors go to 1
    assert np.array_equal(Ph[:X, :, :X][:, :, ~hit], P[:, :, ~hit])
    assert np.all(Ph[:X, :, :X][:, :, hit] == 0)
    assert np.array_equal(Ph[:X, :, X:][:, :, hit], P[:, :, hit])
    # y=1 is absorbing
    assert np.all(Ph[X:, :, :X] == 0)
    assert np.array_equal(Ph[X:, :, X:], P)


@given(seeds)
def test_counter_moves_by_at_most_one(seed):
    mdp = tiny_mdp(seed)
    aug = augment_counting(mdp)
    lv = aug.level_of
    src, _, dst = np.nonzero(aug.mdp.transition)
    step = lv[dst] - lv[src]
    top = aug.num_levels - 1
    assert np.all((step == 0) | (step == 1))
    entering = mdp.alarm_mask[aug.base_of[dst]]
    assert np.all(step[entering & (lv[src] < top)] == 1)
    assert np.all(step[~entering] == 0)


def test_no_alarm_region_leaves_upper_levels_unreachable():
    mdp = no_alarm_chain()
    for aug in (augment_binary(mdp), augment_counting(mdp)):
        X = mdp.num_states
        assert np.array_equal(aug.mdp.transition[:X, :, :X], mdp.transition)
        rho = forward_propagate(aug.mdp, MarkovPolicy.uniform(3, aug.mdp.num_states, 1))
        assert rho.terminal[X:].sum() == 0


def test_forced_alarm_every_step_counts_to_horizon():
    P = np.array([[[0.0, 1.0]], [[0.0, 1.0]]])
    mdp = Mdp(P, np.zeros((4, 2, 1)), np.zeros(2), [1], 0)
    aug = augment_counting(mdp)
    rho = forward_propagate(aug.mdp, MarkovPolicy.uniform(4, aug.mdp.num_states, 1))
    assert rho.terminal[aug.index(1, 4)] == pytest.approx(1.0)


def test_appendix_first_step():
    aug = augment_binary(appendix_mdp())
    i = {n: k for k, n in enumerate(APPENDIX_STATES)}
    row = aug.mdp.transition[aug.index(i["x0"], 0), 0]
    assert row[aug.index(i["x1a"], 1)] == 0.25
    assert row[aug.index(i["x1"], 0)] == 0.75


def test_section5_counting_size():
    assert augment_counting(section5_mdp()).mdp.num_states == 256


@given(seeds)
def test_marginalizing_over_levels_recovers_base_chain(seed):
    mdp = tiny_mdp(seed)
    rng = np.random.default_rng(seed)
    tables = rng.dirichlet(np.ones(mdp.num_actions), size=(mdp.horizon, mdp.num_states))
    base = forward_propagate(mdp, MarkovPolicy(tables))
    for aug in (augment_binary(mdp), augment_counting(mdp)):
        rho = forward_propagate(aug.mdp, MarkovPolicy(np.tile(tables, (1, aug.num_levels, 1))))
        folded = rho.terminal.reshape(aug.num_levels, -1).sum(axis=0)
        assert np.allclose(folded, base.terminal, atol=1e-14)


def test_invalid_base_rejected():
    bad = Mdp([[[0.5, 0.4]], [[0.0, 1.0]]], np.zeros((1, 2, 1)), np.zeros(2), [1], 0)
    with pytest.raises(RejectedInputError):
        augment_binary(bad)
