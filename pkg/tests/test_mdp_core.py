import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from attackimpact.errors import RejectedInputError, ResourceLimitError
from attackimpact.mdp_core import (Mdp, alarm_event_probability, iter_paths, load_mdp,
                                   path_probability, save_mdp, validate_mdp)
from attackimpact.models import appendix_mdp, section5_mdp
from attackimpact.policy import MarkovPolicy, markov_on_base

from conftest import tiny_mdp


def two_state(**overrides):
    fields = dict(
        transition=[[[0.5, 0.5]], [[0.0, 1.0]]],
        rewards=np.zeros((2, 2, 1)),
        terminal_reward=[0.0, 1.0],
        alarm_states=[1],
        initial_state=0,
    )
    fields.update(overrides)
    return Mdp(**fields)


def test_valid_model_has_no_violations():
    assert validate_mdp(two_state()).ok


def test_row_sum_violation_is_located():
    report = validate_mdp(two_state(transition=[[[0.5, 0.4]], [[0.0, 1.0]]]))
    assert not report.ok
    assert any("(0, 0)" in str(v) or "0" in str(v) for v in report.violations)


def test_negative_probability_rejected():
    assert not validate_mdp(two_state(transition=[[[1.5, -0.5]], [[0.0, 1.0]]])).ok


def test_initial_state_in_alarm_region_rejected():
    assert not validate_mdp(two_state(alarm_states=[0])).ok


def test_alarm_index_out_of_range_rejected():
    assert not validate_mdp(two_state(alarm_states=[5])).ok


def test_nonfinite_reward_rejected():
    r = np.zeros((2, 2, 1))
    r[0, 0, 0] = np.nan
    assert not validate_mdp(two_state(rewards=r)).ok


def test_wrong_array_rank_raises():
    with pytest.raises(RejectedInputError):
        two_state(transition=[[0.5, 0.5], [0.0, 1.0]])


def test_json_round_trip(tmp_path):
    mdp = section5_mdp()
    save_mdp(mdp, tmp_path / "m.json")
    back = load_mdp(tmp_path / "m.json")
    assert back.to_dict() == mdp.to_dict()


def test_ragged_json_rejected(tmp_path):
    doc = two_state().to_dict()
    doc["transition"] = [[[0.5, 0.5]], [[1.0]]]
    (tmp_path / "m.json").write_text(json.dumps(doc))
    with pytest.raises(RejectedInputError):
        load_mdp(tmp_path / "m.json")


def test_malformed_json_reports_location(tmp_path):
    (tmp_path / "m.json").write_text('{"transition": [1,\n')
    with pytest.raises(RejectedInputError, match="line"):
        load_mdp(tmp_path / "m.json")


def test_declared_sizes_must_match_arrays():
    doc = two_state().to_dict()
    doc["horizon"] = 7
    with pytest.raises(RejectedInputError):
        Mdp.from_dict(doc)


def test_arrays_are_frozen():
    mdp = two_state()
    with pytest.raises(ValueError):
        mdp.transition[0, 0, 0] = 1.0


@given(st.integers(0, 10_000))
def test_path_probabilities_sum_to_one(seed):
    mdp = tiny_mdp(seed)
    rng = np.random.default_rng(seed)
    policy = markov_on_base(MarkovPolicy(rng.dirichlet(np.ones(mdp.num_actions),
                                                       size=(mdp.horizon, mdp.num_states))), mdp)
    total = sum(p for _, _, p in iter_paths(mdp, policy))
    assert total == pytest.approx(1.0, abs=1e-12)


@given(st.integers(0, 10_000))
def test_iter_paths_agrees_with_path_probability(seed):
    mdp = tiny_mdp(seed, max_horizon=3)
    policy = markov_on_base(MarkovPolicy.uniform(mdp.horizon, mdp.num_states, mdp.num_actions), mdp)
    for states, actions, p in iter_paths(mdp, policy):
        assert path_probability(mdp, policy, states, actions) == pytest.approx(p, rel=1e-12)


def test_appendix_alarm_probability_under_safe_policy():
    mdp = appendix_mdp()
    policy = markov_on_base(MarkovPolicy.deterministic(np.zeros((3, 7), dtype=int), 2), mdp)
    assert alarm_event_probability(mdp, policy, 1) == pytest.approx(0.25)
    assert alarm_event_probability(mdp, policy, 0) == 1.0


def test_path_enumeration_limit():
    mdp = section5_mdp()
    policy = markov_on_base(MarkovPolicy.uniform(15, 16, 3), mdp)
    with pytest.raises(ResourceLimitError):
        next(iter_paths(mdp, policy, limit=1000))
