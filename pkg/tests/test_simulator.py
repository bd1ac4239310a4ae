import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from attackimpact.errors import RejectedInputError
from attackimpact.mdp_core import Mdp
from attackimpact.models import appendix_mdp
from attackimpact.pipeline import solve_problem1
from attackimpact.policy import MarkovPolicy, markov_on_base
from attackimpact.simulator import (SimConfig, empirical_chance, exact_alarm_count_pmf, sample_rows,
                                    simulate, uniforms, write_alarm_pmf_csv,
                                    write_conditional_means_csv, write_paths_csv)

from conftest import tiny_mdp


def deterministic_chain():
    P = np.zeros((3, 1, 3))
    P[0, 0, 1] = P[1, 0, 2] = P[2, 0, 2] = 1.0
    rewards = np.arange(9, dtype=float).reshape(3, 3, 1)
    return Mdp(P, rewards, np.array([0.0, 0.0, 10.0]), [2], 0)


def test_deterministic_chain():
    mdp = deterministic_chain()
    stats = simulate(mdp, markov_on_base(MarkovPolicy.uniform(3, 3, 1), mdp), SimConfig(50, seed=1))
    assert stats.alarm_count_pmf[2] == 1.0
    assert stats.mean_reward == 0.0 + 4.0 + 8.0 + 10.0
    assert stats.conditional_means["no_alarm"] is None


def test_uniforms_are_in_range_and_depend_on_all_keys():
    ids = np.arange(10_000)
    u = uniforms(0, ids, 0)
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.01
    assert not np.array_equal(u, uniforms(1, ids, 0))
    assert not np.array_equal(u, uniforms(0, ids, 1))


def test_inverse_cdf_ties_and_zero_mass():
    probs = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    assert list(sample_rows(probs, np.array([0.0, 0.5]))) == [1, 2]
    assert list(sample_rows(probs, np.array([0.4999, 0.4999]))) == [1, 0]


def test_batching_does_not_change_results():
    res = solve_problem1(appendix_mdp(), 0.5)
    a = simulate(appendix_mdp(), res.lifted, SimConfig(5000, seed=9, chunk_size=1 << 16))
    b = simulate(appendix_mdp(), res.lifted, SimConfig(5000, seed=9, chunk_size=333))
    assert np.array_equal(a.alarm_counts, b.alarm_counts)
    assert np.array_equal(a.rewards, b.rewards)


@given(st.integers(0, 10_000))
def test_statistics_invariants(seed):
    mdp = tiny_mdp(seed)
    policy = markov_on_base(MarkovPolicy.uniform(mdp.horizon, mdp.num_states, mdp.num_actions), mdp)
    stats = simulate(mdp, policy, SimConfig(200, seed=seed))
    pmf = stats.alarm_count_pmf
    assert pmf.shape == (mdp.horizon + 1,)
    assert pmf.sum() == pytest.approx(1.0)
    assert empirical_chance(stats, 0) == 1.0
    assert stats.num_alarmed + (stats.alarm_counts == 0).sum() == 200


def test_appendix_monte_carlo():
    res = solve_problem1(appendix_mdp(), 0.5)
    stats = simulate(appendix_mdp(), res.lifted, SimConfig(10**6, seed=0))
    assert empirical_chance(stats, 1) == pytest.approx(0.5, abs=0.002)
    assert stats.mean_reward == pytest.approx(4.0, abs=0.02)


def test_exact_pmf_of_appendix_policy():
    res = solve_problem1(appendix_mdp(), 0.5)
    pmf = exact_alarm_count_pmf(appendix_mdp(), res.lifted)
    assert np.allclose(pmf, [0.5, 0.375, 0.125, 0.0])


def test_rejects_mismatched_policy():
    with pytest.raises(RejectedInputError):
        simulate(appendix_mdp(), markov_on_base(MarkovPolicy.uniform(3, 3, 1), deterministic_chain()),
                 SimConfig(10))
    with pytest.raises(RejectedInputError):
        SimConfig(0)


def test_csv_schemas(tmp_path):
    mdp = deterministic_chain()
    stats = simulate(mdp, markov_on_base(MarkovPolicy.uniform(3, 3, 1), mdp),
                     SimConfig(4, seed=0, record_paths=True))
    write_alarm_pmf_csv(stats, tmp_path / "a.csv")
    write_paths_csv(stats, tmp_path / "p.csv")
    write_conditional_means_csv(stats, tmp_path / "c.csv")
    rows = list(csv.reader(open(tmp_path / "a.csv")))
    assert rows[0] == ["count", "probability"] and len(rows) == 5
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["trajectory", "t", "state"] and len(rows) == 1 + 4 * 4
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows[0] == ["t", "mean_alarm", "mean_noalarm"]
    assert rows[1] == ["0", "0.0", ""]


def test_paths_csv_requires_recorded_paths(tmp_path):
    mdp = deterministic_chain()
    stats = simulate(mdp, markov_on_base(MarkovPolicy.uniform(3, 3, 1), mdp), SimConfig(4))
    with pytest.raises(RejectedInputError):
        write_paths_csv(stats, tmp_path / "p.csv")
