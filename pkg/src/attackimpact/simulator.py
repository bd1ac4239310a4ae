"""Monte Carlo rollouts of history policies on a base MDP.

Randomness is counter based: the uniform used for slot ``k`` of trajectory
``i`` is a SplitMix64 hash of ``(seed, i, k)``. Results therefore do not
depend on how trajectories are batched or ordered.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import RejectedInputError

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _splitmix(z):
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


def uniforms(seed, trajectories, slot):
    """Uniform doubles in [0, 1) for the given trajectory indices and counter slot."""
    with np.errstate(over="ignore"):
        key = _splitmix(np.uint64(seed % 2**64) + _GOLDEN)
        z = _splitmix(key ^ (trajectories.astype(np.uint64) * _GOLDEN))
        z = _splitmix(z + np.uint64(slot) * _GOLDEN + np.uint64(1))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 2**53)


def sample_rows(probs, u):
    """Inverse-CDF draw per row; zero-probability entries are never selected."""
    cdf = np.cumsum(probs, axis=1)
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


@dataclass
class SimConfig:
    num_trajectories: int = 100_000
    seed: int = 0
    record_paths: bool = False
    chunk_size: int = 1 << 16

    def __post_init__(self):
        if self.num_trajectories < 1:
            raise RejectedInputError("num_trajectories must be positive")


@dataclass
class SimStats:
    horizon: int
    alarm_counts: np.ndarray   # per trajectory
    rewards: np.ndarray        # per trajectory
    state_sums: dict           # "alarm"/"no_alarm" -> per-stage sums of state indices
    paths: np.ndarray = None   # (n, T+1) when recorded

    @property
    def num_trajectories(self):
        return self.alarm_counts.shape[0]

    @property
    def alarm_count_pmf(self):
        counts = np.bincount(self.alarm_counts, minlength=self.horizon + 1)
        return counts / self.num_trajectories

    @property
    def mean_reward(self):
        return float(self.rewards.mean())

    @property
    def num_alarmed(self):
        return int(np.count_nonzero(self.alarm_counts >= 1))

    @property
    def conditional_means(self):
        """Mean state index per stage given at least one alarm / no alarm; ``None`` if empty."""
        n_alarm = self.num_alarmed
        n_quiet = self.num_trajectories - n_alarm
        return {
            "alarm": self.state_sums["alarm"] / n_alarm if n_alarm else None,
            "no_alarm": self.state_sums["no_alarm"] / n_quiet if n_quiet else None,
        }


def _check_policy(mdp, policy):
    if policy.horizon != mdp.horizon or policy.num_actions != mdp.num_actions \
            or policy.num_base_states != mdp.num_states:
        raise RejectedInputError("policy dimensions do not match the MDP")


def simulate(mdp, policy, cfg):
    _check_policy(mdp, policy)
    T = mdp.horizon
    n = cfg.num_trajectories
    alarm = mdp.alarm_mask
    counts = np.empty(n, dtype=np.int64)
    rewards = np.empty(n)
    sums = {"alarm": np.zeros(T + 1), "no_alarm": np.zeros(T + 1)}
    paths = np.empty((n, T + 1), dtype=np.int64) if cfg.record_paths else None
    cdf_P = mdp.transition
    for start in range(0, n, cfg.chunk_size):
        ids = np.arange(start, min(start + cfg.chunk_size, n))
        m = ids.shape[0]
        x = np.full(m, mdp.initial_state, dtype=np.int64)
        y = np.zeros(m, dtype=np.int64)
        hits = alarm[x].astype(np.int64)
        reward = np.zeros(m)
        traj = np.empty((m, T + 1), dtype=np.int64)
        traj[:, 0] = x
        for t in range(T):
            a = sample_rows(policy.batch_probs(t, x, y), uniforms(cfg.seed, ids, 2 * t))
            reward += mdp.rewards[t, x, a]
            x = sample_rows(cdf_P[x, a], uniforms(cfg.seed, ids, 2 * t + 1))
            y = policy.advance(y, x)
            hits += alarm[x]
            traj[:, t + 1] = x
        reward += mdp.terminal_reward[x]
        counts[ids] = hits
        rewards[ids] = reward
        flagged = hits >= 1
        sums["alarm"] += traj[flagged].sum(axis=0)
        sums["no_alarm"] += traj[~flagged].sum(axis=0)
        if paths is not None:
            paths[ids] = traj
    return SimStats(horizon=T, alarm_counts=counts, rewards=rewards, state_sums=sums, paths=paths)


def empirical_chance(stats, i):
    """Fraction of trajectories with at least ``i`` alarm visits."""
    if not 0 <= i <= stats.horizon:
        raise RejectedInputError(f"alarm count threshold {i} outside 0..{stats.horizon}")
    return float(np.count_nonzero(stats.alarm_counts >= i)) / stats.num_trajectories


def exact_alarm_count_pmf(mdp, policy):
    """Exact distribution of the number of alarm visits, by forward recursion.

    The recursion runs over (state, policy statistic, visit count) triples, so
    it is exact for any history policy whose memory is its alarm statistic.
    """
    _check_policy(mdp, policy)
    T, X = mdp.horizon, mdp.num_states
    L = policy.num_levels
    alarm = mdp.alarm_mask
    dist = np.zeros((X, L, T + 2))
    dist[mdp.initial_state, 0, int(alarm[mdp.initial_state])] = 1.0
    xs, ys = np.meshgrid(np.arange(X), np.arange(L), indexing="ij")
    for t in range(T):
        pi = policy.batch_probs(t, xs.ravel(), ys.ravel()).reshape(X, L, -1)
        flow = np.einsum("xlc,xla,xaz->zlc", dist, pi, mdp.transition)
        nxt = np.zeros_like(dist)
        for z in range(X):
            for level in range(L):
                new_level = int(policy.advance(level, z))
                if alarm[z]:
                    nxt[z, new_level, 1:] += flow[z, level, :-1]
                else:
                    nxt[z, new_level] += flow[z, level]
        dist = nxt
    return dist.sum(axis=(0, 1))[: T + 1]


# -- CSV output ---------------------------------------------------------------

def write_alarm_pmf_csv(stats, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["count", "probability"])
        for k, p in enumerate(stats.alarm_count_pmf):
            w.writerow([k, repr(float(p))])


def write_paths_csv(stats, path):
    if stats.paths is None:
        raise RejectedInputError("paths were not recorded")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trajectory", "t", "state"])
        for i, row in enumerate(stats.paths):
            for t, s in enumerate(row):
                w.writerow([i, t, int(s)])


def write_conditional_means_csv(stats, path):
    means = stats.conditional_means

    def cell(arr, t):
        return "" if arr is None else repr(float(arr[t]))

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mean_alarm", "mean_noalarm"])
        for t in range(stats.horizon + 1):
            w.writerow([t, cell(means["alarm"], t), cell(means["no_alarm"], t)])
