"""Finite-horizon MDPs with an alarm region.

States and actions are integer indices. The kernel ``transition[x, a, x']`` is
time invariant; rewards are given per stage as ``rewards[t, x, a]`` for
``t < T`` plus a terminal table ``terminal_reward[x]``.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import RejectedInputError, ResourceLimitError

ROW_SUM_TOL = 1e-12
DEFAULT_PATH_LIMIT = 10**7


@dataclass(frozen=True)
class Mdp:
    transition: np.ndarray
    rewards: np.ndarray
    terminal_reward: np.ndarray
    alarm_states: tuple
    initial_state: int

    def __post_init__(self):
        # Arrays are copied and frozen so instances can be shared freely.
        for name in ("transition", "rewards", "terminal_reward"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "alarm_states", tuple(sorted(int(s) for s in set(self.alarm_states))))
        object.__setattr__(self, "initial_state", int(self.initial_state))
        if self.transition.ndim != 3 or self.transition.shape[0] != self.transition.shape[2]:
            raise RejectedInputError(f"transition must have shape (X, A, X), got {self.transition.shape}")
        if self.rewards.ndim != 3:
            raise RejectedInputError(f"rewards must have shape (T, X, A), got {self.rewards.shape}")
        if self.terminal_reward.ndim != 1:
            raise RejectedInputError("terminal_reward must be one-dimensional")

    @property
    def num_states(self):
        return self.transition.shape[0]

    @property
    def num_actions(self):
        return self.transition.shape[1]

    @property
    def horizon(self):
        return self.rewards.shape[0]

    @property
    def alarm_mask(self):
        mask = np.zeros(self.num_states, dtype=bool)
        idx = [s for s in self.alarm_states if 0 <= s < self.num_states]
        mask[idx] = True
        return mask

    def to_dict(self):
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "horizon": self.horizon,
            "transition": self.transition.tolist(),
            "rewards": self.rewards.tolist(),
            "terminal_reward": self.terminal_reward.tolist(),
            "alarm_states": list(self.alarm_states),
            "initial_state": self.initial_state,
        }

    @classmethod
    def from_dict(cls, data):
        missing = [k for k in ("transition", "rewards", "terminal_reward", "alarm_states", "initial_state")
                   if k not in data]
        if missing:
            raise RejectedInputError(f"MDP document is missing keys: {missing}")
        try:
            transition = np.asarray(data["transition"], dtype=np.float64)
            rewards = np.asarray(data["rewards"], dtype=np.float64)
            terminal = np.asarray(data["terminal_reward"], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise RejectedInputError(f"MDP arrays are ragged or non-numeric: {exc}") from None
        if rewards.size == 0:
            rewards = np.zeros((0, *transition.shape[:2]))
        mdp = cls(
            transition=transition,
            rewards=rewards,
            terminal_reward=terminal,
            alarm_states=data["alarm_states"],
            initial_state=data["initial_state"],
        )
        for key, actual in (("num_states", mdp.num_states), ("num_actions", mdp.num_actions),
                            ("horizon", mdp.horizon)):
            if key in data and int(data[key]) != actual:
                raise RejectedInputError(f"{key}={data[key]} disagrees with array shapes ({actual})")
        return mdp


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def add(self, location, description, magnitude=0.0):
        self.violations.append((location, description, float(magnitude)))

    def __str__(self):
        if self.ok:
            return "valid"
        return "\n".join(f"{loc}: {desc} ({mag:g})" for loc, desc, mag in self.violations)


def validate_mdp(mdp):
    """Collect every structural problem of ``mdp`` into a report (never raises)."""
    report = ValidationReport()
    X, A = mdp.num_states, mdp.num_actions
    P = mdp.transition
    if not np.all(np.isfinite(P)):
        for loc in zip(*np.nonzero(~np.isfinite(P))):
            report.add(f"transition{list(map(int, loc))}", "non-finite probability", np.nan)
    neg = np.argwhere(P < 0)
    for loc in neg:
        report.add(f"transition{loc.tolist()}", "negative probability", -P[tuple(loc)])
    sums = P.sum(axis=2)
    for x in range(X):
        for a in range(A):
            gap = abs(sums[x, a] - 1.0)
            if not gap <= ROW_SUM_TOL:
                report.add(f"transition[{x}][{a}]", "row does not sum to 1", gap)
    bad_alarm = [s for s in mdp.alarm_states if not 0 <= s < X]
    for s in bad_alarm:
        report.add("alarm_states", f"index {s} out of range", s)
    if mdp.rewards.shape[1:] != (X, A):
        report.add("rewards", f"stage tables have shape {mdp.rewards.shape[1:]}, expected {(X, A)}",
                   abs(np.prod(mdp.rewards.shape[1:]) - X * A))
    if mdp.horizon < 1:
        report.add("rewards", "horizon must be at least 1", mdp.horizon)
    if mdp.terminal_reward.shape != (X,):
        report.add("terminal_reward", f"length {mdp.terminal_reward.shape[0]}, expected {X}",
                   abs(mdp.terminal_reward.shape[0] - X))
    if not (np.all(np.isfinite(mdp.rewards)) and np.all(np.isfinite(mdp.terminal_reward))):
        report.add("rewards", "non-finite reward", np.nan)
    if not 0 <= mdp.initial_state < X:
        report.add("initial_state", "index out of range", mdp.initial_state)
    elif mdp.initial_state in mdp.alarm_states:
        report.add("initial_state", "initial state lies in the alarm region", 1.0)
    return report


def require_valid(mdp):
    report = validate_mdp(mdp)
    if not report.ok:
        raise RejectedInputError(f"invalid MDP:\n{report}")
    return mdp


def load_mdp(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise RejectedInputError(f"{path}: malformed JSON at line {exc.lineno}, "
                                     f"column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise RejectedInputError(f"{path}: top-level JSON value must be an object")
    return Mdp.from_dict(data)


def save_mdp(mdp, path):
    Path(path).write_text(json.dumps(mdp.to_dict(), indent=1))


def path_space_size(mdp):
    return mdp.num_states ** (mdp.horizon + 1) * mdp.num_actions ** mdp.horizon


def path_probability(mdp, policy, states, actions):
    """Exact probability of the state-action path under a history policy.

    ``policy.probs(t, states[:t+1])`` must return the action distribution
    after observing the first ``t+1`` states.
    """
    states = [int(s) for s in states]
    actions = [int(a) for a in actions]
    T = mdp.horizon
    if len(states) != T + 1 or len(actions) != T:
        raise RejectedInputError(f"path needs {T + 1} states and {T} actions, "
                                 f"got {len(states)} and {len(actions)}")
    if any(not 0 <= s < mdp.num_states for s in states) or any(not 0 <= a < mdp.num_actions for a in actions):
        raise RejectedInputError("path contains an out-of-range index")
    if states[0] != mdp.initial_state:
        return 0.0
    prob = 1.0
    for t in range(T):
        prob *= policy.probs(t, states[: t + 1])[actions[t]]
        prob *= mdp.transition[states[t], actions[t], states[t + 1]]
        if prob == 0.0:
            return 0.0
    return prob


def iter_paths(mdp, policy, limit=DEFAULT_PATH_LIMIT):
    """Yield ``(states, actions, probability)`` for every path of positive probability."""
    if path_space_size(mdp) > limit:
        raise ResourceLimitError(f"path space {path_space_size(mdp)} exceeds limit {limit}")
    T = mdp.horizon
    P = mdp.transition

    def walk(states, actions, prob):
        t = len(actions)
        if t == T:
            yield tuple(states), tuple(actions), prob
            return
        dist = policy.probs(t, states)
        x = states[-1]
        for a in np.flatnonzero(dist > 0):
            pa = prob * dist[a]
            for nxt in np.flatnonzero(P[x, a] > 0):
                yield from walk(states + [int(nxt)], actions + [int(a)], pa * P[x, a, nxt])

    yield from walk([mdp.initial_state], [], 1.0)


def alarm_count(mdp, states):
    mask = mdp.alarm_mask
    return int(sum(mask[s] for s in states))


def alarm_event_probability(mdp, policy, min_alarms, limit=DEFAULT_PATH_LIMIT):
    """Probability that the state path visits the alarm region at least ``min_alarms`` times."""
    if min_alarms <= 0:
        if path_space_size(mdp) > limit:
            raise ResourceLimitError(f"path space {path_space_size(mdp)} exceeds limit {limit}")
        return 1.0
    mask = mdp.alarm_mask
    total = 0.0
    for states, _, prob in iter_paths(mdp, policy, limit):
        if sum(mask[s] for s in states) >= min_alarms:
            total += prob
    return total
