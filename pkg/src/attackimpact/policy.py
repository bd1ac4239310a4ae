"""Markov policies from occupation measures, and their history-dependent lift.

A :class:`HistoryPolicy` acts on the base MDP. Its only memory is the alarm
statistic (flag or counter) of the states observed so far, which selects the
row of the wrapped augmented-space Markov policy.
"""

import copy
import json
from dataclasses import dataclass

import numpy as np

from .augmentation import BINARY, COUNTING, AugmentedMdp
from .errors import RejectedInputError

MASS_TOL = 1e-12


@dataclass(frozen=True)
class MarkovPolicy:
    tables: np.ndarray  # (T, N, A); row [t, x] is a distribution over actions

    def __post_init__(self):
        tables = np.array(self.tables, dtype=np.float64)
        if tables.ndim != 3:
            raise RejectedInputError(f"policy tables must be (T, N, A), got {tables.shape}")
        tables.setflags(write=False)
        object.__setattr__(self, "tables", tables)

    @property
    def horizon(self):
        return self.tables.shape[0]

    @property
    def num_states(self):
        return self.tables.shape[1]

    @property
    def num_actions(self):
        return self.tables.shape[2]

    def row_errors(self):
        return np.abs(self.tables.sum(axis=2) - 1.0).max(initial=0.0), self.tables.min(initial=0.0)

    @classmethod
    def uniform(cls, horizon, num_states, num_actions):
        return cls(np.full((horizon, num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def deterministic(cls, choice, num_actions):
        """``choice[t, x]`` is the action index taken at stage ``t`` in state ``x``."""
        choice = np.asarray(choice)
        return cls(np.eye(num_actions)[choice])


def extract_policy(aug, rho):
    """Normalize each stage row of ``rho``; rows without mass become uniform."""
    stages = rho.stages
    if stages.shape[1:] != (aug.mdp.num_states, aug.mdp.num_actions):
        raise RejectedInputError("occupation measure does not match the augmented MDP")
    clipped = np.clip(stages, 0.0, None)
    mass = clipped.sum(axis=2, keepdims=True)
    A = stages.shape[2]
    tables = np.where(mass > MASS_TOL, clipped / np.where(mass > MASS_TOL, mass, 1.0), 1.0 / A)
    return MarkovPolicy(tables)


class HistoryPolicy:
    """Markov policy on the augmented space driven by an online alarm statistic.

    ``mode`` is ``binary``, ``counting`` or ``None``; with ``None`` the inner
    policy is over base states and no statistic is tracked.
    """

    def __init__(self, inner, alarm_mask=None, mode=None):
        self.inner = inner
        self.mode = mode
        if mode is None:
            self.num_base_states = inner.num_states
            self.alarm_mask = np.zeros(inner.num_states, dtype=bool) if alarm_mask is None \
                else np.asarray(alarm_mask, dtype=bool)
            self.num_levels = 1
        else:
            if alarm_mask is None:
                raise RejectedInputError("a tracked policy needs the alarm region")
            self.alarm_mask = np.asarray(alarm_mask, dtype=bool)
            self.num_base_states = self.alarm_mask.shape[0]
            self.num_levels = inner.num_states // self.num_base_states
            if self.num_levels * self.num_base_states != inner.num_states:
                raise RejectedInputError("inner policy size is not a multiple of the base state count")
        self._t = 0
        self._x = None
        self._y = 0

    @property
    def horizon(self):
        return self.inner.horizon

    @property
    def num_actions(self):
        return self.inner.num_actions

    # statistic ---------------------------------------------------------------

    def advance(self, y, x_next):
        """Statistic after observing ``x_next``; accepts scalars or arrays."""
        if self.mode is None:
            return y * 0
        hit = self.alarm_mask[x_next].astype(int)
        if self.mode == BINARY:
            return np.maximum(y, hit)
        return np.minimum(y + hit, self.num_levels - 1)

    def statistic(self, states):
        """Statistic of an observed state prefix; the start state raises nothing."""
        y = 0
        for x in states[1:]:
            y = int(self.advance(y, self._check_state(x)))
        return y

    def _check_state(self, x):
        x = int(x)
        if not 0 <= x < self.num_base_states:
            raise RejectedInputError(f"observed state {x} out of range")
        return x

    def row(self, x, y):
        return y * self.num_base_states + x

    # stateless evaluation ----------------------------------------------------

    def probs(self, t, states):
        """Action distribution at stage ``t`` after observing ``states[0..t]``."""
        x = self._check_state(states[-1])
        return self.inner.tables[t, self.row(x, self.statistic(states))]

    def batch_probs(self, t, x, y):
        return self.inner.tables[t, y * self.num_base_states + x]

    # per-trajectory interface ------------------------------------------------

    def reset(self, initial_state):
        self._t = 0
        self._x = self._check_state(initial_state)
        self._y = 0

    def observe(self, state):
        self._x = self._check_state(state)
        self._y = int(self.advance(self._y, self._x))
        self._t += 1

    @property
    def tracker(self):
        return self._y

    def distribution(self):
        return self.inner.tables[self._t, self.row(self._x, self._y)]

    def clone(self):
        return copy.copy(self)

    # serialization -----------------------------------------------------------

    def to_dict(self):
        index_map = [[x, y] for y in range(self.num_levels) for x in range(self.num_base_states)]
        return {
            "mode": self.mode or "markov",
            "horizon": self.horizon,
            "tables": self.inner.tables.tolist(),
            "index_map": index_map,
            "alarm_states": np.flatnonzero(self.alarm_mask).tolist(),
        }

    @classmethod
    def from_dict(cls, data, num_base_states=None):
        mode = None if data["mode"] == "markov" else data["mode"]
        if mode not in (None, BINARY, COUNTING):
            raise RejectedInputError(f"unknown policy mode {data['mode']!r}")
        inner = MarkovPolicy(np.asarray(data["tables"], dtype=np.float64))
        pairs = data.get("index_map") or []
        n_base = num_base_states or (max(p[0] for p in pairs) + 1 if pairs else inner.num_states)
        mask = np.zeros(n_base, dtype=bool)
        mask[[int(s) for s in data.get("alarm_states", [])]] = True
        return cls(inner, mask, mode)


def lift_policy(mp, aug):
    """History policy on ``aug.base`` that plays ``mp`` at the consistent augmented state."""
    if not isinstance(aug, AugmentedMdp):
        raise RejectedInputError("lift_policy needs an AugmentedMdp")
    if mp.tables.shape != (aug.mdp.horizon, aug.mdp.num_states, aug.mdp.num_actions):
        raise RejectedInputError(f"policy shape {mp.tables.shape} does not match the augmented MDP")
    return HistoryPolicy(mp, aug.base.alarm_mask, aug.mode)


def markov_on_base(mp, mdp):
    """Wrap a base-space Markov policy so it can be used wherever a history policy is expected."""
    if mp.tables.shape != (mdp.horizon, mdp.num_states, mdp.num_actions):
        raise RejectedInputError(f"policy shape {mp.tables.shape} does not match the MDP")
    return HistoryPolicy(mp, mdp.alarm_mask, None)


def save_policy(policy, path):
    with open(path, "w") as fh:
        json.dump(policy.to_dict(), fh)


def load_policy(path):
    with open(path) as fh:
        return HistoryPolicy.from_dict(json.load(fh))
