"""Product construction of the base MDP with an alarm flag or alarm counter."""

from dataclasses import dataclass

import numpy as np

from .errors import RejectedInputError
from .mdp_core import Mdp, require_valid

BINARY = "binary"
COUNTING = "counting"


@dataclass(frozen=True)
class AugmentedMdp:
    """An MDP over pairs ``(x, y)``; index layout is ``y * num_base_states + x``."""

    base: Mdp
    mode: str
    mdp: Mdp

    @property
    def num_base_states(self):
        return self.base.num_states

    @property
    def num_levels(self):
        return self.mdp.num_states // self.base.num_states

    def index(self, x, y):
        return y * self.base.num_states + x

    def pair(self, index):
        y, x = divmod(int(index), self.base.num_states)
        return x, y

    @property
    def index_map(self):
        return [self.pair(i) for i in range(self.mdp.num_states)]

    @property
    def level_of(self):
        """Array giving the y component of every augmented state."""
        return np.repeat(np.arange(self.num_levels), self.base.num_states)

    @property
    def base_of(self):
        return np.tile(np.arange(self.base.num_states), self.num_levels)

    def next_level(self, y, x_next):
        """Statistic update after observing ``x_next``; works on scalars and arrays."""
        hit = self.base.alarm_mask[x_next]
        if self.mode == BINARY:
            return np.maximum(y, hit.astype(int)) if np.ndim(y) else int(max(y, int(hit)))
        cap = self.num_levels - 1
        return np.minimum(y + hit, cap) if np.ndim(y) else int(min(y + int(hit), cap))

    def to_dict(self):
        return {"mode": self.mode, "index_map": [list(p) for p in self.index_map],
                "mdp": self.mdp.to_dict()}


def _augment(mdp, num_levels, mode):
    require_valid(mdp)
    X, A = mdp.num_states, mdp.num_actions
    N = X * num_levels
    hit = mdp.alarm_mask
    P = np.zeros((N, A, N))
    for y in range(num_levels):
        src = slice(y * X, (y + 1) * X)
        # entering the alarm region moves mass one level up, saturating at the top level
        up = min(y + 1, num_levels - 1)
        P[src, :, y * X:(y + 1) * X][:, :, ~hit] = mdp.transition[:, :, ~hit]
        P[src, :, up * X:(up + 1) * X][:, :, hit] += mdp.transition[:, :, hit]
    rewards = np.tile(mdp.rewards, (1, num_levels, 1))
    terminal = np.tile(mdp.terminal_reward, num_levels)
    alarms = [y * X + x for y in range(num_levels) for x in mdp.alarm_states]
    inner = Mdp(transition=P, rewards=rewards, terminal_reward=terminal,
                alarm_states=alarms, initial_state=mdp.initial_state)
    return AugmentedMdp(base=mdp, mode=mode, mdp=inner)


def augment_binary(mdp):
    """Augment with a flag that is raised on entering the alarm region and stays raised."""
    return _augment(mdp, 2, BINARY)


def augment_counting(mdp):
    """Augment with the number of alarm-region visits, capped at the horizon."""
    return _augment(mdp, mdp.horizon + 1, COUNTING)


def require_mode(aug, mode):
    if aug.mode != mode:
        raise RejectedInputError(f"expected a {mode} augmentation, got {aug.mode}")
