"""Built-in models: the 16-level drift example and the two-branch counter-example."""

import numpy as np

from .mdp_core import Mdp

UP, STAY, DOWN = 0, 1, 2

# counter-example state names, in index order
APPENDIX_STATES = ("x0", "x1", "x1a", "x2", "x3", "x3p", "x3pa")
APPENDIX_SAFE, APPENDIX_RISKY = 0, 1


def section5_mdp(num_levels=16, horizon=15, alarm_from=6, initial_level=1):
    """Random-walk plant pushed by up/stay/down with alarms on levels ``>= alarm_from``.

    Levels are 1-based in the model description and 0-based as state indices.
    Reward is the level value itself at every stage, terminal stage included.
    Probability that would leave the top level stays on it; with the default
    horizon that row is never used before the final stage.
    """
    X = num_levels
    P = np.zeros((X, 3, X))
    moves = {  # (p_up, p_same, p_down)
        UP: (0.8, 0.1, 0.1),
        STAY: (0.1, 0.8, 0.1),
        DOWN: (0.1, 0.1, 0.8),
    }
    floor_moves = {UP: (0.8, 0.2), STAY: (0.2, 0.8), DOWN: (0.2, 0.8)}
    for x in range(X):
        for a in (UP, STAY, DOWN):
            if x == 0:
                p_up, p_same = floor_moves[a]
                p_down = 0.0
            else:
                p_up, p_same, p_down = moves[a]
            P[x, a, min(x + 1, X - 1)] += p_up
            P[x, a, x] += p_same
            if p_down:
                P[x, a, x - 1] += p_down
    values = np.arange(1, X + 1, dtype=np.float64)
    rewards = np.tile(values[None, :, None], (horizon, 1, 3))
    return Mdp(
        transition=P,
        rewards=rewards,
        terminal_reward=values.copy(),
        alarm_states=range(alarm_from - 1, X),
        initial_state=initial_level - 1,
    )


def section5_deltas(horizon=15, base=0.5):
    return [base ** i for i in range(1, horizon + 1)]


def appendix_mdp():
    """Three-stage example where only the decision at ``x2`` matters.

    From ``x0`` the alarm state ``x1a`` is hit with probability 1/4. At ``x2`` the
    safe action reaches ``x3`` (reward 1); the risky action splits evenly
    between ``x3p`` (reward 10) and the alarm state ``x3pa`` (reward 0).
    """
    idx = {name: i for i, name in enumerate(APPENDIX_STATES)}
    X, A = len(APPENDIX_STATES), 2
    P = np.zeros((X, A, X))
    for a in range(A):
        P[idx["x0"], a, idx["x1"]] = 0.75
        P[idx["x0"], a, idx["x1a"]] = 0.25
        P[idx["x1"], a, idx["x2"]] = 1.0
        P[idx["x1a"], a, idx["x2"]] = 1.0
        for end in ("x3", "x3p", "x3pa"):
            P[idx[end], a, idx[end]] = 1.0
    P[idx["x2"], APPENDIX_SAFE, idx["x3"]] = 1.0
    P[idx["x2"], APPENDIX_RISKY, idx["x3p"]] = 0.5
    P[idx["x2"], APPENDIX_RISKY, idx["x3pa"]] = 0.5
    terminal = np.zeros(X)
    terminal[idx["x3"]] = 1.0
    terminal[idx["x3p"]] = 10.0
    return Mdp(
        transition=P,
        rewards=np.zeros((3, X, A)),
        terminal_reward=terminal,
        alarm_states=[idx["x1a"], idx["x3pa"]],
        initial_state=idx["x0"],
    )


BUILTIN = {"appendix": appendix_mdp, "section5": section5_mdp}


def random_mdp(rng, max_states=4, max_actions=3, max_horizon=4, decision_states=None,
               stage_reward=1.0, terminal_reward=5.0):
    """Small random instance with a random non-empty alarm region avoiding the start state.

    ``decision_states`` limits how many states have action-dependent kernels;
    the remaining states share one kernel row across actions.
    """
    X = int(rng.integers(2, max_states + 1))
    A = int(rng.integers(2, max_actions + 1))
    T = int(rng.integers(2, max_horizon + 1))
    n_dec = X if decision_states is None else min(decision_states, X)
    deciding = set(rng.choice(X, size=n_dec, replace=False).tolist())
    P = np.zeros((X, A, X))
    for x in range(X):
        for a in range(A if x in deciding else 1):
            k = int(rng.integers(1, min(3, X) + 1))
            succ = rng.choice(X, size=k, replace=False)
            P[x, a, succ] = rng.dirichlet(np.ones(k))
        if x not in deciding:
            P[x, 1:] = P[x, 0]
    x0 = int(rng.integers(X))
    others = [s for s in range(X) if s != x0]
    n_alarm = int(rng.integers(1, max(1, len(others) // 2) + 1))
    alarms = rng.choice(others, size=n_alarm, replace=False).tolist()
    rewards = rng.uniform(0.0, stage_reward, size=(T, X, A))
    for x in range(X):
        if x not in deciding:
            rewards[:, x, :] = rewards[:, x, :1]
    terminal = rng.uniform(0.0, terminal_reward, size=X)
    return Mdp(transition=P, rewards=rewards, terminal_reward=terminal,
               alarm_states=alarms, initial_state=x0)
