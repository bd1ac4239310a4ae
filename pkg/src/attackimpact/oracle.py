"""Independent reference computations for small instances.

Nothing here goes through the augmentation module or the simplex solver:
the path LP is solved with HiGHS, and Markov candidates are scored by an
explicit forward recursion over (state, alarm count) pairs.
"""

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import RejectedInputError, ResourceLimitError
from .lp_builder import OccupationMeasure
from .mdp_core import require_valid
from .policy import MarkovPolicy

DEFAULT_PATH_LP_LIMIT = 10**6
DEFAULT_GRID_LIMIT = 10**6

_HIGHS_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def backward_induction(mdp):
    """Unconstrained optimum by dynamic programming; returns ``(value, choice)``."""
    V = mdp.terminal_reward.copy()
    choice = np.zeros((mdp.horizon, mdp.num_states), dtype=int)
    for t in reversed(range(mdp.horizon)):
        Q = mdp.rewards[t] + mdp.transition @ V
        choice[t] = np.argmax(Q, axis=1)
        V = Q.max(axis=1)
    return float(V[mdp.initial_state]), choice


def forward_propagate(mdp, policy):
    """Exact stage marginals of a Markov policy on ``mdp``."""
    tables = policy.tables
    if tables.shape != (mdp.horizon, mdp.num_states, mdp.num_actions):
        raise RejectedInputError(f"policy shape {tables.shape} does not match the MDP")
    mu = np.zeros(mdp.num_states)
    mu[mdp.initial_state] = 1.0
    stages = np.empty_like(tables)
    for t in range(mdp.horizon):
        stages[t] = mu[:, None] * tables[t]
        mu = np.einsum("xa,xay->y", stages[t], mdp.transition)
    return OccupationMeasure(stages=stages, terminal=mu)


def _as_deltas(deltas):
    deltas = np.atleast_1d(np.asarray(deltas, dtype=np.float64))
    if deltas.ndim != 1 or np.any(~np.isfinite(deltas)) or np.any(deltas < 0):
        raise RejectedInputError("deltas must be a sequence of non-negative numbers")
    return deltas


@dataclass
class PathLpResult:
    status: str
    value: float
    num_variables: int


def solve_path_lp(mdp, deltas, limit=DEFAULT_PATH_LP_LIMIT):
    """Optimum over all history-dependent randomized policies.

    Variables are the joint probabilities of ``(x_0, a_0, ..., x_t, a_t)``
    prefixes. Kernel probabilities enter as fixed multipliers, so every
    feasible point is realized by some history policy and vice versa.
    ``deltas[i-1]`` bounds the probability of at least ``i`` alarm visits.
    """
    require_valid(mdp)
    deltas = _as_deltas(deltas)
    T, X, A = mdp.horizon, mdp.num_states, mdp.num_actions
    P = mdp.transition
    alarm = mdp.alarm_mask.astype(int)
    k = deltas.shape[0]

    # prefixes of the current stage: last state, alarm count (capped at k), parent column, kernel weight
    last = np.array([mdp.initial_state])
    count = np.array([alarm[mdp.initial_state]])
    parent = np.array([-1])
    weight = np.array([1.0])
    n_vars = 0
    obj, eq_rows, eq_cols, eq_vals, b_eq = [], [], [], [], []
    row = 0
    for t in range(T):
        n_pref = last.shape[0]
        if n_vars + n_pref * A > limit:
            raise ResourceLimitError(f"path LP needs more than {limit} variables")
        cols = n_vars + np.arange(n_pref * A).reshape(n_pref, A)
        # sum_a q(h_t, a) = weight * q(parent)
        rows = row + np.arange(n_pref)
        eq_rows.append(np.repeat(rows, A))
        eq_cols.append(cols.ravel())
        eq_vals.append(np.ones(n_pref * A))
        has_parent = parent >= 0
        eq_rows.append(rows[has_parent])
        eq_cols.append(parent[has_parent])
        eq_vals.append(-weight[has_parent])
        b_eq.append(np.where(has_parent, 0.0, 1.0))
        obj.append(mdp.rewards[t][last].ravel())
        row += n_pref
        n_vars += n_pref * A
        if t == T - 1:
            break
        src, act = np.divmod(np.arange(n_pref * A), A)
        x_from = last[src]
        nxt_src, nxt_x = np.nonzero(P[x_from, act] > 0)
        last = nxt_x
        count = np.minimum(count[src[nxt_src]] + alarm[nxt_x], k)
        parent = cols.ravel()[nxt_src]
        weight = P[x_from[nxt_src], act[nxt_src], nxt_x]

    final_cols = cols.ravel()
    src, act = np.divmod(np.arange(final_cols.shape[0]), A)
    x_from = last[src]
    end_dist = P[x_from, act]  # (n_final, X)
    c = np.concatenate(obj)
    c[final_cols] += end_dist @ mdp.terminal_reward
    ub_rows, ub_cols, ub_vals = [], [], []
    for i in range(1, k + 1):
        end_count = count[src][:, None] + alarm[None, :]
        coef = np.where(end_count >= i, end_dist, 0.0).sum(axis=1)
        nz = np.flatnonzero(coef)
        ub_rows.append(np.full(nz.shape[0], i - 1))
        ub_cols.append(final_cols[nz])
        ub_vals.append(coef[nz])
    a_eq = sp.csr_matrix((np.concatenate(eq_vals), (np.concatenate(eq_rows), np.concatenate(eq_cols))),
                         shape=(row, n_vars))
    a_ub = sp.csr_matrix((np.concatenate(ub_vals), (np.concatenate(ub_rows), np.concatenate(ub_cols))),
                         shape=(k, n_vars))
    res = linprog(-c, A_ub=a_ub, b_ub=deltas, A_eq=a_eq, b_eq=np.concatenate(b_eq),
                  bounds=(0, 1), method="highs", options=_HIGHS_OPTIONS)
    if res.status == 2:
        return PathLpResult("infeasible", float("nan"), n_vars)
    if res.status != 0:
        raise RuntimeError(f"HiGHS failed on the path LP: {res.message}")
    return PathLpResult("optimal", float(-res.fun), n_vars)


def reachable_states(mdp):
    """Boolean ``(T+1, X)`` support of the state at each stage under some policy."""
    reach = np.zeros((mdp.horizon + 1, mdp.num_states), dtype=bool)
    reach[0, mdp.initial_state] = True
    support = (mdp.transition > 0).any(axis=1)
    for t in range(mdp.horizon):
        reach[t + 1] = support[reach[t]].any(axis=0)
    return reach


def decision_rows(mdp):
    """Reachable ``(t, x)`` where actions differ in kernel row or stage reward."""
    reach = reachable_states(mdp)
    rows = []
    P = mdp.transition
    for t in range(mdp.horizon):
        for x in np.flatnonzero(reach[t]):
            same_kernel = np.all(P[x] == P[x, :1])
            same_reward = np.all(mdp.rewards[t, x] == mdp.rewards[t, x, 0])
            if not (same_kernel and same_reward):
                rows.append((t, int(x)))
    return rows


def simplex_grid(num_actions, divisions):
    """All distributions over actions whose entries are multiples of ``1/divisions``."""
    points = [c for c in itertools.product(range(divisions + 1), repeat=num_actions)
              if sum(c) == divisions]
    return np.array(points, dtype=np.float64) / divisions


def evaluate_markov(mdp, tables, max_count):
    """Value and alarm-count tail probabilities for a batch of base-space Markov policies.

    ``tables`` has shape ``(B, T, X, A)``. Returns ``(values, tails)`` where
    ``tails[b, i-1]`` is the probability of at least ``i`` alarm visits.
    """
    B = tables.shape[0]
    X = mdp.num_states
    L = max_count + 1
    alarm = mdp.alarm_mask
    dist = np.zeros((B, L, X))
    dist[:, min(int(alarm[mdp.initial_state]), max_count), mdp.initial_state] = 1.0
    value = np.zeros(B)
    for t in range(mdp.horizon):
        joint = dist[..., None] * tables[:, t, None, :, :]  # (B, L, X, A)
        value += np.einsum("blxa,xa->b", joint, mdp.rewards[t])
        nxt = np.einsum("blxa,xay->bly", joint, mdp.transition)
        shifted = np.zeros_like(nxt)
        shifted[:, :, ~alarm] = nxt[:, :, ~alarm]
        shifted[:, 1:, alarm] += nxt[:, :-1, alarm]
        shifted[:, -1, alarm] += nxt[:, -1, alarm]
        dist = shifted
    value += dist.sum(axis=1) @ mdp.terminal_reward
    level_mass = dist.sum(axis=2)  # (B, L)
    tails = np.cumsum(level_mass[:, ::-1], axis=1)[:, ::-1][:, 1:]
    return value, tails


@dataclass
class GridSearchResult:
    value: float
    policy: MarkovPolicy
    candidates: int
    decision_rows: list


def markov_grid_search(mdp, delta, grid_resolution, limit=DEFAULT_GRID_LIMIT, batch=4096):
    """Best grid-sampled Markov policy on the base MDP meeting the chance constraint(s).

    Only decision rows (see :func:`decision_rows`) are searched; every other row
    plays action 0, which cannot change value or alarm probability. Returns
    ``value = -inf`` when no grid candidate is feasible.
    """
    require_valid(mdp)
    deltas = _as_deltas(delta)
    divisions = int(round(1.0 / grid_resolution))
    if divisions < 1:
        raise RejectedInputError("grid_resolution must be at most 1")
    rows = decision_rows(mdp)
    grid = simplex_grid(mdp.num_actions, divisions)
    total = grid.shape[0] ** len(rows)
    if total > limit:
        raise ResourceLimitError(f"{total} grid candidates over {len(rows)} decision rows exceed limit {limit}")
    base = np.zeros((mdp.horizon, mdp.num_states, mdp.num_actions))
    base[..., 0] = 1.0
    k = deltas.shape[0]
    best_value, best_index = -np.inf, None
    shape = (grid.shape[0],) * len(rows)
    for start in range(0, total, batch):
        idx = np.arange(start, min(start + batch, total))
        digits = np.unravel_index(idx, shape) if rows else ()
        tables = np.broadcast_to(base, (idx.shape[0],) + base.shape).copy()
        for (t, x), d in zip(rows, digits):
            tables[:, t, x, :] = grid[d]
        values, tails = evaluate_markov(mdp, tables, k)
        feasible = np.all(tails[:, :k] <= deltas[None, :] + 1e-12, axis=1)
        if feasible.any():
            cand = np.where(feasible, values, -np.inf)
            j = int(np.argmax(cand))
            if cand[j] > best_value + 1e-12:
                best_value, best_index = float(cand[j]), int(idx[j])
    policy = None
    if best_index is not None:
        tables = base.copy()
        digits = np.unravel_index(best_index, shape) if rows else ()
        for (t, x), d in zip(rows, digits):
            tables[t, x] = grid[d]
        policy = MarkovPolicy(tables)
    return GridSearchResult(best_value, policy, total, rows)
