"""Occupation-measure linear programs for the augmented MDPs.

Columns are laid out t-major: ``rho[t, xh, a]`` for ``t < T`` followed by the
terminal marginals ``rho_T[xh]``. Rows are the initial-mass row, the flow rows
for ``t = 1..T-1``, and one definition row per terminal variable.
"""

import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .augmentation import BINARY, COUNTING, require_mode
from .errors import RejectedInputError


@dataclass(frozen=True)
class VariableMap:
    horizon: int
    num_states: int
    num_actions: int

    @property
    def num_stage_columns(self):
        return self.horizon * self.num_states * self.num_actions

    @property
    def num_columns(self):
        return self.num_stage_columns + self.num_states

    def column(self, t, xh, a):
        return (t * self.num_states + xh) * self.num_actions + a

    def terminal_column(self, xh):
        return self.num_stage_columns + xh

    def describe(self, col):
        """Inverse of :meth:`column` / :meth:`terminal_column`; terminal columns have ``a=None``."""
        if not 0 <= col < self.num_columns:
            raise RejectedInputError(f"column {col} out of range")
        if col >= self.num_stage_columns:
            return self.horizon, col - self.num_stage_columns, None
        ta, a = divmod(col, self.num_actions)
        t, xh = divmod(ta, self.num_states)
        return t, xh, a


@dataclass(frozen=True)
class LpProblem:
    """``max objective @ v`` s.t. ``a_eq v = b_eq``, ``a_ub v <= b_ub``, ``lower <= v <= upper``."""

    objective: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    a_ub: sp.csr_matrix
    b_ub: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    variable_map: VariableMap = None

    @property
    def num_columns(self):
        return self.objective.shape[0]


@dataclass
class OccupationMeasure:
    stages: np.ndarray    # (T, N, A)
    terminal: np.ndarray  # (N,)

    @classmethod
    def from_vector(cls, vmap, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (vmap.num_columns,):
            raise RejectedInputError(f"expected {vmap.num_columns} values, got {values.shape}")
        stages = values[: vmap.num_stage_columns].reshape(vmap.horizon, vmap.num_states, vmap.num_actions)
        return cls(stages=stages.copy(), terminal=values[vmap.num_stage_columns:].copy())

    def to_vector(self):
        return np.concatenate([self.stages.ravel(), self.terminal])

    @property
    def horizon(self):
        return self.stages.shape[0]

    def state_marginals(self):
        """``(T+1, N)`` array of state probabilities per stage."""
        return np.vstack([self.stages.sum(axis=2), self.terminal[None, :]])


def _flow_system(mdp):
    """Equality rows and right-hand side shared by both problem variants."""
    T, N, A = mdp.horizon, mdp.num_states, mdp.num_actions
    vmap = VariableMap(T, N, A)
    P = mdp.transition
    rows, cols, vals = [], [], []
    # initial mass: sum_a rho_0(xh0, a) = 1
    x0 = mdp.initial_state
    for a in range(A):
        rows.append(0)
        cols.append(vmap.column(0, x0, a))
        vals.append(1.0)
    src, act, dst = np.nonzero(P)
    prob = P[src, act, dst]
    for t in range(1, T + 1):
        base_row = 1 + (t - 1) * N
        for xh in range(N):
            if t < T:
                for a in range(A):
                    rows.append(base_row + xh)
                    cols.append(vmap.column(t, xh, a))
                    vals.append(1.0)
            else:
                rows.append(base_row + xh)
                cols.append(vmap.terminal_column(xh))
                vals.append(1.0)
        rows.extend((base_row + dst).tolist())
        cols.extend(((t - 1) * N + src) * A + act)
        vals.extend((-prob).tolist())
    n_rows = 1 + T * N
    a_eq = sp.coo_matrix((vals, (rows, cols)), shape=(n_rows, vmap.num_columns)).tocsr()
    a_eq.sum_duplicates()
    b_eq = np.zeros(n_rows)
    b_eq[0] = 1.0
    lower = np.zeros(vmap.num_columns)
    upper = np.ones(vmap.num_columns)
    # only the augmented initial state carries mass at t = 0
    for xh in range(N):
        if xh != x0:
            upper[vmap.column(0, xh, 0): vmap.column(0, xh, 0) + A] = 0.0
    objective = np.concatenate([mdp.rewards.ravel(), mdp.terminal_reward])
    return vmap, objective, a_eq, b_eq, lower, upper


def _chance_rows(aug, vmap, thresholds):
    """One row per threshold ``i`` summing terminal mass over levels ``y >= i``."""
    levels = aug.level_of
    rows, cols = [], []
    for r, i in enumerate(thresholds):
        for xh in np.flatnonzero(levels >= i):
            rows.append(r)
            cols.append(vmap.terminal_column(int(xh)))
    return sp.coo_matrix((np.ones(len(rows)), (rows, cols)),
                         shape=(len(thresholds), vmap.num_columns)).tocsr()


def _check_probability(value, name):
    if not (np.isfinite(value) and 0.0 <= value <= 1.0):
        raise RejectedInputError(f"{name}={value} is not a probability")


def build_problem1_lp(aug, delta):
    """LP with one chance row bounding the terminal mass on the raised flag."""
    require_mode(aug, BINARY)
    _check_probability(delta, "delta")
    vmap, objective, a_eq, b_eq, lower, upper = _flow_system(aug.mdp)
    a_ub = _chance_rows(aug, vmap, [1])
    return LpProblem(objective, a_eq, b_eq, a_ub, np.array([float(delta)]), lower, upper, vmap)


def build_problem2_lp(aug, deltas):
    """LP with chance rows ``P(Y_T >= i) <= deltas[i-1]`` for ``i = 1..T``."""
    require_mode(aug, COUNTING)
    deltas = np.asarray(deltas, dtype=np.float64).ravel()
    T = aug.base.horizon
    if deltas.shape != (T,):
        raise RejectedInputError(f"need {T} deltas, got {deltas.shape[0]}")
    for i, d in enumerate(deltas, start=1):
        _check_probability(d, f"delta_{i}")
    vmap, objective, a_eq, b_eq, lower, upper = _flow_system(aug.mdp)
    a_ub = _chance_rows(aug, vmap, range(1, T + 1))
    return LpProblem(objective, a_eq, b_eq, a_ub, deltas.copy(), lower, upper, vmap)


def objective_value(aug, rho):
    mdp = aug.mdp
    if rho.stages.shape != mdp.rewards.shape or rho.terminal.shape != mdp.terminal_reward.shape:
        raise RejectedInputError("occupation measure does not match the augmented MDP")
    return float(np.sum(mdp.rewards * rho.stages) + mdp.terminal_reward @ rho.terminal)


def flow_residuals(mdp, rho):
    """Absolute residuals of the initial, flow and terminal rows for a given measure."""
    P = mdp.transition
    N = mdp.num_states
    init = np.zeros(N)
    init[mdp.initial_state] = 1.0
    res = [np.abs(rho.stages[0].sum(axis=1) - init)]
    for t in range(1, mdp.horizon):
        inflow = np.einsum("xa,xay->y", rho.stages[t - 1], P)
        res.append(np.abs(rho.stages[t].sum(axis=1) - inflow))
    inflow = np.einsum("xa,xay->y", rho.stages[-1], P)
    res.append(np.abs(rho.terminal - inflow))
    return np.concatenate(res)


# -- plain-text sparse export -------------------------------------------------

def _write_triplets(out, mat):
    coo = mat.tocoo()
    order = np.lexsort((coo.col, coo.row))
    for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
        out.write(f"{r} {c} {float(v)!r}\n")


def write_lp_text(problem, fh=None):
    """Serialize ``problem``; returns the text when ``fh`` is None."""
    out = io.StringIO() if fh is None else fh
    n = problem.num_columns
    out.write("# sparse LP: maximize objective subject to equalities, inequalities (<=) and bounds\n")
    out.write(f"DIMENSIONS {problem.a_eq.shape[0]} {problem.a_ub.shape[0]} {n}\n")
    if problem.variable_map is not None:
        vm = problem.variable_map
        out.write(f"LAYOUT {vm.horizon} {vm.num_states} {vm.num_actions}\n")
    out.write("OBJECTIVE\n")
    for c in np.flatnonzero(problem.objective):
        out.write(f"{c} {float(problem.objective[c])!r}\n")
    out.write("EQUALITIES\n")
    _write_triplets(out, problem.a_eq)
    out.write("EQ_RHS\n")
    for r in np.flatnonzero(problem.b_eq):
        out.write(f"{r} {float(problem.b_eq[r])!r}\n")
    out.write("INEQUALITIES\n")
    _write_triplets(out, problem.a_ub)
    out.write("INEQ_RHS\n")
    for r in np.flatnonzero(problem.b_ub):
        out.write(f"{r} {float(problem.b_ub[r])!r}\n")
    out.write("BOUNDS\n")
    for c in range(n):
        out.write(f"{c} {float(problem.lower[c])!r} {float(problem.upper[c])!r}\n")
    out.write("END\n")
    if fh is None:
        return out.getvalue()


def read_lp_text(text):
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    it = iter(lines)
    head = next(it).split()
    if head[0] != "DIMENSIONS":
        raise RejectedInputError("LP text must start with DIMENSIONS")
    m_eq, m_ub, n = map(int, head[1:4])
    vmap = None
    sections = {}
    current = None
    for ln in it:
        word = ln.split()[0]
        if word == "LAYOUT":
            vmap = VariableMap(*map(int, ln.split()[1:4]))
        elif word in ("OBJECTIVE", "EQUALITIES", "EQ_RHS", "INEQUALITIES", "INEQ_RHS", "BOUNDS"):
            current = word
            sections[current] = []
        elif word == "END":
            break
        elif current is None:
            raise RejectedInputError(f"data line outside a section: {ln!r}")
        else:
            sections[current].append(ln.split())

    def triplets(name, shape):
        data = sections.get(name, [])
        r = [int(d[0]) for d in data]
        c = [int(d[1]) for d in data]
        v = [float(d[2]) for d in data]
        return sp.coo_matrix((v, (r, c)), shape=shape).tocsr()

    def dense(name, size):
        out = np.zeros(size)
        for d in sections.get(name, []):
            out[int(d[0])] = float(d[1])
        return out

    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    for d in sections.get("BOUNDS", []):
        lower[int(d[0])] = float(d[1])
        upper[int(d[0])] = float(d[2])
    return LpProblem(
        objective=dense("OBJECTIVE", n),
        a_eq=triplets("EQUALITIES", (m_eq, n)),
        b_eq=dense("EQ_RHS", m_eq),
        a_ub=triplets("INEQUALITIES", (m_ub, n)),
        b_ub=dense("INEQ_RHS", m_ub),
        lower=lower,
        upper=upper,
        variable_map=vmap,
    )
