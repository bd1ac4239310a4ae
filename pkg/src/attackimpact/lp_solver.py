"""Bounded-variable revised primal simplex.

Two phases with one artificial per row, sparse LU of the basis (SuperLU) with
product-form eta updates between refactorizations, Dantzig pricing and a
switch to Bland's rule while the objective stalls. Pivoting is fully
deterministic: ties always go to the lowest index.

A small presolve removes fixed columns and forcing rows first, which
eliminates the structurally zero occupation variables of unreachable states.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import RejectedInputError, ResourceLimitError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

AT_LOWER, AT_UPPER, BASIC = 0, 1, 2


@dataclass
class SolverOptions:
    primal_tol: float = 1e-9
    dual_tol: float = 1e-9
    pivot_tol: float = 1e-9
    residual_tol: float = 1e-8
    refactor_every: int = 100
    stall_limit: int = 30
    max_iterations: int = 500_000
    presolve: bool = True


@dataclass
class LpSolution:
    status: str
    values: np.ndarray = None
    objective: float = float("nan")
    max_primal_residual: float = float("nan")
    iterations: int = 0
    farkas: np.ndarray = None  # row multipliers proving infeasibility
    ray: np.ndarray = None     # improving direction proving unboundedness
    info: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.status == OPTIMAL


class _Infeasible(Exception):
    pass


class _Unbounded(Exception):
    def __init__(self, ray):
        super().__init__("unbounded")
        self.ray = ray


def _standard_form(problem):
    """Stack equalities and inequalities (with slack columns) into ``A x = b``; cost is minimized."""
    a_eq = sp.csr_matrix(problem.a_eq)
    a_ub = sp.csr_matrix(problem.a_ub)
    m_eq, m_ub = a_eq.shape[0], a_ub.shape[0]
    n = problem.num_columns
    slack = sp.vstack([sp.csr_matrix((m_eq, m_ub)), sp.identity(m_ub, format="csr")])
    A = sp.hstack([sp.vstack([a_eq, a_ub]), slack]).tocsc()
    b = np.concatenate([problem.b_eq, problem.b_ub]).astype(np.float64)
    c = np.concatenate([-np.asarray(problem.objective, dtype=np.float64), np.zeros(m_ub)])
    lower = np.concatenate([problem.lower, np.zeros(m_ub)]).astype(np.float64)
    upper = np.concatenate([problem.upper, np.full(m_ub, np.inf)]).astype(np.float64)
    return A, b, c, lower, upper


def _check_input(problem):
    arrays = [problem.objective, problem.b_eq, problem.b_ub, problem.lower,
              sp.csr_matrix(problem.a_eq).data, sp.csr_matrix(problem.a_ub).data]
    if not all(np.all(np.isfinite(a)) for a in arrays):
        raise RejectedInputError("LP contains NaN or infinite coefficients")
    if np.any(np.isnan(problem.upper)) or np.any(problem.upper < problem.lower):
        raise RejectedInputError("LP has inconsistent bounds")
    n = problem.num_columns
    if problem.a_eq.shape[1] != n or problem.a_ub.shape[1] != n or problem.lower.shape != (n,) \
            or problem.upper.shape != (n,):
        raise RejectedInputError("LP dimensions are inconsistent")
    if problem.a_eq.shape[0] != problem.b_eq.shape[0] or problem.a_ub.shape[0] != problem.b_ub.shape[0]:
        raise RejectedInputError("LP right-hand sides do not match the row counts")


def _presolve(A, b, lower, upper, tol):
    """Fix columns implied by forcing rows. Returns (fixed mask, fixed values, active rows)."""
    m, n = A.shape
    A_csr = A.tocsr()
    fixed = lower == upper
    value = np.where(fixed, lower, 0.0)
    active = np.ones(m, dtype=bool)
    changed = True
    while changed:
        changed = False
        for i in np.flatnonzero(active):
            start, end = A_csr.indptr[i], A_csr.indptr[i + 1]
            cols = A_csr.indices[start:end]
            vals = A_csr.data[start:end]
            is_fixed = fixed[cols]
            rhs = b[i] - vals[is_fixed] @ value[cols[is_fixed]]
            cols, vals = cols[~is_fixed], vals[~is_fixed]
            scale = 1.0 + abs(b[i])
            if cols.size == 0:
                if abs(rhs) > tol * scale:
                    raise _Infeasible()
                active[i] = False
                changed = True
                continue
            lo_b, up_b = lower[cols], upper[cols]
            min_act = np.sum(np.where(vals > 0, vals * lo_b, vals * up_b))
            max_act = np.sum(np.where(vals > 0, vals * up_b, vals * lo_b))
            if rhs < min_act - tol * scale or rhs > max_act + tol * scale:
                raise _Infeasible()
            if abs(rhs - min_act) <= tol * scale * 1e-3:
                target = np.where(vals > 0, lo_b, up_b)
            elif np.isfinite(max_act) and abs(rhs - max_act) <= tol * scale * 1e-3:
                target = np.where(vals > 0, up_b, lo_b)
            else:
                continue
            if not np.all(np.isfinite(target)):
                continue
            fixed[cols] = True
            value[cols] = target
            active[i] = False
            changed = True
    return fixed, value, active


class _Factor:
    """LU of the basis matrix plus a product-form eta file."""

    def __init__(self, B):
        self.lu = spla.splu(sp.csc_matrix(B), permc_spec="COLAMD",
                            options={"SymmetricMode": False})
        self.etas = []

    def ftran(self, v):
        x = self.lu.solve(v)
        for r, col in self.etas:
            xr = x[r] / col[r]
            x -= xr * col
            x[r] = xr
        return x

    def btran(self, v):
        w = v.copy()
        for r, col in reversed(self.etas):
            # column r of the inverse eta: eta_r = 1/alpha_r, eta_i = -alpha_i/alpha_r
            w_r = w[r]
            w[r] = (w_r - (col @ w - col[r] * w_r)) / col[r]
        return self.lu.solve(w, trans="T")

    def update(self, r, alpha):
        self.etas.append((r, alpha.copy()))


class _Simplex:
    def __init__(self, A, b, c, lower, upper, opts):
        self.opts = opts
        m, n = A.shape
        self.m, self.n = m, n
        x = lower.copy()
        r = b - A @ x
        sign = np.where(r >= 0, 1.0, -1.0)
        art = sp.csc_matrix((sign, (np.arange(m), np.arange(m))), shape=(m, m))
        self.A = sp.hstack([A, art]).tocsc()
        self.AT = self.A.T.tocsr()
        self.b = b
        self.lower = np.concatenate([lower, np.zeros(m)])
        self.upper = np.concatenate([upper, np.full(m, np.inf)])
        self.x = np.concatenate([x, np.abs(r)])
        self.status = np.full(n + m, AT_LOWER, dtype=np.int8)
        self.basis = np.arange(n, n + m)
        self.status[self.basis] = BASIC
        self.c_orig = c
        self.iterations = 0
        self._refactor()

    def _refactor(self):
        self.factor = _Factor(self.A[:, self.basis])
        xn = np.where(self.status == BASIC, 0.0, self.x)
        self.x[self.basis] = self.factor.ftran(self.b - self.A @ xn)

    def _column(self, j):
        col = np.zeros(self.m)
        start, end = self.A.indptr[j], self.A.indptr[j + 1]
        col[self.A.indices[start:end]] = self.A.data[start:end]
        return col

    def run(self, cost):
        opts = self.opts
        cost_scale = np.max(np.abs(cost)) if np.any(cost) else 1.0
        dual_tol = opts.dual_tol * cost_scale
        ptol = opts.primal_tol
        bland = False
        best = np.inf
        stall = 0
        while True:
            if self.iterations >= opts.max_iterations:
                raise ResourceLimitError(f"simplex exceeded {opts.max_iterations} iterations")
            y = self.factor.btran(cost[self.basis])
            d = cost - self.AT @ y
            movable = (self.status != BASIC) & (self.upper > self.lower)
            cand_lo = movable & (self.status == AT_LOWER) & (d < -dual_tol)
            cand_up = movable & (self.status == AT_UPPER) & (d > dual_tol)
            cand = cand_lo | cand_up
            if not cand.any():
                return y
            if bland:
                q = int(np.flatnonzero(cand)[0])
            else:
                score = np.where(cand, np.abs(d), -1.0)
                q = int(np.argmax(score))
            direction = 1.0 if cand_lo[q] else -1.0
            alpha = self.factor.ftran(self._column(q))
            delta = -direction * alpha  # rate of change of the basic variables
            xb = self.x[self.basis]
            lb = self.lower[self.basis]
            ub = self.upper[self.basis]
            ratios = np.full(self.m, np.inf)
            dec = delta < -opts.pivot_tol
            inc = delta > opts.pivot_tol
            ratios[dec] = np.maximum(xb[dec] - lb[dec], 0.0) / -delta[dec]
            fin = inc & np.isfinite(ub)
            ratios[fin] = np.maximum(ub[fin] - xb[fin], 0.0) / delta[fin]
            theta = ratios.min() if self.m else np.inf
            flip = self.upper[q] - self.lower[q]
            if not np.isfinite(theta) and not np.isfinite(flip):
                ray = np.zeros(self.n + self.m)
                ray[q] = direction
                ray[self.basis] = delta
                raise _Unbounded(ray[: self.n])
            if flip <= theta:
                self.x[q] += direction * flip
                self.x[self.basis] = xb + flip * delta
                self.status[q] = AT_UPPER if direction > 0 else AT_LOWER
                step_gain = flip * abs(d[q])
            else:
                ties = np.flatnonzero(ratios <= theta + ptol * 1e-3)
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(delta[ties]))])
                leaving = self.basis[r]
                self.x[self.basis] = xb + theta * delta
                self.x[q] += direction * theta
                self.x[leaving] = lb[r] if delta[r] < 0 else ub[r]
                self.status[leaving] = AT_LOWER if delta[r] < 0 else AT_UPPER
                self.status[q] = BASIC
                self.basis[r] = q
                self.factor.update(r, alpha)
                if len(self.factor.etas) >= opts.refactor_every:
                    self._refactor()
                step_gain = theta * abs(d[q])
            self.iterations += 1
            obj = cost @ self.x
            if step_gain > dual_tol * ptol and obj < best - 1e-12 * (1.0 + abs(best) if np.isfinite(best) else 1.0):
                best = obj
                stall = 0
                bland = False
            else:
                stall += 1
                if stall >= opts.stall_limit:
                    bland = True

    def solve(self):
        n, m = self.n, self.m
        phase1 = np.concatenate([np.zeros(n), np.ones(m)])
        y1 = self.run(phase1)
        self._refactor()
        infeas = float(np.sum(self.x[n:]))
        if infeas > self.opts.primal_tol * (1.0 + np.max(np.abs(self.b), initial=0.0)) * 10:
            return False, y1
        # artificials are pinned to zero for phase two
        self.upper[n:] = 0.0
        self.x[n:] = np.where(self.status[n:] == BASIC, self.x[n:], 0.0)
        cost = np.concatenate([self.c_orig, np.zeros(m)])
        self.run(cost)
        self._refactor()
        return True, None


def solve(problem, options=None):
    """Maximize ``problem.objective`` subject to its constraints."""
    opts = options or SolverOptions()
    _check_input(problem)
    if np.any(np.isinf(problem.lower)):
        raise RejectedInputError("free or lower-unbounded variables are not supported")
    A, b, c, lower, upper = _standard_form(problem)
    n_struct = problem.num_columns
    m, n = A.shape

    if opts.presolve:
        try:
            fixed, fixed_val, active = _presolve(A, b, lower, upper, opts.primal_tol)
        except _Infeasible:
            return _infeasible(problem, A, b, c, lower, upper, opts)
    else:
        fixed = np.zeros(n, dtype=bool)
        fixed_val = np.zeros(n)
        active = np.ones(m, dtype=bool)

    free_cols = np.flatnonzero(~fixed)
    rows = np.flatnonzero(active)
    A_red = A[rows][:, free_cols].tocsc()
    b_red = b[rows] - A[rows][:, fixed] @ fixed_val[fixed]
    simplex = _Simplex(A_red, b_red, c[free_cols], lower[free_cols], upper[free_cols], opts)
    try:
        feasible, _ = simplex.solve()
    except _Unbounded as exc:
        ray = np.zeros(n)
        ray[free_cols] = exc.ray
        return LpSolution(UNBOUNDED, ray=ray[:n_struct], iterations=simplex.iterations)
    if not feasible:
        return _infeasible(problem, A, b, c, lower, upper, opts, simplex.iterations)

    x = fixed_val.copy()
    x[free_cols] = simplex.x[: free_cols.size]
    x = np.clip(x, lower, upper)
    values = x[:n_struct]
    residual = _max_residual(problem, values)
    return LpSolution(
        OPTIMAL,
        values=values,
        objective=float(np.asarray(problem.objective) @ values),
        max_primal_residual=residual,
        iterations=simplex.iterations,
        info={"presolved_columns": int(fixed.sum()), "presolved_rows": int((~active).sum()),
              "reduced_shape": A_red.shape},
    )


def _infeasible(problem, A, b, c, lower, upper, opts, iterations=0):
    """Rerun phase one on the full system to obtain row multipliers as a certificate."""
    simplex = _Simplex(A, b, np.zeros_like(c), lower, upper, opts)
    feasible, y = simplex.solve()
    farkas = None if feasible else -y
    return LpSolution(INFEASIBLE, farkas=farkas, iterations=iterations + simplex.iterations)


def _max_residual(problem, values):
    eq = np.abs(problem.a_eq @ values - problem.b_eq)
    ub = np.maximum(problem.a_ub @ values - problem.b_ub, 0.0)
    return float(max(np.max(eq, initial=0.0), np.max(ub, initial=0.0)))


def farkas_gap(problem, y):
    """``min over the box of y^T A v  -  y^T b``; a positive gap proves infeasibility.

    ``y`` stacks equality multipliers and inequality multipliers; the latter must be
    non-negative for the bound to be valid.
    """
    m_eq = problem.a_eq.shape[0]
    y_eq, y_ub = y[:m_eq], y[m_eq:]
    if np.any(y_ub < -1e-12):
        return -np.inf
    coef = problem.a_eq.T @ y_eq + problem.a_ub.T @ y_ub
    coef[np.abs(coef) <= 1e-12 * max(1.0, np.max(np.abs(y)))] = 0.0
    bound = np.where(coef > 0, problem.lower, problem.upper)
    terms = np.zeros_like(coef)
    nz = coef != 0
    terms[nz] = coef[nz] * bound[nz]
    return float(np.sum(terms) - (y_eq @ problem.b_eq + y_ub @ problem.b_ub))
