"""Small dense convex programs with KKT-certified primal/dual solutions.

Programs have separable costs ``c.x + sum(h_j x_j^2)`` (``h >= 0``), linear
equalities, linear ``<=`` inequalities and variable bounds.  Linear programs
go to the HiGHS dual simplex shipped with scipy; programs with a quadratic
term go to cvxopt's QP solver.  Either way the raw answer is polished on its
active set and every returned solution carries residuals recomputed by
:func:`check_kkt`.

Sign conventions (all duals are sensitivities of the optimal value):

    c + 2 h x - A_eq' y + A_ub' z - nu_lo + nu_hi = 0,   z, nu_lo, nu_hi >= 0

so ``y`` is d(objective)/d(b_eq) and ``z`` is -d(objective)/d(b_ub).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr
from scipy.optimize import linprog

from .errors import (ConvergenceError, InfeasibleProgramError, InvalidInputError,
                     UnboundedProgramError)

DEFAULT_TOL = 1e-8

_HIGHS_OPTIONS = {
    "presolve": True,
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


def _as_matrix(A, n):
    if A is None:
        return np.zeros((0, n))
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.zeros((0, n))
    return np.atleast_2d(A)


def _as_vector(v, n=None, fill=0.0):
    if v is None:
        return np.full(n, fill, dtype=float)
    return np.asarray(v, dtype=float).reshape(-1)


@dataclass
class ConvexProgram:
    """``min c.x + sum(h x^2)`` s.t. ``A_eq x = b_eq``, ``A_ub x <= b_ub``, ``lo <= x <= hi``."""

    cost_linear: np.ndarray
    cost_quadratic: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    eq_labels: list = field(default_factory=list)
    ub_labels: list = field(default_factory=list)
    var_labels: list = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        self.cost_linear = _as_vector(self.cost_linear)
        n = self.cost_linear.shape[0]
        self.cost_quadratic = _as_vector(self.cost_quadratic, n)
        self.A_eq = _as_matrix(self.A_eq, n)
        self.b_eq = _as_vector(self.b_eq, self.A_eq.shape[0])
        self.A_ub = _as_matrix(self.A_ub, n)
        self.b_ub = _as_vector(self.b_ub, self.A_ub.shape[0])
        self.lower = _as_vector(self.lower, n, -np.inf)
        self.upper = _as_vector(self.upper, n, np.inf)
        self.validate()

    @property
    def num_vars(self) -> int:
        return self.cost_linear.shape[0]

    @property
    def is_linear(self) -> bool:
        return not np.any(self.cost_quadratic > 0)

    def validate(self):
        n = self.num_vars
        if self.cost_quadratic.shape != (n,):
            raise InvalidInputError("cost_quadratic length differs from num_vars")
        if np.any(self.cost_quadratic < 0):
            raise InvalidInputError("cost_quadratic must be >= 0 (convexity)")
        for nm, A, b in (("eq", self.A_eq, self.b_eq), ("ub", self.A_ub, self.b_ub)):
            if A.shape[1] != n:
                raise InvalidInputError(f"{nm} rows have length {A.shape[1]}, expected {n}")
            if A.shape[0] != b.shape[0]:
                raise InvalidInputError(f"{nm}: {A.shape[0]} rows but {b.shape[0]} right-hand sides")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise InvalidInputError("bounds must have one entry per variable")
        if np.any(self.lower > self.upper):
            j = int(np.argmax(self.lower > self.upper))
            raise InvalidInputError(f"variable {self._var(j)} has lower bound above upper bound")

    def _var(self, j):
        return self.var_labels[j] if j < len(self.var_labels) else f"x{j}"

    def eq_label(self, k):
        return self.eq_labels[k] if k < len(self.eq_labels) else f"eq{k}"

    def ub_label(self, k):
        return self.ub_labels[k] if k < len(self.ub_labels) else f"ub{k}"

    def objective_value(self, x) -> float:
        return float(self.cost_linear @ x + self.cost_quadratic @ (x * x))

    def to_text(self) -> str:
        """Plain-text canonical dump, for bug reports."""
        fmt = lambda v: repr(float(v))
        out = [f"program {self.name or '-'}", f"vars {self.num_vars}"]
        for j in range(self.num_vars):
            out.append(f"var {self._var(j)} cost {fmt(self.cost_linear[j])} "
                       f"quad {fmt(self.cost_quadratic[j])} "
                       f"bounds [{fmt(self.lower[j])}, {fmt(self.upper[j])}]")
        for k in range(self.A_eq.shape[0]):
            terms = " ".join(f"{fmt(a)}*{self._var(j)}" for j, a in enumerate(self.A_eq[k]) if a)
            out.append(f"eq {self.eq_label(k)}: {terms} = {fmt(self.b_eq[k])}")
        for k in range(self.A_ub.shape[0]):
            terms = " ".join(f"{fmt(a)}*{self._var(j)}" for j, a in enumerate(self.A_ub[k]) if a)
            out.append(f"ub {self.ub_label(k)}: {terms} <= {fmt(self.b_ub[k])}")
        return "\n".join(out) + "\n"


@dataclass(frozen=True)
class KKTResiduals:
    """Scale-relative infinity-norm residuals.

    stationarity is divided by ``1 + |c|_inf`` and also absorbs dual-sign
    violations; primal feasibility by ``1 + max|rhs|``; complementarity by
    ``1 + |objective|``.
    """

    stationarity: float
    primal_feasibility: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.primal_feasibility, self.complementarity)

    def as_tuple(self):
        return (self.stationarity, self.primal_feasibility, self.complementarity)


@dataclass
class PrimalDualSolution:
    x: np.ndarray
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    lower_duals: np.ndarray
    upper_duals: np.ndarray
    objective: float
    kkt: KKTResiduals | None = None
    degenerate: bool = False

    @property
    def bound_duals(self):
        return self.lower_duals, self.upper_duals

    def dual_objective(self, program: ConvexProgram) -> float:
        lo = np.where(np.isfinite(program.lower), program.lower, 0.0)
        hi = np.where(np.isfinite(program.upper), program.upper, 0.0)
        return float(program.b_eq @ self.eq_duals - program.b_ub @ self.ineq_duals
                     + lo @ self.lower_duals - hi @ self.upper_duals
                     - program.cost_quadratic @ (self.x * self.x))


def _rhs_scale(program):
    vals = [program.b_eq, program.b_ub,
            program.lower[np.isfinite(program.lower)], program.upper[np.isfinite(program.upper)]]
    m = max((float(np.max(np.abs(v))) for v in vals if v.size), default=0.0)
    return 1.0 + m


def check_kkt(program: ConvexProgram, sol: PrimalDualSolution) -> KKTResiduals:
    """Recompute the three KKT residuals from scratch."""
    p = program
    x = np.asarray(sol.x, dtype=float)
    y, z = np.asarray(sol.eq_duals, float), np.asarray(sol.ineq_duals, float)
    nl, nh = np.asarray(sol.lower_duals, float), np.asarray(sol.upper_duals, float)
    if x.shape != (p.num_vars,) or y.shape != p.b_eq.shape or z.shape != p.b_ub.shape:
        raise InvalidInputError("candidate solution dimensions do not match the program")

    grad = p.cost_linear + 2.0 * p.cost_quadratic * x
    r = grad - p.A_eq.T @ y + p.A_ub.T @ z - nl + nh
    sign_viol = max(0.0, -min(z.min(initial=0.0), nl.min(initial=0.0), nh.min(initial=0.0)))
    # a multiplier on an infinite bound can never be complementary
    inf_viol = max(float(np.max(np.abs(nl[~np.isfinite(p.lower)]), initial=0.0)),
                   float(np.max(np.abs(nh[~np.isfinite(p.upper)]), initial=0.0)))
    cscale = 1.0 + float(np.max(np.abs(p.cost_linear), initial=0.0))
    stat = (max(float(np.max(np.abs(r), initial=0.0)), sign_viol) + inf_viol) / cscale

    slack_ub = p.b_ub - p.A_ub @ x
    viol = [np.abs(p.A_eq @ x - p.b_eq), np.maximum(-slack_ub, 0.0),
            np.maximum(p.lower - x, 0.0), np.maximum(x - p.upper, 0.0)]
    prim = max((float(np.max(v, initial=0.0)) for v in viol)) / _rhs_scale(p)

    lo_gap = np.where(np.isfinite(p.lower), x - p.lower, 0.0)
    hi_gap = np.where(np.isfinite(p.upper), p.upper - x, 0.0)
    comp_terms = [np.abs(z * slack_ub), np.abs(nl * lo_gap), np.abs(nh * hi_gap)]
    comp = max(float(np.max(v, initial=0.0)) for v in comp_terms)
    comp /= 1.0 + abs(p.objective_value(x))
    return KKTResiduals(stat, prim, comp)


def _active_sets(p, x, z, nl, nh, tol=1e-7):
    dual_tol = 1e-9 * (1.0 + float(np.max(np.abs(p.cost_linear), initial=0.0)))
    slack = p.b_ub - p.A_ub @ x
    act_ub = (slack <= tol * (1.0 + np.abs(p.b_ub))) | (z > dual_tol)
    fin_lo, fin_hi = np.isfinite(p.lower), np.isfinite(p.upper)
    lo = np.where(fin_lo, p.lower, 0.0)
    hi = np.where(fin_hi, p.upper, 0.0)
    act_lo = fin_lo & ((x - lo <= tol * (1.0 + np.abs(lo))) | (nl > dual_tol))
    act_hi = fin_hi & ((hi - x <= tol * (1.0 + np.abs(hi))) | (nh > dual_tol))
    return act_ub, act_lo, act_hi


def _polish(p: ConvexProgram, sol: PrimalDualSolution, correct: bool = True) -> PrimalDualSolution:
    """Least-norm Newton correction on the active set.

    The solver's basis choice is preserved: the correction only removes
    round-off of the size of the solver tolerance, it is not a re-solve.
    Also sets the degeneracy flag.
    """
    n = p.num_vars
    x, y, z = sol.x.copy(), sol.eq_duals.copy(), sol.ineq_duals.copy()
    nl, nh = sol.lower_duals.copy(), sol.upper_duals.copy()
    act_ub, act_lo, act_hi = _active_sets(p, x, z, nl, nh)
    eye = np.eye(n)
    A_act = np.vstack([p.A_eq, p.A_ub[act_ub], eye[act_lo], eye[act_hi]])
    k = A_act.shape[0]
    if not correct:
        sol.degenerate = _is_degenerate(p, sol, act_ub, act_lo, act_hi, k)
        return sol

    z[~act_ub] = 0.0
    nl[~act_lo] = 0.0
    nh[~act_hi] = 0.0
    b_act = np.concatenate([p.b_eq, p.b_ub[act_ub], p.lower[act_lo], p.upper[act_hi]])
    signs = np.concatenate([-np.ones(p.A_eq.shape[0]), np.ones(int(act_ub.sum())),
                            -np.ones(int(act_lo.sum())), np.ones(int(act_hi.sum()))])
    grad = p.cost_linear + 2.0 * p.cost_quadratic * x
    w = np.concatenate([y, z[act_ub], nl[act_lo], nh[act_hi]])
    At = A_act.T * signs
    r_stat = grad + At @ w
    r_prim = b_act - A_act @ x
    if p.is_linear:
        # blocks decouple: primal and dual corrections solved separately
        dx = np.linalg.lstsq(A_act, r_prim, rcond=None)[0] if k else np.zeros(n)
        dw = np.linalg.lstsq(At, -r_stat, rcond=None)[0] if k else np.zeros(0)
    else:
        K = np.block([[np.diag(2.0 * p.cost_quadratic), At], [A_act, np.zeros((k, k))]])
        delta = np.linalg.lstsq(K, np.concatenate([-r_stat, r_prim]), rcond=None)[0]
        dx, dw = delta[:n], delta[n:]
    x = x + dx
    w = w + dw

    ne, nu, nlo = p.A_eq.shape[0], int(act_ub.sum()), int(act_lo.sum())
    y = w[:ne]
    z[act_ub] = w[ne:ne + nu]
    nl[act_lo] = w[ne + nu:ne + nu + nlo]
    nh[act_hi] = w[ne + nu + nlo:]
    x[act_lo] = p.lower[act_lo]
    x[act_hi] = p.upper[act_hi]
    cand = PrimalDualSolution(x, y, np.maximum(z, 0.0), np.maximum(nl, 0.0), np.maximum(nh, 0.0),
                              p.objective_value(x))
    cand.kkt = check_kkt(p, cand)
    best = cand if sol.kkt is None or cand.kkt.max() <= sol.kkt.max() else sol
    best.degenerate = _is_degenerate(p, best, act_ub, act_lo, act_hi, k)
    return best


def _is_degenerate(p, sol, act_ub, act_lo, act_hi, n_active) -> bool:
    # more active constraints than variables: multipliers may not be unique
    if n_active > p.num_vars:
        return True
    if not p.is_linear:
        return False
    # weakly active constraint in an LP: alternative primal optima possible
    scale = 1e-9 * (1.0 + float(np.max(np.abs(p.cost_linear), initial=0.0)))
    weak = [sol.ineq_duals[act_ub], sol.lower_duals[act_lo], sol.upper_duals[act_hi]]
    return any(np.any(np.abs(v) <= scale) for v in weak)


def _bounds_list(p):
    return [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi)
            for lo, hi in zip(p.lower, p.upper)]


def _solve_lp(p: ConvexProgram) -> PrimalDualSolution:
    res = linprog(p.cost_linear,
                  A_ub=p.A_ub if p.A_ub.shape[0] else None, b_ub=p.b_ub if p.A_ub.shape[0] else None,
                  A_eq=p.A_eq if p.A_eq.shape[0] else None, b_eq=p.b_eq if p.A_eq.shape[0] else None,
                  bounds=_bounds_list(p), method="highs-ds", options=_HIGHS_OPTIONS)
    if res.status == 2:
        raise InfeasibleProgramError(f"program {p.name or ''} is infeasible".replace("  ", " "),
                                     violated=_infeasibility_report(p))
    if res.status == 3:
        raise UnboundedProgramError(f"program {p.name or ''} is unbounded".replace("  ", " "),
                                    direction=_unbounded_direction(p))
    if res.status != 0 or res.x is None:
        raise ConvergenceError(f"HiGHS stopped with status {res.status}: {res.message}")
    y = np.asarray(res.eqlin.marginals) if p.A_eq.shape[0] else np.zeros(0)
    z = -np.asarray(res.ineqlin.marginals) if p.A_ub.shape[0] else np.zeros(0)
    nl = np.asarray(res.lower.marginals, dtype=float)
    nh = -np.asarray(res.upper.marginals, dtype=float)
    x = np.asarray(res.x, dtype=float)
    return PrimalDualSolution(x, y, z, nl, nh, p.objective_value(x))


def _independent_rows(A, b):
    """Indices of a maximal linearly independent row subset; raises if the rest contradict it."""
    if A.shape[0] == 0:
        return np.arange(0)
    _, R, piv = qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > 1e-10 * max(1.0, diag.max(initial=0.0))))
    keep = np.sort(piv[:rank])
    aug = np.linalg.matrix_rank(np.column_stack([A, b]), tol=1e-10 * max(1.0, np.abs(A).max()))
    if aug > rank:
        raise InfeasibleProgramError("equality rows are mutually inconsistent",
                                     violated=[f"eq{k}" for k in range(A.shape[0]) if k not in keep])
    return keep


def _solve_qp(p: ConvexProgram) -> PrimalDualSolution:
    from cvxopt import matrix, solvers

    n = p.num_vars
    # cvxopt needs a full-row-rank equality block; dependent rows get zero duals
    keep = _independent_rows(p.A_eq, p.b_eq)
    fin_lo, fin_hi = np.isfinite(p.lower), np.isfinite(p.upper)
    eye = np.eye(n)
    G = np.vstack([p.A_ub, -eye[fin_lo], eye[fin_hi]])
    h = np.concatenate([p.b_ub, -p.lower[fin_lo], p.upper[fin_hi]])
    args = [matrix(np.diag(2.0 * p.cost_quadratic)), matrix(p.cost_linear)]
    if G.shape[0]:
        args += [matrix(G), matrix(h)]
    else:
        args += [None, None]
    if keep.size:
        args += [matrix(p.A_eq[keep]), matrix(p.b_eq[keep])]
    try:
        out = solvers.qp(*args, options={"show_progress": False, "abstol": 1e-12,
                                         "reltol": 1e-12, "feastol": 1e-12, "maxiters": 200})
    except ValueError as exc:  # rank-deficient equality block
        raise ConvergenceError(f"QP solver failed: {exc}") from exc
    status = out["status"]
    if status == "primal infeasible":
        raise InfeasibleProgramError(f"program {p.name} is infeasible", violated=_infeasibility_report(p))
    if status == "dual infeasible":
        raise UnboundedProgramError(f"program {p.name} is unbounded", direction=_unbounded_direction(p))
    if out["x"] is None:
        raise ConvergenceError(f"QP solver stopped with status {status!r}")
    x = np.array(out["x"]).reshape(-1)
    zz = np.array(out["z"]).reshape(-1) if G.shape[0] else np.zeros(0)
    y = np.zeros(p.A_eq.shape[0])
    if keep.size:
        y[keep] = -np.array(out["y"]).reshape(-1)
    mu = p.A_ub.shape[0]
    nlo = int(fin_lo.sum())
    nl = np.zeros(n)
    nh = np.zeros(n)
    nl[fin_lo] = zz[mu:mu + nlo]
    nh[fin_hi] = zz[mu + nlo:]
    sol = PrimalDualSolution(x, y, zz[:mu], nl, nh, p.objective_value(x))
    if status != "optimal":
        sol.kkt = check_kkt(p, sol)
    return sol


def solve(program: ConvexProgram, tolerance: float = DEFAULT_TOL) -> PrimalDualSolution:
    """Solve ``program``; the result satisfies KKT to ``tolerance`` or an error is raised."""
    program.validate()
    raw = _solve_lp(program) if program.is_linear else _solve_qp(program)
    raw.kkt = check_kkt(program, raw)
    sol = _polish(program, raw, correct=raw.kkt.max() > 1e-3 * tolerance)
    if sol.kkt.max() > tolerance:
        sol = _polish(program, sol)
    if sol.kkt.max() > tolerance:
        raise ConvergenceError(
            f"KKT residuals {sol.kkt.as_tuple()} exceed tolerance {tolerance:g}", residuals=sol.kkt)
    return sol


def _infeasibility_report(p: ConvexProgram, tol=1e-7) -> list:
    """Constraints that must be relaxed in a minimum-total-violation elastic LP."""
    n, me, mi = p.num_vars, p.A_eq.shape[0], p.A_ub.shape[0]
    # vars: x, s_plus (me), s_minus (me), s_ub (mi)
    c = np.concatenate([np.zeros(n), np.ones(2 * me + mi)])
    A_eq = np.hstack([p.A_eq, np.eye(me), -np.eye(me), np.zeros((me, mi))]) if me else None
    A_ub = np.hstack([p.A_ub, np.zeros((mi, 2 * me)), -np.eye(mi)]) if mi else None
    bounds = _bounds_list(p) + [(0, None)] * (2 * me + mi)
    res = linprog(c, A_ub=A_ub, b_ub=p.b_ub if mi else None, A_eq=A_eq, b_eq=p.b_eq if me else None,
                  bounds=bounds, method="highs-ds")
    if res.status != 0:
        return ["<bounds>"]
    s = res.x[n:]
    out = [p.eq_label(k) for k in range(me) if s[k] + s[me + k] > tol]
    out += [p.ub_label(k) for k in range(mi) if s[2 * me + k] > tol]
    return out


def _unbounded_direction(p: ConvexProgram):
    n = p.num_vars
    lo = np.where(np.isfinite(p.lower), 0.0, -1.0)
    hi = np.where(np.isfinite(p.upper), 0.0, 1.0)
    hi = np.where(p.cost_quadratic > 0, 0.0, hi)
    lo = np.where(p.cost_quadratic > 0, 0.0, lo)
    res = linprog(p.cost_linear,
                  A_ub=p.A_ub if p.A_ub.shape[0] else None,
                  b_ub=np.zeros(p.A_ub.shape[0]) if p.A_ub.shape[0] else None,
                  A_eq=p.A_eq if p.A_eq.shape[0] else None,
                  b_eq=np.zeros(p.A_eq.shape[0]) if p.A_eq.shape[0] else None,
                  bounds=list(zip(lo, hi)), method="highs-ds")
    if res.status == 0 and res.fun < 0:
        return np.asarray(res.x)
    return None
