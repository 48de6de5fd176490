"""Small solver-agnostic MILP layer.

Models are built append-only from continuous and binary variables, linear
constraints and a linear objective, then handed to a backend:

* ``"bnb"``: the built-in reference branch-and-bound (best-bound node order,
  most-fractional branching, exact LP relaxations via HiGHS' simplex).
* ``"highs"``: ``scipy.optimize.milp`` for instances too large for the
  reference backend.

Any callable ``backend(model, options) -> SolveResult`` is accepted as well.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

FEAS_TOL = 1e-6
INT_TOL = 1e-6

CONTINUOUS = "continuous"
BINARY = "binary"

OPTIMAL = "optimal"
FEASIBLE_GAP = "feasible_gap"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
TIME_LIMIT_NO_SOLUTION = "time_limit_no_solution"

_SENSES = {"<=": "<=", "≤": "<=", "=": "=", "==": "=", ">=": ">=", "≥": ">="}


class ModelError(ValueError):
    """Raised for malformed model-building calls."""


class LinExpr:
    """Sparse linear expression ``sum(coef * var) + constant``."""

    __slots__ = ("terms", "constant")

    def __init__(self, terms: Mapping[int, float] | None = None, constant: float = 0.0):
        self.terms: dict[int, float] = dict(terms) if terms else {}
        self.constant = float(constant)

    @staticmethod
    def of(value) -> "LinExpr":
        if isinstance(value, LinExpr):
            return value
        if isinstance(value, Var):
            return LinExpr({value.index: 1.0})
        if isinstance(value, Mapping):
            return LinExpr({int(k): float(v) for k, v in value.items()})
        if isinstance(value, (int, float, np.floating, np.integer)):
            return LinExpr(constant=float(value))
        raise TypeError(f"cannot interpret {value!r} as a linear expression")

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.constant)

    def _iadd(self, other, scale: float = 1.0) -> "LinExpr":
        if isinstance(other, Var):
            self.terms[other.index] = self.terms.get(other.index, 0.0) + scale
            return self
        other = LinExpr.of(other)
        for k, v in other.terms.items():
            self.terms[k] = self.terms.get(k, 0.0) + scale * v
        self.constant += scale * other.constant
        return self

    def __add__(self, other):
        return self.copy()._iadd(other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.copy()._iadd(other, -1.0)

    def __rsub__(self, other):
        return LinExpr.of(other).copy()._iadd(self, -1.0)

    def __mul__(self, k):
        if not isinstance(k, (int, float, np.floating, np.integer)):
            return NotImplemented
        k = float(k)
        return LinExpr({i: k * v for i, v in self.terms.items()}, k * self.constant)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def value(self, x: np.ndarray) -> float:
        return self.constant + sum(v * x[i] for i, v in self.terms.items())

    def __repr__(self):
        parts = [f"{v:+g} x{i}" for i, v in sorted(self.terms.items())]
        if self.constant or not parts:
            parts.append(f"{self.constant:+g}")
        return " ".join(parts)


def quicksum(items: Iterable) -> LinExpr:
    out = LinExpr()
    for it in items:
        out._iadd(it)
    return out


class Var:
    """Handle to a model variable. ``index`` is the dense, stable id."""

    __slots__ = ("index", "name")

    def __init__(self, index: int, name: str):
        self.index = index
        self.name = name

    def __add__(self, other):
        return LinExpr.of(self) + other

    __radd__ = __add__

    def __sub__(self, other):
        return LinExpr.of(self) - other

    def __rsub__(self, other):
        return LinExpr.of(other) - self

    def __mul__(self, k):
        if not isinstance(k, (int, float, np.floating, np.integer)):
            return NotImplemented
        return LinExpr({self.index: float(k)})

    __rmul__ = __mul__

    def __neg__(self):
        return LinExpr({self.index: -1.0})

    def __repr__(self):
        return f"Var({self.index}, {self.name!r})"


@dataclass
class Constraint:
    expr: LinExpr  # constant already folded into rhs
    sense: str
    rhs: float
    name: str


@dataclass(frozen=True)
class SolveOptions:
    time_limit: float = 1800.0
    gap_target: float = 0.01

    def __post_init__(self):
        if not self.time_limit > 0:
            raise ValueError("time_limit must be positive")
        if not self.gap_target >= 0:
            raise ValueError("gap_target must be non-negative")


@dataclass
class SolveResult:
    status: str
    objective: float = math.nan
    values: np.ndarray | None = None
    gap: float = math.inf
    wall_time: float = 0.0
    bound: float = math.nan
    nodes: int = 0
    backend: str = ""

    @property
    def has_solution(self) -> bool:
        return self.values is not None and self.status in (OPTIMAL, FEASIBLE_GAP)

    def value(self, item) -> float:
        if self.values is None:
            raise ValueError(f"no solution available (status {self.status})")
        if isinstance(item, Var):
            return float(self.values[item.index])
        return float(LinExpr.of(item).value(self.values))


@dataclass
class LpResult:
    status: str
    objective: float
    values: np.ndarray | None
    duals: np.ndarray | None  # d objective / d rhs, in the model's own sense


@dataclass
class _Arrays:
    c: np.ndarray
    c0: float
    sign: float  # +1 minimise, -1 maximise (c already holds sign * objective)
    A_ub: sparse.csr_matrix
    b_ub: np.ndarray
    A_eq: sparse.csr_matrix
    b_eq: np.ndarray
    ub_rows: np.ndarray  # constraint id per A_ub row
    ub_flip: np.ndarray  # -1 where a >= row was negated
    eq_rows: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binaries: np.ndarray


class Model:
    """Append-only MILP model."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.kinds: list[str] = []
        self.lbs: list[float] = []
        self.ubs: list[float] = []
        self.names: list[str] = []
        self.constraints: list[Constraint] = []
        self.obj_sense: str | None = None
        self.objective = LinExpr()
        self._frozen = False

    # building -------------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.kinds)

    def _check_open(self):
        if self._frozen:
            raise ModelError("model already solved; use copy() to extend it")

    def add_variable(self, kind: str = CONTINUOUS, lb: float = 0.0, ub: float = math.inf,
                     name: str = "") -> Var:
        self._check_open()
        if kind not in (CONTINUOUS, BINARY):
            raise ModelError(f"unknown variable kind {kind!r}")
        lb, ub = float(lb), float(ub)
        if lb > ub:
            raise ModelError(f"variable {name!r}: lower bound {lb} above upper bound {ub}")
        if kind == BINARY and (lb < 0.0 or ub > 1.0):
            raise ModelError(f"binary variable {name!r} needs bounds within [0, 1], got [{lb}, {ub}]")
        idx = len(self.kinds)
        self.kinds.append(kind)
        self.lbs.append(lb)
        self.ubs.append(ub)
        self.names.append(name or f"x{idx}")
        return Var(idx, self.names[-1])

    def continuous(self, name: str = "", lb: float = 0.0, ub: float = math.inf) -> Var:
        return self.add_variable(CONTINUOUS, lb, ub, name)

    def binary(self, name: str = "") -> Var:
        return self.add_variable(BINARY, 0.0, 1.0, name)

    def _checked(self, expr) -> LinExpr:
        expr = LinExpr.of(expr)
        n = self.num_vars
        for i in expr.terms:
            if not 0 <= i < n:
                raise ModelError(f"expression references unknown variable id {i} (model has {n})")
        return expr

    def add_constraint(self, expr, sense: str, rhs=0.0, name: str = "") -> int:
        self._check_open()
        if sense not in _SENSES:
            raise ModelError(f"unknown constraint sense {sense!r}")
        lhs = self._checked(expr)
        rhs_expr = self._checked(rhs)
        body = lhs - rhs_expr
        terms = {k: v for k, v in body.terms.items() if v != 0.0}
        self.constraints.append(Constraint(LinExpr(terms), _SENSES[sense], -body.constant, name))
        return len(self.constraints) - 1

    def set_objective(self, sense: str, expr) -> None:
        self._check_open()
        if sense not in ("max", "min"):
            raise ModelError("objective sense must be 'max' or 'min'")
        self.obj_sense = sense
        self.objective = self._checked(expr).copy()

    def set_bounds(self, var: Var, lb: float | None = None, ub: float | None = None) -> None:
        self._check_open()
        if lb is not None:
            self.lbs[var.index] = float(lb)
        if ub is not None:
            self.ubs[var.index] = float(ub)
        if self.lbs[var.index] > self.ubs[var.index]:
            raise ModelError(f"variable {var.name!r}: empty bound interval")

    def copy(self) -> "Model":
        m = Model(self.name)
        m.kinds = list(self.kinds)
        m.lbs = list(self.lbs)
        m.ubs = list(self.ubs)
        m.names = list(self.names)
        m.constraints = list(self.constraints)
        m.obj_sense = self.obj_sense
        m.objective = self.objective.copy()
        return m

    def fix_binaries(self, values: np.ndarray) -> "Model":
        """Copy of the model with every binary fixed at its rounded value."""
        m = self.copy()
        for i, k in enumerate(m.kinds):
            if k == BINARY:
                v = float(round(values[i]))
                m.lbs[i] = m.ubs[i] = v
                m.kinds[i] = CONTINUOUS
        return m

    @property
    def binaries(self) -> list[int]:
        return [i for i, k in enumerate(self.kinds) if k == BINARY]

    # evaluation -----------------------------------------------------------
    def max_violation(self, x: np.ndarray) -> float:
        """Largest absolute violation over bounds and constraints."""
        x = np.asarray(x, dtype=float)
        worst = float(np.max(np.maximum(np.asarray(self.lbs) - x, x - np.asarray(self.ubs)), initial=0.0))
        for con in self.constraints:
            lhs = con.expr.value(x)
            if con.sense == "<=":
                v = lhs - con.rhs
            elif con.sense == ">=":
                v = con.rhs - lhs
            else:
                v = abs(lhs - con.rhs)
            worst = max(worst, v)
        return worst

    def max_integrality_violation(self, x: np.ndarray) -> float:
        b = self.binaries
        if not b:
            return 0.0
        xb = np.asarray(x)[b]
        return float(np.max(np.abs(xb - np.round(xb))))

    def to_lp_string(self) -> str:
        """Plain-text dump, one item per line, for debugging."""
        def fmt(expr: LinExpr) -> str:
            s = " ".join(f"{v:+.12g} {self.names[i]}" for i, v in sorted(expr.terms.items()))
            return s or "0"

        lines = [f"\\ model {self.name}"]
        sense = {"max": "Maximize", "min": "Minimize"}.get(self.obj_sense or "", "Minimize")
        obj = fmt(self.objective)
        if self.objective.constant:
            obj += f" {self.objective.constant:+.12g}"
        lines += [sense, f" obj: {obj}", "Subject To"]
        for k, con in enumerate(self.constraints):
            op = {"<=": "<=", ">=": ">=", "=": "="}[con.sense]
            lines.append(f" {con.name or f'c{k}'}: {fmt(con.expr)} {op} {con.rhs:.12g}")
        lines.append("Bounds")
        for i in range(self.num_vars):
            lines.append(f" {self.lbs[i]:.12g} <= {self.names[i]} <= {self.ubs[i]:.12g}")
        b = self.binaries
        if b:
            lines.append("Binaries")
            lines.append(" " + " ".join(self.names[i] for i in b))
        lines.append("End")
        return "\n".join(lines) + "\n"

    # matrices -------------------------------------------------------------
    def _arrays(self) -> _Arrays:
        if self.obj_sense is None:
            raise ModelError("objective not set")
        if self.num_vars == 0:
            raise ModelError("model has no variables")
        n = self.num_vars
        sign = -1.0 if self.obj_sense == "max" else 1.0
        c = np.zeros(n)
        for i, v in self.objective.terms.items():
            c[i] += sign * v
        ub_r, ub_c, ub_d, b_ub, ub_rows, ub_flip = [], [], [], [], [], []
        eq_r, eq_c, eq_d, b_eq, eq_rows = [], [], [], [], []
        for k, con in enumerate(self.constraints):
            if con.sense == "=":
                r = len(b_eq)
                for i, v in con.expr.terms.items():
                    eq_r.append(r)
                    eq_c.append(i)
                    eq_d.append(v)
                b_eq.append(con.rhs)
                eq_rows.append(k)
            else:
                s = 1.0 if con.sense == "<=" else -1.0
                r = len(b_ub)
                for i, v in con.expr.terms.items():
                    ub_r.append(r)
                    ub_c.append(i)
                    ub_d.append(s * v)
                b_ub.append(s * con.rhs)
                ub_rows.append(k)
                ub_flip.append(s)
        A_ub = sparse.csr_matrix((ub_d, (ub_r, ub_c)), shape=(len(b_ub), n))
        A_eq = sparse.csr_matrix((eq_d, (eq_r, eq_c)), shape=(len(b_eq), n))
        return _Arrays(
            c=c, c0=self.objective.constant, sign=sign,
            A_ub=A_ub, b_ub=np.asarray(b_ub, float), A_eq=A_eq, b_eq=np.asarray(b_eq, float),
            ub_rows=np.asarray(ub_rows, int), ub_flip=np.asarray(ub_flip, float),
            eq_rows=np.asarray(eq_rows, int),
            lb=np.asarray(self.lbs, float), ub=np.asarray(self.ubs, float),
            binaries=np.asarray(self.binaries, int),
        )


# LP ------------------------------------------------------------------------

def _linprog(arr: _Arrays, lb: np.ndarray, ub: np.ndarray):
    kw = {}
    if arr.A_ub.shape[0]:
        kw["A_ub"], kw["b_ub"] = arr.A_ub, arr.b_ub
    if arr.A_eq.shape[0]:
        kw["A_eq"], kw["b_eq"] = arr.A_eq, arr.b_eq
    lb = np.where(np.isfinite(lb), lb, -np.inf)
    ub = np.where(np.isfinite(ub), ub, np.inf)
    return linprog(arr.c, bounds=np.column_stack([lb, ub]), method="highs-ds", **kw)


def solve_lp(model: Model) -> LpResult:
    """Solve the continuous relaxation exactly and return row duals.

    Duals are derivatives of the optimal objective (in the model's own
    max/min sense) with respect to each constraint's right-hand side.
    """
    arr = model._arrays()
    res = _linprog(arr, arr.lb, arr.ub)
    if res.status == 2:
        return LpResult(INFEASIBLE, math.nan, None, None)
    if res.status == 3:
        return LpResult(UNBOUNDED, math.nan, None, None)
    if res.status != 0:
        return LpResult(TIME_LIMIT_NO_SOLUTION, math.nan, None, None)
    duals = np.zeros(len(model.constraints))
    if arr.A_ub.shape[0]:
        duals[arr.ub_rows] = res.ineqlin.marginals * arr.ub_flip
    if arr.A_eq.shape[0]:
        duals[arr.eq_rows] = res.eqlin.marginals
    duals *= arr.sign
    obj = arr.sign * res.fun + arr.c0
    return LpResult(OPTIMAL, float(obj), np.asarray(res.x), duals)


# reference branch and bound --------------------------------------------------

@dataclass(order=True)
class _Node:
    bound: float
    depth_key: int  # minus depth: deeper first among equal bounds
    seq: int
    lb: np.ndarray = field(compare=False)
    ub: np.ndarray = field(compare=False)
    x: np.ndarray = field(compare=False)


def _relative_gap(incumbent: float, bound: float) -> float:
    return abs(bound - incumbent) / max(1e-9, abs(incumbent))


def branch_and_bound(model: Model, options: SolveOptions) -> SolveResult:
    """Reference backend: best-bound B&B over exact LP relaxations."""
    t0 = time.perf_counter()
    arr = model._arrays()
    bins = arr.binaries
    seq = 0
    nodes = 0

    def relax(lb, ub):
        nonlocal nodes
        nodes += 1
        res = _linprog(arr, lb, ub)
        if res.status == 0:
            return float(res.fun), np.asarray(res.x)
        if res.status == 3:
            return -math.inf, None
        return None, None

    def polish(x, lb, ub):
        """Fix binaries at rounded values and re-solve for a clean incumbent."""
        lb2, ub2 = lb.copy(), ub.copy()
        r = np.round(x[bins])
        lb2[bins] = r
        ub2[bins] = r
        val, xx = relax(lb2, ub2)
        if val is None or xx is None:
            return None, None
        xx[bins] = r
        return val, xx

    def fractional(x):
        if not len(bins):
            return -1
        frac = np.abs(x[bins] - np.round(x[bins]))
        k = int(np.argmax(frac))  # first maximiser: deterministic tie-break
        return int(bins[k]) if frac[k] > INT_TOL else -1

    def done(status, inc_val, inc_x, bound):
        wall = time.perf_counter() - t0
        if inc_x is None:
            return SolveResult(status, wall_time=wall, nodes=nodes, backend="bnb")
        obj = arr.sign * inc_val + arr.c0
        b = arr.sign * bound + arr.c0
        gap = _relative_gap(obj, b)
        if status == OPTIMAL and gap > options.gap_target + 1e-12 and abs(b - obj) > 1e-9:
            status = FEASIBLE_GAP
        return SolveResult(status, obj, inc_x, gap, wall, b, nodes, "bnb")

    root_val, root_x = relax(arr.lb.copy(), arr.ub.copy())
    if root_val is None:
        return done(INFEASIBLE, None, None, math.nan)
    if root_x is None:
        return done(UNBOUNDED, None, None, math.nan)

    inc_val, inc_x = math.inf, None
    pruned_bound = math.inf  # best bound among nodes dropped by the gap rule

    def cutoff():
        if inc_x is None:
            return math.inf
        return inc_val - max(1e-9, options.gap_target * max(1e-9, abs(inc_val + arr.sign * arr.c0)))

    def consider(val, x, lb, ub):
        nonlocal inc_val, inc_x
        if fractional(x) >= 0:
            return False
        pv, px = polish(x, lb, ub)
        if pv is not None and pv < inc_val:
            inc_val, inc_x = pv, px
        return True

    heap: list[_Node] = []
    if not consider(root_val, root_x, arr.lb, arr.ub):
        # cheap rounding heuristic at the root
        pv, px = polish(root_x, arr.lb, arr.ub)
        if pv is not None:
            inc_val, inc_x = pv, px
        heapq.heappush(heap, _Node(root_val, 0, seq, arr.lb.copy(), arr.ub.copy(), root_x))

    while heap:
        if time.perf_counter() - t0 > options.time_limit:
            open_bound = min(heap[0].bound, pruned_bound)
            status = FEASIBLE_GAP if inc_x is not None else TIME_LIMIT_NO_SOLUTION
            return done(status, inc_val, inc_x, min(open_bound, inc_val))
        node = heapq.heappop(heap)
        if node.bound >= cutoff():
            pruned_bound = min(pruned_bound, node.bound)
            continue
        j = fractional(node.x)
        for v in (1.0, 0.0) if node.x[j] >= 0.5 else (0.0, 1.0):
            lb, ub = node.lb.copy(), node.ub.copy()
            lb[j] = ub[j] = v
            val, x = relax(lb, ub)
            if val is None:
                continue
            if x is None:
                return done(UNBOUNDED, None, None, math.nan)
            if val >= cutoff():
                pruned_bound = min(pruned_bound, val)
                continue
            if consider(val, x, lb, ub):
                continue
            seq += 1
            heapq.heappush(heap, _Node(val, node.depth_key - 1, seq, lb, ub, x))

    if inc_x is None:
        return done(INFEASIBLE, None, None, math.nan)
    return done(OPTIMAL, inc_val, inc_x, min(pruned_bound, inc_val))


# HiGHS MILP -----------------------------------------------------------------

def highs_milp(model: Model, options: SolveOptions) -> SolveResult:
    t0 = time.perf_counter()
    arr = model._arrays()
    integrality = np.zeros(model.num_vars)
    integrality[arr.binaries] = 1
    cons = []
    if arr.A_ub.shape[0]:
        cons.append(LinearConstraint(arr.A_ub, -np.inf, arr.b_ub))
    if arr.A_eq.shape[0]:
        cons.append(LinearConstraint(arr.A_eq, arr.b_eq, arr.b_eq))
    res = milp(arr.c, integrality=integrality, bounds=Bounds(arr.lb, arr.ub), constraints=cons,
               options={"time_limit": options.time_limit, "mip_rel_gap": options.gap_target,
                        "disp": False})
    wall = time.perf_counter() - t0
    if res.status == 2:
        return SolveResult(INFEASIBLE, wall_time=wall, backend="highs")
    if res.status == 3:
        return SolveResult(UNBOUNDED, wall_time=wall, backend="highs")
    if res.x is None:
        return SolveResult(TIME_LIMIT_NO_SOLUTION, wall_time=wall, backend="highs")
    x = np.asarray(res.x, dtype=float)
    if len(arr.binaries):
        # re-solve the LP with binaries pinned so continuous values are clean
        lb, ub = arr.lb.copy(), arr.ub.copy()
        r = np.round(x[arr.binaries])
        lb[arr.binaries] = ub[arr.binaries] = r
        pol = _linprog(arr, lb, ub)
        if pol.status == 0:
            x = np.asarray(pol.x)
            x[arr.binaries] = r
    obj = float(arr.sign * (arr.c @ x) + arr.c0)
    bound = getattr(res, "mip_dual_bound", None)
    bound = obj if bound is None or not np.isfinite(bound) else float(arr.sign * bound + arr.c0)
    gap = _relative_gap(obj, bound)
    status = OPTIMAL if res.status == 0 and (gap <= options.gap_target + 1e-12 or abs(bound - obj) <= 1e-9) \
        else FEASIBLE_GAP
    return SolveResult(status, obj, x, gap, wall, bound, int(getattr(res, "mip_node_count", 0) or 0), "highs")


BACKENDS: dict[str, Callable[[Model, SolveOptions], SolveResult]] = {
    "bnb": branch_and_bound,
    "highs": highs_milp,
}


def solve(model: Model, options: SolveOptions | None = None, backend="bnb") -> SolveResult:
    """Solve ``model``; infeasible/unbounded come back as a status, never raised."""
    options = options or SolveOptions()
    fn = BACKENDS[backend] if isinstance(backend, str) else backend
    result = fn(model, options)
    model._frozen = True
    return result
