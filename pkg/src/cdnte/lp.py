"""Linear programming core: model type, a two-phase revised simplex with a
Bland's-rule fallback, a scipy/HiGHS backend for large instances, and the
program builders for min-MLU routing and joint placement+routing.

All programs are minimizations. Variables have a finite lower bound
(default 0) and an optional finite upper bound. Constraint senses are
"<=", "=", ">=".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from . import topology as topo_mod
from .traffic import RoutingSolution, TrafficMatrix

FEAS_TOL = 1e-7     # constraint satisfaction, after row scaling
DUAL_TOL = 1e-6     # relative duality gap at reported optima
_ENTER_TOL = 1e-9   # reduced-cost threshold
_PIVOT_TOL = 1e-9   # smallest acceptable pivot magnitude
_REFACTOR_EVERY = 300

LE, EQ, GE = "<=", "=", ">="


class SimplexError(RuntimeError):
    """Numeric breakdown or resource exhaustion; never a silent wrong answer."""


class LinearProgram:
    def __init__(self, name: str = "lp"):
        self.name = name
        self.var_names: List[str] = []
        self.obj: List[float] = []
        self.lo: List[float] = []
        self.hi: List[Optional[float]] = []
        self.rows: List[Tuple[Dict[int, float], str, float]] = []
        self.meta: Dict = {}
        self._by_name: Dict[str, int] = {}

    @property
    def num_vars(self) -> int:
        return len(self.obj)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def add_var(self, name: str, lo: float = 0.0, hi: Optional[float] = None,
                obj: float = 0.0) -> int:
        if name in self._by_name:
            raise ValueError(f"duplicate variable name {name!r}")
        if not math.isfinite(lo):
            raise ValueError(f"variable {name!r}: lower bound must be finite")
        if hi is not None and (not math.isfinite(hi) or hi < lo):
            raise ValueError(f"variable {name!r}: bad upper bound")
        if not math.isfinite(obj):
            raise ValueError(f"variable {name!r}: objective must be finite")
        idx = len(self.obj)
        self.var_names.append(name)
        self.obj.append(obj)
        self.lo.append(lo)
        self.hi.append(hi)
        self._by_name[name] = idx
        return idx

    def add_constraint(self, coeffs: Dict[int, float], sense: str,
                       rhs: float) -> int:
        if sense not in (LE, EQ, GE):
            raise ValueError(f"bad sense {sense!r}")
        if not math.isfinite(rhs):
            raise ValueError("rhs must be finite")
        clean = {}
        for idx, coef in coeffs.items():
            if not 0 <= idx < self.num_vars:
                raise ValueError(f"coefficient references unknown variable {idx}")
            if not math.isfinite(coef):
                raise ValueError("coefficients must be finite")
            if coef != 0.0:
                clean[idx] = clean.get(idx, 0.0) + coef
        self.rows.append((clean, sense, rhs))
        return len(self.rows) - 1

    def index_of(self, name: str) -> int:
        return self._by_name[name]


@dataclass
class LpSolution:
    status: str                       # optimal | infeasible | unbounded
    objective: Optional[float]
    array: Optional[np.ndarray]       # per-variable values, lp order
    names: List[str] = field(default_factory=list)
    duality_gap: Optional[float] = None
    iterations: int = 0
    backend: str = "bundled"

    @property
    def variables(self) -> Dict[str, float]:
        if self.array is None:
            return {}
        return {n: float(v) for n, v in zip(self.names, self.array)}

    def value(self, name: str) -> float:
        return float(self.array[self.names.index(name)])


def _verify_solution(lp: LinearProgram, x: np.ndarray, tol_feas: float) -> None:
    for j in range(lp.num_vars):
        if x[j] < lp.lo[j] - 1e-9 or (lp.hi[j] is not None and x[j] > lp.hi[j] + 1e-9):
            raise SimplexError(
                f"variable {lp.var_names[j]} violates its bounds: {x[j]}")
        x[j] = min(max(x[j], lp.lo[j]), lp.hi[j] if lp.hi[j] is not None else x[j])
    for r, (coeffs, sense, rhs) in enumerate(lp.rows):
        act = sum(c * x[j] for j, c in coeffs.items())
        scale = max(1.0, max((abs(c) for c in coeffs.values()), default=1.0),
                    abs(rhs))
        resid = act - rhs
        bad = ((sense == LE and resid > tol_feas * scale)
               or (sense == GE and resid < -tol_feas * scale)
               or (sense == EQ and abs(resid) > tol_feas * scale))
        if bad:
            raise SimplexError(f"row {r} violated by {resid:.3e} (sense {sense})")


# ---------------------------------------------------------------------------
# bundled revised simplex


class _Standard:
    """Row-scaled standard form: min c x, A x (<=|=|>=) b with b >= 0, x >= 0.

    Finite lower bounds are shifted out; finite upper bounds become rows.
    """

    def __init__(self, lp: LinearProgram):
        n = lp.num_vars
        self.lp = lp
        self.n_struct = n
        lo = np.array(lp.lo, dtype=float)
        self.shift = lo
        rows = []
        for coeffs, sense, rhs in lp.rows:
            adj = rhs - sum(c * lo[j] for j, c in coeffs.items())
            rows.append((dict(coeffs), sense, adj))
        for j in range(n):
            if lp.hi[j] is not None:
                rows.append(({j: 1.0}, LE, lp.hi[j] - lo[j]))

        data, ri, ci, b, senses = [], [], [], [], []
        m = 0
        self.trivially_infeasible = False
        for coeffs, sense, rhs in rows:
            scale = max((abs(c) for c in coeffs.values()), default=0.0)
            if scale == 0.0:
                ok = ((sense == LE and rhs >= -FEAS_TOL)
                      or (sense == GE and rhs <= FEAS_TOL)
                      or (sense == EQ and abs(rhs) <= FEAS_TOL))
                if not ok:
                    self.trivially_infeasible = True
                continue
            flip = 1.0
            rhs_s = rhs / scale
            if rhs_s < 0:
                flip = -1.0
                rhs_s = -rhs_s
                sense = {LE: GE, GE: LE, EQ: EQ}[sense]
            for j, c in coeffs.items():
                data.append(flip * c / scale)
                ri.append(m)
                ci.append(j)
            b.append(rhs_s)
            senses.append(sense)
            m += 1

        self.m = m
        self.b = np.array(b, dtype=float)
        self.senses = senses
        # slack (+1) for <=, surplus (-1) for >=
        slack_col = {}
        for i, sense in enumerate(senses):
            if sense in (LE, GE):
                col = n + len(slack_col)
                slack_col[i] = col
                data.append(1.0 if sense == LE else -1.0)
                ri.append(i)
                ci.append(col)
        self.n_cols = n + len(slack_col)
        self.slack_col = slack_col
        self.A = sp.csc_matrix((data, (ri, ci)), shape=(m, self.n_cols))
        self.c_struct = np.array(lp.obj, dtype=float)

    def column(self, idx: int) -> np.ndarray:
        if idx < self.n_cols:
            return np.asarray(self.A[:, [idx]].todense()).ravel()
        e = np.zeros(self.m)
        e[idx - self.n_cols] = 1.0
        return e

    def drop_rows(self, keep: np.ndarray) -> None:
        self.A = self.A.tocsr()[keep].tocsc()
        self.b = self.b[keep]
        self.senses = [s for s, k in zip(self.senses, keep) if k]
        self.m = int(keep.sum())


class _Simplex:
    def __init__(self, std: _Standard, max_iters: int):
        self.std = std
        self.max_iters = max_iters
        self.iters = 0
        self.bland = False
        self._stall = 0
        m = std.m
        # initial basis: slack for <= rows, artificial (id n_cols + row) else
        basis = []
        for i, sense in enumerate(std.senses):
            if sense == LE:
                basis.append(std.slack_col[i])
            else:
                basis.append(std.n_cols + i)
        self.basis = np.array(basis, dtype=int)
        self.binv = np.eye(m)
        self.xb = std.b.copy()
        self.in_basis = np.zeros(std.n_cols, dtype=bool)
        for col in self.basis:
            if col < std.n_cols:
                self.in_basis[col] = True

    def _basis_matrix(self) -> np.ndarray:
        cols = [self.std.column(int(c)) for c in self.basis]
        return np.column_stack(cols) if cols else np.zeros((0, 0))

    def refactor(self) -> None:
        if self.std.m == 0:
            return
        B = self._basis_matrix()
        try:
            self.binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            raise SimplexError("basis matrix is singular") from None
        self.xb = self.binv @ self.std.b
        resid = np.abs(B @ self.xb - self.std.b).max(initial=0.0)
        if resid > 1e-6 * (1.0 + np.abs(self.std.b).max(initial=0.0)):
            raise SimplexError(f"refactorization residual {resid:.3e}")
        self.xb[np.abs(self.xb) < 1e-11] = 0.0

    def _cb(self, cost: np.ndarray, art_cost: float) -> np.ndarray:
        out = np.empty(len(self.basis))
        for i, col in enumerate(self.basis):
            out[i] = art_cost if col >= self.std.n_cols else cost[col]
        return out


def _run_phase(sx: _Simplex, cost: np.ndarray, art_cost: float,
               allow_art_leave: bool) -> str:
    """Iterate until optimal ('optimal') or unbounded ('unbounded')."""
    std = sx.std
    m = std.m
    if m == 0:
        neg = np.where(cost < -_ENTER_TOL)[0]
        return "unbounded" if len(neg) else "optimal"
    since_refactor = 0
    prev_obj = math.inf
    while True:
        if sx.iters >= sx.max_iters:
            raise SimplexError(f"iteration limit {sx.max_iters} exceeded")
        cb = sx._cb(cost, art_cost)
        y = cb @ sx.binv
        reduced = cost - (std.A.T @ y)
        reduced[sx.in_basis] = 0.0
        if sx.bland:
            cand = np.where(reduced < -_ENTER_TOL)[0]
            if len(cand) == 0:
                return "optimal"
            q = int(cand[0])
        else:
            q = int(np.argmin(reduced))
            if reduced[q] >= -_ENTER_TOL:
                return "optimal"
        aq = std.column(q)
        d = sx.binv @ aq
        pos = np.where(d > _PIVOT_TOL)[0]
        if len(pos) == 0:
            return "unbounded"
        ratios = np.maximum(sx.xb[pos], 0.0) / d[pos]
        t = ratios.min()
        tied = pos[ratios <= t + 1e-12 * (1.0 + t)]
        if sx.bland:
            leave = int(tied[np.argmin(sx.basis[tied])])
        else:
            leave = int(tied[np.argmax(d[tied])])
        piv = d[leave]
        if abs(piv) < _PIVOT_TOL:
            raise SimplexError("vanishing pivot")
        old = sx.basis[leave]
        if old >= std.n_cols and not allow_art_leave:
            # artificials never re-enter, so this cannot happen in phase 2
            raise SimplexError("artificial variable left in the basis")
        # basis change
        if old < std.n_cols:
            sx.in_basis[old] = False
        sx.basis[leave] = q
        sx.in_basis[q] = True
        # update xb and binv
        sx.xb = sx.xb - t * d
        sx.xb[leave] = t
        sx.binv[leave, :] /= piv
        dcol = d.copy()
        dcol[leave] = 0.0
        sx.binv -= np.outer(dcol, sx.binv[leave, :])
        sx.iters += 1
        since_refactor += 1
        if since_refactor >= _REFACTOR_EVERY:
            sx.refactor()
            since_refactor = 0
        # degeneracy-cycle heuristic: long stretches without progress
        obj = sx._cb(cost, art_cost) @ sx.xb
        if obj < prev_obj - 1e-12 * (1.0 + abs(prev_obj)):
            sx._stall = 0
        else:
            sx._stall += 1
            if not sx.bland and sx._stall > max(100, 2 * m):
                sx.bland = True
        prev_obj = obj


def _drive_out_artificials(sx: _Simplex) -> None:
    """Pivot basic artificials out or delete their (redundant) rows."""
    std = sx.std
    redundant = []
    for pos in range(std.m):
        if sx.basis[pos] < std.n_cols:
            continue
        row = sx.binv[pos, :]
        # candidate pivots among nonbasic structural/slack columns
        vals = std.A.T @ row
        vals[sx.in_basis] = 0.0
        j = int(np.argmax(np.abs(vals)))
        if abs(vals[j]) > 1e-7:
            sx.basis[pos] = j
            sx.in_basis[j] = True
            sx.refactor()
        else:
            redundant.append(pos)
    if redundant:
        keep = np.ones(std.m, dtype=bool)
        keep[redundant] = False
        std.drop_rows(keep)
        sx.basis = sx.basis[keep]
        sx.binv = np.eye(std.m)
        sx.refactor()


def solve_lp(lp: LinearProgram, tol_feas: float = FEAS_TOL,
             tol_dual: float = DUAL_TOL,
             max_iters: Optional[int] = None) -> LpSolution:
    """Two-phase revised simplex with an explicit basis inverse.

    Dantzig pricing by default; a stall heuristic switches to Bland's rule
    to guarantee termination under degeneracy. Numeric trouble raises
    SimplexError instead of returning a wrong answer.
    """
    std = _Standard(lp)
    if std.trivially_infeasible:
        return LpSolution("infeasible", None, None, list(lp.var_names),
                          backend="bundled")
    if max_iters is None:
        max_iters = 5000 + 50 * (std.m + std.n_cols)
    sx = _Simplex(std, max_iters)

    has_artificial = any(c >= std.n_cols for c in sx.basis)
    if has_artificial:
        phase1_cost = np.zeros(std.n_cols)
        status = _run_phase(sx, phase1_cost, 1.0, allow_art_leave=True)
        if status == "unbounded":
            raise SimplexError("phase 1 reported unbounded")
        infeas = sx._cb(phase1_cost, 1.0) @ sx.xb
        if infeas > tol_feas * (1.0 + np.abs(std.b).max(initial=0.0)):
            return LpSolution("infeasible", None, None, list(lp.var_names),
                              iterations=sx.iters, backend="bundled")
        _drive_out_artificials(sx)

    cost2 = np.concatenate([std.c_struct, np.zeros(std.n_cols - std.n_struct)])
    sx._stall = 0
    status = _run_phase(sx, cost2, 0.0, allow_art_leave=False)
    if status == "unbounded":
        return LpSolution("unbounded", None, None, list(lp.var_names),
                          iterations=sx.iters, backend="bundled")

    x_std = np.zeros(std.n_cols)
    for pos, col in enumerate(sx.basis):
        if col < std.n_cols:
            x_std[col] = sx.xb[pos]
    x = x_std[:std.n_struct] + std.shift
    _verify_solution(lp, x, tol_feas)
    objective = float(np.dot(std.c_struct, x))

    # strong-duality check in standard-form space
    if std.m > 0:
        y = sx._cb(cost2, 0.0) @ sx.binv
        primal_std = float(cost2 @ x_std)
        dual_std = float(y @ std.b)
        gap = abs(primal_std - dual_std) / max(1.0, abs(primal_std))
    else:
        gap = 0.0
    if gap > tol_dual:
        raise SimplexError(f"duality gap {gap:.3e} exceeds {tol_dual}")
    return LpSolution("optimal", objective, x, list(lp.var_names),
                      duality_gap=gap, iterations=sx.iters, backend="bundled")


# ---------------------------------------------------------------------------
# scipy backend and dispatch


def solve_lp_scipy(lp: LinearProgram, tol_feas: float = FEAS_TOL,
                   tol_dual: float = DUAL_TOL,
                   method: str = "highs") -> LpSolution:
    """Solve with scipy.optimize.linprog (HiGHS); same contract as solve_lp."""
    from scipy.optimize import linprog

    n = lp.num_vars
    ub_data, ub_ri, ub_ci, b_ub = [], [], [], []
    eq_data, eq_ri, eq_ci, b_eq = [], [], [], []
    for coeffs, sense, rhs in lp.rows:
        if sense == EQ:
            row = len(b_eq)
            for j, c in coeffs.items():
                eq_data.append(c)
                eq_ri.append(row)
                eq_ci.append(j)
            b_eq.append(rhs)
        else:
            flip = 1.0 if sense == LE else -1.0
            row = len(b_ub)
            for j, c in coeffs.items():
                ub_data.append(flip * c)
                ub_ri.append(row)
                ub_ci.append(j)
            b_ub.append(flip * rhs)
    A_ub = sp.csr_matrix((ub_data, (ub_ri, ub_ci)), shape=(len(b_ub), n)) \
        if b_ub else None
    A_eq = sp.csr_matrix((eq_data, (eq_ri, eq_ci)), shape=(len(b_eq), n)) \
        if b_eq else None
    bounds = [(lp.lo[j], lp.hi[j]) for j in range(n)]
    res = linprog(np.array(lp.obj), A_ub=A_ub, b_ub=b_ub or None,
                  A_eq=A_eq, b_eq=b_eq or None, bounds=bounds, method=method)
    if res.status == 2:
        return LpSolution("infeasible", None, None, list(lp.var_names),
                          backend="scipy")
    if res.status == 3:
        return LpSolution("unbounded", None, None, list(lp.var_names),
                          backend="scipy")
    if res.status != 0:
        raise SimplexError(f"linprog failed: {res.message}")
    x = np.array(res.x, dtype=float)
    _verify_solution(lp, x, tol_feas)
    dual = 0.0
    if b_ub:
        dual += float(np.dot(b_ub, res.ineqlin.marginals))
    if b_eq:
        dual += float(np.dot(b_eq, res.eqlin.marginals))
    for j in range(n):
        dual += lp.lo[j] * float(res.lower.marginals[j])
        if lp.hi[j] is not None:
            dual += lp.hi[j] * float(res.upper.marginals[j])
    primal = float(res.fun)
    gap = abs(primal - dual) / max(1.0, abs(primal))
    if gap > tol_dual:
        raise SimplexError(f"duality gap {gap:.3e} exceeds {tol_dual}")
    nit = int(getattr(res, "nit", 0))
    return LpSolution("optimal", float(np.dot(lp.obj, x)), x,
                      list(lp.var_names), duality_gap=gap, iterations=nit,
                      backend="scipy")


# beyond this size the dense explicit-inverse simplex stops being sensible,
# and very large programs solve much faster with the interior-point method
_BUNDLED_MAX_ROWS = 600
_BUNDLED_MAX_COLS = 4000
_IPM_MIN_ROWS = 8000


def solve_lp_auto(lp: LinearProgram, backend: str = "auto",
                  tol_feas: float = FEAS_TOL,
                  tol_dual: float = DUAL_TOL) -> LpSolution:
    if backend == "bundled":
        return solve_lp(lp, tol_feas, tol_dual)
    if backend == "scipy":
        return solve_lp_scipy(lp, tol_feas, tol_dual)
    if backend != "auto":
        raise ValueError(f"unknown lp backend {backend!r}")
    # row count after upper bounds become rows in the bundled solver
    rows = lp.num_rows + sum(1 for h in lp.hi if h is not None)
    if rows > _BUNDLED_MAX_ROWS or lp.num_vars > _BUNDLED_MAX_COLS:
        method = "highs-ipm" if lp.num_rows > _IPM_MIN_ROWS else "highs"
        return solve_lp_scipy(lp, tol_feas, tol_dual, method=method)
    return solve_lp(lp, tol_feas, tol_dual)


def write_lp_text(lp: LinearProgram) -> str:
    """Human-readable LP-format dump for cross-checking with other solvers."""
    def clean(name):
        return "".join(ch if ch.isalnum() or ch in "_." else "_" for ch in name)

    names = [f"{clean(n)}_{i}" for i, n in enumerate(lp.var_names)]
    out = [f"\\ {lp.name}", "Minimize"]
    terms = [f"{lp.obj[j]:+.12g} {names[j]}" for j in range(lp.num_vars)
             if lp.obj[j] != 0.0]
    out.append(" obj: " + (" ".join(terms) if terms else "0"))
    out.append("Subject To")
    for r, (coeffs, sense, rhs) in enumerate(lp.rows):
        lhs = " ".join(f"{c:+.12g} {names[j]}" for j, c in sorted(coeffs.items()))
        op = {LE: "<=", EQ: "=", GE: ">="}[sense]
        out.append(f" c{r}: {lhs or '0'} {op} {rhs:.12g}")
    out.append("Bounds")
    for j in range(lp.num_vars):
        if lp.hi[j] is None:
            out.append(f" {names[j]} >= {lp.lo[j]:.12g}")
        else:
            out.append(f" {lp.lo[j]:.12g} <= {names[j]} <= {lp.hi[j]:.12g}")
    out.append("End")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# program builders


def build_min_mlu_lp(topo, tm: TrafficMatrix) -> LinearProgram:
    """Multicommodity-flow program minimizing the maximum link utilization.

    One flow-fraction variable per (commodity, link): the fraction of the
    commodity's rate on that link. Conservation rows at every node except
    the sink (whose row is implied); per-link load <= alpha * capacity.
    Zero-demand commodities are dropped.
    """
    commodities = sorted(k for k, rate in tm.items() if rate > 0)
    rates = {k: tm[k] for k in commodities}
    lp = LinearProgram("min-mlu")
    alpha = lp.add_var("alpha", lo=0.0, obj=1.0)
    flow: Dict[Tuple[Tuple[int, int], int], int] = {}
    for (s, t) in commodities:
        for link in topo.links:
            flow[((s, t), link.id)] = lp.add_var(f"f[{s}->{t}]@{link.id}")
    for (s, t) in commodities:
        for u in topo.pops:
            if u == t:
                continue
            coeffs: Dict[int, float] = {}
            for link in topo.out_links[u]:
                coeffs[flow[((s, t), link.id)]] = coeffs.get(
                    flow[((s, t), link.id)], 0.0) + 1.0
            for link in topo.in_links[u]:
                coeffs[flow[((s, t), link.id)]] = coeffs.get(
                    flow[((s, t), link.id)], 0.0) - 1.0
            lp.add_constraint(coeffs, EQ, 1.0 if u == s else 0.0)
    for link in topo.links:
        coeffs = {flow[(k, link.id)]: rates[k] / link.capacity
                  for k in commodities}
        coeffs[alpha] = coeffs.get(alpha, 0.0) - 1.0
        lp.add_constraint(coeffs, LE, 0.0)
    lp.meta = {"alpha": alpha, "flow": flow, "commodities": commodities,
               "rates": rates}
    return lp


def build_joint_lp(topo, dm, budgets: Dict[int, int], chunks,
                   origins: Dict[str, int]) -> LinearProgram:
    """Joint placement + routing relaxation.

    Variables: x(c,j) in [0,1] = fraction of chunk c stored at pop j
    (fixed to 1 at the chunk's origin and excluded from its budget),
    y(c,i,j) >= 0 = fraction of pop i's demand for c served from j,
    f(i,l) >= 0 = delivery flow toward client pop i on link l (in units
    of the largest demand rate), and alpha. Flows toward the same client
    are aggregated across serving pops and chunks: each pop j injects
    sum_c rate(c,i)*y(c,i,j) of client i's flow, which is equivalent to
    per-(server, client) commodities because flows to a common
    destination may always merge. Demand is converted to average rates
    over the demand window.
    """
    window = dm.window_seconds
    rates: Dict[Tuple, float] = {}
    for (chunk, pop), nbytes in dm.demand.items():
        if nbytes > 0:
            rates[(chunk, pop)] = nbytes * 8.0 / window
    demanded = sorted(rates)
    chunk_list = sorted({chunk for chunk, _ in demanded})
    clients = sorted({pop for _, pop in demanded})
    store_pops = sorted(p for p in topo.pops if budgets.get(p, 0) > 0)
    server_pops = sorted(set(store_pops)
                         | {origins[c[0]] for c in chunk_list})
    rate_scale = max(rates.values(), default=1.0)

    lp = LinearProgram("joint-placement-routing")
    alpha = lp.add_var("alpha", lo=0.0, obj=1.0)
    x: Dict[Tuple, int] = {}
    for chunk in chunk_list:
        for j in store_pops:
            if j == origins[chunk[0]]:
                continue
            x[(chunk, j)] = lp.add_var(f"x[{chunk[0]}#{chunk[1]}@{j}]",
                                       lo=0.0, hi=1.0)
    y: Dict[Tuple, int] = {}
    y_by_client: Dict[Tuple, List[Tuple]] = {}
    for (chunk, i) in demanded:
        for j in server_pops:
            if j != origins[chunk[0]] and (chunk, j) not in x:
                continue
            y[(chunk, i, j)] = lp.add_var(
                f"y[{chunk[0]}#{chunk[1]}:{i}<-{j}]")
            if j != i:
                y_by_client.setdefault((i, j), []).append((chunk, i, j))
    flow: Dict[Tuple, int] = {}
    for i in clients:
        for link in topo.links:
            flow[(i, link.id)] = lp.add_var(f"f[->{i}]@{link.id}")

    # every demanded (chunk, client) fully assigned to servers
    for (chunk, i) in demanded:
        coeffs = {y[(chunk, i, j)]: 1.0 for j in server_pops
                  if (chunk, i, j) in y}
        lp.add_constraint(coeffs, EQ, 1.0)
    # service only from pops that store the chunk
    for (chunk, i, j), yi in y.items():
        if j == origins[chunk[0]]:
            continue
        lp.add_constraint({yi: 1.0, x[(chunk, j)]: -1.0}, LE, 0.0)
    # per-pop storage budgets
    for j in store_pops:
        coeffs = {}
        for chunk in chunk_list:
            if (chunk, j) in x:
                coeffs[x[(chunk, j)]] = chunks.sizes[chunk] / budgets[j]
        if coeffs:
            lp.add_constraint(coeffs, LE, 1.0)
    # delivery flow conservation per client at every node but the client:
    # node u feeds in what it serves remotely to i
    for i in clients:
        for u in topo.pops:
            if u == i:
                continue
            coeffs = {}
            for link in topo.out_links[u]:
                idx = flow[(i, link.id)]
                coeffs[idx] = coeffs.get(idx, 0.0) + 1.0
            for link in topo.in_links[u]:
                idx = flow[(i, link.id)]
                coeffs[idx] = coeffs.get(idx, 0.0) - 1.0
            for key in y_by_client.get((i, u), ()):
                coeffs[y[key]] = coeffs.get(y[key], 0.0) \
                    - rates[(key[0], i)] / rate_scale
            lp.add_constraint(coeffs, EQ, 0.0)
    # per-link load bounded by alpha * capacity (in rate_scale units)
    for link in topo.links:
        coeffs = {flow[(i, link.id)]: 1.0 for i in clients}
        coeffs[alpha] = coeffs.get(alpha, 0.0) - link.capacity / rate_scale
        lp.add_constraint(coeffs, LE, 0.0)

    lp.meta = {"alpha": alpha, "x": x, "y": y, "flow": flow,
               "rates": rates, "rate_scale": rate_scale,
               "chunks": chunk_list, "clients": clients}
    return lp


def solve_min_mlu_routing(topo, tm: TrafficMatrix, backend: str = "auto",
                          ic_routes: Optional[RoutingSolution] = None,
                          tol_feas: float = FEAS_TOL,
                          tol_dual: float = DUAL_TOL) -> RoutingSolution:
    """Demand-aware routing: min-MLU flow fractions for positive-rate
    commodities, InverseCap shortest paths for everything else (so every
    ordered pair has a defined route)."""
    if ic_routes is None:
        ic_routes = topo_mod.shortest_path_routes(
            topo, topo_mod.inverse_cap_weights(topo))
    routing: RoutingSolution = {k: dict(v) for k, v in ic_routes.items()}
    positive = {k: r for k, r in tm.items() if r > 0}
    if not positive:
        return routing
    lp = build_min_mlu_lp(topo, positive)
    sol = solve_lp_auto(lp, backend=backend, tol_feas=tol_feas,
                        tol_dual=tol_dual)
    if sol.status != "optimal":
        raise SimplexError(f"min-MLU program ended {sol.status}")
    flow = lp.meta["flow"]
    for k in lp.meta["commodities"]:
        fracs = {}
        for link in topo.links:
            v = float(sol.array[flow[(k, link.id)]])
            if v > 1e-12:
                fracs[link.id] = v
        routing[k] = fracs
    return routing
