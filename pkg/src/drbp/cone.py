"""Conic programs with named blocks, solved through one configured backend.

Model modules declare variables and constraints by name, then call
:func:`solve`. The returned :class:`ConeSolution` exposes primal values and
dual multipliers under the same names, so no caller touches backend
objects directly.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import cvxpy.settings as cps
import numpy as np
from cvxpy.reductions.solvers.conic_solvers.clarabel_conif import CLARABEL

DEFAULT_TOL = 1e-11
FALLBACK_TOLS = (1e-9, 1e-8)


class _Backend(CLARABEL):
    """Clarabel with its residuals and dual objective passed through."""

    def name(self):
        return "DRBP_CLARABEL"

    def invert(self, solution, inverse_data):
        out = super().invert(solution, inverse_data)
        out.attr[cps.EXTRA_STATS] = {
            "obj_val": getattr(solution, "obj_val", None),
            "obj_val_dual": getattr(solution, "obj_val_dual", None),
            "r_prim": getattr(solution, "r_prim", None),
            "r_dual": getattr(solution, "r_dual", None),
        }
        return out


_BACKEND = _Backend()


class ConeProgram:
    """A linear objective over named blocks subject to named conic constraints."""

    def __init__(self, name: str = "program"):
        self.name = name
        self.variables: dict[str, cp.Variable] = {}
        self.constraints: dict[str, list] = {}
        self.objective = None

    def var(self, name: str, shape=(), *, symmetric=False, psd=False, nonneg=False) -> cp.Variable:
        if name in self.variables:
            raise ValueError(f"variable block {name!r} declared twice")
        v = cp.Variable(shape, name=name, symmetric=symmetric, PSD=psd, nonneg=nonneg)
        self.variables[name] = v
        return v

    def _push(self, name: str, cons) -> None:
        self.constraints.setdefault(name, []).extend(cons if isinstance(cons, list) else [cons])

    def zero(self, name: str, expr) -> None:
        self._push(name, expr == 0)

    def nonneg(self, name: str, expr) -> None:
        self._push(name, expr >= 0)

    def soc(self, name: str, t, x) -> None:
        self._push(name, cp.SOC(t, x))

    def psd(self, name: str, expr) -> None:
        """expr (symmetrized here) must be positive semidefinite."""
        self._push(name, sym(expr) >> 0)

    def sym_zero(self, name: str, expr) -> None:
        """Symmetric matrix equality stated once per upper-triangular entry."""
        expr = sym(expr)
        self._push(name, cp.diag(expr) == 0)
        if expr.shape[0] > 1:
            self._push(name, cp.upper_tri(expr) == 0)

    def sym_nonneg(self, name: str, expr) -> None:
        expr = sym(expr)
        self._push(name, cp.diag(expr) >= 0)
        if expr.shape[0] > 1:
            self._push(name, cp.upper_tri(expr) >= 0)

    def minimize(self, expr) -> None:
        self.objective = cp.Minimize(expr)

    def maximize(self, expr) -> None:
        self.objective = cp.Maximize(expr)

    def problem(self) -> cp.Problem:
        if self.objective is None:
            raise ValueError("objective not set")
        flat = [c for cons in self.constraints.values() for c in cons]
        return cp.Problem(self.objective, flat)

    def dump(self) -> str:
        """Backend-level data as text: one sparse triplet block per cone."""
        data, _, _ = self.problem().get_problem_data(_BACKEND)
        A = data["A"].tocoo()
        out = io.StringIO()
        out.write(f"# program {self.name}\n# cones {data['dims']}\n")
        out.write("c " + " ".join(f"{i}:{v:.17g}" for i, v in enumerate(data["c"]) if v != 0) + "\n")
        out.write("b " + " ".join(f"{i}:{v:.17g}" for i, v in enumerate(data["b"]) if v != 0) + "\n")
        for r, c, v in sorted(zip(A.row, A.col, A.data)):
            out.write(f"A {r} {c} {v:.17g}\n")
        return out.getvalue()


@dataclass
class ConeSolution:
    status: str
    objective: float
    values: dict = field(default_factory=dict)
    duals: dict = field(default_factory=dict)
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    gap: float = float("nan")
    solve_time: float = 0.0
    iterations: int = 0
    tol: float = DEFAULT_TOL

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def __getitem__(self, name):
        return self.values[name]


_STATUS = {
    cp.OPTIMAL: "optimal",
    cp.INFEASIBLE: "infeasible",
    cp.UNBOUNDED: "unbounded",
    cp.OPTIMAL_INACCURATE: "numerical_trouble",
    cp.INFEASIBLE_INACCURATE: "infeasible",
    cp.UNBOUNDED_INACCURATE: "unbounded",
}


class SolveError(RuntimeError):
    """Raised by callers that need an optimal solution and did not get one."""

    def __init__(self, message: str, solution: ConeSolution | None = None, program: ConeProgram | None = None):
        super().__init__(message)
        self.solution = solution
        self.program = program


def solve(prog: ConeProgram, tol: float = DEFAULT_TOL, max_iter: int = 400) -> ConeSolution:
    """Solve at ``tol``; if the backend stalls short of it, retry at the looser fallbacks."""
    problem = prog.problem()
    sol = _solve_once(prog, problem, tol, max_iter)
    for loose in FALLBACK_TOLS:
        if sol.status != "numerical_trouble" or loose <= tol:
            continue
        sol = _solve_once(prog, problem, loose, max_iter)
    return sol


def _solve_once(prog: ConeProgram, problem: cp.Problem, tol: float, max_iter: int) -> ConeSolution:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # inaccurate runs are reported by status
            problem.solve(
                solver=_BACKEND,
                tol_gap_abs=tol,
                tol_gap_rel=tol,
                tol_feas=tol,
                tol_ktratio=min(1e-7, tol * 0.1),
                max_iter=max_iter,
            )
    except cp.SolverError:
        return ConeSolution("numerical_trouble", float("nan"), gap=float("inf"), primal_residual=float("inf"), tol=tol)
    status = _STATUS.get(problem.status, "numerical_trouble")
    stats = problem.solver_stats
    extra = stats.extra_stats or {}
    sol = ConeSolution(
        status=status,
        objective=float(problem.value) if problem.value is not None else float("nan"),
        solve_time=stats.solve_time or 0.0,
        iterations=stats.num_iters or 0,
        tol=tol,
        primal_residual=float(extra.get("r_prim") or np.nan),
        dual_residual=float(extra.get("r_dual") or np.nan),
    )
    pv, dv = extra.get("obj_val"), extra.get("obj_val_dual")
    if pv is not None and dv is not None and np.isfinite(pv) and np.isfinite(dv):
        sol.gap = abs(pv - dv)
    if status in ("optimal", "numerical_trouble"):
        sol.values = {k: _arr(v.value) for k, v in prog.variables.items()}
        sol.duals = {k: [_arr(c.dual_value) for c in cons] for k, cons in prog.constraints.items()}
        for k, v in sol.duals.items():
            if len(v) == 1:
                sol.duals[k] = v[0]
    return sol


def require(sol: ConeSolution, prog: ConeProgram, what: str) -> ConeSolution:
    if not sol.ok:
        raise SolveError(f"{what}: backend returned {sol.status}", sol, prog)
    return sol


def sym(expr):
    """Symmetric part of a square expression; symmetric inputs pass through."""
    if isinstance(expr, np.ndarray):
        return 0.5 * (expr + expr.T)
    if expr.is_symmetric():
        return expr
    return 0.5 * (expr + expr.T)


def col(v):
    """Column view of a vector expression."""
    return cp.reshape(v, (v.shape[0], 1), order="F") if isinstance(v, cp.Expression) else np.reshape(v, (-1, 1))


def row(v):
    return cp.reshape(v, (1, v.shape[0]), order="F") if isinstance(v, cp.Expression) else np.reshape(v, (1, -1))


def _arr(v):
    if v is None:
        return None
    if isinstance(v, (list, tuple)):
        return [np.array(e, dtype=float) for e in v]
    return np.array(v, dtype=float)
