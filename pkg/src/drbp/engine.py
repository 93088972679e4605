"""Benders-style loop over a leader set with pluggable subproblem providers.

A provider exposes ``name``, ``subproblem(x) -> (value, dual)`` and
``cut(x, dual, value, big_m) -> Cut``. The relaxed master is solved
exactly by enumeration, which is adequate for the leader sets used here
(thousands of points at most).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .cuts import DEFAULT_BIG_M, Cut
from .model import BilevelInstance, MomentAmbiguity

DEFAULT_EPS = 1e-5


@dataclass
class EngineState:
    lb: float = -np.inf
    ub: float = np.inf
    incumbent: np.ndarray | None = None
    cuts: list = field(default_factory=list)
    iterations: int = 0
    epsilon: float = DEFAULT_EPS

    def closed(self) -> bool:
        return self.ub - self.lb <= self.epsilon * (1.0 + abs(self.ub))


@dataclass
class SolveReport:
    method: str
    status: str
    value: float
    x: list
    iterations: int
    lb: float
    ub: float
    wall_time: float
    history: list = field(default_factory=list)
    cuts: list = field(default_factory=list)
    second_stage: float = float("nan")
    worst_case_distribution: dict | None = None
    gamma: tuple | None = None
    seed: int | None = None
    extras: dict = field(default_factory=dict)
    cut_objects: list = field(default_factory=list, repr=False)

    @property
    def profit(self) -> float:
        return -self.value

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "status": self.status,
            "value": self.value,
            "profit": self.profit,
            "x": self.x,
            "iterations": self.iterations,
            "lb": self.lb,
            "ub": self.ub,
            "second_stage": self.second_stage,
            "wall_time": self.wall_time,
            "history": self.history,
            "cuts": self.cuts,
            "gamma": list(self.gamma) if self.gamma is not None else None,
            "seed": self.seed,
        }
        if self.worst_case_distribution is not None:
            out["worst_case_distribution"] = self.worst_case_distribution
        out.update(self.extras)
        return out


class InfeasibleLeaderSet(ValueError):
    pass


def _points(inst: BilevelInstance) -> np.ndarray:
    pts = inst.leader_set.enumerate()
    return np.array(pts, dtype=float).reshape(len(pts), inst.d)


def _bound(inst: BilevelInstance, cuts: list[Cut], points: np.ndarray, exact: np.ndarray) -> float:
    if cuts:
        U = np.array([c.u for c in cuts]).reshape(len(cuts), inst.d)
        a = np.array([c.a for c in cuts])
        approx = points @ inst.w + (points @ U.T + a[None, :]).max(axis=1)
    else:
        approx = np.full(len(points), -np.inf)
    return float(np.where(np.isnan(exact), approx, exact).min())


def solve_relaxed_master(inst: BilevelInstance, cuts: list[Cut], points: np.ndarray | None = None):
    """Exact minimizer of w'x + max_l (u_l'x + a_l) over the leader set.

    With no cuts the second term is -inf and the minimizer of w'x is
    returned. Ties go to the lexicographically smallest point.
    """
    if points is None:
        points = _points(inst)
    if len(points) == 0:
        raise InfeasibleLeaderSet("leader set is empty")
    lead = points @ inst.w
    if cuts:
        U = np.array([c.u for c in cuts]).reshape(len(cuts), inst.d)
        a = np.array([c.a for c in cuts])
        nu = (points @ U.T + a[None, :]).max(axis=1)
        total = lead + nu
    else:
        nu = np.full(len(points), -np.inf)
        total = lead
    best = total.min()
    idx = int(np.flatnonzero(total <= best + 1e-12 * (1.0 + abs(best)))[0])
    z = float(lead[idx] + nu[idx]) if cuts else -np.inf
    return points[idx].copy(), float(nu[idx]), z


def run(
    inst: BilevelInstance,
    amb: MomentAmbiguity,
    provider,
    epsilon: float = DEFAULT_EPS,
    big_m: float = DEFAULT_BIG_M,
    max_iter: int | None = None,
    cache: dict | None = None,
) -> SolveReport:
    """Alternate master and subproblem until the bounds meet."""
    t0 = time.perf_counter()
    points = _points(inst)
    if len(points) == 0:
        raise InfeasibleLeaderSet("leader set is empty")
    cap = max_iter if max_iter is not None else len(points) + 2
    cache = {} if cache is None else cache
    state = EngineState(epsilon=epsilon)
    history, status, duals = [], "cap_hit", {}
    best_value = np.nan
    exact = np.full(len(points), np.nan)
    for it in range(1, cap + 1):
        state.iterations = it
        x_hat, nu_hat, z = solve_relaxed_master(inst, state.cuts, points)
        lb_before = state.lb
        state.lb = max(state.lb, z)
        key = tuple(int(v) for v in x_hat)
        if key not in cache:
            cache[key] = provider.subproblem(x_hat)
        value, dual = cache[key]
        duals[key] = dual
        total = float(inst.w @ x_hat + value)
        exact[int(np.flatnonzero((points == x_hat).all(axis=1))[0])] = total
        # evaluated points are known exactly; the rest keep their cut bound
        state.lb = max(state.lb, _bound(inst, state.cuts, points, exact))
        ub_before = state.ub
        if total < state.ub:
            state.ub, state.incumbent, best_value = total, x_hat, value
        record = {
            "iteration": it,
            "x_hat": x_hat.tolist(),
            "nu_hat": nu_hat,
            "subproblem": value,
            "lb": state.lb,
            "ub": state.ub,
        }
        if state.closed():
            history.append(record)
            status = "optimal"
            break
        repeated = any(np.array_equal(c.x_hat, x_hat) for c in state.cuts)
        if repeated and abs(state.lb - lb_before) <= 1e-9 and state.ub >= ub_before:
            history.append(record)
            status = "stalled"
            break
        cut = provider.cut(x_hat, dual, value, big_m)
        state.cuts.append(cut)
        record["cut"] = {"u": cut.u.tolist(), "a": cut.a}
        history.append(record)
    x_star = state.incumbent
    report = SolveReport(
        method=provider.name,
        status=status,
        value=state.ub,
        x=[int(v) for v in x_star],
        iterations=state.iterations,
        lb=state.lb,
        ub=state.ub,
        wall_time=time.perf_counter() - t0,
        history=history,
        cuts=[c.to_dict() for c in state.cuts],
        second_stage=float(best_value),
        gamma=(amb.gamma1, amb.gamma2),
    )
    report.cut_objects = state.cuts
    if hasattr(provider, "worst_case"):
        dist = provider.worst_case(duals[tuple(int(v) for v in x_star)])
        report.worst_case_distribution = dist.to_dict()
    return report


def enumerate_values(inst: BilevelInstance, provider, cache: dict | None = None) -> dict:
    """w'x + subproblem(x) for every leader point, keyed by the point tuple."""
    cache = {} if cache is None else cache
    out = {}
    for x in inst.leader_set.enumerate():
        key = tuple(int(v) for v in x)
        if key not in cache:
            cache[key] = provider.subproblem(x)
        out[key] = float(inst.w @ x + cache[key][0])
    return out
