"""Delayed generation of moment cuts for the affine-rule model.

The worst-case expected affine-rule cost is a maximum, over feasible
(mean, second moment) pairs, of a linear function of the rule. The master
keeps a finite pool of such pairs (an LP per leader point); a separation
SDP finds the pair most violated by the incumbent and adds it to the pool.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from . import cone
from .cone import ConeProgram, col, row
from .cuts import DEFAULT_BIG_M
from .engine import InfeasibleLeaderSet, SolveReport
from .ldr import add_ldr, leader_parameter, mccormick_residual
from .model import BilevelInstance, MomentAmbiguity, MomentPoint, Support

NAME = "milpcut"
FLOOR = -1e9
SEP_TOL = 1e-6
MAX_ITER = 500


@dataclass
class Incumbent:
    x: np.ndarray
    v: float
    total: float
    quad: np.ndarray
    lin: np.ndarray
    const: float
    values: dict = field(default_factory=dict)


@dataclass
class MomentCutPool:
    points: list = field(default_factory=list)

    def add(self, point: MomentPoint) -> None:
        self.points.append(point)

    def __len__(self):
        return len(self.points)

    def to_list(self) -> list:
        return [p.to_dict() for p in self.points]


def _support(amb: MomentAmbiguity) -> Support:
    if not isinstance(amb.domain, Support):
        raise TypeError("moment cuts need a polyhedral support")
    return amb.domain


def build_master(inst: BilevelInstance, amb: MomentAmbiguity, pool: MomentCutPool, big_m: float = DEFAULT_BIG_M, floor: float = FLOOR):
    """Per-x master LP; rule blocks are boxed by big_m to keep it bounded."""
    sup = _support(amb)
    x = leader_parameter(inst)
    prog = ConeProgram("moment_master")
    terms = add_ldr(prog, inst, sup, x, big_m)
    v = prog.var("v")
    prog.nonneg("floor", v - floor)
    for name, blk in list(terms.blocks.items()) + [
        (f"{key}{i}", blk) for i, d in terms.mccormick.items() for key, blk in d.items()
    ]:
        prog.nonneg("box", big_m - blk)
        prog.nonneg("box", blk + big_m)
    for j, pt in enumerate(pool.points):
        rhs = cp.trace(pt.Omega @ terms.quad) + pt.mu @ terms.lin + terms.const
        prog.nonneg(f"moment_cut{j}", v - rhs)
    prog.minimize(v)
    return prog, x, terms


def solve_master(inst: BilevelInstance, amb: MomentAmbiguity, pool: MomentCutPool, big_m: float = DEFAULT_BIG_M) -> Incumbent:
    """Enumerate the leader set; each point is one LP."""
    points = inst.leader_set.enumerate()
    if not points:
        raise InfeasibleLeaderSet("leader set is empty")
    prog, xpar, terms = build_master(inst, amb, pool, big_m)
    best = None
    for x in points:
        if xpar is not None:
            xpar.value = x
        sol = cone.require(cone.solve(prog), prog, "moment master")
        total = float(inst.w @ x + sol.objective)
        if best is None or total < best.total - 1e-12 * (1 + abs(total)):
            best = Incumbent(
                x=np.asarray(x, dtype=float),
                v=float(sol.objective),
                total=total,
                quad=np.asarray(terms.quad.value, dtype=float),
                lin=np.asarray(terms.lin.value, dtype=float).reshape(-1),
                const=float(terms.const.value),
                values=sol.values,
            )
    return best


def separate(inst: BilevelInstance, amb: MomentAmbiguity, inc: Incumbent):
    """Most violated moment pair for the incumbent rule, or None if none is violated.

    Returns (MomentPoint, violation) otherwise.
    """
    k = amb.k
    prog = ConeProgram("moment_separation")
    mu = prog.var("mu", k)
    Om = prog.var("Omega", (k, k), symmetric=True)
    if amb.gamma1 > 0:
        L = np.linalg.cholesky(amb.sigma0)
        prog.soc("mean_ball", cp.Constant(np.sqrt(amb.gamma1)), np.linalg.solve(L, np.eye(k)) @ (mu - amb.mu0))
    else:
        prog.zero("mean_ball", mu - amb.mu0)
    cross = col(mu) @ row(amb.mu0)
    prog.psd("covariance", amb.gamma2 * amb.sigma0 - (Om - cross - cross.T + np.outer(amb.mu0, amb.mu0)))
    prog.psd("lift", cp.bmat([[Om, col(mu)], [row(mu), np.ones((1, 1))]]))
    quad = 0.5 * (inc.quad + inc.quad.T)
    prog.maximize(cp.trace(quad @ Om) + inc.lin @ mu + inc.const)
    sol = cone.require(cone.solve(prog), prog, "moment separation")
    violation = float(sol.objective - inc.v)
    if violation <= SEP_TOL * (1.0 + abs(inc.v)):
        return None
    Omega = sol["Omega"]
    return MomentPoint(sol["mu"], 0.5 * (Omega + Omega.T)), violation


def membership(amb: MomentAmbiguity, pt: MomentPoint) -> dict:
    """Violations of the three moment conditions (all <= 0 when inside)."""
    dev = pt.mu - amb.mu0
    lift = np.block([[pt.Omega, pt.mu[:, None]], [pt.mu[None, :], np.ones((1, 1))]])
    cross = np.outer(pt.mu, amb.mu0)
    cov = pt.Omega - cross - cross.T + np.outer(amb.mu0, amb.mu0)
    return {
        "mean": float(dev @ np.linalg.solve(amb.sigma0, dev) - amb.gamma1),
        "covariance": float(np.linalg.eigvalsh(cov - amb.gamma2 * amb.sigma0).max()),
        "lift": float(-np.linalg.eigvalsh(lift).min()),
    }


def run_milp_cut(inst: BilevelInstance, amb: MomentAmbiguity, big_m: float = DEFAULT_BIG_M, max_iter: int = MAX_ITER) -> SolveReport:
    t0 = time.perf_counter()
    pool = MomentCutPool()
    history, status = [], "cap_hit"
    inc = None
    for it in range(1, max_iter + 1):
        inc = solve_master(inst, amb, pool, big_m)
        found = separate(inst, amb, inc)
        history.append({"iteration": it, "x_hat": inc.x.tolist(), "master": inc.total, "violation": None if found is None else found[1]})
        if found is None:
            status = "optimal"
            break
        pool.add(found[0])
    sup = _support(amb)
    report = SolveReport(
        method=NAME,
        status=status,
        value=inc.total,
        x=[int(v) for v in inc.x],
        iterations=len(history),
        lb=inc.total,
        ub=inc.total,
        wall_time=time.perf_counter() - t0,
        history=history,
        second_stage=inc.v,
        gamma=(amb.gamma1, amb.gamma2),
    )
    report.extras["pool"] = pool.to_list()
    report.extras["mccormick_residual"] = mccormick_residual(inc.values, inst, sup.W, inc.x)
    return report
