"""Exact model when the ambiguity set lives on a finite scenario list.

Per scenario the affine rule is replaced by free recourse blocks (p^s, y^s),
so the fixed-x program is exact. Its conic dual returns the worst-case
scenario probabilities directly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import cvxpy as cp
import numpy as np

from . import cone
from .cone import ConeProgram, col, row
from .cuts import DEFAULT_BIG_M, Cut, switching_cut
from .ldr import add_moment_row, affine_rhs, leader_parameter
from .model import BilevelInstance, MomentAmbiguity, Scenarios
from .oracle import min_mixture_over_lambda

NAME = "discrete"
LAMBDA_RESCALE = 50.0  # rescale the follower cost when lambda exceeds this
RESCALE_ROUNDS = 3


def _scenarios(amb: MomentAmbiguity) -> np.ndarray:
    if not isinstance(amb.domain, Scenarios):
        raise TypeError("the exact model needs a scenario list")
    return amb.domain.xi


def _scenario_rhs(inst: BilevelInstance, xi: np.ndarray, x):
    """N x m matrix whose row s is b_x(xi^s), affine in the leader parameter."""
    Bx, bx = affine_rhs(inst, x)
    ones = np.ones((xi.shape[0], 1))
    return xi @ Bx.T + ones @ row(bx) if x is not None else xi @ Bx.T + ones @ bx[None, :]


def build_primal(inst: BilevelInstance, amb: MomentAmbiguity, big_m: float | None = None):
    xi = _scenarios(amb)
    N, m, n = xi.shape[0], inst.m, inst.n
    x = leader_parameter(inst)
    prog = ConeProgram("discrete_primal")
    Q, q, t = add_moment_row(prog, amb)
    r = prog.var("r")
    lam = prog.var("lam", nonneg=True)
    P = prog.var("P", (N, m), nonneg=True)
    Ys = prog.var("Ys", (N, n))
    cs = xi @ inst.C.T + inst.c0[None, :]
    vs = xi @ inst.V.T + inst.v0[None, :]
    base = xi @ inst.B[0].T + inst.b[0][None, :]
    if big_m is None or x is None:
        R = _scenario_rhs(inst, xi, x)
        pay = cp.sum(cp.multiply(R, P), axis=1)
        lamR = lam * R
    else:
        pay = cp.sum(cp.multiply(base, P), axis=1)
        lamR = lam * base
        ones = np.ones((N, m))
        for i in range(inst.d):
            Ri = xi @ inst.B[i + 1].T + inst.b[i + 1][None, :]
            th = prog.var(f"theta{i}")
            Om = prog.var(f"omega{i}", (N, m))
            off, on = (1 - x[i]) * big_m, x[i] * big_m
            name = f"mccormick{i}"
            prog.nonneg(name, th - lam + off)
            prog.nonneg(name, on - th)
            prog.nonneg(name, th)
            prog.nonneg(name, lam - th)
            prog.nonneg(name, Om - P + off * ones)
            prog.nonneg(name, P + off * ones - Om)
            prog.nonneg(name, Om + on * ones)
            prog.nonneg(name, on * ones - Om)
            pay = pay + cp.sum(cp.multiply(Ri, Om), axis=1)
            lamR = lamR + th * Ri
    quad = cp.sum(cp.multiply(xi @ Q, xi), axis=1) + xi @ q
    prog.nonneg("epigraph", r - pay - cp.sum(cp.multiply(cs, Ys), axis=1) + quad)
    prog.zero("p_eq", P @ inst.A + lam * cs - vs)
    prog.nonneg("y_ineq", lamR - Ys @ inst.A.T)
    prog.minimize(r + t)
    return prog, x


@dataclass
class DiscreteDual:
    """Scenario weights gamma plus the multipliers sigma (N x m), chi (N x n) and mu."""

    gamma: np.ndarray
    sigma: np.ndarray
    chi: np.ndarray
    mu: np.ndarray


def build_dual(inst: BilevelInstance, amb: MomentAmbiguity):
    xi = _scenarios(amb)
    N, m, n, k = xi.shape[0], inst.m, inst.n, inst.k
    x = leader_parameter(inst)
    R = _scenario_rhs(inst, xi, x)
    cs = xi @ inst.C.T + inst.c0[None, :]
    vs = xi @ inst.V.T + inst.v0[None, :]
    prog = ConeProgram("discrete_dual")
    gam = prog.var("gamma", N, nonneg=True)
    mu = prog.var("mu", k)
    chi = prog.var("chi", (N, n))
    sig = prog.var("sigma", (N, m), nonneg=True)
    root = amb.sigma_sqrt
    g1 = np.sqrt(amb.gamma1)
    shift = col(amb.mu0) @ row(root @ mu)
    prog.psd("Q", amb.second_moment - xi.T @ cp.diag(gam) @ xi + g1 * (shift + shift.T))
    prog.zero("r", cp.sum(gam) - 1)
    prog.zero("q", g1 * (root @ mu) + amb.mu0 - xi.T @ gam)
    prog.soc("mu_ball", cp.Constant(1.0), mu)
    prog.nonneg("p", cp.diag(gam) @ R - chi @ inst.A.T)
    prog.zero("y", cp.diag(gam) @ cs + sig @ inst.A)
    prog.nonneg("lam", -cp.sum(cp.multiply(chi, cs)) - cp.sum(cp.multiply(sig, R)))
    prog.maximize(cp.sum(cp.multiply(chi, vs)))
    return prog, x


@dataclass
class WorstCaseDistribution:
    points: np.ndarray
    probabilities: np.ndarray
    raw: np.ndarray

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "probabilities": self.probabilities.tolist(),
            "raw": self.raw.tolist(),
        }


class MembershipError(RuntimeError):
    """Extracted probabilities violate the ambiguity set."""


def _mean_direction(amb: MomentAmbiguity, gamma: np.ndarray) -> np.ndarray:
    """Unit-ball multiplier of the mean condition, recovered from the scenario weights."""
    if amb.gamma1 <= 0:
        return np.zeros(amb.k)
    shift = _scenarios(amb).T @ gamma - amb.mu0
    return np.linalg.solve(amb.sigma_sqrt, shift) / np.sqrt(amb.gamma1)


class DiscreteProvider:
    """Scenario-model subproblems and cuts.

    The subproblem is solved in primal form and the weights are read off its
    multipliers. When the optimal lambda is large the program is badly
    scaled (its two objective parts are huge and nearly cancel), so the
    follower cost is rescaled until lambda is moderate. Results are mapped
    back to the original instance.
    """

    name = NAME

    def __init__(self, inst: BilevelInstance, amb: MomentAmbiguity, tol: float = cone.DEFAULT_TOL):
        _scenarios(amb)
        self.inst, self.amb, self.tol = inst, amb, tol
        self.scale = 1.0
        self._programs = {}

    def _solve(self, x_hat, big_m):
        if big_m not in self._programs:
            self._programs[big_m] = build_primal(self.inst.with_follower_scale(self.scale), self.amb, big_m)
        prog, x = self._programs[big_m]
        if x is not None:
            x.value = np.asarray(x_hat, dtype=float)
        return cone.require(cone.solve(prog, tol=self.tol), prog, "discrete primal")

    def primal(self, x_hat, big_m: float | None = None) -> cone.ConeSolution:
        """Fixed-x primal solution, expressed for the unscaled instance."""
        for _ in range(RESCALE_ROUNDS):
            sol = self._solve(x_hat, big_m)
            lam = float(sol.values["lam"])
            if lam <= LAMBDA_RESCALE:
                break
            self.scale *= lam
            self._programs.clear()
        s = self.scale
        values = dict(sol.values, lam=s * sol.values["lam"], Ys=s * sol.values["Ys"])
        for i in range(self.inst.d):
            if f"theta{i}" in values:
                values[f"theta{i}"] = s * values[f"theta{i}"]
        duals = dict(sol.duals, y_ineq=sol.duals["y_ineq"] / s)
        return replace(sol, values=values, duals=duals)

    def subproblem(self, x_hat) -> tuple[float, DiscreteDual]:
        sol = self.primal(x_hat)
        gamma, sigma = sol.duals["epigraph"], sol.duals["y_ineq"]
        return sol.objective, DiscreteDual(gamma, sigma, -sol.duals["p_eq"], _mean_direction(self.amb, gamma))

    def cut(self, x_hat, dual: DiscreteDual, value: float, big_m: float = DEFAULT_BIG_M) -> Cut:
        return make_cut(self.inst, self.amb, x_hat, dual, value, big_m)

    def worst_case(self, dual: DiscreteDual) -> WorstCaseDistribution:
        return extract_worst_case(self.amb, dual)


def solve_subproblem(inst: BilevelInstance, amb: MomentAmbiguity, x_hat) -> tuple[float, DiscreteDual]:
    return DiscreteProvider(inst, amb).subproblem(x_hat)


def make_cut(inst: BilevelInstance, amb: MomentAmbiguity, x_hat, dual: DiscreteDual, value: float, big_m: float = DEFAULT_BIG_M) -> Cut:
    xi = _scenarios(amb)
    shared = np.empty(inst.d)
    signed = np.empty(inst.d)
    for i in range(inst.d):
        Ri = xi @ inst.B[i + 1].T + inst.b[i + 1][None, :]
        shared[i] = np.abs(dual.gamma[:, None] * Ri).sum()
        signed[i] = -np.sum(dual.sigma * Ri)
    return switching_cut(x_hat, value, shared, signed, big_m, NAME)


def extract_worst_case(amb: MomentAmbiguity, dual: DiscreteDual, tol: float = 1e-6) -> WorstCaseDistribution:
    """Scenario probabilities from the dual, cleaned and checked against the ambiguity set."""
    xi = _scenarios(amb)
    raw = np.asarray(dual.gamma, dtype=float).copy()
    probs = np.clip(raw, 0.0, None)
    if abs(probs.sum() - 1.0) <= 1e-8 or abs(raw.sum() - 1.0) <= 1e-8:
        probs = probs / probs.sum()
    report = membership(amb, xi, probs)
    if not (report["sum"] <= 1e-8 and report["min"] >= -1e-8 and report["mean"] <= tol and report["second"] <= tol):
        raise MembershipError(f"worst-case weights leave the ambiguity set: {report}")
    return WorstCaseDistribution(xi.copy(), probs, raw)


def membership(amb: MomentAmbiguity, xi: np.ndarray, probs: np.ndarray) -> dict:
    """Violations of the three ambiguity-set conditions (all <= 0 when inside)."""
    mean = xi.T @ probs
    dev = mean - amb.mu0
    mean_excess = float(dev @ np.linalg.solve(amb.sigma0, dev) - amb.gamma1)
    centered = xi - amb.mu0[None, :]
    second = (centered * probs[:, None]).T @ centered
    second_excess = float(np.linalg.eigvalsh(second - amb.gamma2 * amb.sigma0).max())
    return {
        "sum": abs(float(probs.sum()) - 1.0),
        "min": float(probs.min()),
        "mean": mean_excess,
        "second": second_excess,
    }


def reevaluate(inst: BilevelInstance, x_hat, dist: WorstCaseDistribution) -> float:
    """min over lambda of the probability-weighted joint recourse value."""
    return min_mixture_over_lambda(inst, x_hat, dist.points, dist.probabilities)[1]
