"""Affine-rule approximation with an S-lemma certificate on the support.

The fixed-x primal bounds the worst-case expected cost by r + t, where
r + xi'Q xi + q'xi dominates the affine-rule cost on the support (checked
through one PSD block with multipliers tau) and t prices the quadratic
under the moment constraints. Its conic dual is solved for cuts.
"""

from __future__ import annotations

from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from . import cone
from .cone import ConeProgram, col, row, sym
from .cuts import DEFAULT_BIG_M, Cut, switching_cut
from .ldr import LdrSolution, add_ldr, add_moment_row, affine_rhs, leader_parameter, lifted
from .model import BilevelInstance, MomentAmbiguity, Support

NAME = "sdp"


def _support(amb: MomentAmbiguity) -> Support:
    if not isinstance(amb.domain, Support):
        raise TypeError("this approximation needs a polyhedral support")
    return amb.domain


def build_primal(inst: BilevelInstance, amb: MomentAmbiguity, big_m: float | None = None):
    """Fixed-x primal; with big_m the McCormick blocks replace the x products.

    Returns the program and the leader parameter (None when d = 0).
    """
    sup = _support(amb)
    W, h = sup.W, sup.h
    x = leader_parameter(inst)
    prog = ConeProgram("ldr_sdp_primal")
    terms = add_ldr(prog, inst, sup, x, big_m)
    Q, q, t = add_moment_row(prog, amb)
    r = prog.var("r")
    tau = prog.var("tau", W.shape[0], nonneg=True)
    block = Q - sym(terms.quad)
    off = 0.5 * (q - terms.lin - W.T @ tau)
    corner = r - terms.const + tau @ h
    prog.psd("s_lemma", lifted(block, off, corner))
    prog.minimize(r + t)
    return prog, x


@dataclass
class SdpDual:
    """Optimal multipliers of the fixed-x dual, shapes (k,k), (k,n), (k,m), m, m, k, k, n."""

    U: np.ndarray
    G: np.ndarray
    H: np.ndarray
    zeta: np.ndarray
    sigma: np.ndarray
    eta: np.ndarray
    mu: np.ndarray
    chi: np.ndarray


def build_dual(inst: BilevelInstance, amb: MomentAmbiguity, copositive: bool = False):
    """Conic dual of the fixed-x primal, as a function of the leader parameter.

    With ``copositive`` the lifted moment matrix is only required to map
    into the nonnegative orthant through [W | -h], which is the dual of
    the inner approximation of the copositive certificate.
    """
    sup = _support(amb)
    W, h = sup.W, sup.h
    A, C, c0, V, v0 = inst.A, inst.C, inst.c0, inst.V, inst.v0
    m, n, k = inst.m, inst.n, inst.k
    x = leader_parameter(inst)
    Bx, bx = affine_rhs(inst, x)
    prog = ConeProgram("iacop_dual" if copositive else "ldr_sdp_dual")
    U = prog.var("U", (k, k), symmetric=True)
    G = prog.var("G", (k, n))
    H = prog.var("H", (k, m))
    zeta = prog.var("zeta", m, nonneg=True)
    sigma = prog.var("sigma", m, nonneg=True)
    eta = prog.var("eta", k)
    mu = prog.var("mu", k)
    chi = prog.var("chi", n)
    root = amb.sigma_sqrt
    g1 = np.sqrt(amb.gamma1)
    prog.nonneg("p_rule", W @ U @ Bx.T + col(W @ eta) @ row(bx) - W @ G @ A.T - col(h) @ row(zeta))
    prog.nonneg("lam", cp.trace(Bx @ H) - cp.trace(C @ G) - chi @ c0 - sigma @ bx)
    prog.zero("p0", Bx @ eta + bx - A @ chi - zeta)
    shift = col(amb.mu0) @ row(root @ mu)
    prog.psd("Q", amb.second_moment + g1 * (shift + shift.T) - U)
    prog.zero("q", eta - amb.mu0 - g1 * (root @ mu))
    prog.soc("mu_ball", cp.Constant(1.0), mu)
    Z = lifted(U, eta, cp.Constant(1.0))
    if copositive:
        Hc = np.hstack([W, -h[:, None]])
        prog.sym_nonneg("E", Hc @ Z @ Hc.T)
    else:
        prog.nonneg("tau", W @ eta - h)
        prog.psd("Z", Z)
    prog.nonneg("y_rule", -(W @ H) - col(h) @ row(sigma))
    prog.zero("Y", U @ C.T + col(eta) @ row(c0) - H @ A)
    prog.zero("y0", A.T @ sigma + C @ eta + c0)
    prog.maximize(cp.trace(V @ G) + chi @ v0)
    return prog, x


class _FixedX:
    """A parametrized program compiled once and re-solved per leader decision."""

    def __init__(self, prog: ConeProgram, x, tol: float):
        self.prog, self.x, self.tol = prog, x, tol

    def solve(self, x_hat) -> cone.ConeSolution:
        if self.x is not None:
            self.x.value = np.asarray(x_hat, dtype=float)
        return cone.solve(self.prog, tol=self.tol)


class SdpProvider:
    """Subproblem and cut provider for the S-lemma approximation."""

    name = NAME
    copositive = False

    def __init__(self, inst: BilevelInstance, amb: MomentAmbiguity, tol: float = cone.DEFAULT_TOL):
        self.inst, self.amb = inst, amb
        self._dual = _FixedX(*build_dual(inst, amb, copositive=self.copositive), tol)
        self._primal = None
        self.tol = tol

    def subproblem(self, x_hat) -> tuple[float, SdpDual]:
        sol = cone.require(self._dual.solve(x_hat), self._dual.prog, f"{self.name} subproblem")
        v = sol.values
        dual = SdpDual(v["U"], v["G"], v["H"], v["zeta"], v["sigma"], v["eta"], v["mu"], v["chi"])
        return sol.objective, dual

    def cut(self, x_hat, dual: SdpDual, value: float, big_m: float = DEFAULT_BIG_M) -> Cut:
        return make_cut(self.inst, x_hat, dual, value, big_m, source=self.name)

    def primal(self, x_hat, big_m: float | None = None) -> LdrSolution:
        """Fixed-x primal solution (the recourse rule and its certificate)."""
        if self._primal is None or self._primal[0] != big_m:
            builder = build_primal_iacop if self.copositive else build_primal
            self._primal = (big_m, _FixedX(*builder(self.inst, self.amb, big_m), self.tol))
        fx = self._primal[1]
        sol = cone.require(fx.solve(x_hat), fx.prog, f"{self.name} primal")
        return LdrSolution(np.asarray(x_hat, dtype=float), sol.objective, sol.values)


def solve_subproblem(inst: BilevelInstance, amb: MomentAmbiguity, x_hat) -> tuple[float, SdpDual]:
    return SdpProvider(inst, amb).subproblem(x_hat)


def cut_terms(inst: BilevelInstance, dual: SdpDual, U_abs: float):
    """Per-coordinate shared and signed penalty terms of the switching cut."""
    shared = np.empty(inst.d)
    signed = np.empty(inst.d)
    eta_abs = np.abs(dual.eta).sum()
    for i in range(inst.d):
        Bi, bi = inst.B[i + 1], inst.b[i + 1]
        shared[i] = U_abs + np.abs(Bi @ dual.eta + bi).sum() + eta_abs
        signed[i] = np.trace(Bi @ dual.H) - bi @ dual.sigma
    return shared, signed


def make_cut(inst: BilevelInstance, x_hat, dual: SdpDual, value: float, big_m: float = DEFAULT_BIG_M, source: str = NAME) -> Cut:
    U_abs = 0.5 * np.abs(dual.U + dual.U.T).sum()
    shared, signed = cut_terms(inst, dual, U_abs)
    return switching_cut(x_hat, value, shared, signed, big_m, source)


def build_primal_iacop(inst, amb, big_m=None):
    from .cop_ia import build_primal as _bp

    return _bp(inst, amb, big_m)


def evaluate_full_model(inst: BilevelInstance, amb: MomentAmbiguity, big_m: float = DEFAULT_BIG_M, copositive: bool = False):
    """Solve the mixed-binary model by enumerating the leader set.

    Each fixed x turns the McCormick model into a continuous conic program.
    Returns (best value, best x, {tuple(x): value}, solution at best x).
    """
    builder = build_primal_iacop if copositive else build_primal
    fx = _FixedX(*builder(inst, amb, big_m), cone.DEFAULT_TOL)
    table, best = {}, None
    for x in inst.leader_set.enumerate():
        sol = cone.require(fx.solve(x), fx.prog, "full model")
        total = float(inst.w @ x + sol.objective)
        table[tuple(int(v) for v in x)] = total
        if best is None or total < best[0] - 1e-12 * (1 + abs(total)):
            best = (total, x, LdrSolution(x, sol.objective, sol.values))
    if best is None:
        raise ValueError("leader set is empty")
    return best[0], best[1], table, best[2]
