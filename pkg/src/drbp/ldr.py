"""Affine recourse p(xi) = T W xi + p0, y(xi) = Y xi + y0 and its robust rows.

Shared by the two continuous-support approximations and the moment-cut
master. The leader decision enters as a cvxpy parameter, so one compiled
program serves every x. With ``big_m`` set, the products of x with the
recourse blocks are carried by McCormick variables instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .cone import ConeProgram, col, row
from .model import BilevelInstance, MomentAmbiguity, Support


@dataclass
class LdrTerms:
    """Expressions for f(xi) = xi' quad xi + lin' xi + const = b_x(xi)'p(xi) + c(xi)'y(xi)."""

    quad: cp.Expression
    lin: cp.Expression
    const: cp.Expression
    blocks: dict = field(default_factory=dict)
    mccormick: dict = field(default_factory=dict)


def leader_parameter(inst: BilevelInstance):
    return cp.Parameter(inst.d, name="x") if inst.d else None


def affine_rhs(inst: BilevelInstance, x):
    """B_x and b_x0 as expressions in the leader parameter."""
    Bx, bx = inst.B[0], inst.b[0]
    if x is None:
        return Bx, bx
    for i in range(inst.d):
        Bx = Bx + x[i] * inst.B[i + 1]
        bx = bx + x[i] * inst.b[i + 1]
    return Bx, bx


def add_ldr(prog: ConeProgram, inst: BilevelInstance, support: Support, x, big_m: float | None = None) -> LdrTerms:
    A, C, c0, V, v0 = inst.A, inst.C, inst.c0, inst.V, inst.v0
    W, h = support.W, support.h
    m, n, k = inst.m, inst.n, inst.k
    l = W.shape[0]
    Y = prog.var("Y", (n, k))
    y0 = prog.var("y0", n)
    T = prog.var("T", (m, l), nonneg=True)
    p0 = prog.var("p0", m)
    Lam = prog.var("Lam", (m, l), nonneg=True)
    lam = prog.var("lam", nonneg=True)
    P = T @ W
    B0, b0 = inst.B[0], inst.b[0]
    mc = {}
    if big_m is None or x is None:
        Bx, bx = affine_rhs(inst, x)
        lamB, lamb = lam * Bx, lam * bx
        BtP = Bx.T @ P
        Btp0 = Bx.T @ p0
        Ptb = P.T @ bx
        btp0 = bx @ p0
    else:
        lamB, lamb = lam * B0, lam * b0
        BtP, Btp0, Ptb, btp0 = B0.T @ P, B0.T @ p0, P.T @ b0, b0 @ p0
        ones_kk, ones_k, ones_m = np.ones((k, k)), np.ones(k), np.ones(m)
        for i in range(inst.d):
            Bi, bi = inst.B[i + 1], inst.b[i + 1]
            Gam = prog.var(f"Gamma{i}", (k, k))
            th = prog.var(f"theta{i}")
            om = prog.var(f"omega{i}", m)
            rho = prog.var(f"rho{i}", k)
            mc[i] = {"Gamma": Gam, "theta": th, "omega": om, "rho": rho}
            off, on = (1 - x[i]) * big_m, x[i] * big_m
            name = f"mccormick{i}"
            exact = Bi.T @ P
            prog.nonneg(name, Gam - exact + off * ones_kk)
            prog.nonneg(name, exact + off * ones_kk - Gam)
            prog.nonneg(name, Gam + on * ones_kk)
            prog.nonneg(name, on * ones_kk - Gam)
            prog.nonneg(name, th - lam + off)
            prog.nonneg(name, on - th)
            prog.nonneg(name, th)
            prog.nonneg(name, lam - th)
            prog.nonneg(name, om - p0 + off * ones_m)
            prog.nonneg(name, p0 + off * ones_m - om)
            prog.nonneg(name, om + on * ones_m)
            prog.nonneg(name, on * ones_m - om)
            exact = P.T @ bi
            prog.nonneg(name, rho - exact + off * ones_k)
            prog.nonneg(name, exact + off * ones_k - rho)
            prog.nonneg(name, rho + on * ones_k)
            prog.nonneg(name, on * ones_k - rho)
            lamB = lamB + th * Bi
            lamb = lamb + th * bi
            BtP = BtP + Gam
            Btp0 = Btp0 + Bi.T @ om
            Ptb = Ptb + rho
            btp0 = btp0 + bi @ om
    prog.zero("y_rule_eq", A @ Y + Lam @ W - lamB)
    prog.nonneg("y_rule_ineq", Lam @ h - A @ y0 + lamb)
    prog.zero("p_rule_eq", A.T @ P + lam * C - V)
    prog.zero("p0_rule_eq", A.T @ p0 + lam * c0 - v0)
    prog.nonneg("p_rule_ineq", T @ h + p0)
    quad = BtP + C.T @ Y
    lin = Btp0 + Ptb + C.T @ y0 + Y.T @ c0
    const = btp0 + c0 @ y0
    blocks = {"Y": Y, "y0": y0, "T": T, "p0": p0, "Lam": Lam, "lam": lam}
    return LdrTerms(quad, lin, const, blocks, mc)


def add_moment_row(prog: ConeProgram, amb: MomentAmbiguity):
    """Q, q, t with t >= (g2 S + mu mu')*Q + mu'q + sqrt(g1) |S^(1/2)(q + 2 Q mu)|."""
    k = amb.k
    Q = prog.var("Q", (k, k), psd=True)
    q = prog.var("q", k)
    t = prog.var("t")
    base = cp.trace(amb.second_moment @ Q) + amb.mu0 @ q
    if amb.gamma1 > 0:
        s = prog.var("moment_slack")
        prog.soc("moment_norm", s, amb.sigma_sqrt @ (q + 2 * Q @ amb.mu0))
        prog.nonneg("moment_row", t - base - np.sqrt(amb.gamma1) * s)
    else:
        prog.nonneg("moment_row", t - base)
    return Q, q, t


def lifted(block, vec, corner):
    """[[block, vec], [vec', corner]] as one expression."""
    return cp.bmat([[block, col(vec)], [row(vec), cp.reshape(corner, (1, 1), order="F")]])


@dataclass
class LdrSolution:
    """Numeric recourse rule and certificate at a fixed leader decision."""

    x: np.ndarray
    value: float
    values: dict

    def rule(self, W: np.ndarray):
        """(P, p0, Y, y0) with p(xi) = P xi + p0 and y(xi) = Y xi + y0."""
        v = self.values
        return v["T"] @ W, v["p0"], v["Y"], v["y0"]


def quadratic_of(inst: BilevelInstance, x, P, p0, Y, y0):
    """Numeric (quad, lin, const) of b_x(xi)'p(xi) + c(xi)'y(xi)."""
    from .model import assemble_bx

    Bx, bx = assemble_bx(inst, x)
    quad = Bx.T @ P + inst.C.T @ Y
    lin = Bx.T @ p0 + P.T @ bx + inst.C.T @ y0 + Y.T @ inst.c0
    const = bx @ p0 + inst.c0 @ y0
    return quad, lin, float(const)


def mccormick_residual(values: dict, inst: BilevelInstance, W: np.ndarray, x) -> float:
    """Largest deviation of the McCormick blocks from the products they stand for."""
    P = values["T"] @ W
    worst = 0.0
    for i in range(inst.d):
        Bi, bi = inst.B[i + 1], inst.b[i + 1]
        xi = float(x[i])
        checks = [
            (values[f"Gamma{i}"], xi * (Bi.T @ P)),
            (values[f"theta{i}"], xi * values["lam"]),
            (values[f"omega{i}"], xi * values["p0"]),
            (values[f"rho{i}"], xi * (P.T @ bi)),
        ]
        for got, want in checks:
            worst = max(worst, float(np.max(np.abs(np.asarray(got) - np.asarray(want)))))
    return worst
