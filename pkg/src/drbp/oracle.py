"""Pointwise follower evaluation for a fixed leader decision and outcome xi.

These are plain LPs (HiGHS through scipy) and serve as ground truth for
the conic models: the follower optimum, the leader-adverse and
leader-friendly values over the follower's optimal face, and the joint
dual/recourse program whose minimum over its scalar weight reproduces
the leader-adverse value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .model import BilevelInstance, assemble_bx

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
FACE_TOL = 1e-9
FLAT_TOL = 1e-9


class RecourseError(RuntimeError):
    """The follower LP is infeasible or unbounded at some (x, xi)."""


@dataclass
class FollowerOutcome:
    optimal_value: float
    pessimistic_value: float
    optimistic_value: float
    witness: np.ndarray


@dataclass
class PhiLambdaValue:
    lam: float
    value: float
    p: np.ndarray
    y: np.ndarray


def _lp(cost, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None, what="LP"):
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        raise RecourseError(f"{what}: {res.message}")
    return res


def _data(inst: BilevelInstance, x, xi):
    x = np.zeros(inst.d) if x is None else np.asarray(x, dtype=float)
    Bx, bx = assemble_bx(inst, x)
    xi = np.asarray(xi, dtype=float).reshape(-1)
    return Bx @ xi + bx, inst.c(xi), inst.v(xi)


def follower_value(inst: BilevelInstance, x, xi) -> float:
    b, c, _ = _data(inst, x, xi)
    res = _lp(c, inst.A, b, bounds=[(None, None)] * inst.n, what="follower")
    return float(res.fun)


def pessimistic_value(inst: BilevelInstance, x, xi, optimistic: bool = True) -> FollowerOutcome:
    """Best and worst v'y over the follower's optimal set (best is skipped when not asked for)."""
    b, c, v = _data(inst, x, xi)
    free = [(None, None)] * inst.n
    qbar = float(_lp(c, inst.A, b, bounds=free, what="follower").fun)
    A_face = np.vstack([inst.A, c[None, :]])
    b_face = np.concatenate([b, [qbar + FACE_TOL * (1.0 + abs(qbar))]])
    worst = _lp(-v, A_face, b_face, bounds=free, what="pessimistic")
    best = _lp(v, A_face, b_face, bounds=free, what="optimistic").fun if optimistic else np.nan
    return FollowerOutcome(qbar, float(-worst.fun), float(best), np.asarray(worst.x))


def phi_lambda(inst: BilevelInstance, x, xi, lam: float) -> PhiLambdaValue:
    """min b'p + c'y s.t. A'p + lam c = v, p >= 0, A y <= lam b."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    b, c, v = _data(inst, x, xi)
    m, n = inst.m, inst.n
    cost = np.concatenate([b, c])
    A_eq = np.hstack([inst.A.T, np.zeros((n, n))])
    A_ub = np.hstack([np.zeros((m, m)), inst.A])
    res = _lp(
        cost,
        A_ub,
        lam * b,
        A_eq,
        v - lam * c,
        bounds=[(0, None)] * m + [(None, None)] * n,
        what="phi",
    )
    return PhiLambdaValue(float(lam), float(res.fun), res.x[:m], res.x[m:])


def default_lam_max(inst: BilevelInstance, xi_points) -> float:
    """Initial bracket 1 + |v|_1 / (smallest |c(xi)|_1 over the given points)."""
    pts = np.atleast_2d(np.asarray(xi_points, dtype=float))
    vnorm = max(np.abs(inst.v(p)).sum() for p in pts)
    cnorm = min(np.abs(inst.c(p)).sum() for p in pts)
    return 1.0 + vnorm / max(1e-9, cnorm)


def golden_min(f, lam_max: float, max_doublings: int = 20, rel_tol: float = 1e-11) -> tuple[float, float]:
    """Minimize a convex function on [0, hi], doubling hi while the optimum sits on it."""
    hi = float(lam_max)
    cap = hi * 2.0**max_doublings
    while True:
        lam, val = _golden(f, 0.0, hi, rel_tol)
        if lam < hi * (1.0 - 1e-6):
            return lam, val
        # at the edge: widen only if f still drops beyond solver noise
        if f(2.0 * hi) >= val - FLAT_TOL * (1.0 + abs(val)):
            return lam, val
        if hi >= cap:
            raise RuntimeError(f"lambda bracket exhausted at {hi:g}")
        hi *= 2.0


def _golden(f, lo: float, hi: float, rel_tol: float) -> tuple[float, float]:
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > rel_tol * (1.0 + hi):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    best = min(((f(lo), lo), (fc, c), (fd, d), (f(hi), hi)))
    return best[1], best[0]


def min_phi_over_lambda(inst: BilevelInstance, x, xi, lam_max: float | None = None) -> tuple[float, float]:
    if lam_max is None:
        lam_max = default_lam_max(inst, [xi])
    return golden_min(lambda lam: phi_lambda(inst, x, xi, lam).value, lam_max)


def min_mixture_over_lambda(inst: BilevelInstance, x, points, probs, lam_max: float | None = None) -> tuple[float, float]:
    """min over lam >= 0 of sum_s probs[s] * phi_lambda(x, points[s], lam)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    probs = np.asarray(probs, dtype=float)
    keep = probs > 0
    points, probs = points[keep], probs[keep]
    if lam_max is None:
        lam_max = default_lam_max(inst, points)

    def f(lam):
        return float(sum(p * phi_lambda(inst, x, xi, lam).value for p, xi in zip(probs, points)))

    return golden_min(f, lam_max)
