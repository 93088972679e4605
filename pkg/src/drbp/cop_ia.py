"""Affine-rule approximation certified by a nonnegative lift of the support rows.

Instead of an S-lemma block, the quadratic gap r + xi'Q xi + q'xi - f(xi)
is written exactly as (W xi - h)' U (W xi - h) with U symmetric and
elementwise nonnegative. That is an inner approximation of copositivity
over the support cone, so it is conservative, and typically looser than
the S-lemma route.
"""

from __future__ import annotations

import numpy as np

from .cone import ConeProgram, sym
from .cuts import DEFAULT_BIG_M, Cut, switching_cut
from .ldr import add_ldr, add_moment_row, leader_parameter, lifted, quadratic_of
from .ldr_sdp import SdpDual, SdpProvider, _support, cut_terms
from .model import BilevelInstance, MomentAmbiguity

NAME = "iacop"


def support_lift(amb: MomentAmbiguity) -> np.ndarray:
    """[W | -h], mapping (xi, 1) to the support slacks."""
    sup = _support(amb)
    return np.hstack([sup.W, -sup.h[:, None]])


def build_primal(inst: BilevelInstance, amb: MomentAmbiguity, big_m: float | None = None):
    sup = _support(amb)
    Hc = support_lift(amb)
    l = Hc.shape[0]
    x = leader_parameter(inst)
    prog = ConeProgram("iacop_primal")
    terms = add_ldr(prog, inst, sup, x, big_m)
    Q, q, t = add_moment_row(prog, amb)
    r = prog.var("r")
    U = prog.var("U_lift", (l, l), symmetric=True)
    prog.sym_nonneg("U_lift_nonneg", U)
    gap = lifted(Q - sym(terms.quad), 0.5 * (q - terms.lin), r - terms.const)
    prog.sym_zero("lift_identity", gap - Hc.T @ U @ Hc)
    prog.minimize(r + t)
    return prog, x


class CopIaProvider(SdpProvider):
    name = NAME
    copositive = True

    def cut(self, x_hat, dual: SdpDual, value: float, big_m: float = DEFAULT_BIG_M) -> Cut:
        return make_cut(self.inst, x_hat, dual, value, big_m)


def solve_subproblem(inst: BilevelInstance, amb: MomentAmbiguity, x_hat) -> tuple[float, SdpDual]:
    return CopIaProvider(inst, amb).subproblem(x_hat)


def make_cut(inst: BilevelInstance, x_hat, dual: SdpDual, value: float, big_m: float = DEFAULT_BIG_M) -> Cut:
    U_abs = 0.5 * np.abs(dual.U + dual.U.T).sum()
    shared, signed = cut_terms(inst, dual, U_abs)
    return switching_cut(x_hat, value, shared, signed, big_m, NAME)


def lift_matrix(inst: BilevelInstance, amb: MomentAmbiguity, x, values: dict) -> np.ndarray:
    """Numeric r e e' - Qhat from a primal solution, for residual checks."""
    sup = _support(amb)
    quad, lin, const = quadratic_of(inst, x, values["T"] @ sup.W, values["p0"], values["Y"], values["y0"])
    Q, q, r = values["Q"], values["q"], float(values["r"])
    top = Q - 0.5 * (quad + quad.T)
    off = 0.5 * (q - lin)
    return np.block([[top, off[:, None]], [off[None, :], np.array([[r - const]])]])


def describe_copositive(inst: BilevelInstance, amb: MomentAmbiguity) -> str:
    """Plain-text statement of the exact copositive model this one approximates."""
    Hc = support_lift(amb)
    return (
        f"min r + t over the affine rule, with r e e' - Qhat copositive on "
        f"{{z in R^{inst.k + 1} : Hz >= 0}}, H = [W | -h] of shape {Hc.shape}; "
        f"replaced here by r e e' - Qhat = H' U H, U >= 0."
    )
