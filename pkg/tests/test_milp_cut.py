import cvxpy as cp
import numpy as np
import pytest

from conftest import small_facility, toy_ambiguity
from drbp import cone, engine, milp_cut
from drbp.discrete import solve_subproblem as discrete_value
from drbp.facility import ambiguity_from_samples
from drbp.ldr_sdp import SdpProvider
from drbp.model import MomentPoint, Scenarios, assemble_bx


def _known_moment_lp(inst, amb, x, mu, Omega):
    """Affine-rule cost at a fixed (mean, second moment), written out directly."""
    W, h = amb.domain.W, amb.domain.h
    Bx, bx = assemble_bx(inst, x)
    m, n, k, l = inst.m, inst.n, inst.k, W.shape[0]
    Y, y0, p0 = cp.Variable((n, k)), cp.Variable(n), cp.Variable(m)
    T, Lam, lam = cp.Variable((m, l), nonneg=True), cp.Variable((m, l), nonneg=True), cp.Variable(nonneg=True)
    P = T @ W
    cons = [
        inst.A @ Y + Lam @ W == lam * Bx,
        Lam @ h - inst.A @ y0 + lam * bx >= 0,
        inst.A.T @ P + lam * inst.C == inst.V,
        inst.A.T @ p0 + lam * inst.c0 == inst.v0,
        T @ h + p0 >= 0,
    ]
    quad = Bx.T @ P + inst.C.T @ Y
    lin = Bx.T @ p0 + P.T @ bx + inst.C.T @ y0 + Y.T @ inst.c0
    const = bx @ p0 + inst.c0 @ y0
    prob = cp.Problem(cp.Minimize(cp.trace(Omega @ quad) + mu @ lin + const), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value


def test_empty_pool_floor():
    cfg, inst, samples = small_facility(1)
    amb = ambiguity_from_samples(cfg, samples, 0.0, 1.0)
    inc = milp_cut.solve_master(inst, amb, milp_cut.MomentCutPool())
    assert inc.v == pytest.approx(milp_cut.FLOOR, rel=1e-9)
    assert inc.x.tolist() == inst.leader_set.enumerate()[0].tolist()
    found = milp_cut.separate(inst, amb, inc)
    assert found is not None and found[1] > 0


def test_single_known_moment_point():
    cfg, inst, samples = small_facility(2, perturbed=True)
    amb = ambiguity_from_samples(cfg, samples, 0.0, 1.0)
    point = MomentPoint(amb.mu0, amb.sigma0 + np.outer(amb.mu0, amb.mu0))
    pool = milp_cut.MomentCutPool([point])
    prog, xpar, _ = milp_cut.build_master(inst, amb, pool)
    for x in inst.leader_set.enumerate()[:3]:
        xpar.value = x
        got = cone.solve(prog).objective
        ref = _known_moment_lp(inst, amb, x, point.mu, point.Omega)
        assert got == pytest.approx(ref, rel=1e-6, abs=1e-6)


def test_separation_points_are_members():
    cfg, inst, samples = small_facility(3, perturbed=True)
    amb = ambiguity_from_samples(cfg, samples, 0.3, 1.5)
    pool = milp_cut.MomentCutPool()
    for _ in range(3):
        inc = milp_cut.solve_master(inst, amb, pool)
        found = milp_cut.separate(inst, amb, inc)
        if found is None:
            break
        rep = milp_cut.membership(amb, found[0])
        scale = 1.0 + np.abs(found[0].Omega).max()
        assert rep["mean"] <= 1e-6 and rep["covariance"] <= 1e-6 * scale and rep["lift"] <= 1e-6 * scale
        pool.add(found[0])


def test_toy_converges_fast(toy):
    rep = milp_cut.run_milp_cut(toy, toy_ambiguity())
    assert rep.status == "optimal" and rep.iterations <= 2
    assert rep.value == pytest.approx(-6.0, abs=1e-6)


def test_sandwich_and_monotone_master():
    cfg, inst, samples = small_facility(4)
    amb = ambiguity_from_samples(cfg, samples, 0.2, 1.0)
    rep = milp_cut.run_milp_cut(inst, amb)
    assert rep.status == "optimal"
    masters = [h["master"] for h in rep.history]
    assert all(b >= a - 1e-6 * (1 + abs(a)) for a, b in zip(masters, masters[1:]))
    sdp = engine.run(inst, amb, SdpProvider(inst, amb)).value
    x = np.array(rep.x, dtype=float)
    v_dis = inst.w @ x + discrete_value(inst, amb.with_domain(Scenarios(samples)), x)[0]
    assert v_dis - 1e-5 <= rep.value <= sdp + 1e-5 * max(1.0, abs(sdp))
    assert rep.extras["mccormick_residual"] <= 1e-6 * 1e6


def test_converged_incumbent_has_no_violation():
    cfg, inst, samples = small_facility(5)
    amb = ambiguity_from_samples(cfg, samples, 0.0, 1.0)
    rep = milp_cut.run_milp_cut(inst, amb)
    pool = milp_cut.MomentCutPool([MomentPoint(np.array(p["mu"]), np.array(p["Omega"])) for p in rep.extras["pool"]])
    inc = milp_cut.solve_master(inst, amb, pool)
    assert milp_cut.separate(inst, amb, inc) is None
