import numpy as np
import pytest

from conftest import small_facility, toy_ambiguity
from drbp import cone, engine
from drbp.cop_ia import CopIaProvider, build_primal, describe_copositive, lift_matrix, make_cut, solve_subproblem, support_lift
from drbp.cuts import DEFAULT_BIG_M
from drbp.facility import ambiguity_from_samples
from drbp.ldr_sdp import SdpProvider
from drbp.model import MomentAmbiguity, Support
from oracles import pessimistic_reference, random_follower

ABS = 1e-6


def test_empty_leader_collapse(toy):
    prog, x = build_primal(toy, toy_ambiguity(), big_m=DEFAULT_BIG_M)
    assert x is None and not any(n.startswith("mccormick") for n in prog.constraints)


def test_toy_values(toy):
    assert solve_subproblem(toy, toy_ambiguity(), np.zeros(0))[0] == pytest.approx(-6.0, abs=ABS)
    assert solve_subproblem(toy, toy_ambiguity(1.0, 2.0), np.zeros(0))[0] == pytest.approx(-4.0, abs=ABS)


@pytest.mark.parametrize("seed", [3, 4])
def test_collapsed_support_reproduces_pessimistic_value(seed):
    rng = np.random.default_rng(seed)
    inst = random_follower(rng, 3, 5, 2, 1, "row")
    center, delta = rng.uniform(0.2, 0.8, 2), 1e-6
    amb = MomentAmbiguity(center, delta**2 * np.eye(2), 0.0, 1.0, Support.box(center - delta, center + delta))
    _, ref, _ = pessimistic_reference(inst, [1.0], center)
    assert solve_subproblem(inst, amb, np.array([1.0]))[0] == pytest.approx(ref, abs=1e-5)


def test_primal_matches_dual_and_certificate():
    cfg, inst, samples = small_facility(6, perturbed=True)
    amb = ambiguity_from_samples(cfg, samples, 0.2, 1.0)
    prov = CopIaProvider(inst, amb)
    x = inst.leader_set.enumerate()[4]
    value, _ = prov.subproblem(x)
    sol = prov.primal(x)
    assert sol.value == pytest.approx(value, rel=1e-6)
    # the lift identity: r e e' - Qhat = H' U H with U >= 0
    H = support_lift(amb)
    U = sol.values["U_lift"]
    assert U.min() >= -1e-7 * max(1.0, np.abs(U).max())
    lhs = lift_matrix(inst, amb, x, sol.values)
    assert np.allclose(lhs, H.T @ U @ H, atol=1e-6 * max(1.0, np.abs(lhs).max()))


def test_ia_not_below_sdp_on_ten_instances():
    for seed in range(10):
        cfg, inst, samples = small_facility(seed, perturbed=seed % 2 == 0)
        amb = ambiguity_from_samples(cfg, samples, 0.2, 1.0)
        sdp = engine.run(inst, amb, SdpProvider(inst, amb)).value
        ia = engine.run(inst, amb, CopIaProvider(inst, amb)).value
        assert ia >= sdp - 1e-5, (seed, ia, sdp)


def test_cut_tight_and_constant(toy):
    value, dual = solve_subproblem(toy, toy_ambiguity(), np.zeros(0))
    cut = make_cut(toy, np.zeros(0), dual, value)
    assert cut.u.size == 0 and cut.a == pytest.approx(value)
    cfg, inst, samples = small_facility(1)
    amb = ambiguity_from_samples(cfg, samples, 0.0, 1.0)
    x = inst.leader_set.enumerate()[2]
    value, dual = solve_subproblem(inst, amb, x)
    cut = make_cut(inst, x, dual, value)
    # the offset carries M-sized terms, so allow their round-off only
    assert abs(cut(x) - value) <= 1e-12 * (abs(cut.a) + np.abs(cut.u).sum()) + 1e-9


def test_describe_mentions_shape(toy):
    text = describe_copositive(toy, toy_ambiguity())
    assert "(2, 2)" in text


def test_program_solves(toy):
    prog, _ = build_primal(toy, toy_ambiguity())
    assert cone.solve(prog).ok
