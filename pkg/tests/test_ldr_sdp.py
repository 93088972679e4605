import numpy as np
import pytest

from conftest import small_facility, toy_ambiguity
from drbp import cone, engine
from drbp.cuts import DEFAULT_BIG_M
from drbp.facility import ambiguity_from_samples
from drbp.ldr import mccormick_residual
from drbp.ldr_sdp import SdpProvider, build_primal, evaluate_full_model, make_cut, solve_subproblem
from drbp.model import MomentAmbiguity, Support
from oracles import pessimistic_reference, random_follower

ABS = 1e-6


def test_empty_leader_has_no_mccormick_rows(toy):
    prog, x = build_primal(toy, toy_ambiguity(), big_m=DEFAULT_BIG_M)
    assert x is None
    assert not any(name.startswith("mccormick") for name in prog.constraints)


def test_toy_value_matches_pessimistic_mean(toy):
    # the follower response is affine in xi, so the rule is exact: -2 * mean
    value, _ = solve_subproblem(toy, toy_ambiguity(), np.zeros(0))
    assert value == pytest.approx(-6.0, abs=ABS)
    value, _ = solve_subproblem(toy, toy_ambiguity(gamma1=1.0, gamma2=2.0), np.zeros(0))
    assert value == pytest.approx(-4.0, abs=ABS)


def test_primal_equals_dual_on_facility():
    cfg, inst, samples = small_facility(2, perturbed=True)
    amb = ambiguity_from_samples(cfg, samples, 0.2, 1.5)
    prov = SdpProvider(inst, amb)
    x = inst.leader_set.enumerate()[3]
    value, _ = prov.subproblem(x)
    primal = prov.primal(x)
    assert primal.value == pytest.approx(value, rel=1e-6)


def test_value_nondecreasing_in_gamma2():
    cfg, inst, samples = small_facility(4, perturbed=True)
    x = inst.leader_set.enumerate()[2]
    values = [solve_subproblem(inst, ambiguity_from_samples(cfg, samples, 0.0, g2), x)[0] for g2 in (1.0, 2.0, 4.0)]
    assert values[0] <= values[1] + 1e-6 * abs(values[1])
    assert values[1] <= values[2] + 1e-6 * abs(values[2])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_collapsed_support_reproduces_pessimistic_value(seed):
    rng = np.random.default_rng(seed)
    inst = random_follower(rng, 3, 5, 2, 1, ("none", "row", "flat")[seed])
    center, delta = rng.uniform(0.2, 0.8, 2), 1e-6
    amb = MomentAmbiguity(center, delta**2 * np.eye(2), 0.0, 1.0, Support.box(center - delta, center + delta))
    x = np.array([1.0])
    _, ref, _ = pessimistic_reference(inst, x, center)
    assert solve_subproblem(inst, amb, x)[0] == pytest.approx(ref, abs=1e-5)


def test_constant_cut_without_leader(toy):
    value, dual = solve_subproblem(toy, toy_ambiguity(), np.zeros(0))
    cut = make_cut(toy, np.zeros(0), dual, value)
    assert cut.u.shape == (0,) and cut.a == pytest.approx(value)


def test_cut_tight_at_generating_point():
    cfg, inst, samples = small_facility(1)
    amb = ambiguity_from_samples(cfg, samples, 0.0, 1.0)
    x = inst.leader_set.enumerate()[1]
    value, dual = solve_subproblem(inst, amb, x)
    cut = make_cut(inst, x, dual, value)
    # the offset carries M-sized terms, so allow their round-off only
    assert abs(cut(x) - value) <= 1e-12 * (abs(cut.a) + np.abs(cut.u).sum()) + 1e-9


def test_full_model_enumeration_matches_engine():
    cfg, inst, samples = small_facility(5, perturbed=True)
    amb = ambiguity_from_samples(cfg, samples, 0.2, 1.0)
    best, x, table, sol = evaluate_full_model(inst, amb)
    report = engine.run(inst, amb, SdpProvider(inst, amb))
    assert best == pytest.approx(report.value, rel=1e-6)
    assert [int(v) for v in x] == report.x
    assert mccormick_residual(sol.values, inst, amb.domain.W, x) <= 1e-6 * DEFAULT_BIG_M
    assert len(table) == len(inst.leader_set.enumerate())


def test_requires_polyhedral_support(toy):
    from conftest import toy_scenarios

    with pytest.raises(TypeError):
        build_primal(toy, toy_scenarios([1.0, 3.0], 2.0))


def test_solution_status_reported(toy):
    prog, _ = build_primal(toy, toy_ambiguity())
    sol = cone.solve(prog)
    assert sol.ok and sol.iterations > 0
