import numpy as np
import pytest

from conftest import small_facility
from drbp.facility import transport_cost
from drbp.model import toy_instance
from drbp.oracle import (
    RecourseError,
    follower_value,
    golden_min,
    min_mixture_over_lambda,
    min_phi_over_lambda,
    pessimistic_value,
    phi_lambda,
)
from oracles import pessimistic_reference, random_follower

TOL = 1e-7


def test_follower_value_toy(toy):
    assert follower_value(toy, None, [3.0]) == pytest.approx(3.0, abs=TOL)
    assert follower_value(toy_instance(c0=0.0), None, [3.0]) == pytest.approx(0.0, abs=TOL)


def test_pessimistic_toy_unique_optimum(toy):
    out = pessimistic_value(toy, None, [3.0])
    assert out.pessimistic_value == pytest.approx(-6.0, abs=TOL)
    assert out.optimistic_value == pytest.approx(-6.0, abs=TOL)


def test_pessimistic_toy_flat_objective():
    out = pessimistic_value(toy_instance(c0=0.0), None, [3.0])
    assert out.pessimistic_value == pytest.approx(-6.0, abs=TOL)
    assert out.optimistic_value == pytest.approx(-20.0, abs=TOL)
    assert out.witness[0] == pytest.approx(3.0, abs=1e-6)


def test_phi_lambda_toy_branches(toy):
    at0 = phi_lambda(toy, None, [3.0], 0.0)
    assert at0.value == pytest.approx(-6.0, abs=TOL)
    assert at0.y[0] == pytest.approx(0.0, abs=TOL)
    at1 = phi_lambda(toy, None, [3.0], 1.0)
    rhs = np.array([-3.0, 10.0])
    assert at1.value == pytest.approx(-6.0, abs=TOL)
    assert rhs @ at1.p == pytest.approx(-9.0, abs=TOL)
    assert at1.y[0] == pytest.approx(3.0, abs=TOL)
    with pytest.raises(ValueError):
        phi_lambda(toy, None, [3.0], -1.0)


def test_phi_lambda_flat_objective_constant():
    inst = toy_instance(c0=0.0)
    for lam in (0.0, 0.5, 3.0, 100.0):
        assert phi_lambda(inst, None, [3.0], lam).value == pytest.approx(-6.0, abs=TOL)


def test_min_phi_matches_pessimistic_on_toy():
    for c0 in (1.0, 0.0):
        inst = toy_instance(c0=c0)
        _, val = min_phi_over_lambda(inst, None, [3.0])
        assert val == pytest.approx(-6.0, abs=1e-6)


def test_equal_objectives_collapse():
    rng = np.random.default_rng(5)
    inst = random_follower(rng, 3, 5, 2, 1, "none")
    same = type(inst)(inst.A, inst.B, inst.b, inst.C, inst.c0, inst.C, inst.c0, inst.w, inst.leader_set)
    out = pessimistic_value(same, [1.0], [0.3, 0.6])
    assert out.pessimistic_value == pytest.approx(out.optimal_value, abs=1e-7)
    assert out.optimistic_value == pytest.approx(out.optimal_value, abs=1e-7)


def test_facility_follower_matches_references():
    cfg, inst, samples = small_facility(3)
    x = np.zeros(inst.d)
    for xi in samples[:3]:
        q, _, _ = pessimistic_reference(inst, x, xi)
        assert follower_value(inst, x, xi) == pytest.approx(q, rel=1e-7, abs=1e-7)
        assert follower_value(inst, x, xi) == pytest.approx(transport_cost(cfg, x, xi), rel=1e-7, abs=1e-7)


def test_random_equivalence_fifty():
    rng = np.random.default_rng(11)
    worst = 0.0
    for i in range(50):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(n + 1, 7))
        k, d = int(rng.integers(1, 4)), int(rng.integers(0, 4))
        inst = random_follower(rng, n, m, k, d, ("none", "row", "flat")[i % 3])
        x, xi = rng.integers(0, 2, d).astype(float), rng.uniform(0, 1, k)
        _, ref, _ = pessimistic_reference(inst, x, xi)
        _, val = min_phi_over_lambda(inst, x, xi)
        worst = max(worst, abs(val - ref))
    assert worst <= 1e-5


def test_mixture_of_two_points(toy):
    _, val = min_mixture_over_lambda(toy, None, [[1.0], [3.0]], [0.5, 0.5])
    assert val == pytest.approx(-4.0, abs=1e-6)


def test_golden_min_expands_bracket():
    lam, val = golden_min(lambda t: abs(t - 50.0) + 1.0, 1.0)
    assert lam == pytest.approx(50.0, abs=1e-6) and val == pytest.approx(1.0, abs=1e-6)


def test_infeasible_follower_raises(toy):
    with pytest.raises(RecourseError):
        follower_value(toy, None, [20.0])
