import itertools

import numpy as np
import pytest

from conftest import small_facility
from drbp.facility import (
    DemandLaw,
    FacilityConfig,
    ambiguity_from_samples,
    eight_site_config,
    load_coordinates,
    random_config,
    sample_demands,
    to_bilevel,
)
from drbp.model import check_recourse
from drbp.oracle import follower_value
from oracles import simplex_ineq


def _raw_transport(cfg, x, demand):
    """Transportation LP typed in from the model statement, solved by the dense simplex."""
    d = cfg.d
    dist = np.hypot(*(cfg.coords[:, None, :] - cfg.coords[None, :, :]).transpose(2, 0, 1))
    need = np.zeros(d)
    need[cfg.eligible == 0] = demand
    rows, rhs = [], []
    for j in range(d):
        r = np.zeros((d, d))
        r[:, j] = -1.0
        rows.append(r.ravel())
        rhs.append(-need[j])
    for i in range(d):
        r = np.zeros((d, d))
        r[i, :] = 1.0
        rows.append(r.ravel())
        rhs.append(cfg.cap[i] * (x[i] + cfg.incumbent[i]))
    rows.extend(-np.eye(d * d))
    rhs.extend([0.0] * d * d)
    return simplex_ineq(dist.ravel(), np.array(rows), np.array(rhs))[0]


def test_two_site_dimensions():
    cfg = FacilityConfig(
        coords=[[0, 0], [1, 0]], eligible=[1, 0], incumbent=[1, 0], max_new=1,
        cap=[240.0, 0.0], open_cost=1.0, demand_law=DemandLaw("uniform", 30, 240),
    )
    inst = to_bilevel(cfg)
    assert (inst.m, inst.n, inst.k) == (8, 4, 1)


def test_eight_site_configuration():
    cfg = eight_site_config()
    inst = to_bilevel(cfg)
    assert np.flatnonzero(cfg.eligible).tolist() == [0, 1, 2, 3, 5]
    assert np.flatnonzero(cfg.incumbent).tolist() == [5]
    assert cfg.cap[5] == 720 and np.all(cfg.cap[:4] == 360)
    assert cfg.max_new == 4 and np.all(inst.w == 305)
    assert set(np.unique(inst.v0)) == {-5.0, 0.0}
    assert cfg.k == 3 and (cfg.demand_law.lo, cfg.demand_law.hi) == (30, 240)
    assert len(inst.leader_set.enumerate()) == 16


@pytest.mark.parametrize("d", [15, 20, 25])
def test_random_capacity_rule(d):
    rng = np.random.default_rng(d)
    cfg = random_config(d, 5, 2, 3, 100.0, rng)
    assert np.allclose(cfg.cap[cfg.eligible == 1], 150.0 * (d - 5) / 2)


def test_capacity_invariant_checked():
    with pytest.raises(ValueError):
        FacilityConfig(coords=[[0, 0], [1, 0]], eligible=[1, 0], incumbent=[1, 0], max_new=1, cap=[100.0, 0.0], open_cost=1.0)
    with pytest.raises(ValueError):
        FacilityConfig(coords=[[0, 0], [1, 0]], eligible=[0, 0], incumbent=[1, 0], max_new=1, cap=[300.0, 0.0], open_cost=1.0)


def test_uniform_sample_mean():
    cfg = eight_site_config()
    X = sample_demands(cfg, 20000, np.random.default_rng(0))
    half_width = 4 * 210 / np.sqrt(12) / np.sqrt(X.size)
    assert abs(X.mean() - 135.0) <= half_width


def test_misspecified_uniform_moments():
    law = DemandLaw("uniform", 30, 218)
    assert (law.lo + law.hi) / 2 == 124
    assert (law.hi - law.lo) ** 2 / 12 == pytest.approx(2940, rel=5e-3)
    X = law.sample(np.random.default_rng(1), 20000)
    assert abs(X.mean() - 124) <= 4 * np.sqrt(2946 / X.size)


def test_truncated_normal_wide_bounds():
    law = DemandLaw("truncated_normal", -1e4, 1e4, mean=100.0, std=20.0)
    X = law.sample(np.random.default_rng(2), 20000)
    assert abs(X.mean() - 100) < 1.0 and abs(X.std() - 20) < 1.0
    narrow = DemandLaw("truncated_normal", 30, 240, mean=135, std=60).sample(np.random.default_rng(3), 1000)
    assert narrow.min() >= 30 and narrow.max() <= 240


def test_demand_law_validation():
    with pytest.raises(ValueError):
        DemandLaw("poisson")
    with pytest.raises(ValueError):
        DemandLaw("truncated_normal", 0, 1, 0, 0)
    with pytest.raises(ValueError):
        sample_demands(eight_site_config(), 0)


@pytest.mark.parametrize("seed", [0, 1])
def test_generated_instances_have_recourse(seed):
    cfg, inst, samples = small_facility(seed, perturbed=True)
    assert check_recourse(inst, ambiguity_from_samples(cfg, samples, 0.0, 1.0), samples=3).passed


def test_round_trip_against_raw_transport():
    cfg, inst, samples = small_facility(7)
    for x in inst.leader_set.enumerate()[:3]:
        for xi in samples[:2]:
            assert follower_value(inst, x, xi) == pytest.approx(_raw_transport(cfg, x, xi), rel=1e-7, abs=1e-7)


def test_perturbation_ranges():
    cfg, inst, _ = small_facility(8, perturbed=True)
    lo, hi = cfg.demand_law.lo, cfg.demand_law.hi
    center = np.full(cfg.k, 0.5 * (lo + hi))
    c_center = inst.C @ center
    assert c_center.min() >= 0.09 - 1e-12 and c_center.max() <= 0.092 + 1e-12
    for corner in itertools.product(*[(lo, hi)] * cfg.k):
        v = inst.V @ np.array(corner)
        assert v.min() >= 4 * cfg.unit_revenue - 1e-9 and v.max() <= 1e-12


def test_config_round_trip():
    cfg, _, _ = small_facility(9, perturbed=True)
    back = FacilityConfig.from_dict(cfg.to_dict())
    assert np.allclose(back.C, cfg.C) and back.demand_law == cfg.demand_law


def test_load_coordinates(tmp_path):
    path = tmp_path / "pts.csv"
    path.write_text("id,x,y\n2,3.0,4.0\n1,1.0,2.0\n")
    assert load_coordinates(str(path)).tolist() == [[1.0, 2.0], [3.0, 4.0]]
