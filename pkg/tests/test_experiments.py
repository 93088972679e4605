import numpy as np
import pytest

from conftest import small_facility, toy_ambiguity
from drbp import experiments as ex
from drbp.facility import DemandLaw, random_config, to_bilevel
from drbp.oracle import pessimistic_value


def test_gap_formula():
    assert ex.gap_percent(110.0, 100.0) == pytest.approx(10.0)
    assert ex.gap_percent(-90.0, -100.0) == pytest.approx(10.0)
    assert ex.gap_percent(7.0, 7.0) == 0.0
    assert np.isnan(ex.gap_percent(1e-9, 0.0))


def test_gap_experiment_nonnegative_and_ordered():
    cfg, inst, samples = small_facility(0, perturbed=True)
    records, reports = ex.facility_gap(cfg, 0.2, 1.0, seed=0)
    gaps = {r.method: r.gap_percent for r in records}
    assert min(gaps.values()) >= ex.GAP_FLOOR
    assert gaps["sdp"] <= gaps["iacop"] + 1e-6
    assert "worst_case_distribution" in reports["discrete"].to_dict()


def test_gap_rejects_points_outside_support(toy):
    with pytest.raises(ValueError):
        ex.gap_experiment(toy, toy_ambiguity(), [[0.0], [3.0]])


def test_scenario_set_defaults(toy):
    pts = ex.scenario_set(toy_ambiguity())
    assert pts.tolist() == [[3.0], [1.0], [5.0]]


def test_unknown_method(toy):
    with pytest.raises(ValueError):
        ex.solve(toy, toy_ambiguity(), "nope")


def test_single_cell_sweep_equals_solve():
    cfg, inst, samples = small_facility(1)
    rows = ex.sweep(cfg, [0.5], [2.0], method="sdp", n_samples=10, seed=4)
    from drbp.facility import ambiguity_from_samples, sample_demands

    draws = sample_demands(cfg, 10, np.random.default_rng(4))
    rep = ex.solve(inst, ambiguity_from_samples(cfg, draws, 0.5, 2.0), "sdp")
    assert len(rows) == 1 and rows[0]["profit"] == pytest.approx(rep.profit, rel=1e-9)
    assert rows[0]["x"] == "".join(str(v) for v in rep.x)


def test_oos_point_law_is_exact():
    cfg, inst, _ = small_facility(2)
    x = inst.leader_set.enumerate()[1]
    point = DemandLaw("point", 50, 150, mean=120.0)
    rows = ex.out_of_sample(cfg, x, point, n_prime=3, replications=2)
    expected = -(inst.w @ x + pessimistic_value(inst, x, np.full(cfg.k, 120.0)).pessimistic_value)
    assert [r["expected_profit"] for r in rows] == pytest.approx([expected, expected], rel=1e-12)


def test_oos_replication_means_concentrate():
    rng = np.random.default_rng(0)
    cfg = random_config(4, 2, 1, 1, 50.0, rng, seed=0)
    x = to_bilevel(cfg).leader_set.enumerate()[1]
    spread = {}
    for n in (50, 500):
        means = [r["expected_profit"] for r in ex.out_of_sample(cfg, x, n_prime=n, replications=6, seed=1)]
        spread[n] = np.var(means, ddof=1)
    assert spread[500] < spread[50]


def test_oos_laws_emit_ten_rows(eight_site):
    cfg, inst, _, _ = eight_site
    x = inst.leader_set.enumerate()[0]
    for law in (ex.MISSPECIFIED_UNIFORM, ex.MISSPECIFIED_NORMAL):
        rows = ex.out_of_sample(cfg, x, law, n_prime=5, replications=10)
        assert [r["replication"] for r in rows] == list(range(10))
    assert ex.MISSPECIFIED_NORMAL.std ** 2 == pytest.approx(210.0**2 / 12)


def test_oos_rejects_outside_leader_set():
    cfg, inst, _ = small_facility(3)
    with pytest.raises(ValueError):
        ex.out_of_sample(cfg, np.ones(inst.d), n_prime=1, replications=1)


def test_workers_env(monkeypatch):
    monkeypatch.setenv("DRBP_THREADS", "3")
    assert ex.workers() == 3
    monkeypatch.setenv("DRBP_THREADS", "x")
    assert ex.workers() == 1
