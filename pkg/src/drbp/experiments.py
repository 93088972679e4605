"""Experiment drivers behind the command line: solve, gap, sweep, out-of-sample."""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import discrete, engine, milp_cut
from .cop_ia import CopIaProvider
from .cuts import DEFAULT_BIG_M
from .engine import DEFAULT_EPS, SolveReport
from .facility import (
    DemandLaw,
    FacilityConfig,
    ambiguity_from_samples,
    sample_demands,
    to_bilevel,
)
from .ldr_sdp import SdpProvider
from .model import BilevelInstance, MomentAmbiguity, Scenarios, Support
from .oracle import pessimistic_value

METHODS = ("sdp", "iacop", "discrete", "milpcut")
CONTINUOUS = ("sdp", "iacop", "milpcut")
GAP_FLOOR = -1e-3  # percent; anything lower is a solver failure
GAP_ZERO = 1e-6  # exact values this small leave the relative gap undefined
SWEEP_CV_ZERO = ((0.0, 1.0, 1.5), (1.0, 2.0))
SWEEP_PERTURBED = ((0.0, 0.2, 0.5), (1.0, 3.0))
MISSPECIFIED_UNIFORM = DemandLaw("uniform", 30.0, 218.0)
MISSPECIFIED_NORMAL = DemandLaw("truncated_normal", 30.0, 240.0, mean=135.0, std=float(np.sqrt(210.0**2 / 12.0)))


def workers() -> int:
    """Worker count from DRBP_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("DRBP_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items: list) -> list:
    n = min(workers(), len(items))
    if n <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def scenario_set(amb: MomentAmbiguity, points=None) -> np.ndarray:
    """Scenarios for the exact model: given points, else the center and box corners."""
    if isinstance(amb.domain, Scenarios):
        return amb.domain.xi
    if points is not None:
        return np.asarray(points, dtype=float).reshape(-1, amb.k)
    lo, hi = amb.domain.bounds()
    corners = np.array(list(itertools.product(*zip(lo, hi))))
    return np.vstack([amb.mu0[None, :], corners])


def provider_for(method: str, inst: BilevelInstance, amb: MomentAmbiguity):
    if method == "sdp":
        return SdpProvider(inst, amb)
    if method == "iacop":
        return CopIaProvider(inst, amb)
    if method == "discrete":
        return discrete.DiscreteProvider(inst, amb)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def solve(
    inst: BilevelInstance,
    amb: MomentAmbiguity,
    method: str,
    epsilon: float = DEFAULT_EPS,
    big_m: float = DEFAULT_BIG_M,
    scenarios=None,
    seed: int | None = None,
) -> SolveReport:
    """Dispatch one solve. The exact model swaps the support for a scenario list."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if method == "milpcut":
        report = milp_cut.run_milp_cut(inst, amb, big_m)
    else:
        if method == "discrete":
            amb = amb.with_domain(Scenarios(scenario_set(amb, scenarios)))
        report = engine.run(inst, amb, provider_for(method, inst, amb), epsilon, big_m)
    report.seed = seed
    return report


@dataclass
class GapRecord:
    method: str
    v_approx: float
    v_dis: float

    @property
    def gap_percent(self) -> float:
        return gap_percent(self.v_approx, self.v_dis)

    def row(self) -> dict:
        return {"method": self.method, "v_approx": self.v_approx, "v_dis": self.v_dis, "gap_percent": self.gap_percent}


def gap_percent(v_approx: float, v_dis: float) -> float:
    """Relative gap in percent; NaN when the exact value is zero, where it is undefined."""
    if abs(v_dis) <= GAP_ZERO:
        return float("nan")
    return (v_approx - v_dis) / abs(v_dis) * 100.0


class NegativeGap(RuntimeError):
    pass


def gap_experiment(
    inst: BilevelInstance,
    amb: MomentAmbiguity,
    scenarios,
    methods=("sdp", "iacop"),
    epsilon: float = DEFAULT_EPS,
    big_m: float = DEFAULT_BIG_M,
) -> tuple[list[GapRecord], dict]:
    """Gaps of the continuous approximations against the exact scenario model.

    The scenarios must lie in the continuous support, so the exact value is a
    lower bound for every approximation.
    """
    pts = np.asarray(scenarios, dtype=float).reshape(-1, amb.k)
    if isinstance(amb.domain, Support) and not all(amb.domain.contains(p, 1e-9) for p in pts):
        raise ValueError("gap scenarios must lie in the support")
    reports = {"discrete": solve(inst, amb, "discrete", epsilon, big_m, scenarios=pts)}
    v_dis = reports["discrete"].value
    out = []
    for m in methods:
        reports[m] = solve(inst, amb, m, epsilon, big_m)
        rec = GapRecord(m, reports[m].value, v_dis)
        below = rec.gap_percent < GAP_FLOOR if np.isfinite(rec.gap_percent) else rec.v_approx < v_dis - GAP_ZERO
        if below:
            raise NegativeGap(f"{m} gap {rec.gap_percent:.3g}% is below the exact lower bound")
        out.append(rec)
    return out, reports


def facility_gap(cfg: FacilityConfig, gamma1: float, gamma2: float, n_samples: int = 10, n_extra: int = 10, methods=("sdp", "iacop"), seed: int = 0):
    """In-sample moments from n_samples draws; exact model on those plus n_extra fresh draws."""
    rng = np.random.default_rng(seed)
    samples = sample_demands(cfg, n_samples, rng)
    extra = sample_demands(cfg, n_extra, rng)
    amb = ambiguity_from_samples(cfg, samples, gamma1, gamma2)
    return gap_experiment(to_bilevel(cfg), amb, np.vstack([samples, extra]), methods)


@dataclass
class SweepCell:
    index: int
    gamma1: float
    gamma2: float
    lower: float
    method: str

    def label(self) -> str:
        return f"g1={self.gamma1:g},g2={self.gamma2:g},lb={self.lower:g}"


def _sweep_job(args):
    cell, cfg, samples, epsilon, big_m, seed = args
    amb = ambiguity_from_samples(cfg, samples, cell.gamma1, cell.gamma2, lower=cell.lower)
    rep = solve(to_bilevel(cfg), amb, cell.method, epsilon, big_m, scenarios=samples, seed=seed)
    return {
        "index": cell.index,
        "setting": cell.label(),
        "gamma1": cell.gamma1,
        "gamma2": cell.gamma2,
        "lower": cell.lower,
        "method": cell.method,
        "profit": rep.profit,
        "value": rep.value,
        "x": "".join(str(v) for v in rep.x),
        "iterations": rep.iterations,
        "status": rep.status,
    }


def sweep(
    cfg: FacilityConfig,
    gamma1s,
    gamma2s,
    lowers=None,
    method: str = "sdp",
    n_samples: int = 10,
    seed: int = 0,
    epsilon: float = DEFAULT_EPS,
    big_m: float = DEFAULT_BIG_M,
) -> list[dict]:
    """Solve every (gamma1, gamma2, support lower bound) cell on one fixed sample."""
    samples = sample_demands(cfg, n_samples, np.random.default_rng(seed))
    lowers = [cfg.demand_law.lo] if lowers is None else list(lowers)
    cells = [SweepCell(i, g1, g2, lb, method) for i, (lb, g1, g2) in enumerate(itertools.product(lowers, gamma1s, gamma2s))]
    rows = _pmap(_sweep_job, [(c, cfg, samples, epsilon, big_m, seed) for c in cells])
    return sorted(rows, key=lambda r: r["index"])


def _oos_job(args):
    rep, inst, x, law, n_prime, seed, k = args
    rng = np.random.default_rng([seed, rep])
    xi = law.sample(rng, (n_prime, k))
    lead = float(inst.w @ x)
    profits = [-(lead + pessimistic_value(inst, x, s, optimistic=False).pessimistic_value) for s in xi]
    return {"replication": rep, "n": n_prime, "law": law.kind, "lo": law.lo, "hi": law.hi, "expected_profit": float(np.mean(profits)), "std": float(np.std(profits))}


def out_of_sample(cfg: FacilityConfig, x, law: DemandLaw | None = None, n_prime: int = 5000, replications: int = 10, seed: int = 0) -> list[dict]:
    """Mean pessimistic profit of a fixed leader decision on fresh samples, per replication."""
    inst = to_bilevel(cfg)
    x = np.asarray(x, dtype=float)
    if not inst.leader_set.contains(x):
        raise ValueError("leader decision is outside the leader set")
    law = law or cfg.demand_law
    jobs = [(r, inst, x, law, n_prime, seed, cfg.k) for r in range(replications)]
    return sorted(_pmap(_oos_job, jobs), key=lambda r: r["replication"])
