"""Competitive facility-location benchmark.

Company B picks store locations (the leader); a transportation follower
ships stochastic demand from open stores, including those of an
incumbent company A, at minimum distance cost. Company B earns a unit
revenue only on units shipped from its own stores.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog
from scipy.stats import truncnorm

from .model import BilevelInstance, LeaderSet, MomentAmbiguity, Support, estimate_moments


@dataclass(frozen=True)
class DemandLaw:
    """Per-location demand distribution: uniform(lo, hi) or a normal truncated to [lo, hi]."""

    kind: str = "uniform"
    lo: float = 30.0
    hi: float = 240.0
    mean: float = 0.0
    std: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "truncated_normal", "point"):
            raise ValueError(f"unknown demand law {self.kind!r}")
        if self.hi < self.lo:
            raise ValueError("demand law needs lo <= hi")
        if self.kind == "truncated_normal" and self.std <= 0:
            raise ValueError("truncated normal needs std > 0")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.lo, self.hi, size)
        if self.kind == "point":
            return np.full(size, self.mean)
        a = (self.lo - self.mean) / self.std
        b = (self.hi - self.mean) / self.std
        # inverse CDF on the truncated interval
        u = rng.uniform(size=size)
        return truncnorm.ppf(u, a, b, loc=self.mean, scale=self.std)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi, "mean": self.mean, "std": self.std}


@dataclass(frozen=True)
class FacilityConfig:
    coords: np.ndarray
    eligible: np.ndarray
    incumbent: np.ndarray
    max_new: int
    cap: np.ndarray
    open_cost: np.ndarray
    unit_revenue: float = -5.0
    demand_law: DemandLaw = field(default_factory=DemandLaw)
    C: np.ndarray | None = None
    V: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        d = len(self.coords)
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float).reshape(d, 2))
        object.__setattr__(self, "eligible", np.asarray(self.eligible, dtype=int).reshape(d))
        object.__setattr__(self, "incumbent", np.asarray(self.incumbent, dtype=int).reshape(d))
        object.__setattr__(self, "cap", np.broadcast_to(np.asarray(self.cap, dtype=float), (d,)).copy())
        object.__setattr__(self, "open_cost", np.broadcast_to(np.asarray(self.open_cost, dtype=float), (d,)).copy())
        if np.any(self.incumbent > self.eligible):
            raise ValueError("incumbent stores must sit at eligible locations")
        worst = self.demand_law.hi * self.k
        if self.cap @ self.incumbent < worst - 1e-9:
            raise ValueError(f"incumbent capacity {self.cap @ self.incumbent:g} cannot cover peak demand {worst:g}")

    @property
    def d(self) -> int:
        return len(self.coords)

    @property
    def demand_sites(self) -> np.ndarray:
        return np.flatnonzero(self.eligible == 0)

    @property
    def k(self) -> int:
        return int(np.sum(self.eligible == 0))

    @property
    def candidates(self) -> np.ndarray:
        return np.flatnonzero((self.eligible == 1) & (self.incumbent == 0))

    def distances(self) -> np.ndarray:
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        return np.sqrt((diff**2).sum(axis=2))

    def support(self) -> Support:
        return Support.box(np.full(self.k, self.demand_law.lo), np.full(self.k, self.demand_law.hi))

    def to_dict(self) -> dict:
        out = {
            "coords": self.coords.tolist(),
            "eligible": self.eligible.tolist(),
            "incumbent": self.incumbent.tolist(),
            "max_new": self.max_new,
            "cap": self.cap.tolist(),
            "open_cost": self.open_cost.tolist(),
            "unit_revenue": self.unit_revenue,
            "demand_law": self.demand_law.to_dict(),
            "seed": self.seed,
        }
        if self.C is not None:
            out["C"] = np.asarray(self.C).tolist()
        if self.V is not None:
            out["V"] = np.asarray(self.V).tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "FacilityConfig":
        data = dict(data)
        data["demand_law"] = DemandLaw(**data.get("demand_law", {}))
        for key in ("C", "V"):
            if data.get(key) is not None:
                data[key] = np.asarray(data[key], dtype=float)
        return cls(**data)


def pair_index(i: int, j: int, d: int) -> int:
    """Column of y_ij, the flow from store i to demand site j."""
    return i * d + j


def to_bilevel(cfg: FacilityConfig) -> BilevelInstance:
    """Follower: min sum c_ij y_ij s.t. demand met, capacities of open stores, y >= 0.

    Rows are ordered demand (d), capacity (d), then one sign row per flow.
    """
    d, k = cfg.d, cfg.k
    n, m = d * d, 2 * d + d * d
    A = np.zeros((m, n))
    for j in range(d):
        for i in range(d):
            A[j, pair_index(i, j, d)] = -1.0
            A[d + i, pair_index(i, j, d)] = 1.0
    A[2 * d :, :] = -np.eye(n)
    B0 = np.zeros((m, k))
    for s, j in enumerate(cfg.demand_sites):
        B0[j, s] = -1.0
    b0 = np.zeros(m)
    b0[d : 2 * d] = cfg.cap * cfg.incumbent
    B = [B0]
    b = [b0]
    for i in range(d):
        bi = np.zeros(m)
        bi[d + i] = cfg.cap[i]
        B.append(np.zeros((m, k)))
        b.append(bi)
    c0 = cfg.distances().reshape(-1)
    v0 = np.zeros(n)
    new_store = (cfg.eligible == 1) & (cfg.incumbent == 0)
    for i in np.flatnonzero(new_store):
        for j in range(d):
            v0[pair_index(i, j, d)] = cfg.unit_revenue
    C = np.zeros((n, k)) if cfg.C is None else np.asarray(cfg.C, dtype=float)
    V = np.zeros((n, k)) if cfg.V is None else np.asarray(cfg.V, dtype=float)
    upper = (cfg.eligible - cfg.incumbent).astype(float)
    rows = [(np.eye(d)[i], upper[i]) for i in range(d)]
    rows.append((np.ones(d), float(cfg.max_new)))
    return BilevelInstance(A, tuple(B), tuple(b), C, c0, V, v0, cfg.open_cost, LeaderSet(d, tuple(rows)))


def sample_demands(cfg: FacilityConfig, count: int, rng: np.random.Generator | None = None, law: DemandLaw | None = None) -> np.ndarray:
    """count x k demand draws at the stochastic sites."""
    if count < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    return (law or cfg.demand_law).sample(rng, (count, cfg.k))


def ambiguity_from_samples(cfg: FacilityConfig, samples, gamma1: float, gamma2: float, lower: float | None = None) -> MomentAmbiguity:
    mu0, sigma0 = estimate_moments(samples)
    lo = cfg.demand_law.lo if lower is None else lower
    sup = Support.box(np.full(cfg.k, lo), np.full(cfg.k, cfg.demand_law.hi))
    return MomentAmbiguity(mu0, sigma0, gamma1, gamma2, sup)


def perturbation_matrices(cfg: FacilityConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Random outcome-dependent cost and revenue slopes.

    Each row of C is a nonnegative direction scaled so that its product with
    the support center lands in [0.09, 0.092]. Each revenue row at a new
    store is scaled so its product stays in [4 v, 0] on the whole box.
    """
    d, k = cfg.d, cfg.k
    n = d * d
    lo = np.full(k, cfg.demand_law.lo)
    hi = np.full(k, cfg.demand_law.hi)
    center = 0.5 * (lo + hi)
    raw = rng.uniform(0.0, 1.0, (n, k))
    target = rng.uniform(0.09, 0.092, n)
    C = raw * (target / (raw @ center))[:, None]
    V = np.zeros((n, k))
    new_store = (cfg.eligible == 1) & (cfg.incumbent == 0)
    bound = 4.0 * abs(cfg.unit_revenue)
    for i in np.flatnonzero(new_store):
        for j in range(d):
            r = pair_index(i, j, d)
            direction = rng.uniform(0.0, 1.0, k)
            depth = rng.uniform(0.0, bound)
            V[r] = -depth * direction / (direction @ hi)
    return C, V


def eight_site_config(lower: float = 30.0, seed: int = 0, law: DemandLaw | None = None) -> FacilityConfig:
    """Synthetic eight-site layout: eligible {1,2,3,4,6}, incumbent at 6.

    Sites 5, 7, 8 carry demand. Sites 3 and 4 sit next to demand sites 5
    and 7; sites 1 and 2 are far from every demand site.
    """
    coords = np.array(
        [
            [0.05, 0.95],
            [0.95, 0.95],
            [0.20, 0.25],
            [0.80, 0.25],
            [0.15, 0.20],
            [0.50, 0.50],
            [0.85, 0.20],
            [0.50, 0.90],
        ]
    )
    eligible = np.array([1, 1, 1, 1, 0, 1, 0, 0])
    incumbent = np.array([0, 0, 0, 0, 0, 1, 0, 0])
    cap = np.array([360, 360, 360, 360, 0, 720, 0, 0], dtype=float)
    return FacilityConfig(
        coords=coords,
        eligible=eligible,
        incumbent=incumbent,
        max_new=4,
        cap=cap,
        open_cost=np.full(8, 305.0),
        unit_revenue=-5.0,
        demand_law=law or DemandLaw("uniform", lower, 240.0),
        seed=seed,
    )


def random_config(
    d: int,
    n_eligible: int,
    n_incumbent: int,
    max_new: int,
    open_cost: float,
    rng: np.random.Generator,
    perturbed: bool = False,
    law: DemandLaw | None = None,
    seed: int = 0,
) -> FacilityConfig:
    """Uniform sites in the unit square with the benchmark's capacity rule."""
    if not 0 < n_incumbent <= n_eligible < d:
        raise ValueError("need 0 < incumbents <= eligible < d")
    law = law or DemandLaw("uniform", 50.0, 150.0)
    coords = rng.uniform(0.0, 1.0, (d, 2))
    sites = rng.permutation(d)
    eligible = np.zeros(d, dtype=int)
    eligible[sites[:n_eligible]] = 1
    incumbent = np.zeros(d, dtype=int)
    incumbent[sites[:n_incumbent]] = 1
    cap = np.where(eligible == 1, law.hi * (d - n_eligible) / n_incumbent, 0.0)
    cfg = FacilityConfig(coords, eligible, incumbent, max_new, cap, np.full(d, open_cost), -5.0, law, seed=seed)
    if perturbed:
        C, V = perturbation_matrices(cfg, rng)
        cfg = replace(cfg, C=C, V=V)
    return cfg


def load_coordinates(path: str) -> np.ndarray:
    """Read an (id, x, y) CSV, with or without a header row, ordered by id."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(rec[0]), float(rec[1]), float(rec[2])))
            except ValueError:
                continue  # header
    rows.sort()
    return np.array([[x, y] for _, x, y in rows])


def transport_cost(cfg: FacilityConfig, x, demand) -> float:
    """Direct transportation LP on the raw data, independent of the matrix assembly."""
    d = cfg.d
    open_cap = cfg.cap * np.clip(np.asarray(x, dtype=float) + cfg.incumbent, 0, 1)
    full = np.zeros(d)
    full[cfg.demand_sites] = demand
    dist = cfg.distances()
    cost = dist.reshape(-1)
    if cfg.C is not None:
        cost = cost + np.asarray(cfg.C) @ np.asarray(demand, dtype=float)
    A_ub, b_ub = [], []
    for j in range(d):
        a = np.zeros(d * d)
        a[[pair_index(i, j, d) for i in range(d)]] = -1.0
        A_ub.append(a)
        b_ub.append(-full[j])
    for i in range(d):
        a = np.zeros(d * d)
        a[i * d : (i + 1) * d] = 1.0
        A_ub.append(a)
        b_ub.append(open_cap[i])
    res = linprog(cost, A_ub=np.array(A_ub), b_ub=np.array(b_ub), bounds=[(0, None)] * (d * d), method="highs")
    if res.status != 0:
        raise RuntimeError(res.message)
    return float(res.fun)
