"""Problem data for bilevel programs under moment ambiguity.

Holds the follower/leader data, the ambiguity description and a JSON
round-trip format. Everything here is plain numpy and immutable by
convention: builders never mutate the arrays they receive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog

SCHEMA_VERSION = "drbp-v1"
COV_FLOOR = 1e-8


def _as_matrix(a, rows: int, cols: int, name: str) -> np.ndarray:
    if np.size(a) != rows * cols:
        raise ValueError(f"{name}: expected shape ({rows}, {cols}), got {np.shape(a)}")
    arr = np.asarray(a, dtype=float).reshape(rows, cols)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite entries")
    return arr


def _as_vector(a, size: int, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float).reshape(-1)
    if arr.size != size:
        raise ValueError(f"{name}: expected length {size}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite entries")
    return arr


@dataclass(frozen=True)
class LeaderSet:
    """Binary vectors x in {0,1}^d with g @ x <= rhs for every stored row."""

    d: int
    constraints: tuple = ()

    def __post_init__(self):
        rows = []
        for g, rhs in self.constraints:
            rows.append((_as_vector(g, self.d, "leader row"), float(rhs)))
        object.__setattr__(self, "constraints", tuple(rows))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,) or np.any((x != 0) & (x != 1)):
            return False
        return all(g @ x <= rhs + 1e-9 for g, rhs in self.constraints)

    def enumerate(self) -> list[np.ndarray]:
        """All feasible points in ascending lexicographic order.

        Depth-first with pruning on the smallest achievable row activity,
        so sparse sets such as cardinality-bounded selections stay cheap
        even when 2^d is huge.
        """
        if not self.constraints:
            rows = np.zeros((0, self.d))
            rhs = np.zeros(0)
        else:
            rows = np.array([g for g, _ in self.constraints])
            rhs = np.array([r for _, r in self.constraints])
        # tail_min[i] = smallest activity reachable from coordinates i..d-1
        neg = np.minimum(rows, 0.0)
        tail_min = np.zeros((self.d + 1, len(rhs)))
        for i in range(self.d - 1, -1, -1):
            tail_min[i] = tail_min[i + 1] + neg[:, i]
        out: list[np.ndarray] = []
        x = np.zeros(self.d)

        def walk(i: int, activity: np.ndarray):
            if np.any(activity + tail_min[i] > rhs + 1e-9):
                return
            if i == self.d:
                out.append(x.copy())
                return
            for bit in (0.0, 1.0):
                x[i] = bit
                walk(i + 1, activity + bit * rows[:, i])
            x[i] = 0.0

        walk(0, np.zeros(len(rhs)))
        return out

    def to_dict(self) -> dict:
        return {"constraints": [{"g": g.tolist(), "rhs": rhs} for g, rhs in self.constraints]}


@dataclass(frozen=True)
class BilevelInstance:
    """Leader cost w and the follower LP min c(xi)'y s.t. A y <= b_x(xi).

    ``B`` and ``b`` hold the base term first, then one term per leader
    coordinate. The leader-adverse objective is v(xi)'y.
    """

    A: np.ndarray
    B: tuple
    b: tuple
    C: np.ndarray
    c0: np.ndarray
    V: np.ndarray
    v0: np.ndarray
    w: np.ndarray
    leader_set: LeaderSet

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        m, n = A.shape
        B = tuple(np.asarray(Bi, dtype=float) for Bi in self.B)
        if not B:
            raise ValueError("B must contain at least the base matrix")
        k = B[0].reshape(m, -1).shape[1] if B[0].size else 0
        d = len(B) - 1
        if len(self.b) != d + 1:
            raise ValueError("B and b must have the same number of terms")
        object.__setattr__(self, "A", _as_matrix(A, m, n, "A"))
        object.__setattr__(self, "B", tuple(_as_matrix(Bi, m, k, f"B[{i}]") for i, Bi in enumerate(B)))
        object.__setattr__(self, "b", tuple(_as_vector(bi, m, f"b[{i}]") for i, bi in enumerate(self.b)))
        object.__setattr__(self, "C", _as_matrix(self.C, n, k, "C"))
        object.__setattr__(self, "c0", _as_vector(self.c0, n, "c0"))
        object.__setattr__(self, "V", _as_matrix(self.V, n, k, "V"))
        object.__setattr__(self, "v0", _as_vector(self.v0, n, "v0"))
        object.__setattr__(self, "w", _as_vector(self.w, d, "w"))
        if self.leader_set.d != d:
            raise ValueError("leader set dimension does not match B/b")

    def with_follower_scale(self, scale: float) -> "BilevelInstance":
        """Follower cost multiplied by ``scale`` > 0; the follower's optimal set is unchanged."""
        if not scale > 0:
            raise ValueError("follower scale must be positive")
        return replace(self, C=self.C * scale, c0=self.c0 * scale)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def k(self) -> int:
        return self.B[0].shape[1]

    @property
    def d(self) -> int:
        return len(self.B) - 1

    def c(self, xi) -> np.ndarray:
        return self.C @ np.asarray(xi, dtype=float) + self.c0

    def v(self, xi) -> np.ndarray:
        return self.V @ np.asarray(xi, dtype=float) + self.v0

    def rhs(self, x, xi) -> np.ndarray:
        Bx, bx = assemble_bx(self, x)
        return Bx @ np.asarray(xi, dtype=float) + bx

    def to_dict(self) -> dict:
        return {
            "dims": {"d": self.d, "n": self.n, "m": self.m, "k": self.k},
            "A": self.A.tolist(),
            "B": [Bi.tolist() for Bi in self.B],
            "b": [bi.tolist() for bi in self.b],
            "C": self.C.tolist(),
            "c0": self.c0.tolist(),
            "V": self.V.tolist(),
            "v0": self.v0.tolist(),
            "w": self.w.tolist(),
            "leader": self.leader_set.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BilevelInstance":
        dims = data["dims"]
        m, n, k, d = dims["m"], dims["n"], dims["k"], dims["d"]
        leader = LeaderSet(d, tuple((r["g"], r["rhs"]) for r in data.get("leader", {}).get("constraints", [])))
        return cls(
            A=_as_matrix(data["A"], m, n, "A"),
            B=tuple(_as_matrix(Bi, m, k, "B") for Bi in data["B"]),
            b=tuple(_as_vector(bi, m, "b") for bi in data["b"]),
            C=_as_matrix(data["C"], n, k, "C"),
            c0=data["c0"],
            V=_as_matrix(data["V"], n, k, "V"),
            v0=data["v0"],
            w=data["w"] if d else np.zeros(0),
            leader_set=leader,
        )


@dataclass(frozen=True)
class Support:
    """Polyhedral support {xi : W xi >= h}."""

    W: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "h", _as_vector(self.h, W.shape[0], "h"))

    @classmethod
    def box(cls, lo, hi) -> "Support":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        lo, hi = np.broadcast_arrays(lo, hi)
        eye = np.eye(lo.size)
        return cls(np.vstack([eye, -eye]), np.concatenate([lo, -hi]))

    def contains(self, xi, tol: float = 1e-9) -> bool:
        return bool(np.all(self.W @ np.asarray(xi, dtype=float) >= self.h - tol))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate-wise min and max over the support (2k LPs)."""
        k = self.W.shape[1]
        lo, hi = np.empty(k), np.empty(k)
        for j in range(k):
            for sign, store in ((1.0, lo), (-1.0, hi)):
                cost = np.zeros(k)
                cost[j] = sign
                res = linprog(cost, A_ub=-self.W, b_ub=-self.h, bounds=[(None, None)] * k, method="highs")
                if res.status != 0:
                    raise ValueError(f"support is unbounded or empty along coordinate {j}")
                store[j] = sign * res.fun
        return lo, hi

    def chebyshev(self) -> tuple[np.ndarray, float]:
        """Center and radius of the largest inscribed ball."""
        k = self.W.shape[1]
        norms = np.linalg.norm(self.W, axis=1)
        cost = np.zeros(k + 1)
        cost[-1] = -1.0
        res = linprog(
            cost,
            A_ub=np.hstack([-self.W, norms[:, None]]),
            b_ub=-self.h,
            bounds=[(None, None)] * k + [(0, None)],
            method="highs",
        )
        if res.status != 0:
            raise ValueError("Chebyshev-center LP failed: support empty or unbounded")
        return res.x[:k], float(res.x[-1])

    def to_dict(self) -> dict:
        return {"W": self.W.tolist(), "h": self.h.tolist()}


@dataclass(frozen=True)
class Scenarios:
    """Finite support given as an N x k array of points."""

    xi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xi", np.atleast_2d(np.asarray(self.xi, dtype=float)))

    def to_dict(self) -> dict:
        return {"xi": self.xi.tolist()}


@dataclass(frozen=True)
class MomentAmbiguity:
    """Mean/covariance ambiguity with radii gamma1 (mean) and gamma2 (covariance)."""

    mu0: np.ndarray
    sigma0: np.ndarray
    gamma1: float
    gamma2: float
    domain: Support | Scenarios
    validate: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        k = mu0.size
        sigma = _as_matrix(self.sigma0, k, k, "sigma0")
        if not np.allclose(sigma, sigma.T, atol=1e-10 * (1 + np.abs(sigma).max())):
            raise ValueError("sigma0 must be symmetric")
        sigma = regularize_covariance(0.5 * (sigma + sigma.T))
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "sigma0", sigma)
        object.__setattr__(self, "gamma1", float(self.gamma1))
        object.__setattr__(self, "gamma2", float(self.gamma2))
        if self.gamma1 < 0 or self.gamma2 < 1:
            raise ValueError("need gamma1 >= 0 and gamma2 >= 1")
        dim = self.domain.W.shape[1] if isinstance(self.domain, Support) else self.domain.xi.shape[1]
        if dim != k:
            raise ValueError("domain dimension does not match mu0")
        if self.validate and isinstance(self.domain, Support):
            self.domain.bounds()
            _, radius = self.domain.chebyshev()
            if radius <= 1e-12:
                raise ValueError("support is not full-dimensional")

    @property
    def k(self) -> int:
        return self.mu0.size

    @property
    def sigma_sqrt(self) -> np.ndarray:
        return psd_sqrt(self.sigma0)

    @property
    def second_moment(self) -> np.ndarray:
        """gamma2 * sigma0 + mu0 mu0', the matrix weighting Q in the moment row."""
        return self.gamma2 * self.sigma0 + np.outer(self.mu0, self.mu0)

    def with_gamma(self, gamma1: float | None = None, gamma2: float | None = None) -> "MomentAmbiguity":
        return MomentAmbiguity(
            self.mu0,
            self.sigma0,
            self.gamma1 if gamma1 is None else gamma1,
            self.gamma2 if gamma2 is None else gamma2,
            self.domain,
            validate=False,
        )

    def with_domain(self, domain: Support | Scenarios) -> "MomentAmbiguity":
        return MomentAmbiguity(self.mu0, self.sigma0, self.gamma1, self.gamma2, domain)

    def to_dict(self) -> dict:
        out = {
            "mu0": self.mu0.tolist(),
            "sigma0": self.sigma0.tolist(),
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
        }
        if isinstance(self.domain, Support):
            out["support"] = self.domain.to_dict()
        else:
            out["scenarios"] = self.domain.to_dict()["xi"]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "MomentAmbiguity":
        if "support" in data:
            domain = Support(data["support"]["W"], data["support"]["h"])
        elif "scenarios" in data:
            domain = Scenarios(data["scenarios"])
        else:
            raise ValueError("ambiguity block needs 'support' or 'scenarios'")
        return cls(data["mu0"], data["sigma0"], data["gamma1"], data["gamma2"], domain)


@dataclass(frozen=True)
class MomentPoint:
    """A (mean, second moment) pair."""

    mu: np.ndarray
    Omega: np.ndarray

    def to_dict(self) -> dict:
        return {"mu": np.asarray(self.mu).tolist(), "Omega": np.asarray(self.Omega).tolist()}


def psd_sqrt(S: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def regularize_covariance(S: np.ndarray) -> np.ndarray:
    """Lift the spectrum so the smallest eigenvalue clears 1e-8 * trace / k."""
    k = S.shape[0]
    floor = COV_FLOOR * max(np.trace(S), 0.0) / k
    if floor <= 0.0:
        floor = COV_FLOOR
    if np.linalg.eigvalsh(S).min() < floor:
        S = S + floor * np.eye(k)
    return S


def assemble_bx(inst: BilevelInstance, x) -> tuple[np.ndarray, np.ndarray]:
    """Right-hand-side data (B_x, b_x0) at leader decision x."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != inst.d:
        raise ValueError(f"leader decision has length {x.size}, expected {inst.d}")
    Bx = inst.B[0].copy()
    bx = inst.b[0].copy()
    for i, xi in enumerate(x):
        if xi != 0.0:
            Bx += xi * inst.B[i + 1]
            bx += xi * inst.b[i + 1]
    return Bx, bx


def estimate_moments(samples) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and unbiased covariance, with the eigenvalue floor applied."""
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ValueError("need at least two samples")
    mu = X.mean(axis=0)
    sigma = np.cov(X, rowvar=False, ddof=1).reshape(mu.size, mu.size)
    return mu, regularize_covariance(sigma)


@dataclass
class RecourseReport:
    passed: bool
    bounded: bool
    feasible: bool
    witnesses: list = field(default_factory=list)


def check_recourse(inst: BilevelInstance, amb: MomentAmbiguity | None = None, samples: int = 20, seed: int = 0) -> RecourseReport:
    """Check that {y: Ay <= 0} = {0} and that the follower is feasible on samples.

    Sample points come from the scenario list, or uniformly from the
    bounding box of the support filtered by membership.
    """
    witnesses = []
    n = inst.n
    bounded = True
    for j in range(n):
        for sign in (1.0, -1.0):
            cost = np.zeros(n)
            cost[j] = -sign
            res = linprog(cost, A_ub=inst.A, b_ub=np.zeros(inst.m), bounds=[(None, None)] * n, method="highs")
            if res.status == 3 or (res.status == 0 and -res.fun > 1e-9):
                bounded = False
                ray = np.zeros(n)
                ray[j] = sign
                witnesses.append({"kind": "unbounded", "direction": ray.tolist()})
    feasible = True
    points = _recourse_points(amb, samples, seed) if amb is not None else np.zeros((1, inst.k))
    for x in inst.leader_set.enumerate():
        for xi in points:
            res = linprog(np.zeros(n), A_ub=inst.A, b_ub=inst.rhs(x, xi), bounds=[(None, None)] * n, method="highs")
            if res.status == 2:
                feasible = False
                witnesses.append({"kind": "infeasible", "x": x.tolist(), "xi": xi.tolist()})
    return RecourseReport(bounded and feasible, bounded, feasible, witnesses)


def _recourse_points(amb: MomentAmbiguity, count: int, seed: int) -> np.ndarray:
    if isinstance(amb.domain, Scenarios):
        return amb.domain.xi
    lo, hi = amb.domain.bounds()
    rng = np.random.default_rng(seed)
    pts = [lo, hi] if amb.domain.contains(lo) and amb.domain.contains(hi) else []
    tries = 0
    while len(pts) < count and tries < 100 * count:
        cand = rng.uniform(lo, hi)
        tries += 1
        if amb.domain.contains(cand):
            pts.append(cand)
    return np.array(pts).reshape(-1, amb.k)


def dump_problem(inst: BilevelInstance, amb: MomentAmbiguity | None = None, meta: dict | None = None) -> dict:
    doc = {"version": SCHEMA_VERSION, **inst.to_dict()}
    if amb is not None:
        doc["ambiguity"] = amb.to_dict()
    if meta:
        doc["meta"] = meta
    return doc


def load_problem(doc: dict) -> tuple[BilevelInstance, MomentAmbiguity | None, dict]:
    if doc.get("version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported document version {doc.get('version')!r}")
    inst = BilevelInstance.from_dict(doc)
    amb = MomentAmbiguity.from_dict(doc["ambiguity"]) if "ambiguity" in doc else None
    return inst, amb, doc.get("meta", {})


def save_json(path: str, inst: BilevelInstance, amb: MomentAmbiguity | None = None, meta: dict | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(dump_problem(inst, amb, meta), fh, indent=1)


def load_json(path: str) -> tuple[BilevelInstance, MomentAmbiguity | None, dict]:
    with open(path) as fh:
        return load_problem(json.load(fh))


def toy_instance(c0: float = 1.0, upper: float = 10.0) -> BilevelInstance:
    """One-dimensional follower min c0*y s.t. xi <= y <= upper, scored by -2y."""
    return BilevelInstance(
        A=[[-1.0], [1.0]],
        B=(np.array([[-1.0], [0.0]]),),
        b=(np.array([0.0, upper]),),
        C=np.zeros((1, 1)),
        c0=[c0],
        V=np.zeros((1, 1)),
        v0=[-2.0],
        w=np.zeros(0),
        leader_set=LeaderSet(0),
    )
