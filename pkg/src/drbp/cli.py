"""Command line: drbp gen|solve|gap|sweep|oos.

Instances are drbp-v1 JSON files. Facility instances carry their generator
config and in-sample draws under ``meta`` so sweeps and out-of-sample runs
can rebuild them. Tables go out as CSV with a header row; reports as JSON.
Failures exit non-zero with an error object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import experiments as ex
from .cuts import DEFAULT_BIG_M
from .engine import DEFAULT_EPS
from .facility import (
    FacilityConfig,
    ambiguity_from_samples,
    eight_site_config,
    random_config,
    sample_demands,
    to_bilevel,
)
from .model import MomentAmbiguity, Support, dump_problem, load_json, toy_instance

LAWS = {
    "in_sample": None,
    "misspecified_uniform": ex.MISSPECIFIED_UNIFORM,
    "truncated_normal": ex.MISSPECIFIED_NORMAL,
}


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _facility(meta: dict) -> FacilityConfig:
    if "facility" not in meta:
        raise ValueError("this command needs a facility instance (see 'drbp gen')")
    return FacilityConfig.from_dict(meta["facility"])


def _ambiguity(amb: MomentAmbiguity | None, args) -> MomentAmbiguity:
    if amb is None:
        raise ValueError("instance file has no ambiguity block")
    return amb.with_gamma(args.gamma1, args.gamma2)


def cmd_gen(args) -> int:
    if args.kind == "toy":
        inst = toy_instance()
        amb = MomentAmbiguity(np.array([3.0]), np.array([[1.0]]), args.gamma1 or 0.0, args.gamma2 or 1.0, Support.box([1.0], [5.0]))
        _emit(json.dumps(dump_problem(inst, amb, {"kind": "toy", "seed": args.seed}), indent=1), args.out)
        return 0
    if args.kind == "eight":
        cfg = eight_site_config(lower=args.lower, seed=args.seed)
    else:
        rng = np.random.default_rng(args.seed)
        cfg = random_config(args.d, args.eligible, args.incumbent, args.nb, args.open_cost, rng, perturbed=args.perturbed, seed=args.seed)
    samples = sample_demands(cfg, args.samples, np.random.default_rng(args.seed))
    g1 = 0.0 if args.gamma1 is None else args.gamma1
    g2 = 1.0 if args.gamma2 is None else args.gamma2
    amb = ambiguity_from_samples(cfg, samples, g1, g2)
    meta = {"kind": args.kind, "seed": args.seed, "facility": cfg.to_dict(), "samples": samples.tolist()}
    _emit(json.dumps(dump_problem(to_bilevel(cfg), amb, meta), indent=1), args.out)
    return 0


def cmd_solve(args) -> int:
    inst, amb, meta = load_json(args.instance)
    amb = _ambiguity(amb, args)
    rep = ex.solve(inst, amb, args.method, args.eps, args.bigM, scenarios=meta.get("samples"), seed=args.seed)
    doc = rep.to_dict()
    doc["config"] = {"instance": args.instance, "eps": args.eps, "bigM": args.bigM, "ambiguity": amb.to_dict(), "meta": meta}
    _emit(json.dumps(doc, indent=1) + "\n", args.out)
    return 0


def cmd_gap(args) -> int:
    inst, amb, meta = load_json(args.instance)
    amb = _ambiguity(amb, args)
    points = np.asarray(meta.get("samples", []), dtype=float).reshape(-1, amb.k)
    if args.extra > 0:
        cfg = _facility(meta)
        extra = sample_demands(cfg, args.extra, np.random.default_rng([args.seed, 1]))
        points = np.vstack([points, extra])
    records, _ = ex.gap_experiment(inst, amb, points, args.methods.split(","), args.eps, args.bigM)
    rows = [dict(r.row(), gamma1=amb.gamma1, gamma2=amb.gamma2, seed=args.seed) for r in records]
    _emit(_csv(rows, ["method", "gamma1", "gamma2", "v_approx", "v_dis", "gap_percent", "seed"]), args.out)
    return 0


def cmd_sweep(args) -> int:
    _, _, meta = load_json(args.instance)
    cfg = _facility(meta)
    perturbed = cfg.C is not None
    default = ex.SWEEP_PERTURBED if perturbed else ex.SWEEP_CV_ZERO
    g1s = _floats(args.gamma1s) if args.gamma1s else list(default[0])
    g2s = _floats(args.gamma2s) if args.gamma2s else list(default[1])
    lowers = _floats(args.lowers) if args.lowers else None
    rows = ex.sweep(cfg, g1s, g2s, lowers, args.method, args.samples, args.seed, args.eps, args.bigM)
    for r in rows:
        r["seed"] = args.seed
    cols = ["index", "setting", "gamma1", "gamma2", "lower", "method", "profit", "value", "x", "iterations", "status", "seed"]
    _emit(_csv(rows, cols), args.out)
    return 0


def cmd_oos(args) -> int:
    _, _, meta = load_json(args.instance)
    cfg = _facility(meta)
    x = [int(c) for c in args.x.replace(",", "")]
    law = LAWS[args.law]
    rows = ex.out_of_sample(cfg, x, law, args.n, args.reps, args.seed)
    for r in rows:
        r["x"] = "".join(str(v) for v in x)
        r["seed"] = args.seed
    _emit(_csv(rows, ["replication", "x", "law", "lo", "hi", "n", "expected_profit", "std", "seed"]), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drbp", description="Distributionally robust bilevel facility experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, instance=True):
        if instance:
            sp.add_argument("instance", help="drbp-v1 JSON instance")
        sp.add_argument("--gamma1", type=float, default=None)
        sp.add_argument("--gamma2", type=float, default=None)
        sp.add_argument("--eps", type=float, default=DEFAULT_EPS)
        sp.add_argument("--bigM", type=float, default=DEFAULT_BIG_M)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None, help="output file (default stdout)")

    g = sub.add_parser("gen", help="write an instance file")
    common(g, instance=False)
    g.add_argument("--kind", choices=("eight", "random", "toy"), default="eight")
    g.add_argument("--lower", type=float, default=30.0, help="support lower bound (eight)")
    g.add_argument("--samples", type=int, default=10)
    g.add_argument("--d", type=int, default=6)
    g.add_argument("--eligible", type=int, default=3)
    g.add_argument("--incumbent", type=int, default=1)
    g.add_argument("--nb", type=int, default=2)
    g.add_argument("--open-cost", type=float, default=100.0)
    g.add_argument("--perturbed", action="store_true", help="random C and V")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve one instance")
    common(s)
    s.add_argument("--method", choices=ex.METHODS, default="sdp")
    s.set_defaults(func=cmd_solve)

    gp = sub.add_parser("gap", help="approximation gaps against the exact scenario model")
    common(gp)
    gp.add_argument("--methods", default="sdp,iacop")
    gp.add_argument("--extra", type=int, default=10, help="fresh scenarios added to the in-sample draws")
    gp.set_defaults(func=cmd_gap)

    sw = sub.add_parser("sweep", help="profits over a gamma and support grid")
    common(sw)
    sw.add_argument("--method", choices=ex.METHODS, default="sdp")
    sw.add_argument("--gamma1s", default=None)
    sw.add_argument("--gamma2s", default=None)
    sw.add_argument("--lowers", default=None)
    sw.add_argument("--samples", type=int, default=10)
    sw.set_defaults(func=cmd_sweep)

    o = sub.add_parser("oos", help="out-of-sample profit of a fixed decision")
    common(o)
    o.add_argument("--x", required=True, help="leader decision, e.g. 00110000")
    o.add_argument("--law", choices=tuple(LAWS), default="in_sample")
    o.add_argument("--n", type=int, default=5000)
    o.add_argument("--reps", type=int, default=10)
    o.set_defaults(func=cmd_oos)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # reported as JSON for scripted callers
        json.dump({"error": type(exc).__name__, "message": str(exc), "command": args.command}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
