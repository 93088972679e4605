"""Pessimistic distributionally robust bilevel linear programs with a binary leader."""

from .engine import SolveReport, run
from .experiments import METHODS, gap_percent, solve
from .model import (
    BilevelInstance,
    LeaderSet,
    MomentAmbiguity,
    Scenarios,
    Support,
    load_json,
    save_json,
)

__all__ = [
    "BilevelInstance",
    "LeaderSet",
    "METHODS",
    "MomentAmbiguity",
    "Scenarios",
    "SolveReport",
    "Support",
    "gap_percent",
    "load_json",
    "run",
    "save_json",
    "solve",
]
__version__ = "0.1.0"
