import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from drbp.facility import ambiguity_from_samples, eight_site_config, random_config, sample_demands, to_bilevel  # noqa: E402
from drbp.model import MomentAmbiguity, Scenarios, Support, toy_instance  # noqa: E402


def toy_ambiguity(gamma1=0.0, gamma2=1.0, lo=1.0, hi=5.0, mu0=3.0, var=1.0):
    """One-dimensional moment set around mu0 on the interval [lo, hi]."""
    return MomentAmbiguity(np.array([mu0]), np.array([[var]]), gamma1, gamma2, Support.box([lo], [hi]))


def toy_scenarios(points, mu0, var=1.0, gamma1=0.0, gamma2=1.0):
    pts = np.asarray(points, dtype=float).reshape(-1, 1)
    return MomentAmbiguity(np.array([mu0]), np.array([[var]]), gamma1, gamma2, Scenarios(pts))


def small_facility(seed, perturbed=False, d=6, eligible=4, incumbent=1, max_new=2, open_cost=100.0):
    """Random facility instance with |X| = 1 + 3 + 3 = 7 and its in-sample ambiguity."""
    rng = np.random.default_rng(seed)
    cfg = random_config(d, eligible, incumbent, max_new, open_cost, rng, perturbed=perturbed, seed=seed)
    samples = sample_demands(cfg, 10, rng)
    return cfg, to_bilevel(cfg), samples


@pytest.fixture(scope="session")
def toy():
    return toy_instance()


@pytest.fixture(scope="session")
def eight_site():
    cfg = eight_site_config(seed=0)
    samples = sample_demands(cfg, 10, np.random.default_rng(0))
    return cfg, to_bilevel(cfg), samples, ambiguity_from_samples(cfg, samples, 0.0, 1.0)
