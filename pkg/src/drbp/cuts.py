"""Affine optimality cuts on the worst-case second-stage cost."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_BIG_M = 1e6


class CutError(RuntimeError):
    """A generated cut is not tight at its generating point."""


@dataclass
class Cut:
    """nu >= u @ x + a, generated at x_hat where it equals tight_value."""

    u: np.ndarray
    a: float
    source: str
    x_hat: np.ndarray
    tight_value: float

    def __call__(self, x) -> float:
        return float(self.u @ np.asarray(x, dtype=float) + self.a)

    def to_dict(self) -> dict:
        return {
            "u": self.u.tolist(),
            "a": self.a,
            "source": self.source,
            "x_hat": self.x_hat.tolist(),
            "tight_value": self.tight_value,
        }


def pos(z):
    return np.maximum(z, 0.0)


def neg(z):
    return np.maximum(-z, 0.0)


def switching_cut(x_hat, value: float, shared, signed, big_m: float, source: str) -> Cut:
    """Cut that is tight at x_hat and penalizes every flipped coordinate.

    For coordinate i the penalty is big_m * (shared[i] + [signed[i]]^+)
    when x_hat[i] = 1 is switched off and big_m * (shared[i] + [signed[i]]^-)
    when x_hat[i] = 0 is switched on. Rewriting
    x_hat_i (1 - x_i) off_i + (1 - x_hat_i) x_i on_i as u_i x_i + const gives
    the affine form.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    shared = np.asarray(shared, dtype=float)
    signed = np.asarray(signed, dtype=float)
    off = big_m * (shared + pos(signed))
    on = big_m * (shared + neg(signed))
    u = x_hat * off - (1.0 - x_hat) * on
    a = float(value - np.sum(x_hat * off))
    cut = Cut(u=u, a=a, source=source, x_hat=x_hat.copy(), tight_value=float(value))
    check_tight(cut)
    return cut


def check_tight(cut: Cut, rel: float = 1e-5) -> None:
    gap = abs(cut(cut.x_hat) - cut.tight_value)
    if gap > rel * (1.0 + abs(cut.tight_value)):
        raise CutError(f"{cut.source} cut misses its generating value by {gap:.3e}")
