"""Atomic measures on the line, the quantile map and the quadratic Wasserstein distance."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from cfwd.monotone import StepFunction, norm_p


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    positions: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        x = np.array(self.positions, dtype=float).reshape(-1)
        w = np.array(self.masses, dtype=float).reshape(-1)
        if x.size != w.size or x.size == 0:
            raise ValueError("positions and masses must be non-empty and of equal length")
        if np.any(np.diff(x) <= 0):
            raise ValueError("positions must be strictly increasing")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("masses must be positive and sum to 1")
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "masses", w)

    @classmethod
    def from_atoms(cls, positions, masses) -> AtomicMeasure:
        """Accepts unsorted positions with repeats; co-located masses are summed."""
        x = np.asarray(positions, dtype=float)
        w = np.asarray(masses, dtype=float)
        ux, inv = np.unique(x, return_inverse=True)
        return cls(ux, np.bincount(inv, weights=w))

    def __len__(self):
        return self.positions.size

    def second_moment(self) -> float:
        return float(np.sum(self.masses * self.positions**2))

    def to_json(self) -> dict:
        return {"positions": self.positions.tolist(), "masses": self.masses.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> AtomicMeasure:
        return cls(d["positions"], d["masses"])


def iota(g: StepFunction) -> AtomicMeasure:
    """Image of Lebesgue measure on [0, 1] under g."""
    return AtomicMeasure.from_atoms(g.values, g.lengths)


def iota_inv(mu: AtomicMeasure) -> StepFunction:
    """Right-continuous quantile function."""
    q = np.cumsum(mu.masses)[:-1]
    return StepFunction(q, mu.positions)


def w2_quantile(g1: StepFunction, g2: StepFunction) -> float:
    return norm_p(g1 - g2, 2.0)


def _unit_cells(mu: AtomicMeasure, max_den: int) -> tuple[np.ndarray, int]:
    fr = [Fraction(float(w)).limit_denominator(max_den) for w in mu.masses]
    if any(abs(float(f) - w) > 1e-12 for f, w in zip(fr, mu.masses)):
        raise ValueError(f"masses are not commensurable with denominator <= {max_den}")
    den = math.lcm(*(f.denominator for f in fr))
    return np.asarray(fr), den


@lru_cache(maxsize=16)
def _all_permutations(d: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(d))), dtype=np.intp)


def w2_bruteforce(mu1: AtomicMeasure, mu2: AtomicMeasure, max_den: int = 64,
                  method: str = "auto", exhaustive_limit: int = 8) -> float:
    """Transport cost between commensurable atomic measures via unit cells.

    Each measure is expanded into D equal cells; the cost is minimised over
    permutations, exhaustively when D <= ``exhaustive_limit`` and by sorted
    matching otherwise.
    """
    f1, d1 = _unit_cells(mu1, max_den)
    f2, d2 = _unit_cells(mu2, max_den)
    d = math.lcm(d1, d2)
    x = np.repeat(mu1.positions, [int(f * d) for f in f1])
    y = np.repeat(mu2.positions, [int(f * d) for f in f2])
    if method == "auto":
        method = "exhaustive" if d <= exhaustive_limit else "sorted"
    if method == "sorted":
        cost = np.sum((np.sort(x) - np.sort(y)) ** 2) / d
    elif method == "exhaustive":
        if d > 10:
            raise ValueError("exhaustive search is limited to 10 cells")
        c = (x[:, None] - y[None, :]) ** 2
        perms = _all_permutations(d)
        cost = c[np.arange(d), perms].sum(axis=1).min() / d
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(np.sqrt(max(cost, 0.0)))


def pair_observable(mu: AtomicMeasure, f) -> float:
    """<mu, f> for a scalar function f (callable or object with ``.f``)."""
    fn = getattr(f, "f", f)
    return float(np.sum(mu.masses * fn(mu.positions)))


def pair_support(mu: AtomicMeasure, f) -> float:
    """<|mu|, f>: f summed over atoms, each counted once."""
    fn = getattr(f, "f", f)
    return float(np.sum(fn(mu.positions)))
