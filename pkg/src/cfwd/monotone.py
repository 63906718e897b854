"""Monotone step functions, partitions and mass-weighted projections.

A step function on [0, 1) is stored by its interior breakpoints ``q`` and its
values ``x``: value ``x[i]`` holds on ``[q[i-1], q[i])`` with ``q[-1] = 0`` and
``q[n-1] = 1``.  Evaluation at ``u = 1`` returns the last value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from cfwd._kernels import pava

DEFAULT_TOL = 1e-9
DEFAULT_GRID = 4096


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


def _check_breakpoints(q: np.ndarray) -> None:
    if not np.all(np.isfinite(q)):
        raise ValueError("breakpoints must be finite")
    if q.size and (q[0] <= 0.0 or q[-1] >= 1.0):
        raise ValueError("breakpoints must lie strictly inside (0, 1)")
    if np.any(np.diff(q) <= 0.0):
        raise ValueError("breakpoints must be strictly increasing")


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous step function on [0, 1] in canonical form.

    Adjacent cells carrying exactly equal values are merged on construction,
    so the representation is unique.  Values need not be monotone here; use
    :func:`make_step_function` for validated elements of the monotone cone.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        q = _frozen(self.breakpoints)
        x = _frozen(self.values)
        if x.size != q.size + 1:
            raise ValueError(f"need len(values) == len(breakpoints) + 1, got {x.size} and {q.size}")
        if not np.all(np.isfinite(x)):
            raise ValueError("values must be finite")
        _check_breakpoints(q)
        keep = x[1:] != x[:-1]
        if not np.all(keep):
            q = _frozen(q[keep])
            x = _frozen(np.concatenate([x[:1], x[1:][keep]]))
        object.__setattr__(self, "breakpoints", q)
        object.__setattr__(self, "values", x)

    # -- structure -----------------------------------------------------
    @classmethod
    def constant(cls, c: float) -> StepFunction:
        return cls(np.empty(0), [c])

    @property
    def n_steps(self) -> int:
        """Number of constancy cells, written ``#g`` in the notes."""
        return int(self.values.size)

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([[0.0], self.breakpoints, [1.0]])

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.values) > 0.0))

    def decompose(self) -> tuple[np.ndarray, np.ndarray]:
        return self.breakpoints.copy(), self.values.copy()

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        idx = np.searchsorted(self.breakpoints, u, side="right")
        return self.values[idx]

    def __repr__(self) -> str:
        return f"StepFunction(breakpoints={self.breakpoints.tolist()}, values={self.values.tolist()})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, StepFunction):
            return NotImplemented
        return np.array_equal(self.breakpoints, other.breakpoints) and np.array_equal(self.values, other.values)

    __hash__ = None

    # -- integrals -----------------------------------------------------
    def integral(self) -> float:
        return float(np.dot(self.lengths, self.values))

    def antiderivative(self) -> tuple[np.ndarray, np.ndarray]:
        """Knots of u -> int_0^u g, exact under linear interpolation."""
        return self.edges, np.concatenate([[0.0], np.cumsum(self.lengths * self.values)])

    def interval_integrals(self, a, b) -> np.ndarray:
        """Vectorised int_a^b g for arrays of endpoints."""
        knots, cum = self.antiderivative()
        return np.interp(b, knots, cum) - np.interp(a, knots, cum)

    # -- arithmetic ----------------------------------------------------
    def _combine(self, other, op) -> StepFunction:
        if np.isscalar(other):
            return StepFunction(self.breakpoints, op(self.values, float(other)))
        edges, gv, hv, _ = common_grid(self, other)
        return StepFunction(edges[1:-1], op(gv, hv))

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        if np.isscalar(other):
            return StepFunction(self.breakpoints, self.values * float(other))
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return StepFunction(self.breakpoints, -self.values)


def make_step_function(q: Sequence[float], x: Sequence[float]) -> StepFunction:
    """Validated constructor for a monotone step function."""
    q = np.asarray(q, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != q.size + 1:
        raise ValueError(f"need len(x) == len(q) + 1, got {x.size} and {q.size}")
    _check_breakpoints(q)
    if np.any(np.diff(x) < 0.0):
        raise ValueError("values must be non-decreasing")
    return StepFunction(q, x)


def step_from_function(func: Callable, resolution: int = DEFAULT_GRID) -> StepFunction:
    """Sample ``func`` at cell midpoints of a uniform grid."""
    k = np.arange(resolution)
    mids = (k + 0.5) / resolution
    return StepFunction(k[1:] / resolution, np.asarray(func(mids), dtype=float))


def common_grid(g: StepFunction, h: StepFunction):
    """Merged cells of two step functions: (edges, g values, h values, lengths)."""
    edges = np.union1d(g.edges, h.edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    return edges, g(mids), h(mids), np.diff(edges)


def inner(g: StepFunction, h: StepFunction) -> float:
    """Exact L2[0, 1] inner product."""
    _, gv, hv, w = common_grid(g, h)
    return float(np.sum(w * gv * hv))


def norm_p(g: StepFunction, p: float = 2.0) -> float:
    if np.isinf(p):
        return float(np.max(np.abs(g.values)))
    return float(np.sum(g.lengths * np.abs(g.values) ** p) ** (1.0 / p))


def as_step(h, resolution: int = DEFAULT_GRID) -> StepFunction:
    if isinstance(h, StepFunction):
        return h
    if np.isscalar(h):
        return StepFunction.constant(float(h))
    return step_from_function(h, resolution)


def pr_step(g: StepFunction, h, resolution: int = DEFAULT_GRID) -> StepFunction:
    """Conditional expectation of ``h`` given sigma(g), for monotone ``g``.

    Non-step ``h`` is first sampled on a uniform grid of ``resolution`` cells,
    which costs an O(1/resolution) error for Lipschitz ``h``.
    """
    h = as_step(h, resolution)
    edges = g.edges
    means = h.interval_integrals(edges[:-1], edges[1:]) / np.diff(edges)
    return StepFunction(g.breakpoints, means)


def is_xi_measurable(g: StepFunction, xi: StepFunction, atol: float = 1e-12) -> bool:
    """True iff g is constant wherever xi is, i.e. every jump of g is a jump of xi."""
    gq = g.breakpoints
    if gq.size == 0:
        return True
    xq = xi.breakpoints
    if xq.size == 0:
        return False
    pos = np.searchsorted(xq, gq)
    lo = np.clip(pos - 1, 0, xq.size - 1)
    hi = np.clip(pos, 0, xq.size - 1)
    near = np.minimum(np.abs(xq[lo] - gq), np.abs(xq[hi] - gq))
    return bool(np.all(near <= atol))


# --------------------------------------------------------------------------
# particle-level objects


@dataclass(frozen=True)
class MassVector:
    values: np.ndarray

    def __post_init__(self):
        m = _frozen(self.values)
        if m.size == 0 or np.any(~np.isfinite(m)) or np.any(m <= 0.0):
            raise ValueError("masses must be positive and finite")
        if abs(m.sum() - 1.0) > 1e-12:
            raise ValueError(f"masses must sum to 1, got {m.sum()!r}")
        object.__setattr__(self, "values", m)

    @classmethod
    def uniform(cls, n: int) -> MassVector:
        return cls(np.full(n, 1.0 / n))

    def __len__(self):
        return self.values.size

    @property
    def cumulative(self) -> np.ndarray:
        """Cell edges u_0 = 0 < u_1 < ... < u_n = 1 in mass coordinates."""
        c = np.concatenate([[0.0], np.cumsum(self.values)])
        c[-1] = 1.0
        return c


def masses_of(m) -> np.ndarray:
    return m.values if isinstance(m, MassVector) else MassVector(m).values


@dataclass(frozen=True)
class Partition:
    """Ordered blocks of consecutive indices, stored by block start indices."""

    n: int
    starts: tuple

    def __post_init__(self):
        s = tuple(int(v) for v in self.starts)
        if self.n < 1 or not s or s[0] != 0 or any(b <= a for a, b in zip(s, s[1:])) or s[-1] >= self.n:
            raise ValueError(f"invalid partition starts {s} for n={self.n}")
        object.__setattr__(self, "starts", s)

    @classmethod
    def from_blocks(cls, blocks) -> Partition:
        blocks = [list(b) for b in blocks]
        flat = [i for b in blocks for i in b]
        if flat != list(range(len(flat))):
            raise ValueError("blocks must be consecutive, disjoint and cover 0..n-1 in order")
        if any(not b for b in blocks):
            raise ValueError("empty block")
        return cls(len(flat), tuple(b[0] for b in blocks))

    @classmethod
    def singletons(cls, n: int) -> Partition:
        return cls(n, tuple(range(n)))

    @classmethod
    def whole(cls, n: int) -> Partition:
        return cls(n, (0,))

    def __len__(self):
        return len(self.starts)

    @property
    def stops(self) -> tuple:
        return self.starts[1:] + (self.n,)

    @property
    def blocks(self) -> list:
        return [tuple(range(a, b)) for a, b in zip(self.starts, self.stops)]

    def labels(self) -> np.ndarray:
        lab = np.zeros(self.n, dtype=np.int64)
        lab[list(self.starts[1:])] = 1
        return np.cumsum(lab)

    def block_masses(self, m) -> np.ndarray:
        return np.bincount(self.labels(), weights=masses_of(m), minlength=len(self))

    def mass_boundaries(self, m) -> np.ndarray:
        """Interior block boundaries in mass coordinates."""
        return np.cumsum(self.block_masses(m))[:-1]

    def boundary(self) -> list:
        """Partitions obtained by merging one pair of adjacent blocks."""
        return [Partition(self.n, self.starts[:k] + self.starts[k + 1:]) for k in range(1, len(self))]


def partition_of(x, tol: float = DEFAULT_TOL) -> Partition:
    """Maximal runs of neighbours with gaps <= tol (chained)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    gaps = np.diff(x)
    if np.any(gaps < 0.0):
        raise ValueError("positions must be ordered")
    return Partition(x.size, (0,) + tuple(int(i) + 1 for i in np.flatnonzero(gaps > tol)))


def project_mass(theta: Partition, m, v) -> np.ndarray:
    """Replace each coordinate by the mass-weighted mean over its block."""
    m = masses_of(m)
    v = np.asarray(v, dtype=float)
    if not (v.size == m.size == theta.n):
        raise ValueError("dimension mismatch")
    lab = theta.labels()
    mb = np.bincount(lab, weights=m)
    return (np.bincount(lab, weights=m * v) / mb)[lab]


def noise_map(theta: Partition, m, w, dt: float) -> np.ndarray:
    """Shared block increments sqrt(dt) * sum sqrt(m_i) w_i / m_block."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    m = masses_of(m)
    w = np.asarray(w, dtype=float)
    if not (w.size == m.size == theta.n):
        raise ValueError("dimension mismatch")
    lab = theta.labels()
    mb = np.bincount(lab, weights=m)
    return (np.sqrt(dt) * np.bincount(lab, weights=np.sqrt(m) * w) / mb)[lab]


def weighted_isotonic_projection(x, m, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, Partition]:
    """Pool-adjacent-violators projection onto the ordered cone, m-weighted."""
    x = np.ascontiguousarray(x, dtype=float)
    m = np.ascontiguousarray(masses_of(m) if isinstance(m, MassVector) else m, dtype=float)
    if x.shape != m.shape:
        raise ValueError("dimension mismatch")
    y = np.empty_like(x)
    pava(x, m, y)
    return y, partition_of(y, tol)


@dataclass(frozen=True)
class ParticleState:
    positions: np.ndarray
    masses: np.ndarray
    partition: Partition
    time: float = 0.0

    @classmethod
    def from_positions(cls, x, m, tol: float = DEFAULT_TOL, time: float = 0.0) -> ParticleState:
        m = masses_of(m)
        x = _frozen(x)
        if x.size != m.size:
            raise ValueError("dimension mismatch")
        if time < 0:
            raise ValueError("time must be nonnegative")
        return cls(x, _frozen(m), partition_of(x, tol), float(time))

    @property
    def n(self) -> int:
        return self.positions.size

    def as_step_function(self) -> StepFunction:
        """The quantile function u -> x_i on the i-th mass cell."""
        u = np.cumsum(self.masses)[:-1]
        return StepFunction(u, self.positions)
