"""The sigma-finite reference measure Xi on monotone step functions.

For a step function ``xi`` with jumps ``a_k`` at ``s_k``, the n-th stratum
Xi_n charges step functions with n cells whose interior breakpoints are
(n-1)-tuples of jump locations.  A tuple q carries weight
``prod a(q_i) * prod (q_i - q_{i-1})`` and the values x range over the
ordered cone with Lebesgue measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from cfwd.monotone import MassVector, Partition, StepFunction, make_step_function, masses_of


class NullStratumError(ValueError):
    """The requested stratum carries no mass for this xi."""


@dataclass(frozen=True)
class XiSpec:
    xi: StepFunction
    max_n: int = 3
    radius: float = 1.0

    def __post_init__(self):
        if not isinstance(self.xi, StepFunction) or np.any(np.diff(self.xi.values) < 0):
            raise ValueError("xi must be a non-decreasing step function")
        if self.max_n < 1:
            raise ValueError("max_n must be >= 1")
        if not self.radius > 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class WeightedSample:
    g: StepFunction
    n: int
    weight: float = 1.0


def xi_identity(resolution: int = 1024) -> StepFunction:
    """Uniform step approximation of u -> u (values at cell midpoints)."""
    k = np.arange(resolution)
    return make_step_function(k[1:] / resolution, (k + 0.5) / resolution)


def xi_constant(value: float = 0.0) -> StepFunction:
    return StepFunction.constant(value)


def xi_range(xi: StepFunction) -> float:
    return float(xi.values[-1] - xi.values[0])


def jumps(xi: StepFunction) -> tuple[np.ndarray, np.ndarray]:
    """Jump locations and heights."""
    return xi.breakpoints, np.diff(xi.values)


def c_theta(theta: Partition, m, sigma) -> float:
    """Weight of the face E_theta: prod of block masses times gaps of sigma across blocks."""
    m = masses_of(m)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size != m.size or theta.n != m.size:
        raise ValueError("dimension mismatch")
    if np.any(np.diff(sigma) <= 0):
        raise ValueError("sigma must be strictly increasing")
    ends = np.array(theta.stops[:-1], dtype=np.int64) - 1
    return float(np.prod(theta.block_masses(m)) * np.prod(sigma[ends + 1] - sigma[ends]))


def mu_xi_density(q) -> float:
    """prod (q_i - q_{i-1}) over the cells cut out by the breakpoints q."""
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.size and (q[0] <= 0 or q[-1] >= 1 or np.any(np.diff(q) <= 0)):
        raise ValueError("breakpoints must be strictly increasing inside (0, 1)")
    return float(np.prod(np.diff(np.concatenate([[0.0], q, [1.0]]))))


def unit_ball_volume(n: int) -> float:
    return math.exp(0.5 * n * math.log(math.pi) - gammaln(0.5 * n + 1))


def xi_n_ball_bound(n: int, r: float, xi: StepFunction) -> float:
    """Upper bound 2 pi^{n/2} r^n (xi(1)-xi(0))^{n-1} / (n! Gamma(n/2))."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return 2.0 * r
    span = xi_range(xi)
    return 2.0 * math.pi ** (n / 2) * r**n * span ** (n - 1) / (math.factorial(n) * math.gamma(n / 2))


class BreakpointSampler:
    """Exact sampler for breakpoint tuples with chain weights.

    Tuples j_1 < ... < j_{n-1} of jump indices are weighted by
    ``prod a_j * prod (s_{j_i} - s_{j_{i-1}})**power`` with s_{j_0}=0, s_{j_n}=1.
    A backward recursion gives the total weight and the forward transition laws.
    """

    def __init__(self, xi: StepFunction, n: int, power: float):
        s, a = jumps(xi)
        self.n = n
        self.power = power
        self.locations = s
        if n == 1:
            self.total = 1.0
            return
        if s.size < n - 1:
            raise NullStratumError(f"xi has {s.size + 1} distinct values; stratum {n} is null")
        gap = s[None, :] - s[:, None]
        mat = np.where(gap > 0, a[None, :] * np.where(gap > 0, gap, 1.0) ** power, 0.0)
        L = n - 1
        beta = [None] * L
        beta[L - 1] = (1.0 - s) ** power
        for k in range(L - 2, -1, -1):
            beta[k] = mat @ beta[k + 1]
        first = a * s**power * beta[0]
        self.total = float(first.sum())
        if not self.total > 0:
            raise NullStratumError(f"stratum {n} has zero weight")
        c = np.cumsum(first)
        self._first = c / c[-1]
        self._trans = []
        rows = np.arange(s.size, dtype=float)[:, None]
        for k in range(L - 1):
            cum = np.cumsum(mat * beta[k + 1][None, :], axis=1)
            tot = cum[:, -1:].copy()
            tot[tot == 0] = 1.0
            self._trans.append(((cum / tot) + rows).ravel())

    def sample_indices(self, size: int, rng: np.random.Generator) -> np.ndarray:
        L = self.n - 1
        idx = np.empty((size, L), dtype=np.intp)
        if L == 0:
            return idx
        J = self.locations.size
        idx[:, 0] = np.minimum(np.searchsorted(self._first, 1.0 - rng.random(size)), J - 1)
        for k in range(L - 1):
            row = idx[:, k]
            tgt = row + (1.0 - rng.random(size))
            col = np.searchsorted(self._trans[k], tgt, side="left") - row * J
            idx[:, k + 1] = np.clip(col, row + 1, J - 1)
        return idx

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Breakpoint tuples as rows of cell edges (0, q_1, ..., q_{n-1}, 1)."""
        q = self.locations[self.sample_indices(size, rng)]
        edges = np.empty((size, self.n + 1))
        edges[:, 0] = 0.0
        edges[:, -1] = 1.0
        edges[:, 1:-1] = q
        return edges


@lru_cache(maxsize=32)
def _cached_sampler(q_bytes: bytes, x_bytes: bytes, n: int, power: float) -> BreakpointSampler:
    xi = StepFunction(np.frombuffer(q_bytes), np.frombuffer(x_bytes))
    return BreakpointSampler(xi, n, power)


def breakpoint_sampler(xi: StepFunction, n: int, power: float = 0.5) -> BreakpointSampler:
    return _cached_sampler(xi.breakpoints.tobytes(), xi.values.tobytes(), n, float(power))


def stratum_weight(xi: StepFunction, n: int) -> float:
    """Total breakpoint weight sum_q prod a * prod (q_i - q_{i-1})."""
    return breakpoint_sampler(xi, n, 1.0).total


class ProposalBatch(NamedTuple):
    edges: np.ndarray  # (N, n+1)
    x: np.ndarray  # (N, n)
    inside: np.ndarray  # bool (N,): in the cone and the ball
    scale: float  # integral of f over Xi_n|B_r = scale * mean(f * inside)


def propose(n: int, r: float, xi: StepFunction, size: int, rng: np.random.Generator,
            proposal: str = "ellipsoid") -> ProposalBatch:
    """Draws (q, x) whose accepted part is distributed as Xi_n restricted to B_r."""
    sampler = breakpoint_sampler(xi, n, 0.5)
    edges = sampler.sample(size, rng)
    sd = np.sqrt(np.diff(edges, axis=1))
    if proposal == "ellipsoid":
        z = rng.standard_normal((size, n))
        z *= (rng.random(size) ** (1.0 / n) / np.linalg.norm(z, axis=1))[:, None]
        x = r * z / sd
        inside = np.all(np.diff(x, axis=1) >= 0, axis=1)
        scale = sampler.total * unit_ball_volume(n) * r**n
    elif proposal == "box":
        x = r * (2.0 * rng.random((size, n)) - 1.0) / sd
        inside = np.all(np.diff(x, axis=1) >= 0, axis=1) & (np.sum((x * sd) ** 2, axis=1) <= r * r)
        scale = sampler.total * (2.0 * r) ** n
    else:
        raise ValueError(f"unknown proposal {proposal!r}")
    return ProposalBatch(edges, x, inside, scale)


def sample_xi_n_ball_arrays(n: int, r: float, xi: StepFunction, size: int, rng: np.random.Generator,
                            proposal: str = "ellipsoid", max_proposals: int | None = None):
    """Exact draws from normalized Xi_n|B_r as arrays; also returns the acceptance rate."""
    if max_proposals is None:
        max_proposals = max(10**7, 1000 * size)
    got_e, got_x = [], []
    tried = accepted = 0
    batch = max(1024, 2 * size)
    while accepted < size:
        if tried >= max_proposals:
            rate = accepted / max(tried, 1)
            raise RuntimeError(
                f"rejection budget of {max_proposals} proposals exhausted with {accepted}/{size} "
                f"accepted (acceptance rate {rate:.3g})")
        b = propose(n, r, xi, batch, rng, proposal)
        tried += batch
        got_e.append(b.edges[b.inside])
        got_x.append(b.x[b.inside])
        accepted += int(b.inside.sum())
        rate = accepted / tried
        if rate > 0:
            batch = int(min(max(1024, 1.2 * (size - accepted) / rate), 2_000_000))
    edges = np.concatenate(got_e)[:size]
    x = np.concatenate(got_x)[:size]
    return edges, x, accepted / tried


def sample_xi_n_ball(n: int, r: float, xi: StepFunction, rng: np.random.Generator, size: int = 1,
                     proposal: str = "ellipsoid") -> list[WeightedSample]:
    """Exact samples from Xi_n restricted to the ball of radius r, normalized.

    Draws are exact, so every sample carries unit weight.
    """
    edges, x, _ = sample_xi_n_ball_arrays(n, r, xi, size, rng, proposal)
    return [WeightedSample(StepFunction(e[1:-1], v), n, 1.0) for e, v in zip(edges, x)]


class MassEstimate(NamedTuple):
    estimate: float
    ci: tuple
    se: float
    acceptance: float
    samples: int


def estimate_xi_n_mass(n: int, r: float, xi: StepFunction, N: int, rng: np.random.Generator,
                       proposal: str = "ellipsoid", level: float = 0.95) -> MassEstimate:
    """Hit-or-miss estimate of Xi_n(B_r) with a normal-approximation CI."""
    from scipy.stats import norm

    if N < 1000:
        raise ValueError("need N >= 1000 samples")
    zq = float(norm.ppf(0.5 + level / 2))
    hits = 0
    scale = None
    done = 0
    while done < N:
        m = min(N - done, 1_000_000)
        b = propose(n, r, xi, m, rng, proposal)
        hits += int(b.inside.sum())
        scale = b.scale
        done += m
    p = hits / N
    se = scale * math.sqrt(max(p * (1 - p), 1.0 / N) / N)
    est = scale * p
    return MassEstimate(est, (est - zq * se, est + zq * se), se, p, N)


def sample_xi_ball(spec: XiSpec, size: int, rng: np.random.Generator, n_mass: int = 20_000):
    """Draws from normalized sum_{n <= max_n} Xi_n|B_r (strata chosen by estimated mass)."""
    masses = []
    for n in range(1, spec.max_n + 1):
        try:
            masses.append(estimate_xi_n_mass(n, spec.radius, spec.xi, n_mass, rng).estimate)
        except NullStratumError:
            masses.append(0.0)
    p = np.asarray(masses) / np.sum(masses)
    counts = rng.multinomial(size, p)
    out = []
    for n, c in enumerate(counts, start=1):
        if c:
            out.extend(sample_xi_n_ball(n, spec.radius, spec.xi, rng, int(c)))
    return out, np.asarray(masses)


__all__ = [
    "XiSpec", "WeightedSample", "NullStratumError", "MassVector", "xi_identity", "xi_constant",
    "c_theta", "mu_xi_density", "xi_n_ball_bound", "sample_xi_n_ball", "estimate_xi_n_mass",
    "BreakpointSampler", "propose", "stratum_weight",
]
