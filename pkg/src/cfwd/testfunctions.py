"""Smooth test functions with closed-form derivatives.

Scalar functions (for pairings with measures) and cylinder functions
U(g) = u(<g,h_1>, ..., <g,h_m>) * phi(||g||^2) on step functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from cfwd._kernels import bump3, sin3
from cfwd.monotone import StepFunction, inner

BANK_VERSION = "fc-bank-v1"


def bump(s, radius: float):
    """exp(1 - 1/(1 - (s/R)^2)) on |s| < R, zero outside; returns value and two derivatives."""
    s = np.asarray(s, dtype=float)
    flat = np.ascontiguousarray(s).reshape(-1)
    out = np.empty((3, flat.size))
    bump3(flat, float(radius), out[0], out[1], out[2])
    return out[0].reshape(s.shape), out[1].reshape(s.shape), out[2].reshape(s.shape)


@dataclass(frozen=True)
class ScalarFunction:
    """A scalar test function; ``derivs(x)`` returns (f, f', f'') in one pass."""

    name: str
    derivs: Callable

    def __call__(self, x):
        return self.derivs(np.asarray(x, dtype=float))[0]

    def f(self, x):
        return self.derivs(np.asarray(x, dtype=float))[0]

    def d1(self, x):
        return self.derivs(np.asarray(x, dtype=float))[1]

    def d2(self, x):
        return self.derivs(np.asarray(x, dtype=float))[2]

    def __mul__(self, other: ScalarFunction) -> ScalarFunction:
        a, b = self.derivs, other.derivs

        def prod(x):
            f, f1, f2 = a(x)
            g, g1, g2 = b(x)
            return f * g, f1 * g + f * g1, f2 * g + 2.0 * f1 * g1 + f * g2

        return ScalarFunction(f"{self.name}*{other.name}", prod)

    def renamed(self, name: str) -> ScalarFunction:
        return ScalarFunction(name, self.derivs)


def linear(c: float = 1.0) -> ScalarFunction:
    return ScalarFunction("x", lambda x: (c * x, np.full_like(x, c), np.zeros_like(x)))


def quadratic() -> ScalarFunction:
    return ScalarFunction("x^2", lambda x: (x * x, 2.0 * x, np.full_like(x, 2.0)))


def constant(c: float) -> ScalarFunction:
    return ScalarFunction(f"{c}", lambda x: (np.full_like(x, c), np.zeros_like(x), np.zeros_like(x)))


def sine(freq: float = 1.0, phase: float = 0.0) -> ScalarFunction:
    def d(x):
        flat = np.ascontiguousarray(x, dtype=float).reshape(-1)
        out = np.empty((3, flat.size))
        sin3(flat, float(freq), float(phase), out[0], out[1], out[2])
        return tuple(o.reshape(np.shape(x)) for o in out)

    return ScalarFunction(f"sin({freq}x+{phase})", d)


def bump_function(radius: float, center: float = 0.0) -> ScalarFunction:
    return ScalarFunction(f"bump({radius},{center})", lambda x: bump(x - center, radius))


def scalar_bank() -> dict[str, ScalarFunction]:
    """Versioned compactly supported smooth functions used by the martingale checks."""
    return {
        "sin_bump": (sine(1.0) * bump_function(6.0)).renamed("sin_bump"),
        "cos_bump": (sine(0.7, np.pi / 2) * bump_function(6.0)).renamed("cos_bump"),
        "bump": bump_function(4.0, 0.5).renamed("bump"),
        "quad_bump": (quadratic() * bump_function(5.0)).renamed("quad_bump"),
    }


# --------------------------------------------------------------------------
# outer functions u(y) = P(tanh(y)) with deg P <= 3


@dataclass(frozen=True)
class SquashedPoly:
    """u(y) = sum_t c_t prod_j tanh(y_j)^{E[t, j]}."""

    exponents: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        E = np.atleast_2d(np.asarray(self.exponents, dtype=np.int64))
        c = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if E.shape[0] != c.size:
            raise ValueError("one coefficient per exponent row")
        if np.any(E < 0) or np.any(E.sum(axis=1) > 3):
            raise ValueError("total degree must be <= 3")
        object.__setattr__(self, "exponents", E)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def one(cls, m: int = 0) -> SquashedPoly:
        return cls(np.zeros((1, m), dtype=np.int64), [1.0])

    @property
    def dim(self) -> int:
        return self.exponents.shape[1]

    def derivatives(self, y):
        """(u, grad u, hessian u) for y of shape (..., m)."""
        y = np.asarray(y, dtype=float)
        m = self.dim
        z = np.tanh(y)
        dz = 1.0 - z * z  # tanh'
        ddz = -2.0 * z * dz  # tanh''
        shape = y.shape[:-1]
        P = np.zeros(shape)
        dP = np.zeros(shape + (m,))
        ddP = np.zeros(shape + (m, m))
        for e, c in zip(self.exponents, self.coeffs):
            pw = [z[..., j] ** e[j] for j in range(m)]
            d1 = [e[j] * z[..., j] ** max(e[j] - 1, 0) for j in range(m)]
            d2 = [e[j] * (e[j] - 1) * z[..., j] ** max(e[j] - 2, 0) for j in range(m)]
            term = c * np.prod(pw, axis=0) if m else np.full(shape, c)
            P = P + term
            for j in range(m):
                oth = np.prod([pw[k] for k in range(m) if k != j], axis=0) if m > 1 else 1.0
                dP[..., j] += c * d1[j] * oth
                ddP[..., j, j] += c * d2[j] * oth
                for k in range(j + 1, m):
                    rest = np.prod([pw[i] for i in range(m) if i not in (j, k)], axis=0) if m > 2 else 1.0
                    v = c * d1[j] * d1[k] * rest
                    ddP[..., j, k] += v
                    ddP[..., k, j] += v
        grad = dP * dz
        hess = ddP * dz[..., :, None] * dz[..., None, :]
        idx = np.arange(m)
        hess[..., idx, idx] += dP * ddz
        return P, grad, hess


@dataclass(frozen=True)
class TestFunctionFC:
    """U(g) = u(<g,h_1>, ..., <g,h_m>) * phi(||g||^2), phi a bump of radius ``rho`` in s = ||g||^2."""

    __test__ = False

    u: SquashedPoly
    h: tuple = ()
    rho: float = 1.0
    name: str = field(default="U")

    def __post_init__(self):
        if len(self.h) != self.u.dim:
            raise ValueError("number of directions must match the arity of u")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        object.__setattr__(self, "h", tuple(self.h))

    @property
    def support_radius(self) -> float:
        """U vanishes outside the L2 ball of this radius."""
        return float(np.sqrt(self.rho))

    def phi(self, s):
        return bump(s, self.rho)

    def features(self, g: StepFunction) -> tuple[np.ndarray, float]:
        return np.array([inner(g, h) for h in self.h]), inner(g, g)

    def __call__(self, g: StepFunction) -> float:
        y, s = self.features(g)
        return float(self.u.derivatives(y)[0] * self.phi(s)[0])


def random_step(rng: np.random.Generator, max_breaks: int = 5) -> StepFunction:
    k = int(rng.integers(0, max_breaks + 1))
    q = np.sort(rng.uniform(0.02, 0.98, k))
    q = q[np.concatenate([[True], np.diff(q) > 1e-3])] if k else q
    return StepFunction(q, rng.normal(0.0, 1.0, q.size + 1))


def random_poly(rng: np.random.Generator, m: int) -> SquashedPoly:
    rows = [np.zeros(m, dtype=np.int64)]
    for _ in range(int(rng.integers(2, 6))):
        e = np.zeros(m, dtype=np.int64)
        for _ in range(int(rng.integers(1, 4))):
            e[int(rng.integers(m))] += 1
        rows.append(e)
    return SquashedPoly(np.array(rows), rng.normal(0.0, 1.0, len(rows)))


def random_fc(rng: np.random.Generator, m: int | None = None, rho: float | None = None, name: str = "U") -> TestFunctionFC:
    m = int(rng.integers(1, 4)) if m is None else m
    rho = float(rng.uniform(0.8, 2.0)) if rho is None else rho
    return TestFunctionFC(random_poly(rng, m), tuple(random_step(rng) for _ in range(m)), rho, name)


def fc_bank(max_radius: float = 1.5) -> list[tuple[TestFunctionFC, TestFunctionFC]]:
    """Ten fixed (U, V) pairs; every support lies inside the ball of radius ``max_radius``."""
    rng = np.random.default_rng(20240517)
    rmax2 = max_radius**2
    one = StepFunction.constant(1.0)
    pairs = [
        (TestFunctionFC(SquashedPoly.one(), (), rmax2, "phi"), TestFunctionFC(SquashedPoly.one(), (), 0.7 * rmax2, "psi")),
        (TestFunctionFC(SquashedPoly([[1], [2]], [1.0, 0.5]), (one,), rmax2, "mean-poly"),
         TestFunctionFC(SquashedPoly([[0], [3]], [0.3, -1.0]), (one,), 0.8 * rmax2, "mean-cubic")),
    ]
    for k in range(8):
        U = random_fc(rng, rho=float(rng.uniform(0.5, 1.0)) * rmax2, name=f"U{k}")
        V = random_fc(rng, rho=float(rng.uniform(0.5, 1.0)) * rmax2, name=f"V{k}")
        pairs.append((U, V))
    return pairs
