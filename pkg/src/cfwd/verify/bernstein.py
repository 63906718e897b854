"""Tensor-product Bernstein polynomials and their shifted variant on [-M, M]^k."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import binom

from cfwd.verify.stats import ToleranceReport


def _basis(x, n: int):
    """Bernstein basis b_{n,j}(x) and its derivative, each of shape (P, n+1)."""
    x = np.clip(np.asarray(x, dtype=float).reshape(-1, 1), 0.0, 1.0)
    j = np.arange(n + 1)
    b = binom.pmf(j, n, x)
    if n == 0:
        return b, np.zeros_like(b)
    lo = binom.pmf(j - 1, n - 1, x)
    hi = binom.pmf(j, n - 1, x)
    return b, n * (lo - hi)


def _contract(T: np.ndarray, mats: list) -> np.ndarray:
    """sum over j of T[j_1..j_k] prod_i mats[i][p, j_i], for every point p."""
    out = np.einsum("pa,a...->p...", mats[0], T)
    for M in mats[1:]:
        out = np.einsum("pa,pa...->p...", M, out)
    return out


class BernsteinPolynomial:
    """B_n(f; x) on [0, 1]^k, built from the values of f on the grid j/n."""

    def __init__(self, f: Callable, n: int, k: int = 1):
        if n < 1 or k < 1:
            raise ValueError("need n >= 1 and k >= 1")
        self.n, self.k = n, k
        nodes = np.arange(n + 1) / n
        pts = np.array(list(itertools.product(nodes, repeat=k)))
        self.coef = np.asarray(f(pts), dtype=float).reshape((n + 1,) * k)

    def _points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.k == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        return x.reshape(-1, self.k)

    def __call__(self, x):
        shape = np.shape(x) if self.k == 1 else np.shape(x)[:-1]
        pts = self._points(x)
        mats = [_basis(pts[:, i], self.n)[0] for i in range(self.k)]
        return _contract(self.coef, mats).reshape(shape)

    def gradient(self, x) -> np.ndarray:
        """Partial derivatives, shape (..., k)."""
        shape = (np.shape(x) if self.k == 1 else np.shape(x)[:-1]) + (self.k,)
        pts = self._points(x)
        pairs = [_basis(pts[:, i], self.n) for i in range(self.k)]
        cols = []
        for i in range(self.k):
            mats = [pairs[a][1] if a == i else pairs[a][0] for a in range(self.k)]
            cols.append(_contract(self.coef, mats))
        return np.stack(cols, axis=-1).reshape(shape)


class ShiftedBernstein:
    """P_n^M(f; x) = B_n(f_M; x/(2M) + 1/2) - B_n(f_M; 1/2) with f_M(y) = f(2My - M).

    Vanishes at the origin by construction and approximates f on [-M, M]^k
    when f(0) = 0.
    """

    def __init__(self, f: Callable, n: int, k: int = 1, M: float = 1.0):
        if not M > 0:
            raise ValueError("M must be positive")
        self.M = float(M)
        self.k = k
        self.base = BernsteinPolynomial(lambda y: f(2.0 * self.M * y - self.M), n, k)
        self.offset = float(self.base(np.full(k, 0.5) if k > 1 else 0.5))

    def _y(self, x):
        return np.asarray(x, dtype=float) / (2.0 * self.M) + 0.5

    def __call__(self, x):
        return self.base(self._y(x)) - self.offset

    def gradient(self, x):
        return self.base.gradient(self._y(x)) / (2.0 * self.M)


def bernstein(f: Callable, k: int, n: int, M: float | None = None):
    """B_n(f; .) when M is None, otherwise P_n^M(f; .)."""
    return BernsteinPolynomial(f, n, k) if M is None else ShiftedBernstein(f, n, k, M)


@dataclass(frozen=True)
class BankFunction:
    name: str
    k: int
    f: Callable
    grad: Callable


def bernstein_bank() -> list[BankFunction]:
    """C^1 functions vanishing at the origin, with analytic gradients."""
    return [
        BankFunction("x^2", 1, lambda x: x[..., 0] ** 2, lambda x: 2.0 * x),
        BankFunction("sin", 1, lambda x: np.sin(x[..., 0]), lambda x: np.cos(x)),
        BankFunction("exp-1", 1, lambda x: np.expm1(x[..., 0]), lambda x: np.exp(x)),
        BankFunction("x1*sin(x2)+x1^2", 2,
                     lambda x: x[..., 0] * np.sin(x[..., 1]) + x[..., 0] ** 2,
                     lambda x: np.stack([np.sin(x[..., 1]) + 2 * x[..., 0], x[..., 0] * np.cos(x[..., 1])], -1)),
    ]


def _grid(k: int, M: float, points: int) -> np.ndarray:
    g = np.linspace(-M, M, points)
    return np.array(list(itertools.product(g, repeat=k)))


def convergence_report(fn: BankFunction, M: float = 1.0, n_list=(8, 16, 32, 64), points: int | None = None
                       ) -> ToleranceReport:
    """Sup errors of P_n^M and its gradient over a grid; passes if both strictly decrease in n."""
    points = points or (401 if fn.k == 1 else 41)
    X = _grid(fn.k, M, points)
    fx = fn.f(X)
    gx = fn.grad(X).reshape(X.shape)
    val, der, at0 = [], [], []
    for n in n_list:
        P = ShiftedBernstein(fn.f, n, fn.k, M)
        pts = X[:, 0] if fn.k == 1 else X
        val.append(float(np.max(np.abs(P(pts) - fx))))
        der.append(float(np.max(np.abs(P.gradient(pts).reshape(X.shape) - gx))))
        at0.append(float(P(0.0 if fn.k == 1 else np.zeros(fn.k))))
    dec = all(b < a for a, b in zip(val, val[1:])) and all(b < a for a, b in zip(der, der[1:]))
    zero = all(v == 0.0 for v in at0)
    # value: final sup error; tolerance: the sup error at the first n, which it must undercut
    return ToleranceReport(f"bernstein {fn.name}", max(val[-1], der[-1]), max(val[0], der[0]), bool(dec and zero),
                           {"n": list(n_list), "sup_error": val, "sup_grad_error": der, "value_at_0": at0,
                            "M": M, "strictly_decreasing": dec})


def affine_reproduction(k: int, n: int, rng: np.random.Generator, trials: int = 5) -> float:
    """Largest deviation of B_n from random affine functions on a random point set."""
    worst = 0.0
    for _ in range(trials):
        a = rng.normal(size=k)
        c = float(rng.normal())
        B = BernsteinPolynomial(lambda x: x @ a + c, n, k)
        pts = rng.random((200, k))
        worst = max(worst, float(np.max(np.abs(B(pts[:, 0] if k == 1 else pts) - (pts @ a + c)))))
    return worst
