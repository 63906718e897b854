"""Monte-Carlo check of the integration-by-parts identity for Xi.

Per stratum n the identity reads

    int <DU, DV> dXi_n + int L0U * V dXi_n + int V <grad U - DU, xi> dXi_{n-1} = 0,

with the boundary term living one stratum below.  Summing over n <= N
therefore pairs the bulk terms of strata 1..N with boundary terms of strata
1..N-1.
"""

from __future__ import annotations

import math

import numpy as np

from cfwd.monotone import StepFunction, inner
from cfwd.testfunctions import TestFunctionFC, bump
from cfwd.verify.stats import StatReport
from cfwd.xi_measure import NullStratumError, propose


class _Batch:
    """Per-sample quantities of one cylinder function on stratum samples."""

    def __init__(self, U: TestFunctionFC, edges: np.ndarray, x: np.ndarray, xi_cells: np.ndarray, xi_h: np.ndarray):
        lengths = np.diff(edges, axis=1)
        n = x.shape[1]
        m = len(U.h)
        N = x.shape[0]
        s = np.sum(x * x * lengths, axis=1)
        if m:
            Hc = np.stack([h.interval_integrals(edges[:, :-1], edges[:, 1:]) for h in U.h])
            y = np.einsum("jni,ni->nj", Hc, x)
        else:
            Hc = np.zeros((0, N, n))
            y = np.zeros((N, 0))
        u, du, ddu = U.u.derivatives(y)
        ph, ph1, ph2 = bump(s, U.rho)
        avg = Hc / lengths[None]
        self.value = u * ph
        self.cells = ph[:, None] * np.einsum("nj,jni->ni", du, avg) + (2.0 * u * ph1)[:, None] * x
        gram = np.einsum("jni,kni->njk", Hc, avg)
        self.l0 = (ph * np.einsum("njk,njk->n", ddu, gram) + u * (4.0 * ph2 * s + 2.0 * ph1 * n)
                   + 4.0 * ph1 * np.einsum("nj,nj->n", du, y))
        # <h_j, xi - pr_g xi>
        resid = xi_h[None, :] - np.einsum("jni,ni->nj", Hc, xi_cells / lengths) if m else np.zeros((N, 0))
        self.boundary = ph * np.einsum("nj,nj->n", du, resid)
        self.lengths = lengths


def stratum_integrands(U: TestFunctionFC, V: TestFunctionFC, xi: StepFunction, edges, x):
    """Bulk integrand <DU,DV> + L0U V and boundary integrand V <grad U - DU, xi>."""
    xi_cells = xi.interval_integrals(edges[:, :-1], edges[:, 1:])
    xi_h = np.array([inner(h, xi) for h in U.h])
    bu = _Batch(U, edges, x, xi_cells, xi_h)
    bv = _Batch(V, edges, x, xi_cells, np.array([inner(h, xi) for h in V.h]))
    bulk = np.sum(bu.lengths * bu.cells * bv.cells, axis=1) + bu.l0 * bv.value
    return bulk, bv.value * bu.boundary, np.sum(bu.lengths * bu.cells * bv.cells, axis=1)


def check_ibp(n: int, U: TestFunctionFC, V: TestFunctionFC, xi: StepFunction, r: float, N: int,
              rng: np.random.Generator, threshold: float = 4.0, proposal: str = "ellipsoid",
              chunk: int = 250_000, name: str | None = None) -> StatReport:
    """z-score of the truncated identity over strata 1..n against zero."""
    if max(U.support_radius, V.support_radius) > r * (1 + 1e-12):
        raise ValueError("supports of U and V must lie inside the sampling ball")
    if N < 1000:
        raise ValueError("need at least 1000 samples per stratum for a confidence interval")
    total = 0.0
    var = 0.0
    per = {}
    dirichlet = 0.0
    for k in range(1, n + 1):
        try:
            scale = propose(k, r, xi, 1, np.random.default_rng(0), proposal).scale
        except NullStratumError:
            per[k] = {"bulk": 0.0, "boundary": 0.0, "null": True}
            continue
        s1 = s2 = sb = sd = 0.0
        done = 0
        while done < N:
            c = min(chunk, N - done)
            b = propose(k, r, xi, c, rng, proposal)
            bulk, bnd, dd = stratum_integrands(U, V, xi, b.edges, b.x)
            keep = b.inside
            f = np.where(keep, bulk + (bnd if k < n else 0.0), 0.0)
            s1 += float(np.sum(f))
            s2 += float(np.sum(f * f))
            sb += float(np.sum(np.where(keep, bnd, 0.0)))
            sd += float(np.sum(np.where(keep, dd, 0.0)))
            done += c
        mean = s1 / N
        v = max(s2 / N - mean * mean, 0.0) * N / (N - 1)
        total += scale * mean
        var += scale**2 * v / N
        dirichlet += scale * sd / N
        per[k] = {"combined": scale * mean, "boundary": scale * sb / N, "dirichlet": scale * sd / N}
    label = name or f"ibp[{U.name},{V.name}] n<={n}"
    return StatReport(label, total, math.sqrt(var), 0.0, N * n, threshold,
                      {"strata": per, "radius": r, "dirichlet_integral": dirichlet})
