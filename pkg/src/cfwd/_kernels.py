"""Compiled inner loops."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def pava(x, m, out):
    """Weighted pool-adjacent-violators; writes the isotonic fit into ``out``."""
    n = x.shape[0]
    vals = np.empty(n)
    wts = np.empty(n)
    cnt = np.empty(n, np.int64)
    k = -1
    for i in range(n):
        k += 1
        vals[k] = x[i]
        wts[k] = m[i]
        cnt[k] = 1
        while k > 0 and vals[k - 1] > vals[k]:
            w = wts[k - 1] + wts[k]
            vals[k - 1] = (wts[k - 1] * vals[k - 1] + wts[k] * vals[k]) / w
            wts[k - 1] = w
            cnt[k - 1] += cnt[k]
            k -= 1
    j = 0
    for b in range(k + 1):
        for _ in range(cnt[b]):
            out[j] = vals[b]
            j += 1


@njit(cache=True, nogil=True)
def _block_end(x, i, tol):
    n = x.shape[0]
    j = i
    while j + 1 < n and x[j + 1] - x[j] <= tol:
        j += 1
    return j


@njit(cache=True, nogil=True)
def step_batch(X, W, m, sqrt_m, sig, dt, tol):
    """One Euler step plus isotonic projection, in place, for every row of X."""
    B, n = X.shape
    sdt = np.sqrt(dt)
    xp = np.empty(n)
    for b in range(B):
        x = X[b]
        i = 0
        while i < n:
            j = _block_end(x, i, tol)
            mb = 0.0
            ms = 0.0
            nz = 0.0
            for k in range(i, j + 1):
                mb += m[k]
                ms += m[k] * sig[k]
                nz += sqrt_m[k] * W[b, k]
            sbar = ms / mb
            inc = sdt * nz / mb
            for k in range(i, j + 1):
                xp[k] = x[k] + 0.5 * (sig[k] - sbar) * dt + inc
            i = j + 1
        pava(xp, m, x)
        for k in range(n):
            if not np.isfinite(x[k]):
                return b
    return -1


@njit(cache=True, nogil=True)
def tilted_step_batch(X, Z, m, sqrt_m, sig, dt, tol, target, remaining, logw):
    """Step with noise w = mu + Z, where mu steers each row towards ``target``.

    ``logw`` accumulates log(dP/dQ) = -mu.w + |mu|^2 / 2 for the original noise law.
    """
    B, n = X.shape
    sdt = np.sqrt(dt)
    xp = np.empty(n)
    w = np.empty(n)
    for b in range(B):
        x = X[b]
        acc = 0.0
        for k in range(n):
            mu = sqrt_m[k] * (target[b, k] - x[k]) * sdt / remaining
            w[k] = mu + Z[b, k]
            acc += -mu * w[k] + 0.5 * mu * mu
        logw[b] += acc
        i = 0
        while i < n:
            j = _block_end(x, i, tol)
            mb = 0.0
            ms = 0.0
            nz = 0.0
            for k in range(i, j + 1):
                mb += m[k]
                ms += m[k] * sig[k]
                nz += sqrt_m[k] * w[k]
            sbar = ms / mb
            inc = sdt * nz / mb
            for k in range(i, j + 1):
                xp[k] = x[k] + 0.5 * (sig[k] - sbar) * dt + inc
            i = j + 1
        pava(xp, m, x)


@njit(cache=True, nogil=True)
def block_stats(X, m, sig, H, tol, atoms, perp, projsq):
    """Per-row block quantities.

    atoms[b, i]   : True when particle i starts a block (atom).
    perp[b, j]    : sum_i H[j, i] (sig_i - (P sig)_i)
    projsq[b, j]  : sum_blocks (sum_{i in block} H[j, i])^2 / m_block
    """
    B, n = X.shape
    nh = H.shape[0]
    for b in range(B):
        x = X[b]
        for j in range(nh):
            perp[b, j] = 0.0
            projsq[b, j] = 0.0
        i = 0
        while i < n:
            e = _block_end(x, i, tol)
            mb = 0.0
            ms = 0.0
            for k in range(i, e + 1):
                mb += m[k]
                ms += m[k] * sig[k]
                atoms[b, k] = k == i
            sbar = ms / mb
            for j in range(nh):
                hs = 0.0
                for k in range(i, e + 1):
                    hs += H[j, k]
                    perp[b, j] += H[j, k] * (sig[k] - sbar)
                projsq[b, j] += hs * hs / mb
            i = e + 1


@njit(cache=True, nogil=True)
def bump3(s, radius, out0, out1, out2):
    """exp(1 - 1/(1 - t^2)), t = s/radius, with two derivatives in s (flat arrays)."""
    for i in range(s.size):
        t = s[i] / radius
        w = 1.0 - t * t
        if w <= 0.0:
            out0[i] = 0.0
            out1[i] = 0.0
            out2[i] = 0.0
            continue
        iw = 1.0 / w
        b = np.exp(1.0 - iw)
        k = (-2.0 / radius) * t * iw * iw
        dk = (-2.0 / (radius * radius)) * iw * iw * (1.0 + 4.0 * t * t * iw)
        out0[i] = b
        out1[i] = b * k
        out2[i] = b * (k * k + dk)


@njit(cache=True, nogil=True)
def sin3(x, freq, phase, out0, out1, out2):
    for i in range(x.size):
        a = freq * x[i] + phase
        s = np.sin(a)
        out0[i] = s
        out1[i] = freq * np.cos(a)
        out2[i] = -freq * freq * s
