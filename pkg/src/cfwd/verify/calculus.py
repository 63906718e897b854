"""Gradient and second-order operators for cylinder test functions."""

from __future__ import annotations

import numpy as np

from cfwd.monotone import StepFunction, inner, norm_p, pr_step
from cfwd.testfunctions import TestFunctionFC, random_fc, random_step
from cfwd.verify.stats import ToleranceReport


def _parts(U: TestFunctionFC, g: StepFunction):
    y, s = U.features(g)
    u, du, ddu = U.u.derivatives(y)
    ph, ph1, ph2 = (float(v) for v in U.phi(s))
    return y, s, float(u), du, ddu, ph, ph1, ph2


def _combo(coeffs, funcs, g: StepFunction) -> StepFunction:
    out = 0.0 * g
    for c, f in zip(coeffs, funcs):
        out = out + f * float(c)
    return out


def grad_full(U: TestFunctionFC, g: StepFunction) -> StepFunction:
    """L2 gradient: phi * sum_j d_j u h_j + 2 u phi' g."""
    _, _, u, du, _, ph, ph1, _ = _parts(U, g)
    return _combo(ph * du, U.h, g) + g * (2.0 * u * ph1)


def grad_D(U: TestFunctionFC, g: StepFunction) -> StepFunction:
    """Projected gradient: phi * sum_j d_j u pr_g h_j + 2 u phi' g (sigma(g)-measurable)."""
    _, _, u, du, _, ph, ph1, _ = _parts(U, g)
    proj = [pr_step(g, h) for h in U.h]
    out = _combo(ph * du, proj, g) + g * (2.0 * u * ph1)
    return out


def l0(U: TestFunctionFC, g: StepFunction) -> float:
    """Second-order part of the generator (without the xi drift), times two."""
    y, s, u, du, ddu, ph, ph1, ph2 = _parts(U, g)
    proj = [pr_step(g, h) for h in U.h]
    m = len(proj)
    gram = np.array([[inner(proj[i], proj[j]) for j in range(m)] for i in range(m)]).reshape(m, m)
    hess_term = ph * float(np.sum(ddu * gram)) if m else 0.0
    # <pr_g h_j, g> = <h_j, g> = y_j
    cross = 4.0 * ph1 * float(np.dot(du, y)) if m else 0.0
    return hess_term + u * (4.0 * ph2 * s + 2.0 * ph1 * g.n_steps) + cross


def boundary_drift(U: TestFunctionFC, g: StepFunction, xi: StepFunction) -> float:
    """<grad U - D U, xi> = phi * sum_j d_j u <h_j, xi - pr_g xi>."""
    _, _, _, du, _, ph, _, _ = _parts(U, g)
    if not U.h:
        return 0.0
    resid = xi - pr_step(g, xi)
    return ph * float(sum(c * inner(h, resid) for c, h in zip(du, U.h)))


def generator_L(U: TestFunctionFC, g: StepFunction, xi: StepFunction) -> float:
    return 0.5 * (l0(U, g) + boundary_drift(U, g, xi))


def directional_fd(U: TestFunctionFC, g: StepFunction, f: StepFunction, eps: float = 1e-4) -> float:
    """Central difference of U along pr_g f."""
    d = pr_step(g, f)
    return (U(g + d * eps) - U(g - d * eps)) / (2.0 * eps)


def gradient_consistency(rng: np.random.Generator, count: int = 200, eps: float = 1e-4, tol: float = 1e-5):
    """Worst relative gap between <DU(g), f> and central differences on random triples.

    The gap is measured relative to max(|<DU, f>|, ||DU|| ||pr_g f||) so that
    near-orthogonal directions do not turn roundoff into large ratios.
    """
    worst = 0.0
    measurable = True
    for _ in range(count):
        U = random_fc(rng)
        g = random_step(rng)
        g = g * float(rng.uniform(0.1, 0.9) * U.support_radius / max(norm_p(g), 1e-12))
        f = random_step(rng)
        DU = grad_D(U, g)
        measurable &= set(np.round(DU.breakpoints, 12)) <= set(np.round(g.breakpoints, 12))
        exact = inner(DU, f)
        fd = directional_fd(U, g, f, eps)
        scale = max(abs(exact), norm_p(DU) * norm_p(pr_step(g, f)), 1e-300)
        worst = max(worst, abs(fd - exact) / scale)
    return ToleranceReport("gradient vs finite differences", worst, tol, bool(worst <= tol and measurable),
                           {"count": count, "eps": eps, "sigma_g_measurable": bool(measurable)})
