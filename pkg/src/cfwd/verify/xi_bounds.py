"""Monte-Carlo masses of Xi_n on balls against the analytic bound and a 2-D oracle."""

from __future__ import annotations

import math

import numpy as np

from cfwd.monotone import StepFunction
from cfwd.verify.stats import StatReport, ToleranceReport
from cfwd.xi_measure import estimate_xi_n_mass, xi_n_ball_bound


def single_jump_xi(at: float = 0.5, height: float = 1.0) -> StepFunction:
    return StepFunction([at], [0.0, height])


def single_jump_mass(r: float, at: float = 0.5, height: float = 1.0) -> float:
    """Xi_2(B_r) for xi with one jump: height * q(1-q) * area{x1 <= x2, q x1^2 + (1-q) x2^2 <= r^2}.

    The ellipse has area pi r^2 / sqrt(q(1-q)) and the diagonal halves it.
    """
    w = at * (1.0 - at)
    return height * w * 0.5 * math.pi * r * r / math.sqrt(w)


def check_bound(n: int, r: float, xi: StepFunction, N: int, rng: np.random.Generator) -> ToleranceReport:
    """The 99% CI of the estimate must reach below the bound."""
    est = estimate_xi_n_mass(n, r, xi, N, rng, level=0.99)
    bound = xi_n_ball_bound(n, r, xi)
    lo = est.ci[0]
    return ToleranceReport(f"Xi_{n}(B_{r:g}) <= bound", lo, bound, bool(lo <= bound),
                           {"estimate": est.estimate, "ci99": list(est.ci), "acceptance": est.acceptance,
                            "samples": N, "radius": r})


def check_single_jump(r: float, N: int, rng: np.random.Generator, threshold: float = 3.0) -> StatReport:
    est = estimate_xi_n_mass(2, r, single_jump_xi(), N, rng)
    return StatReport(f"Xi_2(B_{r:g}) single jump", est.estimate, est.se, single_jump_mass(r), N, threshold,
                      {"acceptance": est.acceptance})


def xi_bounds_suite(xi: StepFunction, N: int, rng: np.random.Generator, n_list=(1, 2, 3, 4),
                    r_list=(0.5, 1.0, 2.0)) -> list:
    reports = [check_bound(n, r, xi, N, rng) for n in n_list for r in r_list]
    reports += [check_single_jump(r, N, rng) for r in r_list]
    return reports
