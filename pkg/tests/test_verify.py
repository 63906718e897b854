import math

import numpy as np
import pytest
from scipy.integrate import dblquad

from cfwd.dynamics import SimConfig, run_ensemble
from cfwd.monotone import Partition, StepFunction, inner, norm_p, pr_step
from cfwd.testfunctions import SquashedPoly, TestFunctionFC, fc_bank, random_fc, random_step, scalar_bank
from cfwd.verify.bernstein import (BernsteinPolynomial, ShiftedBernstein, affine_reproduction, bernstein_bank,
                                   convergence_report)
from cfwd.verify.calculus import directional_fd, grad_D, grad_full, gradient_consistency, l0
from cfwd.verify.ibp import check_ibp
from cfwd.verify.martingale import check_com_qv, check_martingale_f, qv_relative_error
from cfwd.verify.stats import StatReport, mean_se
from cfwd.verify.varadhan import _Face, Ball, ball_distance, estimate_log_prob, exact_log_prob_n1, varadhan_exponent
from cfwd.verify.xi_bounds import single_jump_mass, xi_bounds_suite
from cfwd.xi_measure import xi_identity
from oracles import disc_halfplane_area, log_prob_bm_quad


def test_stat_report_z():
    r = StatReport("x", 1.0, 0.5, 0.0, 10, 4.0)
    assert r.z == 2.0 and r.passed
    assert not StatReport("x", 1.0, 0.0, 0.0).passed
    assert mean_se([1.0, 3.0]) == (2.0, 1.0)


def test_gradient_consistency_small():
    rep = gradient_consistency(np.random.default_rng(0), count=40)
    assert rep.passed, rep.line()


def test_projected_gradient_is_measurable_and_directional():
    rng = np.random.default_rng(1)
    U = random_fc(rng)
    g = random_step(rng) * 0.3
    f = random_step(rng)
    DU = grad_D(U, g)
    assert set(np.round(DU.breakpoints, 12)) <= set(np.round(g.breakpoints, 12))
    # along sigma(g)-measurable directions both gradients agree
    d = pr_step(g, f)
    assert inner(DU, d) == pytest.approx(inner(grad_full(U, g), d), rel=1e-9, abs=1e-12)
    assert inner(DU, f) == pytest.approx(directional_fd(U, g, f), rel=1e-5, abs=1e-9)


def test_ibp_small_sample():
    U, V = fc_bank(1.5)[0]
    rep = check_ibp(2, U, V, xi_identity(64), 1.5, 20_000, np.random.default_rng(2))
    assert rep.passed, rep.line()
    with pytest.raises(ValueError):
        check_ibp(1, U, V, xi_identity(64), 0.1, 20_000, np.random.default_rng(2))


def test_martingale_checks_on_small_ensemble():
    cfg = SimConfig(n=4, dt=1e-3, T=0.2, xi=xi_identity(), seed=4)
    ens = run_ensemble(cfg, 400, scalar_bank())
    for f in scalar_bank():
        assert check_martingale_f(ens, f).passed
    assert check_com_qv(ens, 0.05).passed
    small = run_ensemble(cfg, 10, scalar_bank())
    with pytest.raises(ValueError):
        check_martingale_f(small, "bump")
    assert qv_relative_error([1.1, 0.0], [1.0, 0.0]) == pytest.approx(0.1)


def test_n1_closed_form_matches_quadrature():
    A, B = Ball((0.05,), 0.05), Ball((1.05,), 0.05)
    for t in (1e-1, 1e-2, 1e-3):
        assert exact_log_prob_n1(A, B, t) == pytest.approx(log_prob_bm_quad(0.0, 0.1, 1.0, 1.1, t), rel=1e-9)


def test_n1_estimator_is_unbiased():
    A, B = Ball((0.05,), 0.05), Ball((1.05,), 0.05)
    est = estimate_log_prob(A, B, 2e-3, 10, 20_000, np.random.default_rng(3))
    assert abs(est.log_p - exact_log_prob_n1(A, B, 2e-3)) < 4 * est.se_log_p


def test_n2_start_mass_uses_exact_face_areas():
    # a disc cut by a chord: closed form vs quadrature
    A = Ball((-0.02, 0.05), 0.1)
    face = _Face(Partition.singletons(2), np.array([0.5, 0.5]), (0.0, 1.0), A, np.array([-1.0, 1.0]), 1.0, 1000)
    # whitened coordinates z = sqrt(1/2) x; the cone x1 <= x2 is a half-plane at signed distance h
    h = (0.05 - (-0.02)) * math.sqrt(0.5) / math.sqrt(2)
    assert face._volume() == pytest.approx(disc_halfplane_area(0.1 * 1.0, h), rel=1e-8)


def test_varadhan_exponent_n1_report():
    A, B = Ball((0.05,), 0.05), Ball((1.05,), 0.05)
    rep = varadhan_exponent(A, B, [4e-3, 2e-3], 20_000, np.random.default_rng(4), SimConfig(n=1, dt=2e-4, T=4e-3))
    assert rep.hypothesis == pytest.approx(-0.5 * 0.9**2)
    assert rep.passed, rep.line()
    assert ball_distance(A, B, [1.0]) == pytest.approx(0.9)


def test_bernstein():
    for fn in bernstein_bank():
        rep = convergence_report(fn, 1.0, (8, 16, 32))
        assert rep.passed, rep.line()
    assert affine_reproduction(2, 16, np.random.default_rng(5)) < 1e-12
    P = ShiftedBernstein(lambda x: np.cos(x[..., 0]) - 1, 12, 1, 2.0)
    assert P(0.0) == 0.0
    B = BernsteinPolynomial(lambda x: x[..., 0] ** 2, 10, 1)
    # B_n(x^2) = x^2 + x(1-x)/n
    assert B(0.3) == pytest.approx(0.09 + 0.21 / 10, abs=1e-14)
    assert B.gradient(0.3) == pytest.approx(0.6 + 0.4 / 10, abs=1e-12)


def test_xi_bounds_suite_small():
    reps = xi_bounds_suite(xi_identity(64), 50_000, np.random.default_rng(6), (1, 2), (1.0,))
    assert all(r.passed for r in reps), [r.line() for r in reps]
    # weight q(1-q) = 1/4 times the area of {x1 <= x2, (x1^2 + x2^2) / 2 <= r^2} by quadrature
    area = dblquad(lambda x2, x1: 1.0, -math.sqrt(2), 1.0, lambda x1: max(x1, -math.sqrt(max(2 - x1 * x1, 0.0))),
                   lambda x1: math.sqrt(max(2 - x1 * x1, 0.0)))[0]
    assert single_jump_mass(1.0) == pytest.approx(0.25 * area, rel=1e-6)


def test_norm_helper_sanity():
    assert norm_p(StepFunction([0.5], [0.0, 2.0])) == pytest.approx(math.sqrt(2.0))


def _laplacian_fd(U, g, eps=1e-3):
    """Sum of second differences of U along an orthonormal basis of sigma(g)-measurable functions."""
    edges = g.edges
    total = 0.0
    for k in range(g.n_steps):
        vals = np.zeros(g.n_steps)
        vals[k] = 1.0 / np.sqrt(edges[k + 1] - edges[k])
        e = StepFunction(g.breakpoints, vals)
        total += (U(g + e * eps) - 2.0 * U(g) + U(g - e * eps)) / eps**2
    return total


def test_l0_is_the_laplacian_on_the_face():
    rng = np.random.default_rng(8)
    phi_only = TestFunctionFC(SquashedPoly.one(), (), 2.0)
    g = StepFunction([0.3, 0.6], [-0.4, 0.1, 0.5])
    s = inner(g, g)
    _, p1, p2 = (float(v) for v in phi_only.phi(s))
    assert l0(phi_only, g) == pytest.approx(4 * p2 * s + 2 * p1 * 3, rel=1e-12)
    for _ in range(20):
        U = random_fc(rng)
        g = random_step(rng)
        g = g * float(0.5 * U.support_radius / max(norm_p(g), 1e-12))
        assert l0(U, g) == pytest.approx(_laplacian_fd(U, g), rel=1e-4, abs=1e-6)
