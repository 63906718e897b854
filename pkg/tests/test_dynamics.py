import numpy as np
import pytest

from cfwd.dynamics import (SimConfig, drift, empirical_measure, ensemble_from_trajectories, run_ensemble, simulate,
                           step, sticky_band)
from cfwd.monotone import ParticleState
from cfwd.testfunctions import scalar_bank
from cfwd.xi_measure import xi_constant, xi_identity
from oracles import sticky_occupation, sticky_occupation_mean


def test_config_defaults_and_validation():
    cfg = SimConfig(n=3, dt=1e-3, T=0.1)
    assert cfg.merge_tol == pytest.approx(sticky_band(1e-3)) == pytest.approx(0.05)
    assert cfg.masses == pytest.approx((1 / 3,) * 3)
    assert SimConfig(n=2, dt=1e-3, T=1, merge_tol=1e-9).merge_tol == 1e-9
    for bad in (dict(n=0), dict(dt=0.0), dict(sigma=(1.0, 0.0, 2.0)), dict(masses=(0.5, 0.5)),
                dict(x0=(1.0, 0.0, 0.0)), dict(record_every=0)):
        with pytest.raises(ValueError):
            SimConfig(**{**dict(n=3, dt=1e-3, T=0.1), **bad})


def test_single_particle_is_brownian():
    tr = simulate(SimConfig(n=1, dt=1e-4, T=1.0, seed=5))
    qv = np.sum(np.diff(tr.positions[:, 0]) ** 2)
    assert qv == pytest.approx(1.0, rel=0.05)


def test_start_from_delta_is_one_atom():
    tr = simulate(SimConfig(n=6, dt=1e-3, T=1.0, xi=xi_identity(), seed=1))
    assert tr.atom_count[0] == 1
    assert tr.atom_count.max() > 1
    assert np.all(np.diff(tr.positions, axis=1) >= 0)


def test_constant_xi_never_fragments():
    tr = simulate(SimConfig(n=5, dt=1e-3, T=0.5, xi=xi_constant(0.0), seed=2))
    assert np.all(tr.atom_count == 1)
    assert np.allclose(tr.positions - tr.positions[:, :1], 0.0)


def test_seeded_runs_are_reproducible():
    cfg = SimConfig(n=4, dt=1e-3, T=0.05, xi=xi_identity(), seed=9)
    assert np.array_equal(simulate(cfg).positions, simulate(cfg).positions)
    a = run_ensemble(cfg, 300, scalar_bank(), chunk=100, threads=1)
    b = run_ensemble(cfg, 300, scalar_bank(), chunk=100, threads=3)
    assert np.array_equal(a.f["bump"]["M"], b.f["bump"]["M"])


def test_drift_and_step():
    st = ParticleState.from_positions([0.0, 0.0, 1.0], [0.25, 0.25, 0.5])
    d = drift(st, [0.0, 1.0, 2.0])
    assert np.allclose(d, [-0.25, 0.25, 0.0])
    cfg = SimConfig(n=3, dt=1e-3, T=1, sigma=(0.0, 1.0, 2.0), x0=(0.0, 0.0, 1.0))
    new = step(st, 1e-3, np.random.default_rng(0), cfg)
    assert new.time == pytest.approx(1e-3) and np.all(np.diff(new.positions) >= 0)
    mu = empirical_measure(st)
    assert list(mu.masses) == [0.5, 0.5] and list(mu.positions) == [0.0, 1.0]


def test_trajectory_statistics_match_streaming_ensemble_law():
    cfg = SimConfig(n=3, dt=1e-3, T=0.2, xi=xi_identity(), seed=0)
    trajs = [simulate(SimConfig(**{**cfg.__dict__, "seed": s})) for s in range(60)]
    ens = ensemble_from_trajectories(trajs, cfg.varsigma, cfg.dt, scalar_bank())
    assert np.mean(ens.com_qv()) == pytest.approx(0.2, rel=0.1)
    assert set(ens.f) == set(scalar_bank())


def test_occupation_oracle_agrees_with_path_sampler():
    paths = sticky_occupation(0.25, 0.5, 2000, 2000, np.random.default_rng(0))
    assert abs(paths.mean() - sticky_occupation_mean(0.25, 0.5)) < 4 * paths.std() / np.sqrt(paths.size)


def test_occupation_time_matches_sticky_oracle():
    # pair (1/2, 1/2) with sigma (0, 1): half the gap is sticky BM with drift 1/4 at zero
    exact = sticky_occupation_mean(0.25, 0.5)
    coarse = run_ensemble(SimConfig(n=2, dt=1e-3, T=0.5, sigma=(0.0, 1.0), seed=3), 2000).merged_fraction
    fine = run_ensemble(SimConfig(n=2, dt=6.25e-5, T=0.5, sigma=(0.0, 1.0), seed=4), 2000).merged_fraction
    assert abs(fine.mean() - exact) < 0.015
    assert abs(coarse.mean() - exact) < 0.04
    # a vanishing merge tolerance gives reflection instead of stickiness
    tiny = run_ensemble(SimConfig(n=2, dt=2.5e-4, T=0.5, sigma=(0.0, 1.0), merge_tol=1e-9, seed=3), 500)
    assert tiny.merged_fraction.mean() < 0.1
