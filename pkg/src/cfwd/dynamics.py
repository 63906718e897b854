"""Euler-Maruyama integration of the coalescing-fragmentating particle system.

Each step moves every block of tied particles by a shared Gaussian increment
of variance dt / m_block plus the drift (sigma - P sigma) / 2, then restores
the order with the mass-weighted isotonic projection.  Crossing neighbours
are thereby merged; a block splits again once its members' drifts separate
them by more than the merge tolerance.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from cfwd._kernels import block_stats, step_batch
from cfwd.monotone import MassVector, ParticleState, StepFunction, masses_of, partition_of, project_mass
from cfwd.wasserstein import AtomicMeasure


class IntegrationError(FloatingPointError):
    pass


STICKY_BAND = 0.5


def sticky_band(dt: float) -> float:
    """Default merge tolerance 0.5 dt^(1/3).

    Tied particles must stay tied for a positive fraction of time.  With a
    tolerance far below sqrt(dt) a merged block splits on the very next step
    and the occupation time of the merged states vanishes as dt -> 0, so the
    scheme converges to reflecting instead of sticky dynamics.  A band that
    shrinks more slowly than sqrt(dt) keeps the occupation time right.
    """
    return STICKY_BAND * dt ** (1.0 / 3.0)


def sigma_from_xi(xi: StepFunction, m) -> np.ndarray:
    """Interaction values at the midpoints of the mass cells."""
    u = MassVector(masses_of(m)).cumulative
    return np.asarray(xi(0.5 * (u[:-1] + u[1:])), dtype=float)


@dataclass(frozen=True)
class SimConfig:
    n: int
    dt: float
    T: float
    masses: tuple | None = None
    sigma: tuple | None = None
    xi: StepFunction | None = None
    merge_tol: float | None = None
    seed: int = 0
    record_every: int = 1
    x0: tuple | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.merge_tol is None and self.dt > 0:
            object.__setattr__(self, "merge_tol", sticky_band(self.dt))
        if not (self.dt > 0 and self.T > 0 and self.merge_tol is not None and self.merge_tol > 0):
            raise ValueError("dt, T and merge_tol must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        m = np.full(self.n, 1.0 / self.n) if self.masses is None else masses_of(self.masses)
        if m.size != self.n:
            raise ValueError("masses must have length n")
        object.__setattr__(self, "masses", tuple(m.tolist()))
        if self.sigma is not None:
            s = np.asarray(self.sigma, dtype=float)
            if s.size != self.n:
                raise ValueError("sigma must have length n")
            if self.n > 1 and np.any(np.diff(s) <= 0):
                raise ValueError("sigma must be strictly increasing")
            object.__setattr__(self, "sigma", tuple(s.tolist()))
        x0 = np.zeros(self.n) if self.x0 is None else np.asarray(self.x0, dtype=float)
        if x0.size != self.n or np.any(np.diff(x0) < 0):
            raise ValueError("x0 must be an ordered vector of length n")
        object.__setattr__(self, "x0", tuple(x0.tolist()))

    @property
    def mass_array(self) -> np.ndarray:
        return np.asarray(self.masses)

    @property
    def varsigma(self) -> np.ndarray:
        if self.sigma is not None:
            return np.asarray(self.sigma)
        if self.xi is not None:
            return sigma_from_xi(self.xi, self.mass_array)
        return np.zeros(self.n)

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.T / self.dt - 1e-9))

    def initial_state(self) -> ParticleState:
        return ParticleState.from_positions(self.x0, self.mass_array, self.merge_tol, 0.0)


def drift(state: ParticleState, sigma) -> np.ndarray:
    """(sigma - P_theta sigma) / 2 for the current partition."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size != state.n:
        raise ValueError("dimension mismatch")
    return 0.5 * (sigma - project_mass(state.partition, state.masses, sigma))


def _advance(X: np.ndarray, W: np.ndarray, m, sqrt_m, sig, dt, tol, t: float) -> None:
    bad = step_batch(X, W, m, sqrt_m, sig, dt, tol)
    if bad >= 0:
        raise IntegrationError(f"non-finite position in row {bad} after the step ending at t={t + dt:.6g}")


def step(state: ParticleState, dt: float, rng: np.random.Generator, cfg: SimConfig) -> ParticleState:
    m = state.masses
    X = np.array(state.positions, dtype=float)[None, :]
    W = rng.standard_normal((1, state.n))
    _advance(X, W, m, np.sqrt(m), cfg.varsigma, dt, cfg.merge_tol, state.time)
    return ParticleState.from_positions(X[0], m, cfg.merge_tol, state.time + dt)


def empirical_measure(state: ParticleState) -> AtomicMeasure:
    """One atom per block, at the block's mass-weighted mean position."""
    theta = state.partition
    mb = theta.block_masses(state.masses)
    pos = np.bincount(theta.labels(), weights=state.masses * state.positions) / mb
    return AtomicMeasure.from_atoms(pos, mb)


@dataclass
class Trajectory:
    times: np.ndarray
    positions: np.ndarray  # (S, n)
    masses: np.ndarray
    merge_tol: float
    atom_count: np.ndarray
    com: np.ndarray
    pairings: dict = field(default_factory=dict)

    @property
    def states(self) -> list[ParticleState]:
        return [ParticleState.from_positions(x, self.masses, self.merge_tol, float(t))
                for t, x in zip(self.times, self.positions)]

    def boundaries(self) -> list[np.ndarray]:
        """Interior block boundaries in mass coordinates, per snapshot."""
        return [partition_of(x, self.merge_tol).mass_boundaries(self.masses) for x in self.positions]

    def measures(self) -> list[AtomicMeasure]:
        return [empirical_measure(s) for s in self.states]


def _atoms_mask(X: np.ndarray, tol: float) -> np.ndarray:
    mask = np.ones(X.shape, dtype=bool)
    mask[:, 1:] = np.diff(X, axis=1) > tol
    return mask


def simulate(cfg: SimConfig, test_functions: dict | None = None) -> Trajectory:
    """Integrate one trajectory, recording every ``record_every`` steps."""
    test_functions = test_functions or {}
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    m = cfg.mass_array
    sqrt_m = np.sqrt(m)
    sig = cfg.varsigma
    X = np.array(cfg.x0, dtype=float)[None, :]
    nsteps = cfg.n_steps
    rec_idx = list(range(0, nsteps + 1, cfg.record_every))
    if rec_idx[-1] != nsteps:
        rec_idx.append(nsteps)
    S = len(rec_idx)
    pos = np.empty((S, cfg.n))
    times = np.empty(S)
    pos[0] = X[0]
    times[0] = 0.0
    r = 1
    for k in range(1, nsteps + 1):
        W = rng.standard_normal((1, cfg.n))
        _advance(X, W, m, sqrt_m, sig, cfg.dt, cfg.merge_tol, (k - 1) * cfg.dt)
        if r < S and k == rec_idx[r]:
            pos[r] = X[0]
            times[r] = k * cfg.dt
            r += 1
    atoms = _atoms_mask(pos, cfg.merge_tol)
    pair = {name: (f.f(pos) * m).sum(axis=1) for name, f in test_functions.items()}
    return Trajectory(times, pos, m, cfg.merge_tol, atoms.sum(axis=1), pos @ m, pair)


# --------------------------------------------------------------------------
# ensembles with streaming martingale statistics


def cell_integrals(h, m) -> np.ndarray:
    """int of h over each mass cell [u_{i-1}, u_i)."""
    u = MassVector(masses_of(m)).cumulative
    if isinstance(h, StepFunction):
        return h.interval_integrals(u[:-1], u[1:])
    h = np.asarray(h, dtype=float)
    if h.size != u.size - 1:
        raise ValueError("cell integral vector has the wrong length")
    return h


class MartingaleAccumulator:
    """Streams M^f and M~^h increments for a batch of paths.

    For f: M^f increments dF - dt/2 <|mu|, f''>, realised QV sum (dM)^2 and
    the integrated QV dt <mu, f'^2>, all with left-point evaluation.
    For h with cell integrals H: d<X, h> - dt/2 sum_i H_i (sigma - P sigma)_i,
    realised QV and dt * ||pr_X h||^2.
    """

    def __init__(self, B: int, m, sig, tol: float, dt: float, fbank: dict, hbank: dict):
        self.m = np.asarray(m, dtype=float)
        self.sig = np.asarray(sig, dtype=float)
        self.tol = tol
        self.dt = dt
        self.fbank = dict(fbank)
        names = ["__com__"] + list(hbank)
        self.hnames = names
        self.H = np.ascontiguousarray(np.stack([self.m] + [cell_integrals(h, self.m) for h in hbank.values()]))
        nf, nh = len(self.fbank), len(names)
        self.Mf = np.zeros((nf, B))
        self.RQf = np.zeros((nf, B))
        self.IQf = np.zeros((nf, B))
        self.Mh = np.zeros((nh, B))
        self.RQh = np.zeros((nh, B))
        self.IQh = np.zeros((nh, B))
        self.merged_time = np.zeros(B)
        self._atoms = np.empty((B, self.m.size), dtype=np.bool_)
        self._perp = np.empty((B, nh))
        self._projsq = np.empty((B, nh))
        self._prev = None

    def _observe(self, X):
        block_stats(X, self.m, self.sig, self.H, self.tol, self._atoms, self._perp, self._projsq)
        obs = {"G": X @ self.H.T, "perp": self._perp.copy(), "projsq": self._projsq.copy(),
               "natoms": self._atoms.sum(axis=1)}
        F = np.empty((len(self.fbank), X.shape[0]))
        A2 = np.empty_like(F)
        D1 = np.empty_like(F)
        for i, f in enumerate(self.fbank.values()):
            v, v1, v2 = f.derivs(X)
            F[i] = v @ self.m
            A2[i] = np.sum(v2, axis=1, where=self._atoms)
            D1[i] = (v1 * v1) @ self.m
        obs.update(F=F, A2=A2, D1=D1)
        return obs

    def start(self, X):
        self._prev = self._observe(X)

    def update(self, X):
        p, c, dt = self._prev, self._observe(X), self.dt
        dM = c["F"] - p["F"] - 0.5 * dt * p["A2"]
        self.Mf += dM
        self.RQf += dM * dM
        self.IQf += dt * p["D1"]
        dMh = (c["G"] - p["G"] - 0.5 * dt * p["perp"]).T
        self.Mh += dMh
        self.RQh += dMh * dMh
        self.IQh += dt * p["projsq"].T
        self.merged_time += dt * (p["natoms"] < self.m.size)
        self._prev = c


@dataclass
class EnsembleResult:
    n_paths: int
    dt: float
    T: float
    f: dict  # name -> {"M", "rqv", "iqv"} arrays over paths
    h: dict
    merged_fraction: np.ndarray

    def com_qv(self) -> np.ndarray:
        return self.h["__com__"]["rqv"]


def _pack(acc: MartingaleAccumulator, fnames, hnames):
    f = {n: {"M": acc.Mf[i], "rqv": acc.RQf[i], "iqv": acc.IQf[i]} for i, n in enumerate(fnames)}
    h = {n: {"M": acc.Mh[i], "rqv": acc.RQh[i], "iqv": acc.IQh[i]} for i, n in enumerate(hnames)}
    return f, h


def _run_chunk(cfg: SimConfig, B: int, seed_seq, fbank, hbank):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    m = cfg.mass_array
    sqrt_m = np.sqrt(m)
    sig = cfg.varsigma
    X = np.tile(np.asarray(cfg.x0, dtype=float), (B, 1))
    acc = MartingaleAccumulator(B, m, sig, cfg.merge_tol, cfg.dt, fbank, hbank)
    acc.start(X)
    for k in range(cfg.n_steps):
        W = rng.standard_normal((B, cfg.n))
        _advance(X, W, m, sqrt_m, sig, cfg.dt, cfg.merge_tol, k * cfg.dt)
        acc.update(X)
    f, h = _pack(acc, list(fbank), acc.hnames)
    return f, h, acc.merged_time / (cfg.n_steps * cfg.dt)


def run_ensemble(cfg: SimConfig, n_paths: int, fbank: dict | None = None, hbank: dict | None = None,
                 threads: int = 1, chunk: int = 2000) -> EnsembleResult:
    """Simulate ``n_paths`` independent paths and stream martingale statistics.

    Paths are split into fixed chunks, each seeded by a child of
    SeedSequence(cfg.seed), so results do not depend on ``threads``.
    """
    fbank = fbank or {}
    hbank = hbank or {}
    sizes = [min(chunk, n_paths - i) for i in range(0, n_paths, chunk)]
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    jobs = list(zip(sizes, seeds))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda j: _run_chunk(cfg, j[0], j[1], fbank, hbank), jobs))
    else:
        parts = [_run_chunk(cfg, b, s, fbank, hbank) for b, s in jobs]
    return _merge(parts, n_paths, cfg.n_steps * cfg.dt, cfg.dt)


def _merge(parts, n_paths, T, dt) -> EnsembleResult:
    def cat(key, name, field_):
        return np.concatenate([p[key][name][field_] for p in parts])

    f = {n: {k: cat(0, n, k) for k in ("M", "rqv", "iqv")} for n in parts[0][0]}
    h = {n: {k: cat(1, n, k) for k in ("M", "rqv", "iqv")} for n in parts[0][1]}
    return EnsembleResult(n_paths, dt, T, f, h, np.concatenate([p[2] for p in parts]))


def ensemble_from_trajectories(trajs: list[Trajectory], sigma, dt: float, fbank: dict | None = None,
                               hbank: dict | None = None) -> EnsembleResult:
    """Martingale statistics from trajectories recorded at every step."""
    fbank = fbank or {}
    hbank = hbank or {}
    P = np.stack([t.positions for t in trajs])  # (B, S, n)
    steps = np.diff(trajs[0].times)
    if not np.allclose(steps, dt, rtol=1e-9, atol=0):
        raise ValueError("trajectories must be recorded at every step")
    tr = trajs[0]
    acc = MartingaleAccumulator(P.shape[0], tr.masses, sigma, tr.merge_tol, dt, fbank, hbank)
    acc.start(np.ascontiguousarray(P[:, 0]))
    for k in range(1, P.shape[1]):
        acc.update(np.ascontiguousarray(P[:, k]))
    f, h = _pack(acc, list(fbank), acc.hnames)
    T = float(tr.times[-1])
    return EnsembleResult(P.shape[0], dt, T, f, h, acc.merged_time / T)
