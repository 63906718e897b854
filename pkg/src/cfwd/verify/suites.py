"""Configured verification suites, each returning a list of reports."""

from __future__ import annotations

import numpy as np

from cfwd.config import parse_xi
from cfwd.dynamics import SimConfig, run_ensemble
from cfwd.monotone import StepFunction
from cfwd.testfunctions import fc_bank, scalar_bank
from cfwd.verify.bernstein import affine_reproduction, bernstein_bank, convergence_report
from cfwd.verify.ibp import check_ibp
from cfwd.verify.martingale import check_com_qv, check_martingale_f, check_martingale_h, qv_refinement
from cfwd.verify.stats import ToleranceReport
from cfwd.verify.varadhan import Ball, varadhan_exponent
from cfwd.verify.xi_bounds import xi_bounds_suite


def suite_rng(seed: int, name: str) -> np.random.Generator:
    """Independent stream per suite, derived from the run seed and the suite name."""
    key = [int(b) for b in name.encode()]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *key])))


def h_bank() -> dict:
    return {"half": StepFunction([0.5], [1.0, 0.0]),
            "ramp": StepFunction(np.arange(1, 10) / 10, np.arange(10) / 10)}


def sim_config(sec: dict, seed: int, xi: StepFunction | None, **over) -> SimConfig:
    kw = dict(n=sec["n"], dt=sec["dt"], T=sec["T"], masses=sec.get("masses"), sigma=sec.get("sigma"),
              xi=None if sec.get("sigma") is not None else xi, merge_tol=sec["merge_tol"], seed=seed,
              record_every=sec.get("record_every", 1), x0=sec.get("x0"))
    kw.update(over)
    return SimConfig(**kw)


def martingale_suite(sec: dict, seed: int, threshold: float, threads: int) -> list:
    xi = parse_xi(sec["xi"])
    fb, hb = scalar_bank(), h_bank()
    cfg = sim_config(sec, seed, xi)
    ens = run_ensemble(cfg, sec["paths"], fb, hb, threads=threads, chunk=sec["chunk"])
    tag = f"xi={sec['xi']} tol={cfg.merge_tol:.3g}"
    out = [check_martingale_f(ens, f, threshold, f"M^f mean f={f} [{tag}]") for f in fb]
    out += [check_martingale_h(ens, h, threshold, f"M~h mean h={h} [{tag}]") for h in hb]
    out.append(check_com_qv(ens, sec["com_tolerance"], f"centre-of-mass QV [{tag}]"))
    if sec["refine"]:
        coarse = run_ensemble(sim_config(sec, seed + 1, xi, dt=2 * sec["dt"]), sec["refine_paths"], fb, {},
                              threads=threads, chunk=sec["chunk"])
        out += [qv_refinement(coarse, ens, f, 0.8, sec["qv_tolerance"]) for f in fb]
        const = run_ensemble(sim_config(sec, seed + 2, StepFunction.constant(0.0), sigma=None),
                             sec["refine_paths"], {}, {}, threads=threads, chunk=sec["chunk"])
        out.append(check_com_qv(const, sec["com_tolerance"], "centre-of-mass QV [xi=const]"))
    return out


_VARADHAN_CASES = {
    1: dict(a=(0.05,), b=(1.05,), ra=0.05, rb=0.05, sigma=(0.0,), rel_tol=0.1),
    2: dict(a=(0.0, 0.0), b=(-1.0, 1.0), ra=0.1, rb=0.1, sigma=(0.0, 1.0), rel_tol=0.25),
}


def varadhan_suite(sec: dict, seed: int) -> list:
    rng = suite_rng(seed, "varadhan")
    out = []
    for n in sec["n_list"]:
        if n not in _VARADHAN_CASES:
            raise ValueError("varadhan n must be 1 or 2")
        case = _VARADHAN_CASES[n]
        A = Ball(tuple(sec["a_center"] or case["a"]), sec["a_radius"] if sec["a_center"] else case["ra"])
        B = Ball(tuple(sec["b_center"] or case["b"]), sec["b_radius"] if sec["b_center"] else case["rb"])
        sigma = tuple(sec["sigma"] or case["sigma"])
        cfg = SimConfig(n=n, dt=sec["dt"], T=max(sec["t_list"]), sigma=sigma if n > 1 else None)
        rel = sec["rel_tol"] if sec["rel_tol"] is not None else case["rel_tol"]
        out.append(varadhan_exponent(A, B, sec["t_list"], sec["N"], rng, cfg, sec["refine"], rel,
                                     name=f"varadhan n={n}", merge_tol=sec["merge_tol"]))
    return out


def bernstein_suite(sec: dict, seed: int) -> list:
    rng = suite_rng(seed, "bernstein")
    out = [convergence_report(fn, sec["M"], tuple(sec["n_list"])) for fn in bernstein_bank()]
    worst = max(affine_reproduction(k, n, rng) for k in (1, 2) for n in sec["n_list"])
    out.append(ToleranceReport("bernstein affine reproduction", worst, 1e-12, worst <= 1e-12))
    return out


def ibp_suite(sec: dict, seed: int, threshold: float) -> list:
    rng = suite_rng(seed, "ibp")
    xi = parse_xi(sec["xi"])
    return [check_ibp(n, U, V, xi, sec["radius"], sec["N"], rng, threshold)
            for U, V in fc_bank(sec["radius"]) for n in range(1, sec["max_n"] + 1)]


def run_suites(cfg, threads: int = 1, only=None) -> dict:
    """Run the configured suites; returns {suite name: [reports]}."""
    v = cfg.section("verify")
    seed = cfg.seed
    names = list(only) if only else v["suites"]
    out = {}
    for name in names:
        if name == "ibp":
            out[name] = ibp_suite(v["ibp"], seed, v["threshold"])
        elif name == "martingale":
            out[name] = martingale_suite(v["martingale"], seed, v["threshold"], threads)
        elif name == "varadhan":
            out[name] = varadhan_suite(v["varadhan"], seed)
        elif name == "bernstein":
            out[name] = bernstein_suite(v["bernstein"], seed)
        elif name == "xi-bounds":
            sec = v["xi_bounds"]
            out[name] = xi_bounds_suite(parse_xi(sec["xi"]), sec["N"], suite_rng(seed, "xi-bounds"),
                                        tuple(sec["n_list"]), tuple(sec["r_list"]))
        else:
            raise ValueError(f"unknown suite {name!r}")
    return out
