"""Martingale-problem checks on simulated ensembles."""

from __future__ import annotations

import numpy as np

from cfwd.dynamics import EnsembleResult
from cfwd.verify.stats import StatReport, ToleranceReport, mean_se

MIN_PATHS = 30


def qv_relative_error(rqv, iqv) -> float:
    """Mean over paths of |realised QV - integrated QV| / integrated QV.

    Paths whose integrated QV is negligible (the test function never saw a
    particle) are skipped rather than allowed to blow up the ratio.
    """
    rqv = np.asarray(rqv, dtype=float)
    iqv = np.asarray(iqv, dtype=float)
    ok = iqv > 1e-12 * max(float(np.max(iqv, initial=0.0)), 1e-300)
    if not np.any(ok):
        return float("nan")
    return float(np.mean(np.abs(rqv[ok] - iqv[ok]) / iqv[ok]))


def _check(rec: dict, name: str, threshold: float, n_paths: int) -> StatReport:
    if n_paths < MIN_PATHS:
        raise ValueError(f"need at least {MIN_PATHS} trajectories, got {n_paths}")
    est, se = mean_se(rec["M"])
    details = {"qv_relative_error": qv_relative_error(rec["rqv"], rec["iqv"]),
               "mean_rqv": float(np.mean(rec["rqv"])), "mean_iqv": float(np.mean(rec["iqv"]))}
    return StatReport(name, est, se, 0.0, n_paths, threshold, details)


def check_martingale_f(ens: EnsembleResult, f: str, threshold: float = 4.0, name: str | None = None) -> StatReport:
    """Mean of M^f_T over the ensemble, z-scored against zero."""
    return _check(ens.f[f], name or f"martingale f={f}", threshold, ens.n_paths)


def check_martingale_h(ens: EnsembleResult, h: str, threshold: float = 4.0, name: str | None = None) -> StatReport:
    """Mean of the compensated pairing <X_T, h> over the ensemble."""
    return _check(ens.h[h], name or f"martingale h={h}", threshold, ens.n_paths)


def check_com_qv(ens: EnsembleResult, tolerance: float = 0.03, name: str = "center-of-mass QV") -> ToleranceReport:
    """Ensemble mean of the realised QV of the centre of mass, relative to T."""
    q = float(np.mean(ens.com_qv()))
    rel = abs(q / ens.T - 1.0)
    return ToleranceReport(name, rel, tolerance, rel <= tolerance, {"mean_qv": q, "T": ens.T})


def qv_refinement(coarse: EnsembleResult, fine: EnsembleResult, f: str, max_ratio: float = 0.8,
                  max_error: float = 0.05) -> ToleranceReport:
    """QV error at dt must be within ``max_error`` and shrink by ``max_ratio`` from 2 dt."""
    e1 = qv_relative_error(coarse.f[f]["rqv"], coarse.f[f]["iqv"])
    e2 = qv_relative_error(fine.f[f]["rqv"], fine.f[f]["iqv"])
    ratio = e2 / e1
    return ToleranceReport(f"QV refinement f={f}", ratio, max_ratio, bool(ratio <= max_ratio and e2 <= max_error),
                           {"error_coarse": e1, "error_fine": e2, "dt_coarse": coarse.dt, "dt_fine": fine.dt,
                            "max_error": max_error})
