"""Command-line entry point.

    cfwd simulate  --config FILE [--seed N] [--threads K] [--out DIR] [--plot]
    cfwd verify    --config FILE [--suite NAME ...] [--seed N] [--threads K] [--out DIR]
    cfwd sample-xi [--config FILE] [--n N] [--radius R] [--xi-file PATH] [--samples S] [--seed N] [--out DIR]
    cfwd run       --config FILE [--seed N] [--threads K] [--out DIR]
    cfwd figures   DIR

Exit codes: 0 success, 2 invalid configuration, 3 I/O failure, 4 a
verification check failed, 1 numerical failure during integration.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from cfwd.config import SUITES, ConfigError, ExperimentConfig, load_config, parse_config, parse_xi
from cfwd.io import atomic_write, csv_text, dumps, jsonl_text, write_manifest, write_timing

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG, EXIT_IO, EXIT_SUITE = 0, 1, 2, 3, 4


class SuiteFailure(Exception):
    pass


def resolve_threads(flag: int | None, cfg: ExperimentConfig | None) -> int:
    if flag is not None:
        t = flag
    elif os.environ.get("CFWD_THREADS"):
        try:
            t = int(os.environ["CFWD_THREADS"])
        except ValueError:
            raise ConfigError(f"CFWD_THREADS must be an integer, got {os.environ['CFWD_THREADS']!r}") from None
    elif cfg is not None and cfg.data.get("threads") is not None:
        t = int(cfg.data["threads"])
    else:
        t = 1
    if t < 1:
        raise ConfigError("thread count must be >= 1")
    return t


def _out_dir(args, cfg: ExperimentConfig, mode: str) -> Path:
    return Path(args.out or cfg.data.get("out") or f"cfwd-out/{mode}")


# --------------------------------------------------------------------------
# modes


def do_simulate(cfg: ExperimentConfig, out: Path, threads: int, plot: bool = False) -> list[Path]:
    from cfwd.dynamics import SimConfig, simulate
    from cfwd.figures import emit_figures

    s = cfg.section("simulate")
    sc = SimConfig(n=s["n"], dt=s["dt"], T=s["T"], masses=s["masses"], sigma=s["sigma"],
                   xi=None if s["sigma"] is not None else parse_xi(s["xi"]), merge_tol=s["merge_tol"],
                   seed=cfg.seed, record_every=s["record_every"], x0=s["x0"])
    tr = simulate(sc)
    n = sc.n
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + ["atom_count", "com"]
    rows = ([t, *x, int(k), c] for t, x, k, c in zip(tr.times, tr.positions, tr.atom_count, tr.com))
    files = [atomic_write(out / "trajectory.csv", csv_text(header, rows))]
    bnd = tr.boundaries()
    files.append(atomic_write(out / "partitions.csv", csv_text(
        ["t", "boundaries"], ([t, ";".join(repr(float(u)) for u in b)] for t, b in zip(tr.times, bnd)))))
    meas = ({"t": float(t), "positions": mu.positions, "masses": mu.masses}
            for t, mu in zip(tr.times, tr.measures()))
    files.append(atomic_write(out / "measures.jsonl", jsonl_text(meas)))
    if plot or s["plot"]:
        files += emit_figures(out)
    return files


def do_verify(cfg: ExperimentConfig, out: Path, threads: int, only=None) -> tuple[list[Path], bool]:
    from cfwd.verify.suites import run_suites

    results = run_suites(cfg, threads, only)
    passed = all(r.passed for reps in results.values() for r in reps)
    for name, reps in results.items():
        for r in reps:
            print(f"[{name}] {r.line()}")
    doc = {"format_version": 1, "passed": passed,
           "suites": {k: [r.to_dict() for r in v] for k, v in results.items()}}
    return [atomic_write(out / "report.json", dumps(doc) + "\n")], passed


def do_sample_xi(cfg: ExperimentConfig, out: Path | None) -> list[Path]:
    from cfwd.xi_measure import sample_xi_n_ball_arrays

    s = cfg.section("sample_xi")
    xi = parse_xi(s["xi"])
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    edges, x, rate = sample_xi_n_ball_arrays(s["n"], s["radius"], xi, s["samples"], rng, s["proposal"])
    recs = ({"q": e[1:-1], "x": v, "weight": 1.0} for e, v in zip(edges, x))
    text = jsonl_text(recs)
    if out is None:
        sys.stdout.write(text)
        return []
    print(f"acceptance rate {rate:.4g}", file=sys.stderr)
    return [atomic_write(out / "samples.jsonl", text)]


# --------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, config_required: bool = True):
    p.add_argument("--config", required=config_required, help="YAML experiment file")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--threads", type=int, help="worker threads (fallback: CFWD_THREADS, then config)")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cfwd", description="Coalescing-fragmentating particle lab.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", help="integrate one trajectory and write CSV/JSONL")
    _common(p)
    p.add_argument("--plot", action="store_true", help="also write three plot scripts")
    p = sub.add_parser("verify", help="run verification suites")
    _common(p)
    p.add_argument("--suite", action="append", choices=SUITES, help="restrict to a suite (repeatable)")
    p = sub.add_parser("sample-xi", help="exact draws from the reference measure on a ball")
    _common(p, config_required=False)
    p.add_argument("--n", type=int)
    p.add_argument("--radius", type=float)
    p.add_argument("--xi-file", help="JSON/YAML file with breakpoints and values")
    p.add_argument("--samples", type=int)
    p = sub.add_parser("run", help="run the mode named in the config file")
    _common(p)
    p = sub.add_parser("figures", help="write plot scripts for a simulation directory")
    p.add_argument("directory")
    return ap


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else parse_config("", None)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _sample_xi_overrides(args, cfg: ExperimentConfig) -> ExperimentConfig:
    import copy

    d = copy.deepcopy(cfg.data)
    s = d["sample_xi"]
    for key in ("n", "radius", "samples"):
        val = getattr(args, key, None)
        if val is not None:
            s[key] = val
    if getattr(args, "xi_file", None):
        s["xi"] = {"file": args.xi_file}
        parse_xi(s["xi"])
    if s["n"] < 1 or s["radius"] <= 0 or s["samples"] < 1:
        raise ConfigError("sample-xi needs n >= 1, radius > 0 and samples >= 1")
    return ExperimentConfig(d, cfg.text + f"\n# cli: {s}", cfg.source)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        if args.command == "figures":
            from cfwd.figures import emit_figures

            for p in emit_figures(args.directory):
                print(p)
            return EXIT_OK
        cfg = _load(args)
        mode = {"run": cfg.mode, "sample-xi": "sample-xi"}.get(args.command, args.command)
        if args.command == "run" and mode is None:
            raise ConfigError("config has no 'mode' key; say which mode to run", None, cfg.source)
        if args.command not in ("run",) and cfg.mode not in (None, mode):
            raise ConfigError(f"config mode {cfg.mode!r} does not match subcommand {args.command!r}",
                              None, cfg.source)
        threads = resolve_threads(getattr(args, "threads", None), cfg)
        if mode == "sample-xi":
            cfg = _sample_xi_overrides(args, cfg)
            if args.out == "-":
                do_sample_xi(cfg, None)
                return EXIT_OK
        out = _out_dir(args, cfg, mode)
        passed = True
        if mode == "simulate":
            files = do_simulate(cfg, out, threads, getattr(args, "plot", False))
        elif mode == "sample-xi":
            files = do_sample_xi(cfg, out)
        else:
            only = getattr(args, "suite", None)
            if mode in ("varadhan", "bernstein"):
                only = [mode]
            files, passed = do_verify(cfg, out, threads, only)
        write_manifest(out, mode, cfg, files)
        write_timing(out, time.perf_counter() - t0, threads)
        print(f"wrote {len(files)} artifact(s) to {out}", file=sys.stderr)
        return EXIT_OK if passed else EXIT_SUITE
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FloatingPointError as exc:
        print(f"integration failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # invalid parameter combinations surface from the library as ValueError
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
