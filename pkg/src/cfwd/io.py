"""Deterministic, atomic artifact writing."""

from __future__ import annotations

import hashlib
import json
import math
import os
import platform
import tempfile
from pathlib import Path

import numpy as np

import cfwd

FORMAT_VERSION = 1


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(obj, indent: int | None = 2) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=indent, allow_nan=False)


def atomic_write(path, data: str | bytes) -> Path:
    """Write to a temporary file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    return path


def fmt(x) -> str:
    """Shortest round-trip representation; identical across runs and platforms."""
    return repr(float(x))


def csv_text(header: list[str], rows) -> str:
    lines = [f"# format_version: {FORMAT_VERSION}", ",".join(header)]
    for r in rows:
        lines.append(",".join(v if isinstance(v, str) else str(int(v)) if isinstance(v, (int, np.integer))
                              else fmt(v) for v in r))
    return "\n".join(lines) + "\n"


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Header and raw rows of a CSV written by ``csv_text``."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty")
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def jsonl_text(records) -> str:
    return "".join(dumps(dict(r, format_version=FORMAT_VERSION), indent=None) + "\n" for r in records)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict:
    import numba
    import scipy

    return {"cfwd": cfwd.__version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def write_manifest(out: Path, mode: str, config, artifacts: list[Path], extra: dict | None = None) -> Path:
    """manifest.json: everything needed to reproduce the run; no wall-clock data.

    The output directory and thread count are left out: neither changes any
    artifact, and keeping them would break byte-identity between reruns.
    """
    resolved = {k: v for k, v in config.data.items() if k not in ("out", "threads")}
    rec = {
        "format_version": FORMAT_VERSION,
        "mode": mode,
        "seed": config.seed,
        "config_source": config.source,
        "config_sha256": config.sha256(),
        "resolved_config": resolved,
        "versions": versions(),
        "artifacts": {p.name: sha256_file(p) for p in sorted(artifacts)},
    }
    if extra:
        rec.update(extra)
    return atomic_write(out / "manifest.json", dumps(rec) + "\n")


def write_timing(out: Path, seconds: float, threads: int) -> Path:
    return atomic_write(out / "timing.json", dumps({"format_version": FORMAT_VERSION, "wall_time_s": seconds,
                                                    "threads": threads}) + "\n")
