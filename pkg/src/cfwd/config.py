"""Experiment configuration: YAML files checked against a fixed schema.

Every key has a documented default (see ``SCHEMA``); unknown keys are
rejected, and each error names the offending line of the file.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from cfwd.monotone import StepFunction, make_step_function
from cfwd.xi_measure import xi_constant, xi_identity

MODES = ("simulate", "verify", "sample-xi", "varadhan", "bernstein")
SUITES = ("ibp", "martingale", "varadhan", "bernstein", "xi-bounds")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = f"{source or '<config>'}:{line}: " if line else f"{source or '<config>'}: "
        super().__init__(where + message)


# Leaf specs: (kind, default).  Kinds: int, float, bool, str, list, xi, choice:<a|b>; '?' allows null.
_SIM = {
    "n": ("int", 10), "dt": ("float", 1e-4), "T": ("float", 0.5), "masses": ("list?", None),
    "sigma": ("list?", None), "xi": ("xi", "id"), "merge_tol": ("float?", None), "record_every": ("int", 10),
    "x0": ("list?", None),
}
SCHEMA = {
    "mode": ("choice?", None),
    "seed": ("int", 0),
    "out": ("str?", None),
    "threads": ("int?", None),
    "simulate": dict(_SIM, plot=("bool", False)),
    "sample_xi": {"n": ("int", 2), "radius": ("float", 1.0), "xi": ("xi", "id"), "samples": ("int", 1000),
                  "proposal": ("choice:ellipsoid|box", "ellipsoid")},
    "verify": {
        "suites": ("list", list(SUITES)),
        "threshold": ("float", 4.0),
        "ibp": {"N": ("int", 1_000_000), "max_n": ("int", 3), "radius": ("float", 1.5), "xi": ("xi", "id")},
        "martingale": dict(_SIM, paths=("int", 10_000), record_every=("int", 1), chunk=("int", 2000),
                           qv_tolerance=("float", 0.05), com_tolerance=("float", 0.03),
                           refine=("bool", True), refine_paths=("int", 2000)),
        "varadhan": {"n_list": ("list", [1, 2]), "t_list": ("list", [4e-3, 2e-3, 1e-3]), "dt": ("float", 1e-4),
                     "N": ("int", 100_000), "refine": ("int", 2), "rel_tol": ("float?", None),
                     "a_center": ("list?", None), "a_radius": ("float", 0.05),
                     "b_center": ("list?", None), "b_radius": ("float", 0.05),
                     "sigma": ("list?", None), "merge_tol": ("float?", None)},
        "bernstein": {"M": ("float", 1.0), "n_list": ("list", [8, 16, 32, 64])},
        "xi_bounds": {"N": ("int", 1_000_000), "n_list": ("list", [1, 2, 3, 4]),
                      "r_list": ("list", [0.5, 1.0, 2.0]), "xi": ("xi", "id")},
    },
}


def defaults(schema: dict = SCHEMA) -> dict:
    out = {}
    for k, v in schema.items():
        out[k] = defaults(v) if isinstance(v, dict) else copy.deepcopy(v[1])
    return out


def _lines(node, path=(), acc=None) -> dict:
    """Map key paths to 1-based line numbers using the YAML node tree."""
    acc = {} if acc is None else acc
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (k.value,)
            acc[p] = k.start_mark.line + 1
            _lines(v, p, acc)
    return acc


def _number(v):
    # PyYAML reads 1e-4 (no dot) as a string
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            return v
    return v


def _check_leaf(kind: str, value, where: str, line, source):
    optional = kind.endswith("?")
    base = kind.rstrip("?")
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{where} must not be empty", line, source)
    if base == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}", line, source)
        return value
    if base == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            try:
                return float(value)  # YAML reads 1e-4 as a string
            except (TypeError, ValueError):
                raise ConfigError(f"{where} must be a number, got {value!r}", line, source) from None
        return float(value)
    if base == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false", line, source)
        return value
    if base == "str":
        return str(value)
    if base == "list":
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list", line, source)
        return [_number(v) for v in value]
    if base == "xi":
        try:
            parse_xi(value)
        except (TypeError, ValueError, OSError) as exc:
            raise ConfigError(f"{where}: {exc}", line, source) from None
        return value
    if base.startswith("choice"):
        opts = base.split(":", 1)[1].split("|") if ":" in base else MODES
        if value not in opts:
            raise ConfigError(f"{where} must be one of {', '.join(opts)}; got {value!r}", line, source)
        return value
    raise AssertionError(kind)


def _validate(data, schema, path, lines, source):
    if not isinstance(data, dict):
        raise ConfigError(f"section {'.'.join(path) or '<root>'} must be a mapping", lines.get(path), source)
    out = {}
    for k, v in data.items():
        p = path + (k,)
        if k not in schema:
            known = ", ".join(sorted(schema))
            raise ConfigError(f"unknown key {'.'.join(p)!r} (allowed here: {known})", lines.get(p), source)
        spec = schema[k]
        if isinstance(spec, dict):
            out[k] = _validate({} if v is None else v, spec, p, lines, source)
        else:
            out[k] = _check_leaf(spec[0], v, ".".join(p), lines.get(p), source)
    return out


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(base[k], v) if isinstance(v, dict) and isinstance(base.get(k), dict) else v
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict
    text: str
    source: str | None = None

    @property
    def mode(self):
        return self.data.get("mode")

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def section(self, *path) -> dict:
        d = self.data
        for p in path:
            d = d[p]
        return d

    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    def resolved_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2)

    def with_overrides(self, **kw) -> ExperimentConfig:
        d = copy.deepcopy(self.data)
        for k, v in kw.items():
            if v is not None:
                d[k] = v
        return ExperimentConfig(d, self.text, self.source)


def parse_config(text: str, source: str | None = None) -> ExperimentConfig:
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ConfigError(f"YAML syntax error: {exc.problem}", mark.line + 1 if mark else None, source) from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML error: {exc}", None, source) from None
    raw = {} if raw is None else raw
    lines = _lines(node) if node is not None else {}
    checked = _validate(raw, SCHEMA, (), lines, source)
    if not 0 <= checked.get("seed", 0) < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer", lines.get(("seed",)), source)
    suites = checked.get("verify", {}).get("suites")
    if suites:
        for s in suites:
            if s not in SUITES:
                raise ConfigError(f"unknown suite {s!r} (choose from {', '.join(SUITES)})",
                                  lines.get(("verify", "suites")), source)
    return ExperimentConfig(_merge(defaults(), checked), text, source)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    text = p.read_text()
    return parse_config(text, str(p))


def parse_xi(spec) -> StepFunction:
    """'id', 'const', a number, {const: c}, {breakpoints: [...], values: [...]} or {file: path}."""
    if isinstance(spec, str):
        if spec == "id":
            return xi_identity()
        if spec == "const":
            return xi_constant(0.0)
        raise ValueError(f"unknown xi {spec!r}; use id, const or a mapping")
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return xi_constant(float(spec))
    if isinstance(spec, dict):
        keys = set(spec)
        if keys == {"const"}:
            return xi_constant(float(spec["const"]))
        if keys == {"breakpoints", "values"}:
            return make_step_function(np.asarray(spec["breakpoints"], float), np.asarray(spec["values"], float))
        if keys == {"file"}:
            return load_xi_file(spec["file"])
    raise ValueError(f"cannot interpret xi setting {spec!r}")


def load_xi_file(path) -> StepFunction:
    """JSON or YAML file with ``breakpoints`` and ``values``."""
    d = yaml.safe_load(Path(path).read_text())
    if not isinstance(d, dict) or set(d) - {"breakpoints", "values", "format_version"}:
        raise ValueError(f"{path}: expected keys breakpoints and values")
    return make_step_function(np.asarray(d["breakpoints"], float), np.asarray(d["values"], float))
