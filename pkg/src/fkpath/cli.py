"""``fkpath`` command line: ``run <config>``, ``validate <config>`` and ``models``.

Exit codes: 0 when every declared check passes, 1 when a check fails,
2 for config schema errors (reported with the config line) and 3 for
numeric failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .catalog import ModelSpecError, list_builtin_models, load_model
from .errors import FkpathError, ModelConsistencyError, ModelEvaluationError, NumericError
from .estimators import resolve_threads
from .experiments import RUNNERS, ExperimentResult
from .models import FiniteCtmcModel

CSV_SCHEMA = "# fkpath-schema v1"

EXIT_OK, EXIT_CHECK_FAILED, EXIT_SCHEMA, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(Exception):
    def __init__(self, key: str, message: str, line: int | None = None):
        self.key = key
        self.message = message
        self.line = line
        super().__init__(self.render())

    def render(self, source: str = "config") -> str:
        where = f"{source}:{self.line}" if self.line else source
        return f"{where}: {self.key}: {self.message}"


# -- YAML with line numbers ------------------------------------------------------


def _line_map(node, prefix: str, out: dict) -> None:
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}.{key.value}" if prefix else str(key.value)
            out[path] = key.start_mark.line + 1
            _line_map(value, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for k, item in enumerate(node.value):
            path = f"{prefix}[{k}]"
            out[path] = item.start_mark.line + 1
            _line_map(item, path, out)


@dataclass
class LoadedConfig:
    data: dict
    lines: dict
    source: str

    def line_of(self, key: str) -> int | None:
        # fall back to the nearest enclosing key that has a line
        while key:
            if key in self.lines:
                return self.lines[key]
            cut = max(key.rfind("."), key.rfind("["))
            key = key[:cut] if cut > 0 else ""
        return None

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(key, message, self.line_of(key))


def read_config(path: str | Path) -> LoadedConfig:
    text = Path(path).read_text()
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("<yaml>", str(getattr(exc, "problem", exc)),
                          mark.line + 1 if mark else None) from None
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping", 1)
    lines: dict = {}
    _line_map(node, "", lines)
    return LoadedConfig(data, lines, str(path))


# -- schema ----------------------------------------------------------------------

TOP_KEYS = {"experiment", "description", "model", "params", "output"}

_INT, _NUM, _BOOL, _STR = "int", "number", "bool", "str"

COMMON = {"seed": _INT, "threads": _INT}
PARAMS = {
    "oracle": {"t": _NUM, "rtol": _NUM},
    "simulate": {"mode": _STR, "N": (_INT, "list"), "t": (_NUM, "list"), "replicas": _INT},
    "duality": {"N": _INT, "t": _NUM, "replicas": _INT, "state": _INT, "other_state": _INT,
                "z_max": _NUM, "z_marginal": _NUM, "allowed_marginal": _INT},
    "gibbs": {"N": _INT, "t": _NUM, "iters": _INT, "burn_in": _INT, "state": _INT},
    "bias-sweep": {"t": _NUM, "N_list": "list", "replicas": (_INT, "list"), "state": _INT,
                   "ratio_bounds": "list", "snr": _NUM},
    "jarzynski": {"N": _INT, "t": _NUM, "replicas": _INT},
    "check-conditions": {"h": _NUM, "s": _NUM, "t": _NUM, "identity_configs": _INT,
                         "n_list": "list"},
}
REQUIRED = {
    "oracle": ["t"],
    "simulate": ["t", "replicas", "seed"],
    "duality": ["N", "t", "replicas", "seed"],
    "gibbs": ["N", "t", "iters", "seed"],
    "bias-sweep": ["t", "N_list", "replicas", "seed"],
    "jarzynski": ["N", "t", "replicas", "seed"],
    "check-conditions": ["seed"],
}
FINITE_ONLY = {"oracle", "duality", "gibbs", "bias-sweep", "jarzynski", "check-conditions"}
SIMULATE_MODES = ("mean-field", "free-motion", "conditional")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


def _check_type(cfg: LoadedConfig, key: str, value, kind):
    kinds = kind if isinstance(kind, tuple) else (kind,)
    for k in kinds:
        if k == _INT and _is_int(value):
            return
        if k == _NUM and _is_num(value):
            return
        if k == _BOOL and isinstance(value, bool):
            return
        if k == _STR and isinstance(value, str):
            return
        if k == "list" and isinstance(value, list) and value:
            return
    raise cfg.error(key, f"expected {' or '.join(kinds)}, got {value!r}")


def _bound(cfg, key, value, lo, what):
    if value < lo:
        raise cfg.error(key, f"must be {what} {lo}, got {value}")


def validate_config(cfg: LoadedConfig):
    """Check the config tree; returns ``(experiment, bundle, params, output)``."""
    data = cfg.data
    for k in data:
        if k not in TOP_KEYS:
            raise cfg.error(str(k), f"unknown top-level key (allowed: {', '.join(sorted(TOP_KEYS))})")
    exp = data.get("experiment")
    if exp is None:
        raise ConfigError("experiment", "missing required key", 1)
    if exp not in RUNNERS:
        raise cfg.error("experiment", f"unknown experiment {exp!r} (one of {', '.join(RUNNERS)})")
    if "model" not in data:
        raise ConfigError("model", "missing required key", 1)
    try:
        bundle = load_model(data["model"], "model")
    except ModelSpecError as exc:
        raise cfg.error(exc.path, str(exc).split(": ", 1)[-1]) from None
    except (ValueError, TypeError) as exc:
        raise cfg.error("model", str(exc)) from None
    if exp in FINITE_ONLY and not isinstance(bundle.model, FiniteCtmcModel):
        raise cfg.error("model", f"experiment {exp!r} needs a finite-state model")
    if exp == "jarzynski" and not hasattr(bundle.model.potential_fn, "schedule"):
        raise cfg.error("model", "experiment 'jarzynski' needs a model of kind 'jarzynski'")

    params = data.get("params") or {}
    if not isinstance(params, dict):
        raise cfg.error("params", "expected a mapping")
    allowed = {**COMMON, **PARAMS[exp]}
    for k, v in params.items():
        key = f"params.{k}"
        if k not in allowed:
            raise cfg.error(key, f"unknown parameter for {exp!r} (allowed: {', '.join(sorted(allowed))})")
        _check_type(cfg, key, v, allowed[k])
    for k in REQUIRED[exp]:
        if k not in params:
            raise cfg.error("params", f"missing required parameter {k!r}")
    _check_values(cfg, exp, params, bundle)

    output = data.get("output") or {}
    if not isinstance(output, dict):
        raise cfg.error("output", "expected a mapping")
    for k in output:
        if k not in ("directory", "formats"):
            raise cfg.error(f"output.{k}", "unknown key (allowed: directory, formats)")
    formats = output.get("formats", ["csv", "json"])
    if not isinstance(formats, list) or any(f not in ("csv", "json") for f in formats):
        raise cfg.error("output.formats", "expected a list drawn from {csv, json}")
    return exp, bundle, dict(params), {"directory": output.get("directory"), "formats": formats}


def _check_values(cfg, exp, p, bundle):
    def each(key):
        v = p[key]
        return [(f"params.{key}[{i}]", x) for i, x in enumerate(v)] if isinstance(v, list) \
            else [(f"params.{key}", v)]

    if "seed" in p:
        _bound(cfg, "params.seed", p["seed"], 0, ">=")
    if "threads" in p:
        _bound(cfg, "params.threads", p["threads"], 1, ">=")
    for key in ("N", "N_list", "n_list"):
        if key in p:
            lo = 3 if key == "n_list" else 2
            for k, v in each(key):
                if not _is_int(v):
                    raise cfg.error(k, f"expected int, got {v!r}")
                _bound(cfg, k, v, lo, "N >=" if key != "n_list" else "n >=")
    if "t" in p:
        for k, v in each("t"):
            if not _is_num(v):
                raise cfg.error(k, f"expected number, got {v!r}")
            if exp == "check-conditions":
                _bound(cfg, k, v, 0.0, ">=")
            elif v <= 0:
                raise cfg.error(k, f"must be > 0, got {v}")
    if "replicas" in p:
        lo = 100 if exp == "duality" else 2
        for k, v in each("replicas"):
            if not _is_int(v):
                raise cfg.error(k, f"expected int, got {v!r}")
            _bound(cfg, k, v, lo, "replicas >=")
        if isinstance(p["replicas"], list) and len(p["replicas"]) != len(p.get("N_list", [])):
            raise cfg.error("params.replicas", "per-N replica list must match N_list in length")
    if "iters" in p:
        _bound(cfg, "params.iters", p["iters"], 2, ">=")
    if "burn_in" in p:
        _bound(cfg, "params.burn_in", p["burn_in"], 0, ">=")
    if "h" in p and p["h"] <= 0:
        raise cfg.error("params.h", f"must be > 0, got {p['h']}")
    if "mode" in p and p["mode"] not in SIMULATE_MODES:
        raise cfg.error("params.mode", f"must be one of {', '.join(SIMULATE_MODES)}")
    if exp == "simulate" and p.get("mode", "mean-field") != "free-motion" and "N" not in p:
        raise cfg.error("params", "missing required parameter 'N'")
    for key in ("state", "other_state"):
        if key in p and not 0 <= p[key] < bundle.model.size:
            raise cfg.error(f"params.{key}", f"must be a state in [0, {bundle.model.size})")
    if "ratio_bounds" in p:
        rb = p["ratio_bounds"]
        if len(rb) != 2 or not all(_is_num(v) for v in rb) or rb[0] >= rb[1]:
            raise cfg.error("params.ratio_bounds", "expected [lo, hi] with lo < hi")
    if exp == "jarzynski":
        t_max = bundle.fragment.get("t_max")
        if t_max is None and "builtin" in bundle.fragment:
            t_max = 1.0
        if t_max is not None and p["t"] > t_max:
            raise cfg.error("params.t", f"exceeds the model's t_max = {t_max}")


# -- outputs -----------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_SCHEMA + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_outputs(result: ExperimentResult, directory: Path, formats, stem: str) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        for name, tab in result.tables.items():
            p = directory / f"{stem}_{name}.csv"
            write_csv(p, tab.header, tab.rows)
            written.append(p)
    if "json" in formats:
        p = directory / f"{stem}_summary.json"
        p.write_text(json.dumps(_jsonable(result.summary()), indent=2, sort_keys=True) + "\n")
        written.append(p)
    return written


# -- commands ----------------------------------------------------------------------


def run_config(path, out_dir: str | None = None, stream=None) -> int:
    stream = stream or sys.stdout
    try:
        cfg = read_config(path)
        exp, bundle, params, output = validate_config(cfg)
    except ConfigError as exc:
        print(f"schema error: {exc.render(str(path))}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    params["threads"] = resolve_threads(params.get("threads"))
    try:
        result = RUNNERS[exp](bundle, params)
    except (NumericError, ModelEvaluationError, ModelConsistencyError) as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FkpathError as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    # thread count never changes results; keep it out of the outputs
    result.params = {k: v for k, v in params.items() if k != "threads"}
    directory = Path(out_dir or output["directory"] or "fkpath-out")
    written = write_outputs(result, directory, output["formats"], Path(path).stem)
    for c in result.checks:
        print(c.line(), file=stream)
    if not result.checks:
        print("no checks declared for this configuration", file=stream)
    for p in written:
        print(f"wrote {p}", file=stream)
    verdict = "PASS" if result.passed else "FAIL"
    print(f"{verdict} {exp}: {sum(c.passed for c in result.checks)}/{len(result.checks)} checks",
          file=stream)
    return EXIT_OK if result.passed else EXIT_CHECK_FAILED


def validate_command(path) -> int:
    try:
        exp, bundle, _, _ = validate_config(read_config(path))
    except ConfigError as exc:
        print(f"schema error: {exc.render(str(path))}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    print(f"OK {path}: experiment {exp}, model {bundle.model.name}")
    return EXIT_OK


def models_command(as_json: bool = False) -> int:
    entries = list_builtin_models()
    if as_json:
        print(json.dumps(entries, indent=2, sort_keys=True))
        return EXIT_OK
    for e in entries:
        print(f"{e['name']}")
        print(f"  {e['description']}")
        print(f"  potential_sup: {e['potential_sup']:g}")
        frag = yaml.safe_dump(e["fragment"], sort_keys=True, default_flow_style=None)
        for line in frag.rstrip().splitlines():
            print(f"    {line}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fkpath", description="Feynman-Kac particle experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides output.directory)")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    m = sub.add_parser("models", help="list built-in models")
    m.add_argument("--json", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run_config(args.config, args.out)
    if args.command == "validate":
        return validate_command(args.config)
    return models_command(args.json)


if __name__ == "__main__":
    sys.exit(main())
