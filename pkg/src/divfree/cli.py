"""Command line: ``divfree run <scenario>`` and ``divfree validate <scenario>``.

Exit codes: 0 all checks pass, 1 a check or stage failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from .approx import StageError
from .scenarios import DEFAULTS, DRIVERS, schedule

_SCHEDULE = {
    "type": "object",
    "required": ["start", "factor", "count"],
    "additionalProperties": False,
    "properties": {
        "start": {"type": "number", "exclusiveMinimum": 0},
        "factor": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "count": {"type": "integer", "minimum": 1},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "scenario": {"enum": sorted(DRIVERS)},
        "seed": {"type": "integer"},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"lo": {"type": "number"}, "hi": {"type": "number"}, "n": {"type": "integer", "minimum": 16}},
        },
        "fixture": {
            "type": "object",
            "required": ["name"],
            "additionalProperties": False,
            "properties": {
                "name": {"enum": ["random-disks", "two-disks", "three-disks", "cubic-point", "koch"]},
                "seed": {"type": "integer"},
                "a": {"type": "number", "minimum": 0.25, "exclusiveMaximum": 0.5},
                "order": {"type": "integer", "minimum": 0, "maximum": 7},
            },
        },
        "eps": _SCHEDULE,
        "cutoff": _SCHEDULE,
        "m": {"type": "integer", "minimum": 0, "maximum": 3},
        "gamma": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
        "p": {"type": "number", "exclusiveMinimum": 1},
        "q": {"type": ["number", "null"], "minimum": 1},
        "d": {"type": "number", "minimum": 0, "maximum": 2},
        "beta": {"type": "number", "exclusiveMinimum": 0},
        "n_points": {"type": "integer", "minimum": 1},
        "levels": {"type": ["integer", "null"], "minimum": 1},
        "widths": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "gap_floor": {"type": "number"},
    },
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "fixture":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(scenario: str, path=None, seed=None, gamma=None) -> dict:
    """Defaults for ``scenario`` overlaid with the JSON file at ``path`` and command-line overrides."""
    user = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(user, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in exc.absolute_path)
        raise ConfigError(f"schema error at {where}: {exc.message}") from None
    if user.get("scenario", scenario) != scenario:
        raise ConfigError(f"config is for scenario {user['scenario']!r}, not {scenario!r}")
    cfg = _merge(DEFAULTS[scenario], {k: v for k, v in user.items() if k != "scenario"})
    cfg.setdefault("seed", 0)
    if seed is not None:
        cfg["seed"] = seed
    if gamma is not None:
        cfg["gamma"] = gamma
    g = cfg["grid"]
    if not g["hi"] > g["lo"]:
        raise ConfigError("schema error at $.grid: hi must exceed lo")
    return cfg


# ---------------------------------------------------------------- validation


def _geometry_extent(cfg: dict):
    """Bounding box of the fixture's compact set, or None when it depends on a random draw."""
    name = cfg["fixture"]["name"]
    if name == "two-disks":
        return (-0.75, 0.75, -0.25, 0.25)
    if name == "three-disks":
        return (-0.7, 0.7, -0.55, 0.65)
    if name == "cubic-point":
        return (0.0, 0.0, 0.0, 0.0)
    if name == "koch":
        from .geometry import koch_curve

        v = koch_curve(float(cfg["fixture"].get("a", 0.35)), int(cfg["fixture"].get("order", 5))).vertices
        return (v[:, 0].min(), v[:, 0].max(), v[:, 1].min(), v[:, 1].max())
    return None


# schedules that are spatial widths; elsewhere eps is a cover budget in potential units
_WIDTHS = {"cmgamma-pipeline": ("eps",)}


def validate(scenario: str, cfg: dict) -> list:
    """Grid, schedule and stencil compatibility problems of a resolved config (empty when consistent)."""
    problems = []
    g = cfg["grid"]
    h = (g["hi"] - g["lo"]) / g["n"]
    for key in _WIDTHS.get(scenario, ()) + ("cutoff",):
        if key in cfg:
            for i, e in enumerate(schedule(cfg[key])):
                if e < 8 * h:
                    problems.append({"key": f"{key}[{i}]", "problem": f"{e:.6g} < 8h = {8 * h:.6g}"})
    for i, w in enumerate(cfg.get("widths", [])):
        if w < 8 * h:
            problems.append({"key": f"widths[{i}]", "problem": f"{w:.6g} < 8h = {8 * h:.6g}"})
    if scenario == "besov-compression" and cfg.get("levels"):
        nu = int(cfg["levels"]) - 1
        if 2.0**-nu < 4 * h:
            problems.append({"key": "levels", "problem": f"2^-{nu} = {2.0**-nu:.6g} < 4h = {4 * h:.6g}"})
    ext = _geometry_extent(cfg)
    if ext is not None:
        xmax = g["lo"] + (g["n"] - 1) * h
        # finite differences up to order 3 reach 2 nodes out; keep one more in reserve
        margin = 3 * h
        if ext[0] - margin <= g["lo"] or ext[2] - margin <= g["lo"] or ext[1] + margin >= xmax or ext[3] + margin >= xmax:
            problems.append({"key": "grid", "problem": f"compact set is within 3h = {margin:.6g} of the grid edge"})
    return problems


# ---------------------------------------------------------------- output


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_csv(path: Path, rows: list) -> None:
    keys = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for r in rows:
            w.writerow([_cell(r.get(k, "")) for k in keys])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return json.dumps(_clean(v))
    return v


def write_pgm(path: Path, a: np.ndarray) -> None:
    """8-bit binary PGM, rows = x2 from top to bottom, scaled to [min, max]."""
    a = np.nan_to_num(np.asarray(a, dtype=float))
    lo, hi = float(a.min()), float(a.max())
    img = np.zeros_like(a) if hi == lo else (a - lo) / (hi - lo)
    img = np.flipud(np.rint(255 * img).astype(np.uint8).T)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


# ---------------------------------------------------------------- commands


def cmd_run(args) -> int:
    cfg = load_config(args.scenario, args.config, args.seed, getattr(args, "gamma", None))
    out = Path(args.out or f"out/{args.scenario}")
    out.mkdir(parents=True, exist_ok=True)
    report = {"scenario": args.scenario, "seed": cfg["seed"], "config": cfg, "problems": validate(args.scenario, cfg)}
    try:
        res = DRIVERS[args.scenario](cfg)
    except StageError as exc:
        report.update(passed=False, error={"stage": exc.stage, "message": str(exc)})
        (out / "report.json").write_text(dumps(report))
        print(f"stage failure: {exc}", file=sys.stderr)
        return 1
    report.update(passed=res.passed, checks=res.checks, results=res.report)
    (out / "report.json").write_text(dumps(report))
    write_csv(out / "convergence.csv", res.rows)
    for name, rows in res.tables.items():
        write_csv(out / name, rows)
    if args.pgm:
        for name, a in res.rasters.items():
            write_pgm(out / name, a)
    for name, c in res.checks.items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name}")
    return 0 if res.passed else 1


def cmd_validate(args) -> int:
    cfg = load_config(args.scenario, args.config, args.seed)
    problems = validate(args.scenario, cfg)
    sys.stdout.write(dumps({"scenario": args.scenario, "config": cfg, "problems": problems}))
    return 1 if problems else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="divfree", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write report.json and convergence.csv")
    val = sub.add_parser("validate", help="check a configuration without running it")
    for p in (run, val):
        p.add_argument("scenario", choices=sorted(DRIVERS))
        p.add_argument("--config", help="JSON configuration overriding the scenario defaults")
        p.add_argument("--seed", type=int)
    run.add_argument("--out", help="output directory (default out/<scenario>)")
    run.add_argument("--gamma", type=float, help="Hoelder exponent override")
    run.add_argument("--pgm", action="store_true", help="also write PGM rasters")
    run.set_defaults(func=cmd_run)
    val.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # drivers reject fixture/scenario combinations and bad parameters with ValueError
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
