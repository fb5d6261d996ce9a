"""Config-driven batch runner.

    python -m fkbismut run config.json [--seed S] [--paths N] [--workers W] [--output PATH]
    python -m fkbismut sweep config.json ...

Exit codes: 0 ok, 1 runtime error, 2 invalid config, 3 too many failed
paths, 4 oracle requested but missing, 5 oracle tolerance failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys

import jsonschema
import numpy as np

from . import estimators, fields, geometry, oracles
from .paths import SimConfig, SimulationError
from .schedules import ScheduleError, ScheduleSet, from_spec

log = logging.getLogger("fkbismut")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_FAILURES, EXIT_ORACLE_MISSING, EXIT_TOLERANCE = 0, 1, 2, 3, 4, 5
TOLERANCE_SE = 3.0

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_builtin = {
    "type": "object",
    "properties": {"builtin": {"type": "string"}, "params": {"type": "object"}},
    "required": ["builtin"],
    "additionalProperties": False,
}
_schedule = {
    "oneOf": [
        {"const": "default"},
        {
            "type": "object",
            "properties": {
                "breakpoints": _vec,
                "values": _vec,
                "relative": {"type": "boolean"},
                "name": {"type": "string"},
            },
            "required": ["breakpoints", "values"],
            "additionalProperties": False,
        },
    ]
}

SCHEMA = {
    "type": "object",
    "properties": {
        "model": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["euclidean", "sphere", "hyperbolic", "chart"]},
                "dim": {"type": "integer", "minimum": 1},
                "curvature": _num,
                "chart": {"enum": ["stereographic_sphere", "poincare_ball", "gaussian_bump_metric"]},
                "chart_params": {"type": "object"},
            },
            "required": ["kind", "dim"],
            "additionalProperties": False,
        },
        "fields": {
            "type": "object",
            "properties": {"potential": _builtin, "drift": _builtin, "payoff": _builtin, "v_min": _num},
            "additionalProperties": False,
        },
        "x0": _vec,
        "v": _vec,
        "w": _vec,
        "T": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "n_paths": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "schedules": {
            "type": "object",
            "properties": {"k_grad": _schedule, "k": _schedule, "l": _schedule},
            "additionalProperties": False,
        },
        "estimators": {
            "type": "array",
            "items": {"enum": list(estimators.KINDS) + ["martingale_drift"]},
            "minItems": 1,
            "uniqueItems": True,
        },
        "oracle_compare": {"type": "boolean"},
        "output": {
            "type": "object",
            "properties": {"path": {"type": "string"}, "format": {"enum": ["json", "csv"]}},
            "additionalProperties": False,
        },
        "workers": {"oneOf": [{"type": "integer", "minimum": 1}, {"const": "auto"}]},
        "t_grid": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "checkpoints": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "position_bound": {"type": "number", "exclusiveMinimum": 0},
        "cond_bound": {"type": "number", "exclusiveMinimum": 0},
        "max_failure_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "backend": {"enum": ["auto", "kernel", "python"]},
        "chunk_size": {"type": "integer", "minimum": 1},
    },
    "required": ["model", "x0", "T", "dt", "n_paths", "seed", "estimators"],
    "additionalProperties": False,
}

DEFAULTS = {
    "fields": {},
    "schedules": {},
    "oracle_compare": False,
    "output": {},
    "workers": "auto",
    "checkpoints": [0.25, 0.5, 0.75],
    "position_bound": 1e8,
    "cond_bound": 1e8,
    "max_failure_fraction": 0.0,
    "backend": "auto",
    "chunk_size": 4096,
}


class ConfigError(ValueError):
    pass


_POTENTIALS = {"zero": fields.potential_zero, "constant": fields.potential_constant, "quadratic": fields.potential_quadratic}
_DRIFTS = {"zero": fields.drift_zero, "ou": fields.drift_ou}
_PAYOFFS = {
    "one": fields.payoff_one,
    "constant": fields.payoff_constant,
    "sin": fields.payoff_sin,
    "linear": fields.payoff_linear,
    "quadratic": fields.payoff_quadratic,
    "gaussian_bump": fields.payoff_gaussian_bump,
    "height": fields.payoff_height,
    "legendre": fields.payoff_legendre,
    "cap": fields.payoff_cap,
}
_CHARTS = {
    "stereographic_sphere": geometry.stereographic_sphere,
    "poincare_ball": geometry.poincare_ball,
    "gaussian_bump_metric": geometry.gaussian_bump_metric,
}


def _make(table, spec, what):
    spec = spec or {"builtin": "zero" if what != "payoff" else "one"}
    name = spec["builtin"]
    if name not in table:
        raise ConfigError(f"unknown {what} builtin {name!r}; choose from {sorted(table)}")
    try:
        return table[name](**spec.get("params", {}))
    except TypeError as exc:
        raise ConfigError(f"bad params for {what} {name!r}: {exc}") from None


def resolve(doc: dict) -> dict:
    """Validate against the schema and expand defaults."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    out = json.loads(json.dumps(DEFAULTS))
    for k, v in doc.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    m = out["model"]
    if m["kind"] in ("sphere", "hyperbolic"):
        m.setdefault("curvature", 1.0 if m["kind"] == "sphere" else -1.0)
    elif m["kind"] == "euclidean":
        m.setdefault("curvature", 0.0)
    for slot, default in (("potential", "zero"), ("drift", "zero"), ("payoff", "one")):
        out["fields"].setdefault(slot, {"builtin": default})
        out["fields"][slot].setdefault("params", {})
    for role in ("k_grad", "k", "l"):
        out["schedules"].setdefault(role, "default")
    return out


def build_model(m):
    kind = m["kind"]
    try:
        if kind == "euclidean":
            return geometry.Euclidean(m["dim"])
        if kind == "sphere":
            return geometry.sphere(m["dim"], m["curvature"])
        if kind == "hyperbolic":
            return geometry.hyperbolic(m["dim"], m["curvature"])
        if "chart" not in m:
            raise ConfigError("model.kind 'chart' needs model.chart")
        params = dict(m.get("chart_params", {}))
        if m["chart"] != "gaussian_bump_metric" and "curvature" in m:
            params.setdefault("curvature", m["curvature"])
        return _CHARTS[m["chart"]](m["dim"], **params)
    except (geometry.GeometryError, TypeError) as exc:
        raise ConfigError(f"model: {exc}") from None


def build_fields(fd):
    try:
        spec = fields.FieldSpec(
            potential=_make(_POTENTIALS, fd.get("potential"), "potential"),
            drift=_make(_DRIFTS, fd.get("drift"), "drift"),
            payoff=_make(_PAYOFFS, fd.get("payoff"), "payoff"),
        )
    except fields.FieldError as exc:
        raise ConfigError(str(exc)) from None
    if "v_min" in fd:
        spec.potential.v_min = float(fd["v_min"])
    return spec


def build_sim_config(res: dict, T=None) -> SimConfig:
    model = build_model(res["model"])
    fs = build_fields(res["fields"])
    T = float(res["T"] if T is None else T)
    try:
        sched = ScheduleSet(*(from_spec(res["schedules"][r], r, T) for r in ("k_grad", "k", "l")))
    except ScheduleError as exc:
        raise ConfigError(f"schedules: {exc}") from None
    kinds = tuple(k for k in res["estimators"] if k != "martingale_drift") or ("gradient",)
    try:
        cfg = SimConfig(
            T=T, dt=float(res["dt"]), n_paths=res["n_paths"], seed=res["seed"], model=model, fields=fs,
            x0=np.asarray(res["x0"], dtype=float),
            v=None if "v" not in res else np.asarray(res["v"], dtype=float),
            w=None if "w" not in res else np.asarray(res["w"], dtype=float),
            schedules=sched, estimators=kinds, position_bound=res["position_bound"],
            cond_bound=res["cond_bound"], backend=res["backend"], chunk_size=res["chunk_size"],
        )
    except (ValueError, geometry.GeometryError) as exc:
        raise ConfigError(str(exc)) from None
    if model.kind == "chart" and not model.valid(cfg.x0[None])[0]:
        raise ConfigError("x0 outside the chart's validity region")
    # startup probe of dV / hessV against finite differences
    rng = np.random.default_rng(0)
    probes = cfg.x0 + 0.1 * rng.standard_normal((8, len(cfg.x0)))
    try:
        fs.check_derivatives(probes, t=0.0)
    except fields.FieldError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _records_for(res, cfg, workers, t=None):
    """Run the estimators of one configuration; returns (records, status)."""
    status = EXIT_OK
    recs = []
    kinds = [k for k in res["estimators"] if k != "martingale_drift"]
    reports = []
    if kinds:
        reports.extend(estimators.run(cfg, kinds, workers).values())
    if "martingale_drift" in res["estimators"]:
        cps = [c for c in res["checkpoints"] if c <= cfg.T]
        reports.extend(estimators.martingale_drift_check(cfg, cps, workers))
    case = None
    if res["oracle_compare"]:
        try:
            case = oracles.lookup(cfg.model, cfg.fields)
        except oracles.OracleMissing as exc:
            log.error("%s", exc)
            status = EXIT_ORACLE_MISSING
    for rep in reports:
        rec = rep.to_dict()
        if t is not None:
            rec["t"] = t
        if case is not None:
            if rep.kind == "martingale_drift":
                # every checkpoint mean equals the t = 0 value k(0) dP_T f(v)
                k0 = float(cfg.schedules.k_grad.eval(0.0)[0])
                ref = k0 * case.quantity("gradient", cfg.T, cfg.x0, cfg.frame0, cfg.v, cfg.w)
            else:
                ref = case.quantity(rep.kind, cfg.T, cfg.x0, cfg.frame0, cfg.v, cfg.w)
            rec.update(estimators.compare(rep, ref))
            if rec["error_se_ratio"] > TOLERANCE_SE and status == EXIT_OK:
                status = EXIT_TOLERANCE
        if rep.n_paths_failed > res["max_failure_fraction"] * cfg.n_paths:
            status = EXIT_FAILURES
        recs.append(rec)
    return recs, status


def _write(recs, res, fmt, path):
    if fmt == "json":
        text = "".join(json.dumps(_jsonable(r), sort_keys=True) + "\n" for r in recs)
    else:
        cols = ["t", "kind", "estimate", "std_error", "n_paths_used", "n_paths_failed", "oracle", "abs_error",
                "error_se_ratio"]
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(cols + ["term_breakdown", "config"])
        for r in recs:
            wr.writerow([r.get(c, "") for c in cols]
                        + [json.dumps(_jsonable(r["term_breakdown"]), sort_keys=True),
                           json.dumps(_jsonable(r["config"]), sort_keys=True)])
        text = buf.getvalue()
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, float)):
        x = float(o)
        return x if math.isfinite(x) else str(x)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    return o


def load(path, overrides):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    for key in ("seed", "n_paths", "workers"):
        if overrides.get(key) is not None:
            doc[key] = overrides[key]
    if overrides.get("output"):
        doc.setdefault("output", {})
        doc["output"] = {**doc["output"], "path": overrides["output"]}
    return resolve(doc)


def cmd_run(res, sweep=False):
    workers = estimators.resolve_workers(res["workers"])
    out = res["output"]
    if sweep:
        grid = res.get("t_grid") or []
        if not grid:
            raise ConfigError("sweep needs a non-empty t_grid")
        recs, status = [], EXIT_OK
        for t in grid:
            cfg = build_sim_config(res, T=t)
            r, s = _records_for(res, cfg, workers, t=t)
            recs += r
            status = status or s
        fmt = out.get("format", "csv")
    else:
        cfg = build_sim_config(res)
        recs, status = _records_for(res, cfg, workers)
        fmt = out.get("format", "json")
    _write(recs, res, fmt, out.get("path"))
    return status


def main(argv=None):
    ap = argparse.ArgumentParser(prog="fkbismut", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in ("run", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("config")
        p.add_argument("--seed", type=int)
        p.add_argument("--paths", type=int, dest="n_paths")
        p.add_argument("--workers", type=lambda s: s if s == "auto" else int(s))
        p.add_argument("--output")
        p.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        res = load(args.config, vars(args))
        return cmd_run(res, sweep=args.cmd == "sweep")
    except ConfigError as exc:
        log.error("invalid config: %s", exc)
        return EXIT_CONFIG
    except oracles.OracleMissing as exc:
        log.error("%s", exc)
        return EXIT_ORACLE_MISSING
    except (SimulationError, fields.FieldError, geometry.GeometryError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
