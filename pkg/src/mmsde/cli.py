"""Command-line front end: one JSON config per experiment, artifacts written to output_dir.

Exit status: 0 success, 2 invalid configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
import time
from pathlib import Path as FsPath

import jsonschema
import numpy as np

from mmsde import __version__
from mmsde.csvio import read_csv, write_rows
from mmsde.errors import ConfigError, MissingInput, MMSDEError, ZeroHits
from mmsde.flil import build_limit_set_net, flil_experiment
from mmsde.ldp_harness import Always, EndpointIn, Never, fw_tube_estimate, ldp_scan
from mmsde.monotone_ops import operator_property_report, set_from_dict
from mmsde.msde_solver import ModelSpec, integrate, integrate_yosida, simulate
from mmsde.paths import Control, TimeGrid, brownian_values
from mmsde.rate_function import RateConfig, rate_endpoint

log = logging.getLogger("mmsde")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
RUNS = ("simulate", "yosida-converge", "rate", "ldp-scan", "fw-tube", "flil", "validate-ops")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": _num, "minItems": 1}
_scheme = {"enum": ["prox", "bridge"]}
_nint = {"type": "integer", "minimum": 1}


def _params(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


PARAM_SCHEMAS = {
    "simulate": _params({"eps": {"type": "number", "minimum": 0}, "scheme": _scheme, "control": _vec}),
    "yosida-converge": _params({"eps": {"type": "number", "minimum": 0}, "alphas": {"type": "array", "items": _pos},
                                "paths": _nint}, ["alphas"]),
    "rate": _params({"target": {"type": "object"}, "control_steps": _nint, "restarts": _nint}, ["target"]),
    "ldp-scan": _params({"event": {"type": "object"}, "eps_grid": {"type": "array", "items": _pos, "minItems": 1},
                         "n": _nint, "scheme": _scheme, "compare_rate": {"type": "boolean"}},
                        ["event", "eps_grid", "n"]),
    "fw-tube": _params({"control": _vec, "alpha": _pos, "eta": {"type": "number", "minimum": 0},
                        "eps_grid": {"type": "array", "items": _pos, "minItems": 1}, "n": _nint, "scheme": _scheme},
                       ["control", "alpha", "eta", "eps_grid", "n"]),
    "flil": _params({"c": {"type": "number", "exclusiveMinimum": 1}, "jmax": _nint,
                     "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
                     "small_time": {"type": "boolean"}, "net_size": _nint, "net_seed": {"type": "integer"},
                     "polish": {"type": "boolean"}, "scheme": _scheme, "window": _nint,
                     "threshold": _pos}, ["c", "jmax"]),
    "validate-ops": _params({"cases": _nint}),
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "run": {"enum": list(RUNS)},
        "model": {
            "type": "object",
            "properties": {"m": _nint, "k": _nint, "drift": {"type": "object"}, "diffusion": {"type": "object"},
                           "operator": {"type": "object"}, "x0": _vec},
            "required": ["m", "k", "drift", "diffusion", "x0"],
            "additionalProperties": False,
        },
        "grid": {"type": "object", "properties": {"T": _num, "N": _num}, "required": ["T", "N"],
                 "additionalProperties": False},
        "params": {"type": "object"},
        "master_seed": {"type": "integer"},
        "output_dir": {"type": "string"},
    },
    "required": ["run", "model", "grid"],
    "additionalProperties": False,
}


def validate_config(cfg: dict) -> dict:
    """Schema check, then construction of every typed object; raises ConfigError."""
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
        jsonschema.validate(cfg.get("params", {}), PARAM_SCHEMAS[cfg["run"]])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    g = cfg["grid"]
    try:
        N = g["N"]
        grid = TimeGrid(float(g["T"]), int(N) if float(N).is_integer() else N)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None
    try:
        model = ModelSpec.from_dict(cfg["model"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"model: {exc}") from None
    return {"grid": grid, "model": model}


# ---------------------------------------------------------------------------
# runs; each returns (artifact names, summary dict)
# ---------------------------------------------------------------------------


def _event(d: dict):
    kind = d.get("kind")
    if kind == "always":
        return Always()
    if kind == "never":
        return Never()
    if kind == "endpoint":
        return EndpointIn(set_from_dict(d["target"]))
    raise ConfigError(f"unknown event kind {kind!r}")


def _run_simulate(model, grid, p, seed, workers, out):
    h = Control.constant(grid, p["control"]) if "control" in p else None
    sol = simulate(model, p.get("eps", 0.0), h=h, W=seed, grid=grid, scheme=p.get("scheme", "prox"))
    sol.to_csv(out / "simulate.csv")
    return ["simulate.csv"], {"x_T": sol.X.values[-1].tolist(), "k_variation": float(sol.k_variation[-1])}


def _run_yosida(model, grid, p, seed, workers, out):
    paths, eps = p.get("paths", 16), p.get("eps", 1.0)
    W = np.stack([brownian_values(model.k, grid, seed, r) for r in range(paths)])
    dW = np.diff(W, axis=1)
    x0 = np.broadcast_to(model.x0, (paths, model.m))
    ref, _ = integrate(model, grid.steps, x0, eps, dW)
    rows = []
    for a in p["alphas"]:
        Xa = integrate_yosida(model, a, grid.steps, x0, eps, dW)
        rows.append((a, float(np.mean(np.max(np.linalg.norm(Xa - ref, axis=-1), axis=-1)))))
    write_rows(out / "yosida_converge.csv", ["alpha", "mean_sup_distance"], rows)
    return ["yosida_converge.csv"], {"mean_sup_distance": [r[1] for r in rows]}


def _run_rate(model, grid, p, seed, workers, out):
    cfg = RateConfig(control_steps=p.get("control_steps", 8), restarts=p.get("restarts", 8), seed=seed,
                     workers=workers)
    res = rate_endpoint(model, set_from_dict(p["target"]), grid, cfg)
    d = res.to_dict()
    arts = ["rate.json"]
    d["control_csv_path"] = None
    if res.minimizer is not None:
        res.minimizer.to_csv(out / "rate_control.csv")
        d["control_csv_path"] = "rate_control.csv"
        arts.append("rate_control.csv")
    _write_json(out / "rate.json", d)
    return arts, d


def _run_ldp(model, grid, p, seed, workers, out):
    event = _event(p["event"])
    reference = None
    if p.get("compare_rate", False) and isinstance(event, EndpointIn):
        r = rate_endpoint(model, event.target, grid, RateConfig(seed=seed, workers=workers))
        reference = -r.value
    scan = ldp_scan(model, event, p["eps_grid"], p["n"], seed, grid, p.get("scheme", "prox"), workers,
                    reference=reference)
    write_rows(out / "ldp_scan.csv", ["epsilon", "phat", "stderr", "eps_log_p", "ci_lo", "ci_hi"], scan.table())
    summary = scan.summary()
    _write_json(out / "ldp_scan.json", summary)
    if scan.all_zero:
        raise ZeroHits("ldp_scan: no hits at any epsilon")
    return ["ldp_scan.csv", "ldp_scan.json"], summary


def _run_tube(model, grid, p, seed, workers, out):
    h = Control.constant(grid, p["control"])
    rows = []
    for eps in p["eps_grid"]:
        r = fw_tube_estimate(model, h, p["alpha"], p["eta"], eps, p["n"], seed, p.get("scheme", "prox"), workers)
        half = 1.96 * r.std_error
        rows.append((eps, r.estimate, r.std_error, r.estimate - half, r.estimate + half, r.hits))
    write_rows(out / "fw_tube.csv", ["epsilon", "estimate", "stderr", "ci_lo", "ci_hi", "hits"], rows)
    return ["fw_tube.csv"], {"estimates": [r[1] for r in rows]}


def _run_flil(model, grid, p, seed, workers, out):
    net = build_limit_set_net(model, p.get("net_size", 256), p.get("net_seed", 0), grid=grid)
    rep = flil_experiment(model, p["c"], p["jmax"], p.get("seeds", [seed]), p.get("small_time", False), net=net,
                          grid=grid, window=p.get("window", 10), polish=p.get("polish", False),
                          scheme=p.get("scheme", "prox"), workers=workers)
    write_rows(out / "flil.csv", ["seed", "j", "u", "dist", "nearest_member_id"], rep.rows)
    summary = rep.summary(p.get("threshold", 0.35))
    _write_json(out / "flil.json", summary)
    return ["flil.csv", "flil.json"], summary


def _run_validate_ops(model, grid, p, seed, workers, out):
    rep = operator_property_report(model.op, model.m, p.get("cases", 1000), seed)
    d = {"operator": model.op.to_dict(), **rep.to_dict(), "report": "PASS" if rep.passed else "FAIL"}
    _write_json(out / "validate_ops.json", d)
    if not rep.passed:
        raise _Failed(f"validate-ops: operator properties violated: {rep.to_dict()}")
    return ["validate_ops.json"], d


class _Failed(MMSDEError):
    pass


RUNNERS = {
    "simulate": _run_simulate,
    "yosida-converge": _run_yosida,
    "rate": _run_rate,
    "ldp-scan": _run_ldp,
    "fw-tube": _run_tube,
    "flil": _run_flil,
    "validate-ops": _run_validate_ops,
}


def _write_json(path, obj) -> None:
    path = FsPath(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def run_experiment(cfg: dict, workers: int = 1, seed: int | None = None,
                   output_dir: str | None = None) -> tuple[int, dict]:
    """Validate and run one experiment; returns (exit status, manifest)."""
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg["master_seed"] = seed
    out_dir = output_dir or os.environ.get("MMSDE_OUT") or cfg.get("output_dir") or "mmsde_out"
    manifest = {"config": cfg, "version": __version__, "workers": workers, "artifacts": [], "message": ""}
    t0 = time.perf_counter()
    try:
        objs = validate_config(cfg)
    except ConfigError as exc:
        manifest.update(status=EXIT_CONFIG, message=str(exc))
        log.error("%s", exc)
        return EXIT_CONFIG, manifest
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    try:
        arts, summary = RUNNERS[cfg["run"]](objs["model"], objs["grid"], cfg.get("params", {}),
                                             cfg.get("master_seed", 0), workers, out)
        manifest["artifacts"], manifest["summary"] = arts, summary
    except ConfigError as exc:
        status, manifest["message"] = EXIT_CONFIG, str(exc)
    except MMSDEError as exc:
        status, manifest["message"] = EXIT_NUMERIC, f"{cfg['run']}: {type(exc).__name__}: {exc}"
    if status != EXIT_OK:
        log.error("%s", manifest["message"])
    manifest["status"] = status
    manifest["wall_time_s"] = time.perf_counter() - t0
    _write_json(out / "manifest.json", manifest)
    return status, manifest


# ---------------------------------------------------------------------------
# plot data
# ---------------------------------------------------------------------------


def emit_plotdata(result_dir) -> list[str]:
    """Whitespace-separated column files next to the results; returns their names.

    simulate        simulate.dat          t x_1 .. x_m
    ldp-scan        ldp_scan.dat          epsilon eps_log_p ci_halfwidth
    flil            flil_seed<S>.dat      u dist   (one file per seed)
    fw-tube         fw_tube.dat           epsilon estimate stderr
    yosida-converge yosida_converge.dat   alpha mean_sup_distance
    """
    d = FsPath(result_dir)
    mpath = d / "manifest.json"
    if not mpath.exists():
        raise MissingInput(f"no manifest.json in {d}")
    run = json.loads(mpath.read_text())["config"]["run"]

    def load(name):
        p = d / name
        if not p.exists():
            raise MissingInput(f"missing result file {p}")
        return read_csv(p)

    def dump(name, cols):
        np.savetxt(d / name, np.column_stack(cols), fmt="%.17g")
        return name

    if run == "simulate":
        header, data = load("simulate.csv")
        xs = [i for i, h in enumerate(header) if h.startswith("x_")]
        return [dump("simulate.dat", [data[:, 0]] + [data[:, i] for i in xs])]
    if run == "ldp-scan":
        _, data = load("ldp_scan.csv")
        return [dump("ldp_scan.dat", [data[:, 0], data[:, 3], 0.5 * (data[:, 5] - data[:, 4])])]
    if run == "flil":
        _, data = load("flil.csv")
        return [dump(f"flil_seed{int(s)}.dat", [data[data[:, 0] == s, 2], data[data[:, 0] == s, 3]])
                for s in np.unique(data[:, 0])]
    if run == "fw-tube":
        _, data = load("fw_tube.csv")
        return [dump("fw_tube.dat", [data[:, 0], data[:, 1], data[:, 2]])]
    if run == "yosida-converge":
        _, data = load("yosida_converge.csv")
        return [dump("yosida_converge.dat", [data[:, 0], data[:, 1]])]
    raise MissingInput(f"run type {run!r} has no plot data")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmsde", description="Multivalued SDE experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in RUNS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--seed", type=int, default=None, help="overrides master_seed")
        if name == "flil":
            sp.add_argument("--c", type=float)
            sp.add_argument("--jmax", type=int)
            sp.add_argument("--seeds", type=lambda s: [int(v) for v in s.split(",")])
            sp.add_argument("--small-time", action="store_true", default=None)
            sp.add_argument("--net-size", type=int)
    sp = sub.add_parser("plotdata")
    sp.add_argument("--input", required=True, help="result directory of a finished run")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    if args.command == "plotdata":
        try:
            for name in emit_plotdata(args.input):
                print(name)
        except MissingInput as exc:
            log.error("%s", exc)
            return EXIT_CONFIG
        return EXIT_OK
    try:
        cfg = json.loads(FsPath(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_CONFIG
    if not isinstance(cfg, dict):
        log.error("config must be a JSON object")
        return EXIT_CONFIG
    cfg.setdefault("run", args.command)
    if cfg["run"] != args.command:
        log.error("config is for %r, not %r", cfg["run"], args.command)
        return EXIT_CONFIG
    if args.command == "flil":
        p = cfg.setdefault("params", {})
        for key, val in (("c", args.c), ("jmax", args.jmax), ("seeds", args.seeds),
                         ("small_time", args.small_time), ("net_size", args.net_size)):
            if val is not None:
                p[key] = val
    status, manifest = run_experiment(cfg, args.workers, args.seed)
    print(json.dumps({"status": status, "artifacts": manifest["artifacts"], "message": manifest["message"]}))
    return status


if __name__ == "__main__":
    sys.exit(main())
