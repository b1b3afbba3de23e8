"""Batch command-line front end.

Usage::

    python -m pspin_replica SUBCOMMAND [--config PATH] [--set key=value ...]
                            [--seed U64] [--threads K] [--out DIR] [--wall-clock]

Configuration is a flat ``key = value`` file (``#`` starts a comment); list
values are comma separated.  Precedence: built-in defaults < config file <
``--set`` < ``--seed``/``--threads``.  Each run writes ``SUBCOMMAND.csv`` and
``SUBCOMMAND.json`` into ``--out``.  The JSON report holds ``command``,
``config`` (every key, with defaulted keys listed), ``results``, ``margins``
and ``timings``.  ``timings`` counts deterministic work units; wall-clock
seconds are added only with ``--wall-clock`` so reruns stay byte-identical.

Exit codes: 0 success, 2 config error, 3 budget exceeded, 4 margin violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .core import ModelParams
from .errors import BudgetExceeded, ConfigError, MarginViolation, ReplicaError
from . import bounds, disorder, gaussian, oracle, rs

T_DEFAULT = [round(0.1 * i, 1) for i in range(10)]

# key -> parser
KEY_TYPES = {
    "p": int, "beta": float, "h": float, "a": float, "m": int,
    "N": int, "N_list": "ints", "t": float, "t_list": "floats", "q": float, "q0": "auto_float",
    "u": float, "u_vec": "floats", "grid": int, "order": "auto_int",
    "n_samples": int, "seed": int, "threads": int,
}

COMMON = {"p": 2, "beta": 0.3, "h": 0.0}

SCHEMAS = {
    "rs-max": {**COMMON, "a": 2.0, "grid": 201, "order": "auto"},
    "crit-solve": {**COMMON, "a": 2.0, "grid": 2001, "order": "auto"},
    "bounds": {**COMMON, "a": 2.0, "u_vec": [0.5, -0.2], "order": bounds.BOUNDS_ORDER},
    "oracle-moment": {**COMMON, "a": 2.0, "m": 2, "N_list": [50, 100, 200], "t": 1.0, "q": 0.0},
    "oracle-overlap": {**COMMON, "a": 2.0, "N": 100, "t": 1.0, "q": 0.0},
    "oracle-monotone": {**COMMON, "a": 2.0, "N": 100, "t_list": T_DEFAULT, "q0": "auto"},
    "chain-check": {**COMMON, "a": 4.0, "N": 14, "t": 1.0, "q0": "auto"},
    "mc-moment": {**COMMON, "a": 2.0, "N": 10, "n_samples": 400, "seed": 0, "threads": 1},
    "mc-overlap": {**COMMON, "a": 2.0, "N": 10, "n_samples": 400, "seed": 0, "threads": 1},
    "rate": {**COMMON, "a": 2.0, "N_list": [100, 200, 400], "u": 0.5, "t": 1.0, "q": 0.0},
}

CSV_COLUMNS = {
    "rs-max": ["q0", "value", "unique_max", "n_local_maxima", "grid_max", "order"],
    "crit-solve": ["q", "residual", "rs_value", "is_global_max"],
    "bounds": ["margin", "value", "asserted", "ok"],
    "oracle-moment": ["N", "m", "t", "q", "value", "rs_max", "gap"],
    "oracle-overlap": ["N", "k", "u", "prob", "log_prob", "rate"],
    "oracle-monotone": ["N", "t", "q0", "delta_expectation", "increment"],
    "chain-check": ["N", "t", "q0", "m1", "m2", "m3", "m4"],
    "mc-moment": ["N", "a", "mean", "stderr", "ess", "ci_low", "ci_high"],
    "mc-overlap": ["N", "k", "u", "prob", "stderr", "ess"],
    "rate": ["N", "k", "u_N", "rate"],
}

TOLERANCES = {
    "quadrature_adapt_rtol": gaussian.ADAPT_RTOL,
    "psd_neg_rtol": gaussian.NEG_RTOL,
    "rs_tie_tol": rs.TIE_TOL,
    "lambda_box": bounds.LAMBDA_BOX,
    "glue_tol": bounds.GLUE_TOL,
    "prob_sum_tol": 1e-12,
    "monotone_slack": 1e-10,
    "chain_tol": 1e-12,
    "ess_min": disorder.ESS_MIN,
}


def parse_value(key: str, text: str):
    kind = KEY_TYPES.get(key)
    if kind is None:
        raise ConfigError(f"unknown key {key!r}")
    text = text.strip()
    try:
        if kind in ("auto_int", "auto_float") and text == "auto":
            return "auto"
        if kind == "ints":
            return [int(v) for v in text.split(",") if v.strip()]
        if kind == "floats":
            return [float(v) for v in text.split(",") if v.strip()]
        if kind == "auto_int":
            return int(text)
        if kind == "auto_float":
            return float(text)
        return kind(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {text!r}") from exc


def read_config(path: str) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def build_config(command: str, file_items: dict, overrides: list, seed=None, threads=None):
    schema = SCHEMAS[command]
    raw = dict(file_items)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value
    cfg, defaulted = {}, []
    for key, text in raw.items():
        if key not in schema:
            raise ConfigError(f"key {key!r} is not used by {command}")
        cfg[key] = parse_value(key, text)
    for key, flag in (("seed", seed), ("threads", threads)):
        if flag is not None:
            if key not in schema:
                raise ConfigError(f"--{key} is not used by {command}")
            cfg[key] = flag
    for key, default in schema.items():
        if key not in cfg:
            cfg[key] = default
            defaulted.append(key)
    return {k: cfg[k] for k in schema}, sorted(defaulted)


def _params(cfg) -> ModelParams:
    try:
        return ModelParams.create(p=cfg["p"], beta=cfg["beta"], h=cfg["h"], a=cfg["a"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _integer_a(cfg, allowed) -> int:
    a = cfg["a"]
    if a != int(a) or int(a) not in allowed:
        raise ConfigError(f"a must be one of {sorted(allowed)} here, got {a}")
    return int(a)


def _margin(name, value, asserted, tol=0.0):
    return {"name": name, "value": value, "asserted": asserted, "ok": bool(value >= -tol)}


def _order(cfg):
    return None if cfg["order"] == "auto" else cfg["order"]


def _q0(cfg, params):
    if cfg["q0"] != "auto":
        return float(cfg["q0"])
    return rs.rs_maximize(params).q0


def cmd_rs_max(cfg):
    params = _params(cfg)
    rep = rs.rs_maximize(params, grid=cfg["grid"])
    order = _order(cfg) or rs.quad_order(params)
    row = {"q0": rep.q0, "value": rep.value, "unique_max": rep.unique_max,
           "n_local_maxima": len(rep.local_maxima), "grid_max": rep.grid_max, "order": order}
    margins = [_margin("refined_ge_grid", rep.value - rep.grid_max, True, 1e-12)]
    return rep.as_dict(), [row], margins, {"rs_evaluations": cfg["grid"]}


def cmd_crit_solve(cfg):
    params = _params(cfg)
    pts = rs.critical_points(params, grid=cfg["grid"])
    best = rs.rs_maximize(params)
    rows = [{"q": q, "residual": r, "rs_value": rs.rs_value(q, params),
             "is_global_max": bool(abs(q - best.q0) < 1e-8)} for q, r in pts]
    margins = [_margin(f"residual_at_{i}", -abs(r["residual"]), True, 1e-9) for i, r in enumerate(rows)]
    return {"critical_points": rows, "q0": best.q0}, rows, margins, {"grid": cfg["grid"]}


def cmd_bounds(cfg):
    params = _params(cfg)
    u_vec = np.asarray(cfg["u_vec"], dtype=float)
    n = u_vec.size
    rep = bounds.chain_verify(float(u_vec[0]), n, params, u_vec=u_vec, order=cfg["order"])
    asserted = {"holder", "holder_gap", "III", "Psi_inf_le_embedding"}
    tol = {"holder": 1e-8, "holder_gap": 1e-9, "III": 1e-10, "Psi_inf_le_embedding": 1e-8}
    margins = [_margin(k, v, k in asserted, tol.get(k, 0.0)) for k, v in rep.margins.items()]
    if rep.strict:
        margins.append(_margin("strict_gap_positive", rep.holder_gap, True, 0.0)
                       | {"ok": bool(rep.holder_gap > 0)})
    rows = [{"margin": m["name"], "value": m["value"], "asserted": m["asserted"], "ok": m["ok"]} for m in margins]
    return rep.as_dict(), rows, margins, {"quadrature_nodes": cfg["order"]}


def cmd_oracle_moment(cfg):
    params = _params(cfg)
    m = cfg["m"]
    rows = []
    rs_max = rs.rs_maximize(params).value if (cfg["t"] == 1.0 and m == params.a) else math.nan
    for N in cfg["N_list"]:
        val = oracle.annealed_moment_exact(N, m, params, cfg["t"], cfg["q"])
        rows.append({"N": N, "m": m, "t": cfg["t"], "q": cfg["q"], "value": val,
                     "rs_max": rs_max, "gap": val - rs_max})
    work = {"histograms": sum(oracle.multichoose(2 ** (m - 1), N) for N in cfg["N_list"])}
    return {"rows": rows}, rows, [], work


def cmd_oracle_overlap(cfg):
    params = _params(cfg)
    _integer_a(cfg, {2, 3, 4})
    N = cfg["N"]
    d = oracle.tilted_overlap_distribution(N, params, cfg["t"], cfg["q"])
    rows = [{"N": N, "k": int(k), "u": k / N, "prob": float(pr), "log_prob": float(lp),
             "rate": -float(lp) / N} for k, pr, lp in zip(d.k, d.probs, d.log_probs)]
    total = float(np.sum(d.probs))
    margins = [_margin("prob_sum", TOLERANCES["prob_sum_tol"] - abs(total - 1.0), True)]
    if params.h == 0:
        asym = float(np.max(np.abs(d.probs - d.probs[::-1])))
        margins.append(_margin("symmetry", 1e-12 - asym, True))
    work = {"histograms": oracle.multichoose(2 ** (int(params.a) - 1), N)}
    return {"prob_sum": total, "n_rows": len(rows)}, rows, margins, work


def cmd_oracle_monotone(cfg):
    params = _params(cfg)
    _integer_a(cfg, {2, 3, 4})
    q0 = _q0(cfg, params)
    N = cfg["N"]
    vals = [oracle.tilted_delta_expectation(N, t, params, q0) for t in cfg["t_list"]]
    rows, margins = [], []
    for i, (t, v) in enumerate(zip(cfg["t_list"], vals)):
        inc = v - vals[i - 1] if i else math.nan
        rows.append({"N": N, "t": t, "q0": q0, "delta_expectation": v, "increment": inc})
        if i:
            margins.append(_margin(f"increment_t{t:g}", inc, True, TOLERANCES["monotone_slack"]))
    margins.append(_margin("nonnegative", min(vals), True, 0.0))
    return {"q0": q0, "values": vals}, rows, margins, {"evaluations": len(vals)}


def cmd_chain_check(cfg):
    params = _params(cfg)
    _integer_a(cfg, {4})
    q0 = _q0(cfg, params)
    N = cfg["N"]
    m1, m2, m3, m4 = oracle.holder_chain_check(N, params, cfg["t"], q0)
    tol = TOLERANCES["chain_tol"]
    margins = [_margin("m1_ge_m2", m1 - m2, True, tol), _margin("m2_ge_m3", m2 - m3, True, tol),
               _margin("m3_ge_m4", m3 - m4, True, tol)]
    row = {"N": N, "t": cfg["t"], "q0": q0, "m1": m1, "m2": m2, "m3": m3, "m4": m4}
    return row, [row], margins, {"histograms": oracle.multichoose(8, N)}


def cmd_mc_moment(cfg):
    params = _params(cfg)
    est = disorder.moment_mc(cfg["N"], cfg["a"], cfg["n_samples"], cfg["seed"], params, threads=cfg["threads"])
    ci = est.ci or (math.nan, math.nan)
    row = {"N": cfg["N"], "a": cfg["a"], "mean": est.mean, "stderr": est.stderr, "ess": est.ess,
           "ci_low": ci[0], "ci_high": ci[1]}
    return est.as_dict(), [row], [], {"samples": cfg["n_samples"]}


def cmd_mc_overlap(cfg):
    params = _params(cfg)
    N = cfg["N"]
    ks, ests = disorder.tilted_overlap_law_mc(N, cfg["a"], cfg["n_samples"], cfg["seed"], params,
                                              threads=cfg["threads"])
    rows = [{"N": N, "k": int(k), "u": k / N, "prob": e.mean, "stderr": e.stderr, "ess": e.ess}
            for k, e in zip(ks, ests)]
    total = sum(e.mean for e in ests)
    notes = sorted({w for e in ests for w in e.warnings})
    return {"prob_sum": total, "warnings": notes}, rows, [], {"samples": cfg["n_samples"]}


def cmd_rate(cfg):
    params = _params(cfg)
    _integer_a(cfg, {2, 3, 4})
    rows = oracle.rate_function(cfg["N_list"], cfg["u"], params, cfg["t"], cfg["q"])
    table = [{k: r[k] for k in ("N", "k", "u_N", "rate")} for r in rows]
    stab = rows[-1].get("stabilizing")
    return {"rows": rows, "stabilizing": stab}, table, [], {"tables": len(rows)}


COMMANDS = {
    "rs-max": cmd_rs_max, "crit-solve": cmd_crit_solve, "bounds": cmd_bounds,
    "oracle-moment": cmd_oracle_moment, "oracle-overlap": cmd_oracle_overlap,
    "oracle-monotone": cmd_oracle_monotone, "chain-check": cmd_chain_check,
    "mc-moment": cmd_mc_moment, "mc-overlap": cmd_mc_overlap, "rate": cmd_rate,
}


def _clean(obj):
    # JSON has no inf/nan; numpy scalars are unwrapped
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pspin-replica", description="Large-deviation computations for the pure p-spin model.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", metavar="PATH")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--out", default=".", metavar="DIR")
    ap.add_argument("--wall-clock", action="store_true", help="add elapsed seconds to timings")
    return ap


def _error(exc, code, out_dir=None):
    obj = {"error": {"type": type(exc).__name__, "message": str(exc), "exit_code": code}}
    text = json.dumps(obj, sort_keys=True)
    print(text, file=sys.stderr)
    if out_dir and os.path.isdir(out_dir):
        with open(os.path.join(out_dir, "error.json"), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return code


def run(command: str, config: dict, wall_clock: bool = False):
    """Run one subcommand on a validated config; returns ``(results, rows, margins, timings)``."""
    start = time.perf_counter()
    results, rows, margins, work = COMMANDS[command](config)
    timings = {"work": work}
    if wall_clock:
        timings["wall_seconds"] = time.perf_counter() - start
    return results, rows, margins, timings


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_items = read_config(args.config) if args.config else {}
        cfg, defaulted = build_config(args.command, file_items, args.overrides, args.seed, args.threads)
        if cfg.get("threads", 1) < 1:
            raise ConfigError("threads must be positive")
        os.makedirs(args.out, exist_ok=True)
        results, rows, margins, timings = run(args.command, cfg, args.wall_clock)
    except ConfigError as exc:
        return _error(exc, 2, args.out)
    except BudgetExceeded as exc:
        return _error(exc, 3, args.out)
    except MarginViolation as exc:
        return _error(exc, 4, args.out)
    except ReplicaError as exc:
        return _error(exc, exc.exit_code, args.out)
    except (ValueError, OSError) as exc:
        return _error(exc, 2, args.out)
    report = {
        "command": args.command,
        "config": {"values": cfg, "defaulted": defaulted, "tolerances": TOLERANCES, "version": __version__},
        "results": results,
        "margins": margins,
        "timings": timings,
    }
    write_csv(os.path.join(args.out, f"{args.command}.csv"), CSV_COLUMNS[args.command], rows)
    with open(os.path.join(args.out, f"{args.command}.json"), "w", encoding="utf-8") as fh:
        json.dump(_clean(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    failed = [m["name"] for m in margins if m["asserted"] and not m["ok"]]
    if failed:
        return _error(MarginViolation(f"asserted margins violated: {', '.join(failed)}"), 4, None)
    return 0


if __name__ == "__main__":
    sys.exit(main())
