"""Command-line front end.

    gllab m0 --b 0 --side 8 --spacing 0.125
    gllab e2 --route both
    gllab check --config default

Every run emits one record (a list for ``sweep``) in JSON or CSV. Records are
cached under ``--cache-dir`` keyed by the command, its canonical parameters
and the seed; a repeated invocation replays the cached record byte for byte.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

log = logging.getLogger("gllab")

SCHEMA_VERSION = 1
CSV_COLUMNS = [
    "command", "params", "energy", "kinetic", "condensation", "quartic", "residual",
    "spacing", "extrapolated_value", "extrapolated_order", "extrapolated_residual",
    "bounds_passed", "bounds_failed", "seed", "wall_time_s",
]
COMMON_DEFAULTS = {"restarts": 4, "seed": 0, "format": "json"}
COMMANDS = ("m0", "mp", "m3d", "abrikosov", "g", "e2", "trial3d", "check", "sweep")


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------
def _floats(text):
    return [float(t) for t in str(text).replace(" ", "").split(",") if t]


def _ints(text):
    return [int(t) for t in str(text).replace(" ", "").split(",") if t]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gllab", description="Reduced Ginzburg-Landau laboratory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--b", type=float)
    common.add_argument("--side", type=float)
    common.add_argument("--N", type=int)
    common.add_argument("--spacing", type=float)
    common.add_argument("--tol", type=float)
    common.add_argument("--restarts", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=Path)
    common.add_argument("--format", choices=["json", "csv"])
    common.add_argument("--cache-dir", type=Path)
    common.add_argument("--no-cache", action="store_true")
    common.add_argument("--threads", type=int)
    common.add_argument("--config", help="key=value file with [section] headers")

    sub.add_parser("m0", parents=[common], help="2D Dirichlet ground energy").add_argument(
        "--spacings", help="comma list; continuum extrapolation over these spacings")
    sub.add_parser("mp", parents=[common], help="2D magnetic-periodic ground energy")
    m3 = sub.add_parser("m3d", parents=[common], help="3D Dirichlet ground energy")
    m3.add_argument("--mhat", type=float, help="constant M for the upper slab bound")
    ab = sub.add_parser("abrikosov", parents=[common], help="c(R) on the lowest Landau band")
    ab.add_argument("--method", choices=["lbfgs", "sphere"])
    g = sub.add_parser("g", parents=[common], help="thermodynamic limit g(b)")
    g.add_argument("--sides", help="comma list of box sides (>= 3)")
    g.add_argument("--spacings")
    e2 = sub.add_parser("e2", parents=[common], help="Abrikosov constant E2")
    e2.add_argument("--route", choices=["lattice", "gl", "both"])
    e2.add_argument("--Ns", help="comma list of flux quanta (lattice route)")
    e2.add_argument("--bs", help="comma list of b in (0,1) (GL route)")
    e2.add_argument("--band-spacing", type=float)
    e2.add_argument("--exponent", type=float, help="side >= (1-b)^-exponent on the GL route")
    tr = sub.add_parser("trial3d", parents=[common], help="bulk trial configuration energy")
    tr.add_argument("--kappa", type=float)
    tr.add_argument("--H", type=float)
    tr.add_argument("--eta", type=float)
    tr.add_argument("--box-side", type=float)
    tr.add_argument("--e2", type=float)
    ck = sub.add_parser("check", parents=[common], help="property suite")
    ck.add_argument("--corrupt", type=float, help="scale minimizers by this factor")
    sub.add_parser("sweep", parents=[common], help="grid of runs from a config file")
    return p


def read_config(path, section):
    """Values of ``[defaults]`` overlaid by ``[section]``; ``default`` means none."""
    if path in (None, "default"):
        return {}
    cp = configparser.ConfigParser()
    cp.optionxform = str
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    out = {}
    for name in ("defaults", section):
        if name and cp.has_section(name):
            out.update(dict(cp.items(name)))
    return out


def _coerce(value, kind):
    if value is None or kind is None:
        return value
    return kind(value)


def resolve(args) -> dict:
    """Merge hard defaults < config file < command-line flags."""
    # a sweep reads its own grid; only [defaults] feeds the common flags
    cfg = read_config(args.config, None if args.command == "sweep" else args.command)
    merged = dict(COMMON_DEFAULTS)
    merged.update(cfg)
    for k, v in vars(args).items():
        if v is not None and v is not False:
            merged[k.replace("-", "_")] = v
    kinds = {"b": float, "side": float, "N": int, "spacing": float, "tol": float,
             "restarts": int, "seed": int, "threads": int, "kappa": float, "H": float,
             "eta": float, "box_side": float, "e2": float, "mhat": float, "corrupt": float,
             "band_spacing": float, "exponent": float}
    for k, kind in kinds.items():
        if k in merged:
            merged[k] = _coerce(merged[k], kind)
    return merged


# --------------------------------------------------------------------------
# records
# --------------------------------------------------------------------------
def _num(x):
    if x is None:
        return None
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    return x if math.isfinite(x) else None


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, int, np.floating, np.integer, bool, np.bool_)):
        return _num(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def record(command, params, energy, breakdown=None, residual=None, spacing=None,
           extrapolated=None, bounds=(), seed=0, details=None):
    return {
        "command": command,
        "params": params,
        "energy": energy,
        "breakdown": breakdown,
        "residual": residual,
        "spacing": spacing,
        "extrapolated": extrapolated,
        "bounds_checked": [dict(b) for b in bounds],
        "seed": seed,
        "wall_time_s": None,
        "details": details or {},
    }


def _result_record(command, params, res, extra_bounds=(), extrapolated=None, details=None):
    bounds = list(res.bounds) + list(extra_bounds)
    bounds.append({"name": "converged", "lhs": res.residual, "rhs": res.tol,
                   "pass": bool(res.converged)})
    det = {"iterations": res.iterations, "restarts_used": res.restarts_used,
           "start": res.start, "side": res.side, "bc": res.bc.value}
    det.update(details or {})
    return record(command, params, res.energy, res.breakdown.as_dict(), res.residual,
                  res.spacing, extrapolated, bounds, res.seed, det)


def _need(p, *names):
    for n in names:
        if p.get(n) is None:
            raise UsageError(f"--{n.replace('_', '-')} is required")


def _check_b(b, positive=False):
    if b is None or not math.isfinite(b) or b < 0 or (positive and b == 0):
        raise UsageError(f"--b must be {'positive' if positive else 'non-negative'}, got {b}")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------
def run_m0(p):
    from .minimize import continuum_extrapolate, minimize_dirichlet_2d
    _need(p, "b", "side")
    _check_b(p["b"])
    tol = p.get("tol") or 1e-6
    spacings = _floats(p["spacings"]) if p.get("spacings") else [p.get("spacing") or 0.25]
    params = {"b": p["b"], "side": p["side"], "spacings": spacings, "tol": tol,
              "restarts": p["restarts"]}
    runs = [minimize_dirichlet_2d(p["b"], p["side"], a, tol=tol, restarts=p["restarts"],
                                  seed=p["seed"]) for a in spacings]
    ex = None
    det = {}
    if len(runs) > 1:
        e = continuum_extrapolate(runs, tol)
        ex = e.as_dict()
        det = {"extrapolation_error": e.error, "extrapolation_flagged": e.flagged,
               "extrapolation_reason": e.reason, "energies": list(e.energies)}
    best = min(runs, key=lambda r: r.spacing)
    return _result_record("m0", params, best, extrapolated=ex, details=det)


def run_mp(p):
    from .minimize import minimize_periodic_2d
    _need(p, "b", "N")
    _check_b(p["b"], positive=True)
    if p["N"] < 1:
        raise UsageError("--N must be a positive integer")
    tol = p.get("tol") or 1e-6
    a = p.get("spacing") or 0.25
    params = {"b": p["b"], "N": p["N"], "spacing": a, "tol": tol, "restarts": p["restarts"]}
    res = minimize_periodic_2d(p["b"], p["N"], a, tol=tol, restarts=p["restarts"], seed=p["seed"])
    return _result_record("mp", params, res)


def run_m3d(p):
    from .minimize import cube_grid, minimize_dirichlet_2d, minimize_dirichlet_3d
    _need(p, "b", "side")
    _check_b(p["b"])
    tol = p.get("tol") or 1e-6
    a = p.get("spacing") or 0.25
    cube_grid(p["side"], a)  # fail fast before the 2D companion run
    params = {"b": p["b"], "side": p["side"], "spacing": a, "tol": tol,
              "restarts": p["restarts"], "mhat": p.get("mhat")}
    res2 = minimize_dirichlet_2d(p["b"], p["side"], a, tol=tol, restarts=p["restarts"],
                                 seed=p["seed"])
    res = minimize_dirichlet_3d(p["b"], p["side"], a, tol=tol, restarts=p["restarts"],
                                seed=p["seed"], companion=res2, mhat=p.get("mhat"))
    return _result_record("m3d", params, res, details={"m0_companion": res2.energy})


def run_abrikosov(p):
    from .landau import lowest_band, minimize_abrikosov
    _need(p, "N")
    if p["N"] < 1:
        raise UsageError("--N must be a positive integer")
    a = p.get("spacing") or 0.125
    tol = p.get("tol") or 1e-10
    method = p.get("method") or "lbfgs"
    params = {"N": p["N"], "spacing": a, "tol": tol, "restarts": p["restarts"], "method": method}
    band = lowest_band(p["N"], a)
    res = minimize_abrikosov(band, tol=tol, restarts=max(1, p["restarts"]), seed=p["seed"],
                             method=method)
    nb = int(np.sum(band.eigenvalues < 2.0))
    bounds = [
        {"name": "band_dimension", "lhs": nb, "rhs": p["N"], "pass": nb == p["N"]},
        {"name": "spectral_gap", "lhs": float(band.eigenvalues[nb]), "rhs": 2.0,
         "pass": float(band.eigenvalues[nb]) > 2.0},
        {"name": "c_range", "lhs": -0.5 * band.grid.volume, "rhs": res.c_value,
         "pass": -0.5 * band.grid.volume <= res.c_value < 0},
    ]
    det = {"density": res.density, "beta_ratio": res.beta_ratio, "iterations": res.iterations,
           "converged": res.converged, "eigenvalues": [float(v) for v in band.eigenvalues],
           "gap_ratio": band.gap_ratio, "side": band.side}
    return record("abrikosov", params, res.c_value, None, None, band.grid.spacing, None,
                  bounds, p["seed"], det)


def _series_record(command, params, s, seed, spacing, extra=None):
    ex = {"value": s.limit, "order": s.fit_exponent, "residual": s.residual}
    det = {"error": s.error, "fit_constant": s.fit_constant, "flagged": s.flagged,
           "reason": s.reason, "points": [list(pt) for pt in s.points],
           "point_errors": list(s.point_errors), "route": s.route}
    det.update(extra or {})
    bounds = []
    if s.limit is not None:
        lo = -0.5
        bounds.append({"name": "range", "lhs": lo, "rhs": s.limit, "pass": lo <= s.limit <= 0})
    return record(command, params, s.limit, None, None, spacing, ex, bounds, seed, det)


def run_g(p):
    from .thermo import estimate_g
    _need(p, "b", "sides")
    _check_b(p["b"])
    sides = _floats(p["sides"])
    tol = p.get("tol") or 1e-6
    a = p.get("spacing") or 0.25
    spacings = _floats(p["spacings"]) if p.get("spacings") else None
    params = {"b": p["b"], "sides": sides, "spacing": a, "spacings": spacings, "tol": tol,
              "restarts": p["restarts"]}
    try:
        s = estimate_g(p["b"], sides, a, tol, spacings, restarts=p["restarts"], seed=p["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return _series_record("g", params, s, p["seed"], min(spacings or [a]))


def run_e2(p):
    from .thermo import estimate_e2_gl, estimate_e2_lattice
    route = p.get("route") or "lattice"
    Ns = _ints(p.get("Ns") or "16,36,64")
    bs = _floats(p.get("bs") or "0.9,0.95,0.975")
    band_a = p.get("band_spacing") or 0.125
    a = p.get("spacing") or 0.25
    tol = p.get("tol") or 1e-6
    exponent = p.get("exponent") or 0.8
    params = {"route": route, "Ns": Ns, "bs": bs, "band_spacing": band_a, "spacing": a,
              "tol": tol, "restarts": p["restarts"], "exponent": exponent}
    out = {}
    try:
        if route in ("lattice", "both"):
            out["lattice"] = estimate_e2_lattice(Ns, band_a, seed=p["seed"])
        if route in ("gl", "both"):
            out["gl"] = estimate_e2_gl(bs, None, a, tol, exponent, restarts=p["restarts"],
                                       seed=p["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    main = out.get("lattice") or out["gl"]
    extra = {k: {"value": s.limit, "error": s.error, "points": [list(x) for x in s.points]}
             for k, s in out.items()}
    rec = _series_record("e2", params, main, p["seed"], band_a if "lattice" in out else a,
                         {"routes": extra})
    if len(out) == 2:
        la, gl = out["lattice"], out["gl"]
        diff = abs(la.limit - gl.limit)
        comb = math.hypot(la.error, gl.error)
        rec["bounds_checked"].append({"name": "routes_agree", "lhs": diff,
                                      "rhs": max(comb, 0.0), "pass": diff <= comb})
        rec["bounds_checked"].append({"name": "routes_within_0.03", "lhs": diff, "rhs": 0.03,
                                      "pass": diff <= 0.03})
    for b in rec["bounds_checked"]:
        if b["name"] == "range":
            b["pass"] = bool(-0.5 <= main.limit < 0)
    return rec


def run_trial3d(p):
    from .thermo import bulk_trial_energy
    _need(p, "kappa", "H")
    N = p.get("N") or 16
    a = p.get("spacing") or 0.25
    tol = p.get("tol") or 1e-6
    params = {"kappa": p["kappa"], "H": p["H"], "N": N, "eta": p.get("eta"),
              "box_side": p.get("box_side") or 1.0, "spacing": a, "e2": p.get("e2"),
              "tol": tol, "restarts": p["restarts"]}
    try:
        rep = bulk_trial_energy(p["kappa"], p["H"], N, p.get("eta"), params["box_side"], a,
                                p.get("e2"), tol, p["restarts"], p["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    bounds = [
        {"name": "cutoff_vanishes_on_layer", "lhs": 0, "rhs": 0, "pass": rep.vanishes_on_layer},
        {"name": "cutoff_identity_inside", "lhs": 1, "rhs": 1, "pass": rep.matches_outside},
        {"name": "normalized_slack_below_0.5", "lhs": rep.normalized_slack, "rhs": 0.5,
         "pass": rep.normalized_slack < 0.5},
    ]
    return record("trial3d", params, rep.energy, None, None, rep.spacing, None, bounds,
                  p["seed"], rep.as_dict())


def _suite_config(p):
    from .thermo import SuiteConfig
    cfg = SuiteConfig()
    raw = read_config(p.get("config"), "check")
    conv = {"bs": lambda v: tuple(_floats(v)), "Ns": lambda v: tuple(_ints(v)),
            "sides": lambda v: tuple(_floats(v)), "g_bs": lambda v: tuple(_floats(v)),
            "g_sides": lambda v: tuple(_floats(v)), "sides3d": lambda v: tuple(_floats(v)),
            "bs3d": lambda v: tuple(_floats(v)), "spacing": float, "tol": float,
            "restarts": int, "seed": int, "corrupt": float}
    for k, v in raw.items():
        if k in conv:
            setattr(cfg, k, conv[k](v))
    for k in ("spacing", "tol", "restarts", "seed", "corrupt"):
        if p.get(k) is not None and k in vars(cfg):
            setattr(cfg, k, conv[k](p[k]))
    return cfg


def run_check(p):
    from dataclasses import asdict
    from .thermo import property_suite
    cfg = _suite_config(p)
    rep = property_suite(cfg)
    bounds = [{"name": c.name + "[" + ",".join(f"{k}={v}" for k, v in c.params.items()) + "]",
               "lhs": c.lhs, "rhs": c.rhs, "pass": bool(c.passed)} for c in rep.checks if c.hard]
    det = {"passed": rep.passed, "calibration": rep.calibration.as_dict(),
           "failures": [c.name for c in rep.failures()]}
    params = asdict(cfg)
    return record("check", params, None, None, None, cfg.spacing, None, bounds, cfg.seed, det)


RUNNERS = {"m0": run_m0, "mp": run_mp, "m3d": run_m3d, "abrikosov": run_abrikosov,
           "g": run_g, "e2": run_e2, "trial3d": run_trial3d, "check": run_check}


def _sweep_points(p):
    raw = read_config(p.get("config"), "sweep")
    if not raw:
        raise UsageError("sweep needs --config with a [sweep] section")
    command = raw.get("command", "m0")
    if command not in RUNNERS or command in ("check",):
        raise UsageError(f"cannot sweep {command!r}")
    grid_keys = [k for k in ("b", "side", "N") if k in raw]
    values = {k: (_ints(raw[k]) if k == "N" else _floats(raw[k])) for k in grid_keys}
    base = {k: v for k, v in p.items() if k not in ("command", "config")}
    for k, v in raw.items():
        if k not in grid_keys and k != "command":
            base.setdefault(k, v)
    points = [{}]
    for k in grid_keys:
        points = [dict(pt, **{k: v}) for pt in points for v in values[k]]
    out = []
    for pt in points:
        q = dict(base)
        q.update(pt)
        q["command"] = command
        for k, kind in (("spacing", float), ("tol", float), ("restarts", int), ("seed", int)):
            if q.get(k) is not None:
                q[k] = kind(q[k])
        out.append(q)
    return out


def _run_point(q):
    return execute(q, q.get("cache_dir"), q.get("no_cache", False))


# --------------------------------------------------------------------------
# caching and output
# --------------------------------------------------------------------------
def cache_key(command, params, seed) -> str:
    blob = json.dumps({"command": command, "params": _clean(params), "seed": seed,
                       "schema": SCHEMA_VERSION}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def default_cache_dir() -> Path:
    env = os.environ.get("GLLAB_CACHE_DIR")
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "gllab"


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _build_id() -> str:
    try:
        from importlib.metadata import version
        return "artifact-" + version("artifact")
    except Exception:
        return "unknown"


def _key_params(p):
    skip = {"out", "format", "cache_dir", "no_cache", "threads", "verbose", "config", "command"}
    return {k: v for k, v in sorted(p.items()) if k not in skip and v is not None}


def execute(p, cache_dir=None, no_cache=False) -> dict:
    """Run one command (with caching) and return its record."""
    command = p["command"]
    if command == "check" and p.get("config") not in (None, "default"):
        # the file content, not its path, identifies the configuration
        p = dict(p, config_text=Path(p["config"]).read_text(encoding="utf-8"))
    key = cache_key(command, _key_params(p), p.get("seed", 0))
    cdir = Path(cache_dir) if cache_dir else default_cache_dir()
    cfile = cdir / f"{key}.json"
    if not no_cache and cfile.exists():
        try:
            with open(cfile, encoding="utf-8") as fh:
                return json.load(fh)["outputs"]
        except (OSError, ValueError, KeyError):
            log.warning("ignoring unreadable cache entry %s", cfile)
    t0 = time.perf_counter()
    rec = RUNNERS[command](p)
    rec["wall_time_s"] = round(time.perf_counter() - t0, 3)
    rec = _clean(rec)
    if not no_cache:
        run = {"command": command, "parameters": _clean(_key_params(p)),
               "git_or_build_id": _build_id(), "seed": p.get("seed", 0), "outputs": rec,
               "timestamps": {"finished": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())},
               "cache_key": key}
        _atomic_write(cfile, json.dumps(run, indent=1))
    return rec


def to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        bd = r.get("breakdown") or {}
        ex = r.get("extrapolated") or {}
        bounds = r.get("bounds_checked") or []
        w.writerow([
            r["command"], json.dumps(r["params"], sort_keys=True), r["energy"],
            bd.get("kinetic"), bd.get("condensation"), bd.get("quartic"), r["residual"],
            r["spacing"], ex.get("value"), ex.get("order"), ex.get("residual"),
            sum(1 for b in bounds if b["pass"]), sum(1 for b in bounds if not b["pass"]),
            r["seed"], r["wall_time_s"],
        ])
    return buf.getvalue()


def emit(payload, fmt, out):
    records = payload if isinstance(payload, list) else [payload]
    if fmt == "csv":
        text = to_csv(records)
    else:
        text = json.dumps(payload, indent=2) + "\n"
    if out:
        _atomic_write(Path(out), text)
    else:
        sys.stdout.write(text)


def _failed(rec) -> bool:
    if rec.get("command") == "check":
        return not rec["details"].get("passed", False)
    return False


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        p = resolve(args)
    except (OSError, configparser.Error, ValueError) as exc:
        parser.error(str(exc))
    fmt = p.get("format", "json")
    try:
        if args.command == "sweep":
            points = _sweep_points(p)
            threads = max(1, int(p.get("threads") or 1))
            if threads > 1:
                with ProcessPoolExecutor(max_workers=threads) as ex:
                    payload = list(ex.map(_run_point, points))
            else:
                payload = [_run_point(q) for q in points]
            failed = any(_failed(r) for r in payload)
        else:
            payload = execute(p, p.get("cache_dir"), p.get("no_cache", False))
            failed = _failed(payload)
    except UsageError as exc:
        parser.error(str(exc))
    except (ArithmeticError, RuntimeError, MemoryError, np.linalg.LinAlgError) as exc:
        err = {"command": args.command, "params": _clean(_key_params(p)),
               "error": {"type": type(exc).__name__, "message": str(exc)}}
        emit(err, "json", p.get("out"))
        return 1
    except ValueError as exc:
        parser.error(str(exc))
    emit(payload, fmt, p.get("out"))
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
