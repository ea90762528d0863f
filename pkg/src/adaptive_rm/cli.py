"""Command-line front end.

Subcommands: ``estimate``, ``oracle``, ``allocate``, ``diagnose-tempering``
and ``validate-model``. Settings may come from a JSON manifest
(``--manifest``); explicit flags override manifest fields. Exit status is 0
on success, 2 for configuration errors and 3 when estimation fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import streams
from .ais import ais_rbm, geometric_schedule, tempering_diagnostics
from .allocator import empirical_vhat, optimal_allocation, predicted_min_variance
from .engine import IterationDiag, Method, SmcConfig, run
from .gpc import GpcModel, load_dataset
from .model import OracleUnavailable, validate_model
from .oracle import Intractable, gpc_orthant_log_z, rbm_exact_log_z
from .rbm import RbmModel, RbmParams, base_rate_params, load_binary_data, load_params, order_by_activity

log = logging.getLogger("adaptive_rm")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

DIAG_FIELDS = ["run", "n", "r_n", "ess", "gamma_final", "generate_iters", "resampled", "log_z_increment",
               "gibbs_unit_ops"]

DEFAULTS = {
    "model": "rbm",
    "method": "arm",
    "particles": 1000,
    "gamma_thr": 0.7,
    "imax": 3,
    "ess_fraction": 0.7,
    "gibbs_steps": 10,
    "seed": 0,
    "reps": 1,
    "workers": 1,
    "betas": 1000,
    "beta_min": 1e-3,
    "chains": 500,
    "ell": math.exp(4.85),
    "amp": math.exp(5.1),
    "order": None,
    "samples": 10_000_000,
    "samples_per_beta": 1000,
    "burn_in": 200,
    "reseed_min": 100,
    "reseed_burn_in": 1500,
    "resample_scheme": "residual",
    "n": 1,
    "hidden": None,
}

PATH_KEYS = ("params", "data", "out", "diag", "log")


class ConfigError(Exception):
    pass


# -- settings ---------------------------------------------------------------

def _load_manifest(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    if not isinstance(manifest, dict):
        raise ConfigError("manifest must be a JSON object")
    base = Path(path).resolve().parent
    out = {}
    for key, value in manifest.items():
        key = key.replace("-", "_")
        if key in PATH_KEYS and value is not None and not Path(value).is_absolute():
            value = str(base / value)
        out[key] = value
    return out


def settings(args: argparse.Namespace) -> dict:
    merged = dict(DEFAULTS)
    if getattr(args, "manifest", None):
        merged.update(_load_manifest(args.manifest))
    for key, value in vars(args).items():
        if value is not None and key not in ("manifest", "func"):
            merged[key] = value
    return merged


def _require(s: dict, key: str) -> str:
    if not s.get(key):
        raise ConfigError(f"missing required setting '{key}'")
    path = Path(s[key])
    if not path.is_file():
        raise ConfigError(f"{key} file not found: {path}")
    return str(path)


def build_model(s: dict):
    kind = s["model"]
    try:
        if kind == "rbm":
            params = load_params(_require(s, "params"))
            data = load_binary_data(_require(s, "data")) if s.get("data") else None
            if data is not None and data.shape[1] != params.n_visible:
                raise ConfigError(f"dataset has {data.shape[1]} columns, RBM has {params.n_visible} visible units")
            order = s.get("order") or ("activity" if data is not None else "file")
            if order == "activity":
                if data is None:
                    raise ConfigError("activity ordering needs --data")
                perm = order_by_activity(data)
            elif order == "file":
                perm = None
            else:
                raise ConfigError(f"unknown order {order!r}")
            return RbmModel(params, perm, data)
        if kind == "gpc":
            inputs, y = load_dataset(_require(s, "data"))
            return GpcModel.from_inputs(inputs, y, float(s["ell"]), float(s["amp"]))
    except ConfigError:
        raise
    except (OSError, ValueError, np.linalg.LinAlgError) as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown model kind {kind!r}")


def build_config(s: dict) -> SmcConfig:
    try:
        return SmcConfig(
            base_r=int(s["particles"]),
            ess_resample_fraction=float(s["ess_fraction"]),
            gamma_thr=float(s["gamma_thr"]),
            i_max=int(s["imax"]),
            gibbs_steps=int(s["gibbs_steps"]),
            method=Method(s["method"]),
            seed=int(s["seed"]),
            reseed_min=int(s["reseed_min"]),
            reseed_burn_in=int(s["reseed_burn_in"]),
            resample_scheme=str(s["resample_scheme"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# -- output -----------------------------------------------------------------

def _dump_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _dump_csv(header, rows, path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def _summary(values) -> dict:
    arr = np.asarray(values, dtype=float)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {"mean": float(arr.mean()), "std": std, "sem": std / math.sqrt(arr.size)}


# -- estimate ---------------------------------------------------------------

def _smc_job(job):
    model, cfg = job
    return run(model, cfg)


def _ais_job(job):
    target, base, schedule, chains, t, seed = job
    return ais_rbm(target, base, schedule, chains, t, streams.stream(seed, 0, 0, streams.AIS_CHAIN))


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _write_timing(s: dict, seconds: float) -> None:
    path = s.get("log") or (s["out"] + ".timing.json" if s.get("out") not in (None, "-") else None)
    if path:
        _dump_json({"wall_time_seconds": seconds}, path)


def cmd_estimate(s: dict) -> int:
    reps = int(s["reps"])
    if reps < 1:
        raise ConfigError("reps must be at least 1")
    seeds = [streams.child_seed(int(s["seed"]), k) for k in range(reps)]
    if s["method"] == "ais":
        return _estimate_ais(s, seeds)
    model = build_model(s)
    cfg = build_config(s)
    if cfg.method is Method.ARM_RESEED and not hasattr(model, "seed_states"):
        raise ConfigError("model does not support reseeding")
    t0 = time.perf_counter()
    try:
        results = _map(_smc_job, [(model, cfg.with_seed(sd)) for sd in seeds], int(s["workers"]))
    except (RuntimeError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.error("estimation failed: %s", exc)
        return EXIT_RUNTIME
    elapsed = time.perf_counter() - t0
    runs = [
        {"run": k, "seed": sd, "log_z": r.log_z, "total_particle_iterations": r.total_particle_iterations,
         "gibbs_unit_ops": r.gibbs_unit_ops}
        for k, (sd, r) in enumerate(zip(seeds, results))
    ]
    out = {"model": s["model"], "method": cfg.method.value, "base_r": cfg.base_r, "runs": runs,
           "total_particle_iterations": float(np.mean([r.total_particle_iterations for r in results]))}
    out.update(_summary([r.log_z for r in results]))
    _dump_json(out, s.get("out"))
    if s.get("diag"):
        rows = [[k] + [_fmt(getattr(d, f)) for f in DIAG_FIELDS[1:]] for k, r in enumerate(results) for d in r.diags]
        _dump_csv(DIAG_FIELDS, rows, s["diag"])
    _write_timing(s, elapsed)
    return EXIT_OK


def _ais_base(s: dict, target: RbmParams) -> RbmParams:
    if s.get("data"):
        data = load_binary_data(_require(s, "data"))
        return base_rate_params(data, target.n_hidden)
    return RbmParams.zeros(target.n_visible, target.n_hidden)


def _estimate_ais(s: dict, seeds) -> int:
    if s["model"] != "rbm":
        raise ConfigError("AIS is only available for RBMs")
    try:
        target = load_params(_require(s, "params"))
        base = _ais_base(s, target)
        schedule = geometric_schedule(int(s["betas"]), float(s["beta_min"]))
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    chains, t = int(s["chains"]), int(s["gibbs_steps"])
    t0 = time.perf_counter()
    jobs = [(target, base, schedule, chains, t, sd) for sd in seeds]
    try:
        results = _map(_ais_job, jobs, int(s["workers"]))
    except (RuntimeError, ValueError, ArithmeticError) as exc:
        log.error("estimation failed: %s", exc)
        return EXIT_RUNTIME
    elapsed = time.perf_counter() - t0
    runs = []
    for k, (sd, r) in enumerate(zip(seeds, results)):
        se = r.bootstrap_se(streams.stream(sd, 0, 0, streams.DIAG))
        runs.append({"run": k, "seed": sd, "log_z": r.log_z, "bootstrap_se": se, "gibbs_unit_ops": r.gibbs_unit_ops})
    out = {"model": "rbm", "method": "ais", "betas": len(schedule), "chains": chains, "runs": runs}
    out.update(_summary([r.log_z for r in results]))
    _dump_json(out, s.get("out"))
    if s.get("diag"):
        rows = [[k, c, repr(float(lw))] for k, r in enumerate(results) for c, lw in enumerate(r.log_weights)]
        _dump_csv(["run", "chain", "log_weight"], rows, s["diag"])
    _write_timing(s, elapsed)
    return EXIT_OK


# -- other commands ---------------------------------------------------------

def cmd_oracle(s: dict) -> int:
    if s["model"] == "rbm":
        try:
            params = load_params(_require(s, "params"))
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        try:
            report = rbm_exact_log_z(params)
        except Intractable as exc:
            log.error("intractable: %s", exc)
            return EXIT_RUNTIME
    elif s["model"] == "gpc":
        model = build_model(s)
        try:
            report = gpc_orthant_log_z(model.sigma, model.y, int(s["samples"]),
                                       streams.stream(int(s["seed"]), 0, 0, streams.DIAG))
        except ValueError as exc:
            log.error("%s", exc)
            return EXIT_RUNTIME
    else:
        raise ConfigError(f"unknown model kind {s['model']!r}")
    _dump_json(report.as_dict(), s.get("out"))
    return EXIT_OK


def read_diag_csv(path) -> dict[int, list[IterationDiag]]:
    by_run: dict[int, list[IterationDiag]] = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = {"run", "n", "r_n", "ess"} - set(reader.fieldnames or ())
            if missing:
                raise ConfigError(f"{path}: missing columns {sorted(missing)}")
            for row in reader:
                d = IterationDiag(
                    n=int(row["n"]), r_n=int(row["r_n"]), ess=float(row["ess"]),
                    gamma_final=float(row.get("gamma_final") or 0.0),
                    generate_iters=int(row.get("generate_iters") or 0),
                    resampled=bool(int(row.get("resampled") or 0)),
                    log_z_increment=float(row.get("log_z_increment") or 0.0),
                    gibbs_unit_ops=int(row.get("gibbs_unit_ops") or 0),
                )
                by_run.setdefault(int(row["run"]), []).append(d)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed diagnostics ({exc})") from None
    if not by_run:
        raise ConfigError(f"{path}: no diagnostic rows")
    return by_run


def cmd_allocate(s: dict) -> int:
    by_run = read_diag_csv(_require(s, "diag"))
    run_id = s.get("run")
    if run_id is None:
        run_id = min(by_run)
    if run_id not in by_run:
        raise ConfigError(f"run {run_id} not present in diagnostics")
    diags = sorted(by_run[run_id], key=lambda d: d.n)
    try:
        vhat = [empirical_vhat(d.r_n, d.ess) for d in diags]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    r_tot = s.get("r_tot")
    r_tot = float(r_tot) if r_tot is not None else float(sum(d.r_n for d in diags))
    alloc = optimal_allocation(vhat, r_tot) if any(vhat) else optimal_allocation([0.0] * len(vhat), r_tot)
    out = {
        "run": run_id,
        "n": [d.n for d in diags],
        "v_hat": vhat,
        "r_tot": r_tot,
        "r_opt": alloc.r_opt.tolist(),
        "v_min": alloc.v_min,
        "degenerate": alloc.degenerate,
        "predicted_min_variance": predicted_min_variance(diags),
    }
    _dump_json(out, s.get("out"))
    return EXIT_OK


def cmd_diagnose_tempering(s: dict) -> int:
    try:
        target = load_params(_require(s, "params"))
        base = _ais_base(s, target)
        schedule = geometric_schedule(int(s["betas"]), float(s["beta_min"]))
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if not s.get("out") or s["out"] == "-":
        raise ConfigError("diagnose-tempering needs --out")
    try:
        diag = tempering_diagnostics(target, base, schedule, int(s["samples_per_beta"]),
                                     streams.stream(int(s["seed"]), 0, 0, streams.DIAG), burn_in=int(s["burn_in"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _dump_csv(["beta", "M", "V", "delta_beta_recommended"], [[repr(c) for c in row] for row in diag.rows()], s["out"])
    return EXIT_OK


def cmd_validate_model(s: dict) -> int:
    model = build_model(s)
    try:
        report = validate_model(model, int(s["n"]), streams.stream(int(s["seed"]), 0, 0, streams.DIAG),
                                samples=int(s.get("samples_validate") or 20000), t=int(s["gibbs_steps"]))
    except OracleUnavailable as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _dump_json(report.as_dict(), s.get("out"))
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", help="JSON file with settings; flags override it")
    p.add_argument("--model", choices=["rbm", "gpc"])
    p.add_argument("--params", help="RBM parameter JSON")
    p.add_argument("--data", help="dataset CSV (RBM: 0/1 rows; GPC: features then label)")
    p.add_argument("--order", choices=["file", "activity"], help="visible-unit order for RBMs")
    p.add_argument("--ell", type=float, help="GPC kernel length-scale")
    p.add_argument("--amp", type=float, help="GPC kernel amplitude")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output file ('-' for stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptive-rm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="run seeded replications of an estimator")
    _model_flags(p)
    p.add_argument("--method", choices=[m.value for m in Method] + ["ais"])
    p.add_argument("--particles", type=int, help="base particle count R")
    p.add_argument("--gamma-thr", type=float)
    p.add_argument("--imax", type=int)
    p.add_argument("--ess-fraction", type=float)
    p.add_argument("--gibbs-steps", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--workers", type=int, help="parallel processes for replications")
    p.add_argument("--diag", help="per-iteration diagnostics CSV")
    p.add_argument("--log", help="timing log (default: OUT.timing.json)")
    p.add_argument("--reseed-min", type=int)
    p.add_argument("--reseed-burn-in", type=int)
    p.add_argument("--resample-scheme", choices=["residual", "multinomial"])
    p.add_argument("--betas", type=int, help="AIS: number of temperatures B")
    p.add_argument("--beta-min", type=float)
    p.add_argument("--chains", type=int)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("oracle", help="exact or brute-force log Z")
    _model_flags(p)
    p.add_argument("--samples", type=int, help="GPC: Monte Carlo draws")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("allocate", help="optimal allocation from a diagnostics CSV")
    p.add_argument("--manifest")
    p.add_argument("--diag", help="diagnostics CSV from 'estimate'")
    p.add_argument("--r-tot", type=float, help="particle budget (default: the run's own total)")
    p.add_argument("--run", type=int, help="which run of the CSV to use (default: first)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("diagnose-tempering", help="energy mean/variance along the AIS path")
    _model_flags(p)
    p.add_argument("--betas", type=int)
    p.add_argument("--beta-min", type=float)
    p.add_argument("--samples-per-beta", type=int)
    p.add_argument("--burn-in", type=int)
    p.set_defaults(func=cmd_diagnose_tempering)

    p = sub.add_parser("validate-model", help="check a model's kernels against brute force")
    _model_flags(p)
    p.add_argument("--n", type=int, help="dimension to check")
    p.add_argument("--gibbs-steps", type=int)
    p.add_argument("--samples-validate", type=int)
    p.set_defaults(func=cmd_validate_model)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s",
                        stream=sys.stderr)
    func = args.func
    del args.command, args.verbose
    try:
        return func(settings(args))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
