"""Command-line entry point: ``rhl {simulate,fit,decompose,predict,pipeline}``.

Every command reads an optional TOML config, applies ``--seed``, ``--out``
and ``--threads`` on top, and writes its files plus a JSON report that
embeds the fully resolved config.  Failures print a one-line JSON error
record to stderr and exit with 1 (config), 2 (data) or 3 (numerical).
"""

import argparse
import copy
import json
import logging
import math
import os
import sys
import warnings
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("rhl")

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "simulate": {
        "I": 20,
        "J": 4,
        "K": 4,
        "L": 4,
        "mu_const": 100.0,
        "level1_eigenvalues": None,
        "level2_eigenvalues": None,
        "sigma": 0.0,
        "cluster_scale": "2*i",
        "clamp": True,
    },
    "fit": {"x_names": [], "z_names": ["enum"], "tol": 1e-8, "max_iter": 50},
    "mfpca": {"pve1": 0.99, "pve2": 0.99},
    "predict": {
        "K": 2,
        "L": 1,
        "threshold": 0.5,
        "compare": True,
        "holdout_fraction": 0.0,
        "students_per_unit": 25,
    },
    "io": {
        "out": "out",
        "grid_size": 1001,
        "events": None,
        "compensators": None,
        "scores": None,
        "students": None,
    },
}

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class _Failure(Exception):
    """An error tagged with the stage that raised it."""

    def __init__(self, stage, exc):
        super().__init__(str(exc))
        self.stage = stage
        self.exc = exc


# --------------------------------------------------------------------------
# configuration


def _merge(base, override, where=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        from .errors import ConfigError

        if key not in base:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where}{key!r} must be a table")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def load_config(path=None, seed=None, out=None, threads=None):
    """Defaults, then the TOML file, then command-line overrides."""
    from .errors import ConfigError

    user = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                user = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    cfg = _merge(DEFAULTS, user)
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["io"]["out"] = str(out)
    if threads is not None:
        cfg["threads"] = threads
    if not isinstance(cfg["seed"], int) or not 0 <= cfg["seed"] < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if not isinstance(cfg["threads"], int) or cfg["threads"] < 1:
        raise ConfigError("threads must be a positive integer")
    return cfg


def _simulation_config(cfg):
    from .simulate import SimulationConfig

    sim = dict(cfg["simulate"])
    return SimulationConfig(
        seed=cfg["seed"],
        grid_size=cfg["io"]["grid_size"],
        pve1=cfg["mfpca"]["pve1"],
        pve2=cfg["mfpca"]["pve2"],
        **sim,
    )


def _input(cfg, key, default_name):
    """Configured input path, or the file an earlier stage writes to ``out``."""
    from .errors import ConfigError

    path = cfg["io"][key]
    path = Path(path) if path else Path(cfg["io"]["out"]) / default_name
    if not path.exists():
        raise ConfigError(f"io.{key}: {path} does not exist")
    return path


def _grid(cfg):
    import numpy as np

    n = cfg["io"]["grid_size"]
    if not isinstance(n, int) or n < 2:
        from .errors import ConfigError

        raise ConfigError("io.grid_size must be an integer >= 2")
    return np.linspace(0.0, 1.0, n)


# --------------------------------------------------------------------------
# output


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(obj, path):
    text = json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")
    return Path(path)


def _outdir(cfg):
    out = Path(cfg["io"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _portable(cfg):
    """Config with paths inside the output directory written relative to it."""
    cfg = copy.deepcopy(cfg)
    io = cfg["io"]
    out = Path(io["out"])
    for key in ("events", "compensators", "scores", "students"):
        if io[key]:
            p = Path(io[key])
            io[key] = p.relative_to(out).as_posix() if p.parent == out else p.as_posix()
    io["out"] = "."
    return cfg


def _report(cfg, command, body):
    return {"command": command, "config": _portable(cfg), "seed": cfg["seed"], **body}


# --------------------------------------------------------------------------
# commands


def cmd_simulate(cfg):
    """Simulate the study and write ``events.csv``, ``true_curves.csv``, ``study_report.json``."""
    from .compensator import write_long_csv
    from .dataio import write_event_table
    from .simulate import run_simulation_study

    out = _outdir(cfg)
    study = run_simulation_study(_simulation_config(cfg))
    write_event_table(study.dataset, out / "events.csv", kind="raw")
    write_long_csv(study.true, out / "true_curves.csv")
    write_json(_report(cfg, "simulate", {"study": study.report()}), out / "study_report.json")
    log.info("simulate: %d events in %d units", int(study.dataset.status.sum()), len(study.true))
    return study


def cmd_fit(cfg):
    """Fit the AG model and write ``ag_fit.json``, ``baseline.csv``, ``compensators.csv``."""
    import csv

    from .agmodel import CovariateSpec, breslow_baseline, fit_ag, smooth_baseline
    from .compensator import reconstruct_all, write_long_csv
    from .dataio import fmt, parse_event_table

    events = _input(cfg, "events", "events.csv")
    out = _outdir(cfg)
    dataset = parse_event_table(events)
    spec = CovariateSpec(cfg["fit"]["x_names"], cfg["fit"]["z_names"])
    fit = fit_ag(dataset, spec, tol=cfg["fit"]["tol"], max_iter=cfg["fit"]["max_iter"])
    step = breslow_baseline(dataset, spec, fit)
    grid = _grid(cfg)
    smooth = smooth_baseline(step, grid)
    comps = reconstruct_all(dataset, fit if spec.names else None, smooth, grid)

    with (out / "baseline.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "t", "value"])
        for t, v in zip(step.jump_times, step.cum_values):
            w.writerow(["step", fmt(t), fmt(v)])
        for t, v in zip(smooth.grid, smooth.values):
            w.writerow(["smoothed", fmt(t), fmt(v)])
    write_long_csv(comps, out / "compensators.csv")
    body = {
        "fit": fit.report(),
        "n_rows": len(dataset),
        "n_units": len(comps),
        "n_events": int(dataset.status.sum()),
        "time_unit": "window rescaled to [0, 1]",
    }
    write_json(_report(cfg, "fit", body), out / "ag_fit.json")
    return fit, comps


def cmd_decompose(cfg):
    """MFPCA of the compensators; writes eigenfunctions, scores, perturbations and a report."""
    from .compensator import read_long_csv
    from .mfpca import mfpca, write_eigenfunctions, write_perturbations, write_scores

    comps = read_long_csv(_input(cfg, "compensators", "compensators.csv"))
    out = _outdir(cfg)
    res = mfpca(comps, cfg["mfpca"]["pve1"], cfg["mfpca"]["pve2"])
    write_eigenfunctions(res, out / "eigenfunctions.csv")
    write_scores(res, out / "scores.csv")
    write_perturbations(res, out / "perturbations.csv")
    write_json(_report(cfg, "decompose", {"mfpca": res.report()}), out / "mfpca_report.json")
    return res


def cmd_predict(cfg):
    """Logistic model on students and scores; writes ``logistic_report.csv`` and ``metrics.json``."""
    from .dataio import read_students
    from .mfpca import read_scores
    from .predict import (
        build_design,
        compare_models,
        evaluate,
        fit_logistic,
        split_rows,
        write_report_csv,
    )

    p = cfg["predict"]
    students = read_students(_input(cfg, "students", "students.csv"))
    K, L = p["K"], p["L"]
    scores = read_scores(_input(cfg, "scores", "scores.csv")) if K or L else None
    out = _outdir(cfg)
    design = build_design(students, scores, K, L)
    body = {"n_students": len(design), "columns": list(design.columns), "dropped_constant": list(design.dropped)}
    holdout = p["holdout_fraction"] or None
    if p["compare"]:
        base = design
        if design.K or design.L:
            base = build_design(students, None, 0, 0)
            base = base.select([c for c in base.columns if c in design.columns])
        cmp = compare_models(design, base, p["threshold"], holdout, cfg["seed"], tol=cfg["fit"]["tol"])
        fit = cmp.with_scores
        body["comparison"] = cmp.report()
        body["in_sample"] = cmp.metrics_with.to_dict()
        if cmp.holdout_with is not None:
            body["holdout"] = cmp.holdout_with.to_dict()
    else:
        fit = fit_logistic(design, tol=cfg["fit"]["tol"])
        body["in_sample"] = evaluate(fit, design, p["threshold"], strict=False).to_dict()
        if holdout:
            train, test = split_rows(len(design), holdout, cfg["seed"])
            f = fit_logistic(design.subset(train), tol=cfg["fit"]["tol"])
            body["holdout"] = evaluate(f, design.subset(test), p["threshold"], strict=False).to_dict()
    body["fit"] = fit.report()
    write_report_csv(fit, out / "logistic_report.csv")
    write_json(_report(cfg, "predict", body), out / "metrics.json")
    return fit


def cmd_pipeline(cfg):
    """simulate, fit, decompose, synthetic cohort, predict; stops at the first failing stage."""
    from .dataio import write_students
    from .simulate import simulate_cohort

    cfg = copy.deepcopy(cfg)
    out = Path(cfg["io"]["out"])
    stage_cfg = copy.deepcopy(cfg)
    for key, name in (("events", "events.csv"), ("compensators", "compensators.csv"),
                      ("scores", "scores.csv"), ("students", "students.csv")):
        stage_cfg["io"][key] = str(out / name)

    _stage("simulate", cmd_simulate, cfg)
    _stage("fit", cmd_fit, stage_cfg)
    res = _stage("decompose", cmd_decompose, stage_cfg)

    def cohort():
        K = min(cfg["predict"]["K"], res.K)
        L = min(cfg["predict"]["L"], res.L)
        students, coefficients = simulate_cohort(
            res, K, L, cfg["predict"]["students_per_unit"], cfg["seed"]
        )
        write_students(students, out / "students.csv")
        write_json(_report(cfg, "cohort", {"K": K, "L": L, "generating_coefficients": coefficients}),
                   out / "cohort.json")
        return K, L

    K, L = _stage("cohort", cohort)
    stage_cfg["predict"]["K"], stage_cfg["predict"]["L"] = K, L
    _stage("predict", cmd_predict, stage_cfg)


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except _Failure:
        raise
    except Exception as exc:
        raise _Failure(name, exc) from exc


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "decompose": cmd_decompose,
    "predict": cmd_predict,
    "pipeline": cmd_pipeline,
}


def _exit_code(exc):
    from .errors import RHLError

    if isinstance(exc, RHLError):
        return exc.exit_code
    if isinstance(exc, (ArithmeticError, __import__("numpy").linalg.LinAlgError)):
        return EXIT_NUMERICAL
    if isinstance(exc, (ValueError, KeyError, OSError)):
        return EXIT_DATA
    raise exc


def _error_record(stage, exc):
    return {
        "error": type(exc).__name__,
        "message": str(exc),
        "stage": stage,
        "exit_code": _exit_code(exc),
    }


def build_parser():
    parser = argparse.ArgumentParser(prog="rhl", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, help="TOML config file")
    parser.add_argument("--seed", type=int, help="root random seed (unsigned 64-bit)")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--threads", type=int, help="worker threads (default 1)")
    return parser


def _limit_threads(n):
    # honoured by the BLAS libraries only if set before numpy loads them
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, os.environ.get("RHL_LOG", "WARNING").upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    stage = "config"
    try:
        cfg = load_config(args.config, args.seed, args.out, args.threads)
        _limit_threads(cfg["threads"])
        stage = args.command
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            COMMANDS[args.command](cfg)
    except _Failure as f:
        record = _error_record(f.stage, f.exc)
    except Exception as exc:
        record = _error_record(stage, exc)
    else:
        return EXIT_OK
    sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")
    return record["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
