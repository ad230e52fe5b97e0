"""Command-line entry point.

Subcommands: ``run`` executes a preset or a custom drive schedule and writes
result files plus a manifest; ``validate`` checks drive timing without
running the measurement; ``presets`` lists the built-in experiments.

Exit codes: 0 success, 2 configuration or schema problem, 3 unsafe drive
schedule. Errors are reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import __version__
from .components import generate_pulse_train
from .config import (
    PRESETS,
    load_config_file,
    plan_from_config,
    preset_listing,
    resolve_config,
)
from .engine import DriveSchedule, simulate, storage_period, validate_schedule
from .errors import CalibrationError, ConfigError, QBufferError, ScheduleError
from .experiments import (
    apply_calibration,
    average_visibility_by_eta,
    calibrate,
    fit_decay,
    run_hwp_sweep,
    run_retrieval_sweep,
    sweep_rows,
    write_peaks_csv,
    write_sweep_csv,
)
from .kernels import BACKEND
from .polarization import STATE_H


def _err(kind: str, exit_code: int, **detail) -> int:
    sys.stderr.write(json.dumps({"error": kind, **detail},
                                sort_keys=True) + "\n")
    return exit_code


def _resolve(args) -> dict:
    file_cfg = load_config_file(args.config) if args.config else {}
    seed = args.seed
    if seed is None and "seed" not in file_cfg:
        env = os.environ.get("QBUF_SEED")
        if env is not None:
            if not env.strip().lstrip("-").isdigit():
                raise ConfigError("seed", f"QBUF_SEED={env!r} is not an "
                                  "integer")
            seed = int(env)
    return resolve_config(file_cfg, overrides=args.set or (),
                          preset=args.preset, seed=seed)


def _json_default(obj):
    import numpy as np

    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _run_retrieval(plan):
    sweep = run_retrieval_sweep(plan.experiment, plan.topology,
                                plan.detector, plan.limits)
    col = ("sampled_counts_linear" if plan.experiment.mode == "monte-carlo"
           else "expected_counts_linear")
    fit = fit_decay([(r.eta, getattr(r, col)) for r in sweep.rows])
    summary = {
        "preset": plan.preset,
        "seed": plan.seed,
        "mode": plan.experiment.mode,
        "eta_convention": "eta = cycles + 1; eta = 1 is direct reflection",
        "delta_t_s": sweep.delta_t_s,
        "retrieval_span_s": sweep.span_s,
        "n_peaks": len(sweep.rows),
        "fitted_loss_db_per_cycle": fit.loss_db_per_cycle,
        "fit_residual_db": fit.residual_db,
        "configured_cycle_loss_db": plan.topology.cycle_loss_db(),
        "visibilities": None,
    }
    return sweep, fit, summary


def _run_hwp(plan):
    cal = None
    topology = plan.topology
    if plan.calibration["mode"] != "none":
        cal = calibrate(plan.calibration["targets"], topology,
                        plan.experiment, plan.detector,
                        mode=plan.calibration["mode"], limits=plan.limits)
        topology = apply_calibration(topology, cal)
    results = run_hwp_sweep(plan.experiment, topology,
                            (plan.detector, plan.detector), plan.limits)
    summary = {
        "preset": plan.preset,
        "seed": plan.seed,
        "mode": plan.experiment.mode,
        "eta_convention": "eta = cycles + 1; eta = 1 is direct reflection",
        "delta_t_s": storage_period(topology),
        "fitted_loss_db_per_cycle": None,
        "fit_residual_db": None,
        "visibilities": [
            {"eta": r.eta, "basis": r.basis, "visibility": r.visibility,
             "visibility_per_port": list(r.visibility_per_port)}
            for r in results
        ],
        "average_visibility_by_eta": {
            str(k): v for k, v in average_visibility_by_eta(results).items()
        },
        "calibration": None if cal is None else {
            "mode": cal.mode,
            "prep_error_depol": cal.prep_error_depol,
            "depol_per_cycle": list(cal.depol_per_cycle),
            "targets": {str(k): v for k, v in cal.targets.items()},
            "residuals": {str(k): v for k, v in cal.residuals.items()},
        },
    }
    return results, cal, summary


def _run_custom(plan):
    exp = plan.experiment
    inputs = generate_pulse_train(exp.rep_rate_hz, exp.pulse_width_s,
                                  exp.mu_source, 1, STATE_H)
    violations = validate_schedule(plan.topology, plan.schedule, inputs,
                                   plan.limits)
    errors = [v for v in violations if v.severity == "error"]
    if errors:
        raise ScheduleError("custom schedule is unsafe", violations)
    result = simulate(plan.topology, plan.schedule, inputs, plan.limits)
    summary = {
        "preset": "custom-schedule",
        "seed": plan.seed,
        "delta_t_s": storage_period(plan.topology),
        "n_retrieved": len(result.retrieved),
        "retrieved": [
            {"pulse_id": p.id, "time_s": p.t, "mu": p.mu, "cycles": p.cycles}
            for p in result.retrieved
        ],
        "warnings": [v.message for v in violations],
        "visibilities": None,
    }
    return result, summary


def cmd_run(args) -> int:
    try:
        cfg = _resolve(args)
        plan = plan_from_config(cfg)
    except ConfigError as exc:
        return _err("schema", 2, path=exc.path, message=exc.message)

    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    started = time.perf_counter()
    outputs: list[str] = []

    def emit(name, writer):
        path = os.path.join(out_dir, name)
        writer(path)
        outputs.append(name)

    try:
        if plan.kind == "retrieval-sweep":
            sweep, fit, summary = _run_retrieval(plan)
            if args.format == "json":
                doc = {"summary": summary,
                       "peaks": [vars(r) for r in sweep.rows]}
                if sweep.histogram is not None:
                    h = sweep.histogram
                    doc["histogram"] = {"t0": h.t0, "bin_width": h.bin_width,
                                        "counts": h.counts,
                                        "overflow": h.overflow}
                emit("results.json", lambda p: _write_json(p, doc))
            else:
                emit("peaks.csv",
                     lambda p: write_peaks_csv(sweep.rows, p))
                if sweep.histogram is not None:
                    emit("histogram.csv", sweep.histogram.write_csv)
                for eta, cs in sweep.clicks.items():
                    emit(f"clicks_eta{eta}.csv", cs.write_csv)
                for eta, sim in sweep.sim_results.items():
                    emit(f"event_log_eta{eta}.csv", sim.write_event_log_csv)
                emit("summary.json", lambda p: _write_json(p, summary))
        elif plan.kind == "hwp-sweep":
            results, cal, summary = _run_hwp(plan)
            if args.format == "json":
                doc = {"summary": summary, "sweep": sweep_rows(results)}
                emit("results.json", lambda p: _write_json(p, doc))
            else:
                emit("sweep.csv", lambda p: write_sweep_csv(results, p))
                emit("summary.json", lambda p: _write_json(p, summary))
        else:
            result, summary = _run_custom(plan)
            if args.format == "json":
                doc = {"summary": summary}
                emit("results.json", lambda p: _write_json(p, doc))
            else:
                emit("event_log.csv", result.write_event_log_csv)
                emit("summary.json", lambda p: _write_json(p, summary))
    except ScheduleError as exc:
        return _err("schedule", 3, message=str(exc),
                    violations=[{"severity": v.severity, "code": v.code,
                                 "message": v.message}
                                for v in exc.violations])
    except CalibrationError as exc:
        return _err("calibration", 2, message=str(exc))
    except QBufferError as exc:
        return _err("run", 2, message=str(exc))

    manifest = {
        "artifact_version": __version__,
        "schema_version": cfg["schema_version"],
        "preset": plan.preset,
        "seed": plan.seed,
        "kernel_backend": BACKEND,
        "outputs": outputs,
        "duration_s": time.perf_counter() - started,
        "config": plan.snapshot,
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)
    for name in outputs:
        full = os.path.join(out_dir, name)
        if not os.path.exists(full) or os.path.getsize(full) == 0:
            return _err("run", 2, message=f"output {name} missing or empty")
    print(f"wrote {len(outputs) + 1} files to {out_dir}")
    return 0


def cmd_validate(args) -> int:
    try:
        cfg = _resolve(args)
        plan = plan_from_config(cfg)
    except ConfigError as exc:
        return _err("schema", 2, path=exc.path, message=exc.message)

    exp = plan.experiment
    inputs = generate_pulse_train(exp.rep_rate_hz, exp.pulse_width_s,
                                  exp.mu_source, 1, STATE_H)
    schedules = []
    if plan.schedule is not None:
        schedules.append(("custom", plan.schedule))
    else:
        from .engine import storage_retrieval_schedule

        for eta in exp.eta_list:
            schedules.append((f"eta={eta}", storage_retrieval_schedule(
                plan.topology, inputs[0], eta - 1,
                drive_width=exp.drive_width_s, guard=exp.drive_guard_s)))

    any_error = False
    any_drive = any(len(s) for _, s in schedules)
    for label, sched in schedules:
        for v in validate_schedule(plan.topology, sched, inputs, plan.limits):
            print(f"{v.severity}: [{label}] {v.code}: {v.message}")
            any_error = any_error or v.severity == "error"
    if not any_drive:
        print("warning: no drive pulses; every pulse reflects directly")
    if any_error:
        return _err("schedule", 3, message="schedule validation failed")
    print("schedule ok")
    return 0


def cmd_presets(args) -> int:
    listing = preset_listing()
    if args.format == "json":
        print(json.dumps([{"name": n, "description": d}
                          for n, d in listing], indent=2))
    else:
        for name, description in listing:
            print(f"{name:14s} {description}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qbuffer",
        description="Fiber-loop buffer simulator for polarization-encoded "
                    "weak coherent pulses")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--preset", choices=sorted(PRESETS),
                       help="built-in experiment preset")
        p.add_argument("--seed", type=int,
                       help="random seed (QBUF_SEED is the fallback)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config field, e.g. "
                            "topology.storage_length_m=200 (repeatable)")

    run = sub.add_parser("run", help="execute an experiment")
    common(run)
    run.add_argument("--out", default="qbuffer-out",
                     help="output directory (default: qbuffer-out)")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check drive-schedule timing")
    common(val)
    val.set_defaults(func=cmd_validate)

    pre = sub.add_parser("presets", help="list built-in presets")
    pre.add_argument("--format", choices=("text", "json"), default="text")
    pre.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
