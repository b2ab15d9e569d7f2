"""Command line interface for the lane-keeping path planning toolkit.

Subcommands cover the full workflow: generate synthetic drive logs for a
scenario cohort (synth), identify gains and node distances from a log
(calibrate), replay a log against the model (simulate), score a cohort
(evaluate) and export plot-ready curve data (case-study).
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
from pathlib import Path

import numpy as np

from .calibration import (
    assemble_dataset,
    fit_gain_matrix,
    node_count_tradeoff,
    optimize_node_distances,
)
from .metrics import (
    VehicleSpec,
    detect_curve_segments,
    emit_case_study,
    performance_metrics,
    project_onto,
    safety_metrics,
    write_performance_report,
    write_safety_report,
)
from .planner import DEFAULT_RETRIGGER_CYCLES, GainMatrix, NodePointParams
from .simulate import (
    DriveLog,
    ScenarioSpec,
    SyntheticDriverSpec,
    build_scenario_road,
    format_float,
    generate_synthetic_driver_log,
    load_drive_log,
    run_replay,
    s_curve_scenario,
    winding_scenario,
)

USAGE_ERROR = 1
DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with code 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(USAGE_ERROR)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return cfg


def _scenario_from(args, config: dict) -> ScenarioSpec:
    if "scenario" in config:
        return ScenarioSpec.from_dict(config["scenario"])
    name = getattr(args, "scenario", None) or "s-curve"
    builtin = {
        "s-curve": s_curve_scenario,
        "winding": winding_scenario,
    }
    if name not in builtin:
        raise ValueError(f"unknown scenario {name!r} (use a --config file or one of {sorted(builtin)})")
    return builtin[name]()


def _node_params(args, config: dict) -> NodePointParams:
    distances = getattr(args, "node_distances", None) or config.get("node_distances")
    if distances is None:
        return NodePointParams()
    return NodePointParams(*(float(d) for d in distances))


def _retrigger(args, config: dict) -> int:
    if getattr(args, "retrigger", None) is not None:
        return args.retrigger
    return int(config.get("retrigger", DEFAULT_RETRIGGER_CYCLES))


def _load_gains(path: str) -> GainMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data["gains_row_major"]
    return GainMatrix.from_row_major(data)


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _random_gains(rng: np.random.Generator) -> GainMatrix:
    diag = rng.uniform(20.0, 60.0, 3)
    off = rng.normal(0.0, 3.0, (3, 3))
    p = np.diag(diag) + off - np.diag(np.diag(off))
    return GainMatrix(p)


def _cmd_synth(args) -> int:
    config = _load_config(args.config)
    scenario = _scenario_from(args, config)
    params = _node_params(args, config)
    retrigger = _retrigger(args, config)
    road = build_scenario_road(scenario)
    rng = np.random.default_rng(args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    drivers = []
    for i in range(1, args.drivers + 1):
        gains = _random_gains(rng)
        seed = int(rng.integers(0, 2**31 - 1))
        spec = SyntheticDriverSpec(gains_true=gains, offset_noise_sigma=args.sigma, seed=seed)
        log = generate_synthetic_driver_log(
            road, spec, params=params, retrigger=retrigger, speed=scenario.speed
        )
        log_name = f"driver_{i:02d}.csv"
        log.write_csv(out_dir / log_name)
        drivers.append(
            {
                "id": f"driver_{i:02d}",
                "log": log_name,
                "seed": seed,
                "sigma": args.sigma,
                "gains_true_row_major": gains.row_major(),
            }
        )
    manifest = {
        "scenario": scenario.to_dict(),
        "node_distances": list(params.distances),
        "retrigger": retrigger,
        "seed": args.seed,
        "drivers": drivers,
    }
    _write_json(out_dir / "cohort.json", manifest)
    print(f"wrote {len(drivers)} driver logs and cohort.json to {out_dir}")
    return 0


def _cmd_calibrate(args) -> int:
    config = _load_config(args.config)
    params = _node_params(args, config)
    retrigger = _retrigger(args, config)
    log = load_drive_log(args.log)

    result_distances = params
    extras: dict = {}
    if args.optimize_distances:
        opt = optimize_node_distances(log, params)
        result_distances = opt.params
        extras["distance_optimization"] = {
            "flat_cost": opt.flat_cost,
            "skipped_windows": opt.skipped_windows,
            "window_optima": [list(o) for o in opt.window_optima],
        }
    dataset = assemble_dataset(log, result_distances, retrigger)
    result = fit_gain_matrix(dataset)

    payload = result.to_dict()
    payload["node_distances"] = list(result_distances.distances)
    payload["dataset"] = {"cycles": dataset.n_cycles, "skipped": dataset.skipped}
    payload["provenance"] = {
        "log_file": str(args.log),
        "retrigger": retrigger,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    payload.update(extras)
    _write_json(args.out, payload)

    if args.sweep_nodes:
        sweep = node_count_tradeoff(log, retrigger=retrigger)
        sweep_path = args.sweep_out or (str(args.out) + ".sweep.csv")
        with open(sweep_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("node_count,norm_mean_error,norm_planning_time\n")
            for count, err, t in sweep:
                fh.write(f"{count},{format_float(err)},{format_float(t)}\n")
        print(f"wrote node-count sweep to {sweep_path}")
    print(
        f"calibrated {args.log}: {dataset.n_cycles} cycles, residual rms "
        f"{result.residual_rms:.3e} m -> {args.out}"
    )
    return 0


def _cmd_simulate(args) -> int:
    config = _load_config(args.config)
    params = _node_params(args, config)
    retrigger = _retrigger(args, config)
    log = load_drive_log(args.log)
    gains = _load_gains(args.gains) if args.gains else GainMatrix.zeros()
    if args.mode == "validation" and not args.gains:
        raise ValueError("validation mode requires --gains")
    trace = run_replay(log, gains, params, retrigger, mode=args.mode)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    trace_path = str(prefix) + "_trace.csv"
    replans_path = str(prefix) + "_replans.json"
    trace.write_csv(trace_path)
    trace.replans_to_json(replans_path)
    n_replans = sum(1 for r in trace.replans if not r.gap)
    print(f"replayed {len(trace)} cycles, {n_replans} replans -> {trace_path}")
    return 0


def _evaluate_driver(log: DriveLog, road, params, retrigger, vehicle, segments):
    dataset = assemble_dataset(log, params, retrigger)
    gains = fit_gain_matrix(dataset).gains
    planned = project_onto(run_replay(log, gains, params, retrigger, mode="validation"), road)
    reference = project_onto(run_replay(log, gains, params, retrigger, mode="estimation"), road)
    safety = safety_metrics(planned, road, vehicle, segments)
    performance = performance_metrics(planned, reference, segments)
    return safety, performance


def _cmd_evaluate(args) -> int:
    config = _load_config(args.config)
    cohort_path = Path(args.cohort)
    with open(cohort_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    scenario = ScenarioSpec.from_dict(manifest["scenario"])
    params = NodePointParams(*manifest.get("node_distances", NodePointParams().distances))
    retrigger = int(manifest.get("retrigger", DEFAULT_RETRIGGER_CYCLES))
    if getattr(args, "retrigger", None) is not None:
        retrigger = args.retrigger
    road = build_scenario_road(scenario)
    vehicle = VehicleSpec(width=float(config.get("vehicle_width", args.vehicle_width)))
    segments = detect_curve_segments(
        road,
        kappa_threshold=float(config.get("kappa_threshold", args.kappa_threshold)),
        min_length=float(config.get("min_curve_length", args.min_curve_length)),
    )
    if not segments:
        raise ValueError("scenario road contains no curve segments to evaluate")

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    safety_rows = []
    performance_rows = []
    for entry in manifest["drivers"]:
        log = load_drive_log(cohort_path.parent / entry["log"])
        safety, performance = _evaluate_driver(log, road, params, retrigger, vehicle, segments)
        safety_rows.append((entry["id"], safety))
        performance_rows.append((entry["id"], performance))
    write_safety_report(safety_rows, out_dir / "safety.csv", out_dir / "safety.json")
    write_performance_report(
        performance_rows, out_dir / "performance.csv", out_dir / "performance.json"
    )
    print(f"evaluated {len(safety_rows)} drivers over {len(segments)} curve segments -> {out_dir}")
    return 0


def _cmd_case_study(args) -> int:
    config = _load_config(args.config)
    scenario = _scenario_from(args, config)
    params = _node_params(args, config)
    retrigger = _retrigger(args, config)
    road = build_scenario_road(scenario)
    log = load_drive_log(args.log)
    gains = _load_gains(args.gains)
    segments = detect_curve_segments(road)
    if not segments:
        raise ValueError("scenario road contains no curve segments")
    if not 0 <= args.segment_index < len(segments):
        raise ValueError(f"segment index {args.segment_index} out of range 0..{len(segments) - 1}")
    planned = project_onto(run_replay(log, gains, params, retrigger, mode="validation"), road)
    reference = project_onto(run_replay(log, gains, params, retrigger, mode="estimation"), road)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    offsets_path, curvature_path = emit_case_study(
        planned,
        reference,
        road,
        segments[args.segment_index],
        str(prefix) + "_offsets.csv",
        str(prefix) + "_curvature.csv",
    )
    print(f"wrote case-study series to {offsets_path} and {curvature_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="curvepath", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0, help="random seed")
        p.add_argument("--config", help="JSON config file with shared defaults")
        p.add_argument(
            "--node-distances", type=float, nargs=3, metavar=("NEAR", "MID", "FAR"),
            help="node point distances in metres",
        )
        p.add_argument("--retrigger", type=int, help="replanning period in cycles (default 30)")

    p = sub.add_parser("synth", help="generate a synthetic driver cohort for a scenario")
    common(p)
    p.add_argument("--scenario", choices=["s-curve", "winding"], help="built-in scenario")
    p.add_argument("--drivers", type=int, default=15, help="number of drivers")
    p.add_argument("--sigma", type=float, default=0.05, help="offset noise sigma in metres")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("calibrate", help="identify the gain matrix from a drive log")
    common(p)
    p.add_argument("--log", required=True, help="drive log CSV")
    p.add_argument("--out", required=True, help="output calibration JSON")
    p.add_argument("--optimize-distances", action="store_true",
                   help="optimise node distances before the gain fit")
    p.add_argument("--sweep-nodes", action="store_true",
                   help="also run the node-count trade-off sweep")
    p.add_argument("--sweep-out", help="CSV path for the sweep (default <out>.sweep.csv)")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("simulate", help="replay a drive log with cyclic replanning")
    common(p)
    p.add_argument("--log", required=True, help="drive log CSV")
    p.add_argument("--gains", help="calibration JSON or row-major gain list")
    p.add_argument("--mode", choices=["validation", "estimation"], default="validation")
    p.add_argument("--out-prefix", required=True, help="output prefix for trace and replans")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("evaluate", help="safety and performance reports over a cohort")
    common(p)
    p.add_argument("--cohort", required=True, help="cohort manifest JSON from synth")
    p.add_argument("--out-dir", required=True, help="report output directory")
    p.add_argument("--vehicle-width", type=float, default=1.8)
    p.add_argument("--kappa-threshold", type=float, default=0.001)
    p.add_argument("--min-curve-length", type=float, default=50.0)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("case-study", help="emit offset and curvature series for one curve")
    common(p)
    p.add_argument("--log", required=True, help="drive log CSV")
    p.add_argument("--gains", required=True, help="calibration JSON or row-major gain list")
    p.add_argument("--scenario", choices=["s-curve", "winding"], help="built-in scenario")
    p.add_argument("--segment-index", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_case_study)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        sys.stderr.write(f"curvepath {args.command}: error: {exc}\n")
        return DATA_ERROR
    except json.JSONDecodeError as exc:
        sys.stderr.write(f"curvepath {args.command}: bad JSON: {exc}\n")
        return DATA_ERROR


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
