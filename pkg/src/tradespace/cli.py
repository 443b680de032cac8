"""Command-line batch tool: ``sample``, ``evaluate``, ``run`` and ``pareto``.

Every command writes into ``--out`` a ``manifest.json`` and CSV files whose
first line is ``# manifest=<hash>``. The hash covers the scenario and catalog
bytes, the seed and the command arguments, but not ``--jobs`` or ``--out``,
so reruns of the same inputs emit identical files.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .catalog import DEFAULT_CATALOG, CatalogError, CameraSpec, find_camera, load_catalog
from .doe import DesignVector, lhs_sample
from .information import pcrlb_history
from .kinematics import TrajectorySpline, sample_states
from .moo import OBJECTIVES, EvaluatedDesign, GaConfig, evolve, extract_pareto, non_dominated_sort
from .pipeline import DesignEvaluator, design_space
from .scenario import DEFAULT_SCENARIO, ScenarioError, load_scenario, time_grid

__all__ = ["main", "build_parser", "read_archive", "load_trajectories"]

log = logging.getLogger("tradespace")

EXIT_CONFIG = 2
EXIT_RUNTIME = 3

ARCHIVE_COLUMNS = ("generation", "n_uav", "camera_id", "boresight_deg", "rmse_mob", "rmse_vessel",
                   "cost", "feasible", "violation")
PROJECTIONS = {"cost_vs_rmse_mob": (2, 0), "cost_vs_rmse_vessel": (2, 1), "rmse_mob_vs_rmse_vessel": (0, 1)}


class ConfigError(Exception):
    """Bad inputs: unreadable scenario or catalog, or an invalid design."""


# --- manifest and file helpers ------------------------------------------------------


def _sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Manifest:
    def __init__(self, command: str, args: argparse.Namespace, settings: dict, extra_inputs=()):
        self.data = {
            "command": command,
            "scenario": str(args.scenario or DEFAULT_SCENARIO),
            "catalog": str(args.catalog or DEFAULT_CATALOG),
            "seed": args.seed,
            "overrides": settings,
            "out": str(args.out),
            "version": __version__,
        }
        digest = {
            "command": command,
            "scenario_sha256": _sha(self.data["scenario"]),
            "catalog_sha256": _sha(self.data["catalog"]),
            "seed": args.seed,
            "overrides": settings,
            "inputs": {str(p): _sha(p) for p in extra_inputs},
        }
        self.hash = hashlib.sha256(json.dumps(digest, sort_keys=True).encode()).hexdigest()
        self.data["input_hash"] = self.hash
        self.data["inputs"] = digest

    def write(self, out: Path, started: str) -> None:
        data = dict(self.data, started=started, finished=_now())
        (out / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _num(x) -> str:
    """Round-trip float text; integers stay integers."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_csv(path: Path, manifest_hash: str, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# manifest={manifest_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _num(v) for v in row])


def _read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# --- inputs --------------------------------------------------------------------------


def _load_inputs(args):
    try:
        scenario = load_scenario(args.scenario or DEFAULT_SCENARIO)
        catalog = load_catalog(args.catalog)
    except (OSError, ScenarioError, CatalogError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if args.seed is not None:
        scenario = scenario.with_updates(rng_seed=int(args.seed))
    return scenario, catalog


def _boresight_text(design: DesignVector) -> str:
    angles = design.per_uav if design.per_uav is not None else (design.boresight,)
    # 12 significant digits survive the degree/radian round trip, so re-reading an archive is lossless
    return ";".join(format(math.degrees(a), ".12g") for a in angles)


def _archive_row(e: EvaluatedDesign, catalog: list[CameraSpec]):
    d = e.design
    return (e.generation, d.n_uav, catalog[d.camera_index].id, _boresight_text(d), *e.objectives,
            e.feasible, e.violation)


def read_archive(path, catalog: list[CameraSpec]) -> list[EvaluatedDesign]:
    """Rebuild evaluated designs from an archive CSV."""
    out = []
    try:
        rows = _read_csv(path)
        if not rows or any(c not in rows[0] for c in ARCHIVE_COLUMNS):
            raise ValueError(f"archive {path} lacks columns {ARCHIVE_COLUMNS}")
        for row in rows:
            angles = tuple(math.radians(float(a)) for a in row["boresight_deg"].split(";"))
            n_uav = int(row["n_uav"])
            design = DesignVector(n_uav, find_camera(catalog, row["camera_id"]), angles[0],
                                  angles if len(angles) > 1 else None)
            objectives = tuple(float(row[k]) for k in OBJECTIVES)
            violation = float(row["violation"])
            out.append(EvaluatedDesign(design, objectives, violation, int(row["generation"])))
    except (KeyError, ValueError, CatalogError) as exc:
        raise ConfigError(f"malformed archive {path}: {exc}") from exc
    return out


# --- artifact writers ---------------------------------------------------------------


def _write_trajectories(out: Path, name: str, splines, scenario, manifest_hash: str) -> None:
    times = time_grid(splines[0].duration, scenario.grid_dt)
    rows = []
    for u, s in enumerate(splines):
        st = sample_states(s, times, scenario.gravity)
        for k, t in enumerate(times):
            rows.append((u, t, st.position[k, 0], st.position[k, 1], s.altitude, math.degrees(st.heading[k]),
                         math.degrees(st.roll[k]), st.speed[k]))
    _write_csv(out / "trajectories" / f"{name}.csv", manifest_hash,
               ("uav_id", "t", "x", "y", "h", "psi_deg", "phi_deg", "speed"), rows)
    payload = {"manifest": manifest_hash,
               "uavs": [{"control_points": s.control_points.tolist(), "duration": s.duration,
                         "altitude": s.altitude} for s in splines]}
    (out / "trajectories" / f"{name}.json").write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def load_trajectories(path) -> list[TrajectorySpline]:
    """Splines from a control-point JSON dump."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return [TrajectorySpline(np.array(u["control_points"]), u["duration"], u["altitude"]) for u in payload["uavs"]]


def _write_front(out: Path, front: list[EvaluatedDesign], catalog, manifest_hash: str) -> None:
    _write_csv(out / "pareto.csv", manifest_hash, ARCHIVE_COLUMNS, [_archive_row(e, catalog) for e in front])
    F = np.array([e.objectives for e in front], float).reshape(-1, len(OBJECTIVES))
    for name, (x, y) in PROJECTIONS.items():
        on_2d = np.zeros(len(front), bool)
        if front:
            on_2d[non_dominated_sort(F[:, [x, y]])[0]] = True
        order = sorted(range(len(front)), key=lambda i: (F[i, x], F[i, y]))
        rows = [(F[i, x], F[i, y], bool(on_2d[i]), front[i].design.n_uav, catalog[front[i].design.camera_index].id,
                 _boresight_text(front[i].design)) for i in order]
        _write_csv(out / "projections" / f"{name}.csv", manifest_hash,
                   (OBJECTIVES[x], OBJECTIVES[y], "front_2d", "n_uav", "camera_id", "boresight_deg"), rows)


# --- commands -----------------------------------------------------------------------


def cmd_sample(args) -> int:
    scenario, catalog = _load_inputs(args)
    seed = scenario.rng_seed if args.seed is None else args.seed
    settings = {"n": args.n, "team_sizes": list(args.team_sizes), "per_uav_boresight": args.per_uav_boresight}
    manifest = Manifest("sample", args, settings)
    started = _now()
    space = design_space(scenario, catalog, args.team_sizes, args.per_uav_boresight, flatten=False)
    designs = lhs_sample(space, args.n, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [(d.n_uav, catalog[d.camera_index].id, _boresight_text(d)) for d in designs]
    _write_csv(out / "designs.csv", manifest.hash, ("n_uav", "camera_id", "boresight_deg"), rows)
    manifest.write(out, started)
    return 0


def cmd_evaluate(args) -> int:
    scenario, catalog = _load_inputs(args)
    try:
        if not 0.0 <= args.boresight <= 90.0:
            raise ValueError(f"boresight {args.boresight} deg outside [0, 90]")
        if args.n_uav < 1:
            raise ValueError("--n-uav must be >= 1")
        design = DesignVector(args.n_uav, find_camera(catalog, args.camera), math.radians(args.boresight))
    except (ValueError, CatalogError) as exc:
        raise ConfigError(str(exc)) from exc
    settings = {"n_uav": args.n_uav, "camera": args.camera, "boresight_deg": args.boresight,
                "trials": args.trials, "budget": args.budget}
    manifest = Manifest("evaluate", args, settings)
    started = _now()
    evaluator = DesignEvaluator(scenario, catalog, trials=args.trials, budget=args.budget, flatten=False)
    result = evaluator(design)
    rec = result.result
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not result.feasible:
        log.warning("design is infeasible (violation %.4g)", result.violation)
    record = {
        "manifest": manifest.hash,
        "n_uav": design.n_uav,
        "camera_id": args.camera,
        "boresight_deg": args.boresight,
        **dict(zip(OBJECTIVES, result.objectives)),
        "feasible": result.feasible,
        "violation": result.violation,
        "violations": rec.report.violations,
        "duration": rec.splines[0].duration,
        "trajopt_cost": rec.trajopt_cost,
        "trajopt_evaluations": rec.trajopt_evaluations,
        "trials": rec.monte_carlo.trials,
        "mc_seed": rec.monte_carlo.seed,
    }
    text = json.dumps(record, indent=2) + "\n"
    (out / "evaluation.json").write_text(text, encoding="utf-8")
    _write_trajectories(out, "design", rec.splines, scenario, manifest.hash)
    hist = pcrlb_history(rec.splines, scenario, evaluator.mounts(design))
    _write_csv(out / "pcrlb.csv", manifest.hash, ("t", "trace_mob", "trace_vessel"),
               zip(hist.times, hist.trace_mob, hist.trace_vessel))
    if args.dump_trials:
        mc = rec.monte_carlo
        rows = [(i, name, *err[i]) for i in range(mc.trials)
                for name, err in (("mob", mc.errors_mob), ("vessel", mc.errors_vessel))]
        _write_csv(out / "trials.csv", manifest.hash, ("trial", "target", "err_x", "err_y"), rows)
    manifest.write(out, started)
    sys.stdout.write(text)
    return 0


def _objective_mask(text: str) -> tuple[int, ...]:
    names = [t.strip() for t in text.split(",") if t.strip()]
    bad = [n for n in names if n not in OBJECTIVES]
    if bad or not names:
        raise ConfigError(f"unknown objective(s) {bad}; choose from {OBJECTIVES}")
    return tuple(OBJECTIVES.index(n) for n in names)


def cmd_run(args) -> int:
    scenario, catalog = _load_inputs(args)
    mask = _objective_mask(args.objectives)
    if args.camera is not None:
        try:
            catalog = [catalog[find_camera(catalog, args.camera)]]
        except CatalogError as exc:
            raise ConfigError(str(exc)) from exc
    seed = scenario.rng_seed if args.seed is None else args.seed
    try:
        config = GaConfig(population=args.population, generations=args.generations, seed=seed,
                          constraint_mode=args.constraint_mode, objectives=mask)
        space = design_space(scenario, catalog, args.team_sizes, args.per_uav_boresight)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    settings = {"population": args.population, "generations": args.generations, "trials": args.trials,
                "budget": args.budget, "team_sizes": list(args.team_sizes), "camera": args.camera,
                "objectives": list(mask), "constraint_mode": args.constraint_mode,
                "per_uav_boresight": args.per_uav_boresight}
    manifest = Manifest("run", args, settings)
    started = _now()
    evaluator = DesignEvaluator(scenario, catalog, trials=args.trials, budget=args.budget)
    initial = lhs_sample(space, config.population, seed)

    def progress(gen, pop):
        log.info("generation %d: %d feasible of %d", gen, sum(e.feasible for e in pop), len(pop))

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            res = evolve(space, initial, config, evaluator, map_fn=pool.map, on_generation=progress)
    else:
        res = evolve(space, initial, config, evaluator, on_generation=progress)
    front = extract_pareto(res.archive, mask)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "archive.csv", manifest.hash, ARCHIVE_COLUMNS, [_archive_row(e, catalog) for e in res.archive])
    _write_front(out, front, catalog, manifest.hash)
    for k, e in enumerate(front):
        if e.result is not None:
            _write_trajectories(out, f"front_{k:03d}", e.result.splines, scenario, manifest.hash)
    manifest.write(out, started)
    log.info("archive %d designs, front %d", len(res.archive), len(front))
    return 0


def cmd_pareto(args) -> int:
    _, catalog = _load_inputs(args)
    mask = _objective_mask(args.objectives)
    archive = read_archive(args.archive, catalog)
    manifest = Manifest("pareto", args, {"objectives": list(mask)}, extra_inputs=[args.archive])
    started = _now()
    front = extract_pareto(archive, mask)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_front(out, front, catalog, manifest.hash)
    manifest.write(out, started)
    return 0


# --- parser -------------------------------------------------------------------------


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _team_sizes(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(t) for t in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("team sizes must be >= 1")
    return sizes


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--scenario", default=default(None), help="scenario INI file (default: bundled)")
    parser.add_argument("--catalog", default=default(None), help="camera catalog CSV (default: bundled)")
    parser.add_argument("--seed", type=int, default=default(None), help="master seed (default: scenario seed)")
    parser.add_argument("--out", default=default("tradespace_out"), help="output directory")
    parser.add_argument("--jobs", type=_positive, default=default(1), help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tradespace", description="UAV ISR mission trade-space engine")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="Latin hypercube designs as CSV")
    _global_flags(p, suppress=True)
    p.add_argument("--n", type=_positive, required=True, help="number of designs")
    p.add_argument("--team-sizes", type=_team_sizes, default=(1, 3))
    p.add_argument("--per-uav-boresight", action="store_true")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("evaluate", help="evaluate one design")
    _global_flags(p, suppress=True)
    p.add_argument("--n-uav", type=int, required=True)
    p.add_argument("--camera", required=True, help="catalog camera id")
    p.add_argument("--boresight", type=float, required=True, help="degrees in [0, 90]")
    p.add_argument("--trials", type=_positive, default=None, help="Monte Carlo trials")
    p.add_argument("--budget", type=_positive, default=None, help="trajectory search evaluations")
    p.add_argument("--dump-trials", action="store_true", help="write per-trial errors")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="full optimization with archive, front and projections")
    _global_flags(p, suppress=True)
    p.add_argument("--population", type=_positive, default=40)
    p.add_argument("--generations", type=int, default=30)
    p.add_argument("--trials", type=_positive, default=None)
    p.add_argument("--budget", type=_positive, default=None)
    p.add_argument("--team-sizes", type=_team_sizes, default=(1, 3))
    p.add_argument("--camera", default=None, help="fix the camera to one catalog id")
    p.add_argument("--objectives", default=",".join(OBJECTIVES))
    p.add_argument("--constraint-mode", choices=("constraint-domination", "discard"),
                   default="constraint-domination")
    p.add_argument("--per-uav-boresight", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("pareto", help="re-extract the front from an archive CSV")
    _global_flags(p, suppress=True)
    p.add_argument("--archive", required=True)
    p.add_argument("--objectives", default=",".join(OBJECTIVES))
    p.set_defaults(func=cmd_pareto)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = os.environ.get("TRADESPACE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"tradespace: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - top-level exit-code contract
        log.debug("runtime failure", exc_info=True)
        print(f"tradespace: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
