"""Command-line entry point.

Subcommands:
    run      execute a scenario, write the run log + summary, print a table
    replay   re-check a run log by replaying its inputs through the dynamics
    validate lint a scenario file and print the fully resolved parameters

Scenario files are strict YAML trees (unknown keys are errors); run logs
are line-delimited JSON with a header record. See docs/scenario_format.md
and docs/run_log_schema.md. Exit codes: 0 success, 1 internal error,
2 scenario parse error, 3 validation error, 4 incomplete iteration.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import _kernels
from .controller import ControllerConfig
from .dynamics import ModelParams, rollout
from .environment import ObstacleSpec
from .history import DistanceWeights
from .ilqr import ILQRConfig
from .runner import RunnerError, Scenario, SeedConfig, run_task

LOG_SCHEMA = "i2lqr-log/1"

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_INCOMPLETE = 4

REQUIRED_KEYS = ("name", "start", "target")

BUNDLED_SCENARIOS = ("no_obstacle", "static_ellipse", "added_static_circle", "moving_circle")


class ScenarioParseError(Exception):
    pass


class ScenarioValidationError(Exception):
    pass


# ---------------------------------------------------------------------------
# scenario (de)serialization
# ---------------------------------------------------------------------------

def _check_keys(section: dict, allowed, where: str):
    unknown = set(section) - set(allowed)
    if unknown:
        raise ScenarioValidationError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _vec(value, n, where: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioValidationError(f"{where}: expected {n} numbers, got {value!r}") from exc
    if arr.shape != (n,):
        raise ScenarioValidationError(f"{where}: expected {n} numbers, got shape {arr.shape}")
    return arr


def _obstacle_from_dict(d: dict, idx: int) -> ObstacleSpec:
    where = f"obstacles[{idx}]"
    _check_keys(d, ("shape", "center", "semi_axes", "radius", "velocity",
                    "active_iterations", "spawn_time", "safety_margin"), where)
    shape = d.get("shape")
    if shape not in ("ellipse", "circle"):
        raise ScenarioValidationError(f"{where}: shape must be 'ellipse' or 'circle'")
    if shape == "circle":
        if "radius" not in d:
            raise ScenarioValidationError(f"{where}: circle requires 'radius'")
        r = float(d["radius"])
        semi = (r, r)
    else:
        semi = tuple(_vec(d.get("semi_axes"), 2, f"{where}.semi_axes"))
    center = tuple(_vec(d.get("center"), 2, f"{where}.center"))
    velocity = tuple(_vec(d.get("velocity", [0.0, 0.0]), 2, f"{where}.velocity"))
    active = d.get("active_iterations", "all")
    if active == "all":
        active_set = None
    else:
        try:
            active_set = frozenset(int(i) for i in active)
        except (TypeError, ValueError) as exc:
            raise ScenarioValidationError(f"{where}: active_iterations must be 'all' or a list of ints") from exc
    try:
        return ObstacleSpec(
            shape=shape, center0=center, semi_axes=semi, velocity=velocity,
            active_iterations=active_set,
            spawn_time=int(d.get("spawn_time", 0)),
            safety_margin=float(d.get("safety_margin", 0.5)),
        )
    except ValueError as exc:
        raise ScenarioValidationError(f"{where}: {exc}") from exc


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioValidationError(
            f"scenario must be a mapping with at least the keys {list(REQUIRED_KEYS)}")
    _check_keys(data, REQUIRED_KEYS + (
        "epsilon", "num_iterations", "max_steps_per_iteration", "history_window",
        "seed", "model", "controller", "obstacles", "seed_trajectory"), "scenario")
    missing = [k for k in REQUIRED_KEYS if k not in data]
    if missing:
        raise ScenarioValidationError(f"missing required key(s): {missing}")

    model_d = dict(data.get("model", {}))
    _check_keys(model_d, ("dt", "lf", "lr"), "model")
    ctrl_d = dict(data.get("controller", {}))
    _check_keys(ctrl_d, ("k_candidates", "r_max", "w_h", "w_d", "d0", "d1", "ilqr"), "controller")
    ilqr_d = dict(ctrl_d.get("ilqr", {}))
    _check_keys(ilqr_d, ("horizon", "terminal_weight", "input_weight", "barrier_q1",
                         "barrier_q2", "max_iterations", "convergence_tol",
                         "reg_init", "reg_max"), "controller.ilqr")
    seed_d = dict(data.get("seed_trajectory", {}))
    _check_keys(seed_d, ("v_cruise_grid", "offset_grid"), "seed_trajectory")

    try:
        model = ModelParams(
            dt=float(model_d.get("dt", 1.0)),
            lf=float(model_d.get("lf", 0.5)),
            lr=float(model_d.get("lr", 0.5)),
        )
        ilqr_defaults = ILQRConfig()
        ilqr = ILQRConfig(
            horizon=int(ilqr_d.get("horizon", ilqr_defaults.horizon)),
            terminal_weight=tuple(_vec(ilqr_d.get("terminal_weight",
                                                  ilqr_defaults.terminal_weight), 4,
                                       "controller.ilqr.terminal_weight")),
            input_weight=tuple(_vec(ilqr_d.get("input_weight",
                                               ilqr_defaults.input_weight), 2,
                                    "controller.ilqr.input_weight")),
            barrier_q1=float(ilqr_d.get("barrier_q1", ilqr_defaults.barrier_q1)),
            barrier_q2=float(ilqr_d.get("barrier_q2", ilqr_defaults.barrier_q2)),
            max_iterations=int(ilqr_d.get("max_iterations", ilqr_defaults.max_iterations)),
            convergence_tol=float(ilqr_d.get("convergence_tol", ilqr_defaults.convergence_tol)),
            reg_init=float(ilqr_d.get("reg_init", ilqr_defaults.reg_init)),
            reg_max=float(ilqr_d.get("reg_max", ilqr_defaults.reg_max)),
        )
        ctrl_defaults = ControllerConfig()
        controller = ControllerConfig(
            k_candidates=int(ctrl_d.get("k_candidates", ctrl_defaults.k_candidates)),
            r_max=int(ctrl_d.get("r_max", ctrl_defaults.r_max)),
            d0=DistanceWeights(_vec(ctrl_d.get("d0", list(ctrl_defaults.d0.d0)), 4, "controller.d0")),
            d1=_vec(ctrl_d["d1"], 4, "controller.d1") if "d1" in ctrl_d else None,
            w_h=float(ctrl_d.get("w_h", ctrl_defaults.w_h)),
            w_d=float(ctrl_d.get("w_d", ctrl_defaults.w_d)),
            ilqr=ilqr,
        )
        obstacles = tuple(_obstacle_from_dict(dict(o), i)
                          for i, o in enumerate(data.get("obstacles", [])))
        seed_defaults = SeedConfig()
        return Scenario(
            name=str(data["name"]),
            x0=_vec(data["start"], 4, "start"),
            x_target=_vec(data["target"], 4, "target"),
            epsilon=float(data.get("epsilon", 2.0)),
            model=model,
            obstacles=obstacles,
            num_iterations=int(data.get("num_iterations", 10)),
            max_steps_per_iteration=int(data.get("max_steps_per_iteration", 200)),
            history_window=int(data.get("history_window", 2)),
            controller=controller,
            seed=int(data.get("seed", 0)),
            seed_trajectory=SeedConfig(
                v_cruise_grid=tuple(float(v) for v in seed_d.get("v_cruise_grid",
                                                                 seed_defaults.v_cruise_grid)),
                offset_grid=tuple(float(v) for v in seed_d.get("offset_grid",
                                                               seed_defaults.offset_grid)),
            ),
        )
    except ScenarioValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioValidationError(str(exc)) from exc


def scenario_to_dict(s: Scenario) -> dict:
    """Fully resolved scenario (defaults included) as plain JSON/YAML data."""
    obstacles = []
    for ob in s.obstacles:
        d = {
            "shape": ob.shape,
            "center": [float(v) for v in ob.center0],
            "velocity": [float(v) for v in ob.velocity],
            "active_iterations": ("all" if ob.active_iterations is None
                                  else sorted(int(i) for i in ob.active_iterations)),
            "spawn_time": int(ob.spawn_time),
            "safety_margin": float(ob.safety_margin),
        }
        if ob.shape == "circle":
            d["radius"] = float(ob.semi_axes[0])
        else:
            d["semi_axes"] = [float(v) for v in ob.semi_axes]
        obstacles.append(d)
    c = s.controller
    return {
        "name": s.name,
        "start": [float(v) for v in s.x0],
        "target": [float(v) for v in s.x_target],
        "epsilon": s.epsilon,
        "num_iterations": s.num_iterations,
        "max_steps_per_iteration": s.max_steps_per_iteration,
        "history_window": s.history_window,
        "seed": s.seed,
        "model": {"dt": s.model.dt, "lf": s.model.lf, "lr": s.model.lr},
        "controller": {
            "k_candidates": c.k_candidates,
            "r_max": c.r_max,
            "w_h": c.w_h,
            "w_d": c.w_d,
            "d0": [float(v) for v in c.d0.d0],
            "d1": [float(v) for v in c.d1],
            "ilqr": {
                "horizon": c.ilqr.horizon,
                "terminal_weight": [float(v) for v in c.ilqr.terminal_weight],
                "input_weight": [float(v) for v in c.ilqr.input_weight],
                "barrier_q1": c.ilqr.barrier_q1,
                "barrier_q2": c.ilqr.barrier_q2,
                "max_iterations": c.ilqr.max_iterations,
                "convergence_tol": c.ilqr.convergence_tol,
                "reg_init": c.ilqr.reg_init,
                "reg_max": c.ilqr.reg_max,
            },
        },
        "obstacles": obstacles,
        "seed_trajectory": {
            "v_cruise_grid": [float(v) for v in s.seed_trajectory.v_cruise_grid],
            "offset_grid": [float(v) for v in s.seed_trajectory.offset_grid],
        },
    }


def resolve_scenario_path(name_or_path: str) -> Path:
    """A filesystem path, or the name of a bundled scenario."""
    p = Path(name_or_path)
    if p.exists():
        return p
    stem = p.stem if p.suffix == ".scn" else name_or_path
    if stem in BUNDLED_SCENARIOS:
        return Path(str(resources.files("i2lqr") / "scenarios" / f"{stem}.scn"))
    raise ScenarioParseError(
        f"scenario {name_or_path!r} is neither a readable file nor one of the "
        f"bundled scenarios {list(BUNDLED_SCENARIOS)}")


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioParseError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioParseError(f"YAML error in {path}: {exc}") from exc
    if data is None:
        raise ScenarioValidationError(
            f"{path} is empty; required keys: {list(REQUIRED_KEYS)}")
    return scenario_from_dict(data)


def save_scenario(scenario: Scenario, path):
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False))


# ---------------------------------------------------------------------------
# run log
# ---------------------------------------------------------------------------

def _diag_to_json(diag):
    return [
        {
            "cycle": d.cycle,
            "sources": [list(s) for s in d.sources],
            "h": list(d.costs_to_go),
            "scores": list(d.scores),
            "best": d.best_index,
        }
        for d in diag
    ]


def write_run_log(result, path, verbose: bool = False):
    """Line-delimited JSON: header record, step records, iteration records,
    one summary record. Deterministic byte-for-byte for a given result."""
    s = result.scenario
    dt = s.model.dt
    with open(path, "w") as f:
        f.write(json.dumps({"type": "header", "schema": LOG_SCHEMA,
                            "scenario": scenario_to_dict(s)}, sort_keys=True) + "\n")
        rows = []
        for it in result.iterations:
            # the trajectory may extend past the completion step (brake tail)
            for t in range(it.inputs.shape[0]):
                rec = {
                    "type": "step",
                    "iteration": it.index,
                    "t": t,
                    "state": [float(v) for v in it.states[t]],
                    "input": [float(v) for v in it.inputs[t]],
                }
                if t < len(it.cycles_per_step):
                    rec["cycles"] = it.cycles_per_step[t]
                if verbose and t < len(it.diagnostics):
                    rec["cycle_diag"] = _diag_to_json(it.diagnostics[t])
                f.write(json.dumps(rec, sort_keys=True) + "\n")
            final = {
                "type": "iteration",
                "iteration": it.index,
                "steps": it.steps,
                "seconds": it.steps * dt,
                "completed": it.completed,
                "final_state": [float(v) for v in it.states[-1]],
                "min_clearance": it.min_clearance,
            }
            f.write(json.dumps(final, sort_keys=True) + "\n")
            rows.append([it.index, it.steps * dt, it.completed, it.min_clearance])
        f.write(json.dumps({"type": "summary", "rows": rows}, sort_keys=True) + "\n")


def summary_rows(result):
    """SummaryTable rows: (iteration, seconds, completed, min clearance)."""
    dt = result.scenario.model.dt
    return [(it.index, it.steps * dt, it.completed, it.min_clearance)
            for it in result.iterations]


def write_summary(result, path):
    with open(path, "w") as f:
        f.write("iteration,seconds,completed,min_clearance\n")
        for i, secs, done, clear in summary_rows(result):
            clear_s = "" if clear is None else f"{clear:.3f}"
            f.write(f"{i},{secs:g},{str(done).lower()},{clear_s}\n")


def print_summary(result, file=sys.stdout):
    print(f"scenario: {result.scenario.name}   backend: {_kernels.active_backend()}   "
          f"wall time: {result.wall_time:.1f}s", file=file)
    print("iter  time [s]  completed  min clearance [m]", file=file)
    for i, secs, done, clear in summary_rows(result):
        clear_s = "-" if clear is None else f"{clear:9.2f}"
        print(f"{i:4d}  {secs:8g}  {str(done):>9s}  {clear_s:>17s}", file=file)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_run(args) -> int:
    scenario = load_scenario(resolve_scenario_path(args.scenario))
    if args.iterations is not None:
        d = scenario_to_dict(scenario)
        d["num_iterations"] = args.iterations
        scenario = scenario_from_dict(d)
    result = run_task(scenario, workers=args.workers, verbose=args.verbose)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_run_log(result, out / f"{scenario.name}.log", verbose=args.verbose)
    write_summary(result, out / f"{scenario.name}.summary.csv")
    print_summary(result)
    if not all(it.completed for it in result.iterations):
        return EXIT_INCOMPLETE
    return EXIT_OK


def _cmd_replay(args) -> int:
    path = Path(args.log)
    records = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    header = records[0]
    if header.get("type") != "header" or header.get("schema") != LOG_SCHEMA:
        raise ScenarioParseError(f"{path} is not a {LOG_SCHEMA} run log")
    scenario = scenario_from_dict(header["scenario"])

    per_iter: dict[int, list] = {}
    for rec in records:
        if rec["type"] == "step":
            per_iter.setdefault(rec["iteration"], []).append(rec)
    finals = {rec["iteration"]: rec for rec in records if rec["type"] == "iteration"}

    for i, steps in sorted(per_iter.items()):
        steps.sort(key=lambda r: r["t"])
        x0 = np.array(steps[0]["state"])
        inputs = np.array([r["input"] for r in steps])
        replayed = rollout(x0, inputs, scenario.model)
        logged = np.array([r["state"] for r in steps] + [finals[i]["final_state"]])
        if not np.array_equal(replayed, logged):
            print(f"replay mismatch in iteration {i}", file=sys.stderr)
            return EXIT_INTERNAL
    print(f"replayed {len(per_iter)} iterations: states match exactly")
    return EXIT_OK


def _cmd_validate(args) -> int:
    scenario = load_scenario(resolve_scenario_path(args.scenario))
    print(yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="i2lqr",
                                     description="History-driven iterative LQR benchmark runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario and write logs")
    p_run.add_argument("--scenario", required=True,
                       help="scenario file path or bundled scenario name")
    p_run.add_argument("--out", default="results", help="output directory")
    p_run.add_argument("--workers", type=int, default=1,
                       help="thread pool size for the per-cycle solves")
    p_run.add_argument("--verbose", action="store_true",
                       help="include per-cycle diagnostics in the run log")
    p_run.add_argument("--iterations", type=int, default=None,
                       help="override the scenario's iteration count")
    p_run.set_defaults(func=_cmd_run)

    p_replay = sub.add_parser("replay", help="verify a run log by exact replay")
    p_replay.add_argument("--log", required=True, help="run log path")
    p_replay.set_defaults(func=_cmd_replay)

    p_val = sub.add_parser("validate", help="lint a scenario file")
    p_val.add_argument("--scenario", required=True,
                       help="scenario file path or bundled scenario name")
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ScenarioValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RunnerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # anything else is an internal error
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
