"""Command-line entry points: serve, run, calibrate, replay, export-svg."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .calibration import (
    DEFAULT_GRID,
    ObservedData,
    calibrate,
    compare_user,
    fit_params_for_scenario,
    scenario_runner,
)
from .crowd import run_trial
from .report import (
    export_svg,
    trajectories_figure,
    write_calibration_outputs,
    write_trial_outputs,
)
from .scenario import ScenarioError, default_scenario, load_scenario
from .service import ScriptedPolicy, SessionConfig, run_scripted_session


def _fail(message: str, detail: str = "") -> "NoReturn":  # noqa: F821
    print(json.dumps({"error": message, "detail": detail}), file=sys.stderr)
    raise SystemExit(2)


def _load_scenario(path: str):
    try:
        return load_scenario(path)
    except ScenarioError as exc:
        _fail("invalid scenario", str(exc))


def _load_session_config(path: str | None) -> SessionConfig:
    if path is None:
        return SessionConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            return SessionConfig.from_dict(json.load(fh))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        _fail("invalid config", str(exc))


def _parse_scripted(spec: list[str]) -> ScriptedPolicy:
    fields: dict[str, str] = {}
    for item in spec:
        if "=" not in item:
            _fail("invalid --scripted argument", f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        fields[key] = value
    if "goal" not in fields:
        _fail("invalid --scripted argument", "goal=x,y is required")
    try:
        gx, gy = (float(v) for v in fields["goal"].split(","))
        policy = ScriptedPolicy(goal=(gx, gy))
        if "speed" in fields:
            policy.speed = float(fields["speed"])
        if "seed" in fields:
            policy.seed = int(fields["seed"])
        if "noise" in fields:
            scale = float(fields["noise"])
            policy.heading_noise *= scale
            policy.speed_noise *= scale
        return policy
    except ValueError as exc:
        _fail("invalid --scripted argument", str(exc))


def _parse_grid(spec: str):
    if spec == "default":
        return DEFAULT_GRID
    try:
        lam_part, gamma_part = spec.split("x")
        return ([float(v) for v in lam_part.split(",")],
                [float(v) for v in gamma_part.split(",")])
    except ValueError as exc:
        _fail("invalid --grid", f"use 'default' or 'l1,l2x g1,g2' syntax: {exc}")


def cmd_serve(args) -> int:
    from .server import serve_forever

    scenario = _load_scenario(args.scenario)
    config = _load_session_config(args.config)
    static = Path(args.static) if args.static else None
    serve_forever(scenario, config, port=args.port, host=args.host,
                  static_dir=static)
    return 0


def cmd_run(args) -> int:
    scenario = _load_scenario(args.scenario) if args.scenario else default_scenario()
    if args.peds is not None:
        scenario.spawn_count = args.peds
    out = Path(args.out)
    if args.scripted:
        policy = _parse_scripted(args.scripted)
        config = _load_session_config(args.config)
        config.seed = args.seed
        if config.goals is None:
            config.goals = [policy.goal]
        if not any(item.startswith("seed=") for item in args.scripted):
            policy.seed = args.seed
        session = run_scripted_session(scenario, config, policy)
        session.write_log(out)
        import matplotlib.pyplot as plt

        fig = trajectories_figure(scenario, session.trajectory_rows,
                                  title=f"session seed={args.seed}")
        fig.savefig(out / "trajectories.svg")
        plt.close(fig)
        print(json.dumps({"session": str(out), **session.summary()}))
        return 0
    metrics, rows = run_trial(scenario, seed=args.seed,
                              trajectory_every=args.decimation)
    write_trial_outputs(out, scenario, metrics, rows)
    print(json.dumps({"trial": str(out), "complete": metrics.complete,
                      "gate_counts": metrics.gate_counts,
                      "duration_s": metrics.duration}))
    return 0


def cmd_calibrate(args) -> int:
    scenario = _load_scenario(args.scenario) if args.scenario else default_scenario()
    if args.peds is not None:
        scenario.spawn_count = args.peds
    out = Path(args.out)
    fit_report = None
    if args.observed:
        try:
            observed = ObservedData.from_json(args.observed, scenario.n_gates)
        except (OSError, ValueError, KeyError) as exc:
            _fail("invalid observed-data file", str(exc))
        best, fit_report = fit_params_for_scenario(
            scenario, observed, grid=_parse_grid(args.grid), scheme=args.scheme,
            smoothing_weight=args.w, seed=args.seed, tol=args.tol,
            max_iter=args.max_iter)
        params = best
        print(json.dumps({"best_lam": best.lam, "best_gamma": best.gamma,
                          "tv_distance": fit_report["best"]["tv_distance"]}))
    else:
        params = scenario.gate_params
    state, report = calibrate(
        scenario_runner(scenario, params, seed=args.seed), scenario.n_gates,
        scheme=args.scheme, smoothing_weight=args.w, tol=args.tol,
        max_iter=args.max_iter)
    for it in report["iterations"]:
        costs = ", ".join(f"{c:.2f}" for c in it["updated"])
        print(f"iter {it['iteration']:3d}  costs [{costs}]  "
              f"max|delta| {it['max_delta']:.3f}")
    print(json.dumps({"converged": state.converged,
                      "iterations": state.iteration,
                      "costs": state.costs.tolist()}))
    write_calibration_outputs(out, report, fit_report)
    if args.observed and fit_report is not None:
        final_trial, _ = run_trial(scenario, gate_params=params,
                                   anticipated_costs=state.costs, seed=args.seed)
        comparison = compare_user(observed, final_trial)
        with open(out / "comparison.json", "w", encoding="utf-8") as fh:
            json.dump(comparison, fh, indent=2, allow_nan=True)
    return 0


def cmd_replay(args) -> int:
    from .service import replay

    try:
        ok, ticks, mismatch = replay(args.log)
    except (OSError, KeyError, ValueError) as exc:
        _fail("invalid session log", str(exc))
    print(json.dumps({"replay_ok": ok, "ticks": ticks,
                      "first_mismatch_tick": mismatch}))
    return 0 if ok else 1


def cmd_export_svg(args) -> int:
    try:
        out = export_svg(args.log, args.out)
    except (OSError, ScenarioError, KeyError) as exc:
        _fail("cannot export figure", str(exc))
    print(json.dumps({"figure": str(out)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="telewalk",
        description="Telepresence walking workbench: live sessions, headless "
                    "trials, and gate-choice calibration.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the live session server")
    p.add_argument("--port", type=int, default=8750)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--scenario", required=True)
    p.add_argument("--config", default=None, help="session config JSON")
    p.add_argument("--static", default=None, help="static UI directory")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("run", help="headless trial or scripted session")
    p.add_argument("--scenario", default=None)
    p.add_argument("--peds", type=int, default=None)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--decimation", type=int, default=5)
    p.add_argument("--config", default=None, help="session config JSON")
    p.add_argument("--scripted", nargs="+", default=None,
                   metavar="KEY=VALUE", help="goal=x,y [speed=v] [seed=n]")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("calibrate", help="dynamic-assignment calibration")
    p.add_argument("--scenario", default=None)
    p.add_argument("--observed", default=None, help="observed-data JSON")
    p.add_argument("--scheme", choices=("msa", "smooth"), default="msa")
    p.add_argument("--w", type=float, default=0.5, help="smoothing weight")
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--tol", type=float, default=0.5)
    p.add_argument("--grid", default="default")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--peds", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("replay", help="verify a session log reproduces")
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("export-svg", help="render trajectories to SVG")
    p.add_argument("--log", required=True, help="session log or trial directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_svg)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
