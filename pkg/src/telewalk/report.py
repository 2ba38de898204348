"""Figure rendering and delimited output for trials, sessions, and fits.

Every report path writes machine-readable tables (CSV/JSON) next to a
matplotlib figure of the same data; trajectory figures follow the usual
route-choice convention: simulated pedestrians as thin neutral traces, the
participant's route highlighted, geometry in the background.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Polygon as MplPolygon

from .crowd import TrialMetrics
from .scenario import Scenario

TRAJECTORY_HEADER = ["t", "id", "kind", "x", "y", "vx", "vy", "gate", "state"]


def _draw_scenario(ax, scenario: Scenario) -> None:
    ax.add_patch(MplPolygon(scenario.spawn_surface, closed=True,
                            facecolor="#d33", alpha=0.25, edgecolor="none",
                            label="spawn surface"))
    ax.add_patch(MplPolygon(scenario.goal_surface, closed=True,
                            facecolor="#2a2", alpha=0.25, edgecolor="none",
                            label="goal surface"))
    for x1, y1, x2, y2 in scenario.walls:
        ax.plot([x1, x2], [y1, y2], color="black", linewidth=2.0)
    for gate in scenario.gates:
        ax.plot([gate.x1, gate.x2], [gate.y1, gate.y2], color="#2a2",
                linewidth=3.0)
        ax.annotate(f"g{gate.gate_id}", gate.center, textcoords="offset points",
                    xytext=(4, 4), fontsize=8, color="#060")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")


def trajectories_figure(scenario: Scenario, rows, title: str = ""):
    """Figure of decimated trajectory rows over the scenario geometry."""
    fig, ax = plt.subplots(figsize=(9, 6))
    _draw_scenario(ax, scenario)
    paths: dict[tuple, list] = {}
    for t, pid, kind, x, y, *_ in rows:
        paths.setdefault((kind, pid), []).append((x, y))
    for (kind, pid), pts in paths.items():
        arr = np.asarray(pts)
        if kind == "ped":
            ax.plot(arr[:, 0], arr[:, 1], color="0.55", linewidth=0.5, alpha=0.6)
        elif kind == "avatar":
            ax.plot(arr[:, 0], arr[:, 1], color="#c30", linewidth=2.0,
                    label="participant avatar")
    if title:
        ax.set_title(title)
    handles, labels = ax.get_legend_handles_labels()
    if labels:
        by_label = dict(zip(labels, handles))
        ax.legend(by_label.values(), by_label.keys(), loc="upper left", fontsize=8)
    fig.tight_layout()
    return fig


def convergence_figure(report: dict, title: str = "calibration convergence"):
    """Anticipated-cost trajectories and per-iteration deltas."""
    iters = report["iterations"]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    if iters:
        updated = np.array([it["updated"] for it in iters])
        steps = np.arange(1, len(iters) + 1)
        for g in range(updated.shape[1]):
            ax1.plot(steps, updated[:, g], marker="o", markersize=3,
                     label=f"gate {g}")
        ax2.semilogy(steps, [it["max_delta"] for it in iters], marker="o",
                     markersize=3, color="#c30")
    ax1.set_ylabel("anticipated cost [s]")
    ax1.legend(fontsize=8)
    ax1.set_title(title)
    ax2.set_ylabel("max |delta| [s]")
    ax2.set_xlabel("iteration")
    ax2.axhline(report.get("tol", 0.5), color="0.5", linestyle="--", linewidth=1)
    fig.tight_layout()
    return fig


def write_trajectory_csv(path: Path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_HEADER)
        writer.writerows(rows)


def write_trial_outputs(out_dir: str | Path, scenario: Scenario,
                        metrics: TrialMetrics, rows) -> Path:
    """Trial report: metrics JSON, gate-count CSV, trajectory CSV + SVG."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trial.json", "w", encoding="utf-8") as fh:
        fh.write(metrics.to_json())
    with open(out / "scenario.json", "w", encoding="utf-8") as fh:
        json.dump(scenario.to_dict(), fh, indent=2)
    with open(out / "gate_counts.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gate", "count", "mean_completion_s"])
        for g, (count, cost) in enumerate(zip(metrics.gate_counts,
                                              metrics.gate_mean_costs)):
            writer.writerow([g, count, cost])
    write_trajectory_csv(out / "trajectory.csv", rows)
    fig = trajectories_figure(scenario, rows,
                              title=f"{scenario.name} seed={metrics.seed}")
    fig.savefig(out / "trajectories.svg")
    plt.close(fig)
    return out


def write_calibration_outputs(out_dir: str | Path, report: dict,
                              fit_report: dict | None = None) -> Path:
    """Calibration report: JSON, per-iteration CSV, convergence SVG."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"calibration": report}
    if fit_report is not None:
        payload["fit"] = fit_report
    with open(out / "calibration.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    with open(out / "iterations.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        n_gates = len(report["iterations"][0]["updated"]) if report["iterations"] else 0
        writer.writerow(["iteration"] + [f"cost_gate{g}" for g in range(n_gates)]
                        + ["max_delta"])
        for it in report["iterations"]:
            writer.writerow([it["iteration"]] + it["updated"] + [it["max_delta"]])
    fig = convergence_figure(report)
    fig.savefig(out / "convergence.svg")
    plt.close(fig)
    if fit_report is not None:
        with open(out / "fit_grid.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lam", "gamma", "tv_distance", "converged",
                             "iterations"])
            for row in fit_report["grid"]:
                writer.writerow([row["lam"], row["gamma"], row["tv_distance"],
                                 row["converged"], row["iterations"]])
    return out


def export_svg(log_or_trial_dir: str | Path, out_path: str | Path) -> Path:
    """Render the trajectory view of a session log or trial directory."""
    src = Path(log_or_trial_dir)
    rows = []
    csv_path = src / "trajectory.csv"
    if csv_path.exists():
        with open(csv_path, encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader, None)
            for rec in reader:
                rows.append((float(rec[0]), int(rec[1]), rec[2], float(rec[3]),
                             float(rec[4]), float(rec[5]), float(rec[6]),
                             int(rec[7]), rec[8]))
    config_path = src / "config.json"
    scenario_path = src / "scenario.json"
    if config_path.exists():
        with open(config_path, encoding="utf-8") as fh:
            scenario = Scenario.from_dict(json.load(fh)["scenario"])
    elif scenario_path.exists():
        with open(scenario_path, encoding="utf-8") as fh:
            scenario = Scenario.from_dict(json.load(fh))
    else:
        raise FileNotFoundError(f"no config.json or scenario.json in {src}")
    fig = trajectories_figure(scenario, rows, title=scenario.name)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out)
    plt.close(fig)
    return out
