"""Dynamic-assignment calibration of anticipated gate costs.

The loop feeds anticipated per-gate costs into trials, measures realized
per-gate costs, and blends them back in, either by averaging all iterations
equally (weight 1/N per iteration) or by exponential smoothing of the last
iteration against the running estimate (weights W and 1-W). Convergence is
declared when no gate's anticipated cost moves by more than the tolerance.
Comparison against observed participants uses the total-variation distance
between gate distributions plus per-metric mean absolute deviations.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .crowd import TrialMetrics, run_trial
from .scenario import GateChoiceParams, Scenario


class TrialOutcome(NamedTuple):
    """What one trial reports back: realized costs and the gate split."""

    measured_costs: np.ndarray  # seconds per gate; NaN where a gate went unused
    gate_counts: np.ndarray


TrialRunner = Callable[[np.ndarray], TrialOutcome]


@dataclass(frozen=True)
class CalibrationState:
    """Anticipated costs plus the update scheme and iteration history."""

    costs: np.ndarray
    iteration: int = 0
    scheme: str = "msa"             # "msa" | "smooth"
    smoothing_weight: float = 0.5   # W, used by the smoothing scheme
    converged: bool = False
    history: tuple = ()

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=float)
        if np.any(costs < 0) or not np.all(np.isfinite(costs)):
            raise ValueError("anticipated costs must be non-negative and finite")
        object.__setattr__(self, "costs", costs)
        if self.scheme not in ("msa", "smooth"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0 < self.smoothing_weight <= 1:
            raise ValueError("smoothing weight must be in (0, 1]")


def _carry_unused(costs: np.ndarray, measured) -> tuple[np.ndarray, list[int]]:
    """Replace NaN measurements (unused gates) by the current estimate."""
    measured = np.asarray(measured, dtype=float)
    unused = np.flatnonzero(~np.isfinite(measured))
    if unused.size:
        measured = measured.copy()
        measured[unused] = costs[unused]
    return measured, unused.tolist()


def msa_update(state: CalibrationState, measured) -> CalibrationState:
    """Equal-weight averaging: after N updates the costs equal the running
    mean of all measurements."""
    if state.scheme != "msa":
        raise ValueError("msa_update requires an MSA-scheme state")
    measured, _ = _carry_unused(state.costs, measured)
    n = state.iteration
    costs = state.costs + (measured - state.costs) / (n + 1)
    return replace(state, costs=costs, iteration=n + 1)


def smooth_update(state: CalibrationState, measured) -> CalibrationState:
    """Exponential smoothing: last measurement weighted W, estimate 1-W."""
    if state.scheme != "smooth":
        raise ValueError("smooth_update requires a smoothing-scheme state")
    measured, _ = _carry_unused(state.costs, measured)
    w = state.smoothing_weight
    costs = w * measured + (1.0 - w) * state.costs
    return replace(state, costs=costs, iteration=state.iteration + 1)


def calibrate(runner: TrialRunner, n_gates: int, scheme: str = "msa",
              smoothing_weight: float = 0.5, initial_costs=None,
              tol: float = 0.5, max_iter: int = 50) -> tuple[CalibrationState, dict]:
    """Iterate trials and cost updates until the costs settle.

    Returns the final state (converged flag set accordingly; hitting the
    iteration cap is a result, not an error) and a report carrying the cost
    and gate-distribution trajectory per iteration.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    costs0 = (np.zeros(n_gates) if initial_costs is None
              else np.asarray(initial_costs, dtype=float))
    state = CalibrationState(costs=costs0, scheme=scheme,
                             smoothing_weight=smoothing_weight)
    update = msa_update if scheme == "msa" else smooth_update
    iterations = []
    for _ in range(max_iter):
        outcome = runner(state.costs)
        measured, unused = _carry_unused(state.costs, outcome.measured_costs)
        new_state = update(state, measured)
        delta = float(np.max(np.abs(new_state.costs - state.costs))) if n_gates else 0.0
        iterations.append({
            "iteration": new_state.iteration,
            "anticipated": state.costs.tolist(),
            "measured": measured.tolist(),
            "unused_gates": unused,
            "updated": new_state.costs.tolist(),
            "distribution": np.asarray(outcome.gate_counts, dtype=float).tolist(),
            "max_delta": delta,
        })
        history = state.history + ((measured.tolist(),
                                    np.asarray(outcome.gate_counts).tolist()),)
        state = replace(new_state, history=history)
        if delta < tol:
            state = replace(state, converged=True)
            break
    report = {
        "scheme": scheme,
        "smoothing_weight": smoothing_weight if scheme == "smooth" else None,
        "tol": tol,
        "max_iter": max_iter,
        "converged": state.converged,
        "iterations": iterations,
    }
    return state, report


def scenario_runner(scenario: Scenario, gate_params: GateChoiceParams,
                    seed: int) -> TrialRunner:
    """Trial runner backed by the crowd simulation; one fresh sub-seed per
    call so iterations are independent but the whole loop is reproducible."""
    counter = {"k": 0}

    def run(costs: np.ndarray) -> TrialOutcome:
        trial_seed = seed * 100_003 + counter["k"]
        counter["k"] += 1
        metrics, _ = run_trial(scenario, gate_params=gate_params,
                               anticipated_costs=costs, seed=trial_seed)
        return TrialOutcome(np.asarray(metrics.gate_mean_costs, dtype=float),
                            np.asarray(metrics.gate_counts, dtype=float))

    return run


@dataclass
class ObservedData:
    """Route choices of real participants: gate, completion time, distance."""

    participants: list[dict]
    n_gates: int

    def __post_init__(self):
        if self.n_gates < 1:
            raise ValueError("need at least one gate")
        for p in self.participants:
            if not 0 <= int(p["gate"]) < self.n_gates:
                raise ValueError(f"participant gate {p['gate']} out of range")

    @property
    def distribution(self) -> np.ndarray:
        counts = np.zeros(self.n_gates)
        for p in self.participants:
            counts[int(p["gate"])] += 1
        return counts

    @classmethod
    def from_json(cls, path: str | Path, n_gates: int) -> "ObservedData":
        with open(path, encoding="utf-8") as fh:
            return cls(participants=json.load(fh), n_gates=n_gates)


def tv_distance(p, q) -> float:
    """Total-variation distance between two count/probability vectors."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.sum() <= 0 or q.sum() <= 0:
        raise ValueError("distributions must have positive mass")
    return 0.5 * float(np.abs(p / p.sum() - q / q.sum()).sum())


def compare_user(observed: ObservedData, trial: TrialMetrics) -> dict:
    """Deviation report between observed participants and a simulated trial.

    Total-variation distance between gate distributions, plus mean absolute
    deviations of completion time and covered distance, each participant
    matched against the simulated pedestrians that chose the same gate.
    """
    if not observed.participants:
        raise ValueError("observation set is empty")
    counts = np.asarray(trial.gate_counts, dtype=float)
    if counts.size != observed.n_gates:
        raise ValueError("gate sets differ between observation and trial")
    tv = tv_distance(observed.distribution, counts)

    by_gate_time: dict[int, list[float]] = {}
    by_gate_dist: dict[int, list[float]] = {}
    for rec in trial.pedestrians:
        if rec["exited"]:
            by_gate_time.setdefault(rec["gate"], []).append(rec["completion_time_s"])
            by_gate_dist.setdefault(rec["gate"], []).append(rec["distance_m"])
    time_devs, dist_devs, unmatched = [], [], []
    for p in observed.participants:
        gate = int(p["gate"])
        if gate not in by_gate_time:
            unmatched.append(gate)
            continue
        time_devs.append(abs(float(p["completion_time_s"])
                             - float(np.mean(by_gate_time[gate]))))
        dist_devs.append(abs(float(p["distance_m"])
                             - float(np.mean(by_gate_dist[gate]))))
    return {
        "tv_distance": tv,
        "mad_completion_time_s": float(np.mean(time_devs)) if time_devs else math.nan,
        "mad_distance_m": float(np.mean(dist_devs)) if dist_devs else math.nan,
        "observed_distribution": observed.distribution.tolist(),
        "simulated_distribution": counts.tolist(),
        "unmatched_gates": unmatched,
    }


DEFAULT_GRID = ([0.1, 0.2, 0.5, 1.0, 2.0], [0.0, 0.5, 1.0, 2.0])


def fit_params(make_runner: Callable[[GateChoiceParams], TrialRunner],
               observed: ObservedData, grid=DEFAULT_GRID, scheme: str = "msa",
               smoothing_weight: float = 0.5, tol: float = 0.5,
               max_iter: int = 50) -> tuple[GateChoiceParams, dict]:
    """Grid search for the gate-choice parameters matching observed choices.

    Each grid point is calibrated to convergence and scored by the TV
    distance between its final gate distribution and the observation; ties
    go to the smaller lambda, then the smaller gamma.
    """
    lams, gammas = grid
    if not len(lams) or not len(gammas):
        raise ValueError("parameter grid is empty")
    rows = []
    best = None
    for lam in sorted(lams):
        for gamma in sorted(gammas):
            params = GateChoiceParams(lam=lam, gamma=gamma)
            state, report = calibrate(make_runner(params), observed.n_gates,
                                      scheme=scheme,
                                      smoothing_weight=smoothing_weight,
                                      tol=tol, max_iter=max_iter)
            final_dist = np.asarray(report["iterations"][-1]["distribution"])
            tv = tv_distance(observed.distribution, final_dist)
            rows.append({"lam": lam, "gamma": gamma, "tv_distance": tv,
                         "converged": state.converged,
                         "iterations": state.iteration,
                         "distribution": final_dist.tolist()})
            if best is None or tv < best[0] - 1e-15:
                best = (tv, params)
    report = {"grid": rows, "best": {"lam": best[1].lam, "gamma": best[1].gamma,
                                     "tv_distance": best[0]},
              "scheme": scheme}
    return best[1], report


def fit_params_for_scenario(scenario: Scenario, observed: ObservedData,
                            grid=DEFAULT_GRID, scheme: str = "msa",
                            smoothing_weight: float = 0.5, seed: int = 0,
                            tol: float = 0.5, max_iter: int = 50):
    """fit_params wired to the crowd simulation for a scenario file."""
    return fit_params(lambda p: scenario_runner(scenario, p, seed), observed,
                      grid=grid, scheme=scheme, smoothing_weight=smoothing_weight,
                      tol=tol, max_iter=max_iter)
