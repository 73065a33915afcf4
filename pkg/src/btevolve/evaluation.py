"""Fitness scoring, aggregation over the per-generation initializations,
and the many-run validation protocol with its secondary statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bt, sim, vision


def fitness(result: sim.EpisodeResult) -> float:
    """1 for a fly-through, else 1 / (1 + 3 |e|) with |e| the planar distance
    in metres from the window centre to the final position."""
    if result.outcome is sim.Outcome.SUCCESS:
        return 1.0
    return 1.0 / (1.0 + 3.0 * math.hypot(*result.e))


@dataclass
class PerRunResult:
    fitness: float
    outcome: sim.Outcome


@dataclass
class EvaluatedIndividual:
    tree: bt.Node
    fitness: float
    per_run: list[PerRunResult]
    size: int


def evaluate_individual(tree: bt.Node, inits, room: sim.RoomConfig,
                        sim_params: sim.SimParams,
                        vision_params: vision.VisionParams | None = None
                        ) -> EvaluatedIndividual:
    """One episode per initialization; fitness is the arithmetic mean of the
    per-episode scores."""
    per_run = []
    for init in inits:
        result = sim.run_episode(tree, init, room, sim_params, vision_params,
                                 record_path=False)
        per_run.append(PerRunResult(fitness(result), result.outcome))
    mean = sum(p.fitness for p in per_run) / len(per_run)
    return EvaluatedIndividual(tree, mean, per_run, bt.size(tree))


@dataclass
class ValidationRun:
    init: sim.SpawnPose
    outcome: sim.Outcome
    flight_time: float
    error_distance: float
    fitness: float
    approach_angle: float | None
    centre_offset: float | None


@dataclass
class ValidationReport:
    success_rate: float
    mean_flight_time: float
    mean_approach_angle: float | None
    mean_centre_offset: float | None
    per_run: list[ValidationRun]
    init_seed: int


def validate(tree: bt.Node, n_runs: int, seed: int, room: sim.RoomConfig,
             sim_params: sim.SimParams,
             vision_params: vision.VisionParams | None = None,
             traces_dir=None) -> ValidationReport:
    """Fly n_runs episodes from seed-derived random initializations.

    Approach angle and centre offset are averaged over successes only, since
    they exist only for fly-throughs. If traces_dir is given, a path trace
    CSV is written there for every run.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    rng = np.random.default_rng(seed)
    inits = [sim.spawn(rng, room, sim_params) for _ in range(n_runs)]
    if traces_dir is not None:
        traces_dir = Path(traces_dir)
        traces_dir.mkdir(parents=True, exist_ok=True)
    runs = []
    for i, init in enumerate(inits):
        result = sim.run_episode(tree, init, room, sim_params, vision_params,
                                 record_path=traces_dir is not None)
        if traces_dir is not None:
            sim.write_trace_csv(result, traces_dir / f"run_{i:03d}.csv")
        runs.append(ValidationRun(
            init=init,
            outcome=result.outcome,
            flight_time=result.flight_time,
            error_distance=math.hypot(*result.e),
            fitness=fitness(result),
            approach_angle=result.approach_angle,
            centre_offset=result.centre_offset,
        ))
    successes = [r for r in runs if r.outcome is sim.Outcome.SUCCESS]
    return ValidationReport(
        success_rate=len(successes) / n_runs,
        mean_flight_time=sum(r.flight_time for r in runs) / n_runs,
        mean_approach_angle=(sum(r.approach_angle for r in successes)
                             / len(successes) if successes else None),
        mean_centre_offset=(sum(r.centre_offset for r in successes)
                            / len(successes) if successes else None),
        per_run=runs,
        init_seed=seed,
    )


VALIDATION_COLUMNS = ("x", "y", "heading", "outcome", "flight_time", "abs_e",
                      "F", "approach_angle", "centre_offset")


def write_validation_csv(report: ValidationReport, path) -> None:
    """One row per run; success-only fields are empty for other outcomes."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(VALIDATION_COLUMNS)
        for run in report.per_run:
            writer.writerow([
                repr(run.init.x), repr(run.init.y), repr(run.init.heading),
                run.outcome.value, repr(run.flight_time),
                repr(run.error_distance), repr(run.fitness),
                "" if run.approach_angle is None else repr(run.approach_angle),
                "" if run.centre_offset is None else repr(run.centre_offset),
            ])
