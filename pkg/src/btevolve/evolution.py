"""Genetic programming over behaviour trees: grown initial populations,
rank-with-parsimony tournaments, subtree crossover with depth truncation,
micro/macro mutation, elitism, evaluation-init replacement, and the
generation loop with its archive and checkpoint outputs.

All randomness flows through one generator per generation, seeded from
(seed, generation), and episodes consume none of it, so runs reproduce
bit-for-bit regardless of evaluation parallelism.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bt, evaluation, sim, vision


@dataclass
class EAParams:
    max_generations: int = 150
    population_size: int = 100
    tournament_fraction: float = 0.06
    elitism_rate: float = 0.04
    crossover_rate: float = 0.8
    mutation_rate: float = 0.2
    hcc_rate: float = 0.2
    max_depth: int = 6
    max_children: int = 6
    runs_per_individual: int = 6
    seed: int = 0

    def validate(self) -> None:
        for name in ("tournament_fraction", "elitism_rate", "crossover_rate",
                     "mutation_rate", "hcc_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        if self.max_generations < 1:
            raise ValueError("max_generations must be at least 1")
        if self.max_depth < 1 or self.max_children < 1:
            raise ValueError("max_depth and max_children must be at least 1")
        if self.runs_per_individual < 1:
            raise ValueError("runs_per_individual must be at least 1")


@dataclass
class InitSet:
    """The spawn poses every individual is scored on, with per-pose ages."""

    inits: list[sim.SpawnPose]
    ages: list[int]


_CONDITION_VARIABLES = tuple(bt.INPUT_RANGES)


def _random_condition(rng: np.random.Generator) -> bt.Node:
    variable = _CONDITION_VARIABLES[int(rng.integers(len(_CONDITION_VARIABLES)))]
    comparison = bt.GREATER if rng.integers(2) == 0 else bt.LESS
    lo, hi = bt.INPUT_RANGES[variable]
    return bt.condition(variable, comparison, float(rng.uniform(lo, hi)))


def _random_action(rng: np.random.Generator) -> bt.Node:
    return bt.action(float(rng.uniform(-1.0, 1.0)))


def _grow_child(params: EAParams, rng: np.random.Generator, depth: int) -> bt.Node:
    # kinds: 0 composite, 1 action, 2 condition; leaves only at the depth cap
    if depth >= params.max_depth:
        kind = 1 + int(rng.integers(2))
    else:
        kind = int(rng.integers(3))
    if kind == 0:
        node_kind = (bt.NodeKind.SELECTOR if rng.integers(2) == 0
                     else bt.NodeKind.SEQUENCE)
        return bt.Node(node_kind, [_grow_child(params, rng, depth + 1)
                                   for _ in range(params.max_children)])
    if kind == 1:
        return _random_action(rng)
    return _random_condition(rng)


def grow(params: EAParams, rng: np.random.Generator) -> bt.Node:
    """Fresh full-width tree: a Selector root with max_children subtrees,
    each drawn uniformly over composite/action/condition, composites filled
    recursively the same way down to max_depth."""
    return bt.Node(bt.NodeKind.SELECTOR,
                   [_grow_child(params, rng, 1)
                    for _ in range(params.max_children)])


def tournament_select(population, params: EAParams,
                      rng: np.random.Generator) -> int:
    """Index of the winner: best (fitness desc, size asc) of a random
    subgroup, except a strictly smaller runner-up takes the spot."""
    n = max(2, round(params.tournament_fraction * len(population)))
    n = min(n, len(population))
    picks = rng.choice(len(population), size=n, replace=False)
    ranked = sorted((int(i) for i in picks),
                    key=lambda i: (-population[i].fitness, population[i].size))
    top, second = ranked[0], ranked[1]
    if population[second].size < population[top].size:
        return second
    return top


def _truncate_depth(node: bt.Node, max_depth: int, depth: int = 0):
    """Drop nodes deeper than max_depth; composites emptied by that are
    dropped too, cascading upward. Returns None for a fully deleted node."""
    if node.kind not in bt.COMPOSITE_KINDS or not node.children:
        return node
    if depth == max_depth:
        return None
    kept = []
    for child in node.children:
        trimmed = _truncate_depth(child, max_depth, depth + 1)
        if trimmed is not None:
            kept.append(trimmed)
    if not kept:
        return None
    node.children = kept
    return node


def crossover(parent_a: bt.Node, parent_b: bt.Node, rng: np.random.Generator,
              params: EAParams) -> tuple[bt.Node, bt.Node]:
    """Swap uniformly chosen subtrees (any node, root included) between
    copies of the parents, then truncate each child to max_depth. Parents
    are never modified."""
    index_a = int(rng.integers(bt.size(parent_a)))
    index_b = int(rng.integers(bt.size(parent_b)))
    sub_a = bt.copy_tree(bt.subtree_at(parent_a, index_a))
    sub_b = bt.copy_tree(bt.subtree_at(parent_b, index_b))
    child_a = bt.replace_subtree(parent_a, index_a, sub_b)
    child_b = bt.replace_subtree(parent_b, index_b, sub_a)
    out = []
    for child in (child_a, child_b):
        trimmed = _truncate_depth(child, params.max_depth)
        if trimmed is None:
            trimmed = bt.Node(child.kind, [])
        out.append(trimmed)
    return out[0], out[1]


def mutate(tree: bt.Node, params: EAParams, rng: np.random.Generator,
           stats: dict | None = None) -> bt.Node:
    """Per-node mutation pass over a copy of the tree.

    Each visited node mutates with probability mutation_rate. A mutating
    node macro-mutates with probability hcc_rate: its whole subtree is
    replaced by a fresh grow at that depth and is not descended into.
    Otherwise it micro-mutates: leaves redraw their parameters in place,
    composites are left as they are; children are visited either way.
    stats, when given, accumulates "visited", "micro" and "macro" counts.
    """

    def visit(node: bt.Node, depth: int) -> bt.Node:
        if stats is not None:
            stats["visited"] = stats.get("visited", 0) + 1
        micro = False
        if rng.random() < params.mutation_rate:
            if rng.random() < params.hcc_rate:
                if stats is not None:
                    stats["macro"] = stats.get("macro", 0) + 1
                return _grow_child(params, rng, depth)
            if stats is not None:
                stats["micro"] = stats.get("micro", 0) + 1
            micro = True
        if node.kind in bt.COMPOSITE_KINDS:
            return bt.Node(node.kind,
                           [visit(child, depth + 1) for child in node.children])
        if micro:
            if node.kind is bt.NodeKind.ACTION:
                return _random_action(rng)
            return _random_condition(rng)
        return bt.copy_tree(node)

    return visit(tree, 0)


def next_generation(population, init_set: InitSet, params: EAParams,
                    evaluator, rng: np.random.Generator):
    """One generational turnover.

    Elites (ceil(elitism_rate * M) by fitness desc, size asc) pass through
    untouched by mutation; crossover fills round(crossover_rate * rest)
    slots from tournament-selected parents, an odd last slot and the
    remainder are tournament-selected copies; non-elites then mutate. Each
    init every elite flew successfully is replaced by a fresh spawn (age 0),
    the others age by one. The new population is evaluated on the new inits.

    evaluator is called as evaluator(trees, inits) and must return one
    EvaluatedIndividual per tree in order; it also provides the room and
    sim_params attributes used to draw replacement spawns.
    """
    m = len(population)
    elite_count = math.ceil(params.elitism_rate * m)
    ranking = sorted(range(m), key=lambda i: (-population[i].fitness,
                                              population[i].size, i))
    elite_indices = ranking[:elite_count]
    new_trees = [bt.copy_tree(population[i].tree) for i in elite_indices]

    slots = m - elite_count
    crossover_slots = round(params.crossover_rate * slots)
    offspring: list[bt.Node] = []
    for _ in range(crossover_slots // 2):
        a = population[tournament_select(population, params, rng)].tree
        b = population[tournament_select(population, params, rng)].tree
        child_a, child_b = crossover(a, b, rng, params)
        offspring.append(child_a)
        offspring.append(child_b)
    while len(offspring) < slots:
        winner = population[tournament_select(population, params, rng)].tree
        offspring.append(bt.copy_tree(winner))
    new_trees.extend(mutate(tree, params, rng) for tree in offspring)

    new_inits: list[sim.SpawnPose] = []
    new_ages: list[int] = []
    replaced = 0
    for j, (init, age) in enumerate(zip(init_set.inits, init_set.ages)):
        if all(population[i].per_run[j].outcome is sim.Outcome.SUCCESS
               for i in elite_indices):
            new_inits.append(None)  # placeholder, drawn below in init order
            new_ages.append(0)
            replaced += 1
        else:
            new_inits.append(init)
            new_ages.append(age + 1)
    # draw replacements after all operator randomness, left to right
    room, sim_params = evaluator.room, evaluator.sim_params
    for j, init in enumerate(new_inits):
        if init is None:
            new_inits[j] = sim.spawn(rng, room, sim_params)
    new_init_set = InitSet(new_inits, new_ages)

    stats = {
        "elites": elite_count,
        "crossover_offspring": 2 * (crossover_slots // 2),
        "copy_offspring": slots - 2 * (crossover_slots // 2),
        "replaced_inits": replaced,
    }
    return evaluator(new_trees, new_inits), new_init_set, stats


_WORKER_SCENE = None


def _init_worker(room, sim_params, vision_params):
    global _WORKER_SCENE
    _WORKER_SCENE = (room, sim_params, vision_params)


def _worker_episode(job):
    key, x, y, heading = job
    room, sim_params, vision_params = _WORKER_SCENE
    return _score_episode(key, sim.SpawnPose(x, y, heading), room, sim_params,
                          vision_params)


def _score_episode(key, init, room, sim_params, vision_params):
    tree = bt.parse(key)
    result = sim.run_episode(tree, init, room, sim_params, vision_params,
                             record_path=False)
    return evaluation.fitness(result), result.outcome.value


class EpisodeEvaluator:
    """Population evaluator with per-(tree, init) memoization and optional
    process-based parallelism.

    Trees are keyed by their compact serialization, and both the in-process
    and the worker path replay episodes from that exact text, so cached,
    serial and parallel evaluations are interchangeable. Results are
    assembled in slot order regardless of worker scheduling.
    """

    def __init__(self, room: sim.RoomConfig, sim_params: sim.SimParams,
                 vision_params: vision.VisionParams | None = None,
                 threads: int = 1):
        if threads < 1:
            raise ValueError("threads must be at least 1")
        self.room = room
        self.sim_params = sim_params
        self.vision_params = vision_params
        self.threads = threads
        self._cache: dict = {}
        self._pool = None

    def __call__(self, trees, inits):
        keys = [bt.serialize(tree, compact=True) for tree in trees]
        jobs = []
        seen = set()
        for key in keys:
            for init in inits:
                entry = (key, init)
                if entry not in self._cache and entry not in seen:
                    seen.add(entry)
                    jobs.append(entry)
        for entry, scored in zip(jobs, self._run_jobs(jobs)):
            self._cache[entry] = evaluation.PerRunResult(
                scored[0], sim.Outcome(scored[1]))
        out = []
        for tree, key in zip(trees, keys):
            per_run = [self._cache[(key, init)] for init in inits]
            mean = sum(p.fitness for p in per_run) / len(per_run)
            out.append(evaluation.EvaluatedIndividual(tree, mean, per_run,
                                                      bt.size(tree)))
        return out

    def _run_jobs(self, jobs):
        if not jobs:
            return []
        if self.threads == 1:
            return [_score_episode(key, init, self.room, self.sim_params,
                                   self.vision_params)
                    for key, init in jobs]
        if self._pool is None:
            self._pool = ProcessPoolExecutor(
                max_workers=self.threads, initializer=_init_worker,
                initargs=(self.room, self.sim_params, self.vision_params))
        flat = [(key, init.x, init.y, init.heading) for key, init in jobs]
        chunk = max(1, len(flat) // (self.threads * 4))
        return list(self._pool.map(_worker_episode, flat, chunksize=chunk))

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


@dataclass
class GenerationRecord:
    gen: int
    best_f: float
    mean_f: float
    best_size: int
    mean_size: float


@dataclass
class EvolutionResult:
    archive: list[GenerationRecord]
    population: list[evaluation.EvaluatedIndividual]
    best: evaluation.EvaluatedIndividual


ARCHIVE_COLUMNS = ("gen", "best_f", "mean_f", "best_size", "mean_size")


def _summarize(gen: int, population) -> GenerationRecord:
    best = min(population, key=lambda e: (-e.fitness, e.size))
    return GenerationRecord(
        gen=gen,
        best_f=best.fitness,
        mean_f=sum(e.fitness for e in population) / len(population),
        best_size=best.size,
        mean_size=sum(e.size for e in population) / len(population),
    )


class _RunWriter:
    """Streams archive.csv and one checkpoint file per generation."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self._archive = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            (self.out_dir / "checkpoints").mkdir(exist_ok=True)
            self._archive = open(self.out_dir / "archive.csv", "w",
                                 encoding="utf-8", newline="")
            csv.writer(self._archive).writerow(ARCHIVE_COLUMNS)

    def record(self, record: GenerationRecord) -> None:
        if self._archive is None:
            return
        csv.writer(self._archive).writerow([
            record.gen, repr(record.best_f), repr(record.mean_f),
            record.best_size, repr(record.mean_size)])
        self._archive.flush()

    def checkpoint(self, gen: int, population, init_set: InitSet) -> None:
        if self.out_dir is None:
            return
        path = self.out_dir / "checkpoints" / f"gen_{gen:04d}.jsonl"
        with open(path, "w", encoding="utf-8") as handle:
            meta = {"type": "meta", "generation": gen,
                    "inits": [[p.x, p.y, p.heading] for p in init_set.inits],
                    "init_ages": list(init_set.ages)}
            handle.write(json.dumps(meta) + "\n")
            for slot, ev in enumerate(population):
                row = {"type": "individual", "generation": gen, "slot": slot,
                       "mean_fitness": ev.fitness,
                       "per_run_fitness": [p.fitness for p in ev.per_run],
                       "size": ev.size,
                       "tree": bt.serialize(ev.tree, compact=True)}
                handle.write(json.dumps(row) + "\n")

    def close(self) -> None:
        if self._archive is not None:
            self._archive.close()
            self._archive = None


def _better(incumbent, candidate):
    if incumbent is None:
        return candidate
    if (candidate.fitness, -candidate.size) > (incumbent.fitness,
                                               -incumbent.size):
        return candidate
    return incumbent


def run_evolution(params: EAParams, room: sim.RoomConfig,
                  sim_params: sim.SimParams,
                  vision_params: vision.VisionParams | None = None,
                  out_dir=None, threads: int = 1,
                  progress=None) -> EvolutionResult:
    """Full evolutionary run.

    Generation g draws all its randomness from default_rng((seed, g));
    generation 0 grows the population and then the initial init set. The
    archive records generations 1..max_generations (the grown population is
    checkpointed but not archived). Returns the best-ever individual over
    every generation including the initial one, ties to the smaller tree.
    """
    params.validate()
    room.validate()
    sim_params.validate()
    evaluator = EpisodeEvaluator(room, sim_params, vision_params, threads)
    writer = _RunWriter(out_dir)
    try:
        rng = np.random.default_rng((params.seed, 0))
        trees = [grow(params, rng) for _ in range(params.population_size)]
        init_set = InitSet(
            [sim.spawn(rng, room, sim_params)
             for _ in range(params.runs_per_individual)],
            [0] * params.runs_per_individual)
        population = evaluator(trees, init_set.inits)
        writer.checkpoint(0, population, init_set)
        best = None
        for ev in population:
            best = _better(best, ev)
        archive = []
        for gen in range(1, params.max_generations + 1):
            rng = np.random.default_rng((params.seed, gen))
            population, init_set, _stats = next_generation(
                population, init_set, params, evaluator, rng)
            record = _summarize(gen, population)
            archive.append(record)
            writer.record(record)
            writer.checkpoint(gen, population, init_set)
            for ev in population:
                best = _better(best, ev)
            if progress is not None:
                progress(record)
        return EvolutionResult(archive, population, best)
    finally:
        writer.close()
        evaluator.close()
