"""Experimental protocols: one-stage and two-stage evolution, generalisation
on the unseen schedule, method comparison and the height-gain sweep.

Every random stream is derived from ``numpy.random.SeedSequence`` keyed by
(master seed, purpose, generation, slot), so a run replays exactly from its
seed regardless of the number of worker threads.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import evolution as evo
from .config import ExperimentConfig
from .controller import GainSet
from .dynamics import TetherConfig
from .schedules import WaypointSchedule
from .stats import MannWhitneyResult, mann_whitney_u
from .supervisor import Environment, Evaluation, evaluate, run_trial, bootstrap_viable

log = logging.getLogger(__name__)

# purpose tags for seed derivation
_BOOT, _BREED, _EVAL, _RESEED, _GEN, _SWEEP, _REPEAT = range(7)
METHODS = ("ose", "tse")


def derive_seed(master: int, *key: int) -> int:
    """A 32-bit seed from ``master`` and an integer key path."""
    return int(np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
               .generate_state(1)[0])


def derive_seeds(master: int, count: int, *key: int) -> list[int]:
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return [int(s) for s in ss.generate_state(count)]


def _rng(master: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(master), spawn_key=key))


def resolve_workers(workers: int) -> int:
    return workers if workers > 0 else (os.cpu_count() or 1)


def _map(fn, items, workers: int):
    workers = resolve_workers(workers)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


class TrialEvaluator:
    """Scores batches of genomes with the 3-repeat protocol.

    Each (generation, slot) pair owns its trial seeds, so results do not
    depend on evaluation order or concurrency.
    """

    def __init__(self, schedule: WaypointSchedule, tether: TetherConfig, env: Environment,
                 seed: int, repeats: int = 3, workers: int = 1, tag: int = 0):
        self.schedule = schedule
        self.tether = tether
        self.env = env
        self.seed = int(seed)
        self.repeats = repeats
        self.workers = workers
        self.tag = tag
        self.trials = 0

    def seeds(self, generation: int, slot: int) -> list[int]:
        return derive_seeds(self.seed, self.repeats, _EVAL, self.tag, generation, slot)

    def __call__(self, genomes: Sequence[np.ndarray], generation: int) -> list[Evaluation]:
        def one(item):
            slot, g = item
            return evaluate(g, self.schedule, self.tether, self.seeds(generation, slot),
                            self.env, self.repeats)
        results = _map(one, list(enumerate(genomes)), self.workers)
        self.trials += sum(len(r.outcomes) for r in results)
        return results


@dataclass
class GenerationRecord:
    generation: int
    stage: int
    schedule: str
    best: float
    mean: float
    median: float
    worst: float
    successes: int
    mean_cr: float
    mean_f: float

    FIELDS = ("generation", "stage", "schedule", "best", "mean", "median", "worst",
              "successes", "mean_cr", "mean_f")

    @classmethod
    def of(cls, pop: evo.Population, schedule: str) -> "GenerationRecord":
        fit = pop.fitnesses
        return cls(pop.generation, pop.stage, schedule, float(np.max(fit)), float(np.mean(fit)),
                   float(np.median(fit)), float(np.min(fit)), pop.n_success,
                   float(np.mean([i.cr for i in pop])), float(np.mean([i.f for i in pop])))

    def row(self) -> list:
        return [getattr(self, k) for k in self.FIELDS]


@dataclass
class ExperimentResult:
    method: str
    seed: int
    converged: bool
    convergence_generation: int | None
    records: list[GenerationRecord]
    populations: list[dict]
    final: evo.Population
    best: evo.Individual
    best_schedule: str
    stage_switch: int | None = None
    trials: int = 0

    def summary(self) -> dict:
        return {"method": self.method, "seed": self.seed, "converged": self.converged,
                "convergence_generation": self.convergence_generation,
                "stage_switch": self.stage_switch, "generations": len(self.records) - 1,
                "trials": self.trials, "best": self.best.to_dict(),
                "best_schedule": self.best_schedule}


GenerationHook = Callable[[evo.Population, GenerationRecord], None]


class _Run:
    """Bookkeeping shared by the one- and two-stage protocols."""

    def __init__(self, method: str, cfg: ExperimentConfig, seed: int,
                 on_generation: GenerationHook | None):
        self.method = method
        self.cfg = cfg
        self.seed = int(seed)
        self.env = cfg.environment()
        self.hook = on_generation
        self.records: list[GenerationRecord] = []
        self.snapshots: list[dict] = []
        self.trials = 0

    def evaluator(self, role: str, tether: TetherConfig, tag: int) -> TrialEvaluator:
        return TrialEvaluator(self.cfg.schedule(role), tether, self.env, self.seed,
                              self.cfg.trial.repeats, self.cfg.workers, tag)

    def bootstrap(self) -> evo.Population:
        base = derive_seed(self.seed, _BOOT, 1)
        tether = self.cfg.tether.ose

        def viable(g, attempt):
            return bootstrap_viable(g, base + attempt, tether, self.env)

        return evo.bootstrap(_rng(self.seed, _BOOT, 0), viable, self.cfg.population_size,
                             self.cfg.bootstrap_budget)

    def record(self, pop: evo.Population, schedule: str):
        rec = GenerationRecord.of(pop, schedule)
        self.records.append(rec)
        self.snapshots.append(pop.to_dict())
        log.info("%s seed=%d gen=%d stage=%d best=%.1f mean=%.1f successes=%d",
                 self.method, self.seed, rec.generation, rec.stage, rec.best, rec.mean,
                 rec.successes)
        if self.hook:
            self.hook(pop, rec)

    def step(self, pop, evaluator, stop_on_success=False):
        nxt = evo.generation_step(pop, evaluator, _rng(self.seed, _BREED, pop.generation),
                                  stop_on_success=stop_on_success)
        nxt.stage = pop.stage
        return nxt

    def result(self, pop, converged, schedule, switch=None, trials=0) -> ExperimentResult:
        return ExperimentResult(self.method, self.seed, converged,
                                pop.generation if converged else None, self.records,
                                self.snapshots, pop, pop.best().copy(), schedule, switch, trials)


def run_ose(cfg: ExperimentConfig, seed: int,
            on_generation: GenerationHook | None = None) -> ExperimentResult:
    """Evolve on the short tether and OSE schedule until every member succeeds."""
    run = _Run("ose", cfg, seed, on_generation)
    evaluator = run.evaluator("ose", cfg.tether.ose, 1)
    pop = evo.evaluate_population(run.bootstrap(), evaluator)
    name = evaluator.schedule.name
    run.record(pop, name)
    while not evo.converged(pop) and pop.generation < cfg.generation_cap:
        pop = run.step(pop, evaluator)
        run.record(pop, name)
    return run.result(pop, evo.converged(pop), name, trials=evaluator.trials)


def run_tse(cfg: ExperimentConfig, seed: int,
            on_generation: GenerationHook | None = None) -> ExperimentResult:
    """Short-tether OSE flights until the first success, then reseed around it
    and continue on the long tether with the TSE schedule."""
    run = _Run("tse", cfg, seed, on_generation)
    stage1 = run.evaluator("ose", cfg.tether.ose, 1)
    pop = evo.evaluate_population(run.bootstrap(), stage1)
    run.record(pop, stage1.schedule.name)
    while pop.n_success == 0 and pop.generation < cfg.generation_cap:
        pop = run.step(pop, stage1, stop_on_success=True)
        run.record(pop, stage1.schedule.name)
    if pop.n_success == 0:
        return run.result(pop, False, stage1.schedule.name, trials=stage1.trials)

    source = next(ind for ind in pop if ind.success)
    switch = pop.generation + 1
    stage2 = run.evaluator("tse", cfg.tether.tse, 2)
    pop = evo.reseed(source.gains, _rng(run.seed, _RESEED), cfg.population_size)
    pop.generation, pop.stage = switch, 2
    evo.evaluate_population(pop, stage2)
    name = stage2.schedule.name
    run.record(pop, name)
    while not evo.converged(pop) and pop.generation < cfg.generation_cap:
        pop = run.step(pop, stage2)
        run.record(pop, name)
    return run.result(pop, evo.converged(pop), name, switch, stage1.trials + stage2.trials)


RUNNERS = {"ose": run_ose, "tse": run_tse}


def repeat_seed(master: int, method: str, index: int) -> int:
    return derive_seed(master, _REPEAT, METHODS.index(method), index)


@dataclass
class GeneralisationResult:
    means: list[float]
    fitness: list[list[float]]
    reasons: list[list[str]]
    seeds: list[list[int]]
    schedule: str

    @property
    def mean(self) -> float:
        return float(np.mean(self.means)) if self.means else float("nan")


def evaluate_generalisation(controllers, seed: int, cfg: ExperimentConfig | None = None,
                            repeats: int | None = None) -> GeneralisationResult:
    """Fly each controller ``repeats`` times on the unseen schedule, long tether.

    Terminated trials keep the fitness accumulated up to termination.
    """
    cfg = cfg or ExperimentConfig()
    repeats = repeats or cfg.generalisation_repeats
    sched = cfg.schedule("unseen")
    env = cfg.environment()
    seeds = derive_seeds(seed, repeats, _GEN)

    def one(g):
        gains = np.asarray(getattr(g, "gains", getattr(g, "values", g)), dtype=np.float64)
        return [run_trial(gains, sched, cfg.tether.tse, s, env) for s in seeds]

    outs = _map(one, list(controllers), cfg.workers)
    fitness = [[o.fitness for o in row] for row in outs]
    return GeneralisationResult([float(np.mean(f)) for f in fitness], fitness,
                                [[o.reason for o in row] for row in outs],
                                [list(seeds) for _ in outs], sched.name)


@dataclass
class Comparison:
    results: dict[str, list[ExperimentResult]]
    test: MannWhitneyResult
    generalisation: dict[str, GeneralisationResult] = field(default_factory=dict)

    def convergence(self, method: str) -> list[float]:
        """Convergence generations; non-converged runs count as the cap + 1."""
        out = []
        for r in self.results[method]:
            g = r.convergence_generation
            out.append(float(g) if g is not None else float(len(r.records)))
        return out

    def to_dict(self) -> dict:
        d = {"convergence": {m: self.convergence(m) for m in self.results},
             "converged": {m: [r.converged for r in rs] for m, rs in self.results.items()},
             "mann_whitney": self.test.to_dict()}
        if self.generalisation:
            d["generalisation"] = {m: {"means": g.means, "mean": g.mean}
                                   for m, g in self.generalisation.items()}
        return d


def compare(cfg: ExperimentConfig, repeats: int | None = None, generalise: bool = True,
            on_result: Callable[[ExperimentResult], None] | None = None) -> Comparison:
    """Run both methods ``repeats`` times and test TSE convergence < OSE."""
    repeats = repeats or cfg.repeats
    results: dict[str, list[ExperimentResult]] = {m: [] for m in METHODS}
    for method in METHODS:
        for i in range(repeats):
            res = RUNNERS[method](cfg, repeat_seed(cfg.seed, method, i))
            results[method].append(res)
            if on_result:
                on_result(res)
    cmp = Comparison(results, mann_whitney_u([0.0], [1.0]))
    cmp.test = mann_whitney_u(cmp.convergence("tse"), cmp.convergence("ose"), "less")
    if generalise:
        for method in METHODS:
            best = [r.best.gains for r in results[method]]
            cmp.generalisation[method] = evaluate_generalisation(best, cfg.seed, cfg)
    return cmp


# Height-gain grid in the printed convention (negated, PWM per mm).
SWEEP_AXES = {
    "P": np.round(np.arange(1, 11) * -0.1, 10),
    "I": np.round(np.arange(1, 11) * -0.15, 10),
    "D": np.round(np.arange(1, 11) * -0.05, 10),
}
SWEEP_PAIRS = ("ID", "PI", "PD")


@dataclass
class SweepGrid:
    pair: str
    rows: np.ndarray
    cols: np.ndarray
    mean: np.ndarray
    no_takeoff: np.ndarray
    completed: np.ndarray

    def argmax(self) -> tuple[int, int]:
        return tuple(int(v) for v in np.unravel_index(np.argmax(self.mean), self.mean.shape))


@dataclass
class SweepResult:
    base: np.ndarray
    base_fitness: float
    grids: dict[str, SweepGrid]
    repeats: int
    schedule: str

    @property
    def best_cell(self) -> float:
        return max(float(g.mean.max()) for g in self.grids.values())


def _sweep_gains(base: GainSet, pair: str, a: float, b: float) -> np.ndarray:
    kw = {pair[0].lower(): a, pair[1].lower(): b}
    return base.with_printed_height_gains(**kw).values


def gain_sweep(base, seed: int, cfg: ExperimentConfig | None = None,
               repeats: int | None = None, pairs: Sequence[str] = SWEEP_PAIRS) -> SweepResult:
    """Mean fitness over a 10x10 grid for each pair of height gains.

    The third height gain stays at its base value. Trials fly the unseen
    schedule on the long tether and every cell shares the same trial seeds.
    ``base_fitness`` is the base controller's generalisation score, so cells
    are judged against the number the controller is reported with.
    """
    cfg = cfg or ExperimentConfig()
    repeats = repeats or cfg.sweep_repeats
    base = base if isinstance(base, GainSet) else GainSet(np.asarray(getattr(base, "gains", base)))
    sched = cfg.schedule("unseen")
    env = cfg.environment()
    tether = cfg.tether.tse
    seeds = derive_seeds(seed, repeats, _SWEEP)

    def fly(gains):
        return [run_trial(gains, sched, tether, s, env) for s in seeds]

    base_fit = evaluate_generalisation([base.values], seed, cfg).means[0]
    grids = {}
    for pair in pairs:
        rows, cols = SWEEP_AXES[pair[0]], SWEEP_AXES[pair[1]]
        cells = [(i, j) for i in range(len(rows)) for j in range(len(cols))]
        outs = _map(lambda c: fly(_sweep_gains(base, pair, rows[c[0]], cols[c[1]])),
                    cells, cfg.workers)
        shape = (len(rows), len(cols))
        mean, nto, done = np.zeros(shape), np.zeros(shape, int), np.zeros(shape, int)
        for (i, j), trial in zip(cells, outs):
            mean[i, j] = np.mean([o.fitness for o in trial])
            nto[i, j] = sum(o.reason == "no-takeoff" for o in trial)
            done[i, j] = sum(o.completed for o in trial)
        grids[pair] = SweepGrid(pair, rows, cols, mean, nto, done)
        log.info("sweep %s done; best cell %.1f", pair, mean.max())
    return SweepResult(base.values.copy(), base_fit, grids, repeats, sched.name)
