"""Self-adaptive differential evolution over 18-gain genomes.

Each individual carries its own crossover rate CR and differential weight F.
A child copies its parent's rates, perturbs them multiplicatively with a
lognormal factor, and then uses the perturbed rates to build its genome
(rand/1/bin). Individuals that fail to improve for ``STAGNATION_LIMIT``
generations have their rates re-drawn.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .controller import GAIN_BOUND, GAIN_UPPER, N_GAINS, clip_gains

POPULATION_SIZE = 20
CR_BOUNDS = (0.0, 1.0)
F_BOUNDS = (0.0, 2.0)
STAGNATION_LIMIT = 5
BOOTSTRAP_BUDGET = 5000
RESEED_FRACTION = 0.25


class BootstrapExhausted(RuntimeError):
    """Not enough viable gain sets were found within the attempt budget."""


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator) or hasattr(seed, "standard_normal"):
        return seed
    return np.random.default_rng(seed)


@dataclass
class Individual:
    gains: np.ndarray
    cr: float
    f: float
    fitness: float | None = None
    success: bool = False
    stagnation: int = 0

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=np.float64).reshape(-1)
        if self.gains.shape != (N_GAINS,):
            raise ValueError(f"genome must have {N_GAINS} gains")

    @property
    def evaluated(self) -> bool:
        return self.fitness is not None

    def copy(self) -> "Individual":
        return Individual(self.gains.copy(), self.cr, self.f, self.fitness, self.success,
                          self.stagnation)

    def to_dict(self) -> dict:
        return {"gains": [float(g) for g in self.gains], "cr": float(self.cr), "f": float(self.f),
                "fitness": None if self.fitness is None else float(self.fitness),
                "success": bool(self.success), "stagnation": int(self.stagnation)}

    @classmethod
    def from_dict(cls, d: dict) -> "Individual":
        return cls(np.array(d["gains"], dtype=np.float64), float(d["cr"]), float(d["f"]),
                   None if d.get("fitness") is None else float(d["fitness"]),
                   bool(d.get("success", False)), int(d.get("stagnation", 0)))


@dataclass
class Population:
    individuals: list[Individual]
    generation: int = 0
    stage: int = 1

    def __len__(self) -> int:
        return len(self.individuals)

    def __iter__(self):
        return iter(self.individuals)

    def __getitem__(self, i) -> Individual:
        return self.individuals[i]

    @property
    def fitnesses(self) -> np.ndarray:
        return np.array([np.nan if ind.fitness is None else ind.fitness for ind in self.individuals])

    @property
    def n_success(self) -> int:
        return sum(ind.success for ind in self.individuals)

    def best(self) -> Individual:
        scored = [ind for ind in self.individuals if ind.evaluated]
        if not scored:
            raise ValueError("population has not been evaluated")
        return max(scored, key=lambda ind: (ind.success, ind.fitness))

    def copy(self) -> "Population":
        return Population([ind.copy() for ind in self.individuals], self.generation, self.stage)

    def to_dict(self) -> dict:
        return {"generation": self.generation, "stage": self.stage,
                "individuals": [ind.to_dict() for ind in self.individuals]}

    @classmethod
    def from_dict(cls, d: dict) -> "Population":
        return cls([Individual.from_dict(x) for x in d["individuals"]],
                   int(d.get("generation", 0)), int(d.get("stage", 1)))


def random_rates(rng) -> tuple[float, float]:
    rng = _rng(rng)
    return float(rng.uniform(*CR_BOUNDS)), float(rng.uniform(*F_BOUNDS))


def sample_gains(rng) -> np.ndarray:
    """Uniform draw in (0, upper] for every gain."""
    rng = _rng(rng)
    return (1.0 - rng.random(N_GAINS)) * GAIN_UPPER


def bootstrap(seed, viable: Callable[[np.ndarray, int], bool] | None = None,
              size: int = POPULATION_SIZE, budget: int = BOOTSTRAP_BUDGET) -> Population:
    """Rejection-sample ``size`` viable genomes.

    ``viable(gains, attempt)`` decides acceptance; by default a short hover
    check in the simulator, seeded from the attempt number.
    """
    rng = _rng(seed)
    if viable is None:
        from .supervisor import bootstrap_viable
        base = int(rng.integers(2**31))

        def viable(g, k):
            return bootstrap_viable(g, base + k)

    members: list[Individual] = []
    for attempt in range(budget):
        gains = sample_gains(rng)
        if viable(gains, attempt):
            cr, f = random_rates(rng)
            members.append(Individual(gains, cr, f))
            if len(members) == size:
                return Population(members)
    raise BootstrapExhausted(f"only {len(members)} of {size} viable gain sets in {budget} attempts")


def donor(r1, r2, r3, f: float) -> np.ndarray:
    """v = r3 + F (r1 - r2)."""
    r1, r2, r3 = (np.asarray(getattr(r, "values", r), dtype=np.float64) for r in (r1, r2, r3))
    return r3 + f * (r1 - r2)


def crossover(parent, donor_vec, cr: float, seed) -> np.ndarray:
    """Binomial crossover; index R always comes from the donor."""
    if not CR_BOUNDS[0] <= cr <= CR_BOUNDS[1]:
        raise ValueError("CR must lie in [0, 1]")
    rng = _rng(seed)
    parent = np.asarray(getattr(parent, "values", parent), dtype=np.float64)
    donor_vec = np.asarray(getattr(donor_vec, "values", donor_vec), dtype=np.float64)
    forced = rng.integers(len(parent))
    take = rng.random(len(parent)) < cr
    take[forced] = True
    return np.where(take, donor_vec, parent)


def mutate_rates(cr: float, f: float, seed, tau: float = 1.0) -> tuple[float, float]:
    """Lognormal self-adaptation, clamped to the rate bounds."""
    rng = _rng(seed)
    z = rng.standard_normal(2)
    new_cr = min(max(cr * math.exp(tau * z[0]), CR_BOUNDS[0]), CR_BOUNDS[1])
    new_f = min(max(f * math.exp(tau * z[1]), F_BOUNDS[0]), F_BOUNDS[1])
    return new_cr, new_f


def pick_others(i: int, n: int, rng, k: int = 3) -> np.ndarray:
    if n - 1 < k:
        raise ValueError(f"need at least {k + 1} individuals")
    rng = _rng(rng)
    picks = rng.choice(n - 1, size=k, replace=False)
    return picks + (picks >= i)


# An evaluator scores a batch of genomes: (genomes, generation) -> [(fitness, success), ...]
Evaluator = Callable[[Sequence[np.ndarray], int], Sequence]


def _score(result) -> tuple[float, bool]:
    if hasattr(result, "fitness"):
        return float(result.fitness), bool(result.success)
    fit, ok = result
    return float(fit), bool(ok)


def evaluate_population(pop: Population, evaluator: Evaluator) -> Population:
    """Score every member in place (used for the bootstrap and reseeded generations)."""
    results = evaluator([ind.gains for ind in pop], pop.generation)
    for ind, res in zip(pop, results):
        ind.fitness, ind.success = _score(res)
    return pop


def make_children(pop: Population, seed) -> list[Individual]:
    """One trial child per parent, with self-adapted rates."""
    rng = _rng(seed)
    n = len(pop)
    children = []
    for i, parent in enumerate(pop):
        cr, f = mutate_rates(parent.cr, parent.f, rng)
        a, b, c = pick_others(i, n, rng)
        v = donor(pop[a].gains, pop[b].gains, pop[c].gains, f)
        genome = clip_gains(crossover(parent.gains, v, cr, rng))
        children.append(Individual(genome, cr, f))
    return children


def select(pop: Population, children: Sequence[Individual], seed, limit: int | None = None) -> Population:
    """Strict-improvement replacement; ``limit`` restricts it to the first slots."""
    rng = _rng(seed)
    nxt = pop.copy()
    nxt.generation = pop.generation + 1
    for i, child in enumerate(children):
        if limit is not None and i >= limit:
            break
        parent = nxt.individuals[i]
        if child.fitness > parent.fitness:
            child.stagnation = 0
            nxt.individuals[i] = child
        else:
            parent.stagnation += 1
            if parent.stagnation >= STAGNATION_LIMIT:
                parent.cr, parent.f = random_rates(rng)
                parent.stagnation = 0
    return nxt


def generation_step(pop: Population, evaluator: Evaluator, seed,
                    stop_on_success: bool = False) -> Population:
    """Breed, evaluate and select one generation.

    With ``stop_on_success`` only slots up to and including the first
    successful child take part in selection, so the population gains at
    most one new success.
    """
    if not all(ind.evaluated for ind in pop):
        raise ValueError("every individual must be evaluated before breeding")
    rng = _rng(seed)
    children = make_children(pop, rng)
    results = evaluator([c.gains for c in children], pop.generation + 1)
    for child, res in zip(children, results):
        child.fitness, child.success = _score(res)
    limit = None
    if stop_on_success:
        hits = [i for i, c in enumerate(children) if c.success]
        if hits:
            limit = hits[0] + 1
    return select(pop, children, rng, limit)


def converged(pop: Population) -> bool:
    return len(pop) > 0 and all(ind.evaluated and ind.success for ind in pop)


def reseed(source, seed, size: int = POPULATION_SIZE,
           fraction: float = RESEED_FRACTION) -> Population:
    """Copies of ``source`` with each gain moved by up to +/- ``fraction`` of its
    initialisation range; fresh rates."""
    rng = _rng(seed)
    source = np.asarray(getattr(source, "gains", source), dtype=np.float64)
    members = []
    for _ in range(size):
        noise = rng.uniform(-fraction, fraction, N_GAINS) * GAIN_UPPER
        gains = np.clip(source + noise, -GAIN_BOUND, GAIN_BOUND)
        cr, f = random_rates(rng)
        members.append(Individual(gains, cr, f))
    return Population(members)
