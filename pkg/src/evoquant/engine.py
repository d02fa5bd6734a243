"""Species-partitioned multi-objective evolutionary engine.

The population is split into structurally distinct species, each owning its
genome encoding plus crossover, mutation, initialization, and decoding
callables. One generation runs as:

1. every species doubles itself by producing one offspring per member,
2. offspring are evaluated in a single batch,
3. each species' utility is the min-max normalized (negated) R2 of its own
   parent-plus-offspring fitness set,
4. utilities turn into UCB scores that trade exploitation against how
   rarely a species has been evaluated,
5. scores are converted into integer size allocations,
6. the combined parent+offspring pool is ordered globally by non-dominated
   rank with reference-point niching, and each species keeps its
   best-ranked members up to its allocation,
7. species short of their allocation are topped up with fresh mutants of
   their own surviving members.

An archive of mutually non-dominated (configuration, fitness) pairs is
maintained across the run. All randomness flows through one seeded
generator, so a run is fully reproducible and independent of how the
evaluator parallelizes its batch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .pareto import nsga3_order, r2_indicator, uniform_weight_vectors

__all__ = [
    "SpeciesDef",
    "Individual",
    "Species",
    "SpeciesStats",
    "ArchiveEntry",
    "ParetoArchive",
    "EngineConfig",
    "GenerationRecord",
    "SearchResult",
    "SearchEngine",
    "init_population",
    "produce_offspring",
    "species_utility",
    "ucb_scores",
    "allocate_sizes",
    "run_search",
]

logger = logging.getLogger(__name__)

BitConfig = tuple[int, ...]
Evaluator = Callable[[Sequence["Individual"]], Sequence[np.ndarray]]


@dataclass(frozen=True)
class SpeciesDef:
    """Operator bundle a species brings to the engine.

    ``init`` draws a fresh genome, ``crossover`` maps two parent genomes to
    two children, ``mutate`` maps one genome to a perturbed copy, and
    ``decode`` turns a genome into the integer bit configuration that gets
    evaluated. Genomes are treated as immutable opaque values.
    """

    species_id: str
    init: Callable[[np.random.Generator], Any]
    crossover: Callable[[Any, Any, np.random.Generator], tuple[Any, Any]]
    mutate: Callable[[Any, np.random.Generator], Any]
    decode: Callable[[Any], BitConfig]


@dataclass(eq=False)
class Individual:
    genome: Any
    species_id: str
    bit_config: BitConfig
    birth_generation: int = 0
    fitness: np.ndarray | None = None


@dataclass
class SpeciesStats:
    """Per-species bookkeeping surfaced in telemetry."""

    utility: float = 0.0
    raw_r2: float = math.nan
    eval_count: int = 0
    ucb_score: float = 0.0
    allocation: int = 0


@dataclass
class Species:
    definition: SpeciesDef
    members: list[Individual] = field(default_factory=list)
    stats: SpeciesStats = field(default_factory=SpeciesStats)

    @property
    def id(self) -> str:
        return self.definition.species_id


@dataclass(frozen=True)
class ArchiveEntry:
    bits: BitConfig
    objectives: tuple[float, ...]
    species_id: str
    generation: int


class ParetoArchive:
    """Mutually non-dominated set of evaluated configurations.

    Insertion keeps the first discovery of any (bits, objectives) pair,
    drops candidates dominated by an existing entry, and evicts entries the
    candidate dominates. Entries with equal objectives never evict each
    other. With a capacity bound, the entries farthest from the origin are
    pruned first.
    """

    def __init__(self, capacity: int | None = None):
        self.capacity = capacity
        self.entries: list[ArchiveEntry] = []
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def objective_matrix(self) -> np.ndarray:
        if self._matrix is None:
            if not self.entries:
                self._matrix = np.empty((0, 0))
            else:
                self._matrix = np.array([e.objectives for e in self.entries], dtype=float)
        return self._matrix

    def add(self, candidates: Iterable[ArchiveEntry]) -> int:
        added = 0
        for entry in candidates:
            obj = np.asarray(entry.objectives, dtype=float)
            matrix = self.objective_matrix()
            if matrix.size:
                le = matrix <= obj
                lt = matrix < obj
                dominated_by_existing = np.any(np.all(le, axis=1) & np.any(lt, axis=1))
                if dominated_by_existing:
                    continue
                duplicate = np.all(matrix == obj, axis=1)
                if any(
                    self.entries[i].bits == entry.bits for i in np.flatnonzero(duplicate)
                ):
                    continue
                beats = np.all(matrix >= obj, axis=1) & np.any(matrix > obj, axis=1)
                if np.any(beats):
                    self.entries = [e for e, dead in zip(self.entries, beats) if not dead]
            self.entries.append(entry)
            self._matrix = None
            added += 1
        if self.capacity is not None and len(self.entries) > self.capacity:
            self._prune()
        return added

    def _prune(self) -> None:
        scored = sorted(
            self.entries,
            key=lambda e: (float(np.linalg.norm(e.objectives)), e.objectives, e.generation),
        )
        self.entries = scored[: self.capacity]
        self._matrix = None


@dataclass(frozen=True)
class EngineConfig:
    """Search hyperparameters.

    Defaults: population 50 split across species with an initial size of 10
    each, species never shrink below 5 members, the weight/reference set
    targets 25 vectors, and the UCB exploration coefficient is 0.9.
    """

    max_generations: int
    population_size: int = 50
    initial_species_size: int = 10
    min_species_size: int = 5
    reference_point_target: int = 25
    ucb_coefficient: float = 0.9
    n_objectives: int = 3
    seed: int = 0
    archive_capacity: int | None = None

    def validate(self, n_species: int) -> None:
        if self.max_generations < 0:
            raise ValueError("max_generations must be >= 0")
        if self.population_size < n_species * self.min_species_size:
            raise ValueError(
                f"population_size {self.population_size} cannot hold {n_species} species "
                f"of at least {self.min_species_size} members each"
            )
        if self.initial_species_size < 1:
            raise ValueError("initial_species_size must be positive")
        if self.min_species_size < 1:
            raise ValueError("min_species_size must be positive")


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    archive_size: int
    archive_r2: float
    total_evaluations: int
    species: dict[str, SpeciesStats]
    archive_shares: dict[str, float]


@dataclass(frozen=True)
class SearchResult:
    archive: ParetoArchive
    history: tuple[GenerationRecord, ...]
    weights: np.ndarray
    total_evaluations: int


def init_population(
    config: EngineConfig,
    species_defs: Sequence[SpeciesDef],
    rng: np.random.Generator,
) -> list[Species]:
    """Create ``initial_species_size`` fresh members for every species."""
    if not species_defs:
        raise ValueError("at least one species is required")
    config.validate(len(species_defs))
    population = []
    for definition in species_defs:
        members = [
            _spawn(definition, definition.init(rng), generation=0)
            for _ in range(config.initial_species_size)
        ]
        population.append(Species(definition=definition, members=members))
    return population


def _spawn(definition: SpeciesDef, genome: Any, generation: int) -> Individual:
    bits = tuple(int(b) for b in definition.decode(genome))
    return Individual(
        genome=genome,
        species_id=definition.species_id,
        bit_config=bits,
        birth_generation=generation,
    )


def produce_offspring(
    species: Species, rng: np.random.Generator, generation: int = 0
) -> list[Individual]:
    """Double a species: one new individual per current member.

    Members are shuffled and paired; each pair goes through the species'
    crossover and both children are mutated. An unpaired leftover (and the
    single member of a one-member species) is reproduced by mutation alone.
    Parents are never modified.
    """
    members = species.members
    if not members:
        raise ValueError(f"species {species.id!r} has no members to reproduce")
    d = species.definition
    offspring: list[Individual] = []
    order = rng.permutation(len(members))
    i = 0
    while i + 1 < len(order):
        a = members[order[i]].genome
        b = members[order[i + 1]].genome
        child_a, child_b = d.crossover(a, b, rng)
        offspring.append(_spawn(d, d.mutate(child_a, rng), generation))
        offspring.append(_spawn(d, d.mutate(child_b, rng), generation))
        i += 2
    if i < len(order):
        offspring.append(_spawn(d, d.mutate(members[order[i]].genome, rng), generation))
    return offspring


def species_utility(
    species_fronts: Mapping[str, np.ndarray],
    weights: np.ndarray,
    utopia: np.ndarray | None = None,
) -> dict[str, tuple[float, float]]:
    """Score species by the R2 of their own fitness sets.

    Returns ``{species_id: (raw_r2, utility)}`` where utility is the
    min-max normalization of the negated raw value, so 1 marks the species
    whose set sits closest to the utopian point and 0 the farthest. Exact
    ties across every species collapse to 0.5. A species with an empty set
    inherits the worst observed raw value.
    """
    raw: dict[str, float | None] = {}
    for sid, pts in species_fronts.items():
        pts = np.asarray(pts, dtype=float)
        raw[sid] = r2_indicator(pts, weights, utopia) if pts.size else None
    observed = [v for v in raw.values() if v is not None]
    worst = max(observed) if observed else 0.0
    filled = {sid: (worst if v is None else v) for sid, v in raw.items()}
    lo = min(filled.values())
    hi = max(filled.values())
    if hi == lo:
        return {sid: (v, 0.5) for sid, v in filled.items()}
    return {sid: (v, (hi - v) / (hi - lo + 1e-12)) for sid, v in filled.items()}


def ucb_scores(stats: Sequence[SpeciesStats], c: float) -> list[float]:
    """Upper-confidence-bound score per species.

    ``utility + c * sqrt(ln(total evaluations) / species evaluations)``
    with natural logarithm; a zero evaluation count is bootstrapped to 1.
    """
    counts = np.array([max(1, s.eval_count) for s in stats], dtype=float)
    total = counts.sum()
    bonus = c * np.sqrt(np.log(total) / counts)
    return [float(s.utility + b) for s, b in zip(stats, bonus)]


def allocate_sizes(scores: Sequence[float], population_size: int, min_size: int) -> list[int]:
    """Turn scores into integer species sizes summing to the population.

    Scores are shifted up only when negative values are present, shared out
    proportionally (equal shares when everything cancels), floored at
    ``min_size``, and repaired deterministically: while the total is high
    the largest allocation above the floor is decremented (ties go to the
    lowest species index), while it is low the smallest is incremented.
    """
    values = [float(s) for s in scores]
    n = len(values)
    if n == 0:
        raise ValueError("no scores to allocate")
    if population_size < n * min_size:
        raise ValueError(
            f"population_size {population_size} below {n} species * min_size {min_size}"
        )
    lowest = min(values)
    shifted = [v - lowest for v in values] if lowest < 0 else values
    total = sum(shifted)
    if total <= 0.0:
        shares = [1.0 / n] * n
    else:
        shares = [v / total for v in shifted]
    alloc = [max(min_size, int(round(population_size * share))) for share in shares]
    while sum(alloc) > population_size:
        movable = [i for i in range(n) if alloc[i] > min_size]
        target = max(movable, key=lambda i: (alloc[i], -i))
        alloc[target] -= 1
    while sum(alloc) < population_size:
        target = min(range(n), key=lambda i: (alloc[i], i))
        alloc[target] += 1
    return alloc


class SearchEngine:
    """Drives the generation loop over a fixed species roster.

    The evaluator receives a batch of individuals and must return one
    finite objective vector per individual, positionally aligned. It may
    evaluate the batch concurrently; engine state is only touched between
    batches. A non-finite or malformed result is replaced by the worst-case
    vector (all ones) and logged, and the run continues.
    """

    def __init__(
        self,
        config: EngineConfig,
        species_defs: Sequence[SpeciesDef],
        evaluator: Evaluator,
        utopia: np.ndarray | None = None,
    ):
        ids = [d.species_id for d in species_defs]
        if len(set(ids)) != len(ids):
            raise ValueError("species ids must be unique")
        config.validate(len(species_defs))
        self.config = config
        self.evaluator = evaluator
        self.rng = np.random.default_rng(config.seed)
        self.weights = uniform_weight_vectors(config.n_objectives, config.reference_point_target)
        self.utopia = (
            np.zeros(config.n_objectives) if utopia is None else np.asarray(utopia, dtype=float)
        )
        self.population = init_population(config, species_defs, self.rng)
        self.archive = ParetoArchive(capacity=config.archive_capacity)
        self.history: list[GenerationRecord] = []
        self.generation = 0
        self.total_evaluations = 0
        self._initialized = False

    # -- evaluation ---------------------------------------------------

    def _evaluate(self, individuals: Sequence[Individual]) -> None:
        if not individuals:
            return
        results = self.evaluator(individuals)
        if len(results) != len(individuals):
            raise RuntimeError(
                f"evaluator returned {len(results)} results for {len(individuals)} individuals"
            )
        worst = np.ones(self.config.n_objectives)
        by_species: dict[str, int] = {}
        entries = []
        for ind, fitness in zip(individuals, results):
            vec = np.asarray(fitness, dtype=float)
            if vec.shape != worst.shape or not np.all(np.isfinite(vec)):
                logger.warning(
                    "invalid fitness %r for species %s; substituting worst case",
                    fitness,
                    ind.species_id,
                )
                vec = worst.copy()
            ind.fitness = vec
            by_species[ind.species_id] = by_species.get(ind.species_id, 0) + 1
            entries.append(
                ArchiveEntry(
                    bits=ind.bit_config,
                    objectives=tuple(float(v) for v in vec),
                    species_id=ind.species_id,
                    generation=self.generation,
                )
            )
        self.total_evaluations += len(individuals)
        for species in self.population:
            species.stats.eval_count += by_species.get(species.id, 0)
        self.archive.add(entries)

    # -- generation machinery ------------------------------------------

    def _fitness_matrix(self, individuals: Sequence[Individual]) -> np.ndarray:
        return np.array([ind.fitness for ind in individuals], dtype=float)

    def _update_utilities(self, offspring: Mapping[str, Sequence[Individual]]) -> None:
        fronts = {}
        for species in self.population:
            pool = list(species.members) + list(offspring.get(species.id, ()))
            evaluated = [ind for ind in pool if ind.fitness is not None]
            fronts[species.id] = (
                self._fitness_matrix(evaluated) if evaluated else np.empty((0, 0))
            )
        scored = species_utility(fronts, self.weights, self.utopia)
        for species in self.population:
            raw, utility = scored[species.id]
            species.stats.raw_r2 = raw
            species.stats.utility = utility

    def _update_allocations(self) -> None:
        stats = [s.stats for s in self.population]
        scores = ucb_scores(stats, self.config.ucb_coefficient)
        for st, score in zip(stats, scores):
            st.ucb_score = score
        alloc = allocate_sizes(scores, self.config.population_size, self.config.min_species_size)
        for st, a in zip(stats, alloc):
            st.allocation = a

    def _select_and_fill(self, offspring: Mapping[str, Sequence[Individual]]) -> None:
        pool: list[Individual] = []
        for species in self.population:
            pool.extend(species.members)
            pool.extend(offspring.get(species.id, ()))
        order = nsga3_order(self._fitness_matrix(pool), self.weights, self.rng)
        position = np.empty(len(pool), dtype=int)
        position[order] = np.arange(len(pool))

        pool_index: dict[int, int] = {id(ind): i for i, ind in enumerate(pool)}
        top_ups: list[Individual] = []
        for species in self.population:
            candidates = list(species.members) + list(offspring.get(species.id, ()))
            candidates.sort(key=lambda ind: position[pool_index[id(ind)]])
            survivors = candidates[: species.stats.allocation]
            shortfall = species.stats.allocation - len(survivors)
            fresh = [
                _spawn(species.definition, species.definition.init(self.rng), self.generation)
                for _ in range(shortfall)
            ]
            species.members = survivors + fresh
            top_ups.extend(fresh)
        self._evaluate(top_ups)

    def _record(self) -> None:
        matrix = self.archive.objective_matrix()
        archive_r2 = (
            r2_indicator(matrix, self.weights, self.utopia) if matrix.size else math.inf
        )
        snapshot = {s.id: replace(s.stats) for s in self.population}
        total = max(1, len(self.archive))
        counts = {s.id: 0 for s in self.population}
        for entry in self.archive.entries:
            if entry.species_id in counts:
                counts[entry.species_id] += 1
        self.history.append(
            GenerationRecord(
                generation=self.generation,
                archive_size=len(self.archive),
                archive_r2=archive_r2,
                total_evaluations=self.total_evaluations,
                species=snapshot,
                archive_shares={sid: counts[sid] / total for sid in counts},
            )
        )

    def initialize(self) -> None:
        """Evaluate the initial population; with a positive generation
        budget, run one allocation round so species sizes sum to the
        configured population before the first offspring cycle."""
        if self._initialized:
            raise RuntimeError("engine already initialized")
        self._evaluate([ind for species in self.population for ind in species.members])
        if self.config.max_generations > 0:
            self._update_utilities({})
            self._update_allocations()
            self._select_and_fill({})
        else:
            self._update_utilities({})
            for species in self.population:
                species.stats.allocation = len(species.members)
        self._record()
        self._initialized = True

    def step(self) -> GenerationRecord:
        """Run one full generation and return its telemetry record."""
        if not self._initialized:
            raise RuntimeError("call initialize() before step()")
        self.generation += 1
        offspring = {
            species.id: produce_offspring(species, self.rng, self.generation)
            for species in self.population
        }
        self._evaluate([ind for batch in offspring.values() for ind in batch])
        self._update_utilities(offspring)
        self._update_allocations()
        self._select_and_fill(offspring)
        self._record()
        return self.history[-1]

    def run(self) -> SearchResult:
        if not self._initialized:
            self.initialize()
        while self.generation < self.config.max_generations:
            self.step()
        return SearchResult(
            archive=self.archive,
            history=tuple(self.history),
            weights=self.weights,
            total_evaluations=self.total_evaluations,
        )


def run_search(
    config: EngineConfig,
    species_defs: Sequence[SpeciesDef],
    evaluator: Evaluator,
    utopia: np.ndarray | None = None,
) -> SearchResult:
    """Run the full search loop and return the archive plus history."""
    return SearchEngine(config, species_defs, evaluator, utopia=utopia).run()
