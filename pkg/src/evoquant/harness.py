"""Run orchestration: cached parallel evaluation, the exhaustive oracle,
result export, and the run configuration that wires everything together.

Evaluation of a bit configuration is a pure function of the calibrated
workload, so results are memoized by the bit vector and a batch can be
fanned out over a thread pool without affecting determinism: outputs are
positionally aligned with inputs and identical at any thread count.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Dataset, make_blobs_dataset
from .direct import DEFAULT_BIT_SET, make_direct_species
from .engine import (
    EngineConfig,
    Individual,
    ParetoArchive,
    SearchResult,
    SpeciesDef,
    run_search,
)
from .neuro import SsneConfig, make_gnn_species
from .workload import (
    Workload,
    WorkloadGraph,
    build_graph,
    calibrate,
    evaluate_objectives,
    full_forward,
    load_workload,
    quantized_forward,
    top_k_accuracy,
    train_reference,
)

__all__ = [
    "SPECIES_NAMES",
    "RunConfig",
    "ReportRow",
    "ParetoReport",
    "WorkloadEvaluator",
    "parallel_evaluate",
    "exhaustive_oracle",
    "report_from_archive",
    "prepare_quantization_run",
    "execute_run",
    "write_run_outputs",
]

logger = logging.getLogger(__name__)

SPECIES_NAMES = ("continuous", "floor", "gcn", "graph_unet")
ORACLE_LIMIT = 100_000
WORST_CASE = np.array([1.0, 1.0, 1.0])
# Seed used to train the bundled reference workloads; independent of the
# search seed so "tiny" and "small" mean the same network in every run.
BUNDLED_WORKLOAD_SEED = 0


# -- cached, parallel objective evaluation -----------------------------------


def parallel_evaluate(
    configs: Sequence[Sequence[int]],
    workload: Workload,
    inputs,
    labels,
    top_k: int = 1,
    threads: int = 1,
    cache: dict | None = None,
) -> list[np.ndarray]:
    """Evaluate bit configurations, deduplicated through ``cache``.

    Results align positionally with ``configs`` and do not depend on the
    thread count. A configuration that fails to evaluate is logged and
    scored with the worst-case vector (1, 1, 1) instead of aborting the
    batch.
    """
    keys = [tuple(int(b) for b in c) for c in configs]
    if cache is None:
        cache = {}

    def compute(key):
        try:
            return evaluate_objectives(workload, key, inputs, labels, top_k)
        except Exception:
            logger.exception("evaluation failed for config %s", key)
            return WORST_CASE.copy()

    pending = [k for k in dict.fromkeys(keys) if k not in cache]
    if threads > 1 and len(pending) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for key, value in zip(pending, pool.map(compute, pending)):
                cache[key] = value
    else:
        for key in pending:
            cache[key] = compute(key)
    return [cache[k].copy() for k in keys]


class WorkloadEvaluator:
    """Engine-facing evaluator bound to one calibrated workload and split."""

    def __init__(self, workload: Workload, inputs, labels, top_k: int = 1, threads: int = 1):
        if not workload.calibrated:
            raise ValueError("workload must be calibrated")
        self.workload = workload
        self.inputs = np.asarray(inputs, dtype=float)
        self.labels = np.asarray(labels)
        self.top_k = top_k
        self.threads = threads
        self.cache: dict[tuple[int, ...], np.ndarray] = {}

    def __call__(self, individuals: Sequence[Individual]) -> list[np.ndarray]:
        return parallel_evaluate(
            [ind.bit_config for ind in individuals],
            self.workload,
            self.inputs,
            self.labels,
            top_k=self.top_k,
            threads=self.threads,
            cache=self.cache,
        )

    @property
    def distinct_evaluations(self) -> int:
        return len(self.cache)


# -- Pareto reports -----------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    config_id: str
    species_id: str
    generation: int
    top1: float
    topk: float
    model_ratio: float
    bitops_ratio: float
    bits: tuple[int, ...]

    @property
    def objectives(self) -> tuple[float, float, float]:
        return (1.0 - self.topk, self.model_ratio, self.bitops_ratio)


@dataclass(frozen=True)
class ParetoReport:
    rows: tuple[ReportRow, ...]

    def __post_init__(self):
        vectors = [np.asarray(r.objectives) for r in self.rows]
        for i, vi in enumerate(vectors):
            for j, vj in enumerate(vectors):
                if i != j and bool(np.all(vj <= vi) and np.any(vj < vi)):
                    raise ValueError(
                        f"report rows must be mutually non-dominated; row {i} is dominated"
                    )

    def write_csv(self, path) -> None:
        n_bits = len(self.rows[0].bits) if self.rows else 0
        header = [
            "config_id",
            "species_id",
            "generation",
            "top1",
            "topk",
            "model_ratio",
            "bitops_ratio",
            *[f"bit_{i}" for i in range(n_bits)],
        ]
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            for row in self.rows:
                writer.writerow(
                    [
                        row.config_id,
                        row.species_id,
                        row.generation,
                        repr(row.top1),
                        repr(row.topk),
                        repr(row.model_ratio),
                        repr(row.bitops_ratio),
                        *row.bits,
                    ]
                )


def _config_id(bits: Sequence[int]) -> str:
    return "-".join(str(int(b)) for b in bits)


def _make_row(
    workload: Workload,
    bits: tuple[int, ...],
    inputs,
    labels,
    top_k: int,
    species_id: str,
    generation: int,
    objectives: np.ndarray | None = None,
) -> ReportRow:
    scores = quantized_forward(workload, bits, inputs)
    top1 = top_k_accuracy(scores, labels, 1)
    if objectives is None:
        topk = top_k_accuracy(scores, labels, top_k)
        vec = evaluate_objectives(workload, bits, inputs, labels, top_k)
        mr, br = float(vec[1]), float(vec[2])
    else:
        topk = 1.0 - float(objectives[0])
        mr, br = float(objectives[1]), float(objectives[2])
    return ReportRow(
        config_id=_config_id(bits),
        species_id=species_id,
        generation=generation,
        top1=top1,
        topk=topk,
        model_ratio=mr,
        bitops_ratio=br,
        bits=bits,
    )


def _pareto_mask(vectors: np.ndarray) -> np.ndarray:
    """Brute-force all-pairs dominance filter; True marks non-dominated rows."""
    n = vectors.shape[0]
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        vi = vectors[i]
        le = np.all(vectors <= vi, axis=1)
        lt = np.any(vectors < vi, axis=1)
        if np.any(le & lt):
            keep[i] = False
    return keep


def exhaustive_oracle(
    workload: Workload,
    bit_set,
    inputs,
    labels,
    top_k: int = 1,
    threads: int = 1,
    limit: int = ORACLE_LIMIT,
) -> ParetoReport:
    """Evaluate every configuration and keep the exact Pareto-optimal set.

    Refuses search spaces larger than ``limit`` configurations.
    """
    bits = tuple(int(b) for b in bit_set)
    size = workload.search_space_size(bits)
    if size > limit:
        raise ValueError(
            f"search space holds {size} configurations, above the enumeration limit {limit}"
        )
    configs = [()]
    for _ in range(workload.quantizer_count):
        configs = [c + (b,) for c in configs for b in bits]
    vectors = parallel_evaluate(configs, workload, inputs, labels, top_k, threads)
    matrix = np.array(vectors)
    keep = _pareto_mask(matrix)
    rows = [
        _make_row(workload, configs[i], inputs, labels, top_k, "exhaustive", 0, matrix[i])
        for i in np.flatnonzero(keep)
    ]
    rows.sort(key=lambda r: r.bits)
    return ParetoReport(rows=tuple(rows))


def report_from_archive(
    archive: ParetoArchive,
    workload: Workload,
    inputs,
    labels,
    top_k: int = 1,
) -> ParetoReport:
    rows = [
        _make_row(
            workload,
            entry.bits,
            inputs,
            labels,
            top_k,
            entry.species_id,
            entry.generation,
            np.asarray(entry.objectives),
        )
        for entry in archive.entries
    ]
    rows.sort(key=lambda r: (r.bits, r.species_id, r.generation))
    return ParetoReport(rows=tuple(rows))


# -- run configuration ---------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Everything a search run needs, loadable from JSON."""

    workload: str = "tiny"
    species: tuple[str, ...] = SPECIES_NAMES
    bit_set: tuple[int, ...] = DEFAULT_BIT_SET
    top_k: int = 1
    threads: int = 1
    seed: int = 0
    population_size: int = 50
    initial_species_size: int = 10
    min_species_size: int = 5
    reference_point_target: int = 25
    ucb_coefficient: float = 0.9
    max_generations: int = 100
    archive_capacity: int | None = None
    ssne: SsneConfig = field(default_factory=SsneConfig)

    def __post_init__(self):
        if not self.species:
            raise ValueError("species roster must be non-empty")
        unknown = [s for s in self.species if s not in SPECIES_NAMES]
        if unknown:
            raise ValueError(f"unknown species {unknown}; choose from {list(SPECIES_NAMES)}")
        if len(set(self.species)) != len(self.species):
            raise ValueError("species roster contains duplicates")
        bits = tuple(int(b) for b in self.bit_set)
        if len(bits) < 2 or any(b2 <= b1 for b1, b2 in zip(bits, bits[1:])):
            raise ValueError("bit_set must be ascending with at least two entries")
        object.__setattr__(self, "bit_set", bits)
        object.__setattr__(self, "species", tuple(self.species))

    @classmethod
    def from_json(cls, payload: dict) -> "RunConfig":
        known = dict(payload)
        ssne = known.pop("ssne", None)
        for key in known:
            if key not in cls.__dataclass_fields__:
                raise ValueError(f"unknown run configuration field {key!r}")
        if ssne is not None:
            known["ssne"] = SsneConfig(**ssne)
        return cls(**known)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_json(json.loads(Path(path).read_text()))

    def engine_config(self) -> EngineConfig:
        return EngineConfig(
            max_generations=self.max_generations,
            population_size=self.population_size,
            initial_species_size=self.initial_species_size,
            min_species_size=self.min_species_size,
            reference_point_target=self.reference_point_target,
            ucb_coefficient=self.ucb_coefficient,
            n_objectives=3,
            seed=self.seed,
            archive_capacity=self.archive_capacity,
        )


def build_species_roster(
    names: Sequence[str],
    graph: WorkloadGraph,
    bit_set,
    ssne: SsneConfig | None = None,
) -> list[SpeciesDef]:
    """Instantiate the requested species against one workload graph."""
    defs = []
    for name in names:
        if name == "continuous":
            defs.append(make_direct_species(name, graph.n_nodes, "nearest", bit_set))
        elif name == "floor":
            defs.append(make_direct_species(name, graph.n_nodes, "floor", bit_set))
        elif name == "gcn":
            defs.append(make_gnn_species(name, "gcn", graph, bit_set, ssne))
        elif name == "graph_unet":
            defs.append(make_gnn_species(name, "graph_unet", graph, bit_set, ssne))
        else:
            raise ValueError(f"unknown species {name!r}")
    return defs


def resolve_workload(selection: str) -> tuple[Workload, Dataset]:
    """Load a workload file or build a bundled reference network.

    Bundled workloads are trained with a fixed seed so the same name always
    denotes the same network; the dataset is regenerated from the seed
    recorded in the workload metadata.
    """
    if selection in ("tiny", "small"):
        dataset = make_blobs_dataset()
        workload = train_reference(
            selection, dataset, rng=np.random.default_rng(BUNDLED_WORKLOAD_SEED)
        )
        return workload, dataset
    workload = load_workload(selection)
    seed = workload.metadata.get("dataset_seed")
    if seed is None:
        raise ValueError(f"workload file {selection!r} does not record its dataset seed")
    return workload, make_blobs_dataset(seed=int(seed))


@dataclass
class PreparedRun:
    config: RunConfig
    workload: Workload
    dataset: Dataset
    graph: WorkloadGraph
    species_defs: list[SpeciesDef]
    evaluator: WorkloadEvaluator


def prepare_quantization_run(config: RunConfig) -> PreparedRun:
    workload, dataset = resolve_workload(config.workload)
    workload = calibrate(workload, dataset.calib_x)
    graph = build_graph(workload)
    species_defs = build_species_roster(config.species, graph, config.bit_set, config.ssne)
    evaluator = WorkloadEvaluator(
        workload,
        dataset.eval_x,
        dataset.eval_y,
        top_k=config.top_k,
        threads=config.threads,
    )
    return PreparedRun(
        config=config,
        workload=workload,
        dataset=dataset,
        graph=graph,
        species_defs=species_defs,
        evaluator=evaluator,
    )


def execute_run(config: RunConfig) -> tuple[PreparedRun, SearchResult]:
    prepared = prepare_quantization_run(config)
    result = run_search(config.engine_config(), prepared.species_defs, prepared.evaluator)
    return prepared, result


# -- output files ---------------------------------------------------------------


def write_run_outputs(prepared: PreparedRun, result: SearchResult, out_dir) -> dict[str, Path]:
    """Write pareto.csv, telemetry.jsonl, and run-metadata.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = prepared.config

    report = report_from_archive(
        result.archive,
        prepared.workload,
        prepared.evaluator.inputs,
        prepared.evaluator.labels,
        top_k=config.top_k,
    )
    pareto_path = out / "pareto.csv"
    report.write_csv(pareto_path)

    telemetry_path = out / "telemetry.jsonl"
    with open(telemetry_path, "w") as handle:
        for record in result.history:
            handle.write(
                json.dumps(
                    {
                        "generation": record.generation,
                        "archive_size": record.archive_size,
                        "archive_r2": record.archive_r2,
                        "total_evaluations": record.total_evaluations,
                        "species": {
                            sid: {
                                "raw_r2": stats.raw_r2,
                                "utility": stats.utility,
                                "ucb": stats.ucb_score,
                                "allocation": stats.allocation,
                                "eval_count": stats.eval_count,
                                "archive_share": record.archive_shares[sid],
                            }
                            for sid, stats in record.species.items()
                        },
                    },
                    sort_keys=True,
                )
                + "\n"
            )

    metadata_path = out / "run-metadata.json"
    metadata = {
        "seed": config.seed,
        "workload": config.workload,
        "species": list(config.species),
        "bit_set": list(config.bit_set),
        "top_k": config.top_k,
        "threads": config.threads,
        "generations": config.max_generations,
        "population_size": config.population_size,
        "reference_point_target": config.reference_point_target,
        "reference_point_count": int(result.weights.shape[0]),
        "bitops_formula": "sum(macs * weight_bits * act_bits) / (sum(macs) * 32 * 32)",
        "budget_convention": "initial population evaluations count toward the budget",
        "total_evaluations": result.total_evaluations,
        "distinct_configurations_evaluated": prepared.evaluator.distinct_evaluations,
        "search_space_size": prepared.workload.search_space_size(config.bit_set),
        "archive_size": len(result.archive),
    }
    metadata_path.write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")
    return {"pareto": pareto_path, "telemetry": telemetry_path, "metadata": metadata_path}
