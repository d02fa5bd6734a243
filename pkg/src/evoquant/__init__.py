"""Multi-species evolutionary search for Pareto-optimal mixed-precision
quantization of neural workloads, evaluated on accuracy, parameter memory,
and bit-operations."""

from .benchmarks import benchmark_evaluator
from .dataset import Dataset, make_blobs_dataset
from .direct import (
    DEFAULT_BIT_SET,
    DirectGenome,
    decode_direct,
    make_direct_species,
    polynomial_mutation,
    sbx_crossover,
)
from .engine import (
    EngineConfig,
    Individual,
    ParetoArchive,
    SearchEngine,
    SearchResult,
    Species,
    SpeciesDef,
    SpeciesStats,
    allocate_sizes,
    init_population,
    produce_offspring,
    run_search,
    species_utility,
    ucb_scores,
)
from .gnn import GnnArchitecture, GnnGenome, gnn_infer, random_gnn_genome
from .harness import (
    ParetoReport,
    RunConfig,
    WorkloadEvaluator,
    execute_run,
    exhaustive_oracle,
    parallel_evaluate,
    report_from_archive,
    write_run_outputs,
)
from .neuro import SsneConfig, decode_neuro, make_gnn_species, ssne_crossover, ssne_mutate
from .pareto import (
    FrontPartition,
    dominates,
    non_dominated_sort,
    nsga3_order,
    nsga3_select,
    r2_indicator,
    uniform_weight_vectors,
)
from .workload import (
    Quantizer,
    Workload,
    WorkloadGraph,
    bitops_ratio,
    build_graph,
    calibrate,
    evaluate_objectives,
    model_ratio,
    quantize_dequantize,
    quantized_forward,
    train_reference,
)

__version__ = "0.1.0"
