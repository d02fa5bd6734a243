"""Neuroevolution species: tensor-wise variation over GNN genomes.

Crossover swaps individual elements between two aligned networks
(uniform crossover, gated per tensor), mutation perturbs a fixed fraction
of each tensor's elements with Gaussian noise whose scale is proportional
to the element magnitude, and decoding turns per-node logits into bit
widths via softmax + argmax with ties resolved toward the lower width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import SpeciesDef
from .gnn import GnnArchitecture, GnnGenome, gnn_infer, random_gnn_genome

__all__ = [
    "SsneConfig",
    "ssne_crossover",
    "ssne_mutate",
    "decode_neuro",
    "make_gnn_species",
]

# Noise floor so zero-valued elements still move under mutation.
SIGMA_FLOOR = 1e-3


@dataclass(frozen=True)
class SsneConfig:
    cr_dist: float = 1.0
    mut_dist: float = 1.0
    mut_fraction: float = 0.05
    mut_strength: float = 0.1

    def __post_init__(self):
        for name in ("cr_dist", "mut_dist"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if not 0.0 < self.mut_fraction <= 1.0:
            raise ValueError(f"mut_fraction must lie in (0, 1], got {self.mut_fraction}")
        if self.mut_strength < 0.0:
            raise ValueError("mut_strength must be non-negative")


def ssne_crossover(
    a: GnnGenome, b: GnnGenome, cfg: SsneConfig, rng: np.random.Generator
) -> tuple[GnnGenome, GnnGenome]:
    """Uniform crossover between two networks of identical architecture.

    Each aligned tensor pair is crossed with probability ``cr_dist``; inside
    a crossed pair every element independently swaps between the children
    with probability 0.5, so per element the children always hold exactly
    the two parent values. Parents are untouched.
    """
    if a.arch != b.arch:
        raise ValueError("crossover requires identical architectures")
    out_a: list[np.ndarray] = []
    out_b: list[np.ndarray] = []
    for ta, tb in zip(a.params, b.params):
        if rng.random() < cfg.cr_dist:
            swap = rng.random(ta.shape) < 0.5
            out_a.append(np.where(swap, tb, ta))
            out_b.append(np.where(swap, ta, tb))
        else:
            out_a.append(ta.copy())
            out_b.append(tb.copy())
    return (
        GnnGenome(arch=a.arch, params=tuple(out_a)),
        GnnGenome(arch=b.arch, params=tuple(out_b)),
    )


def ssne_mutate(genome: GnnGenome, cfg: SsneConfig, rng: np.random.Generator) -> GnnGenome:
    """Perturb ceil(mut_fraction * numel) distinct elements of each tensor.

    The whole mutation is gated per genome with probability ``mut_dist``.
    Selected elements gain zero-mean Gaussian noise with standard deviation
    ``mut_strength * |value| + 1e-3``; the additive floor keeps zero-valued
    elements mutable.
    """
    if rng.random() >= cfg.mut_dist:
        return genome
    out = []
    for tensor in genome.params:
        flat = tensor.ravel().copy()
        count = math.ceil(cfg.mut_fraction * flat.size)
        picked = rng.choice(flat.size, size=count, replace=False)
        sigma = cfg.mut_strength * np.abs(flat[picked]) + SIGMA_FLOOR
        flat[picked] += rng.normal(0.0, 1.0, size=count) * sigma
        out.append(flat.reshape(tensor.shape))
    return GnnGenome(arch=genome.arch, params=tuple(out))


def decode_neuro(
    genome: GnnGenome,
    graph,
    bit_set,
    sample: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[int, ...]:
    """Map per-node logits onto bit widths.

    The default is the deterministic argmax of the softmax row, with ties
    going to the lowest bit width; ``sample=True`` instead draws the bit
    from the softmax probabilities using ``rng`` (for experimentation, not
    used by the engine).
    """
    bits = tuple(int(b) for b in bit_set)
    logits = gnn_infer(genome, graph)
    if logits.shape[1] != len(bits):
        raise ValueError(f"logit width {logits.shape[1]} does not match {len(bits)} bit choices")
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    if sample:
        if rng is None:
            raise ValueError("sampling decode requires a generator")
        choices = [int(rng.choice(len(bits), p=row)) for row in probs]
    else:
        choices = np.argmax(probs, axis=1)
    return tuple(bits[int(i)] for i in choices)


def make_gnn_species(
    species_id: str,
    kind: str,
    graph,
    bit_set,
    ssne: SsneConfig | None = None,
    graph_hidden: int = 10,
    attention_out: int = 8,
    attention_heads: int = 4,
    unet_depth: int = 3,
    pool_ratio: float = 0.5,
) -> SpeciesDef:
    """Bundle a GNN architecture plus its variation operators into a species."""
    cfg = ssne or SsneConfig()
    arch = GnnArchitecture(
        kind=kind,
        in_dim=int(np.asarray(graph.node_features).shape[1]),
        out_dim=len(tuple(bit_set)),
        graph_hidden=graph_hidden,
        attention_out=attention_out,
        attention_heads=attention_heads,
        unet_depth=unet_depth,
        pool_ratio=pool_ratio,
    )
    bits = tuple(int(b) for b in bit_set)
    return SpeciesDef(
        species_id=species_id,
        init=lambda rng: random_gnn_genome(arch, rng),
        crossover=lambda a, b, rng: ssne_crossover(a, b, cfg, rng),
        mutate=lambda g, rng: ssne_mutate(g, cfg, rng),
        decode=lambda g: decode_neuro(g, graph, bits),
    )
