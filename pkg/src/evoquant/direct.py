"""Real-coded direct-search species over per-quantizer bit widths.

A genome is one float per quantizer node, constrained to the closed range
spanned by the allowed bit widths. Variation uses simulated binary
crossover and bounded polynomial mutation; decoding rounds each coordinate
onto the allowed set, either to the nearest member (ties go up, toward
higher precision) or to the largest member not above the value, which
biases the species toward stronger compression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import SpeciesDef

__all__ = [
    "DEFAULT_BIT_SET",
    "DirectGenome",
    "random_direct_genome",
    "decode_direct",
    "sbx_crossover",
    "polynomial_mutation",
    "make_direct_species",
]

DEFAULT_BIT_SET = (2, 3, 4, 5, 6, 7, 8)
ROUNDING_MODES = ("nearest", "floor")


def _validated_bits(bit_set) -> np.ndarray:
    bits = np.asarray(bit_set, dtype=int)
    if bits.ndim != 1 or bits.size < 2:
        raise ValueError("bit_set needs at least two entries")
    if np.any(np.diff(bits) <= 0):
        raise ValueError("bit_set must be strictly ascending")
    return bits


@dataclass(frozen=True)
class DirectGenome:
    """Vector of continuous bit-width choices plus its decoding mode."""

    values: np.ndarray
    rounding_mode: str = "nearest"

    def __post_init__(self):
        if self.rounding_mode not in ROUNDING_MODES:
            raise ValueError(f"unknown rounding mode {self.rounding_mode!r}")
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def random_direct_genome(
    length: int,
    rng: np.random.Generator,
    rounding_mode: str = "nearest",
    bounds: tuple[float, float] = (2.0, 8.0),
) -> DirectGenome:
    """Draw a genome uniformly inside the bit-width bounds."""
    lo, hi = bounds
    return DirectGenome(values=rng.uniform(lo, hi, size=length), rounding_mode=rounding_mode)


def decode_direct(genome: DirectGenome, bit_set=DEFAULT_BIT_SET) -> tuple[int, ...]:
    """Round a genome onto the allowed bit set.

    Nearest mode picks the closest allowed value, rounding half-way cases
    up. Floor mode picks the largest allowed value not exceeding the
    coordinate; values below the smallest allowed bit clamp to it.
    """
    bits = _validated_bits(bit_set)
    values = np.asarray(genome.values, dtype=float)
    if genome.rounding_mode == "nearest":
        pos = np.searchsorted(bits, values)
        lo = np.clip(pos - 1, 0, bits.size - 1)
        hi = np.clip(pos, 0, bits.size - 1)
        take_hi = (bits[hi] - values) <= (values - bits[lo])
        chosen = np.where(take_hi, bits[hi], bits[lo])
    else:
        pos = np.searchsorted(bits, values, side="right") - 1
        chosen = bits[np.clip(pos, 0, bits.size - 1)]
    return tuple(int(b) for b in chosen)


def sbx_crossover(
    p1: DirectGenome,
    p2: DirectGenome,
    eta_c: float,
    rng: np.random.Generator,
    bounds: tuple[float, float] = (2.0, 8.0),
) -> tuple[DirectGenome, DirectGenome]:
    """Simulated binary crossover with bound clamping.

    Standard form: each coordinate is crossed with probability 0.5 using a
    spread factor beta drawn from the distribution with index ``eta_c``,
    giving the symmetric blends ``0.5 * ((1 +- beta) p1 + (1 -+ beta) p2)``,
    and the two children swap each coordinate with probability 0.5.
    Identical parents are a fixed point, and the children's coordinate sums
    equal the parents' before clamping.
    """
    if p1.values.shape != p2.values.shape:
        raise ValueError("parents must have equal genome length")
    if p1.rounding_mode != p2.rounding_mode:
        raise ValueError("parents must share a rounding mode")
    lo, hi = bounds
    a, b = p1.values, p2.values
    u = rng.random(a.shape)
    exponent = 1.0 / (eta_c + 1.0)
    beta = np.where(u <= 0.5, (2.0 * u) ** exponent, (0.5 / (1.0 - u)) ** exponent)
    beta = np.where(rng.random(a.shape) < 0.5, beta, 1.0)
    c1 = 0.5 * ((1.0 + beta) * a + (1.0 - beta) * b)
    c2 = 0.5 * ((1.0 - beta) * a + (1.0 + beta) * b)
    swap = rng.random(a.shape) < 0.5
    c1, c2 = np.where(swap, c2, c1), np.where(swap, c1, c2)
    mode = p1.rounding_mode
    return (
        DirectGenome(values=np.clip(c1, lo, hi), rounding_mode=mode),
        DirectGenome(values=np.clip(c2, lo, hi), rounding_mode=mode),
    )


def polynomial_mutation(
    genome: DirectGenome,
    eta_m: float,
    per_gene_prob: float,
    rng: np.random.Generator,
    bounds: tuple[float, float] = (2.0, 8.0),
) -> DirectGenome:
    """Bounded polynomial mutation.

    Each coordinate is independently perturbed with ``per_gene_prob`` by a
    delta drawn from the polynomial distribution with index ``eta_m``,
    scaled by the bound width and clamped back into the bounds.
    """
    lo, hi = bounds
    v = genome.values
    width = hi - lo
    mask = rng.random(v.shape) < per_gene_prob
    u = rng.random(v.shape)
    delta_lo = (v - lo) / width
    delta_hi = (hi - v) / width
    power = eta_m + 1.0
    exponent = 1.0 / power
    delta = np.where(
        u <= 0.5,
        (2.0 * u + (1.0 - 2.0 * u) * (1.0 - delta_lo) ** power) ** exponent - 1.0,
        1.0 - (2.0 * (1.0 - u) + (2.0 * u - 1.0) * (1.0 - delta_hi) ** power) ** exponent,
    )
    mutated = np.where(mask, v + delta * width, v)
    return DirectGenome(values=np.clip(mutated, lo, hi), rounding_mode=genome.rounding_mode)


def make_direct_species(
    species_id: str,
    genome_length: int,
    rounding_mode: str = "nearest",
    bit_set=DEFAULT_BIT_SET,
    eta_c: float = 20.0,
    eta_m: float = 20.0,
    per_gene_prob: float | None = None,
) -> SpeciesDef:
    """Bundle the direct-search operators into an engine species."""
    bits = _validated_bits(bit_set)
    bounds = (float(bits[0]), float(bits[-1]))
    gene_prob = 1.0 / genome_length if per_gene_prob is None else per_gene_prob
    bit_tuple = tuple(int(b) for b in bits)
    return SpeciesDef(
        species_id=species_id,
        init=lambda rng: random_direct_genome(genome_length, rng, rounding_mode, bounds),
        crossover=lambda a, b, rng: sbx_crossover(a, b, eta_c, rng, bounds),
        mutate=lambda g, rng: polynomial_mutation(g, eta_m, gene_prob, rng, bounds),
        decode=lambda g: decode_direct(g, bit_tuple),
    )
