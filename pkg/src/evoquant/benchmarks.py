"""Analytic multi-objective test problems with known Pareto fronts.

These decouple engine validation from the quantization stack: the direct
species' continuous genomes (coordinates in [2, 8]) are mapped linearly to
the unit cube and fed to a closed-form objective function.

``sphere-2d``: f1 = mean(u^2), f2 = mean((1 - u)^2); the front is the curve
traced by constant vectors u = t, t in [0, 1].

``dtlz2-3d``: the standard three-objective problem whose Pareto front is
the positive octant of the unit sphere (sum of squared objectives = 1).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .engine import Evaluator, Individual

__all__ = ["BENCHMARK_PROBLEMS", "benchmark_evaluator", "make_benchmark_engine_evaluator"]


def _to_unit(values: np.ndarray) -> np.ndarray:
    return np.clip((np.asarray(values, dtype=float) - 2.0) / 6.0, 0.0, 1.0)


def _sphere_2d(values: np.ndarray) -> np.ndarray:
    u = _to_unit(values)
    return np.array([np.mean(u**2), np.mean((1.0 - u) ** 2)])


def _dtlz2_3d(values: np.ndarray) -> np.ndarray:
    u = _to_unit(values)
    if u.size < 3:
        raise ValueError("dtlz2-3d needs at least 3 decision variables")
    g = float(np.sum((u[2:] - 0.5) ** 2))
    a1, a2 = u[0] * np.pi / 2.0, u[1] * np.pi / 2.0
    return (1.0 + g) * np.array(
        [np.cos(a1) * np.cos(a2), np.cos(a1) * np.sin(a2), np.sin(a1)]
    )


BENCHMARK_PROBLEMS = {
    "sphere-2d": (_sphere_2d, 2),
    "dtlz2-3d": (_dtlz2_3d, 3),
}


def benchmark_evaluator(name: str, values) -> np.ndarray:
    """Evaluate one decision vector (in genome coordinates) analytically."""
    try:
        fn, _ = BENCHMARK_PROBLEMS[name]
    except KeyError:
        raise ValueError(
            f"unknown benchmark {name!r}; choose from {sorted(BENCHMARK_PROBLEMS)}"
        ) from None
    return fn(np.asarray(values, dtype=float))


def make_benchmark_engine_evaluator(name: str) -> tuple[Evaluator, int]:
    """Engine-facing batch evaluator plus the problem's objective count."""
    fn, n_objectives = BENCHMARK_PROBLEMS.get(name, (None, None))
    if fn is None:
        raise ValueError(
            f"unknown benchmark {name!r}; choose from {sorted(BENCHMARK_PROBLEMS)}"
        )

    def evaluate(individuals: Sequence[Individual]):
        return [fn(ind.genome.values) for ind in individuals]

    return evaluate, n_objectives
