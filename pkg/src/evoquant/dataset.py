"""Seeded synthetic classification data.

The bundled dataset is a Gaussian-blob problem regenerated from a seed, so
no data files ship with the package. Splits: 2000 training samples, 256
calibration samples (8 batches of 32), a class-balanced evaluation split of
50 samples per class used for fast fitness evaluation during search, and
800 validation samples for reference-network quality checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Dataset", "make_blobs_dataset", "DEFAULT_DATA_SEED"]

DEFAULT_DATA_SEED = 7
CENTER_NORM = 4.0


@dataclass(frozen=True)
class Dataset:
    train_x: np.ndarray
    train_y: np.ndarray
    calib_x: np.ndarray
    calib_y: np.ndarray
    eval_x: np.ndarray
    eval_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray

    @property
    def n_classes(self) -> int:
        return int(self.train_y.max()) + 1

    @property
    def n_features(self) -> int:
        return self.train_x.shape[1]

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        try:
            return getattr(self, f"{name}_x"), getattr(self, f"{name}_y")
        except AttributeError:
            raise KeyError(f"unknown split {name!r}") from None


def make_blobs_dataset(
    n_features: int = 8,
    n_classes: int = 4,
    seed: int = DEFAULT_DATA_SEED,
    train: int = 2000,
    calib: int = 256,
    eval_per_class: int = 50,
    val: int = 800,
) -> Dataset:
    """Generate well-separated Gaussian blobs, one per class.

    Class centers are random directions scaled to a fixed norm, samples are
    unit-variance around their center. The evaluation split is stratified
    with exactly ``eval_per_class`` samples per class; the other splits draw
    labels uniformly at random.
    """
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(n_classes, n_features))
    centers *= CENTER_NORM / np.linalg.norm(centers, axis=1, keepdims=True)

    def draw(labels: np.ndarray) -> np.ndarray:
        return centers[labels] + rng.normal(size=(labels.size, n_features))

    def uniform_split(count: int) -> tuple[np.ndarray, np.ndarray]:
        labels = rng.integers(n_classes, size=count)
        return draw(labels), labels

    train_x, train_y = uniform_split(train)
    calib_x, calib_y = uniform_split(calib)
    eval_y = np.repeat(np.arange(n_classes), eval_per_class)
    eval_x = draw(eval_y)
    val_x, val_y = uniform_split(val)
    return Dataset(
        train_x=train_x,
        train_y=train_y,
        calib_x=calib_x,
        calib_y=calib_y,
        eval_x=eval_x,
        eval_y=eval_y,
        val_x=val_x,
        val_y=val_y,
    )
