"""Quantization side: workloads, affine quantizers, objectives, graphs.

A workload is a trained stack of dense layers. Every layer owns two
quantizer nodes, one for its weight matrix and one for its input
activations, in the fixed order ``weight_0, act_0, weight_1, act_1, ...``
so that a bit configuration indexes quantizers stably.

Quantization is simulated: tensors pass through an asymmetric affine
quantize-dequantize step before the layer computation, and arithmetic stays
in float. The quantizer maps a clamped value onto one of ``2^b`` levels via

    level = round(clamp(x) / s + z),   s = (x_max - x_min) / (2^b - 1),
    z = -x_min / s  (kept real-valued)

so levels live in ``{0, ..., 2^b - 1}`` and the reconstruction
``s * (level - z)`` is never more than half a step away from the clamped
input.

The three search objectives, all minimized and all in [0, 1]:

    f1 = 1 - top-k accuracy on the evaluation split
    f2 = weight-memory ratio   sum(P_l * b_w_l) / (32 * sum(P_l))
    f3 = bit-operations ratio  sum(M_l * b_w_l * b_a_l) / (sum(M_l) * 32 * 32)

where ``P_l`` counts layer parameters (weights plus bias) and ``M_l`` its
multiply-accumulate operations (in_dim * out_dim for a dense layer).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import DEFAULT_DATA_SEED, Dataset

__all__ = [
    "DenseLayer",
    "Workload",
    "WorkloadGraph",
    "Quantizer",
    "TrainingError",
    "quantize_dequantize",
    "calibrate",
    "quantized_forward",
    "full_forward",
    "top_k_accuracy",
    "model_ratio",
    "bitops_ratio",
    "evaluate_objectives",
    "build_graph",
    "train_reference",
    "REFERENCE_ARCHS",
    "workload_to_json",
    "workload_from_json",
    "save_workload",
    "load_workload",
]

WORKLOAD_FORMAT_VERSION = 1
DEGENERATE_RANGE_PAD = 1e-6

REFERENCE_ARCHS: dict[str, tuple[int, ...]] = {
    "tiny": (8, 16, 4),
    "small": (8, 24, 24, 24, 24, 24, 24, 24, 4),
}


@dataclass(frozen=True)
class DenseLayer:
    weights: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray  # (out_dim,)
    group_id: int
    op_type: str = "dense"

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        b = np.array(self.bias, dtype=float)
        if w.ndim != 2 or b.shape != (w.shape[1],):
            raise ValueError(f"inconsistent layer shapes {w.shape} / {b.shape}")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def param_count(self) -> int:
        return self.weights.size + self.bias.size

    @property
    def mac_count(self) -> int:
        return self.in_dim * self.out_dim


@dataclass(frozen=True)
class Workload:
    """Trained layers plus, once calibrated, per-quantizer dynamic ranges."""

    layers: tuple[DenseLayer, ...]
    metadata: dict = field(default_factory=dict)
    ranges: tuple[tuple[float, float], ...] | None = None

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def quantizer_count(self) -> int:
        return 2 * len(self.layers)

    @property
    def calibrated(self) -> bool:
        return self.ranges is not None

    def weight_quantizer_index(self, layer: int) -> int:
        return 2 * layer

    def activation_quantizer_index(self, layer: int) -> int:
        return 2 * layer + 1

    def search_space_size(self, bit_set) -> int:
        return len(tuple(bit_set)) ** self.quantizer_count


@dataclass(frozen=True)
class WorkloadGraph:
    """One node per quantizer, chained sequentially.

    Node features concatenate a one-hot of the layer op type, a weight-vs-
    activation flag, the quantized tensor's dimension count, log(1 + element
    count), and a one-hot of the layer group.
    """

    node_features: np.ndarray
    edges: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]


class TrainingError(RuntimeError):
    pass


# -- affine quantization -----------------------------------------------------


@dataclass(frozen=True)
class Quantizer:
    b: int
    x_min: float
    x_max: float

    def __post_init__(self):
        if self.b < 2:
            raise ValueError(f"bit width must be >= 2, got {self.b}")
        if not self.x_min < self.x_max:
            raise ValueError(f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")

    @property
    def scale(self) -> float:
        return (self.x_max - self.x_min) / (2**self.b - 1)

    @property
    def zero_point(self) -> float:
        return -self.x_min / self.scale


def quantize_dequantize(q: Quantizer, x) -> tuple[np.ndarray, np.ndarray]:
    """Clamp, scale, round; return (integer levels, reconstructed values)."""
    x = np.asarray(x, dtype=float)
    s = q.scale
    z = q.zero_point
    clamped = np.clip(x, q.x_min, q.x_max)
    level = np.round(clamped / s + z)
    return level, s * (level - z)


def _qdq(q: Quantizer, x) -> np.ndarray:
    return quantize_dequantize(q, x)[1]


# -- forward passes ----------------------------------------------------------


def _forward_collect(workload: Workload, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Full-precision forward pass, also returning each layer's input."""
    h = np.asarray(x, dtype=float)
    inputs = []
    last = workload.n_layers - 1
    for i, layer in enumerate(workload.layers):
        inputs.append(h)
        h = h @ layer.weights + layer.bias
        if i != last:
            h = np.maximum(h, 0.0)
    return h, inputs


def full_forward(workload: Workload, x) -> np.ndarray:
    """Class scores of the unquantized network."""
    return _forward_collect(workload, np.asarray(x, dtype=float))[0]


def calibrate(workload: Workload, calibration_x, n_batches: int = 8) -> Workload:
    """Estimate every quantizer's dynamic range; returns a new workload.

    Activation thresholds are the mean over calibration batches of the
    per-batch tensor minimum and maximum, observed on full-precision
    forward passes. Weight thresholds are the static weight min/max.
    Degenerate ranges are widened by +-1e-6 so the scale stays positive.
    """
    data = np.asarray(calibration_x, dtype=float)
    if data.size == 0:
        raise ValueError("calibration data must be non-empty")
    if n_batches < 1:
        raise ValueError("need at least one calibration batch")
    batches = np.array_split(data, min(n_batches, data.shape[0]))

    mins = np.zeros((len(batches), workload.n_layers))
    maxs = np.zeros((len(batches), workload.n_layers))
    for bi, batch in enumerate(batches):
        _, inputs = _forward_collect(workload, batch)
        mins[bi] = [t.min() for t in inputs]
        maxs[bi] = [t.max() for t in inputs]
    act_min = mins.mean(axis=0)
    act_max = maxs.mean(axis=0)

    ranges: list[tuple[float, float]] = []
    for li, layer in enumerate(workload.layers):
        ranges.append(_widen(float(layer.weights.min()), float(layer.weights.max())))
        ranges.append(_widen(float(act_min[li]), float(act_max[li])))
    return replace(workload, ranges=tuple(ranges))


def _widen(lo: float, hi: float) -> tuple[float, float]:
    if lo >= hi:
        return lo - DEGENERATE_RANGE_PAD, hi + DEGENERATE_RANGE_PAD
    return lo, hi


def _check_config(workload: Workload, bits: Sequence[int]) -> list[int]:
    config = [int(b) for b in bits]
    if len(config) != workload.quantizer_count:
        raise ValueError(
            f"bit config length {len(config)} does not match "
            f"{workload.quantizer_count} quantizers"
        )
    return config


def quantized_forward(workload: Workload, bits: Sequence[int], x) -> np.ndarray:
    """Class scores with simulated quantization of weights and activations."""
    if not workload.calibrated:
        raise ValueError("workload must be calibrated before quantized inference")
    config = _check_config(workload, bits)
    h = np.asarray(x, dtype=float)
    last = workload.n_layers - 1
    for i, layer in enumerate(workload.layers):
        wq = Quantizer(config[2 * i], *workload.ranges[2 * i])
        aq = Quantizer(config[2 * i + 1], *workload.ranges[2 * i + 1])
        h = _qdq(aq, h) @ _qdq(wq, layer.weights) + layer.bias
        if i != last:
            h = np.maximum(h, 0.0)
    return h


# -- objectives ---------------------------------------------------------------


def top_k_accuracy(scores: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Fraction of rows whose label ranks in the k best scores; equal
    scores rank lower class indices first."""
    order = np.argsort(-np.asarray(scores, dtype=float), axis=1, kind="stable")
    hits = np.any(order[:, :k] == np.asarray(labels).reshape(-1, 1), axis=1)
    return float(hits.mean())


def model_ratio(workload: Workload, bits: Sequence[int]) -> float:
    """Parameter-memory footprint relative to 32-bit storage."""
    config = _check_config(workload, bits)
    params = np.array([layer.param_count for layer in workload.layers], dtype=float)
    weight_bits = np.array([config[2 * i] for i in range(workload.n_layers)], dtype=float)
    return float(np.sum(params * weight_bits) / (32.0 * np.sum(params)))


def bitops_ratio(workload: Workload, bits: Sequence[int]) -> float:
    """Multiply-accumulate work weighted by operand precisions, relative to
    32x32-bit arithmetic."""
    config = _check_config(workload, bits)
    macs = np.array([layer.mac_count for layer in workload.layers], dtype=float)
    weight_bits = np.array([config[2 * i] for i in range(workload.n_layers)], dtype=float)
    act_bits = np.array([config[2 * i + 1] for i in range(workload.n_layers)], dtype=float)
    return float(np.sum(macs * weight_bits * act_bits) / (np.sum(macs) * 32.0 * 32.0))


def evaluate_objectives(
    workload: Workload,
    bits: Sequence[int],
    inputs,
    labels,
    top_k: int = 1,
) -> np.ndarray:
    """Minimization objectives (1 - top-k accuracy, memory ratio, bit-ops ratio)."""
    scores = quantized_forward(workload, bits, inputs)
    acc = top_k_accuracy(scores, labels, top_k)
    return np.array([1.0 - acc, model_ratio(workload, bits), bitops_ratio(workload, bits)])


# -- graph construction -------------------------------------------------------


def build_graph(workload: Workload) -> WorkloadGraph:
    """Encode the workload's quantizers as a sequential feature graph."""
    op_types = sorted({layer.op_type for layer in workload.layers})
    groups = sorted({layer.group_id for layer in workload.layers})
    op_index = {op: i for i, op in enumerate(op_types)}
    group_index = {g: i for i, g in enumerate(groups)}

    rows = []
    for layer in workload.layers:
        op_hot = np.zeros(len(op_types))
        op_hot[op_index[layer.op_type]] = 1.0
        group_hot = np.zeros(len(groups))
        group_hot[group_index[layer.group_id]] = 1.0
        # weight node, then its activation sibling
        rows.append(
            np.concatenate(
                [op_hot, [1.0, 2.0, math.log1p(layer.weights.size)], group_hot]
            )
        )
        rows.append(
            np.concatenate([op_hot, [0.0, 1.0, math.log1p(layer.in_dim)], group_hot])
        )
    features = np.array(rows)
    n = features.shape[0]
    edges = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    return WorkloadGraph(node_features=features, edges=edges)


# -- reference-network training ----------------------------------------------


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def train_reference(
    arch,
    dataset: Dataset,
    epochs: int = 60,
    rng: np.random.Generator | None = None,
    learning_rate: float = 0.1,
    batch_size: int = 64,
    target_accuracy: float = 0.9,
) -> Workload:
    """Train a dense classifier with plain SGD and freeze it as a workload.

    ``arch`` is either a named preset ("tiny", "small") or an explicit
    sequence of layer widths including input and output. Gradients are
    computed by hand (dense layers, ReLU, softmax cross-entropy). Raises
    TrainingError if the validation accuracy stays below
    ``target_accuracy`` after the epoch budget.
    """
    if isinstance(arch, str):
        try:
            dims = REFERENCE_ARCHS[arch]
        except KeyError:
            raise ValueError(f"unknown reference architecture {arch!r}") from None
        arch_name = arch
    else:
        dims = tuple(int(d) for d in arch)
        arch_name = "x".join(str(d) for d in dims)
    if len(dims) < 2:
        raise ValueError("architecture needs at least input and output widths")
    if dims[0] != dataset.n_features or dims[-1] != dataset.n_classes:
        raise ValueError(
            f"architecture {dims} does not fit data with {dataset.n_features} features "
            f"and {dataset.n_classes} classes"
        )
    rng = np.random.default_rng(0) if rng is None else rng

    weights = [
        rng.normal(0.0, math.sqrt(2.0 / din), size=(din, dout))
        for din, dout in zip(dims[:-1], dims[1:])
    ]
    biases = [np.zeros(dout) for dout in dims[1:]]
    n_layers = len(weights)

    x_train, y_train = dataset.train_x, dataset.train_y
    one_hot = np.eye(dims[-1])[y_train]

    for _ in range(epochs):
        order = rng.permutation(x_train.shape[0])
        for start in range(0, x_train.shape[0], batch_size):
            idx = order[start : start + batch_size]
            xb, yb = x_train[idx], one_hot[idx]

            acts = [xb]
            h = xb
            for li in range(n_layers):
                z = h @ weights[li] + biases[li]
                h = np.maximum(z, 0.0) if li != n_layers - 1 else z
                acts.append(h)

            grad = (_softmax_rows(acts[-1]) - yb) / xb.shape[0]
            for li in range(n_layers - 1, -1, -1):
                if li != n_layers - 1:
                    grad = grad * (acts[li + 1] > 0)
                g_w = acts[li].T @ grad
                g_b = grad.sum(axis=0)
                grad = grad @ weights[li].T
                weights[li] -= learning_rate * g_w
                biases[li] -= learning_rate * g_b

    layers = tuple(
        DenseLayer(weights=w, bias=b, group_id=_group_id(i, n_layers))
        for i, (w, b) in enumerate(zip(weights, biases))
    )
    workload = Workload(
        layers=layers,
        metadata={"arch": arch_name, "dataset_seed": DEFAULT_DATA_SEED},
    )
    val_scores = full_forward(workload, dataset.val_x)
    val_acc = top_k_accuracy(val_scores, dataset.val_y, 1)
    if val_acc < target_accuracy:
        raise TrainingError(
            f"reference network reached {val_acc:.3f} validation accuracy "
            f"after {epochs} epochs (target {target_accuracy:.2f}, arch {dims})"
        )
    workload.metadata["val_accuracy"] = val_acc
    return workload


def _group_id(layer_index: int, n_layers: int) -> int:
    if layer_index == 0:
        return 0
    if layer_index == n_layers - 1:
        return 2
    return 1


# -- serialization -------------------------------------------------------------


def workload_to_json(workload: Workload) -> dict:
    return {
        "format_version": WORKLOAD_FORMAT_VERSION,
        "layers": [
            {
                "op_type": layer.op_type,
                "shape": list(layer.weights.shape),
                "weights": layer.weights.tolist(),
                "bias": layer.bias.tolist(),
                "macs": layer.mac_count,
                "group_id": layer.group_id,
            }
            for layer in workload.layers
        ],
        "metadata": dict(workload.metadata),
    }


def workload_from_json(payload: dict) -> Workload:
    version = payload.get("format_version")
    if version != WORKLOAD_FORMAT_VERSION:
        raise ValueError(f"unsupported workload format version {version!r}")
    layers = []
    for blob in payload["layers"]:
        weights = np.array(blob["weights"], dtype=float)
        if list(weights.shape) != list(blob["shape"]):
            raise ValueError(f"stored shape {blob['shape']} mismatches weights {weights.shape}")
        layers.append(
            DenseLayer(
                weights=weights,
                bias=np.array(blob["bias"], dtype=float),
                group_id=int(blob["group_id"]),
                op_type=blob["op_type"],
            )
        )
    return Workload(layers=tuple(layers), metadata=dict(payload.get("metadata", {})))


def save_workload(workload: Workload, path) -> None:
    Path(path).write_text(json.dumps(workload_to_json(workload)))


def load_workload(path) -> Workload:
    return workload_from_json(json.loads(Path(path).read_text()))
