"""Forward-only graph neural network inference in numpy.

No gradients anywhere: these networks are trained by evolutionary weight
perturbation, so all that is needed is a deterministic forward pass. Two
architectures share a common head:

    graph stage (GCN convolution, or a graph U-Net with top-k pooling)
    -> SELU -> multi-head graph attention -> SELU -> linear -> SELU

The graph stage output width is ``graph_hidden`` (default 10), attention
reduces it to ``attention_out`` (default 8) by averaging its heads, and the
linear layer maps onto one logit per allowed bit width. Edges are treated
as undirected for message passing and every node gets a self loop.

Genomes are an architecture descriptor plus an ordered tuple of parameter
tensors whose shapes are fixed by the architecture; construction
shape-checks them so inference can never fail on a well-formed genome.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "GnnArchitecture",
    "GnnGenome",
    "random_gnn_genome",
    "selu",
    "normalized_adjacency",
    "gcn_forward",
    "gat_forward",
    "top_k_pool",
    "unpool",
    "graph_unet_forward",
    "gnn_infer",
    "genome_to_json",
    "genome_from_json",
    "save_genome",
    "load_genome",
]

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772
LEAKY_SLOPE = 0.2
GENOME_FORMAT_VERSION = 1

ARCH_KINDS = ("gcn", "graph_unet")


@dataclass(frozen=True)
class GnnArchitecture:
    """Shape contract for a genome: every parameter tensor is derived from
    these fields, so two genomes with equal architectures align tensor by
    tensor."""

    kind: str
    in_dim: int
    out_dim: int = 7
    graph_hidden: int = 10
    attention_out: int = 8
    attention_heads: int = 4
    unet_depth: int = 3
    pool_ratio: float = 0.5

    def __post_init__(self):
        if self.kind not in ARCH_KINDS:
            raise ValueError(f"unknown architecture kind {self.kind!r}")
        if min(self.in_dim, self.out_dim, self.graph_hidden, self.attention_out) < 1:
            raise ValueError("layer widths must be positive")
        if self.attention_heads < 1:
            raise ValueError("need at least one attention head")
        if self.kind == "graph_unet" and self.unet_depth < 1:
            raise ValueError("unet_depth must be >= 1")
        if not 0.0 < self.pool_ratio <= 1.0:
            raise ValueError("pool_ratio must lie in (0, 1]")

    def parameter_spec(self) -> tuple[tuple[str, tuple[int, ...], int], ...]:
        """Ordered (name, shape, fan_in) triples for every tensor."""
        spec: list[tuple[str, tuple[int, ...], int]] = []
        h = self.graph_hidden
        if self.kind == "gcn":
            spec.append(("graph_weight", (self.in_dim, h), self.in_dim))
        else:
            for level in range(self.unet_depth):
                width_in = self.in_dim if level == 0 else h
                spec.append((f"encoder_weight_{level}", (width_in, h), width_in))
            for level in range(self.unet_depth):
                spec.append((f"pool_projection_{level}", (h,), h))
            for level in range(self.unet_depth):
                spec.append((f"decoder_weight_{level}", (h, h), h))
        a = self.attention_out
        spec.append(("attention_weight", (self.attention_heads, h, a), h))
        spec.append(("attention_vector", (self.attention_heads, 2 * a), 2 * a))
        spec.append(("linear_weight", (a, self.out_dim), a))
        spec.append(("linear_bias", (self.out_dim,), a))
        return tuple(spec)


@dataclass(frozen=True)
class GnnGenome:
    """Architecture plus its ordered parameter tensors (immutable)."""

    arch: GnnArchitecture
    params: tuple[np.ndarray, ...]

    def __post_init__(self):
        spec = self.arch.parameter_spec()
        if len(self.params) != len(spec):
            raise ValueError(f"expected {len(spec)} tensors, got {len(self.params)}")
        frozen = []
        for tensor, (name, shape, _) in zip(self.params, spec):
            arr = np.array(tensor, dtype=float)
            if arr.shape != shape:
                raise ValueError(f"tensor {name!r} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "params", tuple(frozen))

    def named_params(self):
        for tensor, (name, _, _) in zip(self.params, self.arch.parameter_spec()):
            yield name, tensor


def random_gnn_genome(arch: GnnArchitecture, rng: np.random.Generator) -> GnnGenome:
    """Draw every tensor uniformly in +-1/sqrt(fan_in)."""
    params = []
    for _, shape, fan_in in arch.parameter_spec():
        scale = 1.0 / np.sqrt(fan_in)
        params.append(rng.uniform(-scale, scale, size=shape))
    return GnnGenome(arch=arch, params=tuple(params))


# -- elementwise pieces ----------------------------------------------------


def selu(x: np.ndarray) -> np.ndarray:
    """Scaled exponential linear unit with the canonical constants."""
    x = np.asarray(x, dtype=float)
    return SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _masked_softmax_rows(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the True positions of ``mask``; stable for
    large logits. Rows must have at least one allowed position."""
    shifted = np.where(mask, logits, -np.inf)
    peak = shifted.max(axis=1, keepdims=True)
    ex = np.exp(shifted - peak)
    ex[~mask] = 0.0
    return ex / ex.sum(axis=1, keepdims=True)


# -- message passing -------------------------------------------------------


def _edge_array(edges) -> np.ndarray:
    e = np.asarray(edges, dtype=int)
    if e.size == 0:
        return e.reshape(0, 2)
    if e.ndim != 2 or e.shape[1] != 2:
        raise ValueError(f"edges must be an (m, 2) array, got shape {e.shape}")
    return e


def _adjacency(n_nodes: int, edges) -> np.ndarray:
    """Undirected adjacency with self loops as a dense boolean matrix."""
    adj = np.eye(n_nodes, dtype=bool)
    e = _edge_array(edges)
    if e.size:
        adj[e[:, 0], e[:, 1]] = True
        adj[e[:, 1], e[:, 0]] = True
    return adj


def normalized_adjacency(n_nodes: int, edges) -> np.ndarray:
    """Symmetrically normalized adjacency ``D^-1/2 (A + I) D^-1/2``."""
    adj = _adjacency(n_nodes, edges).astype(float)
    inv_sqrt_deg = 1.0 / np.sqrt(adj.sum(axis=1))
    return adj * inv_sqrt_deg[:, None] * inv_sqrt_deg[None, :]


def gcn_forward(weight: np.ndarray, features: np.ndarray, edges) -> np.ndarray:
    """One graph convolution: normalized neighborhood average, then a
    linear map. Output shape is (nodes, weight columns)."""
    features = np.asarray(features, dtype=float)
    weight = np.asarray(weight, dtype=float)
    if features.shape[1] != weight.shape[0]:
        raise ValueError(
            f"feature width {features.shape[1]} does not match weight input {weight.shape[0]}"
        )
    return normalized_adjacency(features.shape[0], edges) @ features @ weight


def gat_forward(
    attention_weight: np.ndarray,
    attention_vector: np.ndarray,
    features: np.ndarray,
    edges,
) -> np.ndarray:
    """Multi-head graph attention, heads averaged.

    Per head, node i attends over its neighbors plus itself with logits
    ``leaky_relu(a . [W h_i || W h_j])``; the softmax-normalized weights mix
    the transformed neighbor features. Attention rows sum to 1 by
    construction.
    """
    features = np.asarray(features, dtype=float)
    w = np.asarray(attention_weight, dtype=float)
    a = np.asarray(attention_vector, dtype=float)
    if w.ndim != 3 or a.ndim != 2 or w.shape[0] != a.shape[0]:
        raise ValueError("attention tensors must stack one slice per head")
    heads, _, out_dim = w.shape
    if a.shape[1] != 2 * out_dim:
        raise ValueError(f"attention vector width {a.shape[1]} must be {2 * out_dim}")
    if features.shape[1] != w.shape[1]:
        raise ValueError(
            f"feature width {features.shape[1]} does not match attention input {w.shape[1]}"
        )
    mask = _adjacency(features.shape[0], edges)
    accum = np.zeros((features.shape[0], out_dim))
    for head in range(heads):
        transformed = features @ w[head]  # (n, out)
        src = transformed @ a[head, :out_dim]
        dst = transformed @ a[head, out_dim:]
        logits = src[:, None] + dst[None, :]
        logits = np.where(logits > 0, logits, LEAKY_SLOPE * logits)
        alpha = _masked_softmax_rows(logits, mask)
        accum += alpha @ transformed
    return accum / heads


# -- graph U-Net -----------------------------------------------------------


def top_k_pool(
    features: np.ndarray, edges, projection: np.ndarray, ratio: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Keep the ceil(ratio * n) highest-scoring nodes (never fewer than 1).

    Scores are the projection of each node feature onto the learned
    direction; kept features are gated by the sigmoid of their score. The
    returned edges are the induced subgraph relabeled onto the kept nodes,
    and ``kept`` holds the original indices in ascending order.
    """
    features = np.asarray(features, dtype=float)
    p = np.asarray(projection, dtype=float)
    n = features.shape[0]
    scores = features @ p / max(float(np.linalg.norm(p)), 1e-12)
    keep = max(1, int(np.ceil(ratio * n)))
    kept = np.sort(np.argsort(-scores, kind="stable")[:keep])
    gated = features[kept] * _sigmoid(scores[kept])[:, None]
    e = _edge_array(edges)
    if e.size:
        kept_mask = np.zeros(n, dtype=bool)
        kept_mask[kept] = True
        relabel = np.cumsum(kept_mask) - 1
        inside = kept_mask[e[:, 0]] & kept_mask[e[:, 1]]
        sub_edges = relabel[e[inside]]
    else:
        sub_edges = e
    return gated, sub_edges, kept


def unpool(features: np.ndarray, kept: np.ndarray, n_nodes: int) -> np.ndarray:
    """Scatter pooled rows back to their original indices, zeros elsewhere."""
    out = np.zeros((n_nodes, features.shape[1]))
    out[kept] = features
    return out


def graph_unet_forward(
    params: tuple[np.ndarray, ...],
    features: np.ndarray,
    edges,
    depth: int,
    pool_ratio: float = 0.5,
) -> np.ndarray:
    """Encoder-decoder over the graph with top-k pooling.

    Each encoder level convolves and pools; the decoder unpools back level
    by level, adds the matching encoder output as a skip connection, and
    convolves again, so the output keeps the input's node count. ``params``
    is laid out as depth encoder weights, depth pool projections, then
    depth decoder weights.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    enc_w = params[:depth]
    proj = params[depth : 2 * depth]
    dec_w = params[2 * depth : 3 * depth]

    x = np.asarray(features, dtype=float)
    level_edges = [_edge_array(edges)]
    skips: list[np.ndarray] = []
    kept_stack: list[np.ndarray] = []
    for level in range(depth):
        h = gcn_forward(enc_w[level], x, level_edges[-1])
        skips.append(h)
        x, sub_edges, kept = top_k_pool(h, level_edges[-1], proj[level], pool_ratio)
        level_edges.append(sub_edges)
        kept_stack.append(kept)

    for level in range(depth - 1, -1, -1):
        restored = unpool(x, kept_stack[level], skips[level].shape[0])
        x = gcn_forward(dec_w[level], restored + skips[level], level_edges[level])
    return x


# -- whole-network inference -----------------------------------------------


def gnn_infer(genome: GnnGenome, graph) -> np.ndarray:
    """Run the full network over a workload graph.

    ``graph`` provides ``node_features`` (n, in_dim) and ``edges`` (m, 2).
    Returns one logit row per node, one column per allowed bit width.
    """
    arch = genome.arch
    features = np.asarray(graph.node_features, dtype=float)
    edges = graph.edges
    if features.shape[1] != arch.in_dim:
        raise ValueError(
            f"graph feature width {features.shape[1]} does not match architecture "
            f"input {arch.in_dim}"
        )
    params = genome.params
    if arch.kind == "gcn":
        x = gcn_forward(params[0], features, edges)
        head = params[1:]
    else:
        x = graph_unet_forward(
            params[: 3 * arch.unet_depth], features, edges, arch.unet_depth, arch.pool_ratio
        )
        head = params[3 * arch.unet_depth :]
    att_w, att_a, lin_w, lin_b = head
    x = selu(x)
    x = gat_forward(att_w, att_a, x, edges)
    x = selu(x)
    x = x @ lin_w + lin_b
    return selu(x)


# -- serialization ----------------------------------------------------------


def genome_to_json(genome: GnnGenome) -> dict:
    return {
        "format_version": GENOME_FORMAT_VERSION,
        "arch": asdict(genome.arch),
        "params": {
            name: {"shape": list(tensor.shape), "data": tensor.ravel().tolist()}
            for name, tensor in genome.named_params()
        },
    }


def genome_from_json(payload: dict) -> GnnGenome:
    version = payload.get("format_version")
    if version != GENOME_FORMAT_VERSION:
        raise ValueError(f"unsupported genome format version {version!r}")
    arch = GnnArchitecture(**payload["arch"])
    params = []
    for name, _, _ in arch.parameter_spec():
        blob = payload["params"][name]
        params.append(np.array(blob["data"], dtype=float).reshape(blob["shape"]))
    return GnnGenome(arch=arch, params=tuple(params))


def save_genome(genome: GnnGenome, path) -> None:
    Path(path).write_text(json.dumps(genome_to_json(genome)))


def load_genome(path) -> GnnGenome:
    return genome_from_json(json.loads(Path(path).read_text()))
