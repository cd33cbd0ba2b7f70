"""Graph-attention noise predictor over flat articulation vectors.

The vector is split into per-slot node blocks and per-pair edge
blocks.  Shared linear heads encode both, concatenated with a
sinusoidal encoding of the slot id (nodes only) and of the diffusion
step.  Each graph layer computes directed edge messages with a shared
MLP, aggregates them per node with dot-product attention over the
other nodes, fuses in a max-pooled global vector, and keeps the
message in stored (i < j) direction as the next edge feature.  Output
heads decode the concatenation of the raw attributes and every layer's
features back to per-channel noise estimates.

All parameters live in a flat ``dict[str, ndarray]``; the forward pass
is built on the autodiff tape, so gradients are exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad


@dataclass(frozen=True)
class DenoiserConfig:
    """Shape and width settings of the noise predictor."""

    n_slots: int
    node_dim: int
    edge_dim: int
    hidden: int = 128
    layers: int = 4
    time_width: int = 16
    pe_width: int = 8
    attention_scaled: bool = False
    activation_slope: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if min(self.n_slots, self.node_dim, self.edge_dim) < 1:
            raise ValueError("graph dimensions must be positive")
        if min(self.hidden, self.layers, self.time_width, self.pe_width) < 1:
            raise ValueError("widths and layer count must be positive")
        if self.time_width % 2 or self.pe_width % 2:
            raise ValueError("encoding widths must be even")

    @property
    def n_edges(self) -> int:
        return self.n_slots * (self.n_slots - 1) // 2

    @property
    def flat_dim(self) -> int:
        return self.n_slots * self.node_dim + self.n_edges * self.edge_dim

    @property
    def node_feat_width(self) -> int:
        """Width of the encoded node features entering layer 0."""
        return self.hidden + self.pe_width + self.time_width

    @property
    def edge_feat_width(self) -> int:
        return self.hidden + self.time_width

    def layer_widths(self, layer: int) -> tuple[int, int]:
        """(node, edge) feature widths entering the given layer."""
        if layer == 0:
            return self.node_feat_width, self.edge_feat_width
        return self.hidden, self.hidden

    def to_dict(self) -> dict:
        return {
            "n_slots": self.n_slots,
            "node_dim": self.node_dim,
            "edge_dim": self.edge_dim,
            "hidden": self.hidden,
            "layers": self.layers,
            "time_width": self.time_width,
            "pe_width": self.pe_width,
            "attention_scaled": self.attention_scaled,
            "activation_slope": self.activation_slope,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        return cls(**d)


def sinusoidal_encoding(pos: float, width: int) -> np.ndarray:
    """Interleaved sin/cos features of a scalar position."""
    freqs = np.power(10000.0, -np.arange(width // 2) * 2.0 / width)
    angles = pos * freqs
    enc = np.empty(width)
    enc[0::2] = np.sin(angles)
    enc[1::2] = np.cos(angles)
    return enc


@lru_cache(maxsize=None)
def _directed_indices(n_slots: int):
    """Index arrays for the directed (receiver, sender) pair ordering.

    Rows are receiver-major with senders ascending; ``pair`` maps each
    row to the stored unordered edge and ``stored`` picks the rows
    whose receiver is the lower index (the kept edge direction).
    ``flat`` addresses the same rows inside a flattened K x K matrix.
    """
    recv, send = [], []
    for v in range(n_slots):
        for u in range(n_slots):
            if u != v:
                recv.append(v)
                send.append(u)
    recv = np.array(recv)
    send = np.array(send)
    lo = np.minimum(recv, send)
    hi = np.maximum(recv, send)
    pair = lo * (2 * n_slots - lo - 1) // 2 + (hi - lo - 1)
    stored = np.nonzero(recv < send)[0]
    flat = recv * n_slots + send
    return recv, send, pair, stored, flat


# ----------------------------------------------------------------------
# parameters


def _param_shapes(config: DenoiserConfig) -> list[tuple[str, tuple[int, ...]]]:
    h = config.hidden
    shapes = [
        ("node_in.W", (config.node_dim, h)),
        ("node_in.b", (h,)),
        ("edge_in.W", (config.edge_dim, h)),
        ("edge_in.b", (h,)),
    ]
    for layer in range(config.layers):
        a, b = config.layer_widths(layer)
        p = f"layer{layer}"
        shapes += [
            (f"{p}.edge_mlp.W0", (2 * a + b, h)),
            (f"{p}.edge_mlp.b0", (h,)),
            (f"{p}.edge_mlp.W1", (h, h)),
            (f"{p}.edge_mlp.b1", (h,)),
            (f"{p}.edge_mlp.W2", (h, h)),
            (f"{p}.edge_mlp.b2", (h,)),
            (f"{p}.query.W", (a, h)),
            (f"{p}.query.b", (h,)),
            # the key projection carries no bias: adding one shifts every
            # logit in a softmax row by the same amount, which cancels
            (f"{p}.key.W", (a, h)),
            (f"{p}.fuse.W", (2 * h, h)),
            (f"{p}.fuse.b", (h,)),
        ]
    node_cat = config.node_dim + config.node_feat_width + config.layers * h
    edge_cat = config.edge_dim + config.edge_feat_width + config.layers * h
    shapes += [
        ("node_out.W", (node_cat, config.node_dim)),
        ("node_out.b", (config.node_dim,)),
        ("edge_out.W", (edge_cat, config.edge_dim)),
        ("edge_out.b", (config.edge_dim,)),
    ]
    return shapes


def init_params(
    config: DenoiserConfig, rng: np.random.Generator | None = None
) -> dict[str, np.ndarray]:
    """Fan-in-scaled uniform weights, zero biases; deterministic given seed."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in _param_shapes(config):
        if len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            lim = np.sqrt(3.0 / shape[0])
            params[name] = rng.uniform(-lim, lim, size=shape)
    return params


def param_count(config: DenoiserConfig) -> int:
    """Closed-form parameter count of the declared layout."""
    h = config.hidden
    dv, de = config.node_dim, config.edge_dim
    total = (dv + 1) * h + (de + 1) * h
    for layer in range(config.layers):
        a, b = config.layer_widths(layer)
        total += (2 * a + b + 1) * h          # edge MLP input layer
        total += 2 * ((h + 1) * h)            # edge MLP hidden + output
        total += (a + 1) * h + a * h          # query (biased) and key projections
        total += (2 * h + 1) * h              # global fuse
    node_cat = dv + config.node_feat_width + config.layers * h
    edge_cat = de + config.edge_feat_width + config.layers * h
    total += (node_cat + 1) * dv + (edge_cat + 1) * de
    return total


def _check_params(params: dict[str, np.ndarray], config: DenoiserConfig) -> None:
    for name, shape in _param_shapes(config):
        if name not in params:
            raise ValueError(f"missing parameter {name}")
        if params[name].shape != shape:
            raise ValueError(
                f"parameter {name} has shape {params[name].shape}, expected {shape}"
            )
        if not np.all(np.isfinite(params[name])):
            raise ValueError(f"parameter {name} contains NaN or Inf")


# ----------------------------------------------------------------------
# forward tape


def _linear(pt, name: str, x: ad.Tensor) -> ad.Tensor:
    return ad.add_bias(ad.matmul(x, pt[f"{name}.W"]), pt[f"{name}.b"])


def _edge_mlp(pt, prefix: str, x: ad.Tensor, slope: float) -> ad.Tensor:
    h = ad.leaky_relu(ad.add_bias(ad.matmul(x, pt[f"{prefix}.W0"]), pt[f"{prefix}.b0"]), slope)
    h = ad.leaky_relu(ad.add_bias(ad.matmul(h, pt[f"{prefix}.W1"]), pt[f"{prefix}.b1"]), slope)
    return ad.add_bias(ad.matmul(h, pt[f"{prefix}.W2"]), pt[f"{prefix}.b2"])


def _encode_tape(pt, config: DenoiserConfig, x_t: np.ndarray, t: int):
    k, dv = config.n_slots, config.node_dim
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape != (config.flat_dim,):
        raise ValueError(
            f"expected input of length {config.flat_dim}, got {x_t.shape}"
        )
    nodes = ad.constant(x_t[: k * dv].reshape(k, dv))
    edges = ad.constant(x_t[k * dv :].reshape(config.n_edges, config.edge_dim))
    pe = np.stack([sinusoidal_encoding(i, config.pe_width) for i in range(k)])
    te = sinusoidal_encoding(float(t), config.time_width)
    te_nodes = ad.constant(np.tile(te, (k, 1)))
    te_edges = ad.constant(np.tile(te, (config.n_edges, 1)))
    f0 = ad.concat_cols([_linear(pt, "node_in", nodes), ad.constant(pe), te_nodes])
    g0 = ad.concat_cols([_linear(pt, "edge_in", edges), te_edges])
    return nodes, edges, f0, g0


def _layer_tape(pt, config: DenoiserConfig, layer: int, f: ad.Tensor, g: ad.Tensor):
    """One graph layer; returns (fused nodes, stored edges, attention, messages)."""
    recv, send, pair, stored, flat = _directed_indices(config.n_slots)
    prefix = f"layer{layer}"
    slope = config.activation_slope
    msg_in = ad.concat_cols(
        [ad.take_rows(f, recv), ad.take_rows(f, send), ad.take_rows(g, pair)]
    )
    messages = _edge_mlp(pt, f"{prefix}.edge_mlp", msg_in, slope)
    g_next = ad.take_rows(messages, stored)
    q = _linear(pt, f"{prefix}.query", f)
    key = ad.matmul(f, pt[f"{prefix}.key.W"])
    logits = ad.take_rows(ad.reshape(ad.matmul_nt(q, key), (-1,)), flat)
    logits = ad.reshape(logits, (config.n_slots, config.n_slots - 1))
    if config.attention_scaled:
        logits = ad.scale(logits, 1.0 / np.sqrt(config.hidden))
    weights = ad.softmax_rows(logits)
    weighted = ad.col_scale(messages, ad.reshape(weights, (-1,)))
    attention = ad.segment_sum_rows(weighted, config.n_slots)
    pooled = ad.tile_rows(ad.max_rows(attention), config.n_slots)
    f_next = _linear(pt, f"{prefix}.fuse", ad.concat_cols([attention, pooled]))
    return f_next, g_next, attention, messages


def _forward_tape(pt, config: DenoiserConfig, x_t: np.ndarray, t: int) -> ad.Tensor:
    nodes, edges, f, g = _encode_tape(pt, config, x_t, t)
    node_feats = [nodes, f]
    edge_feats = [edges, g]
    for layer in range(config.layers):
        f, g, _, _ = _layer_tape(pt, config, layer, f, g)
        node_feats.append(f)
        edge_feats.append(g)
    eps_nodes = _linear(pt, "node_out", ad.concat_cols(node_feats))
    eps_edges = _linear(pt, "edge_out", ad.concat_cols(edge_feats))
    return ad.concat_flat([ad.reshape(eps_nodes, (-1,)), ad.reshape(eps_edges, (-1,))])


def _wrap(params: dict[str, np.ndarray]) -> dict[str, ad.Tensor]:
    return {name: ad.Tensor(value) for name, value in params.items()}


def forward(
    params: dict[str, np.ndarray],
    config: DenoiserConfig,
    x_t: np.ndarray,
    t: int,
) -> np.ndarray:
    """Predict the per-channel noise for one flat vector at step t."""
    _check_params(params, config)
    return _forward_tape(_wrap(params), config, x_t, t).data


def encode_inputs(
    params: dict[str, np.ndarray],
    config: DenoiserConfig,
    x_t: np.ndarray,
    t: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Encoded node and edge features entering the first graph layer."""
    _, _, f0, g0 = _encode_tape(_wrap(params), config, x_t, t)
    return f0.data, g0.data


@dataclass(eq=False)
class LayerResult:
    nodes: np.ndarray
    edges: np.ndarray
    attention: np.ndarray
    messages: np.ndarray


def graph_layer(
    params: dict[str, np.ndarray],
    config: DenoiserConfig,
    layer: int,
    node_feats: np.ndarray,
    edge_feats: np.ndarray,
) -> LayerResult:
    """Run one graph layer on explicit features (inspection helper)."""
    pt = _wrap(params)
    f, g, attention, messages = _layer_tape(
        pt, config, layer, ad.constant(node_feats), ad.constant(edge_feats)
    )
    return LayerResult(
        nodes=f.data, edges=g.data, attention=attention.data, messages=messages.data
    )


def loss_and_grads(
    params: dict[str, np.ndarray],
    config: DenoiserConfig,
    x_t_batch: np.ndarray,
    t_batch: np.ndarray,
    eps_batch: np.ndarray,
    weights: np.ndarray | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Batch-mean noise-matching loss and exact parameter gradients.

    Per sample the loss is the squared L2 norm of the residual, scaled
    by the matching entry of ``weights`` when given.
    """
    _check_params(params, config)
    pt = _wrap(params)
    x_t_batch = np.atleast_2d(np.asarray(x_t_batch, dtype=float))
    eps_batch = np.atleast_2d(np.asarray(eps_batch, dtype=float))
    t_batch = np.atleast_1d(np.asarray(t_batch, dtype=int))
    n = x_t_batch.shape[0]
    if eps_batch.shape != x_t_batch.shape or t_batch.shape != (n,):
        raise ValueError("batch shapes do not line up")
    total = None
    for i in range(n):
        eps_hat = _forward_tape(pt, config, x_t_batch[i], int(t_batch[i]))
        resid = ad.sub(eps_hat, ad.constant(eps_batch[i]))
        term = ad.sum_all(ad.mul(resid, resid))
        if weights is not None:
            term = ad.scale(term, float(weights[i]))
        total = term if total is None else ad.add(total, term)
    total = ad.scale(total, 1.0 / n)
    ad.backward(total)
    grads = {
        name: (pt[name].grad if pt[name].grad is not None else np.zeros_like(value))
        for name, value in params.items()
    }
    return float(total.data), grads


class GraphDenoiser:
    """Callable wrapper matching the sampler's (x, t) -> eps interface."""

    def __init__(self, config: DenoiserConfig, params: dict[str, np.ndarray]):
        _check_params(params, config)
        self.config = config
        self.params = params

    def __call__(self, x_t: np.ndarray, t: int) -> np.ndarray:
        return _forward_tape(_wrap(self.params), self.config, x_t, t).data


# ----------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    """First/second moment accumulators with a shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            step=0,
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected moment update, applied to params in place."""
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    for name, p in params.items():
        g = grads[name]
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
