"""Vertex encoder (multi-head self-attention) and graph encoder (GCN)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import PAD, Vocab
from .topic_graph import KIND_KEYWORD, TopicGraph, Vertex


@dataclass(frozen=True)
class VertexEncoderConfig:
    embed_dim: int = 128
    heads: int = 4
    layers: int = 2
    # position 0 is reserved for prepended keywords; regular words start at 1,
    # so a 100-token title needs 101 position slots.
    max_positions: int = 101
    scaled_scores: bool = True

    def __post_init__(self):
        if self.embed_dim % self.heads != 0:
            raise ValueError(
                f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads


@dataclass(frozen=True)
class GcnConfig:
    layers: int = 1
    hidden_dim: int = 128
    activation: str = "relu"
    pooling: str = "title"  # decoder init state: title vertex row, max or mean

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError(f"gcn layers must be >= 1, got {self.layers}")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation: {self.activation!r}")
        if self.pooling not in ("title", "max", "mean"):
            raise ValueError(f"unknown pooling: {self.pooling!r}")


@dataclass
class GraphEncoding:
    """Per-vertex outputs of the graph encoder plus the decoder init vector."""

    g_out: Tensor  # N x d
    t0: Tensor     # 1 x d
    title_index: int


def _glorot(rng, shape):
    std = math.sqrt(2.0 / (shape[0] + shape[1]))
    return rng.normal(0.0, std, size=shape)


def init_encoder_params(rng, vocab_size: int, vcfg: VertexEncoderConfig,
                        gcfg: GcnConfig, dtype=np.float64) -> dict[str, Tensor]:
    if gcfg.hidden_dim != vcfg.embed_dim:
        raise ValueError(
            f"gcn hidden_dim {gcfg.hidden_dim} must match embed_dim {vcfg.embed_dim}"
            " for residual connections")
    d, dh = vcfg.embed_dim, vcfg.head_dim
    params: dict[str, Tensor] = {}

    def param(name, array):
        params[name] = Tensor(array.astype(dtype), requires_grad=True, name=name)

    param("embed.word", rng.normal(0.0, 0.1, size=(vocab_size, d)))
    param("embed.pos", rng.normal(0.0, 0.1, size=(vcfg.max_positions, d)))
    for layer in range(vcfg.layers):
        for head in range(vcfg.heads):
            for proj in ("Wq", "Wk", "Wv"):
                param(f"sa.{layer}.{head}.{proj}", _glorot(rng, (d, dh)))
        param(f"sa.{layer}.Wo", _glorot(rng, (d, d)))
    for layer in range(gcfg.layers):
        param(f"gcn.{layer}.W", _glorot(rng, (d, d)))
    param("gcn.Wo", _glorot(rng, (d, d)))
    return params


def vertex_token_ids(v: Vertex, vocab: Vocab) -> list[int]:
    # A vertex is never token-empty in practice; PAD keeps the encoder total.
    if not v.tokens:
        return [PAD]
    return [vocab.encode(t) for t in v.tokens]


def vertex_positions(v: Vertex) -> list[int]:
    n = max(len(v.tokens), 1)
    if v.kind == KIND_KEYWORD:
        return list(range(n))        # keyword slot at position 0
    return list(range(1, n + 1))     # Title/Empty hold regular words only


def embed_vertex(v: Vertex, vocab: Vocab, params, cfg: VertexEncoderConfig,
                 dropout_rate: float = 0.0, train: bool = False) -> Tensor:
    """Word plus positional embeddings for one vertex, L x d."""
    ids = vertex_token_ids(v, vocab)
    pos = vertex_positions(v)
    if max(pos) >= cfg.max_positions:
        raise ValueError(
            f"vertex of {len(ids)} tokens exceeds max_positions {cfg.max_positions}")
    x = ad.row_gather(params["embed.word"], ids) + ad.row_gather(params["embed.pos"], pos)
    return ad.dropout(x, dropout_rate, train)


def self_attention_stack(x: Tensor, params, cfg: VertexEncoderConfig,
                         dropout_rate: float = 0.0, train: bool = False) -> Tensor:
    """Stacked multi-head self-attention; Q = K = V = previous layer output.

    No feed-forward sublayer and no layer norm; per-head scores optionally
    divided by sqrt(head_dim).
    """
    scale = 1.0 / math.sqrt(cfg.head_dim)
    for layer in range(cfg.layers):
        heads = []
        for head in range(cfg.heads):
            q = x @ params[f"sa.{layer}.{head}.Wq"]
            k = x @ params[f"sa.{layer}.{head}.Wk"]
            v = x @ params[f"sa.{layer}.{head}.Wv"]
            scores = q @ k.T
            if cfg.scaled_scores:
                scores = scores * scale
            heads.append(ad.softmax(scores) @ v)
        x = ad.concat(heads, axis=1) @ params[f"sa.{layer}.Wo"]
        x = ad.dropout(x, dropout_rate, train)
    return x


def vertex_encode(v: Vertex, vocab: Vocab, params, cfg: VertexEncoderConfig,
                  dropout_rate: float = 0.0, train: bool = False) -> Tensor:
    """One vector per vertex: the keyword-slot (row 0) output of the stack."""
    x = embed_vertex(v, vocab, params, cfg, dropout_rate, train)
    x = self_attention_stack(x, params, cfg, dropout_rate, train)
    return ad.row_gather(x, [0])


def encode_vertices(graph: TopicGraph, vocab: Vocab, params,
                    cfg: VertexEncoderConfig, dropout_rate: float = 0.0,
                    train: bool = False) -> Tensor:
    rows = [vertex_encode(v, vocab, params, cfg, dropout_rate, train)
            for v in graph.vertices]
    return rows[0] if len(rows) == 1 else ad.concat(rows, axis=0)


def graph_encode(v_mat: Tensor, a_hat: np.ndarray, title_index: int, params,
                 cfg: GcnConfig) -> GraphEncoding:
    """Graph convolution with residuals and a tanh output feed-forward.

    H0 = V; H_{l+1} = act(A_hat @ H_l @ W_l); g_{l+1} = H_{l+1} + H_l;
    g_out = tanh(g_K @ Wo); t0 is the title row (or a max/mean pool).
    """
    n = v_mat.shape[0]
    if a_hat.shape != (n, n):
        raise ad.ShapeError(
            f"adjacency shape {a_hat.shape} does not match vertex count {n}")
    act = ad.relu if cfg.activation == "relu" else ad.tanh
    a_hat_t = Tensor(a_hat)
    h = v_mat
    for layer in range(cfg.layers):
        h_next = act(a_hat_t @ h @ params[f"gcn.{layer}.W"])
        h = h_next + h
    g_out = ad.tanh(h @ params["gcn.Wo"])
    if cfg.pooling == "title":
        t0 = ad.row_gather(g_out, [title_index])
    elif cfg.pooling == "max":
        t0 = ad.reduce_max(g_out, axis=0, keepdims=True)
    else:
        t0 = ad.reduce_mean(g_out, axis=0, keepdims=True)
    return GraphEncoding(g_out=g_out, t0=t0, title_index=title_index)
