"""Full graph-to-sequence model: configuration snapshot and end-to-end passes."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import decoder as dec
from .autodiff import Tensor
from .corpus import BOS, EOS, Vocab
from .decoder import CopyMap, DecoderConfig
from .encoders import (GcnConfig, GraphEncoding, VertexEncoderConfig,
                       encode_vertices, graph_encode, init_encoder_params)
from .topic_graph import TopicGraph, normalized_adjacency


@dataclass(frozen=True)
class Hyperparams:
    """Default experiment configuration; every field is a tuned default.

    hidden_size applies to the recurrent components (the decoder LSTM here);
    bidirectional_rnn_encoders records the setting used whenever an RNN
    encoder variant is configured, which the graph encoder path does not use.
    """

    batch_size: int = 32
    embed_dim: int = 128
    shared_embeddings: bool = True
    gcn_layers: int = 1
    bidirectional_rnn_encoders: bool = True
    hidden_size: int = 128
    vocab_size: int = 60000
    max_vertex_tokens: int = 100
    max_gen_len: int = 32
    attention_heads: int = 4
    self_attention_layers: int = 2
    decoder_layers: int = 2
    dropout: float = 0.1
    learning_rate: float = 0.0005
    epochs: int = 5
    lr_decay: float = 0.5
    scaled_attention: bool = True
    gcn_activation: str = "relu"
    pooling: str = "title"
    attention_form: str = "bilinear"

    def vertex_encoder_config(self) -> VertexEncoderConfig:
        return VertexEncoderConfig(
            embed_dim=self.embed_dim,
            heads=self.attention_heads,
            layers=self.self_attention_layers,
            max_positions=self.max_vertex_tokens + 1,
            scaled_scores=self.scaled_attention,
        )

    def gcn_config(self) -> GcnConfig:
        return GcnConfig(layers=self.gcn_layers, hidden_dim=self.hidden_size,
                         activation=self.gcn_activation, pooling=self.pooling)

    def decoder_config(self, beam_size: int = 1) -> DecoderConfig:
        return DecoderConfig(hidden_dim=self.hidden_size,
                             rnn_layers=self.decoder_layers,
                             max_len=self.max_gen_len, beam_size=beam_size,
                             attention=self.attention_form)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(**d)


@dataclass
class GraphForward:
    """Cached per-graph pieces shared by loss and generation."""

    encoding: GraphEncoding
    copymap: CopyMap


class CommentModel:
    """Owns the parameter set and the encode/train/generate entry points."""

    def __init__(self, vocab: Vocab, hp: Hyperparams = Hyperparams(),
                 seed: int = 0, dtype=np.float64):
        self.vocab = vocab
        self.hp = hp
        self.dtype = dtype
        self.vcfg = hp.vertex_encoder_config()
        self.gcfg = hp.gcn_config()
        self.dcfg = hp.decoder_config()
        rng = np.random.default_rng(seed)
        self.params: dict[str, Tensor] = {}
        self.params.update(init_encoder_params(rng, len(vocab), self.vcfg,
                                               self.gcfg, dtype=dtype))
        self.params.update(dec.init_decoder_params(rng, hp.embed_dim, len(vocab),
                                                   self.dcfg, dtype=dtype))

    def param_names(self) -> list[str]:
        return sorted(self.params)

    def zero_grads(self):
        for p in self.params.values():
            p.zero_grad()

    def gradients(self) -> dict[str, np.ndarray]:
        """Gradients by name; parameters untouched by backward get zeros."""
        return {name: (np.zeros_like(p.data) if p.grad is None else p.grad)
                for name, p in self.params.items()}

    def encode_graph(self, graph: TopicGraph, train: bool = False) -> GraphForward:
        rate = self.hp.dropout if train else 0.0
        v_mat = encode_vertices(graph, self.vocab, self.params, self.vcfg,
                                dropout_rate=rate, train=train)
        a_hat = normalized_adjacency(graph)
        encoding = graph_encode(v_mat, a_hat, graph.title_index, self.params, self.gcfg)
        return GraphForward(encoding, dec.build_copy_map(graph, self.vocab))

    def teacher_forced_steps(self, fwd: GraphForward, target_ids, train: bool = False):
        """Run the decoder over BOS + targets, returning one output per target."""
        rate = self.hp.dropout if train else 0.0
        state = dec.initial_state(fwd.encoding, self.dcfg)
        steps = []
        prev = BOS
        for tid in target_ids:
            out, state = dec.decode_step(state, prev, fwd.encoding, fwd.copymap,
                                         self.params, self.dcfg,
                                         dropout_rate=rate, train=train)
            steps.append(out)
            prev = int(tid)
        return steps

    def target_ids(self, comment_tokens, copymap: CopyMap) -> list[int]:
        """Extended-vocab target sequence: the comment tokens plus EOS."""
        return dec.encode_extended(comment_tokens, self.vocab, copymap) + [EOS]

    def loss(self, graph: TopicGraph, comment_tokens, train: bool = True) -> Tensor:
        """Teacher-forced mean NLL of one (graph, comment) pair."""
        fwd = self.encode_graph(graph, train=train)
        targets = self.target_ids(comment_tokens, fwd.copymap)
        steps = self.teacher_forced_steps(fwd, targets, train=train)
        return dec.nll_loss(steps, targets)

    def generate(self, graph: TopicGraph, beam_size: int = 1, max_len: int | None = None):
        """Greedy (beam_size=1) or beam decoding; returns (tokens, score)."""
        cfg = self.hp.decoder_config(beam_size=beam_size)
        if max_len is not None:
            cfg = DecoderConfig(hidden_dim=cfg.hidden_dim, rnn_layers=cfg.rnn_layers,
                                max_len=max_len, beam_size=beam_size,
                                attention=cfg.attention)
        fwd = self.encode_graph(graph, train=False)
        if beam_size == 1:
            return dec.greedy_decode(fwd.encoding, fwd.copymap, self.vocab,
                                     self.params, cfg)
        return dec.beam_search(fwd.encoding, fwd.copymap, self.vocab,
                               self.params, cfg)
