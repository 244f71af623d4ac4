"""Attention RNN decoder with a copy mechanism over topic words."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import BOS, EOS, UNK, Vocab
from .encoders import GraphEncoding
from .topic_graph import KIND_KEYWORD, TopicGraph

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class DecoderConfig:
    hidden_dim: int = 128
    rnn_layers: int = 2
    max_len: int = 32
    beam_size: int = 1
    attention: str = "bilinear"  # or "additive"

    def __post_init__(self):
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")
        if self.beam_size < 1:
            raise ValueError(f"beam_size must be >= 1, got {self.beam_size}")
        if self.attention not in ("bilinear", "additive"):
            raise ValueError(f"unknown attention form: {self.attention!r}")


@dataclass
class DecoderStepOutput:
    t: Tensor        # 1 x h decoder hidden state
    y: Tensor        # 1 x V vocabulary distribution
    alpha: Tensor    # 1 x N vertex attention
    p_copy: Tensor   # 1 x 1 copy gate
    p: Tensor        # 1 x (V + n_oov) merged distribution


@dataclass
class DecoderState:
    h: list[Tensor]
    c: list[Tensor]


@dataclass
class CopyMap:
    """Per-article mapping from vertex attention onto extended-vocab slots.

    Out-of-vocab keywords get temporary ids vocab_size..vocab_size+n_oov-1;
    in-vocab keywords add their copy mass onto their regular vocab slot.
    """

    vocab_size: int
    keyword_indices: tuple[int, ...]
    mask: np.ndarray                      # N, 1 for keyword vertices
    matrix: np.ndarray                    # N x ext_size, vertex -> keyword slot
    oov_tokens: tuple[str, ...]
    token_to_ext: dict[str, int] = field(default_factory=dict)

    @property
    def n_oov(self) -> int:
        return len(self.oov_tokens)

    @property
    def ext_size(self) -> int:
        return self.vocab_size + self.n_oov

    def ext_token(self, ext_id: int, vocab: Vocab) -> str:
        if ext_id < self.vocab_size:
            return vocab.decode(ext_id)
        return self.oov_tokens[ext_id - self.vocab_size]


def build_copy_map(graph: TopicGraph, vocab: Vocab) -> CopyMap:
    n = len(graph.vertices)
    kw_idx = tuple(graph.keyword_vertex_indices())
    mask = np.zeros(n)
    oov_tokens: list[str] = []
    token_to_ext: dict[str, int] = {}
    slots = []
    for i in kw_idx:
        k = graph.vertices[i].keyword
        if k in vocab:
            slot = vocab.encode(k)
        else:
            if k not in token_to_ext:
                token_to_ext[k] = len(vocab) + len(oov_tokens)
                oov_tokens.append(k)
            slot = token_to_ext[k]
        slots.append(slot)
        mask[i] = 1.0
    matrix = np.zeros((n, len(vocab) + len(oov_tokens)))
    for i, slot in zip(kw_idx, slots):
        matrix[i, slot] = 1.0
    return CopyMap(len(vocab), kw_idx, mask, matrix, tuple(oov_tokens), token_to_ext)


def encode_extended(tokens, vocab: Vocab, copymap: CopyMap) -> list[int]:
    """Token ids over the extended vocabulary (copyable OOV keywords included)."""
    ids = []
    for tok in tokens:
        if tok in vocab:
            ids.append(vocab.encode(tok))
        else:
            ids.append(copymap.token_to_ext.get(tok, UNK))
    return ids


def _glorot(rng, shape):
    std = math.sqrt(2.0 / (shape[0] + shape[1]))
    return rng.normal(0.0, std, size=shape)


def init_decoder_params(rng, embed_dim: int, vocab_size: int, cfg: DecoderConfig,
                        dtype=np.float64) -> dict[str, Tensor]:
    h = cfg.hidden_dim
    params: dict[str, Tensor] = {}

    def param(name, array):
        params[name] = Tensor(array.astype(dtype), requires_grad=True, name=name)

    for layer in range(cfg.rnn_layers):
        in_dim = embed_dim if layer == 0 else h
        param(f"dec.lstm.{layer}.Wx", _glorot(rng, (in_dim, 4 * h)))
        param(f"dec.lstm.{layer}.Wh", _glorot(rng, (h, 4 * h)))
        bias = np.zeros(4 * h)
        bias[h:2 * h] = 1.0  # forget-gate bias
        param(f"dec.lstm.{layer}.b", bias)
    if cfg.attention == "bilinear":
        param("dec.attn.Wa", _glorot(rng, (h, embed_dim)))
    else:
        param("dec.attn.W1", _glorot(rng, (h, h)))
        param("dec.attn.W2", _glorot(rng, (embed_dim, h)))
        param("dec.attn.v", _glorot(rng, (h, 1)))
    param("dec.merge.W", _glorot(rng, (h + embed_dim, h)))
    param("dec.merge.b", np.zeros(h))
    param("dec.out.Wo", _glorot(rng, (h, vocab_size)))
    param("dec.copy.W", _glorot(rng, (h + embed_dim, 1)))
    return params


def initial_state(enc: GraphEncoding, cfg: DecoderConfig) -> DecoderState:
    """Both LSTM layers start from t0; cell states start at zero."""
    h0 = enc.t0
    zeros = Tensor(np.zeros_like(h0.data))
    return DecoderState(h=[h0 for _ in range(cfg.rnn_layers)],
                        c=[zeros for _ in range(cfg.rnn_layers)])


def _lstm_step(x: Tensor, h: Tensor, c: Tensor, params, layer: int, hidden: int):
    z = x @ params[f"dec.lstm.{layer}.Wx"] + h @ params[f"dec.lstm.{layer}.Wh"] \
        + params[f"dec.lstm.{layer}.b"]
    i = ad.sigmoid(ad.slice_cols(z, 0, hidden))
    f = ad.sigmoid(ad.slice_cols(z, hidden, 2 * hidden))
    g = ad.tanh(ad.slice_cols(z, 2 * hidden, 3 * hidden))
    o = ad.sigmoid(ad.slice_cols(z, 3 * hidden, 4 * hidden))
    c_new = f * c + i * g
    h_new = o * ad.tanh(c_new)
    return h_new, c_new


def attend(t: Tensor, g_out: Tensor, params, cfg: DecoderConfig):
    """Attention over vertex outputs: weights alpha and context vector c."""
    if cfg.attention == "bilinear":
        scores = (t @ params["dec.attn.Wa"]) @ g_out.T
    else:
        hidden = ad.tanh(t @ params["dec.attn.W1"] + g_out @ params["dec.attn.W2"])
        scores = (hidden @ params["dec.attn.v"]).T
    alpha = ad.softmax(scores)
    return alpha, alpha @ g_out


def merge_distributions(y: Tensor, alpha: Tensor, p_copy: Tensor,
                        copymap: CopyMap) -> Tensor:
    """p = (1 - p_copy) * y + p_copy * alpha mapped onto keyword slots.

    Title/Empty attention is masked out and the keyword shares renormalized
    before being scattered onto the extended vocabulary.
    """
    masked = alpha * Tensor(copymap.mask[None, :])
    alpha_kw = masked / masked.sum(axis=1, keepdims=True)
    copy_dist = alpha_kw @ Tensor(copymap.matrix)
    if copymap.n_oov:
        y_ext = ad.concat([y, Tensor(np.zeros((1, copymap.n_oov)))], axis=1)
    else:
        y_ext = y
    return (1.0 - p_copy) * y_ext + p_copy * copy_dist


def decode_step(state: DecoderState, prev_id: int, enc: GraphEncoding,
                copymap: CopyMap, params, cfg: DecoderConfig,
                dropout_rate: float = 0.0, train: bool = False):
    """One decoder step; returns the step output and the next state.

    prev_id is an extended-vocab id; copied OOV tokens feed back as UNK.
    """
    if prev_id >= copymap.vocab_size:
        prev_id = UNK
    x = ad.row_gather(params["embed.word"], [prev_id])
    x = ad.dropout(x, dropout_rate, train)
    new_h, new_c = [], []
    for layer in range(cfg.rnn_layers):
        h, c = _lstm_step(x, state.h[layer], state.c[layer], params, layer, cfg.hidden_dim)
        new_h.append(h)
        new_c.append(c)
        x = h
    t = new_h[-1]
    alpha, ctx = attend(t, enc.g_out, params, cfg)
    tc = ad.concat([t, ctx], axis=1)
    merged = ad.tanh(tc @ params["dec.merge.W"] + params["dec.merge.b"])
    merged = ad.dropout(merged, dropout_rate, train)
    y = ad.softmax(merged @ params["dec.out.Wo"])
    if copymap.keyword_indices:
        p_copy = ad.sigmoid(tc @ params["dec.copy.W"])
        p = merge_distributions(y, alpha, p_copy, copymap)
    else:
        # No topic words to copy from: the gate is forced shut.
        p_copy = Tensor(np.zeros((1, 1)))
        p = y
    out = DecoderStepOutput(t=t, y=y, alpha=alpha, p_copy=p_copy, p=p)
    return out, DecoderState(h=new_h, c=new_c)


def nll_loss(steps, target_ids) -> Tensor:
    """Mean negative log-likelihood of the targets under the merged distributions."""
    if len(steps) != len(target_ids):
        raise ValueError(
            f"teacher forcing expects one step per target: {len(steps)} steps,"
            f" {len(target_ids)} targets")
    total = None
    for step, tid in zip(steps, target_ids):
        term = ad.log(ad.clamp_min(ad.pick(step.p, (0, int(tid))), PROB_FLOOR))
        total = term if total is None else total + term
    return total * (-1.0 / len(target_ids))


def _finalize(decisions, logp_sum: float):
    emitted = decisions[:-1] if decisions and decisions[-1] == EOS else decisions
    return logp_sum / len(decisions), tuple(emitted)


def greedy_decode(enc: GraphEncoding, copymap: CopyMap, vocab: Vocab, params,
                  cfg: DecoderConfig):
    """Argmax decoding from BOS; stops at EOS or max_len.

    Returns (tokens, score) with copied OOV keywords emitted verbatim and the
    score the length-normalized log-probability of the decision sequence.
    """
    state = initial_state(enc, cfg)
    prev = BOS
    decisions: list[int] = []
    logp_sum = 0.0
    for _ in range(cfg.max_len):
        out, state = decode_step(state, prev, enc, copymap, params, cfg)
        row = out.p.data[0]
        tid = int(np.argmax(row))
        decisions.append(tid)
        logp_sum += math.log(max(float(row[tid]), PROB_FLOOR))
        if tid == EOS:
            break
        prev = tid
    score, emitted = _finalize(tuple(decisions), logp_sum)
    return [copymap.ext_token(t, vocab) for t in emitted], score


def beam_search(enc: GraphEncoding, copymap: CopyMap, vocab: Vocab, params,
                cfg: DecoderConfig):
    """Length-normalized beam search; ties break toward smaller token ids.

    Only the top beam_size candidates per step are kept; EOS candidates among
    them retire to the finished pool, and the search stops once that pool
    holds beam_size hypotheses or no active beam remains.
    """
    beam_size = cfg.beam_size
    actives = [(0.0, (), initial_state(enc, cfg), BOS)]
    finished: list[tuple[float, tuple[int, ...]]] = []
    for _ in range(cfg.max_len):
        candidates = []
        for logp_sum, decisions, state, prev in actives:
            out, new_state = decode_step(state, prev, enc, copymap, params, cfg)
            row = np.log(np.maximum(out.p.data[0], PROB_FLOOR))
            if len(row) > beam_size:
                top = np.argpartition(row, -beam_size)[-beam_size:]
            else:
                top = np.arange(len(row))
            for tid in top:
                tid = int(tid)
                candidates.append(
                    (logp_sum + float(row[tid]), decisions + (tid,), new_state))
        candidates.sort(key=lambda c: (-c[0], c[1]))
        actives = []
        for logp_sum, decisions, state in candidates[:beam_size]:
            if decisions[-1] == EOS:
                finished.append(_finalize(decisions, logp_sum))
            else:
                actives.append((logp_sum, decisions, state, decisions[-1]))
        if len(finished) >= beam_size or not actives:
            actives = []  # early stop: partial hypotheses do not compete
            break
    # Actives surviving to max_len are legitimate unterminated sequences.
    finished.extend(_finalize(d, lp) for lp, d, _, _ in actives)
    finished.sort(key=lambda f: (-f[0], f[1]))
    score, emitted = finished[0]
    return [copymap.ext_token(t, vocab) for t in emitted], score
