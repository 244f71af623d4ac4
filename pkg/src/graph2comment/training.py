"""Adam training loop with gradient accumulation, LR halving and checkpoints."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .corpus import Vocab
from .model import CommentModel, Hyperparams

CKPT_MAGIC = b"GS2CKPT1"


class CheckpointError(ValueError):
    """Corrupt, truncated or incompatible checkpoint file."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    lr: float = 0.0005
    epochs: int = 5
    lr_decay: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    grad_clip: float | None = 5.0
    max_steps: int | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")

    def epoch_lr(self, epoch: int) -> float:
        return self.lr * (self.lr_decay ** epoch)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads, state: AdamState, cfg: TrainConfig,
              lr: float | None = None) -> None:
    """Bias-corrected Adam update over all parameters, in name order."""
    if lr is None:
        lr = cfg.lr
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name in sorted(params):
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m = state.m[name]
        v = state.v[name]
        m += (1.0 - b1) * (g - m)
        v += (1.0 - b2) * (g * g - v)
        params[name].data -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


def clip_grad_norm(grads, max_norm: float) -> float:
    """Scale all gradients in place to a global L2-norm bound; returns the norm."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def _dropout_seed(seed: int, epoch: int, index: int) -> int:
    ss = np.random.SeedSequence([seed, epoch, index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class TrainResult:
    epoch: int
    step: int
    adam_state: AdamState
    epoch_losses: list[float]
    step_losses: list[float]


def train(pairs, model: CommentModel, cfg: TrainConfig, log_fn=None,
          out_dir=None, pipeline: dict | None = None, start_epoch: int = 0,
          adam_state: AdamState | None = None, start_step: int = 0) -> TrainResult:
    """Teacher-forced training over (TopicGraph, comment tokens) pairs.

    Graphs vary in size, so a logical batch is realized by accumulating
    per-example gradients (summed loss semantics) before each Adam step. The
    learning rate halves (cfg.lr_decay) at every epoch boundary; epoch-end
    checkpoints go to out_dir when given. Per-epoch example order and dropout
    masks derive from (seed, epoch), so resuming from an epoch checkpoint
    replays an uninterrupted run exactly.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("training corpus is empty")
    state = adam_state if adam_state is not None else AdamState()
    step = start_step
    epoch_losses: list[float] = []
    step_losses: list[float] = []
    stop = False

    def emit(record):
        if log_fn is not None:
            log_fn(record)

    for epoch in range(start_epoch, cfg.epochs):
        lr = cfg.epoch_lr(epoch)
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(pairs))
        model.zero_grads()
        window: list[float] = []
        epoch_sum = 0.0
        processed = 0
        for pos, idx in enumerate(order):
            graph, target = pairs[idx]
            with ad.Tape(seed=_dropout_seed(cfg.seed, epoch, int(idx))):
                loss = model.loss(graph, target, train=True)
            ad.backward(loss)
            value = loss.item()
            window.append(value)
            epoch_sum += value
            processed += 1
            if len(window) >= cfg.batch_size or pos == len(order) - 1:
                grads = model.gradients()
                if cfg.grad_clip is not None:
                    clip_grad_norm(grads, cfg.grad_clip)
                adam_step(model.params, grads, state, cfg, lr=lr)
                model.zero_grads()
                step += 1
                mean_loss = sum(window) / len(window)
                step_losses.append(mean_loss)
                emit({"epoch": epoch, "step": step, "loss": mean_loss, "lr": lr})
                window = []
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    stop = True
                    break
        mean_epoch = epoch_sum / processed
        epoch_losses.append(mean_epoch)
        emit({"epoch": epoch, "mean_loss": mean_epoch, "lr": lr})
        if out_dir is not None:
            save_checkpoint(os.path.join(out_dir, f"checkpoint_epoch_{epoch}.ckpt"),
                            model, state, epoch=epoch + 1, step=step,
                            seed=cfg.seed, pipeline=pipeline)
        if stop:
            break
    return TrainResult(epoch=start_epoch + len(epoch_losses), step=step,
                       adam_state=state, epoch_losses=epoch_losses,
                       step_losses=step_losses)


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    adam_t: int
    epoch: int
    step: int
    seed: int
    hyperparams: dict
    vocab_tokens: list[str]
    vocab_max_size: int
    pipeline: dict


def save_checkpoint(path, model: CommentModel, adam_state: AdamState,
                    epoch: int, step: int, seed: int,
                    pipeline: dict | None = None) -> None:
    """Named-tensor container: magic, JSON header, raw little-endian payload."""
    entries = []
    blobs = []
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name].data)
        entries.append({"name": name, "shape": list(arr.shape),
                        "dtype": arr.dtype.newbyteorder("<").str})
        blobs.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    for kind, table in (("m", adam_state.m), ("v", adam_state.v)):
        for name in sorted(table):
            arr = np.ascontiguousarray(table[name])
            entries.append({"name": f"adam.{kind}.{name}", "shape": list(arr.shape),
                            "dtype": arr.dtype.newbyteorder("<").str})
            blobs.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    header = {
        "adam_t": adam_state.t,
        "epoch": epoch,
        "step": step,
        "seed": seed,
        "hyperparams": model.hp.to_dict(),
        "vocab": list(model.vocab.id_to_token),
        "vocab_max_size": model.vocab.max_size,
        "pipeline": pipeline or {},
        "tensors": entries,
    }
    payload = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(len(payload).to_bytes(8, "little"))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if len(raw) < len(CKPT_MAGIC) + 8:
        raise CheckpointError(f"checkpoint {path} is truncated")
    if raw[:8] != CKPT_MAGIC:
        if raw[:7] == CKPT_MAGIC[:7]:
            raise CheckpointError(
                f"checkpoint {path} has unsupported version tag {raw[7:8]!r}")
        raise CheckpointError(f"checkpoint {path} has unknown format")
    header_len = int.from_bytes(raw[8:16], "little")
    if len(raw) < 16 + header_len:
        raise CheckpointError(f"checkpoint {path} is truncated")
    try:
        header = json.loads(raw[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"checkpoint {path} has a corrupt header") from e
    offset = 16 + header_len
    params: dict[str, np.ndarray] = {}
    adam_m: dict[str, np.ndarray] = {}
    adam_v: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(raw):
            raise CheckpointError(f"checkpoint {path} is truncated")
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
        arr = arr.reshape(entry["shape"]).astype(dtype.newbyteorder("="), copy=True)
        offset += nbytes
        name = entry["name"]
        if name.startswith("adam.m."):
            adam_m[name[len("adam.m."):]] = arr
        elif name.startswith("adam.v."):
            adam_v[name[len("adam.v."):]] = arr
        else:
            params[name] = arr
    if offset != len(raw):
        raise CheckpointError(f"checkpoint {path} has trailing bytes")
    return Checkpoint(
        params=params, adam_m=adam_m, adam_v=adam_v, adam_t=header["adam_t"],
        epoch=header["epoch"], step=header["step"], seed=header["seed"],
        hyperparams=header["hyperparams"], vocab_tokens=header["vocab"],
        vocab_max_size=header["vocab_max_size"], pipeline=header["pipeline"],
    )


def model_from_checkpoint(ckpt: Checkpoint) -> tuple[CommentModel, AdamState]:
    """Rebuild a model whose shape is governed by the checkpoint's snapshot."""
    vocab = Vocab({t: i for i, t in enumerate(ckpt.vocab_tokens)},
                  list(ckpt.vocab_tokens), ckpt.vocab_max_size)
    hp = Hyperparams.from_dict(ckpt.hyperparams)
    model = CommentModel(vocab, hp, seed=ckpt.seed)
    if sorted(model.params) != sorted(ckpt.params):
        raise CheckpointError("checkpoint parameters do not match the model layout")
    for name, arr in ckpt.params.items():
        if model.params[name].data.shape != arr.shape:
            raise CheckpointError(
                f"checkpoint tensor {name!r} has shape {arr.shape}, "
                f"model expects {model.params[name].data.shape}")
        model.params[name].data = arr.astype(model.dtype, copy=True)
    state = AdamState(m={k: a.copy() for k, a in ckpt.adam_m.items()},
                      v={k: a.copy() for k, a in ckpt.adam_v.items()},
                      t=ckpt.adam_t)
    return model, state
