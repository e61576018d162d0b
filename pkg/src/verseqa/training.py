"""Loss, optimizer, training loop, checkpointing, and weight transfer."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import models as models_mod
from .embeddings import (EmbeddingMatrix, MAX_ANSWER_TOKENS,
                         MAX_QUESTION_TOKENS, embed_sequence)
from .tensor import ParameterSet, ShapeError, Tensor, concat_all

BCE_EPS = 1e-7
ADAGRAD_EPS = 1e-8


class CheckpointError(ValueError):
    pass


class BadMagicError(CheckpointError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class ManifestMismatchError(CheckpointError):
    pass


class TransferError(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    max_question_tokens: int = MAX_QUESTION_TOKENS
    max_answer_tokens: int = MAX_ANSWER_TOKENS

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


def bce_loss(p: Tensor, y: Sequence[float]) -> Tensor:
    """Mean binary cross-entropy of probabilities ``p`` against 0/1 labels."""
    labels = np.asarray(y, dtype=np.float64).reshape(-1)
    if labels.size == 0:
        raise ValueError("bce_loss on zero examples")
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise ValueError("labels must be 0 or 1")
    flat = p.reshape(p.data.size, 1)
    if flat.shape[0] != labels.size:
        raise ShapeError(f"{flat.shape[0]} probabilities vs {labels.size} labels")
    yt = Tensor(labels.reshape(-1, 1))
    pc = flat.clamp(BCE_EPS, 1.0 - BCE_EPS)
    ll = yt * pc.log() + (1.0 - yt) * (1.0 - pc).log()
    return -ll.mean()


class AdaGradState:
    """Per-parameter accumulated squared gradients plus a step counter."""

    def __init__(self, params: ParameterSet):
        self.accum = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.step_count = 0


def adagrad_step(params: ParameterSet, grads: dict[str, np.ndarray],
                 state: AdaGradState, lr: float) -> None:
    """theta -= lr * g / (sqrt(sum g^2) + eps), in place."""
    for name, t in params.items():
        g = grads[name]
        if g.shape != t.data.shape:
            raise ShapeError(f"gradient for {name}: shape {g.shape} "
                             f"does not match {t.data.shape}")
        acc = state.accum[name]
        acc += g * g
        t.data -= lr * g / (np.sqrt(acc) + ADAGRAD_EPS)
    state.step_count += 1


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_f1: float


@dataclass
class TrainResult:
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    stopped_early: bool = False


def _pairs(groups, embedding: EmbeddingMatrix, cfg: TrainConfig):
    out = []
    for g in groups:
        q = embed_sequence(g.question_tokens, embedding, cfg.max_question_tokens)
        for cand in g.candidates:
            a = embed_sequence(cand.tokens, embedding, cfg.max_answer_tokens)
            out.append((q, a, float(cand.label)))
    return out


def _eval_pairs(model, pairs) -> float:
    probs = [model.forward(q, a) for q, a, _ in pairs]
    labels = [label for _, _, label in pairs]
    return bce_loss(concat_all(probs, axis=0), labels).item()


def _val_f1(model, groups, embedding: EmbeddingMatrix, cfg: TrainConfig) -> float:
    from .evaluation import f1_top1, score_groups
    preds = score_groups(model, groups, embedding,
                         max_question_tokens=cfg.max_question_tokens,
                         max_answer_tokens=cfg.max_answer_tokens)
    return f1_top1(preds)[0]


def train(model, train_groups, val_groups, embedding: EmbeddingMatrix,
          cfg: TrainConfig) -> TrainResult:
    """Mini-batch AdaGrad training with validation-loss early stopping.

    Iterates (question, candidate, label) pairs in seeded-shuffled batches.
    Stops when validation loss has not improved for ``cfg.patience`` epochs
    or at ``cfg.max_epochs``; the returned model holds the weights of the
    best validation epoch. Deterministic for fixed weights, data, and seed.
    """
    if not train_groups:
        raise ValueError("empty training set")
    for g in list(train_groups) + list(val_groups):
        positives = sum(c.label for c in g.candidates)
        if positives != 1:
            raise ValueError(f"group {g.qid}: expected exactly one positive, "
                             f"got {positives}")

    train_pairs = _pairs(train_groups, embedding, cfg)
    val_pairs = _pairs(val_groups, embedding, cfg)
    rng = np.random.default_rng(cfg.seed)
    state = AdaGradState(model.params)
    result = TrainResult()
    best_values = model.params.copy_values()
    epochs_since_best = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_pairs))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_pairs[i] for i in order[start:start + cfg.batch_size]]
            probs = [model.forward(q, a, training=True, rng=rng) for q, a, _ in batch]
            labels = [label for _, _, label in batch]
            loss = bce_loss(concat_all(probs, axis=0), labels)
            for _name, t in model.params.items():
                t.grad = None  # a param can be unreachable for all-PAD inputs
            loss.backward()
            grads = {name: (t.grad if t.grad is not None else np.zeros_like(t.data))
                     for name, t in model.params.items()}
            adagrad_step(model.params, grads, state, cfg.learning_rate)
            losses.append((loss.item(), len(batch)))

        total = sum(n for _, n in losses)
        train_loss = sum(l * n for l, n in losses) / total
        val_loss = _eval_pairs(model, val_pairs) if val_pairs else train_loss
        val_f1 = _val_f1(model, val_groups, embedding, cfg) if val_groups else 0.0
        result.history.append(EpochRecord(epoch, train_loss, val_loss, val_f1))

        if val_loss < result.best_val_loss:
            result.best_val_loss = val_loss
            result.best_epoch = epoch
            best_values = model.params.copy_values()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                result.stopped_early = True
                break

    model.params.load_values(best_values)
    return result


# ---- checkpoints -------------------------------------------------------------

MAGIC = b"BQAC"
FORMAT_VERSION = 1
_DTYPES = {"f4": np.dtype("<f4"), "f8": np.dtype("<f8")}


@dataclass
class Checkpoint:
    model_kind: str
    config: dict
    tensors: dict[str, np.ndarray]
    dtype: str = "f8"


def save_checkpoint(model, dtype: str = "f8") -> bytes:
    """Serialize model kind, config, and parameters.

    Layout: magic, u32 version, u32 manifest length, JSON manifest, then
    raw little-endian arrays in manifest order. ``dtype`` "f8" round-trips
    float64 parameters bitwise; "f4" halves the size for transport.
    """
    if dtype not in _DTYPES:
        raise CheckpointError(f"unsupported dtype: {dtype}")
    entries = [{"name": name, "shape": list(t.data.shape), "dtype": dtype}
               for name, t in model.params.items()]
    manifest = {"model_kind": model.kind, "config": model.config(),
                "tensors": entries}
    mbytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", FORMAT_VERSION)
    blob += struct.pack("<I", len(mbytes))
    blob += mbytes
    for _name, t in model.params.items():
        blob += t.data.astype(_DTYPES[dtype]).tobytes(order="C")
    return bytes(blob)


def load_checkpoint(data: bytes) -> Checkpoint:
    if len(data) < 12:
        raise TruncatedCheckpointError("checkpoint shorter than header")
    if data[:4] != MAGIC:
        raise BadMagicError(f"bad magic bytes: {data[:4]!r}")
    version, mlen = struct.unpack("<II", data[4:12])
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}")
    if len(data) < 12 + mlen:
        raise TruncatedCheckpointError("manifest truncated")
    try:
        manifest = json.loads(data[12:12 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ManifestMismatchError(f"unreadable manifest: {exc}") from exc

    tensors: dict[str, np.ndarray] = {}
    offset = 12 + mlen
    dtypes = set()
    for entry in manifest["tensors"]:
        dt = _DTYPES.get(entry["dtype"])
        if dt is None:
            raise ManifestMismatchError(f"unknown dtype {entry['dtype']!r}")
        dtypes.add(entry["dtype"])
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        nbytes = count * dt.itemsize
        if offset + nbytes > len(data):
            raise TruncatedCheckpointError(
                f"tensor {entry['name']}: blob holds fewer than {count} values")
        arr = np.frombuffer(data, dtype=dt, count=count, offset=offset)
        tensors[entry["name"]] = arr.reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(data):
        raise ManifestMismatchError(
            f"{len(data) - offset} trailing bytes beyond manifest contents")
    return Checkpoint(model_kind=manifest["model_kind"],
                      config=manifest["config"], tensors=tensors,
                      dtype=next(iter(dtypes)) if len(dtypes) == 1 else "f8")


def model_from_checkpoint(ckpt: Checkpoint, seed: int = 0):
    model = models_mod.build_model(ckpt.model_kind, seed=seed, **ckpt.config)
    model.params.load_values(ckpt.tensors)
    return model


# ---- weight transfer ---------------------------------------------------------

@dataclass
class TransferReport:
    copied: list[str] = field(default_factory=list)
    extended: list[str] = field(default_factory=list)


def _extend_lstm_input(src: np.ndarray, dst_shape: tuple, d_h: int) -> np.ndarray:
    # rows: [d_in input dims | d_h recurrent dims]; new input dims zeroed
    d_in_old = src.shape[0] - d_h
    d_in_new = dst_shape[0] - d_h
    if src.shape[1] != dst_shape[1] or d_in_new < d_in_old or d_in_old < 0:
        raise TransferError(f"cannot extend lstm input block {src.shape} "
                            f"to {dst_shape}")
    out = np.zeros(dst_shape)
    out[:d_in_old] = src[:d_in_old]
    out[d_in_new:] = src[d_in_old:]
    return out


def _extend_conv_input(src: np.ndarray, dst_shape: tuple, window: int) -> np.ndarray:
    # rows: window blocks of d_in each; per block, new input dims zeroed
    if src.shape[0] % window or dst_shape[0] % window or src.shape[1] != dst_shape[1]:
        raise TransferError(f"cannot extend conv block {src.shape} to {dst_shape}")
    d_old = src.shape[0] // window
    d_new = dst_shape[0] // window
    if d_new < d_old:
        raise TransferError(f"conv input dim shrank: {d_old} -> {d_new}")
    out = np.zeros(dst_shape)
    for j in range(window):
        out[j * d_new:j * d_new + d_old] = src[j * d_old:(j + 1) * d_old]
    return out


def transfer_weights(source: Checkpoint, target) -> TransferReport:
    """Copy checkpoint tensors into ``target`` (same model kind).

    Equal shapes copy exactly. Input-adjacent matrices whose embedding
    dimension grew copy the old input rows and zero-fill the new ones, so
    the transferred model computes the same function while the extra
    embedding dims are zero. Any other mismatch is an error.
    """
    if source.model_kind != target.kind:
        raise TransferError(f"model kind mismatch: checkpoint is "
                            f"{source.model_kind!r}, target is {target.kind!r}")
    layout = target.input_layout()
    report = TransferReport()
    new_values = {}
    for name, t in target.params.items():
        if name not in source.tensors:
            raise TransferError(f"checkpoint is missing parameter {name}")
        src = source.tensors[name]
        if src.shape == t.data.shape:
            new_values[name] = src.copy()
            report.copied.append(name)
            continue
        tag = layout.get(name)
        if tag is None:
            raise TransferError(f"parameter {name}: shape {src.shape} does not "
                                f"match {t.data.shape} and is not input-adjacent")
        kind, arg = tag
        if kind == "lstm_input":
            new_values[name] = _extend_lstm_input(src, t.data.shape, arg)
        elif kind == "conv_input":
            new_values[name] = _extend_conv_input(src, t.data.shape, arg)
        else:
            raise TransferError(f"unknown layout tag {kind!r} for {name}")
        report.extended.append(name)
    target.params.load_values(new_values)
    return report
