"""Training, prediction, source annotation, and checkpoints.

A run flows: split samples, build the type vocabulary from the training
split, pick a codec (BPE subwords or whole tokens), encode every sample to
the four-segment id layout, then train with Adam over seeded epoch shuffles.
The parameters returned are those of the epoch with the best validation
accuracy. Annotation rediscovers assignment targets with the same rules the
labeler uses, predicts a distribution per target, and keeps predictions
whose top probability clears the threshold.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import corpus as corpus_mod
from .bpe import BpeVocab
from .codec import BpeCodec, WholeTokenCodec
from .context import ContextWindow, ModelInput, assemble, extract_window
from .corpus import LabeledSample, TypeVocab, build_type_vocab, find_assignment_targets
from .errors import (
    CheckpointCompatError,
    CheckpointCorruptError,
    LexError,
    NumericError,
    OversizeInputError,
    TrainingDivergedError,
)
from .lexer import tokenize
from .nn import AdamState, ModelParams, adam_step, backward, forward_sample, init_params, nll_loss

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"ctxtyper-ckpt-v1\n"
EMBEDDING_MODES = ("bpe", "whole_token")


@dataclass(frozen=True)
class TrainConfig:
    margin: int = 128
    tensor_len: int = 512
    bpe_size: int = 2048  # also caps the whole-token vocabulary
    n_classes: int = 500
    embed_dim: int = 64
    hidden_dim: int = 128
    dropout_rate: float = 0.1
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    context_enabled: bool = True
    embedding_mode: str = "bpe"

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if self.tensor_len < 8:
            raise ValueError("tensor_len is too small to hold any input")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.epochs < 0 or self.n_classes < 1:
            raise ValueError("batch_size, epochs, n_classes out of range")
        if self.embedding_mode not in EMBEDDING_MODES:
            raise ValueError(f"embedding_mode must be one of {EMBEDDING_MODES}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        converted = {}
        by_name = {f.name: f for f in fields(cls)}
        for key, value in raw.items():
            if key not in by_name:
                raise ValueError(f"unknown config key {key!r}")
            target = by_name[key].type
            if target == "int":
                converted[key] = int(value)
            elif target == "float":
                converted[key] = float(value)
            elif target == "bool":
                if isinstance(value, str):
                    if value.lower() not in ("true", "false", "1", "0"):
                        raise ValueError(f"bad boolean for {key!r}: {value!r}")
                    converted[key] = value.lower() in ("true", "1")
                else:
                    converted[key] = bool(value)
            else:
                converted[key] = str(value)
        return cls(**converted)


@dataclass
class EncodedSample:
    input: ModelInput
    label_id: int
    sample: LabeledSample | None = None


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    valid_loss: float
    valid_acc: float


@dataclass(frozen=True)
class Prediction:
    var_name: str
    file: str
    line: int
    ranked: tuple[tuple[str, float], ...]  # (label, probability), best first

    @property
    def top1(self) -> str:
        return self.ranked[0][0]

    @property
    def top1_prob(self) -> float:
        return self.ranked[0][1]


# ---------------------------------------------------------------------------
# Codecs and encoding
# ---------------------------------------------------------------------------

def make_codec(config: TrainConfig, bpe_vocab: BpeVocab | None, train_samples=None):
    if config.embedding_mode == "bpe":
        if bpe_vocab is None:
            raise ValueError("bpe embedding mode needs a subword vocabulary")
        return BpeCodec(bpe_vocab)
    if train_samples is None:
        raise ValueError("whole_token embedding mode needs training samples")
    texts: list[str] = []
    for sample in train_samples:
        texts.extend(sample.before_ctx)
        texts.extend(sample.line_ctx)
        texts.extend(sample.after_ctx)
        texts.append(sample.var_name)
    return WholeTokenCodec.from_token_texts(texts, max_words=config.bpe_size)


def sample_window(sample: LabeledSample, config: TrainConfig) -> ContextWindow:
    """The window a sample encodes to; context off blanks every segment
    except the name.

    Stored contexts may be wider than the configured margin (margin sweeps
    reuse one harvested corpus), so both sides are trimmed here.
    """
    if config.context_enabled:
        return ContextWindow(
            before=sample.before_ctx[-config.margin :] if config.margin > 0 else (),
            line=sample.line_ctx,
            after=sample.after_ctx[: config.margin],
            name=sample.var_name,
            margin=config.margin,
        )
    return ContextWindow((), (), (), sample.var_name, config.margin)


def encode_samples(
    samples: Iterable[LabeledSample],
    codec,
    config: TrainConfig,
    type_vocab: TypeVocab,
) -> tuple[list[EncodedSample], int, int]:
    """Encode labeled samples; returns (kept, n_oversize, n_unknown_label)."""
    kept: list[EncodedSample] = []
    oversize = 0
    unknown = 0
    for sample in samples:
        label_id = type_vocab.index.get(sample.type_label)
        if label_id is None:
            unknown += 1
            continue
        try:
            encoded = assemble(sample_window(sample, config), codec, config.tensor_len)
        except OversizeInputError:
            oversize += 1
            continue
        kept.append(EncodedSample(encoded, label_id, sample))
    return kept, oversize, unknown


@dataclass
class RunData:
    train: list[EncodedSample]
    valid: list[EncodedSample]
    test: list[EncodedSample]
    type_vocab: TypeVocab
    codec: object
    dropped_oversize: int
    dropped_unknown: int


def prepare_run(
    config: TrainConfig,
    samples: Sequence[LabeledSample] | None = None,
    bpe_vocab: BpeVocab | None = None,
    presplit: tuple[Sequence[LabeledSample], Sequence[LabeledSample], Sequence[LabeledSample]] | None = None,
) -> RunData:
    """Split, build vocab and codec from the training side, encode all."""
    if presplit is None:
        if samples is None:
            raise ValueError("need samples or an explicit presplit")
        presplit = corpus_mod.split(samples, config.seed)
    train_s, valid_s, test_s = presplit
    type_vocab = build_type_vocab(train_s, config.n_classes)
    codec = make_codec(config, bpe_vocab, train_s)
    train_e, over1, unk1 = encode_samples(train_s, codec, config, type_vocab)
    valid_e, over2, unk2 = encode_samples(valid_s, codec, config, type_vocab)
    test_e, over3, unk3 = encode_samples(test_s, codec, config, type_vocab)
    return RunData(
        train=train_e,
        valid=valid_e,
        test=test_e,
        type_vocab=type_vocab,
        codec=codec,
        dropped_oversize=over1 + over2 + over3,
        dropped_unknown=unk1 + unk2 + unk3,
    )


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def evaluate_dataset(params: ModelParams, dataset: Sequence[EncodedSample]) -> tuple[float, float]:
    """(mean loss, accuracy) without dropout."""
    if not dataset:
        return 0.0, 0.0
    loss = 0.0
    correct = 0
    for item in dataset:
        cache = forward_sample(params, item.input.ids)
        loss += nll_loss(cache.probs, item.label_id)
        if int(np.argmax(cache.probs)) == item.label_id:
            correct += 1
    return loss / len(dataset), correct / len(dataset)


def train(
    config: TrainConfig,
    train_set: Sequence[EncodedSample],
    valid_set: Sequence[EncodedSample],
    vocab_size: int,
    n_classes: int,
    initial: ModelParams | None = None,
) -> tuple[ModelParams, list[EpochStats]]:
    """Adam training; returns the best-validation-accuracy parameters.

    One generator seeded from the config drives init, epoch shuffles, and
    dropout masks, so a (config, data) pair fixes the whole trajectory.
    Accuracy ties keep the later epoch (more optimization sharpens the
    probabilities without costing accuracy); with no validation samples the
    final epoch's parameters are returned.
    """
    if not train_set:
        raise ValueError("empty training set")
    rng = np.random.default_rng(config.seed)
    params = initial.copy() if initial is not None else init_params(
        vocab_size, config.embed_dim, config.hidden_dim, n_classes, rng
    )
    state = AdamState.for_params(params)
    history: list[EpochStats] = []
    best_params = params.copy()
    best_acc = -1.0
    n = len(train_set)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        loss_total = 0.0
        correct_total = 0
        try:
            for start in range(0, n, config.batch_size):
                batch = [
                    (train_set[i].input.ids, train_set[i].label_id)
                    for i in order[start : start + config.batch_size]
                ]
                grads, loss, correct = backward(
                    batch, params, dropout_rate=config.dropout_rate, training=True, rng=rng
                )
                if not np.isfinite(loss):
                    raise TrainingDivergedError(epoch)
                adam_step(params, grads, state, config.lr)
                loss_total += loss
                correct_total += correct
            valid_loss, valid_acc = evaluate_dataset(params, valid_set)
        except NumericError as exc:
            raise TrainingDivergedError(epoch, str(exc)) from exc
        stats = EpochStats(epoch, loss_total / n, correct_total / n, valid_loss, valid_acc)
        history.append(stats)
        log.info(
            "epoch %d: train loss %.4f acc %.4f | valid loss %.4f acc %.4f",
            epoch, stats.train_loss, stats.train_acc, valid_loss, valid_acc,
        )
        if valid_acc >= best_acc:
            best_acc = valid_acc
            best_params = params.copy()
    return best_params, history


def train_run(config: TrainConfig, run: RunData, initial: ModelParams | None = None):
    return train(
        config, run.train, run.valid, run.codec.size, len(run.type_vocab), initial=initial
    )


# ---------------------------------------------------------------------------
# Prediction and annotation
# ---------------------------------------------------------------------------

def predict(
    sample_input: ModelInput,
    params: ModelParams,
    type_vocab: TypeVocab,
    k: int,
    var_name: str = "",
    file: str = "<memory>",
    line: int = 0,
) -> Prediction:
    """Top-k labels with probabilities, best first, ties by class order."""
    if k < 1:
        raise ValueError("k must be at least 1")
    cache = forward_sample(params, sample_input.ids)
    order = np.argsort(-cache.probs, kind="stable")[: min(k, len(type_vocab))]
    ranked = tuple((type_vocab.labels[j], float(cache.probs[j])) for j in order)
    return Prediction(var_name=var_name, file=file, line=line, ranked=ranked)


def annotate_file(
    source: str,
    params: ModelParams,
    codec,
    type_vocab: TypeVocab,
    config: TrainConfig,
    threshold: float,
    topk: int = 5,
    file: str = "<memory>",
    on_error: str = "skip",
) -> list[Prediction]:
    """Predict a type for every assignment target whose top probability
    clears the threshold. Unlexable input is skipped (or re-raised when
    on_error="raise"); oversize targets are skipped with a log line."""
    try:
        tokens = tokenize(source)
    except LexError as exc:
        if on_error == "raise":
            raise
        log.warning("skipping unlexable file %s: %s", file, exc)
        return []
    predictions: list[Prediction] = []
    for target in find_assignment_targets(tokens):
        if config.context_enabled:
            window = extract_window(tokens, target, config.margin)
        else:
            window = ContextWindow((), (), (), target.name, config.margin)
        try:
            encoded = assemble(window, codec, config.tensor_len)
        except OversizeInputError:
            log.info("oversize target %s at %s:%d", target.name, file, target.line)
            continue
        pred = predict(
            encoded, params, type_vocab, topk,
            var_name=target.name, file=file, line=target.line,
        )
        if pred.top1_prob >= threshold:
            predictions.append(pred)
    return predictions


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    params: ModelParams
    config: TrainConfig
    type_labels: tuple[str, ...]
    token_vocab: tuple[str, ...] | None = None  # whole-token words, if that mode

    def type_vocab(self) -> TypeVocab:
        return TypeVocab(self.type_labels)


def _block_shapes(rows: int, embed: int, hidden: int, classes: int) -> list[tuple[str, tuple]]:
    return [
        ("embedding", (rows, embed)),
        ("w_z", (hidden, embed)),
        ("w_r", (hidden, embed)),
        ("w_h", (hidden, embed)),
        ("u_z", (hidden, hidden)),
        ("u_r", (hidden, hidden)),
        ("u_h", (hidden, hidden)),
        ("b_z", (hidden,)),
        ("b_r", (hidden,)),
        ("b_h", (hidden,)),
        ("attn_score", (hidden,)),
        ("dense_w", (classes, 2 * hidden)),
        ("dense_b", (classes,)),
    ]


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Magic line, JSON header, raw little-endian float64 blocks, sha256."""
    params = ckpt.params
    head = {
        "config": ckpt.config.to_dict(),
        "dims": {
            "embedding_rows": params.vocab_size,
            "embed_dim": params.embed_dim,
            "hidden_dim": params.hidden_dim,
            "n_classes": params.n_classes,
        },
        "type_labels": list(ckpt.type_labels),
        "token_vocab": list(ckpt.token_vocab) if ckpt.token_vocab is not None else None,
    }
    body = bytearray()
    body += CHECKPOINT_MAGIC
    body += json.dumps(head, sort_keys=True, ensure_ascii=False).encode("utf-8") + b"\n"
    for _, arr in params.blocks():
        body += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    digest = hashlib.sha256(bytes(body)).digest()
    Path(path).write_bytes(bytes(body) + digest)


def load_checkpoint(path: str | Path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if len(blob) < len(CHECKPOINT_MAGIC) + 32 or not blob.startswith(CHECKPOINT_MAGIC):
        raise CheckpointCorruptError(f"{path}: not a checkpoint file")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointCorruptError(f"{path}: checksum mismatch")
    header_end = blob.index(b"\n", len(CHECKPOINT_MAGIC))
    try:
        head = json.loads(blob[len(CHECKPOINT_MAGIC) : header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointCorruptError(f"{path}: bad header") from exc
    dims = head["dims"]
    shapes = _block_shapes(
        dims["embedding_rows"], dims["embed_dim"], dims["hidden_dim"], dims["n_classes"]
    )
    expected = sum(int(np.prod(shape)) for _, shape in shapes) * 8
    payload = blob[header_end + 1 : -32]
    if len(payload) != expected:
        raise CheckpointCorruptError(
            f"{path}: parameter payload is {len(payload)} bytes, expected {expected}"
        )
    arrays = {}
    offset = 0
    for name, shape in shapes:
        count = int(np.prod(shape))
        arrays[name] = (
            np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
            .reshape(shape)
            .copy()
        )
        offset += count * 8
    from .nn.model import GruParams  # local import keeps module load light

    params = ModelParams(
        embedding=arrays["embedding"],
        gru=GruParams(
            arrays["w_z"], arrays["w_r"], arrays["w_h"],
            arrays["u_z"], arrays["u_r"], arrays["u_h"],
            arrays["b_z"], arrays["b_r"], arrays["b_h"],
        ),
        attn_score=arrays["attn_score"],
        dense_w=arrays["dense_w"],
        dense_b=arrays["dense_b"],
    )
    config = TrainConfig.from_dict(head["config"])
    token_vocab = head.get("token_vocab")
    return Checkpoint(
        params=params,
        config=config,
        type_labels=tuple(head["type_labels"]),
        token_vocab=tuple(token_vocab) if token_vocab is not None else None,
    )


def codec_from_checkpoint(ckpt: Checkpoint, bpe_vocab: BpeVocab | None):
    """Rebuild the codec a checkpoint was trained with and verify it fits."""
    if ckpt.config.embedding_mode == "whole_token":
        if ckpt.token_vocab is None:
            raise CheckpointCompatError("checkpoint lacks its whole-token vocabulary")
        codec = WholeTokenCodec(list(ckpt.token_vocab))
    else:
        if bpe_vocab is None:
            raise CheckpointCompatError("checkpoint needs a subword vocabulary")
        codec = BpeCodec(bpe_vocab)
    if codec.size != ckpt.params.vocab_size:
        raise CheckpointCompatError(
            f"vocabulary has {codec.size} ids but the model embeds {ckpt.params.vocab_size}"
        )
    if len(ckpt.type_labels) != ckpt.params.n_classes:
        raise CheckpointCompatError("type label count does not match the classifier head")
    return codec
