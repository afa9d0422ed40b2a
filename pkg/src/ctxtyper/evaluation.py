"""Metrics, sweeps, and report files for trained annotators.

Two different "precision" estimators appear here on purpose. The weighted
one-vs-rest precision in EvalReport averages per-class precision by gold
support. The threshold sweep instead reports the exact-match rate over the
retained subset, while its recall keeps the full dataset as denominator so
dropped samples count as misses. They are reported under distinct column
names and never conflated.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import corpus as corpus_mod
from .corpus import LabeledSample, TypeVocab
from .engine import (
    EncodedSample,
    RunData,
    TrainConfig,
    predict,
    prepare_run,
    train_run,
)
from .nn import ModelParams, forward_sample

DEFAULT_THRESHOLDS = tuple(i / 10 for i in range(10))
DEFAULT_SWEEP_MARGINS = (32, 64, 128, 256, 512)


@dataclass(frozen=True)
class ClassMetrics:
    support: int
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    per_class: dict[str, ClassMetrics]
    n_samples: int
    zero_division_labels: tuple[str, ...]  # classes that predicted nothing


@dataclass(frozen=True)
class ThresholdRow:
    threshold: float
    retained: int
    precision_retained: float
    recall_all: float
    f1: float


@dataclass(frozen=True)
class MarginRow:
    margin: int
    accuracy: float
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class AblationResult:
    with_context: EvalReport
    without_context: EvalReport


# ---------------------------------------------------------------------------
# Core metrics over label sequences
# ---------------------------------------------------------------------------

def accuracy(preds: Sequence[str], golds: Sequence[str]) -> float:
    if len(preds) != len(golds) or not golds:
        raise ValueError("need equal, non-empty prediction and gold sequences")
    return sum(p == g for p, g in zip(preds, golds)) / len(golds)


def topk_recall(ranked: Sequence[Sequence[str]], golds: Sequence[str], k: int) -> float:
    """Fraction of samples whose gold label appears in the first k ranked
    predictions; k = 1 reduces to accuracy."""
    if len(ranked) != len(golds) or not golds:
        raise ValueError("need equal, non-empty ranked and gold sequences")
    if k < 1:
        raise ValueError("k must be at least 1")
    return sum(g in r[:k] for r, g in zip(ranked, golds)) / len(golds)


def weighted_prf(
    preds: Sequence[str],
    golds: Sequence[str],
    type_vocab: TypeVocab | None = None,
) -> EvalReport:
    """Per-class one-vs-rest metrics, averaged with gold-support weights.

    A class nobody predicted has an undefined precision; it is reported as
    0.0 and listed in zero_division_labels. Weighted recall coincides with
    accuracy because each class contributes support * (hits / support).
    """
    n = len(golds)
    if len(preds) != n or n == 0:
        raise ValueError("need equal, non-empty prediction and gold sequences")
    if type_vocab is not None:
        labels = list(type_vocab.labels)
        for value in (*preds, *golds):
            if value not in type_vocab:
                raise ValueError(f"label {value!r} is not in the type vocabulary")
    else:
        labels = sorted(set(golds) | set(preds))
    tp: dict[str, int] = {label: 0 for label in labels}
    pred_count: dict[str, int] = {label: 0 for label in labels}
    gold_count: dict[str, int] = {label: 0 for label in labels}
    for p, g in zip(preds, golds):
        pred_count[p] += 1
        gold_count[g] += 1
        if p == g:
            tp[p] += 1
    per_class: dict[str, ClassMetrics] = {}
    flagged: list[str] = []
    for label in labels:
        hits = tp[label]
        predicted = pred_count[label]
        support = gold_count[label]
        if predicted == 0:
            precision = 0.0
            flagged.append(label)
        else:
            precision = hits / predicted
        recall = hits / support if support else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[label] = ClassMetrics(support, precision, recall, f1)
    def weighted(field: str) -> float:
        return sum(m.support * getattr(m, field) for m in per_class.values()) / n

    return EvalReport(
        accuracy=sum(tp.values()) / n,
        weighted_precision=weighted("precision"),
        weighted_recall=weighted("recall"),
        weighted_f1=weighted("f1"),
        per_class=per_class,
        n_samples=n,
        zero_division_labels=tuple(flagged),
    )


# ---------------------------------------------------------------------------
# Model-level evaluation
# ---------------------------------------------------------------------------

def score_dataset(
    params: ModelParams, dataset: Sequence[EncodedSample], type_vocab: TypeVocab
) -> list[tuple[str, float, str]]:
    """(top1 label, top1 probability, gold label) per sample."""
    scored = []
    for item in dataset:
        cache = forward_sample(params, item.input.ids)
        top = int(np.argmax(cache.probs))
        scored.append(
            (type_vocab.labels[top], float(cache.probs[top]), type_vocab.labels[item.label_id])
        )
    return scored


def evaluate_model(
    params: ModelParams, dataset: Sequence[EncodedSample], type_vocab: TypeVocab
) -> EvalReport:
    scored = score_dataset(params, dataset, type_vocab)
    return weighted_prf([s[0] for s in scored], [s[2] for s in scored], type_vocab)


def threshold_sweep_scored(
    scored: Sequence[tuple[str, float, str]],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> list[ThresholdRow]:
    """Sweep over (top1, probability, gold) rows.

    Precision is the exact-match rate among samples whose confidence clears
    the threshold; recall keeps every sample in the denominator, so refusing
    to answer costs recall but never precision.
    """
    if not scored:
        raise ValueError("empty prediction dump")
    total = len(scored)
    rows = []
    for threshold in sorted(thresholds):
        kept = [(p, g) for p, prob, g in scored if prob >= threshold]
        correct = sum(p == g for p, g in kept)
        precision = correct / len(kept) if kept else 0.0
        recall = correct / total
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        rows.append(ThresholdRow(threshold, len(kept), precision, recall, f1))
    return rows


def threshold_sweep(
    params: ModelParams,
    dataset: Sequence[EncodedSample],
    type_vocab: TypeVocab,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> list[ThresholdRow]:
    return threshold_sweep_scored(score_dataset(params, dataset, type_vocab), thresholds)


# ---------------------------------------------------------------------------
# Sweeps that retrain
# ---------------------------------------------------------------------------

def _train_and_report(config: TrainConfig, presplit, bpe_vocab) -> EvalReport:
    run: RunData = prepare_run(config, presplit=presplit, bpe_vocab=bpe_vocab)
    params, _ = train_run(config, run)
    return evaluate_model(params, run.test, run.type_vocab)


def margin_sweep(
    config: TrainConfig,
    samples: Sequence[LabeledSample],
    bpe_vocab=None,
    margins: Sequence[int] = DEFAULT_SWEEP_MARGINS,
) -> list[MarginRow]:
    """One full train+eval per margin over a single seeded split."""
    presplit = corpus_mod.split(samples, config.seed)
    rows = []
    for margin in margins:
        report = _train_and_report(replace(config, margin=margin), presplit, bpe_vocab)
        rows.append(
            MarginRow(
                margin,
                report.accuracy,
                report.weighted_precision,
                report.weighted_recall,
                report.weighted_f1,
            )
        )
    return rows


def ablation_context(
    config: TrainConfig,
    samples: Sequence[LabeledSample],
    bpe_vocab=None,
) -> AblationResult:
    """Train twice, identical except for context_enabled, on one split."""
    presplit = corpus_mod.split(samples, config.seed)
    with_ctx = _train_and_report(replace(config, context_enabled=True), presplit, bpe_vocab)
    without = _train_and_report(replace(config, context_enabled=False), presplit, bpe_vocab)
    return AblationResult(with_context=with_ctx, without_context=without)


# ---------------------------------------------------------------------------
# Prediction dumps and report files
# ---------------------------------------------------------------------------

def write_predictions(path: str | Path, rows: Iterable[dict]) -> None:
    """JSONL dump; rows follow the annotation layout plus a gold field."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_predictions(path: str | Path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def prediction_rows(predictions, golds: Sequence[str] | None = None) -> list[dict]:
    """Serialize engine predictions, attaching gold labels when known."""
    rows = []
    for i, pred in enumerate(predictions):
        row = {
            "file": pred.file,
            "line": pred.line,
            "var_name": pred.var_name,
            "type": pred.top1,
            "prob": pred.top1_prob,
            "topk": [{"type": label, "prob": prob} for label, prob in pred.ranked],
        }
        if golds is not None:
            row["gold"] = golds[i]
        rows.append(row)
    return rows


def dump_metrics(rows: Sequence[dict], k: int = 3) -> tuple[EvalReport, float]:
    """(weighted report, top-k recall) over a gold-bearing prediction dump."""
    golds = [row["gold"] for row in rows]
    preds = [row["type"] for row in rows]
    ranked = [[entry["type"] for entry in row["topk"]] for row in rows]
    return weighted_prf(preds, golds), topk_recall(ranked, golds, k)


def _write_tsv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_cell(v) for v in row) + "\n")


def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_report_tsv(path: str | Path, report: EvalReport) -> None:
    """Overall row, then one row per class."""
    header = ["section", "label", "support", "accuracy", "precision", "recall", "f1"]
    rows = [
        [
            "overall",
            "*",
            report.n_samples,
            report.accuracy,
            report.weighted_precision,
            report.weighted_recall,
            report.weighted_f1,
        ]
    ]
    for label, m in report.per_class.items():
        rows.append(["class", label, m.support, "", m.precision, m.recall, m.f1])
    _write_tsv(path, header, rows)


def write_threshold_tsv(path: str | Path, rows: Sequence[ThresholdRow]) -> None:
    _write_tsv(
        path,
        ["threshold", "retained", "precision_retained", "recall_all", "f1"],
        [[r.threshold, r.retained, r.precision_retained, r.recall_all, r.f1] for r in rows],
    )


def write_margin_tsv(path: str | Path, rows: Sequence[MarginRow]) -> None:
    _write_tsv(
        path,
        ["margin", "accuracy", "precision", "recall", "f1"],
        [[r.margin, r.accuracy, r.precision, r.recall, r.f1] for r in rows],
    )


def write_ablation_tsv(path: str | Path, result: AblationResult) -> None:
    rows = []
    for name, report in (("on", result.with_context), ("off", result.without_context)):
        rows.append(
            [
                name,
                report.accuracy,
                report.weighted_precision,
                report.weighted_recall,
                report.weighted_f1,
            ]
        )
    _write_tsv(path, ["context", "accuracy", "precision", "recall", "f1"], rows)
