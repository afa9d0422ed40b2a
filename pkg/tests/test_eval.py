"""Tests for metrics, sweeps, dumps, and report files."""
import numpy as np
import pytest

from ctxtyper import bpe
from ctxtyper.corpus import LabeledSample, TypeVocab
from ctxtyper.engine import Prediction, TrainConfig, prepare_run, train_run
from ctxtyper.evaluation import (
    AblationResult,
    DEFAULT_THRESHOLDS,
    EvalReport,
    ablation_context,
    accuracy,
    dump_metrics,
    evaluate_model,
    margin_sweep,
    prediction_rows,
    read_predictions,
    score_dataset,
    threshold_sweep,
    threshold_sweep_scored,
    topk_recall,
    weighted_prf,
    write_ablation_tsv,
    write_margin_tsv,
    write_predictions,
    write_report_tsv,
    write_threshold_tsv,
)

# ---------------------------------------------------------------------------
# Synthetic two-class corpora built directly from samples. The class signal
# is a marker token planted in the before-context at a chosen depth; names
# and target lines are deliberately uninformative.
# ---------------------------------------------------------------------------

_FILLER = ("pass", ";", "pass", ";", "pass", ";", "pass", ";")


def marker_samples(n_per_class=40, depth=0):
    """depth = how many filler tokens sit between the marker and the line."""
    samples = []
    for i in range(n_per_class):
        for label, marker in (("int", "sig_num"), ("str", "sig_text")):
            before = (marker, "(", ")") + _FILLER[: depth]
            samples.append(
                LabeledSample(
                    var_name=f"v{i}",
                    before_ctx=before,
                    line_ctx=(f"v{i}", "=", "mk", "(", ")"),
                    after_ctx=(),
                    type_label=label,
                    source_file="synth.py",
                    line=2 * i + 1,
                    col_start=0,
                    col_end=2,
                )
            )
    return samples


def samples_vocab(samples, size=300):
    texts = []
    for s in samples:
        texts.extend(s.before_ctx)
        texts.extend(s.line_ctx)
        texts.extend(s.after_ctx)
        texts.append(s.var_name)
    return bpe.train_bpe(texts, size)


def small_config(**overrides):
    base = dict(
        margin=8, tensor_len=96, bpe_size=300, n_classes=2,
        embed_dim=10, hidden_dim=12, dropout_rate=0.1,
        lr=1e-2, batch_size=16, epochs=15, seed=3,
    )
    base.update(overrides)
    return TrainConfig(**base)


# ---------------------------------------------------------------------------
# accuracy / topk
# ---------------------------------------------------------------------------

def test_accuracy_basics():
    assert accuracy(["a", "b"], ["a", "b"]) == 1.0
    assert accuracy(["a", "b"], ["b", "a"]) == 0.0
    assert accuracy(["a", "b", "c"], ["a", "b", "x"]) == pytest.approx(2 / 3)


def test_accuracy_rejects_bad_shapes():
    with pytest.raises(ValueError):
        accuracy([], [])
    with pytest.raises(ValueError):
        accuracy(["a"], ["a", "b"])


def test_topk_membership_enumeration():
    golds = ["a", "b", "c"]
    # every gold sits inside its top-2 list here
    assert topk_recall([["a", "b"], ["c", "b"], ["b", "c"]], golds, 2) == 1.0
    # drop b from the middle list and one sample misses
    assert topk_recall([["a", "b"], ["c", "a"], ["b", "c"]], golds, 2) == pytest.approx(2 / 3)


def test_topk_k1_equals_accuracy():
    rng = np.random.default_rng(4)
    labels = ["a", "b", "c", "d"]
    for _ in range(20):
        n = int(rng.integers(1, 30))
        golds = [labels[i] for i in rng.integers(0, 4, n)]
        ranked = []
        for _ in range(n):
            order = rng.permutation(4)
            ranked.append([labels[j] for j in order])
        top1 = [r[0] for r in ranked]
        assert topk_recall(ranked, golds, 1) == accuracy(top1, golds)
        assert topk_recall(ranked, golds, 4) == 1.0


def test_topk_non_decreasing_in_k():
    rng = np.random.default_rng(5)
    labels = ["a", "b", "c", "d", "e"]
    for _ in range(20):
        n = int(rng.integers(1, 40))
        golds = [labels[i] for i in rng.integers(0, 5, n)]
        ranked = [[labels[j] for j in rng.permutation(5)] for _ in range(n)]
        values = [topk_recall(ranked, golds, k) for k in range(1, 6)]
        assert all(a <= b for a, b in zip(values, values[1:]))


def test_topk_rejects_bad_k():
    with pytest.raises(ValueError):
        topk_recall([["a"]], ["a"], 0)


# ---------------------------------------------------------------------------
# weighted one-vs-rest report
# ---------------------------------------------------------------------------

def test_prf_perfect():
    report = weighted_prf(["a", "b", "a"], ["a", "b", "a"])
    assert report.accuracy == 1.0
    assert report.weighted_precision == 1.0
    assert report.weighted_recall == 1.0
    assert report.weighted_f1 == 1.0
    assert report.zero_division_labels == ()


def test_prf_two_class_fixture():
    # golds [a,a,b], preds [a,b,b]: class a has precision 1 and recall 1/2,
    # class b has precision 1/2 and recall 1
    report = weighted_prf(["a", "b", "b"], ["a", "a", "b"])
    assert report.weighted_precision == pytest.approx(5 / 6, abs=1e-15)
    assert report.weighted_recall == pytest.approx(2 / 3, abs=1e-15)
    assert report.accuracy == pytest.approx(2 / 3, abs=1e-15)
    assert report.per_class["a"].support == 2
    assert report.per_class["b"].support == 1
    # f1 is averaged per class (both classes score 2/3 here), which differs
    # from the harmonic mean of the weighted P and R (20/27)
    assert report.weighted_f1 == pytest.approx(2 / 3, abs=1e-15)


def test_prf_single_class():
    report = weighted_prf(["a", "a", "a"], ["a", "a", "a"])
    assert report.per_class["a"].recall == report.accuracy == 1.0


def test_prf_zero_division_flag():
    vocab = TypeVocab(("a", "b"))
    report = weighted_prf(["a", "a"], ["a", "a"], vocab)
    assert report.zero_division_labels == ("b",)
    assert report.per_class["b"].precision == 0.0
    assert report.per_class["b"].support == 0
    assert sum(m.support for m in report.per_class.values()) == report.n_samples


def test_prf_rejects_label_outside_vocab():
    with pytest.raises(ValueError):
        weighted_prf(["a"], ["z"], TypeVocab(("a", "b")))


def test_prf_weighted_recall_is_accuracy():
    rng = np.random.default_rng(6)
    labels = ["a", "b", "c", "d", "e", "f"]
    for _ in range(50):
        n = int(rng.integers(1, 60))
        golds = [labels[i] for i in rng.integers(0, 6, n)]
        preds = [labels[i] for i in rng.integers(0, 6, n)]
        report = weighted_prf(preds, golds)
        assert abs(report.weighted_recall - report.accuracy) <= 1e-12
        assert 0.0 <= report.weighted_precision <= 1.0
        assert 0.0 <= report.weighted_f1 <= 1.0
        assert sum(m.support for m in report.per_class.values()) == n


# ---------------------------------------------------------------------------
# threshold sweep
# ---------------------------------------------------------------------------

SCORED = [
    ("a", 0.95, "a"),
    ("b", 0.85, "a"),
    ("a", 0.55, "a"),
    ("c", 0.35, "c"),
    ("b", 0.15, "a"),
]


def test_threshold_sweep_hand_fixture():
    rows = threshold_sweep_scored(SCORED)
    assert [r.threshold for r in rows] == list(DEFAULT_THRESHOLDS)
    assert [r.retained for r in rows] == [5, 5, 4, 4, 3, 3, 2, 2, 2, 1]
    assert rows[0].precision_retained == pytest.approx(3 / 5)
    assert rows[0].recall_all == pytest.approx(3 / 5)
    assert rows[2].precision_retained == pytest.approx(3 / 4)
    assert rows[2].recall_all == pytest.approx(3 / 5)
    assert rows[-1].precision_retained == pytest.approx(1.0)
    assert rows[-1].recall_all == pytest.approx(1 / 5)


def test_threshold_sweep_monotone_properties():
    rng = np.random.default_rng(7)
    labels = ["a", "b", "c"]
    for _ in range(25):
        n = int(rng.integers(1, 50))
        scored = [
            (labels[rng.integers(0, 3)], float(rng.random()), labels[rng.integers(0, 3)])
            for _ in range(n)
        ]
        rows = threshold_sweep_scored(scored)
        retained = [r.retained for r in rows]
        recalls = [r.recall_all for r in rows]
        assert retained == sorted(retained, reverse=True)
        assert all(a >= b - 1e-15 for a, b in zip(recalls, recalls[1:]))
        assert rows[0].retained == n


def test_threshold_sweep_zero_retained():
    rows = threshold_sweep_scored([("a", 0.05, "a")], thresholds=[0.5])
    assert rows[0].retained == 0
    assert rows[0].precision_retained == 0.0
    assert rows[0].f1 == 0.0


def test_threshold_sweep_rejects_empty():
    with pytest.raises(ValueError):
        threshold_sweep_scored([])


# ---------------------------------------------------------------------------
# model-level evaluation and sweeps on synthetic corpora
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def marker_run():
    samples = marker_samples(n_per_class=40, depth=0)
    vocab = samples_vocab(samples)
    config = small_config()
    run = prepare_run(config, samples=samples, bpe_vocab=vocab)
    params, _ = train_run(config, run)
    return config, vocab, run, params


def test_evaluate_model_learns_marker(marker_run):
    _, _, run, params = marker_run
    report = evaluate_model(params, run.test, run.type_vocab)
    assert report.accuracy > 0.9
    assert report.n_samples == len(run.test)
    assert abs(report.weighted_recall - report.accuracy) <= 1e-12


def test_score_dataset_shape(marker_run):
    _, _, run, params = marker_run
    scored = score_dataset(params, run.test, run.type_vocab)
    assert len(scored) == len(run.test)
    for pred, prob, gold in scored:
        assert pred in run.type_vocab and gold in run.type_vocab
        assert 0.0 <= prob <= 1.0


def test_threshold_sweep_on_model(marker_run):
    _, _, run, params = marker_run
    rows = threshold_sweep(params, run.test, run.type_vocab)
    assert rows[0].retained == len(run.test)
    retained = [r.retained for r in rows]
    assert retained == sorted(retained, reverse=True)
    assert rows[-1].precision_retained >= rows[0].precision_retained


def test_margin_sweep_finds_distant_signal():
    # marker sits 8 filler tokens plus a call behind the line: margin 2 sees
    # only filler, margin 16 sees the marker
    samples = marker_samples(n_per_class=40, depth=8)
    vocab = samples_vocab(samples)
    config = small_config(margin=16)
    rows = margin_sweep(config, samples, vocab, margins=(2, 16))
    assert [r.margin for r in rows] == [2, 16]
    assert rows[1].accuracy > rows[0].accuracy + 0.10
    for row in rows:
        assert 0.0 <= row.precision <= 1.0 and 0.0 <= row.f1 <= 1.0


def test_margin_sweep_reproducible():
    samples = marker_samples(n_per_class=15, depth=0)
    vocab = samples_vocab(samples)
    config = small_config(epochs=2)
    first = margin_sweep(config, samples, vocab, margins=(4,))
    second = margin_sweep(config, samples, vocab, margins=(4,))
    assert first == second


def test_ablation_context_gap():
    # names are shared across classes, so stripping context leaves nothing
    samples = marker_samples(n_per_class=40, depth=0)
    vocab = samples_vocab(samples)
    result = ablation_context(small_config(), samples, vocab)
    assert isinstance(result, AblationResult)
    assert result.with_context.accuracy >= result.without_context.accuracy + 0.3
    assert result.without_context.n_samples == result.with_context.n_samples


# ---------------------------------------------------------------------------
# dumps and report files
# ---------------------------------------------------------------------------

def make_predictions():
    return [
        Prediction("x", "a.py", 1, (("int", 0.9), ("str", 0.1))),
        Prediction("y", "a.py", 2, (("str", 0.6), ("int", 0.4))),
        Prediction("z", "b.py", 3, (("int", 0.5), ("str", 0.5))),
    ]


def test_prediction_dump_round_trip(tmp_path):
    rows = prediction_rows(make_predictions(), golds=["int", "str", "str"])
    path = tmp_path / "preds.jsonl"
    write_predictions(path, rows)
    loaded = read_predictions(path)
    assert loaded == rows
    assert loaded[0]["type"] == "int" and loaded[0]["prob"] == 0.9
    assert loaded[0]["topk"] == [
        {"type": "int", "prob": 0.9},
        {"type": "str", "prob": 0.1},
    ]
    assert loaded[0]["gold"] == "int"


def test_prediction_rows_without_gold():
    rows = prediction_rows(make_predictions())
    assert all("gold" not in row for row in rows)


def test_read_predictions_skips_blank_lines(tmp_path):
    path = tmp_path / "preds.jsonl"
    path.write_text('{"file": "a", "var_name": "x", "line": 1, "type": "int", "prob": 1.0}\n\n')
    assert len(read_predictions(path)) == 1


def test_dump_metrics():
    rows = prediction_rows(make_predictions(), golds=["int", "str", "str"])
    report, top2 = dump_metrics(rows, k=2)
    assert report.accuracy == pytest.approx(2 / 3)
    assert top2 == 1.0


def test_report_tsv(tmp_path):
    report = weighted_prf(["a", "b", "b"], ["a", "a", "b"])
    path = tmp_path / "report.tsv"
    write_report_tsv(path, report)
    lines = path.read_text().splitlines()
    assert lines[0].split("\t") == [
        "section", "label", "support", "accuracy", "precision", "recall", "f1",
    ]
    assert len(lines) == 4  # header + overall + two classes
    overall = lines[1].split("\t")
    assert overall[0] == "overall" and overall[2] == "3"
    assert overall[4] == "0.833333"


def test_threshold_tsv(tmp_path):
    path = tmp_path / "thresholds.tsv"
    write_threshold_tsv(path, threshold_sweep_scored(SCORED))
    lines = path.read_text().splitlines()
    assert lines[0] == "threshold\tretained\tprecision_retained\trecall_all\tf1"
    assert len(lines) == 11
    assert lines[1].startswith("0.000000\t5\t")


def test_margin_tsv(tmp_path):
    from ctxtyper.evaluation import MarginRow

    path = tmp_path / "margins.tsv"
    write_margin_tsv(path, [MarginRow(32, 0.5, 0.5, 0.5, 0.5), MarginRow(64, 0.75, 0.7, 0.75, 0.72)])
    lines = path.read_text().splitlines()
    assert lines[0] == "margin\taccuracy\tprecision\trecall\tf1"
    assert lines[1].split("\t")[0] == "32"
    assert lines[2].split("\t")[1] == "0.750000"


def test_ablation_tsv(tmp_path):
    on = weighted_prf(["a", "b"], ["a", "b"])
    off = weighted_prf(["a", "a"], ["a", "b"])
    path = tmp_path / "ablation.tsv"
    write_ablation_tsv(path, AblationResult(on, off))
    lines = path.read_text().splitlines()
    assert lines[0] == "context\taccuracy\tprecision\trecall\tf1"
    assert lines[1].startswith("on\t1.000000")
    assert lines[2].startswith("off\t0.500000")
