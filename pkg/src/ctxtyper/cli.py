"""Command-line interface for the annotation pipeline.

Subcommands cover the full flow: build-corpus labels a source tree,
train-bpe learns a subword vocabulary from the corpus, train fits the
classifier, annotate emits predictions for new files, and eval computes
reports and sweeps. Every run writes one JSON manifest next to its outputs
recording the resolved configuration, inputs, seed, and wall-clock time, so
any artifact can be reproduced from its manifest alone.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__
from . import bpe as bpe_mod
from . import corpus as corpus_mod
from . import evaluation as eval_mod
from .engine import (
    Checkpoint,
    TrainConfig,
    annotate_file,
    codec_from_checkpoint,
    encode_samples,
    load_checkpoint,
    prepare_run,
    save_checkpoint,
    train_run,
)
from .errors import CtxTyperError, LexError

log = logging.getLogger(__name__)

SEED_ENV_VAR = "CTXTYPER_SEED"


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: list[str]
    seed: int
    tool_version: str
    duration_s: float
    outputs: list[str]


def _write_manifest(path: Path, manifest: RunManifest) -> None:
    path.write_text(json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n")


def _resolve_seed(flag_value: int | None, file_value=None) -> int:
    """Explicit flag wins, then the environment, then the config file."""
    if flag_value is not None:
        return flag_value
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CtxTyperError(f"{SEED_ENV_VAR} must be an integer, got {env!r}")
    if file_value is not None:
        return int(file_value)
    return 0


def _read_config_file(path: Path) -> dict[str, str]:
    """key=value lines; blank lines and # comments are ignored."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CtxTyperError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _missing(path: Path) -> str | None:
    if not path.exists():
        return f"error: {path} does not exist"
    return None


# ---------------------------------------------------------------------------
# build-corpus
# ---------------------------------------------------------------------------

def _harvest_one(item: tuple[str, str, int]) -> tuple[str, list, str | None]:
    """Worker: (abs path, relative label, margin) -> (label, samples, error)."""
    path_str, rel, margin = item
    try:
        source = Path(path_str).read_text(encoding="utf-8")
        return rel, corpus_mod.harvest_file(source, rel, margin), None
    except (LexError, UnicodeDecodeError) as exc:
        return rel, [], str(exc)


def _cmd_build_corpus(args) -> int:
    start = time.monotonic()
    src = Path(args.src_dir)
    if msg := _missing(src):
        print(msg, file=sys.stderr)
        return 1
    files = sorted(p for p in src.rglob("*.py") if p.is_file())
    work = [(str(p), p.relative_to(src).as_posix(), args.margin) for p in files]
    if args.jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_harvest_one, work))
    else:
        results = [_harvest_one(item) for item in work]

    samples: list = []
    for rel, file_samples, error in results:
        if error is not None:
            if args.strict:
                print(f"error: {rel}: {error}", file=sys.stderr)
                return 1
            log.warning("skipping %s: %s", rel, error)
            continue
        samples.extend(file_samples)

    stats = corpus_mod.corpus_stats(samples)
    if not args.no_dedup:
        samples = corpus_mod.deduplicate(samples)
    out = Path(args.out_corpus)
    out.parent.mkdir(parents=True, exist_ok=True)
    corpus_mod.write_corpus(samples, out)
    stats_path = out.with_name(out.name + ".stats.tsv")
    _write_stats(stats_path, stats)

    seed = _resolve_seed(args.seed)
    config = {
        "margin": args.margin,
        "dedup": not args.no_dedup,
        "jobs": args.jobs,
        "strict": args.strict,
    }
    _write_manifest(
        out.with_name(out.name + ".manifest.json"),
        RunManifest(
            "build-corpus", config, [str(src)], seed, __version__,
            time.monotonic() - start, [str(out), str(stats_path)],
        ),
    )
    print(f"{len(samples)} samples from {len(files)} files -> {out}")
    return 0


def _write_stats(path: Path, stats) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# total\t{stats.total}\n")
        fh.write(f"# unique\t{stats.unique_total}\n")
        fh.write(f"# dedup_ratio\t{stats.dedup_ratio:.6f}\n")
        fh.write("label\traw\tdeduped\n")
        ranked = sorted(stats.per_label.items(), key=lambda kv: (-kv[1][0], kv[0]))
        for label, (raw, deduped) in ranked:
            fh.write(f"{label}\t{raw}\t{deduped}\n")


# ---------------------------------------------------------------------------
# train-bpe
# ---------------------------------------------------------------------------

def _corpus_token_texts(samples) -> list[str]:
    texts: list[str] = []
    for sample in samples:
        texts.extend(sample.before_ctx)
        texts.extend(sample.line_ctx)
        texts.extend(sample.after_ctx)
        texts.append(sample.var_name)
    return texts


def _cmd_train_bpe(args) -> int:
    start = time.monotonic()
    corpus_path = Path(args.corpus)
    if msg := _missing(corpus_path):
        print(msg, file=sys.stderr)
        return 1
    samples = corpus_mod.read_corpus(corpus_path)
    seed = _resolve_seed(args.seed)
    vocab = bpe_mod.train_bpe(_corpus_token_texts(samples), args.size, seed=seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    bpe_mod.save_vocab(vocab, out)
    _write_manifest(
        out.with_name(out.name + ".manifest.json"),
        RunManifest(
            "train-bpe", {"size": args.size}, [str(corpus_path)], seed,
            __version__, time.monotonic() - start, [str(out)],
        ),
    )
    print(f"vocabulary of {vocab.size} ids -> {out}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

_FLAG_TO_FIELD = {
    "margin": "margin",
    "tensor_len": "tensor_len",
    "bpe_size": "bpe_size",
    "classes": "n_classes",
    "embedding": "embedding_mode",
}


def _resolve_train_config(args) -> TrainConfig:
    values: dict = {}
    if args.config is not None:
        config_path = Path(args.config)
        if msg := _missing(config_path):
            raise CtxTyperError(msg.removeprefix("error: "))
        values.update(_read_config_file(config_path))
    for flag, field in _FLAG_TO_FIELD.items():
        flag_value = getattr(args, flag)
        if flag_value is not None:
            values[field] = flag_value
    if getattr(args, "no_context", False):
        values["context_enabled"] = False
    values["seed"] = _resolve_seed(args.seed, values.get("seed"))
    return TrainConfig.from_dict(values)


def _cmd_train(args) -> int:
    start = time.monotonic()
    corpus_path = Path(args.corpus)
    if msg := _missing(corpus_path):
        print(msg, file=sys.stderr)
        return 1
    config = _resolve_train_config(args)
    vocab = None
    inputs = [str(corpus_path)]
    if config.embedding_mode == "bpe":
        if args.bpe_vocab is None:
            print("error: bpe embedding mode needs a vocabulary file", file=sys.stderr)
            return 1
        vocab_path = Path(args.bpe_vocab)
        if msg := _missing(vocab_path):
            print(msg, file=sys.stderr)
            return 1
        vocab = bpe_mod.load_vocab(vocab_path)
        inputs.append(str(vocab_path))

    samples = corpus_mod.read_corpus(corpus_path)
    run = prepare_run(config, samples=samples, bpe_vocab=vocab)
    params, history = train_run(config, run)
    report = eval_mod.evaluate_model(params, run.test, run.type_vocab)

    out = Path(args.out_ckpt)
    out.parent.mkdir(parents=True, exist_ok=True)
    token_vocab = tuple(run.codec.words) if config.embedding_mode == "whole_token" else None
    save_checkpoint(
        Checkpoint(params, config, run.type_vocab.labels, token_vocab), out
    )
    log_path = out.with_name(out.name + ".log.tsv")
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("epoch\ttrain_loss\ttrain_acc\tvalid_loss\tvalid_acc\n")
        for row in history:
            fh.write(
                f"{row.epoch}\t{row.train_loss:.6f}\t{row.train_acc:.6f}"
                f"\t{row.valid_loss:.6f}\t{row.valid_acc:.6f}\n"
            )
    _write_manifest(
        out.with_name(out.name + ".manifest.json"),
        RunManifest(
            "train", config.to_dict(), inputs, config.seed, __version__,
            time.monotonic() - start, [str(out), str(log_path)],
        ),
    )
    best_valid = max((h.valid_acc for h in history), default=0.0)
    print(
        f"trained {config.epochs} epochs: best valid acc {best_valid:.4f}, "
        f"test acc {report.accuracy:.4f} -> {out}"
    )
    return 0


# ---------------------------------------------------------------------------
# annotate
# ---------------------------------------------------------------------------

def _cmd_annotate(args) -> int:
    start = time.monotonic()
    target = Path(args.path)
    ckpt_path = Path(args.ckpt)
    for p in (target, ckpt_path):
        if msg := _missing(p):
            print(msg, file=sys.stderr)
            return 1
    ckpt = load_checkpoint(ckpt_path)
    vocab = None
    inputs = [str(target), str(ckpt_path)]
    if args.bpe_vocab is not None:
        vocab_path = Path(args.bpe_vocab)
        if msg := _missing(vocab_path):
            print(msg, file=sys.stderr)
            return 1
        vocab = bpe_mod.load_vocab(vocab_path)
        inputs.append(str(vocab_path))
    codec = codec_from_checkpoint(ckpt, vocab)
    type_vocab = ckpt.type_vocab()

    if target.is_dir():
        files = sorted(p for p in target.rglob("*.py") if p.is_file())
        labels = [p.relative_to(target).as_posix() for p in files]
    else:
        files = [target]
        labels = [target.name]

    rows: list[dict] = []
    on_error = "raise" if args.strict else "skip"
    for path, rel in zip(files, labels):
        try:
            source = path.read_text(encoding="utf-8")
            predictions = annotate_file(
                source, ckpt.params, codec, type_vocab, ckpt.config,
                threshold=args.threshold, topk=args.topk, file=rel,
                on_error=on_error,
            )
        except (LexError, UnicodeDecodeError) as exc:
            print(f"error: {rel}: {exc}", file=sys.stderr)
            return 1
        rows.extend(eval_mod.prediction_rows(predictions))

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    eval_mod.write_predictions(out, rows)
    config = {"threshold": args.threshold, "topk": args.topk, "jobs": args.jobs}
    _write_manifest(
        out.with_name(out.name + ".manifest.json"),
        RunManifest(
            "annotate", config, inputs, ckpt.config.seed, __version__,
            time.monotonic() - start, [str(out)],
        ),
    )
    print(f"{len(rows)} annotations from {len(files)} files -> {out}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _cmd_eval(args) -> int:
    start = time.monotonic()
    if (args.dump is None) == (args.ckpt is None):
        print("error: pass exactly one of --dump or --ckpt with --corpus", file=sys.stderr)
        return 1
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs: list[str] = []
    inputs: list[str] = []
    seed = 0

    if args.dump is not None:
        dump_path = Path(args.dump)
        if msg := _missing(dump_path):
            print(msg, file=sys.stderr)
            return 1
        inputs.append(str(dump_path))
        rows = eval_mod.read_predictions(dump_path)
        if not rows:
            print(f"error: {dump_path} holds no predictions", file=sys.stderr)
            return 1
        if any("gold" not in row for row in rows):
            print(f"error: {dump_path} rows need a gold field", file=sys.stderr)
            return 1
        report, topk = eval_mod.dump_metrics(rows, k=args.topk)
        report_path = out_dir / "report.tsv"
        eval_mod.write_report_tsv(report_path, report)
        outputs.append(str(report_path))
        scored = [(row["type"], float(row["prob"]), row["gold"]) for row in rows]
        if args.sweep == "threshold":
            sweep_path = out_dir / "thresholds.tsv"
            eval_mod.write_threshold_tsv(sweep_path, eval_mod.threshold_sweep_scored(scored))
            outputs.append(str(sweep_path))
        elif args.sweep == "margin" or args.ablate_context:
            print("error: margin sweeps and ablation need --ckpt and --corpus", file=sys.stderr)
            return 1
        print(f"accuracy {report.accuracy:.4f}, top-{args.topk} recall {topk:.4f}")
    else:
        if args.corpus is None:
            print("error: --ckpt mode needs --corpus", file=sys.stderr)
            return 1
        ckpt_path, corpus_path = Path(args.ckpt), Path(args.corpus)
        for p in (ckpt_path, corpus_path):
            if msg := _missing(p):
                print(msg, file=sys.stderr)
                return 1
        ckpt = load_checkpoint(ckpt_path)
        inputs.extend([str(ckpt_path), str(corpus_path)])
        vocab = None
        if args.bpe_vocab is not None:
            vocab_path = Path(args.bpe_vocab)
            if msg := _missing(vocab_path):
                print(msg, file=sys.stderr)
                return 1
            vocab = bpe_mod.load_vocab(vocab_path)
            inputs.append(str(vocab_path))
        codec = codec_from_checkpoint(ckpt, vocab)
        samples = corpus_mod.read_corpus(corpus_path)
        seed = _resolve_seed(args.seed, ckpt.config.seed)
        config = ckpt.config if seed == ckpt.config.seed else TrainConfig.from_dict(
            {**ckpt.config.to_dict(), "seed": seed}
        )

        presplit = corpus_mod.split(samples, config.seed)
        test_encoded, _, _ = encode_samples(presplit[2], codec, config, ckpt.type_vocab())
        if not test_encoded:
            print("error: no evaluable samples in the test split", file=sys.stderr)
            return 1
        report = eval_mod.evaluate_model(ckpt.params, test_encoded, ckpt.type_vocab())
        report_path = out_dir / "report.tsv"
        eval_mod.write_report_tsv(report_path, report)
        outputs.append(str(report_path))
        if args.sweep == "threshold":
            sweep_path = out_dir / "thresholds.tsv"
            rows = eval_mod.threshold_sweep(ckpt.params, test_encoded, ckpt.type_vocab())
            eval_mod.write_threshold_tsv(sweep_path, rows)
            outputs.append(str(sweep_path))
        if args.sweep == "margin":
            margins = tuple(int(m) for m in args.sweep_margins.split(","))
            sweep_path = out_dir / "margins.tsv"
            rows = eval_mod.margin_sweep(config, samples, vocab, margins=margins)
            eval_mod.write_margin_tsv(sweep_path, rows)
            outputs.append(str(sweep_path))
        if args.ablate_context:
            ablation_path = out_dir / "ablation.tsv"
            result = eval_mod.ablation_context(config, samples, vocab)
            eval_mod.write_ablation_tsv(ablation_path, result)
            outputs.append(str(ablation_path))
        print(f"accuracy {report.accuracy:.4f} on {report.n_samples} test samples")

    _write_manifest(
        out_dir / "manifest.json",
        RunManifest(
            "eval",
            {"sweep": args.sweep, "ablate_context": args.ablate_context, "topk": args.topk},
            inputs, seed, __version__, time.monotonic() - start, outputs,
        ),
    )
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_seed(parser) -> None:
    parser.add_argument(
        "--seed", type=int, default=None,
        help=f"random seed (falls back to ${SEED_ENV_VAR}, then 0)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxtyper",
        description="Contextual type annotation for Python variables.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-corpus", help="label a source tree into a training corpus")
    p.add_argument("src_dir", help="directory walked for *.py files")
    p.add_argument("out_corpus", help="output corpus JSONL path")
    p.add_argument("--margin", type=int, default=128, help="context tokens kept per side")
    p.add_argument("--no-dedup", action="store_true", help="keep duplicate samples")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for file harvesting")
    p.add_argument("--strict", action="store_true", help="fail on unlexable files")
    _add_seed(p)
    p.set_defaults(func=_cmd_build_corpus)

    p = sub.add_parser("train-bpe", help="learn a subword vocabulary from a corpus")
    p.add_argument("corpus", help="corpus JSONL from build-corpus")
    p.add_argument("--size", type=int, required=True, help="target vocabulary size")
    p.add_argument("--out", required=True, help="output vocabulary file")
    _add_seed(p)
    p.set_defaults(func=_cmd_train_bpe)

    p = sub.add_parser("train", help="train a classifier on a corpus")
    p.add_argument("corpus", help="corpus JSONL from build-corpus")
    p.add_argument("bpe_vocab", nargs="?", default=None,
                   help="vocabulary file (unused with --embedding whole_token)")
    p.add_argument("--out-ckpt", required=True, help="output checkpoint path")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--margin", type=int, default=None)
    p.add_argument("--tensor-len", type=int, default=None)
    p.add_argument("--bpe-size", type=int, default=None)
    p.add_argument("--classes", type=int, default=None, help="maximum number of type classes")
    p.add_argument("--no-context", action="store_true", help="train on names only")
    p.add_argument("--embedding", choices=["bpe", "whole_token"], default=None)
    _add_seed(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("annotate", help="predict types for assignments in files")
    p.add_argument("path", help="a .py file or a directory")
    p.add_argument("ckpt", help="trained checkpoint")
    p.add_argument("bpe_vocab", nargs="?", default=None,
                   help="vocabulary file (bpe checkpoints only)")
    p.add_argument("--out", required=True, help="output annotation JSONL")
    p.add_argument("--threshold", type=float, default=0.0,
                   help="minimum top-1 probability to keep a prediction")
    p.add_argument("--topk", type=int, default=5, help="ranked labels kept per variable")
    p.add_argument("--jobs", type=int, default=1, help="accepted for interface uniformity")
    p.add_argument("--strict", action="store_true", help="fail on unlexable files")
    p.set_defaults(func=_cmd_annotate)

    p = sub.add_parser("eval", help="score a prediction dump or a checkpoint on a corpus")
    p.add_argument("--dump", default=None, help="prediction JSONL with gold labels")
    p.add_argument("--ckpt", default=None, help="trained checkpoint")
    p.add_argument("--corpus", default=None, help="corpus JSONL (with --ckpt)")
    p.add_argument("--bpe-vocab", default=None, help="vocabulary file (with --ckpt)")
    p.add_argument("--out-dir", required=True, help="directory for report files")
    p.add_argument("--sweep", choices=["threshold", "margin"], default=None)
    p.add_argument("--sweep-margins", default="32,64,128,256,512",
                   help="comma-separated margins for --sweep margin")
    p.add_argument("--ablate-context", action="store_true",
                   help="retrain with and without context and compare")
    p.add_argument("--topk", type=int, default=3, help="k for top-k recall")
    _add_seed(p)
    p.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CtxTyperError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
