"""Corpus construction: syntactic labeling, cleaning, dedup, splits.

The labeler harvests (variable, type) pairs from plain source text using a
small set of conservative rules over the token stream. It only fires on
single assignment targets that are plain names at statement start; anything
ambiguous is skipped. Labels are strings: builtin type names from literal
and constructor forms, verbatim annotations, or capitalized callee names.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .context import extract_window
from .errors import SizingError
from .lexer import Token, TokenKind, tokenize

log = logging.getLogger(__name__)

# Builtin constructor names labeled verbatim when called directly.
BUILTIN_CONSTRUCTORS = frozenset(
    ("list", "dict", "set", "tuple", "str", "int", "float", "bool", "object", "complex", "type")
)

# The eleven basic types, most frequent first, for the fixed-vocab preset.
BASIC_TYPES = ("str", "int", "dict", "bool", "float", "list", "tuple", "object", "complex", "set", "type")

# Placeholder labels that carry no usable type.
_UNKNOWN_LABELS = frozenset(("?", "None", "NoneType", "<unknown>", "Any", "object?"))

MIN_SPLIT_SIZE = 5


@dataclass(frozen=True)
class RawAnnotation:
    file: str
    var_name: str
    line: int
    col_start: int
    col_end: int
    type_label: str


@dataclass(frozen=True)
class LabeledSample:
    var_name: str
    before_ctx: tuple[str, ...]
    line_ctx: tuple[str, ...]
    after_ctx: tuple[str, ...]
    type_label: str
    source_file: str
    line: int
    col_start: int
    col_end: int


@dataclass(frozen=True)
class AssignmentTarget:
    """A simple name being assigned, with the label when a rule applies."""

    name: str
    line: int
    col_start: int
    col_end: int
    inferred_label: str | None


class TypeVocab:
    """Label set for classification; index order is the class id order."""

    def __init__(self, labels: Sequence[str]):
        self.labels: tuple[str, ...] = tuple(labels)
        self.index: dict[str, int] = {label: i for i, label in enumerate(self.labels)}
        if len(self.index) != len(self.labels):
            raise ValueError("duplicate labels in type vocabulary")

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, TypeVocab) and self.labels == other.labels


def basic_type_vocab() -> TypeVocab:
    return TypeVocab(BASIC_TYPES)


# ---------------------------------------------------------------------------
# Statement grouping and the labeling rules
# ---------------------------------------------------------------------------

def _statements(tokens: Sequence[Token]) -> Iterable[list[Token]]:
    """Group non-layout tokens into simple statements.

    Boundaries are newlines at bracket depth zero, semicolons, and indent or
    dedent markers. Comments never join a statement.
    """
    current: list[Token] = []
    depth = 0
    for tok in tokens:
        if tok.kind in (TokenKind.INDENT, TokenKind.DEDENT):
            if current:
                yield current
                current = []
            continue
        if tok.kind == TokenKind.NEWLINE:
            if depth == 0 and current:
                yield current
                current = []
            continue
        if tok.kind == TokenKind.COMMENT:
            continue
        if tok.kind == TokenKind.PUNCTUATION:
            if tok.text in "([{":
                depth += 1
            elif tok.text in ")]}":
                depth = max(depth - 1, 0)
            elif tok.text == ";" and depth == 0:
                if current:
                    yield current
                    current = []
                continue
        current.append(tok)
    if current:
        yield current


def _number_label(text: str) -> str:
    if text[-1] in "jJ":
        return "complex"
    lowered = text.lower()
    if lowered.startswith(("0x", "0b", "0o")):
        return "int"
    if "." in text or "e" in lowered:
        return "float"
    return "int"


def _spans_to_end(rhs: Sequence[Token]) -> bool:
    """True when the bracket opened by rhs[0] closes exactly at rhs[-1]."""
    depth = 0
    for i, tok in enumerate(rhs):
        if tok.kind == TokenKind.PUNCTUATION:
            if tok.text in "([{":
                depth += 1
            elif tok.text in ")]}":
                depth -= 1
                if depth == 0:
                    return i == len(rhs) - 1
    return False


def _depth1_marks(rhs: Sequence[Token]) -> tuple[bool, bool, bool]:
    """(has_comma, has_colon_or_unpack, has_for) at depth 1 of rhs[0]'s bracket."""
    depth = 0
    comma = colon = has_for = False
    for tok in rhs:
        if tok.kind == TokenKind.PUNCTUATION and tok.text in "([{":
            depth += 1
            continue
        if tok.kind == TokenKind.PUNCTUATION and tok.text in ")]}":
            depth -= 1
            continue
        if depth != 1:
            continue
        if tok.text == ",":
            comma = True
        elif tok.text == ":" or tok.text == "**":
            colon = True
        elif tok.kind == TokenKind.KEYWORD and tok.text == "for":
            has_for = True
    return comma, colon, has_for


def _call_label(rhs: Sequence[Token]) -> str | None:
    """Rule for ``Name(...)`` and dotted ``mod.Name(...)`` constructor calls."""
    idx = 0
    names: list[str] = []
    while True:
        if idx >= len(rhs) or rhs[idx].kind != TokenKind.NAME:
            return None
        names.append(rhs[idx].text)
        idx += 1
        if idx < len(rhs) and rhs[idx].text == "." and rhs[idx].kind == TokenKind.PUNCTUATION:
            idx += 1
            continue
        break
    if idx >= len(rhs) or rhs[idx].text != "(":
        return None
    if not _spans_to_end(rhs[idx:]):
        return None
    callee = names[-1]
    if len(names) == 1 and callee in BUILTIN_CONSTRUCTORS:
        return callee
    if callee[:1].isupper():
        return callee
    return None


def _classify_rhs(rhs: Sequence[Token]) -> str | None:
    if not rhs:
        return None
    depth = 0
    for tok in rhs:
        if tok.kind == TokenKind.PUNCTUATION:
            if tok.text in "([{":
                depth += 1
            elif tok.text in ")]}":
                depth = max(depth - 1, 0)
            elif tok.text == "," and depth == 0:
                return "tuple"  # bare tuple like x = 1, 2
    first = rhs[0]
    if len(rhs) == 1:
        if first.kind == TokenKind.NUMBER:
            return _number_label(first.text)
        if first.kind == TokenKind.STRING:
            return "str"
        if first.kind == TokenKind.KEYWORD and first.text in ("True", "False"):
            return "bool"
        return None
    if (
        len(rhs) == 2
        and first.kind == TokenKind.OPERATOR
        and first.text in ("+", "-")
        and rhs[1].kind == TokenKind.NUMBER
    ):
        return _number_label(rhs[1].text)
    if first.kind == TokenKind.PUNCTUATION and first.text == "[" and _spans_to_end(rhs):
        return "list"  # display or comprehension
    if first.kind == TokenKind.PUNCTUATION and first.text == "{" and _spans_to_end(rhs):
        if len(rhs) == 2:
            return "dict"  # {} is a dict, never a set
        _, colon, _ = _depth1_marks(rhs)
        return "dict" if colon else "set"
    if first.kind == TokenKind.PUNCTUATION and first.text == "(" and _spans_to_end(rhs):
        if len(rhs) == 2:
            return "tuple"  # ()
        comma, _, has_for = _depth1_marks(rhs)
        if comma and not has_for:
            return "tuple"
        return None  # parenthesized expression or generator
    return _call_label(rhs)


def find_assignment_targets(tokens: Sequence[Token]) -> list[AssignmentTarget]:
    """All simple assignment targets, labeled where a rule is decisive.

    The annotator reuses this discovery with the label requirement dropped,
    so labeling and annotation always agree on what counts as a target.
    """
    targets: list[AssignmentTarget] = []
    for stmt in _statements(tokens):
        if len(stmt) < 3 or stmt[0].kind != TokenKind.NAME:
            continue
        head = stmt[0]
        sep = stmt[1]
        label: str | None = None
        if sep.kind == TokenKind.PUNCTUATION and sep.text == ":":
            # Annotated assignment: the declared type wins verbatim.
            eq = None
            depth = 0
            for i, tok in enumerate(stmt[2:], start=2):
                if tok.kind == TokenKind.PUNCTUATION and tok.text in "([{":
                    depth += 1
                elif tok.kind == TokenKind.PUNCTUATION and tok.text in ")]}":
                    depth -= 1
                elif depth == 0 and tok.kind == TokenKind.OPERATOR and tok.text == "=":
                    eq = i
                    break
            if eq is None or eq == 2:
                continue
            label = "".join(t.text for t in stmt[2:eq])
        elif sep.kind == TokenKind.OPERATOR and sep.text == "=":
            rhs = stmt[2:]
            depth = 0
            chained = False
            for tok in rhs:
                if tok.kind == TokenKind.PUNCTUATION and tok.text in "([{":
                    depth += 1
                elif tok.kind == TokenKind.PUNCTUATION and tok.text in ")]}":
                    depth = max(depth - 1, 0)
                elif depth == 0 and tok.kind == TokenKind.OPERATOR and tok.text == "=":
                    chained = True
                    break
            if chained or not rhs:
                continue
            label = _classify_rhs(rhs)
        else:
            continue
        targets.append(
            AssignmentTarget(head.text, head.line, head.col_start, head.col_end, label)
        )
    return targets


def label_file(tokens: Sequence[Token], source: str = "<memory>") -> list[RawAnnotation]:
    """Apply the labeling rules to one file's token stream."""
    return [
        RawAnnotation(source, t.name, t.line, t.col_start, t.col_end, t.inferred_label)
        for t in find_assignment_targets(tokens)
        if t.inferred_label
    ]


def clean(annotations: Iterable[RawAnnotation]) -> list[RawAnnotation]:
    """Drop annotations whose label is empty, unknown, or a placeholder."""
    kept = []
    for ann in annotations:
        label = ann.type_label.strip()
        if not label or label in _UNKNOWN_LABELS:
            continue
        if "?" in label or "<" in label or ">" in label:
            continue
        kept.append(ann)
    return kept


# ---------------------------------------------------------------------------
# Samples, dedup, splits, vocab, stats
# ---------------------------------------------------------------------------

def build_samples(
    annotations: Iterable[RawAnnotation], tokens: Sequence[Token], margin: int
) -> list[LabeledSample]:
    """Attach token context windows to each annotation."""
    samples = []
    for ann in annotations:
        window = extract_window(tokens, ann, margin)
        samples.append(
            LabeledSample(
                var_name=ann.var_name,
                before_ctx=window.before,
                line_ctx=window.line,
                after_ctx=window.after,
                type_label=ann.type_label,
                source_file=ann.file,
                line=ann.line,
                col_start=ann.col_start,
                col_end=ann.col_end,
            )
        )
    return samples


def _dedup_key(sample: LabeledSample):
    return (sample.var_name, sample.before_ctx, sample.line_ctx, sample.after_ctx, sample.type_label)


def deduplicate(samples: Sequence[LabeledSample]) -> list[LabeledSample]:
    """Keep the first of every (name, contexts, label) collision, order stable."""
    seen = set()
    kept = []
    for sample in samples:
        key = _dedup_key(sample)
        if key in seen:
            continue
        seen.add(key)
        kept.append(sample)
    return kept


def split(
    samples: Sequence[LabeledSample], seed: int
) -> tuple[list[LabeledSample], list[LabeledSample], list[LabeledSample]]:
    """Shuffle and partition 60/20/20 by count; remainders go to train."""
    n = len(samples)
    if n < MIN_SPLIT_SIZE:
        raise SizingError(f"need at least {MIN_SPLIT_SIZE} samples to split, got {n}")
    n_valid = n // 5
    n_test = n // 5
    n_train = n - n_valid - n_test
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [samples[i] for i in order]
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_valid],
        shuffled[n_train + n_valid :],
    )


def build_type_vocab(samples: Sequence[LabeledSample], max_classes: int) -> TypeVocab:
    """Top labels by frequency, ties broken lexicographically."""
    if max_classes < 1:
        raise ValueError("max_classes must be positive")
    counts = Counter(s.type_label for s in samples)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return TypeVocab([label for label, _ in ranked[:max_classes]])


@dataclass(frozen=True)
class CorpusStats:
    total: int
    unique_total: int
    dedup_ratio: float
    per_label: dict[str, tuple[int, int]]  # label -> (raw count, deduped count)


def corpus_stats(samples: Sequence[LabeledSample]) -> CorpusStats:
    """Raw and post-dedup counts per label plus the duplicate ratio."""
    total = len(samples)
    deduped = deduplicate(samples)
    raw = Counter(s.type_label for s in samples)
    kept = Counter(s.type_label for s in deduped)
    per_label = {label: (raw[label], kept.get(label, 0)) for label in raw}
    ratio = (total - len(deduped)) / total if total else 0.0
    return CorpusStats(total, len(deduped), ratio, per_label)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def sample_to_record(sample: LabeledSample) -> dict:
    return {
        "file": sample.source_file,
        "var_name": sample.var_name,
        "line": sample.line,
        "col_start": sample.col_start,
        "col_end": sample.col_end,
        "type_label": sample.type_label,
        "before_ctx": list(sample.before_ctx),
        "line_ctx": list(sample.line_ctx),
        "after_ctx": list(sample.after_ctx),
    }


def record_to_sample(record: dict) -> LabeledSample:
    return LabeledSample(
        var_name=record["var_name"],
        before_ctx=tuple(record["before_ctx"]),
        line_ctx=tuple(record["line_ctx"]),
        after_ctx=tuple(record["after_ctx"]),
        type_label=record["type_label"],
        source_file=record["file"],
        line=record["line"],
        col_start=record["col_start"],
        col_end=record["col_end"],
    )


def write_corpus(samples: Iterable[LabeledSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample_to_record(sample), ensure_ascii=False) + "\n")


def read_corpus(path: str | Path) -> list[LabeledSample]:
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                samples.append(record_to_sample(json.loads(line)))
    return samples


def harvest_file(source: str, path_label: str, margin: int) -> list[LabeledSample]:
    """Lex, label, clean, and window one file's text. Raises LexError."""
    tokens = tokenize(source)
    annotations = clean(label_file(tokens, path_label))
    return build_samples(annotations, tokens, margin)
