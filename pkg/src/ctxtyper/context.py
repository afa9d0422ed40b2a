"""Context windows around an assignment and their id-sequence layout.

A window holds up to ``margin`` non-layout tokens on each side of the
target's line plus the full line itself. The assembled id sequence is

    ids(before) SEP ids(line) SEP ids(after) SEP ids(name)

with exactly three separators. When the sequence would exceed the length
cap, ids are dropped from the head of the before segment first, then from
the head of the after segment; the line and name segments are never
touched, and an input whose fixed part alone exceeds the cap is rejected.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bpe import BpeVocab
from .codec import BpeCodec
from .errors import OversizeInputError, TargetNotFoundError
from .lexer import Token


@dataclass(frozen=True)
class ContextWindow:
    before: tuple[str, ...]
    line: tuple[str, ...]
    after: tuple[str, ...]
    name: str
    margin: int


@dataclass(frozen=True, eq=False)
class ModelInput:
    ids: np.ndarray  # int64, length <= the cap used at assembly
    sep_positions: tuple[int, int, int]
    name_span: tuple[int, int]  # half-open range of the name's ids


def extract_window(tokens: Sequence[Token], target, margin: int) -> ContextWindow:
    """Window of lexemes around the target's line.

    ``target`` needs .line and .col_start (annotations and assignment
    targets both qualify). Layout tokens never enter a window; comments and
    string literals do.
    """
    if margin < 0:
        raise ValueError("margin must be non-negative")
    hit = None
    for tok in tokens:
        if tok.is_synthetic():
            # dedents share (line, column 0) with real module-level tokens
            continue
        if tok.line == target.line and tok.col_start == target.col_start:
            hit = tok
            break
    if hit is None:
        raise TargetNotFoundError(
            f"no token at line {target.line}, column {target.col_start}"
        )
    real = [t for t in tokens if not t.is_synthetic()]
    before = [t.text for t in real if t.line < target.line]
    line_toks = [t.text for t in real if t.line == target.line]
    after = [t.text for t in real if t.line > target.line]
    return ContextWindow(
        before=tuple(before[-margin:] if margin else ()),
        line=tuple(line_toks),
        after=tuple(after[:margin]),
        name=hit.text,
        margin=margin,
    )


def assemble(window: ContextWindow, codec, tensor_len: int) -> ModelInput:
    """Encode a window into the fixed four-segment id layout."""
    if isinstance(codec, BpeVocab):
        codec = BpeCodec(codec)
    sep = codec.sep_id

    def encode_segment(texts: Sequence[str]) -> list[int]:
        out: list[int] = []
        for text in texts:
            out.extend(codec.encode_token(text))
        return out

    before_ids = encode_segment(window.before)
    line_ids = encode_segment(window.line)
    after_ids = encode_segment(window.after)
    name_ids = encode_segment((window.name,))

    fixed = 3 + len(line_ids) + len(name_ids)
    if fixed > tensor_len:
        raise OversizeInputError(
            f"line plus name need {fixed} ids, cap is {tensor_len}"
        )
    overflow = fixed + len(before_ids) + len(after_ids) - tensor_len
    if overflow > 0:
        drop_before = min(overflow, len(before_ids))
        before_ids = before_ids[drop_before:]
        drop_after = overflow - drop_before
        if drop_after:
            after_ids = after_ids[drop_after:]

    ids: list[int] = []
    ids.extend(before_ids)
    first_sep = len(ids)
    ids.append(sep)
    ids.extend(line_ids)
    second_sep = len(ids)
    ids.append(sep)
    ids.extend(after_ids)
    third_sep = len(ids)
    ids.append(sep)
    name_start = len(ids)
    ids.extend(name_ids)

    return ModelInput(
        ids=np.asarray(ids, dtype=np.int64),
        sep_positions=(first_sep, second_sep, third_sep),
        name_span=(name_start, len(ids)),
    )
