"""Byte-level BPE subword tokenizer: trainer, encoder, decoder, file format.

Ids 0..255 are the raw bytes, 256 and 257 are the PAD and SEP specials, and
merged symbols follow in creation order. Training repeatedly merges the most
frequent adjacent pair; ties go to the pair whose decoded byte strings are
lexicographically smallest (ids break the vanishing case of equal byte
strings). Encoding is total on any UTF-8 text because unseen input always
degrades to raw bytes, and decoding an encoder output restores the input
exactly.

The trainer keeps pair statistics incrementally with a lazy max-heap, which
is just a fast route to the same merge sequence a full recount would pick:
merging (l, r) only touches words that contain it, and counts of pairs over
old symbols can only fall, so stale heap entries are safe to reinsert.
"""
from __future__ import annotations

import heapq
import logging
from pathlib import Path
from typing import Iterable, Sequence

from .errors import BpeTrainingError, IdRangeError, VocabFormatError

log = logging.getLogger(__name__)

PAD_ID = 256
SEP_ID = 257
NUM_BASE_IDS = 258  # 256 bytes + PAD + SEP

_SPECIAL_TEXT = {PAD_ID: b"<pad>", SEP_ID: b"<sep>"}


class BpeVocab:
    """An ordered merge list plus derived symbol table."""

    def __init__(self, merges: Sequence[tuple[int, int]]):
        self.merges: list[tuple[int, int]] = list(merges)
        self.symbols: list[bytes] = [bytes([i]) for i in range(256)]
        self.symbols.append(_SPECIAL_TEXT[PAD_ID])
        self.symbols.append(_SPECIAL_TEXT[SEP_ID])
        for left, right in self.merges:
            size = len(self.symbols)
            for side in (left, right):
                if not 0 <= side < size or side in _SPECIAL_TEXT:
                    raise VocabFormatError(f"merge references invalid id {side}")
            self.symbols.append(self.symbols[left] + self.symbols[right])
        self.ranks: dict[tuple[int, int], int] = {
            pair: i for i, pair in enumerate(self.merges)
        }
        if len(self.ranks) != len(self.merges):
            raise VocabFormatError("duplicate merge pair")

    @property
    def size(self) -> int:
        return NUM_BASE_IDS + len(self.merges)

    def __eq__(self, other) -> bool:
        return isinstance(other, BpeVocab) and self.merges == other.merges


def _apply_merge(seq: list[int], pair: tuple[int, int], new_id: int) -> list[int]:
    """Replace every left-to-right occurrence of pair with new_id."""
    left, right = pair
    out: list[int] = []
    i = 0
    n = len(seq)
    while i < n:
        if i + 1 < n and seq[i] == left and seq[i + 1] == right:
            out.append(new_id)
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return out


def _adjacent_pairs(word: Sequence[int]) -> Iterable[tuple[int, int]]:
    return zip(word, word[1:])


def train_bpe(corpus_text: Iterable[str], target_size: int, seed: int = 0) -> BpeVocab:
    """Learn merges until the vocabulary reaches target_size.

    Stops early when no adjacent pair occurs at least twice. The seed is
    accepted for interface uniformity; the algorithm itself is fully
    deterministic.
    """
    del seed
    if target_size <= NUM_BASE_IDS:
        raise ValueError(f"target_size must exceed {NUM_BASE_IDS}, got {target_size}")
    if isinstance(corpus_text, str):
        # A bare string iterates into single characters, which can never
        # produce a pair; force callers to pass token texts explicitly.
        raise TypeError("train_bpe takes a sequence of token texts, not one string")

    words: dict[tuple[int, ...], int] = {}
    for text in corpus_text:
        encoded = tuple(text.encode("utf-8"))
        if encoded:
            words[encoded] = words.get(encoded, 0) + 1
    if not words:
        raise BpeTrainingError("corpus contains no text")

    symbols: list[bytes] = [bytes([i]) for i in range(256)]
    symbols.append(_SPECIAL_TEXT[PAD_ID])
    symbols.append(_SPECIAL_TEXT[SEP_ID])

    stats: dict[tuple[int, int], int] = {}
    index: dict[tuple[int, int], set[tuple[int, ...]]] = {}
    for word, freq in words.items():
        for pair in _adjacent_pairs(word):
            stats[pair] = stats.get(pair, 0) + freq
            index.setdefault(pair, set()).add(word)

    def heap_entry(pair: tuple[int, int], count: int):
        left, right = pair
        return (-count, symbols[left], symbols[right], left, right)

    heap = [heap_entry(pair, count) for pair, count in stats.items()]
    heapq.heapify(heap)

    merges: list[tuple[int, int]] = []
    while NUM_BASE_IDS + len(merges) < target_size and heap:
        neg_count, _, _, left, right = heapq.heappop(heap)
        pair = (left, right)
        count = -neg_count
        current = stats.get(pair, 0)
        if current != count:
            # Stale entry; reinsert at the true count if still mergeable.
            if current >= 2:
                heapq.heappush(heap, heap_entry(pair, current))
            continue
        if count < 2:
            break

        new_id = len(symbols)
        symbols.append(symbols[left] + symbols[right])
        merges.append(pair)

        for word in list(index.pop(pair, ())):
            freq = words.pop(word)
            replacement = tuple(_apply_merge(list(word), pair, new_id))
            words[replacement] = words.get(replacement, 0) + freq
            for old_pair in set(_adjacent_pairs(word)):
                index.get(old_pair, set()).discard(word)
            for old_pair in _adjacent_pairs(word):
                remaining = stats.get(old_pair, 0) - freq
                if remaining > 0:
                    stats[old_pair] = remaining
                else:
                    stats.pop(old_pair, None)
            for new_pair in _adjacent_pairs(replacement):
                stats[new_pair] = stats.get(new_pair, 0) + freq
            for new_pair in set(_adjacent_pairs(replacement)):
                index.setdefault(new_pair, set()).add(replacement)
                if new_id in new_pair:
                    # Pairs over pre-existing symbols only ever lose count,
                    # so only pairs touching the new symbol need entries.
                    heapq.heappush(heap, heap_entry(new_pair, stats[new_pair]))

    return BpeVocab(merges)


def encode(text: str, vocab: BpeVocab) -> list[int]:
    """Encode text to subword ids; total on any str, never emits PAD/SEP."""
    seq: list[int] = list(text.encode("utf-8"))
    ranks = vocab.ranks
    while len(seq) >= 2:
        best_rank = None
        best_pair = None
        for pair in zip(seq, seq[1:]):
            rank = ranks.get(pair)
            if rank is not None and (best_rank is None or rank < best_rank):
                best_rank = rank
                best_pair = pair
        if best_pair is None:
            break
        seq = _apply_merge(seq, best_pair, NUM_BASE_IDS + best_rank)
    return seq


def decode(ids: Sequence[int], vocab: BpeVocab) -> str:
    """Decode subword ids back to text. PAD/SEP and unknown ids are errors."""
    chunks = []
    for i in ids:
        if not 0 <= i < vocab.size:
            raise IdRangeError(f"id {i} outside vocabulary of size {vocab.size}")
        if i in _SPECIAL_TEXT:
            raise IdRangeError(f"id {i} is a special symbol and has no text")
        chunks.append(vocab.symbols[i])
    return b"".join(chunks).decode("utf-8")


# ---------------------------------------------------------------------------
# Vocabulary file: header line, then one merge per line as hex byte strings
# ---------------------------------------------------------------------------

def save_vocab(vocab: BpeVocab, path: str | Path) -> None:
    lines = [f"bpe-v1 {vocab.size}"]
    for left, right in vocab.merges:
        lines.append(f"{vocab.symbols[left].hex()} {vocab.symbols[right].hex()}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if load_vocab(path) != vocab:
        # Two distinct symbols with equal byte content make the textual
        # merge list ambiguous; refuse rather than save something that
        # would load as a different tokenizer.
        raise VocabFormatError("vocabulary is not representable in the merge file format")


def load_vocab(path: str | Path) -> BpeVocab:
    raw = Path(path).read_text(encoding="utf-8")
    lines = [line for line in raw.splitlines() if line.strip()]
    if not lines:
        raise VocabFormatError("empty vocabulary file")
    header = lines[0].split()
    if len(header) != 2 or header[0] != "bpe-v1":
        raise VocabFormatError(f"bad vocabulary header: {lines[0]!r}")
    try:
        declared = int(header[1])
    except ValueError as exc:
        raise VocabFormatError(f"bad vocabulary size: {header[1]!r}") from exc

    by_content: dict[bytes, int] = {bytes([i]): i for i in range(256)}
    merges: list[tuple[int, int]] = []
    for line in lines[1:]:
        parts = line.split()
        if len(parts) != 2:
            raise VocabFormatError(f"malformed merge line: {line!r}")
        try:
            left_bytes, right_bytes = bytes.fromhex(parts[0]), bytes.fromhex(parts[1])
        except ValueError as exc:
            raise VocabFormatError(f"malformed merge line: {line!r}") from exc
        try:
            left, right = by_content[left_bytes], by_content[right_bytes]
        except KeyError as exc:
            raise VocabFormatError(f"merge references unknown symbol: {line!r}") from exc
        new_id = NUM_BASE_IDS + len(merges)
        merges.append((left, right))
        by_content.setdefault(left_bytes + right_bytes, new_id)
    vocab = BpeVocab(merges)
    if vocab.size != declared:
        raise VocabFormatError(f"header declares size {declared}, file defines {vocab.size}")
    return vocab
