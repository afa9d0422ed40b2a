"""Token-to-id codecs used when assembling model inputs.

Two interchangeable strategies: subword encoding through a trained BPE
vocabulary (the default), and a frequency-capped whole-token lookup that
maps every unseen token to UNK. Both expose encode_token, a sep_id, and a
total size so the assembler and the model stay agnostic of the choice.
"""
from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

from . import bpe
from .bpe import BpeVocab


class BpeCodec:
    """Subword codec over a trained byte-level BPE vocabulary."""

    kind = "bpe"

    def __init__(self, vocab: BpeVocab):
        self.vocab = vocab
        self.sep_id = bpe.SEP_ID
        self.pad_id = bpe.PAD_ID

    @property
    def size(self) -> int:
        return self.vocab.size

    def encode_token(self, text: str) -> list[int]:
        return bpe.encode(text, self.vocab)


class WholeTokenCodec:
    """One id per distinct token text; everything unseen becomes UNK."""

    kind = "whole_token"
    PAD = 0
    SEP = 1
    UNK = 2

    def __init__(self, words: Sequence[str]):
        self.words: list[str] = list(words)
        self.index: dict[str, int] = {w: i + 3 for i, w in enumerate(self.words)}
        self.sep_id = self.SEP
        self.pad_id = self.PAD

    @property
    def size(self) -> int:
        return 3 + len(self.words)

    def encode_token(self, text: str) -> list[int]:
        return [self.index.get(text, self.UNK)]

    @classmethod
    def from_token_texts(cls, texts: Iterable[str], max_words: int) -> "WholeTokenCodec":
        counts = Counter(texts)
        ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
        return cls([w for w, _ in ranked[:max_words]])
