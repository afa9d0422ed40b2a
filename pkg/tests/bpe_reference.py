"""Brute-force reference implementations for checking the BPE module.

Everything here recomputes from first principles on every step: full pair
recounts, no heaps, no incremental bookkeeping. Slow but obviously correct,
which is the point.
"""
from collections import Counter

NUM_BASE_IDS = 258


def reference_train(texts, target_size):
    """Most-frequent-pair merges by exhaustive recount. Returns the merge list."""
    words = Counter(tuple(t.encode("utf-8")) for t in texts if t)
    symbols = [bytes([i]) for i in range(256)] + [b"<pad>", b"<sep>"]
    merges = []
    while NUM_BASE_IDS + len(merges) < target_size:
        counts = Counter()
        for word, freq in words.items():
            for pair in zip(word, word[1:]):
                counts[pair] += freq
        if not counts:
            break
        # Highest count; ties to the smallest decoded byte strings, then ids.
        pair, count = min(
            counts.items(),
            key=lambda kv: (-kv[1], symbols[kv[0][0]], symbols[kv[0][1]], kv[0]),
        )
        if count < 2:
            break
        new_id = len(symbols)
        symbols.append(symbols[pair[0]] + symbols[pair[1]])
        merges.append(pair)
        rewritten = Counter()
        for word, freq in words.items():
            rewritten[reference_apply(word, pair, new_id)] += freq
        words = rewritten
    return merges


def reference_apply(seq, pair, new_id):
    out = []
    i = 0
    while i < len(seq):
        if i + 1 < len(seq) and (seq[i], seq[i + 1]) == pair:
            out.append(new_id)
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return tuple(out)


def reference_encode(text, merges):
    """Apply every merge in order, left to right, one full pass each."""
    seq = tuple(text.encode("utf-8"))
    for rank, pair in enumerate(merges):
        seq = reference_apply(seq, pair, NUM_BASE_IDS + rank)
    return list(seq)


def random_corpus(rng, max_bytes=1024):
    """A list of short words over a small alphabet, at most max_bytes total."""
    alphabet = "abcdefxyz_()[]01"
    words = []
    budget = rng.integers(32, max_bytes + 1)
    used = 0
    while used < budget:
        length = int(rng.integers(1, 12))
        word = "".join(alphabet[int(i)] for i in rng.integers(0, len(alphabet), length))
        words.append(word)
        used += length
    return words


def random_text(rng, max_chars=64):
    """Random unicode text avoiding surrogates; always valid UTF-8."""
    length = int(rng.integers(0, max_chars + 1))
    chars = []
    for _ in range(length):
        if rng.random() < 0.7:
            cp = int(rng.integers(32, 127))
        else:
            cp = int(rng.integers(0x80, 0x2FFF))
        chars.append(chr(cp))
    return "".join(chars)
