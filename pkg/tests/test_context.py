import numpy as np
import pytest

from ctxtyper.bpe import SEP_ID, BpeVocab, train_bpe
from ctxtyper.codec import BpeCodec
from ctxtyper.context import ContextWindow, assemble, extract_window
from ctxtyper.corpus import RawAnnotation, find_assignment_targets
from ctxtyper.errors import OversizeInputError, TargetNotFoundError
from ctxtyper.lexer import tokenize

THREE_LINES = "a = 1\nb = a\nc = b\n"
RAW = BpeVocab([])  # merge-free: one id per byte, so id counts are byte counts


def annotation(line, col_start=0, name="b"):
    return RawAnnotation("t.py", name, line, col_start, col_start + len(name), "int")


def test_window_middle_line():
    tokens = tokenize(THREE_LINES)
    window = extract_window(tokens, annotation(2), margin=3)
    assert window.before == ("a", "=", "1")
    assert window.line == ("b", "=", "a")
    assert window.after == ("c", "=", "b")
    assert window.name == "b"


def test_window_first_line_has_empty_before():
    tokens = tokenize(THREE_LINES)
    window = extract_window(tokens, annotation(1, name="a"), margin=5)
    assert window.before == ()
    assert window.after == ("b", "=", "a", "c", "=")


def test_window_margin_zero():
    tokens = tokenize(THREE_LINES)
    window = extract_window(tokens, annotation(2), margin=0)
    assert window.before == () and window.after == ()
    assert window.line == ("b", "=", "a")


def test_window_margin_larger_than_file():
    tokens = tokenize(THREE_LINES)
    window = extract_window(tokens, annotation(2), margin=99)
    assert window.before == ("a", "=", "1")
    assert window.after == ("c", "=", "b")


def test_window_excludes_layout_tokens():
    src = "def f():\n    x = 1\n    y = x\n    return y\n"
    tokens = tokenize(src)
    target = [t for t in find_assignment_targets(tokens) if t.name == "y"][0]
    window = extract_window(tokens, target, margin=4)
    assert "" not in window.before
    assert "" not in window.line
    assert "" not in window.after
    assert window.before == (":", "x", "=", "1")


def test_window_finds_target_shadowed_by_dedent():
    # a module-level assignment after a function body shares (line, col 0)
    # with the closing dedent token
    src = "def f():\n    return 1\n\n\nTOP = {}\n"
    tokens = tokenize(src)
    target = [t for t in find_assignment_targets(tokens) if t.name == "TOP"][0]
    window = extract_window(tokens, target, margin=2)
    assert window.name == "TOP"
    assert window.line == ("TOP", "=", "{", "}")


def test_window_includes_comments():
    src = "x = 1  # seed\ny = 2\n"
    tokens = tokenize(src)
    window = extract_window(tokens, annotation(2, name="y"), margin=4)
    assert window.before == ("x", "=", "1", "# seed")
    assert extract_window(tokens, annotation(2, name="y"), margin=2).before == ("1", "# seed")


def test_window_target_not_found():
    tokens = tokenize(THREE_LINES)
    with pytest.raises(TargetNotFoundError):
        extract_window(tokens, annotation(9), margin=2)
    with pytest.raises(TargetNotFoundError):
        extract_window(tokens, annotation(2, col_start=3), margin=2)


def test_window_rejects_negative_margin():
    tokens = tokenize(THREE_LINES)
    with pytest.raises(ValueError):
        extract_window(tokens, annotation(2), margin=-1)


FIXTURE = ContextWindow(
    before=("aa", "bb"), line=("x", "=", "1"), after=("cc",), name="x", margin=2
)
# With the merge-free vocab: before 4 ids, line 3, after 2, name 1, fixed part 7.


def seps_in(ids):
    return [i for i, v in enumerate(ids) if v == SEP_ID]


def test_assemble_layout():
    out = assemble(FIXTURE, RAW, tensor_len=64)
    ids = out.ids.tolist()
    a = ord("a")
    assert ids == [a, a, 98, 98, SEP_ID, 120, 61, 49, SEP_ID, 99, 99, SEP_ID, 120]
    assert out.sep_positions == (4, 8, 11)
    assert out.name_span == (12, 13)
    assert seps_in(ids) == list(out.sep_positions)
    assert out.ids.dtype == np.int64


def test_assemble_accepts_plain_vocab_or_codec():
    via_vocab = assemble(FIXTURE, RAW, tensor_len=64)
    via_codec = assemble(FIXTURE, BpeCodec(RAW), tensor_len=64)
    assert via_vocab.ids.tolist() == via_codec.ids.tolist()


def test_assemble_truncates_before_head_first():
    out = assemble(FIXTURE, RAW, tensor_len=11)
    assert out.ids.tolist() == [98, 98, SEP_ID, 120, 61, 49, SEP_ID, 99, 99, SEP_ID, 120]


def test_assemble_truncates_after_when_before_exhausted():
    out = assemble(FIXTURE, RAW, tensor_len=8)
    assert out.ids.tolist() == [SEP_ID, 120, 61, 49, SEP_ID, 99, SEP_ID, 120]


def test_assemble_exact_fit_of_fixed_part():
    out = assemble(FIXTURE, RAW, tensor_len=7)
    assert out.ids.tolist() == [SEP_ID, 120, 61, 49, SEP_ID, SEP_ID, 120]
    assert len(seps_in(out.ids.tolist())) == 3


def test_assemble_oversize_fixed_part_rejected():
    with pytest.raises(OversizeInputError):
        assemble(FIXTURE, RAW, tensor_len=6)


def test_assemble_empty_contexts_keep_three_separators():
    window = ContextWindow((), ("x", "=", "1"), (), "x", 0)
    out = assemble(window, RAW, tensor_len=32)
    assert out.ids.tolist() == [SEP_ID, 120, 61, 49, SEP_ID, SEP_ID, 120]
    assert out.sep_positions == (0, 4, 5)
    assert out.name_span == (6, 7)


def test_assemble_line_and_name_survive_any_cap():
    rng = np.random.default_rng(31)
    vocab = train_bpe(["alpha_beta", "beta_gamma", "alpha_gamma"] * 4, target_size=280)
    pool = ["alpha_beta", "beta_gamma", "x", "=", "fn", "(", ")", "alpha", "12"]
    for _ in range(150):
        pick = lambda n: tuple(pool[int(i)] for i in rng.integers(0, len(pool), n))
        window = ContextWindow(
            before=pick(int(rng.integers(0, 8))),
            line=pick(int(rng.integers(1, 5))),
            after=pick(int(rng.integers(0, 8))),
            name="alpha_beta",
            margin=8,
        )
        codec = BpeCodec(vocab)
        line_ids, name_ids = [], []
        for t in window.line:
            line_ids.extend(codec.encode_token(t))
        name_ids = codec.encode_token(window.name)
        fixed = 3 + len(line_ids) + len(name_ids)
        cap = int(rng.integers(fixed, fixed + 20))
        out = assemble(window, vocab, tensor_len=cap)
        ids = out.ids.tolist()
        assert len(ids) <= cap
        assert len(seps_in(ids)) == 3
        s1, s2, s3 = out.sep_positions
        assert ids[s1] == ids[s2] == ids[s3] == SEP_ID
        assert ids[s1 + 1 : s2] == line_ids
        assert ids[s3 + 1 :] == name_ids
        assert out.name_span == (s3 + 1, len(ids))


def test_assemble_is_deterministic():
    a = assemble(FIXTURE, RAW, tensor_len=10)
    b = assemble(FIXTURE, RAW, tensor_len=10)
    assert a.ids.tolist() == b.ids.tolist()
    assert a.sep_positions == b.sep_positions
    assert a.name_span == b.name_span
