"""Line-aware tokenizer for Python source text.

Permissive by design: it produces a plausible token stream for anything
that resembles Python and never checks grammar. Comments are kept as
ordinary tokens, string literals stay single tokens (including triple
quoted ones spanning several lines), and synthetic newline/indent/dedent
tokens record layout. Lines are 1-based, columns 0-based. Inputs that
cannot be scanned at all (unterminated strings) raise LexError so callers
can skip the file.
"""
from __future__ import annotations

import keyword
import re
from dataclasses import dataclass
from enum import Enum

from .errors import LexError


class TokenKind(str, Enum):
    NAME = "name"
    NUMBER = "number"
    STRING = "string"
    OPERATOR = "operator"
    PUNCTUATION = "punctuation"
    KEYWORD = "keyword"
    COMMENT = "comment"
    NEWLINE = "newline"
    INDENT = "indent"
    DEDENT = "dedent"


# Layout tokens: excluded from context windows and round-trip checks.
SYNTHETIC_KINDS = frozenset((TokenKind.NEWLINE, TokenKind.INDENT, TokenKind.DEDENT))


@dataclass(frozen=True)
class Token:
    text: str
    kind: TokenKind
    line: int
    col_start: int
    col_end: int

    def is_synthetic(self) -> bool:
        return self.kind in SYNTHETIC_KINDS


_NAME_RE = re.compile(r"[^\W\d]\w*", re.UNICODE)
_NUMBER_RE = re.compile(
    r"""
    0[xX](?:_?[0-9a-fA-F])+
    | 0[bB](?:_?[01])+
    | 0[oO](?:_?[0-7])+
    | (?:
          (?:\d(?:_?\d)*)?\.\d(?:_?\d)*
        | \d(?:_?\d)*\.(?!\.)
        | \d(?:_?\d)*
      )(?:[eE][+-]?\d(?:_?\d)*)?[jJ]?
    """,
    re.VERBOSE,
)
# Up to three prefix letters directly attached to a quote (r, b, f, u mixes).
_STRING_START_RE = re.compile(r"[rRbBuUfF]{0,3}['\"]")
_INDENT_RE = re.compile(r"[ \t\f]*")

# Longest first so e.g. ** wins over *.
_OPERATORS = (
    "**=", "//=", ">>=", "<<=",
    "!=", ">=", "<=", "==", "->", ":=",
    "+=", "-=", "*=", "/=", "%=", "@=", "&=", "|=", "^=",
    "**", "//", ">>", "<<",
    "+", "-", "*", "/", "%", "@", "&", "|", "^", "~", "<", ">", "=",
)
_PUNCT_CHARS = "()[]{},:;."
_OPENERS = "([{"
_CLOSERS = ")]}"


def _scan_string(lines: list[str], li: int, col: int) -> tuple[str, int, int]:
    """Consume one string literal starting at lines[li][col].

    Returns (verbatim text, end line index, end column). The caller has
    already verified that a prefix+quote begins here. Raises LexError when
    the literal never closes.
    """
    first = lines[li]
    pos = col
    while first[pos] not in "'\"":
        pos += 1
    quote = first[pos]
    delim = quote * 3 if first.startswith(quote * 3, pos) else quote
    pos += len(delim)
    triple = len(delim) == 3

    start_li = li
    parts: list[str] = []
    cur = first
    seg_start = col
    while True:
        i = pos
        while i < len(cur):
            ch = cur[i]
            if ch == "\\":
                i += 2  # backslash always shields the next character here
                continue
            if cur.startswith(delim, i):
                end = i + len(delim)
                parts.append(cur[seg_start:end])
                return "\n".join(parts), li, end
            i += 1
        # Reached end of the physical line without closing.
        escaped_newline = i == len(cur) + 1
        if not triple and not escaped_newline:
            raise LexError("unterminated string literal", start_li + 1)
        parts.append(cur[seg_start:])
        li += 1
        if li >= len(lines):
            raise LexError("unterminated string literal", start_li + 1)
        cur = lines[li]
        pos = 0
        seg_start = 0


def tokenize(source: str) -> list[Token]:
    """Tokenize ``source`` into a flat, position-sorted token list."""
    lines = source.splitlines()
    tokens: list[Token] = []
    indent_stack = [0]
    depth = 0  # bracket nesting; newlines inside brackets still emit tokens
    fresh = True  # True when the next line starts a new logical line
    li = 0

    while li < len(lines):
        text = lines[li]
        col = 0
        if fresh and depth == 0:
            ws_end = _INDENT_RE.match(text).end()
            rest = text[ws_end:]
            if rest and not rest.startswith("#"):
                width = len(text[:ws_end].expandtabs(8))
                line_no = li + 1
                if width > indent_stack[-1]:
                    indent_stack.append(width)
                    tokens.append(Token("", TokenKind.INDENT, line_no, 0, 0))
                else:
                    while width < indent_stack[-1]:
                        indent_stack.pop()
                        tokens.append(Token("", TokenKind.DEDENT, line_no, 0, 0))
                    if width > indent_stack[-1]:
                        # Inconsistent dedent; realign permissively.
                        indent_stack.append(width)
                        tokens.append(Token("", TokenKind.INDENT, line_no, 0, 0))
            col = ws_end

        continued = False
        while True:
            while col < len(text) and text[col] in " \t\f":
                col += 1
            if col >= len(text):
                break
            line_no = li + 1
            ch = text[col]

            if ch == "\\" and col == len(text) - 1:
                continued = True
                break

            if ch == "#":
                tokens.append(Token(text[col:], TokenKind.COMMENT, line_no, col, len(text)))
                col = len(text)
                continue

            if _STRING_START_RE.match(text, col):
                lit, end_li, end_col = _scan_string(lines, li, col)
                tok_end = end_col if end_li == li else len(text)
                tokens.append(Token(lit, TokenKind.STRING, line_no, col, tok_end))
                if end_li != li:
                    li = end_li
                    text = lines[li]
                col = end_col
                continue

            if ch.isdigit() or (ch == "." and text[col + 1 : col + 2].isdigit()):
                m = _NUMBER_RE.match(text, col)
                if m:
                    tokens.append(Token(m.group(), TokenKind.NUMBER, line_no, col, m.end()))
                    col = m.end()
                    continue

            m = _NAME_RE.match(text, col)
            if m:
                word = m.group()
                kind = TokenKind.KEYWORD if keyword.iskeyword(word) else TokenKind.NAME
                tokens.append(Token(word, kind, line_no, col, m.end()))
                col = m.end()
                continue

            if text.startswith("...", col):
                tokens.append(Token("...", TokenKind.PUNCTUATION, line_no, col, col + 3))
                col += 3
                continue

            op = next((o for o in _OPERATORS if text.startswith(o, col)), None)
            if op is not None:
                tokens.append(Token(op, TokenKind.OPERATOR, line_no, col, col + len(op)))
                col += len(op)
                continue

            if ch in _PUNCT_CHARS:
                if ch in _OPENERS:
                    depth += 1
                elif ch in _CLOSERS:
                    depth = max(depth - 1, 0)
            # Anything unrecognized degrades to one-character punctuation.
            tokens.append(Token(ch, TokenKind.PUNCTUATION, line_no, col, col + 1))
            col += 1

        if not continued:
            tokens.append(Token("", TokenKind.NEWLINE, li + 1, len(text), len(text)))
            fresh = depth == 0
        else:
            fresh = False
        li += 1

    last_line = max(len(lines), 1)
    while indent_stack[-1] > 0:
        indent_stack.pop()
        tokens.append(Token("", TokenKind.DEDENT, last_line, 0, 0))
    return tokens


def tokens_on_line(tokens: list[Token], line: int) -> list[Token]:
    """All tokens whose start position lies on the given 1-based line."""
    return [t for t in tokens if t.line == line]
