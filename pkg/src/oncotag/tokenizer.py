"""Deterministic sentence splitting and tokenization with character offsets preserved.

Rules: tokens split on whitespace; leading/trailing punctuation becomes
single-character tokens; internal hyphens and slashes are their own tokens;
internal periods/commas split too unless they sit between digits ("9.7" stays
one token). A sentence ends after ".", "!" or "?" followed by whitespace and
an uppercase letter or digit, unless the period closes a known abbreviation.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Sequence

_SENTENCE_FINAL = {".", "!", "?"}
_ALWAYS_SPLIT = {"-", "/"}
_DIGIT_GLUE = {".", ","}


@dataclass(frozen=True)
class Token:
    surface: str
    start: int
    end: int


@dataclass(frozen=True)
class Sentence:
    index: int
    tokens: tuple[Token, ...]
    start: int
    end: int


@dataclass(frozen=True)
class AlignedSpan:
    """Token range covering a character span, plus any adjustment warnings."""

    sentence_index: int
    first_token: int
    last_token: int
    warnings: tuple[str, ...] = ()


_ABBREVIATIONS: tuple[str, ...] | None = None


def default_abbreviations() -> tuple[str, ...]:
    """Abbreviations that suppress a sentence break, loaded from the packaged list."""
    global _ABBREVIATIONS
    if _ABBREVIATIONS is None:
        text = resources.files("oncotag").joinpath("data/abbreviations.txt").read_text("utf-8")
        _ABBREVIATIONS = tuple(line.strip() for line in text.splitlines() if line.strip())
    return _ABBREVIATIONS


def _split_chunk(chunk: str, base: int) -> list[Token]:
    tokens: list[Token] = []
    i, j = 0, len(chunk)
    while i < j and not chunk[i].isalnum():
        tokens.append(Token(chunk[i], base + i, base + i + 1))
        i += 1
    trailing: list[Token] = []
    while j > i and not chunk[j - 1].isalnum():
        j -= 1
        trailing.append(Token(chunk[j], base + j, base + j + 1))
    # core is non-empty iff it starts and ends alphanumeric
    k = i
    for m in range(i, j):
        ch = chunk[m]
        if ch in _ALWAYS_SPLIT or (
            ch in _DIGIT_GLUE and not (chunk[m - 1].isdigit() and chunk[m + 1].isdigit())
        ):
            if k < m:
                tokens.append(Token(chunk[k:m], base + k, base + m))
            tokens.append(Token(ch, base + m, base + m + 1))
            k = m + 1
    if k < j:
        tokens.append(Token(chunk[k:j], base + k, base + j))
    tokens.extend(reversed(trailing))
    return tokens


def tokenize(text: str) -> list[Token]:
    """Offset-preserving tokens; every non-whitespace character lands in exactly one."""
    tokens: list[Token] = []
    n = len(text)
    i = 0
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        tokens.extend(_split_chunk(text[i:j], i))
        i = j
    return tokens


def _suppressed_by_abbreviation(text: str, period_end: int, abbreviations: Sequence[str]) -> bool:
    head = text[:period_end].lower()
    for abbrev in abbreviations:
        a = abbrev.lower()
        if not head.endswith(a):
            continue
        cut = len(head) - len(a)
        if cut == 0 or not head[cut - 1].isalnum():
            return True
    return False


def _boundary_after(text: str, token: Token, abbreviations: Sequence[str]) -> bool:
    pos = token.end
    if pos >= len(text) or not text[pos].isspace():
        return False
    k = pos
    while k < len(text) and text[k].isspace():
        k += 1
    if k >= len(text):
        return False
    nxt = text[k]
    if not (nxt.isupper() or nxt.isdigit()):
        return False
    if token.surface == "." and _suppressed_by_abbreviation(text, token.end, abbreviations):
        return False
    return True


def segment(text: str, abbreviations: Sequence[str] | None = None) -> list[Sentence]:
    """Split text into sentences of offset-preserving tokens. Empty text gives []."""
    abbrevs = default_abbreviations() if abbreviations is None else tuple(abbreviations)
    tokens = tokenize(text)
    sentences: list[Sentence] = []
    current: list[Token] = []

    def flush() -> None:
        if current:
            sentences.append(
                Sentence(len(sentences), tuple(current), current[0].start, current[-1].end)
            )
            current.clear()

    for token in tokens:
        current.append(token)
        if token.surface in _SENTENCE_FINAL and _boundary_after(text, token, abbrevs):
            flush()
    flush()
    return sentences


def align_span(sentences: Sequence[Sentence], start: int, end: int) -> AlignedSpan:
    """Map a character span onto the minimal covering token range.

    Boundaries inside a token expand to the whole token; spans crossing a
    sentence boundary are clipped to the sentence holding their first token.
    Both adjustments are reported in ``warnings``.
    """
    if start >= end:
        raise ValueError(f"invalid span [{start}, {end})")
    hits: list[tuple[int, int, Token]] = [
        (si, ti, tok)
        for si, sent in enumerate(sentences)
        for ti, tok in enumerate(sent.tokens)
        if tok.start < end and tok.end > start
    ]
    if not hits:
        raise ValueError(f"span [{start}, {end}) covers no token")
    warnings: list[str] = []
    first_sentence = hits[0][0]
    in_first = [h for h in hits if h[0] == first_sentence]
    if len(in_first) != len(hits):
        warnings.append(
            f"span [{start}, {end}) crosses a sentence boundary; clipped to sentence {first_sentence}"
        )
    first = in_first[0]
    last = in_first[-1]
    if start > first[2].start or end < last[2].end:
        warnings.append(
            f"span [{start}, {end}) adjusted to token boundaries [{first[2].start}, {last[2].end})"
        )
    return AlignedSpan(first_sentence, first[1], last[1], tuple(warnings))
