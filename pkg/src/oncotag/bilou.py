"""BILOU tag codec: token-range spans to per-layer tag sequences and back.

One tag sequence per concept type ("layer"), so spans of different types may
overlap freely. Each layer uses 9 tags: O, B/I/L/U and their N- (Non-study)
variants, e.g. B-N-Treatment. Decoding is total: structurally invalid model
output is repaired deterministically.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import CONCEPT_TYPES, ConceptAnnotation, ConceptType, Document
from .tokenizer import Sentence, align_span

POSITIONS = ("B", "I", "L", "U")


@dataclass(frozen=True)
class Tag:
    position: str  # one of B, I, L, U, O
    concept_type: ConceptType | None = None
    non_study: bool = False

    def __post_init__(self) -> None:
        if self.position == "O":
            if self.concept_type is not None or self.non_study:
                raise ValueError("O tag carries no concept type or Non-study flag")
        elif self.position in POSITIONS:
            if self.concept_type is None:
                raise ValueError(f"{self.position} tag requires a concept type")
        else:
            raise ValueError(f"unknown tag position {self.position!r}")


O_TAG = Tag("O")


@dataclass(frozen=True)
class TokenSpan:
    """Inclusive token range [first, last] within one sentence."""

    first: int
    last: int
    concept_type: ConceptType
    non_study: bool = False


@dataclass(frozen=True)
class TagSequence:
    concept_type: ConceptType
    tags: tuple[Tag, ...]


def tag_to_string(tag: Tag) -> str:
    if tag.position == "O":
        return "O"
    prefix = f"{tag.position}-N-" if tag.non_study else f"{tag.position}-"
    return prefix + tag.concept_type.value


def tag_from_string(label: str) -> Tag:
    if label == "O":
        return O_TAG
    parts = label.split("-")
    if len(parts) == 2:
        position, type_name = parts
        non_study = False
    elif len(parts) == 3 and parts[1] == "N":
        position, _, type_name = parts
        non_study = True
    else:
        raise ValueError(f"unparseable tag {label!r}")
    return Tag(position, ConceptType(type_name), non_study)


def layer_labels(concept_type: ConceptType) -> tuple[str, ...]:
    """The 9-tag vocabulary of one layer, O first."""
    labels = ["O"]
    for non_study in (False, True):
        for position in POSITIONS:
            labels.append(tag_to_string(Tag(position, concept_type, non_study)))
    return tuple(labels)


def encode(sentence: Sentence, spans: Iterable[TokenSpan], layer: ConceptType) -> TagSequence:
    """Encode non-overlapping token spans of one layer as a BILOU tag sequence."""
    n = len(sentence.tokens)
    ordered = sorted(spans, key=lambda s: (s.first, s.last))
    for span in ordered:
        if span.concept_type != layer:
            raise ValueError(f"span {span} does not belong to layer {layer.value}")
        if not (0 <= span.first <= span.last < n):
            raise ValueError(f"span {span} out of range for sentence of {n} tokens")
    for a, b in zip(ordered, ordered[1:]):
        if b.first <= a.last:
            raise ValueError(f"overlapping spans {a} and {b}")
    tags: list[Tag] = [O_TAG] * n
    for span in ordered:
        if span.first == span.last:
            tags[span.first] = Tag("U", layer, span.non_study)
        else:
            tags[span.first] = Tag("B", layer, span.non_study)
            tags[span.last] = Tag("L", layer, span.non_study)
            for i in range(span.first + 1, span.last):
                tags[i] = Tag("I", layer, span.non_study)
    return TagSequence(layer, tuple(tags))


def decode(seq: TagSequence) -> tuple[TokenSpan, ...]:
    """Decode a tag sequence into ordered, non-overlapping token spans.

    Total function with deterministic repair: an I/L run without an opening B
    opens at its first tag; an unclosed B run closes at the end of its
    contiguous run; a run's Non-study flag comes from its first tag.
    """
    spans: list[TokenSpan] = []
    layer = seq.concept_type
    open_first: int | None = None
    open_non_study = False

    def close(last: int) -> None:
        nonlocal open_first
        if open_first is not None:
            spans.append(TokenSpan(open_first, last, layer, open_non_study))
            open_first = None

    for i, tag in enumerate(seq.tags):
        position = tag.position
        if position == "O":
            close(i - 1)
        elif position == "U":
            close(i - 1)
            spans.append(TokenSpan(i, i, layer, tag.non_study))
        elif position == "B":
            close(i - 1)
            open_first = i
            open_non_study = tag.non_study
        elif position == "I":
            if open_first is None:
                open_first = i
                open_non_study = tag.non_study
        else:  # L
            if open_first is None:
                open_first = i
                open_non_study = tag.non_study
            close(i)
    close(len(seq.tags) - 1)
    return tuple(spans)


def resolve_overlaps(spans: Iterable[TokenSpan], policy: str = "error") -> list[TokenSpan]:
    """Reduce same-layer spans to a non-overlapping subset.

    ``error`` fails on the first overlapping pair; ``longest_wins`` keeps the
    longer span, ties going to the earlier start. ``priority`` is rejected:
    there is nothing to prioritize within a single layer.
    """
    if policy == "priority":
        raise ValueError("priority policy is not applicable within a single layer")
    if policy not in ("error", "longest_wins"):
        raise ValueError(f"unknown overlap policy {policy!r}")
    ordered = sorted(spans, key=lambda s: (s.first, s.last))
    if policy == "error":
        for a, b in zip(ordered, ordered[1:]):
            if b.first <= a.last:
                raise ValueError(f"overlapping spans {a} and {b}")
        return ordered
    kept: list[TokenSpan] = []
    for span in sorted(ordered, key=lambda s: (-(s.last - s.first), s.first, s.last)):
        if all(span.last < k.first or span.first > k.last for k in kept):
            kept.append(span)
    return sorted(kept, key=lambda s: (s.first, s.last))


def aligned_layer_spans(
    doc: Document,
) -> tuple[dict[ConceptType, dict[int, list[TokenSpan]]], list[str]]:
    """Map gold annotations onto per-layer, per-sentence token spans.

    Returns the span table and the alignment warnings (boundary adjustments and
    cross-sentence clips) prefixed with doc and annotation ids.
    """
    if doc.sentences is None:
        raise ValueError(f"document {doc.doc_id} has not been tokenized")
    layers: dict[ConceptType, dict[int, list[TokenSpan]]] = {t: {} for t in CONCEPT_TYPES}
    warnings: list[str] = []
    for ann in doc.annotations:
        aligned = align_span(doc.sentences, ann.start, ann.end)
        warnings.extend(f"{doc.doc_id}/{ann.id}: {w}" for w in aligned.warnings)
        span = TokenSpan(aligned.first_token, aligned.last_token, ann.concept_type, ann.non_study)
        layers[ann.concept_type].setdefault(aligned.sentence_index, []).append(span)
    return layers, warnings


def sentence_tag_columns(doc: Document) -> list[list[tuple]]:
    """Per sentence, rows of (token, tag-per-layer) using longest-wins overlap resolution."""
    layers, _ = aligned_layer_spans(doc)
    out = []
    assert doc.sentences is not None
    for si, sent in enumerate(doc.sentences):
        per_layer = {}
        for t in CONCEPT_TYPES:
            spans = resolve_overlaps(layers[t].get(si, []), "longest_wins")
            per_layer[t] = encode(sent, spans, t).tags
        rows = []
        for ti, tok in enumerate(sent.tokens):
            rows.append((tok, tuple(per_layer[t][ti] for t in CONCEPT_TYPES)))
        out.append(rows)
    return out


def write_tagged_tsv(docs: Iterable[Document]) -> str:
    """Tagged-TSV interchange: token, offsets, one tag column per concept type.

    Blank line between sentences, ``#doc <doc_id>`` header per document.
    """
    lines: list[str] = []
    for doc in docs:
        lines.append(f"#doc {doc.doc_id}")
        for rows in sentence_tag_columns(doc):
            for tok, tags in rows:
                cols = [tok.surface, str(tok.start), str(tok.end)]
                cols.extend(tag_to_string(tag) for tag in tags)
                lines.append("\t".join(cols))
            lines.append("")
    return "\n".join(lines) + ("\n" if lines else "")


def read_tagged_tsv(content: str) -> list[Document]:
    """Rebuild Documents from tagged-TSV.

    Whitespace between tokens is reconstructed as single spaces at the recorded
    offsets; annotations are decoded from the tag columns with fresh ids.
    """
    docs: list[Document] = []
    doc_id: str | None = None
    sentences: list[list[tuple[str, int, int, tuple[str, ...]]]] = []
    current: list[tuple[str, int, int, tuple[str, ...]]] = []

    def close_sentence() -> None:
        if current:
            sentences.append(list(current))
            current.clear()

    def close_doc() -> None:
        nonlocal doc_id
        close_sentence()
        if doc_id is None:
            if sentences:
                raise ValueError("token rows before any #doc header")
            return
        docs.append(_assemble_tsv_doc(doc_id, sentences))
        sentences.clear()
        doc_id = None

    for n, line in enumerate(content.splitlines(), start=1):
        if line.startswith("#doc "):
            close_doc()
            doc_id = line[len("#doc ") :].strip()
            if not doc_id:
                raise ValueError(f"line {n}: empty doc id")
            continue
        if not line.strip():
            close_sentence()
            continue
        cols = line.split("\t")
        if len(cols) != 3 + len(CONCEPT_TYPES):
            raise ValueError(f"line {n}: expected {3 + len(CONCEPT_TYPES)} columns, got {len(cols)}")
        surface, start_s, end_s = cols[0], cols[1], cols[2]
        try:
            start, end = int(start_s), int(end_s)
        except ValueError:
            raise ValueError(f"line {n}: non-integer offsets") from None
        if end - start != len(surface):
            raise ValueError(f"line {n}: offsets [{start}, {end}) do not fit token {surface!r}")
        current.append((surface, start, end, tuple(cols[3:])))
    close_doc()
    return docs


def _assemble_tsv_doc(doc_id: str, sentence_rows: list[list[tuple]]) -> Document:
    from .tokenizer import Sentence as TokSentence, Token

    if not sentence_rows:
        return Document(doc_id=doc_id, text="", sentences=())
    length = max(end for rows in sentence_rows for _, _, end, _ in rows)
    chars = [" "] * length
    sentences: list[TokSentence] = []
    annotations: list[tuple[int, int, ConceptType, bool]] = []
    for si, rows in enumerate(sentence_rows):
        tokens = []
        for surface, start, end, _ in rows:
            chars[start:end] = list(surface)
            tokens.append(Token(surface, start, end))
        sent = TokSentence(si, tuple(tokens), tokens[0].start, tokens[-1].end)
        sentences.append(sent)
        for li, layer in enumerate(CONCEPT_TYPES):
            tags = []
            for _, _, _, tag_strings in rows:
                tag = tag_from_string(tag_strings[li])
                if tag.position != "O" and tag.concept_type != layer:
                    raise ValueError(
                        f"tag {tag_strings[li]} in {layer.value} column of doc {doc_id}"
                    )
                tags.append(tag)
            for span in decode(TagSequence(layer, tuple(tags))):
                annotations.append(
                    (tokens[span.first].start, tokens[span.last].end, layer, span.non_study)
                )
    annotations.sort(key=lambda a: (a[0], a[1], a[2].value))
    text = "".join(chars)
    anns = tuple(
        ConceptAnnotation(
            id=f"a{i}",
            concept_type=t,
            start=s,
            end=e,
            surface=text[s:e],
            non_study=ns,
        )
        for i, (s, e, t, ns) in enumerate(annotations, start=1)
    )
    return Document(doc_id=doc_id, text=text, annotations=anns, sentences=tuple(sentences))
