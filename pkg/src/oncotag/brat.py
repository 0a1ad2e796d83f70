"""brat standoff format: parse and emit .txt/.ann pairs with entity and attribute records.

Only T (entity) and A (attribute) records are handled; # comments are skipped.
Offsets count Unicode scalar values. Emission is canonical: entities renumbered
T1..Tn in (start, end) order, attribute ids A1..Am in entity order with
NonStudy before Negated, LF line endings.
"""
from __future__ import annotations

import re
from dataclasses import replace
from pathlib import Path
from typing import Mapping

from .corpus import CONCEPT_TYPES, ConceptAnnotation, ConceptType, Corpus, Document


class BratParseError(ValueError):
    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


#: brat type name -> (concept type, implied non_study flag). Covers corpora that
#: model Non-study as a separate entity type (e.g. "Non-study-Cancer") as well
#: as the attribute convention.
DEFAULT_TYPE_MAP: Mapping[str, tuple[ConceptType, bool]] = {
    t.value: (t, False) for t in CONCEPT_TYPES
}

_ATTRIBUTE_FIELDS = {"NonStudy": "non_study", "Negated": "negated"}
_ENTITY_ID_RE = re.compile(r"T\d+")
_ATTR_RE = re.compile(r"(A\d+)\t(\S+) (\S+)")


def parse_pair(
    txt_content: str,
    ann_content: str,
    doc_id: str,
    type_map: Mapping[str, tuple[ConceptType, bool]] | None = None,
    warnings: list[str] | None = None,
) -> Document:
    """Parse one .txt/.ann pair into a Document.

    Unknown attribute names are skipped with a message appended to ``warnings``;
    anything else malformed raises BratParseError with the offending line number.
    """
    tmap = DEFAULT_TYPE_MAP if type_map is None else type_map
    collected = warnings if warnings is not None else []
    entities: dict[str, ConceptAnnotation] = {}
    order: list[str] = []
    attribute_lines: list[tuple[int, str, str]] = []

    for n, raw in enumerate(ann_content.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        kind = line[0]
        if kind == "#":
            continue
        if kind == "T":
            fields = line.split("\t", 2)
            if len(fields) != 3:
                raise BratParseError("entity line needs 3 tab-separated fields", n)
            ent_id, descriptor, surface = fields
            if not _ENTITY_ID_RE.fullmatch(ent_id):
                raise BratParseError(f"bad entity id {ent_id!r}", n)
            if ent_id in entities:
                raise BratParseError(f"duplicate entity id {ent_id}", n)
            if ";" in descriptor:
                raise BratParseError("discontinuous spans are not supported", n)
            parts = descriptor.split(" ")
            if len(parts) != 3:
                raise BratParseError(f"bad entity descriptor {descriptor!r}", n)
            type_name = parts[0]
            if type_name not in tmap:
                accepted = ", ".join(sorted(tmap))
                raise BratParseError(
                    f"unknown entity type {type_name!r}; accepted: {accepted}", n
                )
            try:
                start, end = int(parts[1]), int(parts[2])
            except ValueError:
                raise BratParseError(f"non-integer offsets in {descriptor!r}", n) from None
            if not (0 <= start < end <= len(txt_content)):
                raise BratParseError(f"span [{start}, {end}) out of range", n)
            piece = txt_content[start:end]
            if piece.replace("\n", " ") != surface:
                raise BratParseError(
                    f"surface mismatch: annotation {surface!r} vs text {piece.replace(chr(10), ' ')!r}",
                    n,
                )
            ctype, non_study = tmap[type_name]
            entities[ent_id] = ConceptAnnotation(
                id=ent_id,
                concept_type=ctype,
                start=start,
                end=end,
                surface=piece,
                non_study=non_study,
            )
            order.append(ent_id)
        elif kind == "A":
            m = _ATTR_RE.fullmatch(line)
            if not m:
                raise BratParseError("bad attribute line", n)
            attribute_lines.append((n, m.group(2), m.group(3)))
        else:
            record = line.split("\t", 1)[0]
            raise BratParseError(f"unsupported record type {record!r}", n)

    for n, name, target in attribute_lines:
        if name not in _ATTRIBUTE_FIELDS:
            collected.append(f"line {n}: ignored unknown attribute {name!r}")
            continue
        if target not in entities:
            raise BratParseError(f"attribute targets unknown entity {target!r}", n)
        entities[target] = replace(entities[target], **{_ATTRIBUTE_FIELDS[name]: True})

    return Document(doc_id=doc_id, text=txt_content, annotations=tuple(entities[i] for i in order))


def emit_pair(doc: Document) -> tuple[str, str]:
    """Emit a normalized Document as canonical (.txt, .ann) contents."""
    ordered = sorted(doc.annotations, key=lambda a: (a.start, a.end, a.concept_type.value))
    entity_lines: list[str] = []
    attr_lines: list[str] = []
    next_attr = 1
    for i, ann in enumerate(ordered, start=1):
        surface = doc.text[ann.start : ann.end].replace("\n", " ")
        entity_lines.append(f"T{i}\t{ann.concept_type.value} {ann.start} {ann.end}\t{surface}")
        for flag, name in ((ann.non_study, "NonStudy"), (ann.negated, "Negated")):
            if flag:
                attr_lines.append(f"A{next_attr}\t{name} T{i}")
                next_attr += 1
    ann_content = "".join(line + "\n" for line in entity_lines + attr_lines)
    return doc.text, ann_content


def load_brat_dir(
    directory: Path | str,
    type_map: Mapping[str, tuple[ConceptType, bool]] | None = None,
    warnings: list[str] | None = None,
) -> Corpus:
    """Read all .txt/.ann pairs in a directory; a missing .ann means no annotations."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ValueError(f"input directory not found: {directory}")
    docs = []
    txt_paths = sorted(directory.glob("*.txt"))
    for txt_path in txt_paths:
        ann_path = txt_path.with_suffix(".ann")
        ann_content = ann_path.read_text(encoding="utf-8") if ann_path.exists() else ""
        docs.append(
            parse_pair(
                txt_path.read_text(encoding="utf-8"),
                ann_content,
                txt_path.stem,
                type_map=type_map,
                warnings=warnings,
            )
        )
    orphans = sorted(
        p.name for p in directory.glob("*.ann") if not p.with_suffix(".txt").exists()
    )
    if orphans:
        raise ValueError(f"annotation files without text files: {orphans}")
    return Corpus(tuple(docs), provenance=f"brat:{directory.name}")


def save_brat_dir(corpus: Corpus, directory: Path | str) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for doc in corpus.documents:
        txt, ann = emit_pair(doc)
        (directory / f"{doc.doc_id}.txt").write_text(txt, encoding="utf-8")
        (directory / f"{doc.doc_id}.ann").write_text(ann, encoding="utf-8")
