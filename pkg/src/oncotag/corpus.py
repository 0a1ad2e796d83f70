"""Documents, typed concept annotations, corpora, and descriptive statistics."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Mapping

from .tokenizer import Sentence, segment


class ConceptType(str, Enum):
    CANCER = "Cancer"
    MUTATION = "Mutation"
    POPULATION = "Population"
    TREATMENT = "Treatment"
    OUTCOME = "Outcome"


CONCEPT_TYPES: tuple[ConceptType, ...] = tuple(ConceptType)


@dataclass(frozen=True)
class ConceptAnnotation:
    """A typed character span; ``surface`` must equal the text slice once normalized."""

    id: str
    concept_type: ConceptType
    start: int
    end: int
    surface: str = ""
    non_study: bool = False
    negated: bool = False


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    annotations: tuple[ConceptAnnotation, ...] = ()
    sentences: tuple[Sentence, ...] | None = None


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...] = ()
    provenance: str = ""

    def __post_init__(self) -> None:
        counts = Counter(doc.doc_id for doc in self.documents)
        dupes = sorted(i for i, c in counts.items() if c > 1)
        if dupes:
            raise ValueError(f"duplicate doc_ids: {dupes}")


@dataclass(frozen=True)
class CorpusStats:
    n_docs: int
    avg_doc_len_tokens: float
    total_annotations: int
    per_type_counts: Mapping[ConceptType, int]
    pct_non_study_overall: float
    per_type_pct_non_study: Mapping[ConceptType, float]
    avg_concept_len_tokens_overall: float
    per_type_avg_len: Mapping[ConceptType, float]


def normalize_annotations(doc: Document) -> Document:
    """Sort annotations, re-derive surfaces from the text, and collapse exact duplicates.

    Idempotent. Raises if a non-empty surface disagrees with its text slice or
    if distinct annotations share an id.
    """
    checked: list[ConceptAnnotation] = []
    for ann in doc.annotations:
        if not (0 <= ann.start < ann.end <= len(doc.text)):
            raise ValueError(
                f"annotation {ann.id}: span [{ann.start}, {ann.end}) out of range "
                f"for document {doc.doc_id}"
            )
        piece = doc.text[ann.start : ann.end]
        if ann.surface and ann.surface != piece:
            raise ValueError(
                f"annotation {ann.id}: surface {ann.surface!r} does not match text slice {piece!r}"
            )
        checked.append(replace(ann, surface=piece))
    checked.sort(key=lambda a: (a.start, a.end, a.concept_type.value))
    deduped: list[ConceptAnnotation] = []
    seen: set[tuple] = set()
    for ann in checked:
        key = (ann.start, ann.end, ann.concept_type, ann.non_study, ann.negated)
        if key in seen:
            continue
        seen.add(key)
        deduped.append(ann)
    id_counts = Counter(a.id for a in deduped)
    dupes = sorted(i for i, c in id_counts.items() if c > 1)
    if dupes:
        raise ValueError(f"document {doc.doc_id}: duplicate annotation ids {dupes}")
    return replace(doc, annotations=tuple(deduped))


def segment_document(doc: Document) -> Document:
    return replace(doc, sentences=tuple(segment(doc.text)))


def _mean(values: list[int]) -> float:
    return sum(values) / len(values) if values else 0.0


def _pct(part: int, whole: int) -> float:
    return 100.0 * part / whole if whole else 0.0


def compute_stats(corpus: Corpus) -> CorpusStats:
    """Corpus-level counts, Non-study percentages, and token-length averages.

    Concept length counts the tokens overlapping the span, i.e. the span after
    expansion to whole-token boundaries.
    """
    if not corpus.documents:
        raise ValueError("empty corpus")
    doc_token_counts: list[int] = []
    span_lens: dict[ConceptType, list[int]] = {t: [] for t in CONCEPT_TYPES}
    counts: Counter = Counter()
    ns_counts: Counter = Counter()
    for doc in corpus.documents:
        if doc.sentences is None:
            raise ValueError(f"document {doc.doc_id} has not been tokenized")
        tokens = [tok for sent in doc.sentences for tok in sent.tokens]
        doc_token_counts.append(len(tokens))
        for ann in doc.annotations:
            counts[ann.concept_type] += 1
            if ann.non_study:
                ns_counts[ann.concept_type] += 1
            overlap = sum(1 for tok in tokens if tok.start < ann.end and tok.end > ann.start)
            span_lens[ann.concept_type].append(overlap)
    total = sum(counts.values())
    total_ns = sum(ns_counts.values())
    all_lens = [n for t in CONCEPT_TYPES for n in span_lens[t]]
    return CorpusStats(
        n_docs=len(corpus.documents),
        avg_doc_len_tokens=_mean(doc_token_counts),
        total_annotations=total,
        per_type_counts={t: counts.get(t, 0) for t in CONCEPT_TYPES},
        pct_non_study_overall=_pct(total_ns, total),
        per_type_pct_non_study={t: _pct(ns_counts.get(t, 0), counts.get(t, 0)) for t in CONCEPT_TYPES},
        avg_concept_len_tokens_overall=_mean(all_lens),
        per_type_avg_len={t: _mean(span_lens[t]) for t in CONCEPT_TYPES},
    )


def stats_to_dict(stats: CorpusStats) -> dict:
    return {
        "n_docs": stats.n_docs,
        "avg_doc_len_tokens": stats.avg_doc_len_tokens,
        "total_annotations": stats.total_annotations,
        "per_type_counts": {t.value: stats.per_type_counts[t] for t in CONCEPT_TYPES},
        "pct_non_study_overall": stats.pct_non_study_overall,
        "per_type_pct_non_study": {t.value: stats.per_type_pct_non_study[t] for t in CONCEPT_TYPES},
        "avg_concept_len_tokens_overall": stats.avg_concept_len_tokens_overall,
        "per_type_avg_len": {t.value: stats.per_type_avg_len[t] for t in CONCEPT_TYPES},
    }


def stats_from_dict(data: Mapping) -> CorpusStats:
    return CorpusStats(
        n_docs=data["n_docs"],
        avg_doc_len_tokens=data["avg_doc_len_tokens"],
        total_annotations=data["total_annotations"],
        per_type_counts={ConceptType(k): v for k, v in data["per_type_counts"].items()},
        pct_non_study_overall=data["pct_non_study_overall"],
        per_type_pct_non_study={
            ConceptType(k): v for k, v in data["per_type_pct_non_study"].items()
        },
        avg_concept_len_tokens_overall=data["avg_concept_len_tokens_overall"],
        per_type_avg_len={ConceptType(k): v for k, v in data["per_type_avg_len"].items()},
    )


def render_stats(stats: CorpusStats) -> str:
    lines = [
        f"Number of documents                  {stats.n_docs}",
        f"Average document length (tokens)     {stats.avg_doc_len_tokens:.1f}",
        f"Total concept annotations            {stats.total_annotations}",
    ]
    for t in CONCEPT_TYPES:
        lines.append(f"    {t.value:<33}{stats.per_type_counts[t]}")
    lines.append(f"Percent Non-study annotations        {stats.pct_non_study_overall:.1f}%")
    for t in CONCEPT_TYPES:
        lines.append(f"    {t.value:<33}{stats.per_type_pct_non_study[t]:.1f}%")
    lines.append(f"Average concept length (tokens)      {stats.avg_concept_len_tokens_overall:.1f}")
    for t in CONCEPT_TYPES:
        lines.append(f"    {t.value:<33}{stats.per_type_avg_len[t]:.1f}")
    return "\n".join(lines) + "\n"


def document_to_dict(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "text": doc.text,
        "annotations": [
            {
                "id": a.id,
                "type": a.concept_type.value,
                "start": a.start,
                "end": a.end,
                "surface": a.surface,
                "non_study": a.non_study,
                "negated": a.negated,
            }
            for a in doc.annotations
        ],
    }


def document_from_dict(data: Mapping) -> Document:
    annotations = tuple(
        ConceptAnnotation(
            id=a["id"],
            concept_type=ConceptType(a["type"]),
            start=a["start"],
            end=a["end"],
            surface=a.get("surface", ""),
            non_study=a.get("non_study", False),
            negated=a.get("negated", False),
        )
        for a in data["annotations"]
    )
    return Document(doc_id=data["doc_id"], text=data["text"], annotations=annotations)


def save_corpus_json(corpus: Corpus, directory: Path | str) -> None:
    """One UTF-8 JSON file per document; offsets count Unicode scalar values."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for doc in corpus.documents:
        payload = json.dumps(document_to_dict(doc), ensure_ascii=False, indent=2)
        (directory / f"{doc.doc_id}.json").write_text(payload + "\n", encoding="utf-8")


def load_corpus_json(directory: Path | str, provenance: str = "") -> Corpus:
    directory = Path(directory)
    if not directory.is_dir():
        raise ValueError(f"input directory not found: {directory}")
    docs = []
    for path in sorted(directory.glob("*.json")):
        docs.append(document_from_dict(json.loads(path.read_text(encoding="utf-8"))))
    return Corpus(tuple(docs), provenance=provenance)
