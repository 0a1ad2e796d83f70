"""Span-level precision/recall/F1, per concept type and micro-averaged.

Matching strips the Non-study and Negated attributes, pairs gold and predicted
spans greedily left to right (each span matches at most once), and defaults to
exact boundary+type matching. Overlap mode is a diagnostic relaxation. All
0/0 metric cases are defined as 0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

from .corpus import CONCEPT_TYPES, ConceptType, Corpus

MATCH_MODES = ("exact", "overlap")


@dataclass(frozen=True)
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass(frozen=True)
class EvalReport:
    match_mode: str
    per_type: Mapping[ConceptType, MatchCounts]
    overall: MatchCounts


def _doc_type_counts(
    gold_spans: list[tuple[int, int]], pred_spans: list[tuple[int, int]], match_mode: str
) -> tuple[int, int, int]:
    gold_spans = sorted(gold_spans)
    pred_spans = sorted(pred_spans)
    matched = [False] * len(gold_spans)
    tp = 0
    for pred in pred_spans:
        for k, gold in enumerate(gold_spans):
            if matched[k]:
                continue
            if match_mode == "exact":
                hit = pred == gold
            else:
                hit = pred[0] < gold[1] and pred[1] > gold[0]
            if hit:
                matched[k] = True
                tp += 1
                break
    return tp, len(pred_spans) - tp, len(gold_spans) - tp


def evaluate(gold: Corpus, predicted: Corpus, match_mode: str = "exact") -> EvalReport:
    """Compare two corpora over the same doc_id set."""
    if match_mode not in MATCH_MODES:
        raise ValueError(f"unknown match mode {match_mode!r}; expected one of {MATCH_MODES}")
    gold_ids = {d.doc_id for d in gold.documents}
    pred_ids = {d.doc_id for d in predicted.documents}
    if gold_ids != pred_ids:
        missing = sorted(gold_ids - pred_ids)
        unexpected = sorted(pred_ids - gold_ids)
        raise ValueError(
            f"doc_id mismatch: missing from predictions {missing}, unexpected {unexpected}"
        )
    gold_by_id = {d.doc_id: d for d in gold.documents}
    pred_by_id = {d.doc_id: d for d in predicted.documents}
    totals = {t: [0, 0, 0] for t in CONCEPT_TYPES}
    for doc_id in sorted(gold_ids):
        g_doc = gold_by_id[doc_id]
        p_doc = pred_by_id[doc_id]
        for t in CONCEPT_TYPES:
            g_spans = [(a.start, a.end) for a in g_doc.annotations if a.concept_type is t]
            p_spans = [(a.start, a.end) for a in p_doc.annotations if a.concept_type is t]
            tp, fp, fn = _doc_type_counts(g_spans, p_spans, match_mode)
            totals[t][0] += tp
            totals[t][1] += fp
            totals[t][2] += fn
    per_type = {t: MatchCounts(*totals[t]) for t in CONCEPT_TYPES}
    overall = MatchCounts(
        tp=sum(c.tp for c in per_type.values()),
        fp=sum(c.fp for c in per_type.values()),
        fn=sum(c.fn for c in per_type.values()),
    )
    return EvalReport(match_mode=match_mode, per_type=per_type, overall=overall)


def render_report(report: EvalReport) -> str:
    """Aligned text table, one row per concept type plus Overall, values in percent."""
    rows = [("Overall", report.overall)]
    rows.extend((t.value, report.per_type[t]) for t in CONCEPT_TYPES)
    lines = [f"{'Annotation':<12} {'Precision':>9} {'Recall':>9} {'F1':>9}"]
    for name, counts in rows:
        lines.append(
            f"{name:<12} {100 * counts.precision:>9.2f} {100 * counts.recall:>9.2f} "
            f"{100 * counts.f1:>9.2f}"
        )
    return "\n".join(lines) + "\n"


def _counts_to_dict(counts: MatchCounts) -> dict:
    return {
        "tp": counts.tp,
        "fp": counts.fp,
        "fn": counts.fn,
        "precision": counts.precision,
        "recall": counts.recall,
        "f1": counts.f1,
    }


def report_to_dict(report: EvalReport) -> dict:
    return {
        "match_mode": report.match_mode,
        "overall": _counts_to_dict(report.overall),
        "per_type": {t.value: _counts_to_dict(report.per_type[t]) for t in CONCEPT_TYPES},
    }


def report_from_dict(data: Mapping) -> EvalReport:
    per_type = {
        ConceptType(name): MatchCounts(tp=c["tp"], fp=c["fp"], fn=c["fn"])
        for name, c in data["per_type"].items()
    }
    overall = data["overall"]
    return EvalReport(
        match_mode=data["match_mode"],
        per_type=per_type,
        overall=MatchCounts(tp=overall["tp"], fp=overall["fp"], fn=overall["fn"]),
    )


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"
