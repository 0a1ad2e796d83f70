"""Seeded synthetic corpus generator: templated oncology-style abstracts in brat form.

Sentences are built from whitespace-joined "units" that the tokenizer is
guaranteed to keep as single tokens, so the generator can do its own exact
token bookkeeping: the returned manifest records the corpus statistics counted
during construction, independently of the stats module.

The shipped default configuration pins per-type annotation totals so that type
proportions (Mutation > Cancer > Treatment > Population ~ Outcome) and rough
span lengths, including long multi-clause outcome sentences, look like a real
annotated abstract collection. Lexicon phrases are test vocabulary only.
"""
from __future__ import annotations

import json
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .brat import emit_pair
from .corpus import (
    CONCEPT_TYPES,
    ConceptAnnotation,
    ConceptType,
    Corpus,
    CorpusStats,
    Document,
    stats_from_dict,
    stats_to_dict,
)

_SLOT_RE = re.compile(r"\{(\w+)\}")
_NUMBER_SLOTS = ("int", "dec", "pct")
_CONCEPT_NAMES = {t.value for t in CONCEPT_TYPES}


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 42
    n_docs: int = 250
    per_type_lexicons: Mapping[ConceptType, tuple[str, ...]] = field(default_factory=dict)
    templates: tuple[str, ...] = ()
    noise_rate: float = 0.0
    non_study_rate: Mapping[ConceptType, float] = field(default_factory=dict)
    target_stats: Mapping[ConceptType, int] | None = None
    sentences_per_doc: tuple[int, int] = (4, 8)


_DEFAULT_LEXICONS: dict[ConceptType, tuple[str, ...]] = {
    ConceptType.CANCER: (
        "melanoma",
        "glioblastoma",
        "breast cancer",
        "gastric cancer",
        "colorectal cancer",
        "ovarian carcinoma",
        "renal cell carcinoma",
        "mantle cell lymphoma",
        "acute myeloid leukemia",
        "advanced solid tumors",
        "non small cell lung cancer",
    ),
    ConceptType.MUTATION: (
        "KRAS",
        "PTEN",
        "TP53",
        "BRAF V600E",
        "EGFR T790M",
        "KRAS G13D",
        "ALK rearrangement",
        "FGFR2 amplification",
        "PIK3CA H1047R",
        "HER2 overexpression",
        "NTRK1 fusion",
        "MET exon 14 skipping",
    ),
    ConceptType.POPULATION: (
        "never smokers",
        "postmenopausal women",
        "treatment naive patients",
        "heavily pretreated adults",
        "adults older than 18 years",
        "children younger than 12 years",
        "patients with prior platinum exposure",
        "patients with no prior systemic therapy",
    ),
    ConceptType.TREATMENT: (
        "sorafenib",
        "erlotinib",
        "crizotinib",
        "imatinib",
        "trastuzumab",
        "pembrolizumab",
        "abemaciclib",
        "high dose vemurafenib",
        "pegylated liposomal doxorubicin",
        "platinum based doublet chemotherapy",
    ),
    # Every outcome phrase nests exactly one {Treatment}, so quota planning can
    # reserve treatments for outcome sentences and cross-type overlap is
    # exercised on every generated corpus.
    ConceptType.OUTCOME: (
        "Treatment with {Treatment} produced an objective response rate of {pct} % "
        "and a median progression free survival of {dec} months in the intention "
        "to treat population",
        "Median overall survival reached {dec} months with {Treatment} compared "
        "with {dec} months for historical controls and grade 3 or 4 adverse "
        "events occurred in {pct} % of patients",
        "The disease control rate was {pct} % and {pct} % of patients remained "
        "progression free at {int} months although {Treatment} was discontinued "
        "for toxicity in {pct} % of cases",
        "Objective responses were observed in {int} of {int} patients given "
        "{Treatment} with a clinical benefit rate of {pct} % and a median "
        "duration of response of {dec} months",
    ),
}

_DEFAULT_TEMPLATES: tuple[str, ...] = (
    "{Mutation} and {Mutation} alterations were detected in {Cancer} specimens .",
    "We enrolled patients with {Cancer} harboring {Mutation} .",
    "Tumors positive for {Mutation} and {Mutation} were screened by targeted sequencing .",
    "{Mutation} was the most frequent alteration in this {Cancer} cohort .",
    "Activity of {Treatment} was assessed in {Cancer} with {Mutation} .",
    "Patients with {Cancer} and {Mutation} received {Treatment} .",
    "{Mutation} predicted benefit from {Treatment} in {Cancer} .",
    "{Mutation} was confirmed by sequencing .",
    "Baseline profiling identified {Mutation} in {int} of {int} cases .",
    "Patients with {Cancer} were eligible .",
    "The study population comprised {Population} .",
    "Enrollment was restricted to {Population} with {Cancer} .",
    "Dosing of {Treatment} followed institutional guidelines .",
    "{Outcome} .",
    "Targeted therapy selection remains an open challenge .",
    "Further prospective validation is warranted .",
    "Archival tissue was available for all participants .",
    "Molecular profiling was performed centrally .",
)

_DEFAULT_NON_STUDY_RATE: dict[ConceptType, float] = {
    ConceptType.CANCER: 0.009,
    ConceptType.MUTATION: 0.008,
    ConceptType.POPULATION: 0.008,
    ConceptType.TREATMENT: 0.04,
    ConceptType.OUTCOME: 0.0,
}

_DEFAULT_TARGETS_PER_250: dict[ConceptType, int] = {
    ConceptType.CANCER: 1622,
    ConceptType.MUTATION: 2293,
    ConceptType.POPULATION: 133,
    ConceptType.TREATMENT: 544,
    ConceptType.OUTCOME: 130,
}


def default_spec(n_docs: int = 250, seed: int = 42, noise_rate: float = 0.0) -> SynthSpec:
    """The shipped spec: pinned per-type totals scaled from a 250-document baseline."""
    targets = {t: round(c * n_docs / 250) for t, c in _DEFAULT_TARGETS_PER_250.items()}
    return SynthSpec(
        seed=seed,
        n_docs=n_docs,
        per_type_lexicons=dict(_DEFAULT_LEXICONS),
        templates=_DEFAULT_TEMPLATES,
        noise_rate=noise_rate,
        non_study_rate=dict(_DEFAULT_NON_STUDY_RATE),
        target_stats=targets,
    )


def _valid_unit(unit: str) -> bool:
    """True iff the tokenizer keeps this whitespace-separated unit as one token."""
    if not unit:
        return False
    if len(unit) == 1:
        return True
    if not (unit[0].isalnum() and unit[-1].isalnum()):
        return False
    for i in range(1, len(unit) - 1):
        ch = unit[i]
        if ch.isalnum():
            continue
        if ch in ".," and unit[i - 1].isdigit() and unit[i + 1].isdigit():
            continue
        return False
    return True


def _template_units(template: str) -> list[str]:
    return template.split()


def _unit_slot(unit: str) -> str | None:
    m = _SLOT_RE.fullmatch(unit)
    return m.group(1) if m else None


def _concept_census(template: str, spec: SynthSpec, top_level: bool = True) -> Counter:
    """Concept slots a template consumes, including slots nested in outcome phrases."""
    census: Counter = Counter()
    for unit in _template_units(template):
        slot = _unit_slot(unit)
        if slot is None or slot in _NUMBER_SLOTS:
            continue
        if slot not in _CONCEPT_NAMES:
            raise ValueError(f"unknown slot {{{slot}}} in template {template!r}")
        ctype = ConceptType(slot)
        census[ctype] += 1
        if ctype is ConceptType.OUTCOME:
            if not top_level:
                raise ValueError("nested {Outcome} slots are not supported")
            census += _outcome_nested_census(spec)
    return census


def _outcome_nested_census(spec: SynthSpec) -> Counter:
    """Uniform nested-slot census of the outcome lexicon; uniformity is required."""
    phrases = spec.per_type_lexicons.get(ConceptType.OUTCOME, ())
    censuses = []
    for phrase in phrases:
        c: Counter = Counter()
        for unit in _template_units(phrase):
            slot = _unit_slot(unit)
            if slot in _CONCEPT_NAMES:
                if slot == ConceptType.OUTCOME.value:
                    raise ValueError("outcome phrases cannot nest {Outcome}")
                c[ConceptType(slot)] += 1
        censuses.append(c)
    if not censuses:
        return Counter()
    if any(c != censuses[0] for c in censuses):
        raise ValueError(
            "outcome lexicon entries must all nest the same concept slots "
            "when target_stats is used"
        )
    return censuses[0]


def _validate_spec(spec: SynthSpec) -> None:
    if not (0.0 <= spec.noise_rate <= 1.0):
        raise ValueError("noise_rate must be in [0, 1]")
    for t, rate in dict(spec.non_study_rate).items():
        if not (0.0 <= rate <= 1.0):
            raise ValueError(f"non_study_rate for {t.value} must be in [0, 1]")
    if spec.n_docs < 0:
        raise ValueError("n_docs must be non-negative")
    lo, hi = spec.sentences_per_doc
    if not (1 <= lo <= hi):
        raise ValueError("sentences_per_doc must be an increasing range starting at 1 or more")
    if spec.n_docs and not spec.templates:
        raise ValueError("templates must be non-empty")
    used: set[ConceptType] = set()
    for template in spec.templates:
        for unit in _template_units(template):
            slot = _unit_slot(unit)
            if slot is None:
                if not _valid_unit(unit):
                    raise ValueError(f"template unit {unit!r} would not survive as one token")
            elif slot in _NUMBER_SLOTS:
                continue
            elif slot in _CONCEPT_NAMES:
                used.add(ConceptType(slot))
            else:
                raise ValueError(f"unknown slot {{{slot}}} in template {template!r}")
    for t in used:
        if not spec.per_type_lexicons.get(t):
            raise ValueError(f"lexicon for {t.value} is empty but used by templates")
    for t, phrases in spec.per_type_lexicons.items():
        for phrase in phrases:
            for unit in _template_units(phrase):
                slot = _unit_slot(unit)
                if slot is None:
                    if not _valid_unit(unit):
                        raise ValueError(f"lexicon unit {unit!r} would not survive as one token")
                elif t is not ConceptType.OUTCOME:
                    raise ValueError(f"{t.value} lexicon phrases cannot contain slots")
                elif slot not in _NUMBER_SLOTS and slot not in _CONCEPT_NAMES:
                    raise ValueError(f"unknown slot {{{slot}}} in outcome phrase {phrase!r}")
            if t is ConceptType.OUTCOME:
                for unit in _template_units(phrase):
                    if _unit_slot(unit) == ConceptType.OUTCOME.value:
                        raise ValueError("outcome phrases cannot nest {Outcome}")
    if used and ConceptType.OUTCOME in used:
        nested = _outcome_nested_census(spec)
        for t in nested:
            if not spec.per_type_lexicons.get(t):
                raise ValueError(f"lexicon for {t.value} is empty but nested in outcome phrases")


@dataclass
class _Placement:
    first_unit: int
    last_unit: int
    concept_type: ConceptType
    non_study: bool


def _fill_number(slot: str, rng: random.Random) -> str:
    if slot == "dec":
        return f"{rng.randint(1, 29)}.{rng.randint(0, 9)}"
    return str(rng.randint(1, 99))


def _expand_phrase(
    phrase: str,
    rng: random.Random,
    spec: SynthSpec,
    rates: Mapping[ConceptType, float],
    base: int,
) -> tuple[list[str], list[_Placement]]:
    units: list[str] = []
    placements: list[_Placement] = []
    for unit in _template_units(phrase):
        slot = _unit_slot(unit)
        if slot is None:
            units.append(unit)
        elif slot in _NUMBER_SLOTS:
            units.append(_fill_number(slot, rng))
        else:
            ctype = ConceptType(slot)
            chosen = rng.choice(spec.per_type_lexicons[ctype])
            first = base + len(units)
            if ctype is ConceptType.OUTCOME:
                inner_units, inner_placements = _expand_phrase(chosen, rng, spec, rates, first)
                units.extend(inner_units)
                placements.extend(inner_placements)
            else:
                units.extend(_template_units(chosen))
            non_study = rng.random() < rates.get(ctype, 0.0)
            placements.append(_Placement(first, base + len(units) - 1, ctype, non_study))
    return units, placements


def _plan_quotas(spec: SynthSpec, rng: random.Random) -> list[Counter]:
    targets = {t: int(spec.target_stats.get(t, 0)) for t in CONCEPT_TYPES}
    if any(c < 0 for c in targets.values()):
        raise ValueError("target_stats counts must be non-negative")
    if spec.n_docs == 0:
        if any(targets.values()):
            raise ValueError("target_stats unsatisfiable with zero documents")
        return []
    nested = _outcome_nested_census(spec) if targets.get(ConceptType.OUTCOME) else Counter()
    reserved_total = {t: nested.get(t, 0) * targets[ConceptType.OUTCOME] for t in nested}
    for t, need in reserved_total.items():
        if need > targets.get(t, 0):
            raise ValueError(
                f"target_stats unsatisfiable: outcome phrases nest {need} {t.value} "
                f"spans but the {t.value} target is {targets.get(t, 0)}"
            )

    quotas = [Counter() for _ in range(spec.n_docs)]

    def spread(ctype: ConceptType, count: int) -> None:
        base, remainder = divmod(count, spec.n_docs)
        for q in quotas:
            q[ctype] += base
        for d in rng.sample(range(spec.n_docs), remainder):
            quotas[d][ctype] += 1

    spread(ConceptType.OUTCOME, targets[ConceptType.OUTCOME])
    for t in CONCEPT_TYPES:
        if t is ConceptType.OUTCOME:
            continue
        free = targets[t] - reserved_total.get(t, 0)
        for q in quotas:
            q[t] += nested.get(t, 0) * q[ConceptType.OUTCOME]
        spread(t, free)
    return quotas


def _covers(census: Counter, quota: Counter) -> bool:
    return all(quota.get(t, 0) >= c for t, c in census.items())


def _build_doc_sentences(
    spec: SynthSpec,
    rng: random.Random,
    rates: Mapping[ConceptType, float],
    quota: Counter | None,
    censuses: Mapping[str, Counter],
) -> list[tuple[list[str], list[_Placement]]]:
    slot_templates = [t for t in spec.templates if censuses[t]]
    filler_templates = [t for t in spec.templates if not censuses[t]]
    sentences: list[tuple[list[str], list[_Placement]]] = []

    if quota is None:
        n_sentences = rng.randint(*spec.sentences_per_doc)
        for _ in range(n_sentences):
            sentences.append(_expand_phrase(rng.choice(spec.templates), rng, spec, rates, 0))
    else:
        outcome_templates = [
            t for t in slot_templates if censuses[t].get(ConceptType.OUTCOME, 0)
        ]
        while quota.get(ConceptType.OUTCOME, 0) > 0:
            fitting = [t for t in outcome_templates if _covers(censuses[t], quota)]
            if not fitting:
                raise ValueError(
                    f"target_stats unsatisfiable: remaining quota {dict(+quota)} "
                    "cannot be covered by any outcome template"
                )
            template = rng.choice(fitting)
            sentences.append(_expand_phrase(template, rng, spec, rates, 0))
            quota.subtract(censuses[template])
        while any(quota.get(t, 0) > 0 for t in CONCEPT_TYPES):
            fitting = [t for t in slot_templates if _covers(censuses[t], quota)]
            if not fitting:
                raise ValueError(
                    f"target_stats unsatisfiable: remaining quota {dict(+quota)} "
                    "cannot be covered by any template"
                )
            template = rng.choice(fitting)
            sentences.append(_expand_phrase(template, rng, spec, rates, 0))
            quota.subtract(censuses[template])
        if filler_templates:
            for _ in range(rng.randint(1, 2)):
                sentences.append(_expand_phrase(rng.choice(filler_templates), rng, spec, rates, 0))

    if spec.noise_rate and rng.random() < spec.noise_rate:
        noise_types = [t for t in CONCEPT_TYPES if spec.per_type_lexicons.get(t)]
        if noise_types:
            ctype = rng.choice(noise_types)
            phrase = rng.choice(spec.per_type_lexicons[ctype])
            carrier = ["Prior", "reports", "discussed"]
            carrier.extend(u for u in _template_units(phrase) if _unit_slot(u) is None)
            carrier.extend(["in", "unrelated", "settings", "."])
            sentences.append((carrier, []))

    rng.shuffle(sentences)
    return sentences


def generate(spec: SynthSpec) -> tuple[Corpus, CorpusStats]:
    """Deterministically generate a corpus plus its exact ground-truth statistics."""
    _validate_spec(spec)
    rng = random.Random(spec.seed)
    rates = {ConceptType(k) if not isinstance(k, ConceptType) else k: v
             for k, v in dict(spec.non_study_rate).items()}
    censuses = {t: _concept_census(t, spec) for t in spec.templates}
    quotas = _plan_quotas(spec, rng) if spec.target_stats is not None else None

    docs: list[Document] = []
    doc_token_counts: list[int] = []
    type_counts: Counter = Counter()
    ns_counts: Counter = Counter()
    span_lens: dict[ConceptType, list[int]] = {t: [] for t in CONCEPT_TYPES}

    for d in range(spec.n_docs):
        quota = quotas[d] if quotas is not None else None
        sentences = _build_doc_sentences(spec, rng, rates, quota, censuses)
        pieces: list[str] = []
        annotations: list[tuple[int, int, ConceptType, bool, int]] = []
        offset = 0
        n_units = 0
        for units, placements in sentences:
            starts: list[int] = []
            ends: list[int] = []
            for unit in units:
                if pieces:
                    offset += 1  # single space joins everything
                starts.append(offset)
                offset += len(unit)
                ends.append(offset)
                pieces.append(unit)
            for p in placements:
                token_len = p.last_unit - p.first_unit + 1
                annotations.append(
                    (starts[p.first_unit], ends[p.last_unit], p.concept_type, p.non_study, token_len)
                )
            n_units += len(units)
        text = " ".join(pieces)
        annotations.sort(key=lambda a: (a[0], a[1], a[2].value))
        anns = tuple(
            ConceptAnnotation(
                id=f"a{i}",
                concept_type=t,
                start=s,
                end=e,
                surface=text[s:e],
                non_study=ns,
            )
            for i, (s, e, t, ns, _) in enumerate(annotations, start=1)
        )
        docs.append(Document(doc_id=f"synth-{d:04d}", text=text, annotations=anns))
        doc_token_counts.append(n_units)
        for _, _, t, ns, token_len in annotations:
            type_counts[t] += 1
            if ns:
                ns_counts[t] += 1
            span_lens[t].append(token_len)

    total = sum(type_counts.values())
    total_ns = sum(ns_counts.values())
    all_lens = [n for t in CONCEPT_TYPES for n in span_lens[t]]
    manifest = CorpusStats(
        n_docs=len(docs),
        avg_doc_len_tokens=sum(doc_token_counts) / len(doc_token_counts) if doc_token_counts else 0.0,
        total_annotations=total,
        per_type_counts={t: type_counts.get(t, 0) for t in CONCEPT_TYPES},
        pct_non_study_overall=100.0 * total_ns / total if total else 0.0,
        per_type_pct_non_study={
            t: 100.0 * ns_counts.get(t, 0) / type_counts.get(t, 0) if type_counts.get(t, 0) else 0.0
            for t in CONCEPT_TYPES
        },
        avg_concept_len_tokens_overall=sum(all_lens) / len(all_lens) if all_lens else 0.0,
        per_type_avg_len={
            t: sum(span_lens[t]) / len(span_lens[t]) if span_lens[t] else 0.0
            for t in CONCEPT_TYPES
        },
    )
    return Corpus(tuple(docs), provenance=f"synth seed={spec.seed}"), manifest


def spec_to_dict(spec: SynthSpec) -> dict:
    return {
        "seed": spec.seed,
        "n_docs": spec.n_docs,
        "per_type_lexicons": {
            t.value: list(phrases) for t, phrases in spec.per_type_lexicons.items()
        },
        "templates": list(spec.templates),
        "noise_rate": spec.noise_rate,
        "non_study_rate": {t.value: r for t, r in dict(spec.non_study_rate).items()},
        "target_stats": (
            {t.value: c for t, c in spec.target_stats.items()}
            if spec.target_stats is not None
            else None
        ),
        "sentences_per_doc": list(spec.sentences_per_doc),
    }


def spec_from_dict(data: Mapping) -> SynthSpec:
    return SynthSpec(
        seed=data.get("seed", 42),
        n_docs=data.get("n_docs", 250),
        per_type_lexicons={
            ConceptType(k): tuple(v) for k, v in data.get("per_type_lexicons", {}).items()
        },
        templates=tuple(data.get("templates", ())),
        noise_rate=data.get("noise_rate", 0.0),
        non_study_rate={ConceptType(k): v for k, v in data.get("non_study_rate", {}).items()},
        target_stats=(
            {ConceptType(k): v for k, v in data["target_stats"].items()}
            if data.get("target_stats") is not None
            else None
        ),
        sentences_per_doc=tuple(data.get("sentences_per_doc", (4, 8))),
    )


def generate_to_dir(spec: SynthSpec, directory: Path | str) -> tuple[Corpus, CorpusStats]:
    """Write the corpus as paired .txt/.ann files plus manifest.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    corpus, manifest = generate(spec)
    for doc in corpus.documents:
        txt, ann = emit_pair(doc)
        (directory / f"{doc.doc_id}.txt").write_text(txt, encoding="utf-8")
        (directory / f"{doc.doc_id}.ann").write_text(ann, encoding="utf-8")
    payload = {
        "spec": spec_to_dict(spec),
        "stats": stats_to_dict(manifest),
        "doc_ids": [doc.doc_id for doc in corpus.documents],
    }
    (directory / "manifest.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return corpus, manifest


def load_manifest_stats(directory: Path | str) -> CorpusStats:
    payload = json.loads((Path(directory) / "manifest.json").read_text(encoding="utf-8"))
    return stats_from_dict(payload["stats"])
