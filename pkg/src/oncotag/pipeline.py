"""Corpus splitting and the end-to-end run: convert, split, train, predict, evaluate.

Every stage is deterministic given the run seed: per-layer training seeds are
derived from it, artifacts carry no timestamps or absolute paths, and repeated
runs produce byte-identical models, predictions, and reports.
"""
from __future__ import annotations

import json
import random
import warnings as _warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__
from .bilou import aligned_layer_spans, write_tagged_tsv
from .brat import load_brat_dir, save_brat_dir
from .corpus import (
    CONCEPT_TYPES,
    ConceptType,
    Corpus,
    Document,
    load_corpus_json,
    normalize_annotations,
    save_corpus_json,
    segment_document,
)
from .crf import CrfModel, TrainConfig, config_to_dict, load_model, predict_document, save_model, train
from .evaluation import evaluate, render_report, report_to_json
from .outcome import (
    LogRegModel,
    classify,
    label_sentences,
    load_lr_model,
    save_lr_model,
    sentence_prf,
    train_lr,
)

MODEL_FILES: dict[ConceptType, str] = {t: f"{t.value.lower()}.json" for t in CONCEPT_TYPES}
OUTCOME_CLASSIFIER_FILE = "outcome_classifier.json"


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.70
    val_frac: float = 0.10
    test_frac: float = 0.20
    seed: int = 42

    def __post_init__(self) -> None:
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions sum to {total!r}, expected 1.0")
        if min(self.train_frac, self.val_frac, self.test_frac) < 0:
            raise ValueError("split fractions must be non-negative")


def split_corpus(corpus: Corpus, spec: SplitSpec) -> tuple[Corpus, Corpus, Corpus, dict]:
    """Document-level split; val/test sizes are round(n*frac), the remainder trains."""
    if not corpus.documents:
        raise ValueError("empty corpus")
    ids = sorted(doc.doc_id for doc in corpus.documents)
    random.Random(spec.seed).shuffle(ids)
    n = len(ids)
    n_val = round(n * spec.val_frac)
    n_test = round(n * spec.test_frac)
    n_train = n - n_val - n_test
    if n_train < 0:
        raise ValueError("split fractions leave no room for a training set")
    membership = {
        "train": set(ids[:n_train]),
        "val": set(ids[n_train : n_train + n_val]),
        "test": set(ids[n_train + n_val :]),
    }
    parts = {
        name: Corpus(
            tuple(d for d in corpus.documents if d.doc_id in members),
            provenance=f"{corpus.provenance} split={name}".strip(),
        )
        for name, members in membership.items()
    }
    manifest = {
        "seed": spec.seed,
        "fractions": {
            "train": spec.train_frac,
            "val": spec.val_frac,
            "test": spec.test_frac,
        },
        "sizes": {name: len(parts[name].documents) for name in ("train", "val", "test")},
        "train": sorted(membership["train"]),
        "val": sorted(membership["val"]),
        "test": sorted(membership["test"]),
    }
    return parts["train"], parts["val"], parts["test"], manifest


def prepare_corpus(corpus: Corpus) -> tuple[Corpus, int]:
    """Normalize and segment every document; returns the alignment warning count."""
    docs = []
    n_warnings = 0
    for doc in corpus.documents:
        doc = segment_document(normalize_annotations(doc))
        _, warns = aligned_layer_spans(doc)
        n_warnings += len(warns)
        docs.append(doc)
    return Corpus(tuple(docs), corpus.provenance), n_warnings


def load_corpus_any(directory: Path | str, input_format: str) -> Corpus:
    if input_format == "brat":
        return load_brat_dir(directory)
    if input_format == "json":
        return load_corpus_json(directory)
    raise ValueError(f"unknown input format {input_format!r}")


def layer_config(base: TrainConfig, layer: ConceptType) -> TrainConfig:
    return replace(base, seed=base.seed + 1 + CONCEPT_TYPES.index(layer))


def outcome_config(base: TrainConfig) -> TrainConfig:
    return replace(base, seed=base.seed + 101)


def _train_layer_task(args: tuple) -> tuple[str, CrfModel]:
    train_corpus, val_corpus, layer, config = args
    return layer.value, train(train_corpus, layer, config, val_corpus)


def train_all_layers(
    train_corpus: Corpus,
    val_corpus: Corpus,
    base_config: TrainConfig,
    jobs: int = 1,
) -> dict[ConceptType, CrfModel]:
    """Train the five layer models; independent layers may run in parallel."""
    tasks = [
        (train_corpus, val_corpus, layer, layer_config(base_config, layer))
        for layer in CONCEPT_TYPES
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = dict(pool.map(_train_layer_task, tasks))
    else:
        results = dict(_train_layer_task(task) for task in tasks)
    return {t: results[t.value] for t in CONCEPT_TYPES}


def train_outcome_classifier(
    train_corpus: Corpus, base_config: TrainConfig
) -> LogRegModel | None:
    """Train the outcome sentence classifier; None (with a warning) if labels degenerate."""
    examples = [ex for doc in train_corpus.documents for ex in label_sentences(doc)]
    try:
        return train_lr(examples, outcome_config(base_config))
    except ValueError as exc:
        _warnings.warn(f"outcome classifier skipped: {exc}")
        return None


def _predict_chunk_task(args: tuple) -> list[Document]:
    models, docs = args
    return [replace(doc, annotations=tuple(predict_document(models, doc))) for doc in docs]


def predict_corpus(
    models: Mapping[ConceptType, CrfModel], corpus: Corpus, jobs: int = 1
) -> Corpus:
    docs = list(corpus.documents)
    if jobs > 1 and len(docs) > 1:
        chunks = [docs[i::jobs] for i in range(jobs)]
        chunks = [c for c in chunks if c]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            results = list(pool.map(_predict_chunk_task, [(dict(models), c) for c in chunks]))
        by_id = {d.doc_id: d for part in results for d in part}
        predicted = [by_id[d.doc_id] for d in docs]
    else:
        predicted = _predict_chunk_task((dict(models), docs))
    return Corpus(tuple(predicted), provenance=f"{corpus.provenance} predicted".strip())


def outcome_report(
    gold_corpus: Corpus, model: LogRegModel | None
) -> dict:
    """Sentence-level outcome metrics; a missing model predicts all-negative."""
    gold_labels: list[bool] = []
    predicted: list[bool] = []
    for doc in gold_corpus.documents:
        examples = label_sentences(doc)
        gold_labels.extend(ex.label for ex in examples)
        assert doc.sentences is not None
        for sent in doc.sentences:
            if model is None:
                predicted.append(False)
            else:
                predicted.append(classify(model, sent)[1])
    counts = sentence_prf(gold_labels, predicted)
    counts["n_sentences"] = len(gold_labels)
    counts["model_present"] = model is not None
    return counts


def render_outcome_report(counts: Mapping) -> str:
    return (
        f"{'Outcome sentences':<20} {'Precision':>9} {'Recall':>9} {'F1':>9}\n"
        f"{'':<20} {100 * counts['precision']:>9.2f} {100 * counts['recall']:>9.2f} "
        f"{100 * counts['f1']:>9.2f}\n"
        f"tp={counts['tp']} fp={counts['fp']} fn={counts['fn']} "
        f"sentences={counts['n_sentences']}\n"
    )


@dataclass(frozen=True)
class RunConfig:
    input_dir: str
    output_dir: str
    input_format: str = "brat"
    seed: int = 42
    split: SplitSpec = SplitSpec()
    train: TrainConfig = TrainConfig()
    eval_mode: str = "exact"
    jobs: int = 1

    @classmethod
    def from_file(
        cls, path: Path | str, seed: int | None = None, jobs: int | None = None
    ) -> "RunConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        run_seed = seed if seed is not None else data.get("seed", 42)
        split_data = data.get("split", {})
        split = SplitSpec(
            train_frac=split_data.get("train_frac", 0.70),
            val_frac=split_data.get("val_frac", 0.10),
            test_frac=split_data.get("test_frac", 0.20),
            seed=run_seed,
        )
        train_data = data.get("train", {})
        train_config = TrainConfig(
            learning_rate=train_data.get("learning_rate", 0.2),
            epochs=train_data.get("epochs", 100),
            batch_size=train_data.get("batch_size", 8),
            l2_lambda=train_data.get("l2_lambda", 1e-4),
            early_stop_patience=train_data.get("early_stop_patience", 10),
            seed=run_seed,
        )
        return cls(
            input_dir=data["input_dir"],
            output_dir=data["output_dir"],
            input_format=data.get("input_format", "brat"),
            seed=run_seed,
            split=split,
            train=train_config,
            eval_mode=data.get("eval_mode", "exact"),
            jobs=jobs if jobs is not None else data.get("jobs", 1),
        )


def run_pipeline(config: RunConfig) -> dict:
    """Execute the full pipeline, writing all artifacts under the output directory.

    Any stage failure raises PipelineError naming the stage; partial artifacts
    are left in place for inspection.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    state: dict = {}

    def stage(name: str, fn) -> None:
        try:
            fn()
        except Exception as exc:
            raise PipelineError(f"stage '{name}' failed: {exc}") from exc

    def do_load() -> None:
        raw = load_corpus_any(config.input_dir, config.input_format)
        corpus, n_warnings = prepare_corpus(raw)
        save_corpus_json(corpus, out / "converted")
        state["corpus"] = corpus
        state["alignment_warnings"] = n_warnings

    def do_split() -> None:
        train_c, val_c, test_c, manifest = split_corpus(state["corpus"], config.split)
        for name, part in (("train", train_c), ("val", val_c), ("test", test_c)):
            save_corpus_json(part, out / "split" / name)
        (out / "split" / "split_manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        state.update(train=train_c, val=val_c, test=test_c, split_manifest=manifest)

    def do_train() -> None:
        models_dir = out / "models"
        models_dir.mkdir(parents=True, exist_ok=True)
        models = train_all_layers(state["train"], state["val"], config.train, config.jobs)
        for layer, model in models.items():
            save_model(model, models_dir / MODEL_FILES[layer])
        classifier = train_outcome_classifier(state["train"], config.train)
        if classifier is not None:
            save_lr_model(classifier, models_dir / OUTCOME_CLASSIFIER_FILE)
        state.update(models=models, classifier=classifier)

    def do_predict() -> None:
        predicted = predict_corpus(state["models"], state["test"], config.jobs)
        save_corpus_json(predicted, out / "predictions" / "json")
        save_brat_dir(predicted, out / "predictions" / "brat")
        (out / "predictions" / "predictions.tsv").write_text(
            write_tagged_tsv(predicted.documents), encoding="utf-8"
        )
        state["predicted"] = predicted

    def do_evaluate() -> None:
        reports_dir = out / "reports"
        reports_dir.mkdir(parents=True, exist_ok=True)
        report = evaluate(state["test"], state["predicted"], config.eval_mode)
        (reports_dir / "span_report.txt").write_text(render_report(report), encoding="utf-8")
        (reports_dir / "span_report.json").write_text(report_to_json(report), encoding="utf-8")
        counts = outcome_report(state["test"], state["classifier"])
        (reports_dir / "outcome_report.txt").write_text(
            render_outcome_report(counts), encoding="utf-8"
        )
        (reports_dir / "outcome_report.json").write_text(
            json.dumps(counts, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        state.update(report=report, outcome_counts=counts)

    def do_manifest() -> None:
        manifest = {
            "package_version": __version__,
            "seed": config.seed,
            "input_format": config.input_format,
            "eval_mode": config.eval_mode,
            "split": state["split_manifest"]["fractions"],
            "split_sizes": state["split_manifest"]["sizes"],
            "train_config": config_to_dict(config.train),
            "layer_seeds": {
                t.value: layer_config(config.train, t).seed for t in CONCEPT_TYPES
            },
            "outcome_classifier_seed": outcome_config(config.train).seed,
            "alignment_warnings": state["alignment_warnings"],
            "validation_f1": {
                t.value: state["models"][t].validation_f1 for t in CONCEPT_TYPES
            },
            "outcome_classifier_present": state["classifier"] is not None,
        }
        (out / "run_manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        state["run_manifest"] = manifest

    stage("load", do_load)
    stage("split", do_split)
    stage("train", do_train)
    stage("predict", do_predict)
    stage("evaluate", do_evaluate)
    stage("manifest", do_manifest)
    return {
        "report": state["report"],
        "outcome": state["outcome_counts"],
        "run_manifest": state["run_manifest"],
        "output_dir": str(out),
    }


def load_models_dir(directory: Path | str) -> tuple[dict[ConceptType, CrfModel], LogRegModel | None]:
    directory = Path(directory)
    models = {}
    for layer, name in MODEL_FILES.items():
        path = directory / name
        if not path.exists():
            raise ValueError(f"missing model file {path}")
        models[layer] = load_model(path)
    classifier_path = directory / OUTCOME_CLASSIFIER_FILE
    classifier = load_lr_model(classifier_path) if classifier_path.exists() else None
    return models, classifier
