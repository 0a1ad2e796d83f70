"""Sentence-level outcome detection: L2-regularized logistic regression over bag features.

A sentence is a positive example iff it character-overlaps any Outcome
annotation; long outcome spans may make several sentences positive.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import ConceptType, Document
from .crf import TrainConfig, config_to_dict
from .tokenizer import Sentence

LR_FORMAT_VERSION = "logreg-json-v1"
_LENGTH_BUCKETS = (5, 10, 20, 40)


def sentence_features(sentence: Sentence) -> dict[str, float]:
    """Bag of lowercased tokens and bigrams plus percent/number flags and a length bucket."""
    words = [tok.surface.lower() for tok in sentence.tokens]
    feats: dict[str, float] = {}
    for w in words:
        key = f"tok={w}"
        feats[key] = feats.get(key, 0.0) + 1.0
    for a, b in zip(words, words[1:]):
        key = f"bg={a}_{b}"
        feats[key] = feats.get(key, 0.0) + 1.0
    if "%" in words:
        feats["has_percent"] = 1.0
    if any(any(c.isdigit() for c in w) for w in words):
        feats["has_number"] = 1.0
    bucket = sum(len(words) > limit for limit in _LENGTH_BUCKETS)
    feats[f"len_bucket={bucket}"] = 1.0
    return feats


@dataclass(frozen=True)
class SentenceExample:
    features: Mapping[str, float]
    label: bool


def label_sentences(doc: Document) -> list[SentenceExample]:
    """One example per sentence; positive iff the sentence overlaps an Outcome span."""
    if doc.sentences is None:
        raise ValueError(f"document {doc.doc_id} has not been tokenized")
    outcome_spans = [
        (a.start, a.end) for a in doc.annotations if a.concept_type is ConceptType.OUTCOME
    ]
    examples = []
    for sent in doc.sentences:
        positive = any(start < sent.end and end > sent.start for start, end in outcome_spans)
        examples.append(SentenceExample(sentence_features(sent), positive))
    return examples


@dataclass
class LogRegModel:
    feature_table: tuple[str, ...]
    weights: np.ndarray  # (n_features,)
    bias: float
    l2_lambda: float = 0.0
    config: TrainConfig | None = None

    def __post_init__(self) -> None:
        self.feature_index = {f: i for i, f in enumerate(self.feature_table)}


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def _vectorize(
    examples: Sequence[SentenceExample], index: Mapping[str, int]
) -> list[tuple[np.ndarray, np.ndarray]]:
    rows = []
    for ex in examples:
        pairs = sorted((index[f], v) for f, v in ex.features.items() if f in index)
        rows.append(
            (
                np.array([p[0] for p in pairs], dtype=np.int64),
                np.array([p[1] for p in pairs], dtype=np.float64),
            )
        )
    return rows


def loss_and_gradient(
    model: LogRegModel, examples: Sequence[SentenceExample]
) -> tuple[float, np.ndarray, float]:
    """Mean logistic loss with L2 on the weights (bias unregularized), plus exact gradients."""
    if not examples:
        raise ValueError("no examples")
    rows = _vectorize(examples, model.feature_index)
    y = np.array([1.0 if ex.label else 0.0 for ex in examples])
    grad_w = np.zeros_like(model.weights)
    grad_b = 0.0
    loss = 0.0
    for (ids, vals), label in zip(rows, y):
        z = float(vals @ model.weights[ids]) + model.bias if len(ids) else model.bias
        loss += np.logaddexp(0.0, z) - label * z
        residual = _sigmoid(z) - label
        if len(ids):
            grad_w[ids] += residual * vals
        grad_b += residual
    n = len(examples)
    loss = loss / n + 0.5 * model.l2_lambda * float(model.weights @ model.weights)
    grad_w = grad_w / n + model.l2_lambda * model.weights
    return float(loss), grad_w, grad_b / n


def train_lr(examples: Sequence[SentenceExample], config: TrainConfig) -> LogRegModel:
    """Seeded mini-batch gradient descent; requires both classes to be present."""
    labels = {ex.label for ex in examples}
    if labels != {True, False}:
        raise ValueError("degenerate labels: need at least one positive and one negative example")
    feature_table = tuple(sorted({f for ex in examples for f in ex.features}))
    index = {f: i for i, f in enumerate(feature_table)}
    rows = _vectorize(examples, index)
    y = np.array([1.0 if ex.label else 0.0 for ex in examples])
    w = np.zeros(len(feature_table))
    bias = 0.0
    rng = np.random.default_rng(config.seed)
    for _epoch in range(config.epochs):
        order = rng.permutation(len(rows))
        for start in range(0, len(rows), config.batch_size):
            batch = order[start : start + config.batch_size]
            grad_w = np.zeros_like(w)
            grad_b = 0.0
            for idx in batch:
                ids, vals = rows[idx]
                z = float(vals @ w[ids]) + bias if len(ids) else bias
                residual = _sigmoid(z) - y[idx]
                if len(ids):
                    grad_w[ids] += residual * vals
                grad_b += residual
            scale = 1.0 / len(batch)
            w -= config.learning_rate * (grad_w * scale + config.l2_lambda * w)
            bias -= config.learning_rate * grad_b * scale
    return LogRegModel(
        feature_table=feature_table,
        weights=w,
        bias=bias,
        l2_lambda=config.l2_lambda,
        config=config,
    )


def classify(model: LogRegModel, sentence: Sentence) -> tuple[float, bool]:
    """Outcome probability for one sentence and its label at the fixed 0.5 threshold."""
    feats = sentence_features(sentence)
    z = model.bias
    for f, v in feats.items():
        i = model.feature_index.get(f)
        if i is not None:
            z += v * float(model.weights[i])
    probability = _sigmoid(z)
    return probability, probability >= 0.5


def sentence_prf(gold: Sequence[bool], predicted: Sequence[bool]) -> dict:
    """Sentence-level P/R/F1 with the 0/0 -> 0 convention."""
    if len(gold) != len(predicted):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(predicted)} predicted")
    tp = sum(1 for g, p in zip(gold, predicted) if g and p)
    fp = sum(1 for g, p in zip(gold, predicted) if not g and p)
    fn = sum(1 for g, p in zip(gold, predicted) if g and not p)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"tp": tp, "fp": fp, "fn": fn, "precision": precision, "recall": recall, "f1": f1}


def save_lr_model(model: LogRegModel, path: Path | str) -> None:
    payload = {
        "format_version": LR_FORMAT_VERSION,
        "l2_lambda": model.l2_lambda,
        "bias": model.bias,
        "feature_table": list(model.feature_table),
        "weights": {f: float(model.weights[i]) for i, f in enumerate(model.feature_table)},
        "config": config_to_dict(model.config) if model.config is not None else None,
    }
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def load_lr_model(path: Path | str) -> LogRegModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format_version") != LR_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {payload.get('format_version')!r}")
    table = tuple(payload["feature_table"])
    weights = np.array([payload["weights"][f] for f in table], dtype=np.float64)
    config = TrainConfig(**payload["config"]) if payload.get("config") else None
    return LogRegModel(
        feature_table=table,
        weights=weights,
        bias=payload["bias"],
        l2_lambda=payload["l2_lambda"],
        config=config,
    )
