"""Linear-chain CRF tagger with hand-built sparse features, one model per concept layer.

Chain quantities (partition function, marginals, Viterbi) are computed in log
space. Training is seeded mini-batch gradient descent on the mean regularized
negative log-likelihood, with span-F1 early stopping on a validation corpus.
"""
from __future__ import annotations

import json
import warnings as _warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .bilou import (
    TagSequence,
    TokenSpan,
    aligned_layer_spans,
    decode,
    encode,
    layer_labels,
    resolve_overlaps,
    tag_from_string,
    tag_to_string,
)
from .corpus import CONCEPT_TYPES, ConceptAnnotation, ConceptType, Corpus, Document
from .tokenizer import Sentence

TEMPLATES_VERSION = "window2-shape-affix-v1"
MODEL_FORMAT_VERSION = "crf-json-v1"


def token_shape(surface: str) -> str:
    """Character-class sketch: upper->X, lower->x, digit->d, other verbatim, runs collapsed."""
    out: list[str] = []
    prev: str | None = None
    for ch in surface:
        if ch.isupper():
            c = "X"
        elif ch.islower():
            c = "x"
        elif ch.isdigit():
            c = "d"
        else:
            c = ch
        if c != prev:
            out.append(c)
            prev = c
    return "".join(out)


def extract_features(sentence: Sentence, index: int) -> dict[str, float]:
    """The fixed per-token template set; all features are binary with value 1.0."""
    tokens = sentence.tokens
    n = len(tokens)
    if not (0 <= index < n):
        raise ValueError(f"token index {index} out of range for sentence of {n} tokens")
    feats: dict[str, float] = {}
    for off in (-2, -1, 0, 1, 2):
        j = index + off
        if 0 <= j < n:
            word = tokens[j].surface.lower()
        else:
            word = "<s>" if j < 0 else "</s>"
        feats[f"w[{off}]={word}"] = 1.0
    for off in (-1, 0, 1):
        j = index + off
        if 0 <= j < n:
            shape = token_shape(tokens[j].surface)
        else:
            shape = "<s>" if j < 0 else "</s>"
        feats[f"shape[{off}]={shape}"] = 1.0
    current = tokens[index].surface
    low = current.lower()
    for k in (1, 2, 3):
        if len(low) >= k:
            feats[f"prefix{k}={low[:k]}"] = 1.0
            feats[f"suffix{k}={low[-k:]}"] = 1.0
    if any(c.isdigit() for c in current):
        feats["has_digit"] = 1.0
    if "-" in current:
        feats["has_hyphen"] = 1.0
    if current.isupper():
        feats["all_caps"] = 1.0
    if current.istitle():
        feats["is_title"] = 1.0
    return feats


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.2
    epochs: int = 100
    batch_size: int = 8
    l2_lambda: float = 1e-4
    early_stop_patience: int = 10
    seed: int = 42

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs <= 0 or self.batch_size <= 0 or self.early_stop_patience <= 0:
            raise ValueError("epochs, batch_size and early_stop_patience must be positive")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be non-negative")


def config_to_dict(config: TrainConfig) -> dict:
    return {
        "learning_rate": config.learning_rate,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "l2_lambda": config.l2_lambda,
        "early_stop_patience": config.early_stop_patience,
        "seed": config.seed,
    }


@dataclass
class CrfModel:
    layer: ConceptType
    labels: tuple[str, ...]
    feature_table: tuple[str, ...]
    emission: np.ndarray  # (n_features, n_labels)
    transition: np.ndarray  # (n_labels, n_labels)
    bos: np.ndarray  # (n_labels,)
    eos: np.ndarray  # (n_labels,)
    l2_lambda: float = 0.0
    template_version: str = TEMPLATES_VERSION
    validation_f1: float | None = None
    config: TrainConfig | None = None

    def __post_init__(self) -> None:
        self.feature_index = {f: i for i, f in enumerate(self.feature_table)}
        self.label_index = {lab: i for i, lab in enumerate(self.labels)}


def model_zero(
    layer: ConceptType,
    feature_table: Sequence[str] = (),
    l2_lambda: float = 0.0,
    config: TrainConfig | None = None,
) -> CrfModel:
    labels = layer_labels(layer)
    n_labels = len(labels)
    return CrfModel(
        layer=layer,
        labels=labels,
        feature_table=tuple(feature_table),
        emission=np.zeros((len(feature_table), n_labels)),
        transition=np.zeros((n_labels, n_labels)),
        bos=np.zeros(n_labels),
        eos=np.zeros(n_labels),
        l2_lambda=l2_lambda,
        config=config,
    )


@dataclass(frozen=True)
class Potentials:
    emissions: np.ndarray  # (T, L)
    transition: np.ndarray  # (L, L)
    bos: np.ndarray
    eos: np.ndarray


@dataclass(frozen=True)
class ChainMarginals:
    log_partition: float
    unary: np.ndarray  # (T, L), rows sum to 1
    pairwise: np.ndarray  # (T-1, L, L)


@dataclass
class CrfGradient:
    emission: np.ndarray
    transition: np.ndarray
    bos: np.ndarray
    eos: np.ndarray


def _featurize(model: CrfModel, sentence: Sentence) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    for i in range(len(sentence.tokens)):
        fv = extract_features(sentence, i)
        pairs = sorted(
            (model.feature_index[f], v) for f, v in fv.items() if f in model.feature_index
        )
        ids = np.array([p[0] for p in pairs], dtype=np.int64)
        vals = np.array([p[1] for p in pairs], dtype=np.float64)
        out.append((ids, vals))
    return out


def _emissions_from_feats(
    emission_weights: np.ndarray, feats: Sequence[tuple[np.ndarray, np.ndarray]], n_labels: int
) -> np.ndarray:
    em = np.zeros((len(feats), n_labels))
    for t, (ids, vals) in enumerate(feats):
        if len(ids):
            em[t] = vals @ emission_weights[ids]
    return em


def log_potentials(model: CrfModel, sentence: Sentence) -> Potentials:
    """Per-position emission scores and the model's transition scores."""
    if not sentence.tokens:
        raise ValueError("empty sentence")
    feats = _featurize(model, sentence)
    em = _emissions_from_feats(model.emission, feats, len(model.labels))
    return Potentials(em, model.transition.copy(), model.bos.copy(), model.eos.copy())


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return np.squeeze(m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)), axis=axis)


def forward_backward(potentials: Potentials) -> ChainMarginals:
    """Log-space forward-backward: exact partition function and normalized marginals."""
    em, trans = potentials.emissions, potentials.transition
    T, L = em.shape
    alpha = np.empty((T, L))
    beta = np.empty((T, L))
    alpha[0] = potentials.bos + em[0]
    for t in range(1, T):
        alpha[t] = _logsumexp(alpha[t - 1][:, None] + trans, axis=0) + em[t]
    log_partition = float(_logsumexp(alpha[T - 1] + potentials.eos, axis=0))
    beta[T - 1] = potentials.eos
    for t in range(T - 2, -1, -1):
        beta[t] = _logsumexp(trans + (em[t + 1] + beta[t + 1])[None, :], axis=1)
    unary = np.exp(alpha + beta - log_partition)
    pairwise = np.zeros((max(T - 1, 0), L, L))
    for t in range(T - 1):
        pairwise[t] = np.exp(
            alpha[t][:, None] + trans + (em[t + 1] + beta[t + 1])[None, :] - log_partition
        )
    return ChainMarginals(log_partition, unary, pairwise)


def path_score(potentials: Potentials, labels: Sequence[int]) -> float:
    score = potentials.bos[labels[0]] + potentials.emissions[0, labels[0]]
    for t in range(1, len(labels)):
        score += potentials.transition[labels[t - 1], labels[t]] + potentials.emissions[t, labels[t]]
    return float(score + potentials.eos[labels[-1]])


def _viterbi(em: np.ndarray, trans: np.ndarray, bos: np.ndarray, eos: np.ndarray) -> list[int]:
    T, L = em.shape
    delta = bos + em[0]
    back = np.zeros((T, L), dtype=np.int64)
    for t in range(1, T):
        scores = delta[:, None] + trans
        back[t] = np.argmax(scores, axis=0)  # ties -> lowest label index
        delta = scores[back[t], np.arange(L)] + em[t]
    last = int(np.argmax(delta + eos))
    path = [last]
    for t in range(T - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return path


def _gold_label_ids(model: CrfModel, gold: TagSequence) -> np.ndarray:
    try:
        return np.array([model.label_index[tag_to_string(t)] for t in gold.tags], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"gold tag {exc.args[0]!r} not in label set of layer {model.layer.value}")


def _squared_norm(model_arrays: Iterable[np.ndarray]) -> float:
    return float(sum(np.sum(a * a) for a in model_arrays))


def _sentence_nll_grad(
    emission_w: np.ndarray,
    trans_w: np.ndarray,
    bos_w: np.ndarray,
    eos_w: np.ndarray,
    feats: Sequence[tuple[np.ndarray, np.ndarray]],
    y: np.ndarray,
    grad_emission: np.ndarray,
    grad_trans: np.ndarray,
    grad_bos: np.ndarray,
    grad_eos: np.ndarray,
) -> float:
    """Data term of one sentence: adds (expected - gold) counts into the grad arrays."""
    T = len(feats)
    L = emission_w.shape[1]
    em = _emissions_from_feats(emission_w, feats, L)
    p = Potentials(em, trans_w, bos_w, eos_w)
    fb = forward_backward(p)
    gold = path_score(p, y)
    diff = fb.unary.copy()
    diff[np.arange(T), y] -= 1.0
    for t, (ids, vals) in enumerate(feats):
        if len(ids):
            grad_emission[ids] += vals[:, None] * diff[t][None, :]
    if T > 1:
        grad_trans += fb.pairwise.sum(axis=0)
        np.subtract.at(grad_trans, (y[:-1], y[1:]), 1.0)
    grad_bos += diff[0] if T == 1 else fb.unary[0]
    if T > 1:
        grad_bos[y[0]] -= 1.0
        grad_eos += fb.unary[-1]
        grad_eos[y[-1]] -= 1.0
    else:
        grad_eos += diff[0]
    return fb.log_partition - gold


def nll_and_gradient(
    model: CrfModel, sentence: Sentence, gold: TagSequence
) -> tuple[float, CrfGradient]:
    """Regularized negative log-likelihood of one sentence and its exact gradient."""
    if len(gold.tags) != len(sentence.tokens):
        raise ValueError(
            f"gold length {len(gold.tags)} does not match sentence length {len(sentence.tokens)}"
        )
    y = _gold_label_ids(model, gold)
    feats = _featurize(model, sentence)
    grad = CrfGradient(
        emission=np.zeros_like(model.emission),
        transition=np.zeros_like(model.transition),
        bos=np.zeros_like(model.bos),
        eos=np.zeros_like(model.eos),
    )
    data_nll = _sentence_nll_grad(
        model.emission,
        model.transition,
        model.bos,
        model.eos,
        feats,
        y,
        grad.emission,
        grad.transition,
        grad.bos,
        grad.eos,
    )
    lam = model.l2_lambda
    sq = _squared_norm((model.emission, model.transition, model.bos, model.eos))
    grad.emission += lam * model.emission
    grad.transition += lam * model.transition
    grad.bos += lam * model.bos
    grad.eos += lam * model.eos
    return data_nll + 0.5 * lam * sq, grad


def viterbi_decode(model: CrfModel, sentence: Sentence) -> TagSequence:
    """Argmax label path, repaired to a structurally valid tag sequence."""
    potentials = log_potentials(model, sentence)
    path = _viterbi(potentials.emissions, potentials.transition, potentials.bos, potentials.eos)
    raw = TagSequence(model.layer, tuple(tag_from_string(model.labels[i]) for i in path))
    return encode(sentence, decode(raw), model.layer)


@dataclass
class _LayerSentence:
    sentence: Sentence
    spans: list[TokenSpan]
    feats: list[tuple[np.ndarray, np.ndarray]] | None = None
    gold: np.ndarray | None = None


def _collect_layer_sentences(corpus: Corpus, layer: ConceptType) -> list[_LayerSentence]:
    out: list[_LayerSentence] = []
    for doc in corpus.documents:
        if doc.sentences is None:
            raise ValueError(f"document {doc.doc_id} has not been tokenized")
        layer_spans, _ = aligned_layer_spans(doc)
        per_sentence = layer_spans[layer]
        for si, sent in enumerate(doc.sentences):
            if not sent.tokens:
                continue
            spans = resolve_overlaps(per_sentence.get(si, []), "longest_wins")
            out.append(_LayerSentence(sent, spans))
    return out


def _span_key_set(items: Iterable[tuple[int, TokenSpan]]) -> set[tuple[int, int, int]]:
    # Non-study flags are ignored for F1, matching the evaluation protocol.
    return {(sid, s.first, s.last) for sid, s in items}


def _validation_f1(
    emission_w: np.ndarray,
    trans_w: np.ndarray,
    bos_w: np.ndarray,
    eos_w: np.ndarray,
    layer: ConceptType,
    data: list[_LayerSentence],
    labels: tuple[str, ...],
) -> float:
    gold = _span_key_set((i, s) for i, item in enumerate(data) for s in item.spans)
    predicted: set[tuple[int, int, int]] = set()
    n_labels = len(labels)
    tags = [tag_from_string(lab) for lab in labels]
    for i, item in enumerate(data):
        assert item.feats is not None
        em = _emissions_from_feats(emission_w, item.feats, n_labels)
        path = _viterbi(em, trans_w, bos_w, eos_w)
        seq = TagSequence(layer, tuple(tags[j] for j in path))
        predicted |= _span_key_set((i, s) for s in decode(seq))
    tp = len(gold & predicted)
    fp = len(predicted) - tp
    fn = len(gold) - tp
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


def train(
    train_corpus: Corpus,
    layer: ConceptType,
    config: TrainConfig,
    validation: Corpus,
) -> CrfModel:
    """Train one layer's CRF by seeded mini-batch gradient descent.

    Early stopping tracks span F1 on the validation corpus and returns the
    best-scoring checkpoint. A layer with no gold training spans yields an
    all-O model and a warning.
    """
    data = _collect_layer_sentences(train_corpus, layer)
    if not data:
        raise ValueError("empty training corpus")
    if sum(len(item.spans) for item in data) == 0:
        _warnings.warn(
            f"layer {layer.value}: no gold spans in training data; returning all-O model"
        )
        return model_zero(layer, (), config.l2_lambda, config)

    labels = layer_labels(layer)
    label_index = {lab: i for i, lab in enumerate(labels)}
    feature_set: set[str] = set()
    raw_feats: list[list[dict[str, float]]] = []
    for item in data:
        per_token = [extract_features(item.sentence, i) for i in range(len(item.sentence.tokens))]
        raw_feats.append(per_token)
        for fv in per_token:
            feature_set.update(fv)
    feature_table = tuple(sorted(feature_set))
    feature_index = {f: i for i, f in enumerate(feature_table)}

    for item, per_token in zip(data, raw_feats):
        item.feats = [
            (
                np.array(sorted(feature_index[f] for f in fv), dtype=np.int64),
                np.ones(len(fv), dtype=np.float64),
            )
            for fv in per_token
        ]
        seq = encode(item.sentence, item.spans, layer)
        item.gold = np.array([label_index[tag_to_string(t)] for t in seq.tags], dtype=np.int64)

    val_data = _collect_layer_sentences(validation, layer) if validation.documents else []
    for item in val_data:
        item.feats = [
            (
                np.array(
                    sorted(feature_index[f] for f in extract_features(item.sentence, i) if f in feature_index),
                    dtype=np.int64,
                ),
                None,
            )
            for i in range(len(item.sentence.tokens))
        ]
        item.feats = [(ids, np.ones(len(ids), dtype=np.float64)) for ids, _ in item.feats]

    n_labels = len(labels)
    W = np.zeros((len(feature_table), n_labels))
    A = np.zeros((n_labels, n_labels))
    b = np.zeros(n_labels)
    e = np.zeros(n_labels)
    lam = config.l2_lambda

    rng = np.random.default_rng(config.seed)
    best_f1 = -1.0
    best: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray] | None = None
    best_score: float | None = None
    plateau = 0

    for _epoch in range(config.epochs):
        order = rng.permutation(len(data))
        for start in range(0, len(data), config.batch_size):
            batch = order[start : start + config.batch_size]
            gW = np.zeros_like(W)
            gA = np.zeros_like(A)
            gb = np.zeros_like(b)
            ge = np.zeros_like(e)
            for idx in batch:
                item = data[idx]
                _sentence_nll_grad(W, A, b, e, item.feats, item.gold, gW, gA, gb, ge)
            scale = 1.0 / len(batch)
            W -= config.learning_rate * (gW * scale + lam * W)
            A -= config.learning_rate * (gA * scale + lam * A)
            b -= config.learning_rate * (gb * scale + lam * b)
            e -= config.learning_rate * (ge * scale + lam * e)
        if val_data:
            f1 = _validation_f1(W, A, b, e, layer, val_data, labels)
            if f1 > best_f1:
                best_f1 = f1
                best = (W.copy(), A.copy(), b.copy(), e.copy())
                best_score = f1
                plateau = 0
            else:
                plateau += 1
                if plateau >= config.early_stop_patience:
                    break

    if best is not None:
        W, A, b, e = best
    return CrfModel(
        layer=layer,
        labels=labels,
        feature_table=feature_table,
        emission=W,
        transition=A,
        bos=b,
        eos=e,
        l2_lambda=lam,
        validation_f1=best_score,
        config=config,
    )


def predict_document(models: Mapping[ConceptType, CrfModel], doc: Document) -> list[ConceptAnnotation]:
    """Run every layer model over the document and merge decoded spans.

    Layers are independent, so cross-type overlaps survive. Annotation ids are
    fresh, assigned in (start, end, type) order.
    """
    if doc.sentences is None:
        raise ValueError(f"document {doc.doc_id} has not been tokenized")
    missing = [t.value for t in CONCEPT_TYPES if t not in models]
    if missing:
        raise ValueError(f"missing model for layer(s): {', '.join(missing)}")
    found: list[tuple[int, int, ConceptType, bool]] = []
    for layer in CONCEPT_TYPES:
        model = models[layer]
        for sent in doc.sentences:
            if not sent.tokens:
                continue
            seq = viterbi_decode(model, sent)
            for span in decode(seq):
                found.append(
                    (
                        sent.tokens[span.first].start,
                        sent.tokens[span.last].end,
                        layer,
                        span.non_study,
                    )
                )
    found.sort(key=lambda item: (item[0], item[1], item[2].value))
    return [
        ConceptAnnotation(
            id=f"p{i}",
            concept_type=t,
            start=s,
            end=e,
            surface=doc.text[s:e],
            non_study=ns,
        )
        for i, (s, e, t, ns) in enumerate(found, start=1)
    ]


def save_model(model: CrfModel, path: Path | str) -> None:
    """Versioned JSON with weights as sorted key/value pairs; byte-reproducible."""
    labels = list(model.labels)
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "layer": model.layer.value,
        "label_set": labels,
        "templates_version": model.template_version,
        "l2_lambda": model.l2_lambda,
        "feature_table": list(model.feature_table),
        "emission_weights": {
            f: {lab: float(model.emission[i, j]) for j, lab in enumerate(labels)}
            for i, f in enumerate(model.feature_table)
        },
        "transition_weights": {
            "pairs": {
                f"{a}|{bq}": float(model.transition[i, j])
                for i, a in enumerate(labels)
                for j, bq in enumerate(labels)
            },
            "bos": {lab: float(model.bos[i]) for i, lab in enumerate(labels)},
            "eos": {lab: float(model.eos[i]) for i, lab in enumerate(labels)},
        },
        "config": config_to_dict(model.config) if model.config is not None else None,
        "validation_f1": model.validation_f1,
    }
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def load_model(path: Path | str) -> CrfModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {payload.get('format_version')!r}")
    layer = ConceptType(payload["layer"])
    labels = tuple(payload["label_set"])
    table = tuple(payload["feature_table"])
    emission = np.array(
        [[payload["emission_weights"][f][lab] for lab in labels] for f in table]
    ).reshape(len(table), len(labels))
    tw = payload["transition_weights"]
    transition = np.array([[tw["pairs"][f"{a}|{bq}"] for bq in labels] for a in labels])
    bos = np.array([tw["bos"][lab] for lab in labels])
    eos = np.array([tw["eos"][lab] for lab in labels])
    config = TrainConfig(**payload["config"]) if payload.get("config") else None
    return CrfModel(
        layer=layer,
        labels=labels,
        feature_table=table,
        emission=emission,
        transition=transition,
        bos=bos,
        eos=eos,
        l2_lambda=payload["l2_lambda"],
        template_version=payload["templates_version"],
        validation_f1=payload.get("validation_f1"),
        config=config,
    )
