"""Command-line entry point: convert, stats, split, train, predict, eval, synth, run."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .bilou import read_tagged_tsv, write_tagged_tsv
from .brat import save_brat_dir
from .corpus import (
    CONCEPT_TYPES,
    ConceptType,
    Corpus,
    compute_stats,
    render_stats,
    save_corpus_json,
    stats_to_dict,
)
from .crf import TrainConfig, save_model
from .evaluation import MATCH_MODES, evaluate, render_report, report_to_json
from .outcome import save_lr_model
from .pipeline import (
    MODEL_FILES,
    OUTCOME_CLASSIFIER_FILE,
    PipelineError,
    RunConfig,
    SplitSpec,
    layer_config,
    load_corpus_any,
    load_models_dir,
    outcome_config,
    outcome_report,
    predict_corpus,
    prepare_corpus,
    render_outcome_report,
    run_pipeline,
    split_corpus,
    train_all_layers,
    train_outcome_classifier,
)
from .synthgen import default_spec, generate_to_dir, spec_from_dict

FORMATS = ("brat", "json", "tsv")


def _default_jobs() -> int:
    value = os.environ.get("ONCOTAG_JOBS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def _load_any(path: str, fmt: str) -> Corpus:
    if fmt == "tsv":
        tsv_path = Path(path)
        if not tsv_path.is_file():
            raise ValueError(f"input file not found: {tsv_path}")
        return Corpus(tuple(read_tagged_tsv(tsv_path.read_text(encoding="utf-8"))))
    return load_corpus_any(path, fmt)


def _save_any(corpus: Corpus, path: str, fmt: str) -> None:
    if fmt == "brat":
        save_brat_dir(corpus, path)
    elif fmt == "json":
        save_corpus_json(corpus, path)
    else:
        prepared, _ = prepare_corpus(corpus)
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(write_tagged_tsv(prepared.documents), encoding="utf-8")


def _train_config_from_args(args: argparse.Namespace, seed: int) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch_size=args.batch_size,
        l2_lambda=args.l2_lambda,
        early_stop_patience=args.patience,
        seed=seed,
    )


def cmd_convert(args: argparse.Namespace) -> int:
    corpus = _load_any(args.input, args.from_format)
    _save_any(corpus, args.output, args.to_format)
    print(f"converted {len(corpus.documents)} documents ({args.from_format} -> {args.to_format})")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    corpus, _ = prepare_corpus(_load_any(args.input, args.format))
    stats = compute_stats(corpus)
    if args.json:
        print(json.dumps(stats_to_dict(stats), indent=2, sort_keys=True))
    else:
        print(render_stats(stats), end="")
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    corpus = _load_any(args.input, args.format)
    spec = SplitSpec(args.train_frac, args.val_frac, args.test_frac, seed=args.seed)
    train_c, val_c, test_c, manifest = split_corpus(corpus, spec)
    out = Path(args.output)
    for name, part in (("train", train_c), ("val", val_c), ("test", test_c)):
        save_corpus_json(part, out / name)
    out.mkdir(parents=True, exist_ok=True)
    (out / "split_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    sizes = manifest["sizes"]
    print(f"split {len(corpus.documents)} docs: {sizes['train']}/{sizes['val']}/{sizes['test']}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    train_corpus, _ = prepare_corpus(_load_any(args.train_dir, args.format))
    val_corpus, _ = prepare_corpus(_load_any(args.val_dir, args.format)) if args.val_dir else (
        Corpus(()),
        0,
    )
    config = _train_config_from_args(args, args.seed)
    models_dir = Path(args.models_dir)
    models_dir.mkdir(parents=True, exist_ok=True)
    if args.layer == "outcome":
        classifier = train_outcome_classifier(train_corpus, config)
        if classifier is None:
            print("outcome classifier not trained (degenerate labels)", file=sys.stderr)
            return 1
        save_lr_model(classifier, models_dir / OUTCOME_CLASSIFIER_FILE)
        print(f"wrote {models_dir / OUTCOME_CLASSIFIER_FILE}")
        return 0
    if args.layer == "all":
        models = train_all_layers(train_corpus, val_corpus, config, args.jobs)
        for layer, model in models.items():
            save_model(model, models_dir / MODEL_FILES[layer])
            print(f"wrote {models_dir / MODEL_FILES[layer]} (val F1 {model.validation_f1})")
        classifier = train_outcome_classifier(train_corpus, config)
        if classifier is not None:
            save_lr_model(classifier, models_dir / OUTCOME_CLASSIFIER_FILE)
            print(f"wrote {models_dir / OUTCOME_CLASSIFIER_FILE}")
        return 0
    from .crf import train as train_layer

    layer = ConceptType(args.layer)
    model = train_layer(train_corpus, layer, layer_config(config, layer), val_corpus)
    save_model(model, models_dir / MODEL_FILES[layer])
    print(f"wrote {models_dir / MODEL_FILES[layer]} (val F1 {model.validation_f1})")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    corpus, _ = prepare_corpus(_load_any(args.input, args.format))
    models, _ = load_models_dir(args.models_dir)
    predicted = predict_corpus(models, corpus, args.jobs)
    out = Path(args.output)
    save_corpus_json(predicted, out / "json")
    save_brat_dir(predicted, out / "brat")
    (out / "predictions.tsv").write_text(write_tagged_tsv(predicted.documents), encoding="utf-8")
    print(f"predicted {len(predicted.documents)} documents -> {out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    gold, _ = prepare_corpus(_load_any(args.gold, args.format))
    predicted, _ = prepare_corpus(_load_any(args.pred, args.format))
    report = evaluate(gold, predicted, args.mode)
    print(render_report(report), end="")
    if args.json:
        Path(args.json).write_text(report_to_json(report), encoding="utf-8")
    if args.models_dir:
        _, classifier = load_models_dir(args.models_dir)
        counts = outcome_report(gold, classifier)
        print(render_outcome_report(counts), end="")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    if args.spec:
        spec = spec_from_dict(json.loads(Path(args.spec).read_text(encoding="utf-8")))
        if args.docs is not None or args.seed is not None:
            raise ValueError("--docs/--seed cannot override an explicit --spec file")
    else:
        spec = default_spec(
            n_docs=args.docs if args.docs is not None else 250,
            seed=args.seed if args.seed is not None else 42,
            noise_rate=args.noise,
        )
    corpus, manifest = generate_to_dir(spec, args.output)
    print(
        f"generated {len(corpus.documents)} documents, "
        f"{manifest.total_annotations} annotations -> {args.output}"
    )
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    config = RunConfig.from_file(args.config, seed=args.seed, jobs=args.jobs)
    summary = run_pipeline(config)
    print(render_report(summary["report"]), end="")
    print(render_outcome_report(summary["outcome"]), end="")
    print(f"artifacts in {summary['output_dir']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oncotag",
        description="Concept tagging toolkit for oncology abstracts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert between brat, json and tagged-TSV")
    p.add_argument("--from", dest="from_format", choices=FORMATS, required=True)
    p.add_argument("--to", dest="to_format", choices=FORMATS, required=True)
    p.add_argument("--input", required=True, help="input directory (brat/json) or .tsv file")
    p.add_argument("--output", required=True, help="output directory (brat/json) or .tsv file")
    p.set_defaults(handler=cmd_convert)

    p = sub.add_parser("stats", help="descriptive corpus statistics")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=FORMATS, default="brat")
    p.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("split", help="document-level train/val/test split")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--format", choices=FORMATS, default="brat")
    p.add_argument("--train-frac", type=float, default=0.70)
    p.add_argument("--val-frac", type=float, default=0.10)
    p.add_argument("--test-frac", type=float, default=0.20)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(handler=cmd_split)

    p = sub.add_parser("train", help="train layer models and the outcome classifier")
    p.add_argument("--train-dir", required=True)
    p.add_argument("--val-dir", default=None)
    p.add_argument("--format", choices=FORMATS, default="json")
    p.add_argument("--models-dir", required=True)
    p.add_argument(
        "--layer",
        default="all",
        choices=[t.value for t in CONCEPT_TYPES] + ["all", "outcome"],
    )
    p.add_argument("--learning-rate", type=float, default=0.2)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--l2-lambda", type=float, default=1e-4)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("predict", help="tag a corpus with trained models")
    p.add_argument("--models-dir", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=FORMATS, default="json")
    p.add_argument("--output", required=True)
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("eval", help="span-level P/R/F1 of predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--format", choices=FORMATS, default="json")
    p.add_argument("--mode", choices=MATCH_MODES, default="exact")
    p.add_argument("--json", default=None, help="also write the report as JSON here")
    p.add_argument("--models-dir", default=None, help="score the outcome classifier too")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic annotated corpus")
    p.add_argument("--output", required=True)
    p.add_argument("--spec", default=None, help="JSON generator spec file")
    p.add_argument("--docs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--noise", type=float, default=0.0)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("run", help="end-to-end pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(handler=cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ValueError, PipelineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
