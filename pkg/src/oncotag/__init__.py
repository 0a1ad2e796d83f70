"""oncotag: concept tagging toolkit for precision-oncology abstracts.

Ingests brat-annotated abstracts over five concept types (Cancer, Mutation,
Population, Treatment, Outcome), encodes spans as per-layer BILOU sequences
with an N- prefix for Non-study mentions, trains a linear-chain CRF per layer
plus a sentence-level outcome classifier, and reports span-level P/R/F1.
"""

__version__ = "0.1.0"

from .corpus import (
    CONCEPT_TYPES,
    ConceptAnnotation,
    ConceptType,
    Corpus,
    CorpusStats,
    Document,
    compute_stats,
    load_corpus_json,
    normalize_annotations,
    save_corpus_json,
    segment_document,
)
from .tokenizer import AlignedSpan, Sentence, Token, align_span, segment, tokenize
from .brat import BratParseError, emit_pair, load_brat_dir, parse_pair, save_brat_dir
from .bilou import (
    Tag,
    TagSequence,
    TokenSpan,
    decode,
    encode,
    layer_labels,
    read_tagged_tsv,
    resolve_overlaps,
    write_tagged_tsv,
)
from .crf import (
    ChainMarginals,
    CrfGradient,
    CrfModel,
    Potentials,
    TrainConfig,
    extract_features,
    forward_backward,
    load_model,
    log_potentials,
    nll_and_gradient,
    path_score,
    predict_document,
    save_model,
    token_shape,
    train,
    viterbi_decode,
)
from .outcome import (
    LogRegModel,
    SentenceExample,
    classify,
    label_sentences,
    load_lr_model,
    save_lr_model,
    sentence_features,
    sentence_prf,
    train_lr,
)
from .evaluation import EvalReport, MatchCounts, evaluate, render_report, report_to_dict
from .synthgen import SynthSpec, default_spec, generate, generate_to_dir
from .pipeline import (
    PipelineError,
    RunConfig,
    SplitSpec,
    predict_corpus,
    prepare_corpus,
    run_pipeline,
    split_corpus,
    train_all_layers,
)
