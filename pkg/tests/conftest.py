from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from oncotag.corpus import ConceptAnnotation, ConceptType, Corpus, Document, segment_document
from oncotag.tokenizer import Sentence, Token

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
    deadline=None,
)
settings.load_profile("ci")

FIXTURES = Path(__file__).parent / "fixtures"


def make_sentence(words, start=0, index=0):
    """A Sentence whose tokens are the given words joined by single spaces."""
    tokens = []
    pos = start
    for word in words:
        tokens.append(Token(word, pos, pos + len(word)))
        pos += len(word) + 1
    return Sentence(index, tuple(tokens), tokens[0].start, tokens[-1].end)


def doc_from_words(doc_id, words, spans=()):
    """Document over space-joined words with annotations given as token ranges.

    spans: iterable of (first_word, last_word, ConceptType, non_study).
    """
    text = " ".join(words)
    starts = []
    pos = 0
    for word in words:
        starts.append(pos)
        pos += len(word) + 1
    anns = []
    for i, (first, last, ctype, non_study) in enumerate(spans, start=1):
        start = starts[first]
        end = starts[last] + len(words[last])
        anns.append(
            ConceptAnnotation(
                id=f"a{i}",
                concept_type=ctype,
                start=start,
                end=end,
                surface=text[start:end],
                non_study=non_study,
            )
        )
    return segment_document(Document(doc_id=doc_id, text=text, annotations=tuple(anns)))


@pytest.fixture
def fixtures_dir():
    return FIXTURES
