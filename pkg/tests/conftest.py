import numpy as np
import pytest

from artifact.alignment import RawAlignment
from artifact.treebank import LabelSet, Sentence, Token


def _sentence(words, heads=None, rels=None, sent_id=None):
    tokens = []
    for i, w in enumerate(words, start=1):
        h = heads[i - 1] if heads else None
        r = rels[i - 1] if rels else "_"
        tokens.append(Token(index=i, form=w, upos="X", head=h, deprel=r))
    return Sentence(tuple(tokens), sent_id)


class BookStore:
    """English tree over 'I went to the book store' aligned to 我 去 了 書店;
    'book' and 'store' both align to 書店 and 了 is unaligned."""

    src = _sentence(
        ["I", "went", "to", "the", "book", "store"],
        [2, 0, 6, 6, 6, 2],
        ["nsubj", "root", "case", "det", "compound", "obl"],
        "fig1",
    )
    tgt = _sentence(["我", "去", "了", "書店"], sent_id="fig1")
    alignment = RawAlignment(6, 4, frozenset({(1, 1), (2, 2), (5, 4), (6, 4)}))
    labels = LabelSet.from_labels(["case", "compound", "det", "nsubj", "obl", "root"])
    WO, QU, LE, SHUDIAN = 1, 2, 3, 4


class StudySyntax:
    """'We study syntax and everything about it' aligned one-to-one except
    for 'it'; the parser gives 'about' the head 'it' with 0.99 and 'study'
    with 0.01."""

    n_src, n_tgt = 7, 6
    alignment = RawAlignment(7, 6, frozenset({(1, 1), (2, 2), (3, 3), (4, 4), (5, 6), (6, 5)}))
    gold_heads = [2, 0, 2, 5, 3, 7, 5]
    RELEVANT, STUDY = 5, 2

    @classmethod
    def arc_probs(cls):
        p = np.zeros((8, 8))
        for i, h in enumerate(cls.gold_heads, start=1):
            p[i, h] = 1.0
        p[6] = 0.0
        p[6, 7] = 0.99
        p[6, 2] = 0.01
        return p


@pytest.fixture
def book_store():
    return BookStore


@pytest.fixture
def study_syntax():
    return StudySyntax


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
