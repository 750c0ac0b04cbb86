import pytest

from artifact.evaluation import EvalResult, evaluate, report
from artifact.treebank import Sentence, Token


def sent(heads, rels, upos=None, sent_id="x"):
    upos = upos or ["X"] * len(heads)
    return Sentence(tuple(Token(index=i, form="w", upos=u, head=h, deprel=r)
                          for i, (h, r, u) in enumerate(zip(heads, rels, upos), start=1)), sent_id)


GOLD = sent([2, 0, 2, 3, 2], ["nsubj", "root", "obj", "amod", "punct"],
            ["NOUN", "VERB", "NOUN", "ADJ", "PUNCT"])


def test_identity_scores_full():
    r = evaluate([GOLD], [GOLD])
    assert (r.uas, r.las, r.counted_tokens, r.excluded_tokens) == (100.0, 100.0, 4, 1)


def test_hand_counted_example():
    # heads right on 1, 2, 3; labels right on 1, 2; punctuation is wrong but ignored
    pred = sent([2, 0, 2, 1, 4], ["nsubj", "root", "iobj", "amod", "dep"])
    r = evaluate([pred], [GOLD])
    assert r.uas == 75.0 and r.las == 50.0


def test_punctuation_only_sentence():
    gold = sent([0, 1], ["root", "punct"], ["PUNCT", "PUNCT"])
    r = evaluate([gold], [gold])
    assert r.counted_tokens == 0 and r.excluded_tokens == 2 and r.uas == 0.0


def test_no_exclusion_gives_raw_accuracy():
    pred = sent([2, 0, 2, 1, 4], ["nsubj", "root", "iobj", "amod", "dep"])
    r = evaluate([pred], [GOLD], punct_tags=())
    assert r.counted_tokens == 5 and r.uas == 60.0 and r.las == 40.0


def test_partial_gold_words_are_skipped():
    gold = sent([2, 0, None], ["nsubj", "root", "_"])
    pred = sent([2, 0, 1], ["nsubj", "root", "obj"])
    r = evaluate([pred], [gold])
    assert r.counted_tokens == 2 and r.excluded_tokens == 1 and r.uas == 100.0


def test_subtype_stripping():
    gold = sent([0, 1], ["root", "nmod:poss"])
    pred = sent([0, 1], ["root", "nmod"])
    assert evaluate([pred], [gold]).las == 50.0
    assert evaluate([pred], [gold], strip_subtypes=True).las == 100.0


def test_order_invariance():
    a = sent([0, 1, 1], ["root", "obj", "obj"], sent_id="a")
    pa = sent([0, 1, 2], ["root", "obj", "nsubj"], sent_id="a")
    b = sent([2, 0], ["nsubj", "root"], sent_id="b")
    pb = sent([2, 0], ["obj", "root"], sent_id="b")
    assert evaluate([pa, pb], [a, b]) == evaluate([pb, pa], [b, a])
    r = evaluate([pa, pb], [a, b])
    assert r.las <= r.uas


def test_mismatch_names_sentence():
    with pytest.raises(ValueError, match="sentence b"):
        evaluate([sent([0], ["root"])], [sent([2, 0], ["x", "root"], sent_id="b")])
    with pytest.raises(ValueError):
        evaluate([], [GOLD])


def test_report_layout():
    table = report({"subdp": EvalResult(98.42, 97.1, 10, 0), "dt": EvalResult(30.0, 8.26, 10, 0)})
    lines = table.splitlines()
    assert lines[0].split() == ["system", "UAS", "LAS"]
    assert lines[1].split() == ["dt", "30.0", "8.3"]
    assert lines[2].split() == ["subdp", "98.4", "97.1"]
    assert len({len(line) for line in lines}) == 1
    assert len(report({"a": EvalResult(1, 1, 1, 0)}).splitlines()) == 2
    assert report({}).splitlines() == ["system     UAS     LAS"]


def test_summary_line():
    assert EvalResult(75.0, 50.0, 4, 1).summary() == "uas=75.00 las=50.00 counted=4 excluded=1"
