import math

import numpy as np
import pytest
import torch

from artifact.biaffine import (EncoderConfig, LabelSetMismatch, ModelFormatError, ParserModel,
                            arc_probs, head_mask, label_probs_from_scores, load_model,
                            model_from_bytes, model_to_bytes, predict_distributions, save_model)
from artifact.synthdata import LABELS, SynthConfig, generate
from artifact.treebank import LabelSet

from fuzz import random_sentence

SMALL = EncoderConfig(vocab_hash_buckets=97, embed_dim=5, hidden_dim=6, head_dim=4, dep_dim=3, seed=3)
LABEL_SET = LabelSet.from_labels(LABELS)


@pytest.fixture(scope="module")
def corpus():
    src, _, _ = generate(SynthConfig(n_sentences=12))
    return src


def randomized(config=SMALL, labels=LABEL_SET, seed=0):
    """Model with nonzero bilinear weights so outputs are not trivially uniform."""
    m = ParserModel(config, labels)
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        m.w_arc.copy_(torch.randn(m.w_arc.shape, generator=g))
        m.w_label.copy_(torch.randn(m.w_label.shape, generator=g))
    return m


def test_shapes(corpus):
    m = randomized()
    h, d, lengths = m.encode(corpus[:3])
    t = max(len(s) for s in corpus[:3]) + 1
    assert h.shape == (3, t, SMALL.head_dim) and d.shape == (3, t, SMALL.dep_dim)
    assert lengths.tolist() == [len(s) for s in corpus[:3]]
    arc, lab, _ = m(corpus[:3])
    assert arc.shape == (3, t, t) and lab.shape == (3, t, t, len(LABEL_SET))
    assert m.w_arc.shape == (SMALL.dep_dim + 1, SMALL.head_dim + 1)
    assert m.w_label.shape == (SMALL.dep_dim + 1, SMALL.head_dim + 1, len(LABEL_SET))


def test_distributions_are_normalized(corpus):
    m = randomized()
    for (p, q), s in zip(predict_distributions(m, corpus), corpus):
        n = len(s)
        assert p.shape == (n + 1, n + 1) and q.shape == (n + 1, n + 1, len(LABEL_SET))
        assert not p[0].any()
        assert np.abs(p[1:].sum(axis=1) - 1).max() <= 1e-6
        assert np.abs(q.sum(axis=2) - 1).max() <= 1e-6
        assert (p >= 0).all()


def test_self_mask(corpus):
    m = randomized()
    (p, _), = predict_distributions(m, corpus[:1], mask_self=True)
    assert not np.diag(p).any()


def test_root_vector_feeds_the_encoding(corpus):
    m = randomized()
    h1, d1, _ = m.encode(corpus[:1])
    with torch.no_grad():
        m.root.add_(1.0)
    h2, d2, _ = m.encode(corpus[:1])
    assert not torch.equal(torch.cat([h1, d1], -1), torch.cat([h2, d2], -1))


def test_deterministic_construction_and_forward(corpus):
    a, b = ParserModel(SMALL, LABEL_SET), ParserModel(SMALL, LABEL_SET)
    for (k, x), (_, y) in zip(a.state_dict().items(), b.state_dict().items()):
        assert torch.equal(x, y), k
    other = ParserModel(EncoderConfig(**{**SMALL.__dict__, "seed": 4}), LABEL_SET)
    assert not torch.equal(a.feature.weight, other.feature.weight)
    m = randomized()
    first = predict_distributions(m, corpus)
    second = predict_distributions(m, corpus)
    for (p1, q1), (p2, q2) in zip(first, second):
        assert np.array_equal(p1, p2) and np.array_equal(q1, q2)


def test_batch_independence(corpus):
    m = randomized()
    target = corpus[0]
    (alone_p, alone_q), = predict_distributions(m, [target])
    for others in (corpus[1:4], corpus[4:9][::-1]):
        batch = list(others) + [target]
        p, q = predict_distributions(m, batch)[-1]
        assert np.allclose(p, alone_p, atol=1e-6)
        assert np.allclose(q, alone_q, atol=1e-6)


def test_zero_weights_give_uniform(corpus):
    m = ParserModel(SMALL, LABEL_SET)  # bilinear weights start at zero
    (p, q), = predict_distributions(m, corpus[:1])
    n = len(corpus[0])
    assert np.allclose(p[1:], 1.0 / (n + 1))
    assert np.allclose(q, 1.0 / len(LABEL_SET))


def test_hand_computed_arc_score():
    m = ParserModel(EncoderConfig(vocab_hash_buckets=7, embed_dim=2, hidden_dim=2,
                                  head_dim=1, dep_dim=1), LABEL_SET)
    with torch.no_grad():
        m.w_arc.zero_()
        m.w_arc[0, 0] = 1.0
    s = m.arc_scores(torch.tensor([[[3.0]]]), torch.tensor([[[2.0]]]))
    assert float(s[0, 0, 0].detach()) == 6.0


def test_scores_are_bilinear():
    m = randomized()
    with torch.no_grad():
        m.w_arc[-1, :] = 0.0
        m.w_arc[:, -1] = 0.0
        m.w_label[-1] = 0.0
        m.w_label[:, -1] = 0.0
    g = torch.Generator().manual_seed(1)
    h = torch.rand(1, 5, SMALL.head_dim, generator=g)
    d = torch.rand(1, 5, SMALL.dep_dim, generator=g)
    base = m.arc_scores(h, d)
    assert torch.allclose(m.arc_scores(h, 2.5 * d), 2.5 * base, atol=1e-5)
    assert torch.allclose(m.label_scores(h, 2.5 * d), 2.5 * m.label_scores(h, d), atol=1e-5)
    # a cell only sees its own rows
    d2 = d.clone()
    d2[0, 3] += 1.0
    changed = m.arc_scores(h, d2)
    assert torch.equal(changed[0, :3], base[0, :3]) and torch.equal(changed[0, 4:], base[0, 4:])


def test_closed_form_softmax():
    p = arc_probs(np.zeros((3, 3)))
    assert np.allclose(p[1:], 1 / 3) and not p[0].any()
    s = np.zeros((2, 3))
    s[1] = [0.0, math.log(3), 0.0]
    assert np.allclose(arc_probs(s)[1], [0.2, 0.6, 0.2])
    assert np.allclose(arc_probs(s + np.array([[0.0], [7.0]]))[1], [0.2, 0.6, 0.2])
    assert np.allclose(label_probs_from_scores(np.array([math.log(9), 0.0])), [0.9, 0.1])


def test_head_mask():
    m = head_mask(torch.tensor([2, 1]), mask_self=True)
    assert m.shape == (2, 3, 3)
    assert m[0, 0].tolist() == [True, False, False]
    assert m[0, 1].tolist() == [True, False, True]
    assert m[1, 1].tolist() == [True, False, False]


def test_save_load_round_trip(tmp_path, corpus):
    m = randomized()
    path = tmp_path / "m.bin"
    save_model(m, path)
    back = load_model(path)
    assert back.config == m.config and back.label_set == m.label_set
    for (k, x), (_, y) in zip(m.state_dict().items(), back.state_dict().items()):
        assert torch.equal(x, y), k
    assert model_to_bytes(back) == path.read_bytes()
    (p1, q1), = predict_distributions(m, corpus[:1])
    (p2, q2), = predict_distributions(back, corpus[:1])
    assert np.array_equal(p1, p2) and np.array_equal(q1, q2)


def test_no_recurrent_round_trip():
    cfg = EncoderConfig(vocab_hash_buckets=11, embed_dim=3, hidden_dim=3, head_dim=2,
                        dep_dim=2, use_recurrent=False)
    m = ParserModel(cfg, LABEL_SET)
    assert model_from_bytes(model_to_bytes(m)).config == cfg


@pytest.mark.parametrize("mutate, match", [
    (lambda b: b"XXXXXXXX" + b[8:], "magic"),
    (lambda b: b[:8] + (2).to_bytes(4, "little") + b[12:], "version"),
    (lambda b: b[:-3], "truncated"),
    (lambda b: b + b"\0", "trailing"),
])
def test_corrupt_model_files(mutate, match):
    data = model_to_bytes(ParserModel(SMALL, LABEL_SET))
    with pytest.raises(ModelFormatError, match=match):
        model_from_bytes(mutate(data))


def test_label_set_mismatch():
    m = ParserModel(SMALL, LabelSet.from_labels(["a", "b", "c", "d", "e"]))
    with pytest.raises(LabelSetMismatch):
        m.check_label_set(LabelSet.from_labels(["a", "b", "c", "d", "e", "f"]))


def test_empty_sentence_rejected(rng):
    m = ParserModel(SMALL, LABEL_SET)
    s = random_sentence(rng, 3)
    with pytest.raises(ValueError):
        m.encode([s, s.__class__((), "empty")])


def test_invalid_config():
    with pytest.raises(ValueError):
        EncoderConfig(embed_dim=0)
