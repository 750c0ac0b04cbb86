import math
from dataclasses import replace

import numpy as np
import pytest
import torch

from artifact.alignment import build_projection_matrices
from artifact.biaffine import EncoderConfig, ParserModel, model_to_bytes, predict_distributions, save_model
from artifact.decoding import parse_sentences
from artifact.projection import SoftTarget, hard_project, partial_tree, project_discrete_tree
from artifact.synthdata import LABELS, SynthConfig, generate
from artifact.training import (Example, TrainConfig, TrainingDiverged, batch_loss, dataset_loss,
                            gradient_check, initial_model, partial_arc_ce, partial_label_ce,
                            supervised_loss, total_loss, train)
from artifact.treebank import LabelSet, gold_arc_matrix

from fuzz import random_one_to_one, random_sentence

LABEL_SET = LabelSet.from_labels(LABELS)
TINY = EncoderConfig(vocab_hash_buckets=31, embed_dim=3, hidden_dim=3, head_dim=2, dep_dim=2, seed=1)
SMALL = EncoderConfig(vocab_hash_buckets=512, embed_dim=16, hidden_dim=24, head_dim=16, dep_dim=16)


@pytest.fixture(scope="module")
def synth():
    return generate(SynthConfig(n_sentences=40, max_len=8, fusion_rate=0.3))


def soft_batch(synth, k=3):
    src, tgt, als = synth
    return [(t, project_discrete_tree(s, build_projection_matrices(a), LABEL_SET, t.id))
            for s, t, a in list(zip(src, tgt, als))[:k]]


def randomized(config, seed):
    m = ParserModel(replace(config, seed=seed), LABEL_SET)
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        m.w_arc.copy_(torch.randn(m.w_arc.shape, generator=g))
        m.w_label.copy_(torch.randn(m.w_label.shape, generator=g))
    return m


# --- numpy losses -----------------------------------------------------------------


def test_arc_ce_closed_forms():
    target = np.zeros((3, 4))
    target[1, 1] = 1.0  # self-loop mass is allowed
    target[2, :2] = 0.5
    p2 = np.zeros((3, 3))
    p2[1, 1] = 1.0
    p2[2, :2] = 0.5
    assert partial_arc_ce(p2, target) == pytest.approx(math.log(2), abs=1e-12)
    target[2] = 0.0  # unaligned word
    assert partial_arc_ce(p2, target) == 0.0


def test_arc_ce_ignores_null_column_and_root_row(rng):
    target = rng.random((4, 5))
    p2 = rng.random((4, 4))
    base = partial_arc_ce(p2, target)
    target[:, -1] = 7.0
    target[0] = 3.0
    assert partial_arc_ce(p2, target) == base


def test_arc_ce_clamps_log():
    target = np.zeros((2, 3))
    target[1, 0] = 1.0
    assert partial_arc_ce(np.zeros((2, 2)), target) == pytest.approx(-math.log(1e-12))
    assert math.isfinite(partial_arc_ce(np.zeros((2, 2)), target, log_floor=1e-30))


def test_label_ce_uniform():
    # one word, two labels: cells (1, 0) and (1, 1) each cost ln 2
    q = np.full((2, 2, 2), 0.5)
    assert partial_label_ce(q, q) == pytest.approx(2 * math.log(2), abs=1e-12)
    hot = np.zeros((2, 2, 2))
    hot[1, 0, 1] = 1.0
    q2 = q.copy()
    q2[1, 0] = [0.0, 1.0]
    assert partial_label_ce(q2, hot) == 0.0


# --- torch losses against the numpy reference --------------------------------------


def test_total_loss_matches_reference(synth):
    m = randomized(SMALL, 2)
    batch = soft_batch(synth, 4)
    dists = predict_distributions(m, [s for s, _ in batch])
    want = sum(partial_arc_ce(p, t) + partial_label_ce(q, t) for (p, q), (_, t) in zip(dists, batch))
    assert total_loss(m, batch) == pytest.approx(want, rel=1e-5)
    assert total_loss(m, batch[:1]) + total_loss(m, batch[1:]) == pytest.approx(want, rel=1e-5)
    assert total_loss(m, []) == 0.0


def test_supervised_loss_uniform_model():
    m = ParserModel(SMALL, LABEL_SET)  # zero bilinear weights
    s = random_sentence(np.random.default_rng(0), 2, LABEL_SET)
    want = 2 * math.log(3) + 2 * math.log(len(LABEL_SET))
    assert supervised_loss(m, [s]) == pytest.approx(want, rel=1e-6)
    assert supervised_loss(m, [s, s]) == pytest.approx(2 * want, rel=1e-6)


def test_supervised_label_loss_covers_gold_arcs_only(synth):
    m = randomized(SMALL, 3)
    s = synth[0][0]
    (p, q), = predict_distributions(m, [s])
    n = len(s)
    arc = -sum(math.log(p[i, t.head]) for i, t in enumerate(s.tokens, 1))
    lab = -sum(math.log(q[i, t.head, LABEL_SET.index(t.deprel)]) for i, t in enumerate(s.tokens, 1))
    assert supervised_loss(m, [s]) == pytest.approx(arc + lab, rel=1e-5)
    assert n > 1


def test_one_to_one_soft_arc_loss_equals_supervised(rng):
    m = randomized(SMALL, 4)
    for _ in range(20):
        ns, nt = int(rng.integers(2, 8)), int(rng.integers(2, 8))
        src = random_sentence(rng, ns, LABEL_SET)
        raw = random_one_to_one(rng, ns, nt)
        tgt = random_sentence(rng, nt, LABEL_SET)
        soft = project_discrete_tree(src, build_projection_matrices(raw), LABEL_SET)
        hard = partial_tree(tgt, hard_project(src, raw))
        (p, _), = predict_distributions(m, [tgt])
        assert abs(partial_arc_ce(p, soft) - partial_arc_ce(p, gold_arc_matrix(hard))) <= 1e-10


def test_partial_tree_example_skips_unattached():
    s = random_sentence(np.random.default_rng(1), 4, LABEL_SET)
    part = s.with_tree([s.heads[0], None, None, s.heads[3]], [s.deprels[0], "_", "_", s.deprels[3]])
    ex = Example.from_tree(part, LABEL_SET)
    assert ex.arc_target[1:].sum() == 2 and ex.label_mask.sum() == 2


def test_soft_example_shape_check(synth):
    (t, soft), = soft_batch(synth, 1)
    other = synth[1][1]
    if len(other) != len(t):
        with pytest.raises(ValueError):
            Example.from_soft(other, soft)


# --- gradients -----------------------------------------------------------------------


def test_gradient_check(synth):
    batch = [Example.from_soft(s, t) for s, t in soft_batch(synth, 2)]
    for seed in range(3):
        assert gradient_check(randomized(TINY, seed), batch) <= 1e-4


def test_gradient_check_refuses_big_models(synth):
    batch = [Example.from_soft(s, t) for s, t in soft_batch(synth, 1)]
    with pytest.raises(ValueError):
        gradient_check(ParserModel(SMALL, LABEL_SET), batch)


def _grads(model, examples):
    model.zero_grad()
    batch_loss(model, examples).backward()
    return [p.grad.clone() for p in model.parameters()]


def test_zero_target_gives_zero_gradient(synth):
    (s, t), = soft_batch(synth, 1)
    empty = SoftTarget(np.zeros_like(t.arcs), t.labels, t.sentence_id)
    ex = Example.from_soft(s, empty)
    ex.label_mask[:] = False
    m = randomized(TINY, 5)
    assert all(float(g.abs().max()) == 0.0 for g in _grads(m, [ex]))


def test_duplicated_batch_doubles_gradient(synth):
    batch = [Example.from_soft(s, t) for s, t in soft_batch(synth, 2)]
    m = randomized(TINY, 6).double()
    g1 = _grads(m, batch)
    g2 = _grads(m, batch + batch)
    for a, b in zip(g1, g2):
        assert torch.allclose(b, 2 * a, rtol=1e-10, atol=1e-12)


# --- training loop -------------------------------------------------------------------


def test_overfit_single_sentence():
    s = generate(SynthConfig(n_sentences=1, max_len=8))[0][0]
    ex = [Example.from_tree(s, LABEL_SET)]
    cfg = TrainConfig(learning_rate=1e-2, epochs=200, batch_size=1, patience=None)
    m = train(cfg, ex, label_set=LABEL_SET, encoder=SMALL)
    assert supervised_loss(m, [s]) < 0.01
    (parsed,) = parse_sentences(m, [s])
    assert parsed.heads == s.heads and parsed.deprels == s.deprels


def test_training_is_deterministic(synth):
    data = [Example.from_tree(s, LABEL_SET) for s in synth[0][:20]]
    dev = [Example.from_tree(s, LABEL_SET) for s in synth[0][20:25]]
    cfg = TrainConfig(epochs=3, batch_size=4, seed=7, early_stop_metric="dev_loss")
    a = train(cfg, data, dev, label_set=LABEL_SET, encoder=SMALL)
    b = train(cfg, data, dev, label_set=LABEL_SET, encoder=SMALL)
    assert model_to_bytes(a) == model_to_bytes(b)
    c = train(replace(cfg, seed=8), data, dev, label_set=LABEL_SET, encoder=SMALL)
    assert model_to_bytes(a) != model_to_bytes(c)


def test_early_stopping_returns_best_epoch(synth):
    data = [Example.from_soft(s, t) for s, t in soft_batch(synth, 20)]
    dev = data[15:]
    seen = []
    cfg = TrainConfig(learning_rate=3e-2, epochs=6, batch_size=4, early_stop_metric="dev_loss",
                      patience=None)
    m = train(cfg, data[:15], dev, label_set=LABEL_SET, encoder=SMALL,
              log=lambda e, loss, metric: seen.append(metric))
    assert len(seen) == 6
    assert dataset_loss(m, dev) == pytest.approx(min(seen), rel=1e-5)


def test_patience_stops_early(synth):
    data = [Example.from_tree(s, LABEL_SET) for s in synth[0][:8]]
    seen = []
    cfg = TrainConfig(learning_rate=1e-9, epochs=50, batch_size=4, patience=2,
                      early_stop_metric="dev_las")
    train(cfg, data, data, label_set=LABEL_SET, encoder=SMALL,
          log=lambda e, loss, metric: seen.append(metric))
    assert len(seen) == 3


def test_init_from_model_file(tmp_path, synth):
    m = randomized(SMALL, 9)
    path = tmp_path / "m.bin"
    save_model(m, path)
    loaded = initial_model(TrainConfig(init=str(path)), LABEL_SET)
    assert model_to_bytes(loaded) == model_to_bytes(m)
    with pytest.raises(ValueError):
        initial_model(TrainConfig(init=str(path)), LabelSet.from_labels(["a", "b"]))


def test_divergence_is_reported(synth):
    ex = Example.from_tree(synth[0][0], LABEL_SET)
    ex.arc_target[1, 0] = np.nan
    with pytest.raises(TrainingDiverged, match="epoch 1"):
        train(TrainConfig(epochs=1), [ex], label_set=LABEL_SET, encoder=SMALL)


@pytest.mark.parametrize("kwargs", [
    {"learning_rate": 0}, {"epochs": 0}, {"batch_size": 0}, {"early_stop_metric": "uas"},
    {"optimizer": "rmsprop"}, {"patience": 0},
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_empty_training_data():
    with pytest.raises(ValueError):
        train(TrainConfig(), [], label_set=LABEL_SET)
