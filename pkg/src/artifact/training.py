"""Losses and the training loop for source and target parsers.

Every training example is reduced to the same three arrays: an arc target
over real head positions, a label target and a mask selecting the cells
whose label loss counts. Gold trees give one-hot arc rows and label cells
on gold arcs only; soft targets give their projected distributions with the
null column dropped and label loss over every real (dependent, head) pair.
Losses are summed, never averaged.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
import torch

from .biaffine import EncoderConfig, ParserModel, load_model
from .decoding import parse_sentences
from .evaluation import evaluate
from .projection import SoftTarget
from .treebank import LabelSet, Sentence, gold_arc_matrix

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-3
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    early_stop_metric: str = "dev_las"  # or "dev_loss"
    init: str = "random"  # or a model path
    gradient_clip: float = 5.0
    optimizer: str = "adam"  # or "sgd"
    patience: Optional[int] = 10  # epochs without dev improvement before stopping
    log_floor: float = LOG_FLOOR
    mask_self: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.early_stop_metric not in ("dev_loss", "dev_las"):
            raise ValueError(f"unknown early-stop metric {self.early_stop_metric!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be at least 1")


SOURCE_DEFAULTS = TrainConfig(learning_rate=2e-3, epochs=100, early_stop_metric="dev_las")
TARGET_DEFAULTS = TrainConfig(learning_rate=5e-4, epochs=30, early_stop_metric="dev_loss")


@dataclass
class Example:
    sentence: Sentence
    arc_target: np.ndarray  # (n+1) x (n+1)
    label_target: np.ndarray  # (n+1) x (n+1) x |L|
    label_mask: np.ndarray  # (n+1) x (n+1), bool

    @classmethod
    def from_tree(cls, sentence: Sentence, labels: LabelSet) -> "Example":
        """Supervision from a (possibly partial) discrete tree."""
        n = len(sentence)
        arc = gold_arc_matrix(sentence)
        lab = np.zeros((n + 1, n + 1, len(labels)))
        mask = np.zeros((n + 1, n + 1), dtype=bool)
        for i, tok in enumerate(sentence.tokens, start=1):
            if tok.head is not None:
                lab[i, tok.head, labels.index(tok.deprel)] = 1.0
                mask[i, tok.head] = True
        return cls(sentence, arc, lab, mask)

    @classmethod
    def from_soft(cls, sentence: Sentence, target: SoftTarget) -> "Example":
        n = len(sentence)
        if target.n != n:
            raise ValueError(
                f"soft target {target.sentence_id} covers {target.n} words,"
                f" sentence {sentence.id} has {n}"
            )
        mask = np.zeros((n + 1, n + 1), dtype=bool)
        mask[1:, :] = True
        return cls(sentence, target.arcs[:, :n + 1].copy(), target.labels.copy(), mask)


# --- numpy reference losses -------------------------------------------------


def partial_arc_ce(p2: np.ndarray, target: Union[SoftTarget, np.ndarray],
                   log_floor: float = LOG_FLOOR) -> float:
    """Cross-entropy over dependents 1..n and heads 0..n; the null column
    of the target is ignored and empty target rows contribute nothing."""
    t = target.arcs if isinstance(target, SoftTarget) else np.asarray(target, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    n = p2.shape[0] - 1
    t = t[1:, :n + 1]
    logp = np.log(np.maximum(p2[1:, :n + 1], log_floor))
    return float(-(t * logp).sum())


def partial_label_ce(q2: np.ndarray, target: Union[SoftTarget, np.ndarray],
                     log_floor: float = LOG_FLOOR) -> float:
    """Label cross-entropy summed over dependents 1..n, heads 0..n and all
    labels. The ROOT row is not a dependent and is ignored."""
    t = target.labels if isinstance(target, SoftTarget) else np.asarray(target, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    logq = np.log(np.maximum(q2[1:], log_floor))
    return float(-(t[1:] * logq).sum())


# --- torch losses -------------------------------------------------------------


def _pad(examples: Sequence[Example], t: int, n_labels: int, dtype):
    b = len(examples)
    arc = torch.zeros(b, t, t, dtype=dtype)
    lab = torch.zeros(b, t, t, n_labels, dtype=dtype)
    mask = torch.zeros(b, t, t, dtype=dtype)
    for k, ex in enumerate(examples):
        m = ex.arc_target.shape[0]
        arc[k, :m, :m] = torch.from_numpy(ex.arc_target)
        lab[k, :m, :m] = torch.from_numpy(ex.label_target)
        mask[k, :m, :m] = torch.from_numpy(ex.label_mask.astype(float))
    return arc, lab, mask


def batch_loss(model: ParserModel, examples: Sequence[Example], mask_self: bool = False,
               log_floor: float = LOG_FLOOR) -> torch.Tensor:
    """Summed arc + label partial cross-entropy of a batch, differentiable."""
    if not examples:
        return torch.zeros((), dtype=model.w_arc.dtype)
    arc_logp, label_logp, lengths = model([ex.sentence for ex in examples], mask_self=mask_self)
    t = arc_logp.shape[1]
    arc_t, lab_t, mask = _pad(examples, t, model.n_labels, arc_logp.dtype)
    arc_t[:, 0] = 0.0
    mask[:, 0] = 0.0
    floor = math.log(log_floor)
    arc_loss = -(arc_t * arc_logp.clamp(min=floor)).sum()
    label_loss = -(mask[..., None] * lab_t * label_logp.clamp(min=floor)).sum()
    return arc_loss + label_loss


def total_loss(model: ParserModel, batch: Sequence[tuple[Sentence, SoftTarget]],
               mask_self: bool = False) -> float:
    examples = [Example.from_soft(s, t) for s, t in batch]
    with torch.no_grad():
        return float(batch_loss(model, examples, mask_self))


def supervised_loss(model: ParserModel, batch: Sequence[Sentence], mask_self: bool = False) -> float:
    examples = [Example.from_tree(s, model.label_set) for s in batch]
    with torch.no_grad():
        return float(batch_loss(model, examples, mask_self))


def dataset_loss(model: ParserModel, examples: Sequence[Example], mask_self: bool = False,
                 batch_size: int = 64) -> float:
    was_training = model.training
    model.eval()
    total = 0.0
    with torch.no_grad():
        for k in range(0, len(examples), batch_size):
            total += float(batch_loss(model, examples[k:k + batch_size], mask_self))
    model.train(was_training)
    return total


def labeled_attachment(model: ParserModel, gold: Sequence[Sentence]) -> float:
    """LAS (%) of the model's parses on attached gold words, punctuation
    included; partial gold trees count only their attached words."""
    pred = parse_sentences(model, gold, single_root=True)
    return evaluate(pred, gold, punct_tags=()).las


# --- training loop --------------------------------------------------------------


def initial_model(config: TrainConfig, label_set: LabelSet,
                  encoder: Optional[EncoderConfig] = None) -> ParserModel:
    if config.init == "random":
        enc = encoder or EncoderConfig()
        return ParserModel(replace(enc, seed=config.seed), label_set)
    model = load_model(config.init)
    model.check_label_set(label_set)
    return model


def train(
    config: TrainConfig,
    data: Sequence[Example],
    dev: Sequence[Example] = (),
    model: Optional[ParserModel] = None,
    label_set: Optional[LabelSet] = None,
    encoder: Optional[EncoderConfig] = None,
    log: Optional[Callable[[int, float, float], None]] = None,
) -> ParserModel:
    """Minibatch training with per-epoch early-stopping checkpoints.

    ``model`` overrides ``config.init``. After each epoch the dev metric is
    computed; the returned model holds the parameters of the best epoch
    (lowest dev loss or highest dev LAS, earliest on ties). Training stops
    early once ``config.patience`` epochs pass without improvement. Without
    dev data every epoch runs and the final parameters are returned.
    """
    if not data:
        raise ValueError("training data is empty")
    if model is None:
        if label_set is None:
            raise ValueError("label_set is required when no model is given")
        model = initial_model(config, label_set, encoder)
    elif label_set is not None:
        model.check_label_set(label_set)
    model.train()
    params = [p for p in model.parameters()]
    if config.optimizer == "adam":
        opt = torch.optim.Adam(params, lr=config.learning_rate, fused=True)
    else:
        opt = torch.optim.SGD(params, lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    dev_gold = [ex.sentence for ex in dev]

    best_metric = None
    best_state = None
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(data))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [data[k] for k in order[start:start + config.batch_size]]
            opt.zero_grad()
            loss = batch_loss(model, batch, config.mask_self, config.log_floor)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {float(loss.detach())} at epoch {epoch}, batch starting at {start}"
                )
            loss.backward()
            if config.gradient_clip > 0:
                torch.nn.utils.clip_grad_norm_(params, config.gradient_clip)
            opt.step()
            epoch_loss += float(loss.detach())

        metric = float("nan")
        if dev:
            if config.early_stop_metric == "dev_loss":
                metric = dataset_loss(model, dev, config.mask_self)
                better = best_metric is None or metric < best_metric
            else:
                model.eval()
                metric = labeled_attachment(model, dev_gold)
                model.train()
                better = best_metric is None or metric > best_metric
            if better:
                best_metric = metric
                best_state = copy.deepcopy(model.state_dict())
                stale = 0
            else:
                stale += 1
        logger.info("epoch %d\ttrain_loss %.4f\tdev %s %.4f", epoch, epoch_loss,
                    config.early_stop_metric, metric)
        if log is not None:
            log(epoch, epoch_loss, metric)
        if config.patience is not None and stale >= config.patience:
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return model


def gradient_check(model: ParserModel, batch: Sequence[Example], epsilon: float = 1e-4,
                   mask_self: bool = False, floor: float = 1e-4) -> float:
    """Largest relative gap between autograd and central finite differences
    of the summed loss, over every parameter entry. Runs in float64 on a copy.

    The denominator is at least `floor`, so entries whose gradient is nearly
    zero are judged by absolute error instead of amplified truncation noise.
    """
    m = copy.deepcopy(model).double()
    m.eval()
    params = list(m.parameters())
    if sum(p.numel() for p in params) > 10_000:
        raise ValueError("gradient check is limited to models with at most 1e4 parameters")
    m.zero_grad()
    loss = batch_loss(m, batch, mask_self)
    loss.backward()
    worst = 0.0
    with torch.no_grad():
        for p in params:
            analytic = p.grad.detach().clone().reshape(-1) if p.grad is not None else torch.zeros(p.numel(), dtype=p.dtype)
            flat = p.data.view(-1)
            for k in range(flat.numel()):
                orig = float(flat[k])
                flat[k] = orig + epsilon
                up = float(batch_loss(m, batch, mask_self))
                flat[k] = orig - epsilon
                down = float(batch_loss(m, batch, mask_self))
                flat[k] = orig
                numeric = (up - down) / (2 * epsilon)
                a = float(analytic[k])
                denom = max(abs(a), abs(numeric), floor)
                worst = max(worst, abs(a - numeric) / denom)
    return worst
