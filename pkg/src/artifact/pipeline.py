"""Corpus-level steps shared by the command line and the experiments:
projection of a bitext, the hard-projection and self-training baselines,
and target-parser training in each mode."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

from .alignment import RawAlignment, build_projection_matrices, filter_one_to_one
from .biaffine import ParserModel, predict_distributions
from .decoding import parse_sentences
from .evaluation import EvalResult, evaluate
from .projection import (SoftTarget, hard_project, partial_tree, project_discrete_tree,
                         project_distributions)
from .training import TARGET_DEFAULTS, Example, TrainConfig, train
from .treebank import LabelSet, Sentence

logger = logging.getLogger(__name__)

ALIGN_MODES = ("raw", "one_to_one")
MODES = ("subdp", "hard", "dt", "st")


def _check_parallel(src: Sequence[Sentence], tgt: Sequence[Sentence],
                    alignments: Sequence[RawAlignment]) -> None:
    if not (len(src) == len(tgt) == len(alignments)):
        raise ValueError(
            f"bitext mismatch: {len(src)} source sentences, {len(tgt)} target sentences,"
            f" {len(alignments)} alignments"
        )
    for k, (s, t, a) in enumerate(zip(src, tgt, alignments), start=1):
        if (a.n_src, a.n_tgt) != (len(s), len(t)):
            raise ValueError(
                f"pair {k}: alignment is {a.n_src}x{a.n_tgt},"
                f" sentences have {len(s)} and {len(t)} words"
            )


def _prepare_alignment(a: RawAlignment, align_mode: str) -> RawAlignment:
    if align_mode == "one_to_one":
        return filter_one_to_one(a)
    if align_mode != "raw":
        raise ValueError(f"unknown alignment mode {align_mode!r}")
    return a


def project_corpus(
    src: Sequence[Sentence],
    tgt: Sequence[Sentence],
    alignments: Sequence[RawAlignment],
    label_set: LabelSet,
    model: Optional[ParserModel] = None,
    align_mode: str = "raw",
) -> list[SoftTarget]:
    """Soft targets for every bitext pair.

    With a model the source side is represented by the model's arc and
    label distributions; without one the gold source trees are projected.
    """
    _check_parallel(src, tgt, alignments)
    if model is not None:
        model.check_label_set(label_set)
        dists = predict_distributions(model, src, mask_self=False)
    out = []
    for k, (s, t, a) in enumerate(zip(src, tgt, alignments)):
        al = build_projection_matrices(_prepare_alignment(a, align_mode))
        if model is None:
            out.append(project_discrete_tree(s, al, label_set, t.id))
        else:
            p, q = dists[k]
            out.append(project_distributions(p, q, al, t.id))
    return out


def hard_project_corpus(
    src: Sequence[Sentence],
    tgt: Sequence[Sentence],
    alignments: Sequence[RawAlignment],
    model: Optional[ParserModel] = None,
) -> list[Sentence]:
    """Partial target trees from one-to-one aligned arcs of the source
    trees (the model's parses when a model is given, else gold)."""
    _check_parallel(src, tgt, alignments)
    trees = parse_sentences(model, src) if model is not None else list(src)
    return [partial_tree(t, hard_project(s, a)) for s, t, a in zip(trees, tgt, alignments)]


def soft_examples(sentences: Sequence[Sentence], targets: Sequence[SoftTarget]) -> list[Example]:
    return [Example.from_soft(s, t) for s, t in zip(sentences, targets)]


def tree_examples(sentences: Sequence[Sentence], label_set: LabelSet,
                  skip_empty: bool = True) -> list[Example]:
    out = []
    for s in sentences:
        if skip_empty and all(t.head is None for t in s.tokens):
            continue
        out.append(Example.from_tree(s, label_set))
    return out


def train_target(
    mode: str,
    label_set: LabelSet,
    train_sents: Sequence[Sentence],
    dev_sents: Sequence[Sentence],
    train_targets: Optional[Sequence[SoftTarget]] = None,
    dev_targets: Optional[Sequence[SoftTarget]] = None,
    init_model: Optional[ParserModel] = None,
    config: TrainConfig = TARGET_DEFAULTS,
    log: Optional[Callable[[int, float, float], None]] = None,
) -> ParserModel:
    """Train a target parser.

    ``subdp`` fits soft targets with dev-loss early stopping; ``hard`` and
    ``st`` fit (partial) discrete trees with dev-LAS early stopping. The
    initial parameters come from ``init_model`` when given, otherwise from
    ``config.init``.
    """
    import copy

    if mode == "subdp":
        if train_targets is None or dev_targets is None:
            raise ValueError("subdp mode needs soft targets for train and dev")
        data = soft_examples(train_sents, train_targets)
        dev = soft_examples(dev_sents, dev_targets)
        config = replace(config, early_stop_metric="dev_loss")
    elif mode in ("hard", "st"):
        data = tree_examples(train_sents, label_set)
        dev = tree_examples(dev_sents, label_set)
        config = replace(config, early_stop_metric="dev_las")
    else:
        raise ValueError(f"cannot train a target parser in mode {mode!r}")
    model = copy.deepcopy(init_model) if init_model is not None else None
    return train(config, data, dev, model=model, label_set=label_set, log=log)


def self_train(
    dt_model: ParserModel,
    train_sents: Sequence[Sentence],
    dev_sents: Sequence[Sentence],
    config: TrainConfig = TARGET_DEFAULTS,
    init_model: Optional[ParserModel] = None,
    log: Optional[Callable[[int, float, float], None]] = None,
) -> ParserModel:
    """One round of self-training: fit the direct-transfer parses.
    ``init_model=None`` starts from random parameters."""
    train_pred = parse_sentences(dt_model, train_sents)
    dev_pred = parse_sentences(dt_model, dev_sents)
    return train_target("st", dt_model.label_set, train_pred, dev_pred,
                        init_model=init_model, config=config, log=log)


@dataclass
class Bitext:
    src: list[Sentence]
    tgt: list[Sentence]
    alignments: list[RawAlignment]


def run_battery(
    source_model: ParserModel,
    train_bitext: Bitext,
    dev_bitext: Bitext,
    test_gold: Sequence[Sentence],
    modes: Sequence[str] = ("subdp", "hard", "dt"),
    align_mode: str = "raw",
    config: TrainConfig = TARGET_DEFAULTS,
    init: str = "from_model",
    discrete: bool = False,
) -> dict[str, EvalResult]:
    """Train and evaluate each requested system on one target test set."""
    label_set = source_model.label_set
    init_model = source_model if init == "from_model" else None
    if init not in ("from_model", "random"):
        raise ValueError(f"unknown init {init!r}")
    cfg = replace(config, init="random")
    proj_model = None if discrete else source_model
    results: dict[str, EvalResult] = {}
    for mode in modes:
        logger.info("running %s", mode)
        if mode == "dt":
            model = source_model
        elif mode == "subdp":
            tr = project_corpus(train_bitext.src, train_bitext.tgt, train_bitext.alignments,
                                label_set, proj_model, align_mode)
            dv = project_corpus(dev_bitext.src, dev_bitext.tgt, dev_bitext.alignments,
                                label_set, proj_model, align_mode)
            model = train_target("subdp", label_set, train_bitext.tgt, dev_bitext.tgt, tr, dv,
                                 init_model=init_model, config=cfg)
        elif mode == "hard":
            tr = hard_project_corpus(train_bitext.src, train_bitext.tgt, train_bitext.alignments,
                                     proj_model)
            dv = hard_project_corpus(dev_bitext.src, dev_bitext.tgt, dev_bitext.alignments,
                                     proj_model)
            model = train_target("hard", label_set, tr, dv, init_model=init_model, config=cfg)
        elif mode == "st":
            model = self_train(source_model, train_bitext.tgt, dev_bitext.tgt, cfg,
                               init_model=init_model)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        results[mode] = evaluate(parse_sentences(model, list(test_gold)), test_gold)
        logger.info("%s: %s", mode, results[mode].summary())
    return results
