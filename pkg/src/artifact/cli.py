"""Command-line pipeline: train a source parser, project it through word
alignments, train a target parser on the projections, then parse, score
and compare against the baselines.

Every subcommand exits 0 once all of its outputs are written and prints a
single-line diagnostic with a nonzero exit code otherwise.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .alignment import read_pharaoh_file, write_pharaoh_file
from .biaffine import ParserModel, load_model, save_model
from .decoding import parse_sentences
from .evaluation import evaluate, report
from .pipeline import (ALIGN_MODES, Bitext, hard_project_corpus, project_corpus, run_battery,
                       self_train, train_target, tree_examples)
from .projection import read_soft_targets, write_soft_targets
from .synthdata import SynthConfig, generate
from .training import SOURCE_DEFAULTS, TARGET_DEFAULTS, TrainConfig, train
from .treebank import LabelSet, Sentence, read_conllu_file, write_conllu_file

logger = logging.getLogger("subdp")

SYNTH_FILES = ("src.conllu", "tgt.conllu", "align.txt")


class CommandError(Exception):
    """A failure worth a one-line message rather than a traceback."""


# --- shared helpers ------------------------------------------------------------------


def _epoch_logger(path: str):
    f = open(path, "w", encoding="utf-8")
    f.write("epoch\ttrain_loss\tdev_metric\n")

    def log(epoch: int, loss: float, metric: float) -> None:
        f.write(f"{epoch}\t{loss:.6f}\t{metric:.6f}\n")
        f.flush()
    return log, f


def _train_config(base: TrainConfig, args) -> TrainConfig:
    cfg = replace(base, seed=args.seed)
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
    if args.lr is not None:
        cfg = replace(cfg, learning_rate=args.lr)
    if args.patience is not None:
        cfg = replace(cfg, patience=args.patience if args.patience > 0 else None)
    if args.batch_size is not None:
        cfg = replace(cfg, batch_size=args.batch_size)
    return cfg


def _read_bitext(args) -> Bitext:
    src = read_conllu_file(args.bitext_src, require_tree=False)
    tgt = read_conllu_file(args.bitext_tgt, require_tree=False)
    if len(src) != len(tgt):
        raise CommandError(f"sentence-count mismatch: {len(src)} source vs {len(tgt)} target sentences")
    alignments = read_pharaoh_file(args.align, [len(s) for s in src], [len(t) for t in tgt])
    return Bitext(src, tgt, alignments)


def _require_gold(sentences: Sequence[Sentence], path: str) -> None:
    for s in sentences:
        if any(t.head is None for t in s.tokens):
            raise CommandError(f"{path}: sentence {s.id} has no gold tree")


def _init_model(args) -> Optional[ParserModel]:
    if args.init == "random":
        return None
    if args.init == "from_model":
        if args.model is None:
            raise CommandError("--init from_model needs --model")
        return load_model(args.model)
    return load_model(args.init)


# --- subcommands --------------------------------------------------------------------


def cmd_synth(args) -> None:
    cfg = SynthConfig(grammar_seed=args.seed, n_sentences=args.n, max_len=args.max_len,
                      reorder_rule=args.reorder_rule, fusion_rate=args.fusion_rate)
    src, tgt, alignments = generate(cfg, id_prefix=args.id_prefix)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / name for name in SYNTH_FILES]
    tmp = [p.with_name(p.name + ".tmp") for p in paths]
    write_conllu_file(tmp[0], src)
    write_conllu_file(tmp[1], tgt)
    write_pharaoh_file(tmp[2], alignments)
    # written side by side first so a failure never leaves a mismatched triple
    for t, p in zip(tmp, paths):
        os.replace(t, p)


def cmd_train_source(args) -> None:
    train_sents = read_conllu_file(args.train)
    dev_sents = read_conllu_file(args.dev)
    label_set = LabelSet.from_sentences(list(train_sents) + list(dev_sents))
    cfg = _train_config(SOURCE_DEFAULTS, args)
    log, f = _epoch_logger(args.log or args.out + ".log")
    try:
        model = train(cfg, tree_examples(train_sents, label_set), tree_examples(dev_sents, label_set),
                      label_set=label_set, log=log)
    finally:
        f.close()
    save_model(model, args.out)


def cmd_project(args) -> None:
    bitext = _read_bitext(args)
    model = load_model(args.model) if args.model else None
    if model is None and not args.discrete:
        raise CommandError("projecting model distributions needs --model (or pass --discrete)")
    if args.discrete:
        _require_gold(bitext.src, args.bitext_src)
    source_model = None if args.discrete else model
    if args.mode == "hard":
        partial = hard_project_corpus(bitext.src, bitext.tgt, bitext.alignments, source_model)
        write_conllu_file(args.out, partial)
        return
    label_set = model.label_set if model is not None else LabelSet.from_sentences(bitext.src)
    targets = project_corpus(bitext.src, bitext.tgt, bitext.alignments, label_set,
                             source_model, args.align_mode)
    write_soft_targets(args.out, targets, label_set, bitext.tgt, threshold=args.threshold)


def _load_soft(paths: Sequence[str]):
    label_set = None
    targets, sentences = [], []
    for path in paths:
        ls, t, s = read_soft_targets(path)
        if label_set is not None and ls != label_set:
            raise CommandError(f"{path}: label set differs from {paths[0]}")
        if any(x is None for x in s):
            raise CommandError(f"{path}: records lack target word forms")
        label_set = ls
        targets.extend(t)
        sentences.extend(s)
    return label_set, targets, sentences


def cmd_train_target(args) -> None:
    init = _init_model(args)
    cfg = _train_config(TARGET_DEFAULTS, args)
    log, f = _epoch_logger(args.log or args.out + ".log")
    try:
        if args.mode == "subdp":
            if not args.proj:
                raise CommandError("subdp mode needs at least one --proj soft-target file")
            label_set, tr, tr_sents = _load_soft(args.proj)
            dv_labels, dv, dv_sents = _load_soft([args.dev])
            if dv_labels != label_set:
                raise CommandError(f"{args.dev}: label set differs from the training projections")
            if init is not None:
                init.check_label_set(label_set)
            model = train_target("subdp", label_set, tr_sents, dv_sents, tr, dv,
                                 init_model=init, config=cfg, log=log)
        elif args.mode == "hard":
            if not args.proj:
                raise CommandError("hard mode needs at least one --proj partial treebank")
            tr_sents = [s for p in args.proj for s in read_conllu_file(p, require_tree=False)]
            dv_sents = read_conllu_file(args.dev, require_tree=False)
            label_set = init.label_set if init is not None else (
                load_model(args.model).label_set if args.model else
                LabelSet.from_sentences(tr_sents + dv_sents))
            model = train_target("hard", label_set, tr_sents, dv_sents,
                                 init_model=init, config=cfg, log=log)
        else:  # st
            if args.model is None or args.train is None:
                raise CommandError("st mode needs --model (the direct-transfer parser) and --train")
            dt = load_model(args.model)
            if init is not None:
                init.check_label_set(dt.label_set)
            model = self_train(dt, read_conllu_file(args.train, require_tree=False),
                               read_conllu_file(args.dev, require_tree=False), cfg,
                               init_model=init, log=log)
    finally:
        f.close()
    save_model(model, args.out)


def cmd_parse(args) -> None:
    model = load_model(args.model)
    sentences = read_conllu_file(args.test, require_tree=False)
    write_conllu_file(args.out, parse_sentences(model, sentences, single_root=args.single_root))


def cmd_eval(args) -> None:
    pred = read_conllu_file(args.pred)
    gold = read_conllu_file(args.test, require_tree=False)
    print(evaluate(pred, gold).summary())


def cmd_compare(args) -> None:
    model = load_model(args.model)
    bitext = _read_bitext(args)
    n = len(bitext.src)
    n_dev = args.dev_size if args.dev_size is not None else max(1, n // 10)
    if n_dev >= n:
        raise CommandError(f"bitext of {n} pairs is too small for a dev split of {n_dev}")
    train_part = Bitext(bitext.src[:-n_dev], bitext.tgt[:-n_dev], bitext.alignments[:-n_dev])
    dev_part = Bitext(bitext.src[-n_dev:], bitext.tgt[-n_dev:], bitext.alignments[-n_dev:])
    test = read_conllu_file(args.test, require_tree=False)
    modes = args.mode or ["subdp", "hard", "dt"]
    cfg = _train_config(TARGET_DEFAULTS, args)
    results = run_battery(model, train_part, dev_part, test, modes=modes,
                          align_mode=args.align_mode, config=cfg, init=args.init,
                          discrete=args.discrete)
    table = report(results)
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8")
    print(table, end="" if table.endswith("\n") else "\n")


# --- argument parsing -------------------------------------------------------------


def _existing(path: str) -> str:
    if not Path(path).is_file():
        raise argparse.ArgumentTypeError(f"no such file: {path}")
    return path


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, help="maximum number of epochs")
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--patience", type=int, help="epochs without dev improvement before stopping; 0 disables")
    p.add_argument("--batch-size", type=int)


def _add_bitext_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bitext-src", type=_existing, required=True, help="source side, CoNLL-U")
    p.add_argument("--bitext-tgt", type=_existing, required=True, help="target side, CoNLL-U (heads optional)")
    p.add_argument("--align", type=_existing, required=True, help="Pharaoh alignments, one line per pair")
    p.add_argument("--align-mode", choices=ALIGN_MODES, default="raw")
    p.add_argument("--discrete", action="store_true",
                   help="project the gold source trees instead of model distributions")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subdp", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic parallel treebank")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--max-len", type=int, default=20)
    p.add_argument("--reorder-rule", type=int, default=1)
    p.add_argument("--fusion-rate", type=float, default=0.0)
    p.add_argument("--id-prefix", default="s")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-source", help="train a parser on gold trees")
    p.add_argument("--train", type=_existing, required=True)
    p.add_argument("--dev", type=_existing, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="tab-separated training log (default: OUT.log)")
    _add_training_flags(p)
    p.set_defaults(func=cmd_train_source)

    p = sub.add_parser("project", help="project source distributions onto the target side")
    p.add_argument("--model", type=_existing)
    _add_bitext_flags(p)
    p.add_argument("--mode", choices=("subdp", "hard"), default="subdp")
    p.add_argument("--threshold", type=float, default=1e-6,
                   help="arc probabilities at or below this are not written")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("train-target", help="train a target parser on projections")
    p.add_argument("--mode", choices=("subdp", "hard", "st"), default="subdp")
    p.add_argument("--proj", type=_existing, action="append",
                   help="soft-target corpus (subdp) or partial treebank (hard); repeatable")
    p.add_argument("--dev", type=_existing, required=True)
    p.add_argument("--train", type=_existing, help="raw target text for st mode")
    p.add_argument("--model", type=_existing, help="source model")
    p.add_argument("--init", default="from_model", help="from_model, random, or a model path")
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    _add_training_flags(p)
    p.set_defaults(func=cmd_train_target)

    p = sub.add_parser("parse", help="parse a CoNLL-U file")
    p.add_argument("--model", type=_existing, required=True)
    p.add_argument("--test", type=_existing, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--single-root", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("eval", help="score predictions against gold trees")
    p.add_argument("--pred", type=_existing, required=True)
    p.add_argument("--test", type=_existing, required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="train and score SubDP and baselines on one bitext")
    p.add_argument("--model", type=_existing, required=True, help="source model")
    _add_bitext_flags(p)
    p.add_argument("--test", type=_existing, required=True, help="gold target treebank")
    p.add_argument("--mode", action="append", choices=("subdp", "hard", "dt", "st"),
                   help="system to include; repeatable (default: subdp, hard, dt)")
    p.add_argument("--init", choices=("from_model", "random"), default="from_model")
    p.add_argument("--dev-size", type=int, help="bitext pairs held out for early stopping")
    p.add_argument("--out", help="also write the report here")
    _add_training_flags(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CommandError, ValueError, KeyError, OSError, RuntimeError) as e:
        msg = str(e).splitlines()[0] if str(e) else type(e).__name__
        print(f"subdp {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
