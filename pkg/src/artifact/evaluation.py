"""Attachment scores and plain-text comparison tables."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .treebank import Sentence

DEFAULT_PUNCT_TAGS = ("PUNCT",)


@dataclass(frozen=True)
class EvalResult:
    uas: float
    las: float
    counted_tokens: int
    excluded_tokens: int

    def summary(self) -> str:
        return (f"uas={self.uas:.2f} las={self.las:.2f} "
                f"counted={self.counted_tokens} excluded={self.excluded_tokens}")


def _strip(label: str) -> str:
    return label.split(":", 1)[0]


def evaluate(
    pred: Sequence[Sentence],
    gold: Sequence[Sentence],
    punct_tags: Iterable[str] = DEFAULT_PUNCT_TAGS,
    strip_subtypes: bool = False,
) -> EvalResult:
    """UAS/LAS in percent over non-punctuation gold words.

    Punctuation is decided by the gold UPOS tag. Gold words without a head
    (partial trees) are excluded like punctuation.
    """
    if len(pred) != len(gold):
        raise ValueError(f"{len(pred)} predicted sentences for {len(gold)} gold sentences")
    punct = set(punct_tags)
    counted = excluded = head_ok = both_ok = 0
    for k, (p, g) in enumerate(zip(pred, gold), start=1):
        if len(p) != len(g):
            raise ValueError(
                f"sentence {g.id or k}: {len(p)} predicted tokens for {len(g)} gold tokens"
            )
        for pt, gt in zip(p.tokens, g.tokens):
            if gt.upos in punct or gt.head is None:
                excluded += 1
                continue
            counted += 1
            if pt.head == gt.head:
                head_ok += 1
                pr, gr = pt.deprel, gt.deprel
                if strip_subtypes:
                    pr, gr = _strip(pr), _strip(gr)
                if pr == gr:
                    both_ok += 1
    if counted == 0:
        return EvalResult(0.0, 0.0, 0, excluded)
    return EvalResult(100.0 * head_ok / counted, 100.0 * both_ok / counted, counted, excluded)


def report(results: Mapping[str, EvalResult]) -> str:
    """Fixed-width table, one row per system sorted by name."""
    names = sorted(results)
    width = max([len("system")] + [len(n) for n in names])
    lines = [f"{'system':<{width}}  {'UAS':>6}  {'LAS':>6}"]
    for name in names:
        r = results[name]
        lines.append(f"{name:<{width}}  {r.uas:>6.1f}  {r.las:>6.1f}")
    return "\n".join(lines) + "\n"
