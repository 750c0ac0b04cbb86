"""Synthetic parallel treebanks with gold trees on both sides and gold alignments.

Source sentences follow a fixed SVO, prepositional, adjective-first grammar.
Target sentences reorder every head's dependents by a second rule table
(verb-final, postpositions, adjective after noun) and may fuse an adjacent
modifier-head pair into a single word, which yields many-to-one alignments.
Both vocabularies are built from shared stems with language-specific
spelling shifts and affixes, so character trigrams partly carry over.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .alignment import RawAlignment
from .treebank import Sentence, Token

LABELS = ("advmod", "amod", "case", "compound", "det", "nsubj", "obj", "obl", "punct", "root")

# label -> (side, rank); side -1 = before the head, +1 = after.
SOURCE_ORDER = {
    "nsubj": (-1, 0), "det": (-1, 0), "case": (-1, 0), "amod": (-1, 1), "compound": (-1, 2),
    "obj": (1, 1), "obl": (1, 2), "advmod": (1, 3), "punct": (1, 9),
}
REORDER_RULES = {
    0: SOURCE_ORDER,
    # verb-final, postpositional, adjectives after the noun
    1: {
        "nsubj": (-1, 0), "obl": (-1, 1), "obj": (-1, 2), "advmod": (-1, 3),
        "det": (-1, 0), "compound": (-1, 1), "amod": (1, 1), "case": (1, 0), "punct": (1, 9),
    },
    # as 1, with determiners after the noun as well
    2: {
        "nsubj": (-1, 0), "obl": (-1, 1), "obj": (-1, 2), "advmod": (-1, 3),
        "compound": (-1, 1), "amod": (1, 1), "det": (1, 2), "case": (1, 3), "punct": (1, 9),
    },
}
FUSIBLE = ("compound", "amod")

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
_SHIFT = str.maketrans("ptkbdgsfv", "bdgptkzvw")
_SRC_AFFIX = {"NOUN": "a", "VERB": "es", "ADJ": "ic", "ADV": "ly"}
_TGT_AFFIX = {"NOUN": "u", "VERB": "ta", "ADJ": "ne", "ADV": "mo"}
_LEXICON_SIZES = {"NOUN": 60, "VERB": 25, "ADJ": 20, "ADV": 10, "DET": 4, "ADP": 6}


@dataclass(frozen=True)
class SynthConfig:
    grammar_seed: int = 1
    n_sentences: int = 1000
    max_len: int = 20
    reorder_rule: int = 1
    fusion_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.fusion_rate <= 1.0:
            raise ValueError(f"fusion_rate must lie in [0, 1], got {self.fusion_rate}")
        if self.max_len < 2:
            raise ValueError("max_len must be at least 2")
        if self.n_sentences < 0:
            raise ValueError("n_sentences must be non-negative")
        if self.reorder_rule not in REORDER_RULES:
            raise ValueError(f"unknown reorder rule {self.reorder_rule}")


@dataclass
class _Node:
    upos: str
    lexeme: int
    label: str
    deps: list


def _stem(rng: np.random.Generator) -> str:
    syl = rng.integers(2, 4)
    return "".join(_CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
                   for _ in range(syl))


def _build_lexicon(rng: np.random.Generator) -> dict[str, list[tuple[str, str]]]:
    seen: set[str] = set()
    lex: dict[str, list[tuple[str, str]]] = {}
    for cat, size in _LEXICON_SIZES.items():
        entries = []
        while len(entries) < size:
            stem = _stem(rng)
            if stem in seen:
                continue
            seen.add(stem)
            tstem = stem.translate(_SHIFT)
            if cat in _SRC_AFFIX:
                entries.append((stem + _SRC_AFFIX[cat], tstem + _TGT_AFFIX[cat]))
            elif cat == "DET":
                entries.append((stem[:2] + "e", "e" + tstem[:2]))
            else:
                entries.append((stem[:2] + "o", tstem[:2] + "i"))
        lex[cat] = entries
    return lex


def _noun_phrase(rng: np.random.Generator, lex, label: str) -> _Node:
    head = _Node("NOUN", int(rng.integers(len(lex["NOUN"]))), label, [])
    if rng.random() < 0.6:
        head.deps.append(_Node("DET", int(rng.integers(len(lex["DET"]))), "det", []))
    for _ in range(int(rng.choice(3, p=[0.55, 0.35, 0.10]))):
        head.deps.append(_Node("ADJ", int(rng.integers(len(lex["ADJ"]))), "amod", []))
    if rng.random() < 0.35:
        head.deps.append(_Node("NOUN", int(rng.integers(len(lex["NOUN"]))), "compound", []))
    return head


def _clause(rng: np.random.Generator, lex) -> _Node:
    verb = _Node("VERB", int(rng.integers(len(lex["VERB"]))), "root", [])
    verb.deps.append(_noun_phrase(rng, lex, "nsubj"))
    if rng.random() < 0.7:
        verb.deps.append(_noun_phrase(rng, lex, "obj"))
    for _ in range(int(rng.choice(3, p=[0.45, 0.4, 0.15]))):
        np_ = _noun_phrase(rng, lex, "obl")
        np_.deps.append(_Node("ADP", int(rng.integers(len(lex["ADP"]))), "case", []))
        verb.deps.append(np_)
    if rng.random() < 0.3:
        verb.deps.append(_Node("ADV", int(rng.integers(len(lex["ADV"]))), "advmod", []))
    verb.deps.append(_Node("PUNCT", 0, "punct", []))
    return verb


def _linearize(node: _Node, rules) -> list[tuple[_Node, Optional[_Node]]]:
    """Words in order as (node, head node)."""
    def walk(n: _Node, head: Optional[_Node]):
        indexed = list(enumerate(n.deps))
        left = sorted((d for d in indexed if rules[d[1].label][0] < 0),
                      key=lambda d: (rules[d[1].label][1], d[0]))
        right = sorted((d for d in indexed if rules[d[1].label][0] > 0),
                       key=lambda d: (rules[d[1].label][1], d[0]))
        out = []
        for _, d in left:
            out.extend(walk(d, n))
        out.append((n, head))
        for _, d in right:
            out.extend(walk(d, n))
        return out
    return walk(node, None)


def _size(node: _Node) -> int:
    return 1 + sum(_size(d) for d in node.deps)


def _form(node: _Node, lex, side: int) -> str:
    if node.upos == "PUNCT":
        return "."
    return lex[node.upos][node.lexeme][side]


def _sentence(order, lex, side: int, sent_id: str,
              merged: Optional[dict[int, _Node]] = None) -> tuple[Sentence, dict[int, int]]:
    """Build a Sentence from ``order``; ``merged`` maps id(head) -> fused modifier."""
    merged = merged or {}
    dropped = {id(m) for m in merged.values()}
    kept = [(n, h) for n, h in order if id(n) not in dropped]
    position = {id(n): k for k, (n, _) in enumerate(kept, start=1)}
    tokens = []
    for k, (n, h) in enumerate(kept, start=1):
        form = _form(n, lex, side)
        if id(n) in merged:
            form = _form(merged[id(n)], lex, side) + form
        tokens.append(Token(index=k, form=form, lemma=form, upos=n.upos,
                            head=0 if h is None else position[id(h)], deprel=n.label))
    return Sentence(tuple(tokens), sent_id, (f"# sent_id = {sent_id}",)), position


def generate(cfg: SynthConfig, id_prefix: str = "s") -> tuple[list[Sentence], list[Sentence], list[RawAlignment]]:
    """Deterministic (source treebank, target treebank, alignments).

    Source sentences do not depend on ``fusion_rate`` or ``reorder_rule``:
    fusion decisions use their own random stream.
    """
    lex = _build_lexicon(np.random.default_rng([cfg.grammar_seed, 0]))
    tree_rng = np.random.default_rng([cfg.grammar_seed, 1])
    fuse_rng = np.random.default_rng([cfg.grammar_seed, 2])
    target_rules = REORDER_RULES[cfg.reorder_rule]
    sources, targets, alignments = [], [], []
    for k in range(cfg.n_sentences):
        while True:
            root = _clause(tree_rng, lex)
            if _size(root) <= cfg.max_len:
                break
        sent_id = f"{id_prefix}{k + 1}"
        src_order = _linearize(root, SOURCE_ORDER)
        src, src_pos = _sentence(src_order, lex, 0, sent_id)

        merged: dict[int, _Node] = {}
        for n, h in src_order:
            if h is None or n.label not in FUSIBLE or n.deps or id(h) in merged:
                continue
            if abs(src_pos[id(n)] - src_pos[id(h)]) != 1:
                continue
            if fuse_rng.random() < cfg.fusion_rate:
                merged[id(h)] = n
        tgt_order = _linearize(root, target_rules)
        tgt, tgt_pos = _sentence(tgt_order, lex, 1, sent_id, merged)
        fused_into = {id(m): hid for hid, m in merged.items()}
        links = set()
        for n, _ in src_order:
            key = fused_into.get(id(n), id(n))
            links.add((src_pos[id(n)], tgt_pos[key]))
        sources.append(src)
        targets.append(tgt)
        alignments.append(RawAlignment(len(src), len(tgt), frozenset(links)))
    return sources, targets, alignments
