"""Maximum spanning arborescence decoding and label assignment.

Score matrices are indexed ``[dependent, head]`` over positions ``0..n``
with 0 = ROOT. Row 0 and the diagonal are ignored.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .biaffine import ParserModel, predict_distributions
from .treebank import Sentence

NEG_INF = -np.inf


@dataclass(frozen=True)
class DecodedTree:
    heads: tuple[int, ...]  # head of words 1..n
    labels: tuple[int, ...]


def _prepare(log_p: np.ndarray) -> np.ndarray:
    s = np.array(log_p, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"expected a square score matrix, got shape {s.shape}")
    if s.shape[0] < 2:
        raise ValueError("cannot decode a sentence with no words")
    np.fill_diagonal(s, NEG_INF)
    s[0, :] = NEG_INF
    s[np.isnan(s)] = NEG_INF
    return s


def _find_cycle(best: np.ndarray, active: list[int]) -> list[int] | None:
    color: dict[int, int] = {}
    for start in active:
        if start == 0 or start in color:
            continue
        path = []
        v = start
        while v != 0 and v not in color:
            color[v] = 1
            path.append(v)
            v = int(best[v])
        if v != 0 and color.get(v) == 1:
            return path[path.index(v):]
        for u in path:
            color[u] = 2
    return None


def _cle(scores: np.ndarray) -> np.ndarray:
    """Chu-Liu-Edmonds with dense contraction.

    Each contraction adds one supernode whose incoming and outgoing scores
    are computed from the cycle members in one vectorized pass; greedy head
    choices are only updated where the contraction invalidated them, so the
    work stays quadratic in the sentence length for a bounded number of
    contractions. Every working cell remembers the original arc it stands
    for, which makes expansion a walk back through the contractions.
    """
    n1 = scores.shape[0]
    size = 2 * n1
    s = np.full((size, size), NEG_INF)
    s[:n1, :n1] = scores
    cols = np.arange(size)
    orig_dep = np.tile(cols[:, None], (1, size))
    orig_head = np.tile(cols, (size, 1))
    best = np.zeros(size, dtype=int)
    alive = np.zeros(size, dtype=bool)
    alive[:n1] = True
    for v in range(1, n1):
        best[v] = int(np.argmax(s[v]))
    parent = np.full(size, -1)
    contractions: list[tuple[int, list[int], dict[int, tuple[int, int]]]] = []
    next_id = n1
    while True:
        cycle = _find_cycle(best, [int(v) for v in np.flatnonzero(alive)])
        if cycle is None:
            break
        c = next_id
        next_id += 1
        members = np.array(cycle)
        kept = {int(v): (int(orig_dep[v, best[v]]), int(orig_head[v, best[v]])) for v in cycle}
        inner = s[members, best[members]]
        # Entering the cycle at member v from head h replaces v's cycle arc.
        enter = s[members] - inner[:, None]
        which = np.argmax(enter, axis=0)
        src = members[which]
        s[c] = enter[which, cols]
        orig_dep[c] = orig_dep[src, cols]
        orig_head[c] = orig_head[src, cols]
        # Leaving the cycle: the best member as head of each outside word.
        out = s[:, members]
        which_out = np.argmax(out, axis=1)
        src = members[which_out]
        s[:, c] = out[cols, which_out]
        orig_dep[:, c] = orig_dep[cols, src]
        orig_head[:, c] = orig_head[cols, src]
        alive[members] = False
        alive[c] = True
        s[members, :] = NEG_INF
        s[:, members] = NEG_INF
        s[c, c] = NEG_INF
        s[0, :] = NEG_INF
        parent[members] = c
        best[c] = int(np.argmax(s[c]))
        redirect = alive & np.isin(best, members)
        redirect[0] = False
        best[redirect] = c
        contractions.append((c, cycle, kept))

    chosen: dict[int, tuple[int, int]] = {}
    for v in np.flatnonzero(alive):
        v = int(v)
        if v != 0:
            chosen[v] = (int(orig_dep[v, best[v]]), int(orig_head[v, best[v]]))
    for c, cycle, kept in reversed(contractions):
        dep, head = chosen.pop(c)
        entry = dep
        while parent[entry] != c:
            entry = int(parent[entry])
        for m in cycle:
            chosen[m] = (dep, head) if m == entry else kept[m]
    heads = np.zeros(n1 - 1, dtype=int)
    for v, (dep, head) in chosen.items():
        assert v == dep
        heads[v - 1] = head
    return heads


def mst_decode(log_p: np.ndarray, single_root: bool = True) -> list[int]:
    """Heads (0-based, 0 = ROOT) of the maximum-weight arborescence.

    With ``single_root`` every arc leaving ROOT is penalized by a constant
    larger than the spread of any two tree weights, which forces exactly one
    root dependent without changing the order among single-rooted trees.
    Ties between equal greedy choices go to the lowest head index. If no
    single-rooted tree of finite weight exists, the tree with the fewest
    root dependents is returned instead.
    """
    s = _prepare(log_p)
    n = s.shape[0] - 1
    if single_root and n > 1:
        finite = s[np.isfinite(s)]
        if finite.size == 0:
            raise ValueError("no finite arc scores")
        penalty = 1.0 + 2.0 * n * (float(finite.max()) - float(finite.min()) + 1.0)
        s[1:, 0] -= penalty
    if not np.isfinite(s[1:].max(axis=1)).all():
        raise ValueError("some word has no admissible head")
    return [int(h) for h in _cle(s)]


def tree_weight(log_p: np.ndarray, heads: Sequence[int]) -> float:
    log_p = np.asarray(log_p, dtype=float)
    return float(sum(log_p[i, h] for i, h in enumerate(heads, start=1)))


def is_arborescence(heads: Sequence[int]) -> bool:
    n = len(heads)
    for start in range(1, n + 1):
        v, steps = start, 0
        while v != 0:
            h = heads[v - 1]
            if not 0 <= h <= n or h == v:
                return False
            v = h
            steps += 1
            if steps > n:
                return False
    return True


BRUTE_FORCE_MAX = 8


@lru_cache(maxsize=None)
def _all_trees(n: int, single_root: bool) -> np.ndarray:
    """Every arborescence over n words as rows of 0-based heads, in
    lexicographic order."""
    cand = np.array(list(itertools.product(range(n + 1), repeat=n)), dtype=np.int64)
    cand = cand.reshape(-1, n)
    ext = np.concatenate([np.zeros((len(cand), 1), dtype=np.int64), cand], axis=1)
    pos = np.tile(np.arange(n + 1), (len(cand), 1))
    rows = np.arange(len(cand))[:, None]
    for _ in range(n):
        pos = ext[rows, pos]
    ok = (pos == 0).all(axis=1)
    if single_root:
        ok &= (cand == 0).sum(axis=1) == 1
    return cand[ok]


def brute_force_decode(log_p: np.ndarray, single_root: bool = True) -> list[int]:
    """Exhaustive search; among equal-weight trees the lexicographically
    smallest head vector wins. Raises ValueError when every admissible tree
    has weight -inf."""
    s = _prepare(log_p)
    n = s.shape[0] - 1
    if n > BRUTE_FORCE_MAX:
        raise ValueError(f"brute force decoding is limited to {BRUTE_FORCE_MAX} words, got {n}")
    trees = _all_trees(n, single_root)
    weights = s[np.arange(1, n + 1)[None, :], trees].sum(axis=1)
    if not np.isfinite(weights.max()):
        raise ValueError("no tree of finite weight")
    return [int(h) for h in trees[int(np.argmax(weights))]]


def assign_labels(heads: Sequence[int], q: np.ndarray) -> list[int]:
    """Most probable label of each chosen arc (lowest index on ties)."""
    q = np.asarray(q)
    return [int(np.argmax(q[i, h])) for i, h in enumerate(heads, start=1)]


def parse_sentence(model: ParserModel, sentence: Sentence, single_root: bool = True) -> DecodedTree:
    return parse_sentences_raw(model, [sentence], single_root)[0]


def parse_sentences_raw(model: ParserModel, sentences: Sequence[Sentence],
                        single_root: bool = True) -> list[DecodedTree]:
    """Self-masked arc probabilities, MST over their logs, argmax labels."""
    trees = []
    for p, q in predict_distributions(model, sentences, mask_self=True):
        with np.errstate(divide="ignore"):
            log_p = np.log(p)
        heads = mst_decode(log_p, single_root=single_root)
        trees.append(DecodedTree(tuple(heads), tuple(assign_labels(heads, q))))
    return trees


def parse_sentences(model: ParserModel, sentences: Sequence[Sentence],
                    single_root: bool = True) -> list[Sentence]:
    """Copies of ``sentences`` carrying the model's predicted trees."""
    out = []
    labels = model.label_set.labels
    for s, tree in zip(sentences, parse_sentences_raw(model, sentences, single_root)):
        out.append(s.with_tree(list(tree.heads), [labels[l] for l in tree.labels]))
    return out
