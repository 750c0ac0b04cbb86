"""Projection of arc and label distributions across a word alignment.

Arc matrices are indexed ``[dependent, head]``. Label tensors are indexed
``[dependent, head, label]``. Projected arc matrices keep the target null
word as a trailing column; label tensors cover real target positions only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .alignment import RawAlignment, StochasticAlignment, filter_one_to_one
from .treebank import LabelSet, Sentence, Token, gold_arc_matrix, gold_label_tensor

SOFT_FORMAT = "subdp-soft-targets"
SOFT_VERSION = 1


@dataclass
class SoftTarget:
    arcs: np.ndarray  # (n+1) x (n+2), last column = null word
    labels: np.ndarray  # (n+1) x (n+1) x |L|
    sentence_id: Optional[str] = None

    @property
    def n(self) -> int:
        return self.arcs.shape[0] - 1


def _check_arc_shapes(p1: np.ndarray, al: StochasticAlignment) -> None:
    ns = al.n_src
    if p1.shape != (ns + 1, ns + 1):
        raise ValueError(
            f"arc matrix of shape {p1.shape} does not match a {ns}-word source sentence"
        )


def project_arcs(p1: np.ndarray, al: StochasticAlignment) -> np.ndarray:
    """Project a source head-distribution matrix onto the target sentence.

    The source null word gets an all-zero row and column, so target words
    aligned only to the null word end up with an all-zero row.
    """
    p1 = np.asarray(p1, dtype=float)
    _check_arc_shapes(p1, al)
    # a_st has no row for the source null word, so its all-zero head
    # column is implicit.
    padded = np.zeros((al.n_src + 2, al.n_src + 1))
    padded[:-1] = p1
    return al.a_ts @ padded @ al.a_st


def project_labels(q1: np.ndarray, al: StochasticAlignment) -> np.ndarray:
    """Project per-arc label distributions; both endpoints are mixed through
    the target-to-source matrix and null positions contribute a uniform
    distribution."""
    q1 = np.asarray(q1, dtype=float)
    ns = al.n_src
    if q1.ndim != 3 or q1.shape[:2] != (ns + 1, ns + 1):
        raise ValueError(
            f"label tensor of shape {q1.shape} does not match a {ns}-word source sentence"
        )
    k = q1.shape[2]
    padded = np.full((ns + 2, ns + 2, k), 1.0 / k)
    padded[:-1, :-1] = q1
    return np.einsum("pi,ijl,qj->pql", al.a_ts, padded, al.a_ts, optimize=True)


def project_distributions(
    p1: np.ndarray, q1: np.ndarray, al: StochasticAlignment, sentence_id: Optional[str] = None
) -> SoftTarget:
    return SoftTarget(project_arcs(p1, al), project_labels(q1, al), sentence_id)


def project_discrete_tree(
    s: Sentence, al: StochasticAlignment, labels: LabelSet, sentence_id: Optional[str] = None
) -> SoftTarget:
    return project_distributions(gold_arc_matrix(s), gold_label_tensor(s, labels), al, sentence_id)


def hard_project(s: Sentence, a: RawAlignment) -> set[tuple[int, int, str]]:
    """Arcs ``(dependent, head, label)`` on the target side whose two
    endpoints are both one-to-one aligned; ROOT always maps to ROOT."""
    src_to_tgt = {0: 0}
    src_to_tgt.update({i: j for i, j in filter_one_to_one(a).links})
    arcs = set()
    for i, tok in enumerate(s.tokens, start=1):
        if tok.head is None:
            continue
        if i in src_to_tgt and tok.head in src_to_tgt:
            arcs.add((src_to_tgt[i], src_to_tgt[tok.head], tok.deprel))
    return arcs


def partial_tree(target: Sentence, arcs: Iterable[tuple[int, int, str]]) -> Sentence:
    """Target sentence carrying only the given arcs; other words get ``_``."""
    heads: list[Optional[int]] = [None] * len(target)
    rels = ["_"] * len(target)
    for dep, head, rel in arcs:
        heads[dep - 1] = head
        rels[dep - 1] = rel
    return target.with_tree(heads, rels)


def project_arcs_normalized(p1: np.ndarray, al: StochasticAlignment) -> tuple[np.ndarray, np.ndarray]:
    """Projection without null words followed by per-row renormalization.

    Returns ``(normalized, alpha)`` where ``normalized`` is (n_t+1)x(n_t+1)
    and ``alpha[p]`` is the mass of row ``p`` before normalization. Rows with
    no mass stay zero and get ``alpha = 0``.
    """
    p1 = np.asarray(p1, dtype=float)
    _check_arc_shapes(p1, al)
    # Normalizing the binary link matrix without the null column leaves the
    # real columns of the stochastic matrices unchanged.
    a_ts = al.a_ts[:, :-1]
    a_st = al.a_st[:, :-1]
    raw = a_ts @ p1 @ a_st
    alpha = raw.sum(axis=1)
    normalized = np.zeros_like(raw)
    nz = alpha > 0
    normalized[nz] = raw[nz] / alpha[nz, None]
    return normalized, alpha


# --- corpus file -----------------------------------------------------------


def _record(target: SoftTarget, sentence: Optional[Sentence], threshold: float) -> dict:
    n = target.n
    k = target.labels.shape[2]
    rows, cols = np.nonzero(target.arcs > threshold)
    arcs = [[int(r), int(c), float(target.arcs[r, c])] for r, c in zip(rows, cols)]
    label_cells = []
    for r, c in zip(rows, cols):
        if c <= n:
            label_cells.append([int(r), int(c), [float(v) for v in target.labels[r, c]]])
    rec = {
        "id": target.sentence_id,
        "n": n,
        "n_labels": k,
        "arcs": arcs,
        "labels": label_cells,
        "label_default": 1.0 / k,
    }
    if sentence is not None:
        rec["forms"] = sentence.forms
        rec["upos"] = [t.upos for t in sentence.tokens]
    return rec


def write_soft_targets(
    path,
    targets: Sequence[SoftTarget],
    label_set: LabelSet,
    sentences: Optional[Sequence[Sentence]] = None,
    threshold: float = 1e-6,
) -> None:
    """Write a soft-target corpus as JSON lines.

    The first line is a header naming the label set. Arc cells at or below
    ``threshold`` are dropped (lossy). Label cells are stored only where the
    written arc mass is nonzero; every other cell reads back as uniform.
    """
    if sentences is not None and len(sentences) != len(targets):
        raise ValueError("one target sentence per soft target is required")
    with open(path, "w", encoding="utf-8") as f:
        header = {"format": SOFT_FORMAT, "version": SOFT_VERSION,
                  "labels": list(label_set.labels), "threshold": threshold}
        f.write(json.dumps(header, ensure_ascii=False) + "\n")
        for k, t in enumerate(targets):
            sent = sentences[k] if sentences is not None else None
            f.write(json.dumps(_record(t, sent, threshold), ensure_ascii=False) + "\n")


def _decode_record(rec: dict) -> tuple[SoftTarget, Optional[Sentence]]:
    n, k = rec["n"], rec["n_labels"]
    arcs = np.zeros((n + 1, n + 2))
    for r, c, v in rec["arcs"]:
        arcs[r, c] = v
    labels = np.full((n + 1, n + 1, k), rec["label_default"])
    for r, c, dist in rec["labels"]:
        labels[r, c] = dist
    sentence = None
    if "forms" in rec:
        upos = rec.get("upos") or ["_"] * n
        tokens = tuple(Token(index=i, form=f, upos=u)
                       for i, (f, u) in enumerate(zip(rec["forms"], upos), start=1))
        comments = (f"# sent_id = {rec['id']}",) if rec["id"] is not None else ()
        sentence = Sentence(tokens, rec["id"], comments)
    return SoftTarget(arcs, labels, rec["id"]), sentence


def iter_soft_targets(path) -> Iterator[tuple[SoftTarget, Optional[Sentence]]]:
    with open(path, encoding="utf-8") as f:
        header = json.loads(f.readline() or "null")
        if not isinstance(header, dict) or header.get("format") != SOFT_FORMAT:
            raise ValueError(f"{path}: not a soft-target corpus")
        if header.get("version") != SOFT_VERSION:
            raise ValueError(f"{path}: unsupported soft-target version {header.get('version')}")
        for line in f:
            if line.strip():
                yield _decode_record(json.loads(line))


def read_soft_targets(path) -> tuple[LabelSet, list[SoftTarget], list[Optional[Sentence]]]:
    with open(path, encoding="utf-8") as f:
        header = json.loads(f.readline() or "null")
    if not isinstance(header, dict) or header.get("format") != SOFT_FORMAT:
        raise ValueError(f"{path}: not a soft-target corpus")
    label_set = LabelSet(tuple(header["labels"]))
    targets, sentences = [], []
    for t, s in iter_soft_targets(path):
        if t.labels.shape[2] != len(label_set):
            raise ValueError(f"{path}: record {t.sentence_id} has {t.labels.shape[2]} labels,"
                             f" header declares {len(label_set)}")
        targets.append(t)
        sentences.append(s)
    return label_set, targets, sentences
