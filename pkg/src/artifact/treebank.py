"""CoNLL-U reading/writing and gold distributions derived from trees.

Position 0 is the synthetic ROOT everywhere: a sentence of ``n`` words maps
to matrices indexed ``0..n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

ID, FORM, LEMMA, UPOS, XPOS, FEATS, HEAD, DEPREL, DEPS, MISC = range(10)


class ConlluError(ValueError):
    """Malformed CoNLL-U input. ``lineno`` is 1-based, or None for whole-sentence errors."""

    def __init__(self, message: str, lineno: Optional[int] = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Token:
    index: int
    form: str
    upos: str = "_"
    head: Optional[int] = None
    deprel: str = "_"
    lemma: str = "_"
    xpos: str = "_"
    feats: str = "_"
    deps: str = "_"
    misc: str = "_"

    def to_line(self) -> str:
        head = "_" if self.head is None else str(self.head)
        cols = (str(self.index), self.form, self.lemma, self.upos, self.xpos,
                self.feats, head, self.deprel, self.deps, self.misc)
        return "\t".join(cols)


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    id: Optional[str] = None
    comments: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]

    @property
    def heads(self) -> list[Optional[int]]:
        return [t.head for t in self.tokens]

    @property
    def deprels(self) -> list[str]:
        return [t.deprel for t in self.tokens]

    def with_tree(self, heads: Sequence[Optional[int]], deprels: Sequence[str]) -> "Sentence":
        """Copy of the sentence with heads and labels replaced."""
        if len(heads) != len(self.tokens) or len(deprels) != len(self.tokens):
            raise ValueError("heads/deprels length does not match sentence length")
        tokens = tuple(
            replace(t, head=None if h is None else int(h), deprel=r)
            for t, h, r in zip(self.tokens, heads, deprels)
        )
        return replace(self, tokens=tokens)


@dataclass(frozen=True)
class LabelSet:
    labels: tuple[str, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate labels in label set")
        object.__setattr__(self, "_index", {l: i for i, l in enumerate(self.labels)})

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "LabelSet":
        return cls(tuple(sorted(set(labels))))

    @classmethod
    def from_sentences(cls, sentences: Iterable[Sentence]) -> "LabelSet":
        return cls.from_labels(
            t.deprel for s in sentences for t in s.tokens if t.head is not None
        )

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"unknown label {label!r}") from None


def tree_problem(heads: Sequence[Optional[int]], require_complete: bool = True) -> Optional[str]:
    """Describe why ``heads`` (1-based head per word, 0 = ROOT) is not a
    single-rooted tree, or return None if it is one.

    With ``require_complete=False`` unattached words (None) are allowed and
    only the attached part is checked for cycles and multiple roots.
    """
    n = len(heads)
    roots = [i + 1 for i, h in enumerate(heads) if h == 0]
    if require_complete and len(roots) != 1:
        return f"expected exactly one root, found {len(roots)}"
    if len(roots) > 1:
        return f"expected at most one root, found {len(roots)}"
    for i, h in enumerate(heads, start=1):
        if h is None:
            if require_complete:
                return f"word {i} has no head"
            continue
        if not 0 <= h <= n:
            return f"word {i} has head {h} outside 0..{n}"
        if h == i:
            return f"word {i} is its own head"
    state = [0] * (n + 1)  # 0 unvisited, 1 on current path, 2 done
    state[0] = 2
    for start in range(1, n + 1):
        path = []
        node: Optional[int] = start
        while node is not None and state[node] == 0:
            state[node] = 1
            path.append(node)
            node = heads[node - 1]
        if node is not None and state[node] == 1:
            return f"cycle through word {node}"
        for v in path:
            state[v] = 2
    return None


def _parse_token(line: str, lineno: int, require_tree: bool) -> Optional[Token]:
    cols = line.split("\t")
    if len(cols) != 10:
        raise ConlluError(f"expected 10 tab-separated columns, got {len(cols)}", lineno)
    if "-" in cols[ID] or "." in cols[ID]:
        return None
    try:
        index = int(cols[ID])
    except ValueError:
        raise ConlluError(f"non-integer token id {cols[ID]!r}", lineno) from None
    if cols[HEAD] == "_" and not require_tree:
        head = None
    else:
        try:
            head = int(cols[HEAD])
        except ValueError:
            raise ConlluError(f"non-integer head {cols[HEAD]!r}", lineno) from None
    return Token(index=index, form=cols[FORM], upos=cols[UPOS], head=head,
                 deprel=cols[DEPREL], lemma=cols[LEMMA], xpos=cols[XPOS],
                 feats=cols[FEATS], deps=cols[DEPS], misc=cols[MISC])


def _finish(tokens, comments, first_line, require_tree, default_id) -> Sentence:
    for expected, (tok, lineno) in enumerate(tokens, start=1):
        if tok.index != expected:
            raise ConlluError(f"token id {tok.index} out of sequence, expected {expected}", lineno)
    heads = [t.head for t, _ in tokens]
    problem = tree_problem(heads, require_complete=require_tree)
    if problem is not None:
        raise ConlluError(problem, first_line)
    sent_id = None
    for c in comments:
        if c.startswith("# sent_id"):
            sent_id = c.split("=", 1)[1].strip() if "=" in c else c[len("# sent_id"):].strip()
    if sent_id is None:
        sent_id = default_id
    return Sentence(tuple(t for t, _ in tokens), sent_id, tuple(comments))


def parse_conllu(text: str, require_tree: bool = True) -> list[Sentence]:
    """Parse CoNLL-U text into sentences.

    Multiword-token ranges and empty nodes are skipped. Comment lines are kept
    verbatim on the sentence. Sentences without a ``# sent_id`` comment get
    their 1-based position in the file as id.

    With ``require_tree=False`` the head column may be ``_`` (partial or
    unannotated trees); attached words must still form a forest under ROOT
    with at most one root.
    """
    sentences: list[Sentence] = []
    tokens: list[tuple[Token, int]] = []
    comments: list[str] = []
    first_line = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            if tokens:
                sentences.append(_finish(tokens, comments, first_line, require_tree,
                                         str(len(sentences) + 1)))
            elif comments:
                raise ConlluError("comment block without tokens", lineno)
            tokens, comments, first_line = [], [], None
            continue
        if first_line is None:
            first_line = lineno
        if line.startswith("#"):
            if tokens:
                raise ConlluError("comment inside token block", lineno)
            comments.append(line)
            continue
        tok = _parse_token(line, lineno, require_tree)
        if tok is not None:
            tokens.append((tok, lineno))
    if tokens:
        sentences.append(_finish(tokens, comments, first_line, require_tree,
                                 str(len(sentences) + 1)))
    elif comments:
        raise ConlluError("comment block without tokens", first_line)
    return sentences


def write_conllu(sentences: Iterable[Sentence]) -> str:
    out = []
    for s in sentences:
        out.extend(s.comments)
        out.extend(t.to_line() for t in s.tokens)
        out.append("")
    return "".join(line + "\n" for line in out)


def read_conllu_file(path, require_tree: bool = True) -> list[Sentence]:
    with open(path, encoding="utf-8") as f:
        return parse_conllu(f.read(), require_tree=require_tree)


def write_conllu_file(path, sentences: Iterable[Sentence]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(write_conllu(sentences))


def gold_arc_matrix(s: Sentence) -> np.ndarray:
    """One-hot head distribution per word; row 0 (ROOT) and rows of
    unattached words are all zero."""
    n = len(s)
    m = np.zeros((n + 1, n + 1))
    for i, tok in enumerate(s.tokens, start=1):
        if tok.head is not None:
            m[i, tok.head] = 1.0
    return m


def gold_label_tensor(s: Sentence, labels: LabelSet) -> np.ndarray:
    """Label distribution per (dependent, head) cell: one-hot on gold arcs,
    uniform ``1/|L|`` everywhere else."""
    n = len(s)
    k = len(labels)
    q = np.full((n + 1, n + 1, k), 1.0 / k)
    for i, tok in enumerate(s.tokens, start=1):
        if tok.head is None:
            continue
        if tok.deprel not in labels:
            raise KeyError(f"unknown label {tok.deprel!r} in sentence {s.id}")
        q[i, tok.head, :] = 0.0
        q[i, tok.head, labels.index(tok.deprel)] = 1.0
    return q
