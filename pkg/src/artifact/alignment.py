"""Word alignments and the right-stochastic matrices used for projection.

External (Pharaoh) indices are 0-based; internally words are 1-based with
ROOT at position 0 on both sides. Projection matrices carry one extra
trailing column for the null (dummy) word.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class RawAlignment:
    n_src: int
    n_tgt: int
    links: frozenset  # of (src, tgt), both 1-based

    def __post_init__(self):
        object.__setattr__(self, "links", frozenset(self.links))
        for i, j in self.links:
            if not (1 <= i <= self.n_src and 1 <= j <= self.n_tgt):
                raise ValueError(
                    f"link ({i}, {j}) outside {self.n_src}x{self.n_tgt} alignment"
                )

    def matrix(self) -> np.ndarray:
        """Binary ``n_src x n_tgt`` link matrix (no ROOT)."""
        m = np.zeros((self.n_src, self.n_tgt))
        for i, j in self.links:
            m[i - 1, j - 1] = 1.0
        return m


@dataclass(frozen=True)
class StochasticAlignment:
    a_st: np.ndarray  # (n_src+1) x (n_tgt+2)
    a_ts: np.ndarray  # (n_tgt+1) x (n_src+2)

    @property
    def n_src(self) -> int:
        return self.a_st.shape[0] - 1

    @property
    def n_tgt(self) -> int:
        return self.a_ts.shape[0] - 1


def parse_pharaoh(line: str, n_src: int, n_tgt: int) -> RawAlignment:
    links = set()
    for item in line.split():
        parts = item.split("-")
        if len(parts) != 2:
            raise ValueError(f"malformed alignment pair {item!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise ValueError(f"malformed alignment pair {item!r}") from None
        if not (0 <= i < n_src and 0 <= j < n_tgt):
            raise ValueError(
                f"alignment pair {item!r} out of range for {n_src} source / {n_tgt} target words"
            )
        links.add((i + 1, j + 1))
    return RawAlignment(n_src, n_tgt, frozenset(links))


def format_pharaoh(a: RawAlignment) -> str:
    return " ".join(f"{i - 1}-{j - 1}" for i, j in sorted(a.links))


def read_pharaoh_file(path, src_lengths: Iterable[int], tgt_lengths: Iterable[int]) -> list[RawAlignment]:
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    src_lengths, tgt_lengths = list(src_lengths), list(tgt_lengths)
    if not (len(lines) == len(src_lengths) == len(tgt_lengths)):
        raise ValueError(
            f"{path}: {len(lines)} alignment lines for {len(src_lengths)} source"
            f" and {len(tgt_lengths)} target sentences"
        )
    out = []
    for k, (line, ns, nt) in enumerate(zip(lines, src_lengths, tgt_lengths), start=1):
        try:
            out.append(parse_pharaoh(line, ns, nt))
        except ValueError as e:
            raise ValueError(f"{path}:{k}: {e}") from None
    return out


def write_pharaoh_file(path, alignments: Iterable[RawAlignment]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for a in alignments:
            f.write(format_pharaoh(a) + "\n")


def add_dummy_column(m: np.ndarray) -> np.ndarray:
    """Append a null column that is 1 exactly on rows summing to zero."""
    m = np.asarray(m, dtype=float)
    dummy = (m.sum(axis=1) == 0).astype(float)
    return np.concatenate([m, dummy[:, None]], axis=1)


def row_normalize(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    sums = m.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        bad = int(np.flatnonzero(sums[:, 0] <= 0)[0])
        raise ValueError(f"row {bad} sums to zero; add a dummy column first")
    return m / sums


def _with_root(a: RawAlignment) -> np.ndarray:
    m = np.zeros((a.n_src + 1, a.n_tgt + 1))
    m[0, 0] = 1.0
    m[1:, 1:] = a.matrix()
    return m


def build_projection_matrices(a: RawAlignment) -> StochasticAlignment:
    """Source-to-target and target-to-source right-stochastic matrices.

    ROOT is linked to ROOT only, so the root arc of the source tree projects
    onto the target ROOT with full weight.
    """
    m = _with_root(a)
    return StochasticAlignment(
        a_st=row_normalize(add_dummy_column(m)),
        a_ts=row_normalize(add_dummy_column(m.T)),
    )


def filter_one_to_one(a: RawAlignment) -> RawAlignment:
    """Keep only links whose endpoints take part in no other link."""
    src_deg = Counter(i for i, _ in a.links)
    tgt_deg = Counter(j for _, j in a.links)
    kept = {(i, j) for i, j in a.links if src_deg[i] == 1 and tgt_deg[j] == 1}
    return RawAlignment(a.n_src, a.n_tgt, frozenset(kept))


def argmax_align(sim: np.ndarray) -> RawAlignment:
    """Link (i, j) when ``sim[i, j]`` is the strict maximum of both its row
    and its column. Tied cells are never linked."""
    sim = np.asarray(sim, dtype=float)
    n_src, n_tgt = sim.shape
    links = set()
    if sim.size:
        row_max = sim.max(axis=1, keepdims=True)
        col_max = sim.max(axis=0, keepdims=True)
        row_ties = (sim == row_max).sum(axis=1, keepdims=True)
        col_ties = (sim == col_max).sum(axis=0, keepdims=True)
        hit = (sim == row_max) & (sim == col_max) & (row_ties == 1) & (col_ties == 1)
        links = {(int(i) + 1, int(j) + 1) for i, j in zip(*np.nonzero(hit))}
    return RawAlignment(n_src, n_tgt, frozenset(links))
