"""Bi-affine arc and label scorer over a hashed character-trigram encoder.

Words are embedded as the sum of their hashed character trigrams, so
languages with related spelling share features. The encoder is a ReLU
feedforward layer, an optional bidirectional LSTM and separate head and
dependent MLPs. A constant feature is appended to both head and dependent
features before the bilinear products.
"""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .treebank import LabelSet, Sentence

MAGIC = b"SUBDPMDL"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


class LabelSetMismatch(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    vocab_hash_buckets: int = 2 ** 16
    embed_dim: int = 64
    hidden_dim: int = 128
    head_dim: int = 128
    dep_dim: int = 128
    use_recurrent: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("vocab_hash_buckets", "embed_dim", "hidden_dim", "head_dim", "dep_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@lru_cache(maxsize=200_000)
def _trigram_ids(form: str, buckets: int) -> tuple[int, ...]:
    padded = f"<{form}>"
    grams = [padded[k:k + 3] for k in range(len(padded) - 2)]
    return tuple(zlib.crc32(g.encode("utf-8")) % buckets for g in grams)


def append_ones(x: torch.Tensor) -> torch.Tensor:
    return torch.cat([x, x.new_ones(*x.shape[:-1], 1)], dim=-1)


class ParserModel(nn.Module):
    def __init__(self, config: EncoderConfig, label_set: LabelSet):
        super().__init__()
        if len(label_set) == 0:
            raise ValueError("label set is empty")
        self.config = config
        self.label_set = label_set
        c = config
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(c.seed)
            self.embed = nn.EmbeddingBag(c.vocab_hash_buckets, c.embed_dim, mode="sum")
            nn.init.normal_(self.embed.weight, std=0.1)
            self.root = nn.Parameter(torch.randn(c.embed_dim) * 0.1)
            self.feature = nn.Linear(c.embed_dim, c.hidden_dim)
            if c.use_recurrent:
                self.lstm = nn.LSTM(c.hidden_dim, c.hidden_dim, batch_first=True,
                                    bidirectional=True)
                enc_dim = 2 * c.hidden_dim
            else:
                self.lstm = None
                enc_dim = c.hidden_dim
            self.head_mlp = nn.Linear(enc_dim, c.head_dim)
            self.dep_mlp = nn.Linear(enc_dim, c.dep_dim)
            self.w_arc = nn.Parameter(torch.zeros(c.dep_dim + 1, c.head_dim + 1))
            self.w_label = nn.Parameter(torch.zeros(c.dep_dim + 1, c.head_dim + 1, len(label_set)))

    @property
    def n_labels(self) -> int:
        return self.w_label.shape[-1]

    def check_label_set(self, label_set: LabelSet) -> None:
        if tuple(label_set.labels) != tuple(self.label_set.labels):
            raise LabelSetMismatch(
                f"model has {len(self.label_set)} labels {list(self.label_set.labels)},"
                f" data has {len(label_set)} labels {list(label_set.labels)}"
            )

    def _word_inputs(self, sentences: Sequence[Sentence]):
        ids: list[int] = []
        offsets: list[int] = []
        for s in sentences:
            for form in s.forms:
                offsets.append(len(ids))
                ids.extend(_trigram_ids(form, self.config.vocab_hash_buckets))
        return (torch.tensor(ids, dtype=torch.long),
                torch.tensor(offsets, dtype=torch.long))

    def encode(self, sentences: Sequence[Sentence]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Head and dependent features, padded to the longest sentence.

        Returns ``(H, D, lengths)`` with ``H``: B x (T+1) x d_h and ``D``:
        B x (T+1) x d_d; row 0 of every sentence is ROOT. ``lengths`` counts
        words excluding ROOT.
        """
        lengths = torch.tensor([len(s) for s in sentences], dtype=torch.long)
        if len(sentences) == 0 or int(lengths.min()) == 0:
            raise ValueError("cannot encode an empty sentence")
        ids, offsets = self._word_inputs(sentences)
        words = self.embed(ids, offsets)
        b, t = len(sentences), int(lengths.max()) + 1
        x = words.new_zeros(b, t, self.config.embed_dim)
        x[:, 0] = self.root
        pos = 0
        for k, n in enumerate(lengths.tolist()):
            x[k, 1:n + 1] = words[pos:pos + n]
            pos += n
        x = torch.relu(self.feature(x))
        if self.lstm is not None:
            packed = pack_padded_sequence(x, lengths + 1, batch_first=True, enforce_sorted=False)
            out, _ = self.lstm(packed)
            x, _ = pad_packed_sequence(out, batch_first=True, total_length=t)
        h = torch.relu(self.head_mlp(x))
        d = torch.relu(self.dep_mlp(x))
        return h, d, lengths

    def arc_scores(self, h: torch.Tensor, d: torch.Tensor) -> torch.Tensor:
        """``S[b, i, j]`` = score of head ``j`` for dependent ``i``."""
        return torch.einsum("bip,pq,bjq->bij", append_ones(d), self.w_arc, append_ones(h))

    def label_scores(self, h: torch.Tensor, d: torch.Tensor) -> torch.Tensor:
        """``S[b, i, j, l]`` for every (dependent, head) pair."""
        dw = torch.einsum("bip,pql->bilq", append_ones(d), self.w_label)
        return torch.einsum("bilq,bjq->bijl", dw, append_ones(h))

    def forward(self, sentences: Sequence[Sentence], mask_self: bool = False):
        """Log-probabilities ``(arc_logp, label_logp, lengths)``.

        ``arc_logp`` is B x (T+1) x (T+1) with padded heads excluded from the
        softmax; rows for ROOT and padding are meaningless and must be masked
        by the caller. ``label_logp`` is B x (T+1) x (T+1) x |L|.
        """
        h, d, lengths = self.encode(sentences)
        s_arc = self.arc_scores(h, d)
        s_arc = s_arc.masked_fill(~head_mask(lengths, mask_self), float("-inf"))
        arc_logp = torch.log_softmax(s_arc, dim=-1)
        label_logp = torch.log_softmax(self.label_scores(h, d), dim=-1)
        return arc_logp, label_logp, lengths


def head_mask(lengths: torch.Tensor, mask_self: bool = False) -> torch.Tensor:
    """B x (T+1) x (T+1) boolean mask of admissible head positions."""
    t = int(lengths.max()) + 1
    idx = torch.arange(t)
    valid = idx[None, :] <= lengths[:, None]
    mask = valid[:, None, :].expand(-1, t, -1)
    if mask_self:
        mask = mask & ~torch.eye(t, dtype=torch.bool)[None]
    # ROOT row keeps one admissible cell so its softmax stays finite.
    root_row = torch.zeros(t, dtype=torch.bool)
    root_row[0] = True
    mask = mask.clone()
    mask[:, 0, :] = root_row
    return mask


# --- single-sentence numpy views ---------------------------------------------


def softmax_rows(scores: np.ndarray, mask_self: bool = False) -> np.ndarray:
    """Row softmax over candidate heads for rows 1..n; row 0 is zeroed."""
    s = np.array(scores, dtype=float)
    if mask_self:
        np.fill_diagonal(s, -np.inf)
    s = s - s.max(axis=1, keepdims=True)
    e = np.exp(s)
    p = e / e.sum(axis=1, keepdims=True)
    p[0] = 0.0
    return p


def arc_probs(s_arc: np.ndarray, mask_self: bool = False) -> np.ndarray:
    return softmax_rows(s_arc, mask_self)


def label_probs_from_scores(s_label: np.ndarray) -> np.ndarray:
    s = np.asarray(s_label, dtype=float)
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


@torch.no_grad()
def predict_distributions(model: ParserModel, sentences: Sequence[Sentence],
                          mask_self: bool = False, batch_size: int = 64):
    """Per-sentence ``(arc_probs, label_probs)`` as float64 numpy arrays,
    shaped (n+1)x(n+1) and (n+1)x(n+1)x|L|; arc row 0 is zero."""
    was_training = model.training
    model.eval()
    out = []
    try:
        for start in range(0, len(sentences), batch_size):
            chunk = sentences[start:start + batch_size]
            arc_logp, label_logp, lengths = model(chunk, mask_self=mask_self)
            for k, n in enumerate(lengths.tolist()):
                p = arc_logp[k, :n + 1, :n + 1].double().exp().numpy()
                p[0] = 0.0
                q = label_logp[k, :n + 1, :n + 1].double().exp().numpy()
                out.append((p, q))
    finally:
        model.train(was_training)
    return out


# --- serialization ------------------------------------------------------------

_CONFIG_FIELDS = ("vocab_hash_buckets", "embed_dim", "hidden_dim", "head_dim", "dep_dim",
                  "use_recurrent", "seed")


def _write_str(buf: io.BytesIO, s: str) -> None:
    b = s.encode("utf-8")
    buf.write(struct.pack("<I", len(b)))
    buf.write(b)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError("truncated model file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")


def model_to_bytes(model: ParserModel) -> bytes:
    """Serialize a model.

    Layout (little-endian): magic, u32 version, config as signed 64-bit
    ints, label count and length-prefixed UTF-8 labels, tensor count, then
    per tensor its name, rank, dims and row-major float32 data.
    """
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    cfg = asdict(model.config)
    buf.write(struct.pack("<" + "q" * len(_CONFIG_FIELDS), *(int(cfg[f]) for f in _CONFIG_FIELDS)))
    buf.write(struct.pack("<I", len(model.label_set)))
    for label in model.label_set.labels:
        _write_str(buf, label)
    state = model.state_dict()
    buf.write(struct.pack("<I", len(state)))
    for name, tensor in state.items():
        _write_str(buf, name)
        arr = tensor.detach().cpu().numpy().astype("<f4")
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack("<" + "I" * arr.ndim, *arr.shape))
        buf.write(np.ascontiguousarray(arr).tobytes())
    return buf.getvalue()


def model_from_bytes(data: bytes) -> ParserModel:
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise ModelFormatError("not a model file (bad magic bytes)")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    values = r.unpack("<" + "q" * len(_CONFIG_FIELDS))
    raw = dict(zip(_CONFIG_FIELDS, values))
    raw["use_recurrent"] = bool(raw["use_recurrent"])
    config = EncoderConfig(**raw)
    (n_labels,) = r.unpack("<I")
    label_set = LabelSet(tuple(r.string() for _ in range(n_labels)))
    model = ParserModel(config, label_set)
    expected = model.state_dict()
    (n_tensors,) = r.unpack("<I")
    if n_tensors != len(expected):
        raise ModelFormatError(f"expected {len(expected)} tensors, file has {n_tensors}")
    loaded = {}
    for _ in range(n_tensors):
        name = r.string()
        (ndim,) = r.unpack("<I")
        shape = r.unpack("<" + "I" * ndim)
        if name not in expected:
            raise ModelFormatError(f"unexpected tensor {name!r}")
        if tuple(expected[name].shape) != tuple(shape):
            raise ModelFormatError(
                f"tensor {name!r} has shape {tuple(shape)}, config implies {tuple(expected[name].shape)}"
            )
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape)
        loaded[name] = torch.from_numpy(arr.astype(np.float32))
    if r.pos != len(data):
        raise ModelFormatError("trailing bytes after last tensor")
    model.load_state_dict(loaded)
    return model


def save_model(model: ParserModel, path) -> None:
    with open(path, "wb") as f:
        f.write(model_to_bytes(model))


def load_model(path) -> ParserModel:
    with open(path, "rb") as f:
        return model_from_bytes(f.read())


def build_model(label_set: LabelSet, config: Optional[EncoderConfig] = None) -> ParserModel:
    return ParserModel(config or EncoderConfig(), label_set)
