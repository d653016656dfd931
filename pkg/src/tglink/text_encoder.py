"""Tokenizer, vocabulary and the text transformer encoder.

The encoder is a small pre-LN transformer trained from scratch.  Every
entity, relation and query embedding is a pure function of (parameters,
text): there is no id-indexed entity or relation embedding table in the
inductive path.  The CLS output is projected through two square matrices
with a SiLU in between to produce the final embedding.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CLS_ID = 0
PAD_ID = 1
UNK_ID = 2
RESERVED = ["[cls]", "[pad]", "[unk]"]

INVERSE_PREFIX = "inverse of"

_WORD_RE = re.compile(r"\w+")


def words(text: str) -> list[str]:
    """Lowercase word split on whitespace/punctuation boundaries."""
    return _WORD_RE.findall(text.lower())


class Vocab:
    """Token-to-id map with fixed reserved ids; unknown words map to UNK."""

    def __init__(self, tokens: list[str]):
        self.token_to_id: dict[str, int] = {tok: i for i, tok in enumerate(RESERVED)}
        for tok in tokens:
            if tok not in self.token_to_id:
                self.token_to_id[tok] = len(self.token_to_id)
        self.id_to_token = [None] * len(self.token_to_id)
        for tok, i in self.token_to_id.items():
            self.id_to_token[i] = tok

    def __len__(self) -> int:
        return len(self.token_to_id)

    @classmethod
    def from_texts(cls, texts: list[str]) -> "Vocab":
        seen = set()
        ordered = []
        for text in texts:
            for w in words(text):
                if w not in seen:
                    seen.add(w)
                    ordered.append(w)
        return cls(sorted(ordered))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok, i in self.token_to_id.items():
                fh.write(f"{tok}\t{i}\n")

    @classmethod
    def load(cls, path: str) -> "Vocab":
        pairs = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                tok, i = line.split("\t")
                pairs.append((int(i), tok))
        pairs.sort()
        vocab = cls.__new__(cls)
        vocab.token_to_id = {tok: i for i, tok in pairs}
        vocab.id_to_token = [tok for _, tok in pairs]
        return vocab


def build_vocab(graph, train_entities: set[int]) -> Vocab:
    """Vocabulary from training-split entity texts plus all relation texts.

    Evaluation-only words map to UNK, preserving the inductive setting.
    The inverse-relation prefix is always in vocabulary.
    """
    texts = [graph.entity_text[e] for e in sorted(train_entities)]
    texts.extend(graph.relation_text)
    texts.append(INVERSE_PREFIX)
    return Vocab.from_texts(texts)


def tokenize(text: str, vocab: Vocab, length: int) -> np.ndarray:
    """CLS + first length-1 word ids, PAD-filled to exactly ``length`` ids."""
    ids = np.full(length, PAD_ID, dtype=np.intp)
    ids[0] = CLS_ID
    for i, w in enumerate(words(text)[:length - 1], start=1):
        ids[i] = vocab.token_to_id.get(w, UNK_ID)
    return ids


@dataclass
class TTConfig:
    dim: int = 64
    layers: int = 2
    heads: int = 4
    ffn: int = 128
    text_len: int = 24

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.text_len < 1:
            raise ValueError("text_len must be >= 1")


def xavier(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


@dataclass
class _TTLayer:
    ln1_gain: Tensor
    ln1_bias: Tensor
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor
    ffn_in: Tensor
    ffn_out: Tensor


@dataclass
class TTParams:
    """Token/positional embeddings, encoder layers and the projection head."""

    tok_emb: Tensor
    pos_emb: Tensor
    layers: list[_TTLayer]
    final_gain: Tensor
    final_bias: Tensor
    w0: Tensor
    w1: Tensor
    config: TTConfig = field(repr=False)

    @classmethod
    def init(cls, rng: np.random.Generator, vocab_size: int, config: TTConfig) -> "TTParams":
        d, f = config.dim, config.ffn
        layers = []
        for _ in range(config.layers):
            layers.append(_TTLayer(
                ln1_gain=ad.parameter(np.ones(d)),
                ln1_bias=ad.parameter(np.zeros(d)),
                w_q=ad.parameter(xavier(rng, d, d)),
                w_k=ad.parameter(xavier(rng, d, d)),
                w_v=ad.parameter(xavier(rng, d, d)),
                w_o=ad.parameter(xavier(rng, d, d)),
                ln2_gain=ad.parameter(np.ones(d)),
                ln2_bias=ad.parameter(np.zeros(d)),
                ffn_in=ad.parameter(xavier(rng, d, 2 * f)),
                ffn_out=ad.parameter(xavier(rng, f, d)),
            ))
        return cls(
            tok_emb=ad.parameter(xavier(rng, vocab_size, d)),
            pos_emb=ad.parameter(xavier(rng, config.text_len, d)),
            layers=layers,
            final_gain=ad.parameter(np.ones(d)),
            final_bias=ad.parameter(np.zeros(d)),
            w0=ad.parameter(xavier(rng, d, d)),
            w1=ad.parameter(xavier(rng, d, d)),
            config=config,
        )

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        out = [("tt.tok_emb", self.tok_emb), ("tt.pos_emb", self.pos_emb)]
        for i, layer in enumerate(self.layers):
            for fname in ("ln1_gain", "ln1_bias", "w_q", "w_k", "w_v", "w_o",
                          "ln2_gain", "ln2_bias", "ffn_in", "ffn_out"):
                out.append((f"tt.layer{i}.{fname}", getattr(layer, fname)))
        out.extend([
            ("tt.final_gain", self.final_gain),
            ("tt.final_bias", self.final_bias),
            ("tt.w0", self.w0),
            ("tt.w1", self.w1),
        ])
        return out


def _attention(x: Tensor, layer: _TTLayer, heads: int,
               mask: np.ndarray) -> Tensor:
    d = x.shape[-1]
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)
    q = x @ layer.w_q
    k = x @ layer.w_k
    v = x @ layer.w_v
    ctx = []
    for h in range(heads):
        qh = ad.slice_cols(q, h * dh, (h + 1) * dh)
        kh = ad.slice_cols(k, h * dh, (h + 1) * dh)
        vh = ad.slice_cols(v, h * dh, (h + 1) * dh)
        scores = (qh @ kh.T) * scale
        attn = ad.softmax_row(scores, mask)
        ctx.append(attn @ vh)
    return ad.concat_cols(ctx) @ layer.w_o


def encode_ids(params: TTParams, ids: np.ndarray) -> Tensor:
    """Run the encoder over a fixed-length id sequence and project the CLS vector.

    PAD positions are masked out of attention in every layer, so their
    content can never reach the CLS output.
    """
    cfg = params.config
    if len(ids) != cfg.text_len:
        raise ValueError(f"expected {cfg.text_len} ids, got {len(ids)}")
    mask = ids != PAD_ID
    x = ad.embedding_rows(params.tok_emb, ids) + params.pos_emb
    for layer in params.layers:
        h = ad.layer_norm(x, layer.ln1_gain, layer.ln1_bias)
        x = x + _attention(h, layer, cfg.heads, mask)
        h = ad.layer_norm(x, layer.ln2_gain, layer.ln2_bias)
        x = x + ad.swiglu_ffn(h, layer.ffn_in, layer.ffn_out)
    x = ad.layer_norm(x, params.final_gain, params.final_bias)
    cls = ad.take_row(x, 0)
    return ad.silu(cls @ params.w0) @ params.w1


def encode_text(params: TTParams, vocab: Vocab, text: str) -> Tensor:
    return encode_ids(params, tokenize(text, vocab, params.config.text_len))


def relation_text(text: str, inverse: bool) -> str:
    return f"{INVERSE_PREFIX} {text}" if inverse else text


def query_text(entity_text: str, rel_text: str, side: str) -> str:
    """Concatenated query text; head prediction uses the inverse relation form."""
    if side == "tail":
        return f"{entity_text} {rel_text}"
    if side == "head":
        return f"{entity_text} {INVERSE_PREFIX} {rel_text}"
    raise ValueError(f"side must be 'tail' or 'head', got {side!r}")
