"""Toy text conditioning: vocabulary, tokenizer, and a tiny learned encoder.

Stands in for a large pretrained text encoder while keeping the same
mechanics downstream: a fixed-length sequence of embedding vectors feeds the
denoiser's cross-attention, and a dedicated learned sequence serves as the
null condition for classifier-free guidance.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from pathlib import Path

import torch
import torch.nn as nn

from .images import InvalidInputError

__all__ = ["Vocabulary", "build_vocab", "tokenize", "TextEncoder"]

PAD, UNK, NULL = "<pad>", "<unk>", "<null>"
_TOKEN_RE = re.compile(r"[a-z0-9]+")


class Vocabulary:
    def __init__(self, tokens: list[str]):
        specials = [PAD, UNK, NULL]
        for s in specials:
            if s in tokens:
                raise InvalidInputError(f"reserved token {s!r} in vocabulary")
        self.id_to_token = specials + list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise InvalidInputError("duplicate tokens in vocabulary")
        self.pad_id = self.token_to_id[PAD]
        self.unk_id = self.token_to_id[UNK]
        self.null_id = self.token_to_id[NULL]

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def save(self, path) -> None:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", encoding="utf-8") as f:
            f.write(f"s2p-vocab v1 size={len(self.id_to_token)}\n")
            for t in self.id_to_token:
                f.write(t + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            header = f.readline()
            if not header.startswith("s2p-vocab v1"):
                raise InvalidInputError(f"not a vocabulary file: {path}")
            toks = [line.rstrip("\n") for line in f]
        if toks[:3] != [PAD, UNK, NULL]:
            raise InvalidInputError("vocabulary file missing special tokens")
        return cls(toks[3:])

    def to_tokens(self) -> list[str]:
        return self.id_to_token[3:]


def split_words(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def build_vocab(captions: list[str], max_size: int) -> Vocabulary:
    """Keep the max_size most frequent tokens; ties break lexicographically."""
    if not captions:
        raise InvalidInputError("empty caption list")
    counts = Counter()
    for cap in captions:
        counts.update(split_words(cap))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = sorted(tok for tok, _ in ranked[:max_size])
    return Vocabulary(kept)


def tokenize(text: str, vocab: Vocabulary, length: int) -> list[int]:
    """Total tokenizer: unknowns map to <unk>, pad/truncate to exactly length."""
    if length < 1:
        raise InvalidInputError("sequence length must be >= 1")
    ids = [vocab.token_to_id.get(w, vocab.unk_id) for w in split_words(text)]
    ids = ids[:length]
    ids += [vocab.pad_id] * (length - len(ids))
    return ids


def sinusoidal_positions(length: int, dim: int) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float32).unsqueeze(1)
    half = dim // 2
    freq = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / half)
    angles = pos * freq.unsqueeze(0)
    emb = torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)
    if emb.shape[1] < dim:
        emb = torch.cat([emb, torch.zeros(length, dim - emb.shape[1])], dim=1)
    return emb


class TextEncoder(nn.Module):
    """Token embeddings + sinusoidal positions + one self-attention block.

    ``null_embedding`` is a separate learned L x d table, independent of any
    caption; it is what the unconditional branch of CFG sees.
    """

    def __init__(self, vocab_size: int, seq_len: int = 16, width: int = 128, heads: int = 4):
        super().__init__()
        self.seq_len = seq_len
        self.width = width
        self.vocab_size = vocab_size
        self.token_emb = nn.Embedding(vocab_size, width)
        self.register_buffer("pos_emb", sinusoidal_positions(seq_len, width))
        self.attn = nn.MultiheadAttention(width, heads, batch_first=True)
        self.norm = nn.LayerNorm(width)
        self.null_table = nn.Parameter(torch.randn(seq_len, width) * 0.02)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        if ids.dim() == 1:
            ids = ids.unsqueeze(0)
        if ids.shape[1] != self.seq_len:
            raise InvalidInputError(f"expected sequences of length {self.seq_len}")
        if int(ids.min()) < 0 or int(ids.max()) >= self.vocab_size:
            raise InvalidInputError("token id out of range")
        h = self.token_emb(ids) + self.pos_emb.unsqueeze(0)
        attn_out, _ = self.attn(h, h, h, need_weights=False)
        return self.norm(h + attn_out)

    def null_embedding(self, batch: int = 1) -> torch.Tensor:
        return self.null_table.unsqueeze(0).expand(batch, -1, -1)
