"""The encoder classifier and its tokenizer.

The default "tiny" base model is a compact transformer encoder trained from
scratch: hashed word-piece embeddings, sinusoidal positions, a small
TransformerEncoder stack, masked mean pooling, and a single sigmoid output.
No pretrained weights are required, which keeps training fully offline; the
maximum sequence length is a config knob (default 8192) rather than an
architectural limit.
"""

from __future__ import annotations

import hashlib
import math
import re

import torch
from torch import nn

PAD_ID = 0
EMPTY_ID = 1
_RESERVED = 2

_TOKEN_RE = re.compile(r"[a-z0-9_]+|[`!?.]")


class HashingTokenizer:
    """Deterministic, vocabulary-free tokenizer: stable hash into buckets."""

    def __init__(self, vocab_size: int = 4096, max_len: int = 8192):
        if vocab_size <= _RESERVED:
            raise ValueError("vocab_size too small")
        self.vocab_size = vocab_size
        self.max_len = max_len

    def encode(self, text: str) -> list[int]:
        tokens = _TOKEN_RE.findall(text.lower())[: self.max_len]
        if not tokens:
            return [EMPTY_ID]
        ids = []
        for token in tokens:
            digest = hashlib.md5(token.encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:4], "big") % (self.vocab_size - _RESERVED)
            ids.append(bucket + _RESERVED)
        return ids

    def batch(self, texts: list[str]) -> tuple[torch.Tensor, torch.Tensor]:
        """(ids, mask) padded to the longest sequence in the batch."""
        encoded = [self.encode(t) for t in texts]
        width = max(len(e) for e in encoded)
        ids = torch.full((len(encoded), width), PAD_ID, dtype=torch.long)
        mask = torch.zeros((len(encoded), width), dtype=torch.bool)
        for row, enc in enumerate(encoded):
            ids[row, : len(enc)] = torch.tensor(enc, dtype=torch.long)
            mask[row, : len(enc)] = True
        return ids, mask


def _sinusoidal_positions(length: int, dim: int) -> torch.Tensor:
    position = torch.arange(length, dtype=torch.float32).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=torch.float32) * (-math.log(10000.0) / dim))
    table = torch.zeros(length, dim)
    table[:, 0::2] = torch.sin(position * div)
    table[:, 1::2] = torch.cos(position * div)
    return table


class TinyEncoderClassifier(nn.Module):
    def __init__(
        self,
        vocab_size: int = 4096,
        dim: int = 64,
        heads: int = 4,
        layers: int = 2,
        feedforward: int = 128,
        dropout: float = 0.1,
    ):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, dim, padding_idx=PAD_ID)
        encoder_layer = nn.TransformerEncoderLayer(
            d_model=dim,
            nhead=heads,
            dim_feedforward=feedforward,
            dropout=dropout,
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(encoder_layer, num_layers=layers)
        self.head = nn.Linear(dim, 1)
        self.dim = dim

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        x = self.embedding(ids)
        positions = _sinusoidal_positions(ids.shape[1], self.dim).to(x.device)
        x = x + positions.unsqueeze(0)
        x = self.encoder(x, src_key_padding_mask=~mask)
        weights = mask.unsqueeze(-1).float()
        pooled = (x * weights).sum(dim=1) / weights.sum(dim=1).clamp(min=1.0)
        return self.head(pooled).squeeze(-1)
