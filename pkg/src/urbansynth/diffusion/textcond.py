"""Prompt tokenizer with a fixed vocabulary and a small trainable text
encoder. An adapter for an external pretrained encoder plugs in behind the
same encode() surface."""

from __future__ import annotations

import math
import re

import torch
from torch import nn

from ..tiles.prompts import PROMPT_TEMPLATE

_PAD, _UNK = "<pad>", "<unk>"


def _template_words() -> list[str]:
    words = re.findall(r"[a-z]+", PROMPT_TEMPLATE.lower())
    seen: list[str] = []
    for w in words:
        if w not in seen:
            seen.append(w)
    return seen


class PromptTokenizer:
    """Deterministic word-level tokenizer; out-of-vocabulary words fall back
    to characters so arbitrary city names stay encodable."""

    def __init__(self, max_length: int = 64):
        self.max_length = max_length
        tokens = [_PAD, _UNK]
        for tok in _template_words() + list("abcdefghijklmnopqrstuvwxyz0123456789.%"):
            if tok not in tokens:
                tokens.append(tok)
        self.vocab = {tok: i for i, tok in enumerate(tokens)}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def encode(self, prompt: str) -> torch.Tensor:
        pieces = re.findall(r"[a-z]+|[0-9]|[.%]", prompt.lower())
        ids: list[int] = []
        for piece in pieces:
            if piece in self.vocab:
                ids.append(self.vocab[piece])
            else:
                ids.extend(self.vocab.get(ch, self.vocab[_UNK]) for ch in piece)
        ids = ids[: self.max_length]
        ids += [self.vocab[_PAD]] * (self.max_length - len(ids))
        return torch.tensor(ids, dtype=torch.long)

    def to_dict(self) -> dict:
        return {"max_length": self.max_length, "vocab": self.vocab}

    @classmethod
    def from_dict(cls, data: dict) -> "PromptTokenizer":
        tok = cls.__new__(cls)
        tok.max_length = int(data["max_length"])
        tok.vocab = {k: int(v) for k, v in data["vocab"].items()}
        return tok


class TextEncoder(nn.Module):
    def __init__(self, vocab_size: int, embed_dim: int = 64, layers: int = 2, max_length: int = 64):
        super().__init__()
        self.token_embed = nn.Embedding(vocab_size, embed_dim)
        self.pos_embed = nn.Parameter(torch.zeros(max_length, embed_dim))
        encoder_layer = nn.TransformerEncoderLayer(
            d_model=embed_dim,
            nhead=4,
            dim_feedforward=embed_dim * 2,
            batch_first=True,
            dropout=0.0,  # keep evaluation-mode forward deterministic
        )
        self.transformer = nn.TransformerEncoder(encoder_layer, num_layers=layers)
        nn.init.normal_(self.pos_embed, std=0.02)

    def forward(self, token_ids: torch.Tensor) -> torch.Tensor:
        """(b, L) token ids -> (b, L, d) embedding sequence."""
        x = self.token_embed(token_ids) + self.pos_embed[: token_ids.shape[1]]
        return self.transformer(x)

    def encode(self, token_ids: torch.Tensor) -> torch.Tensor:
        """Single (L,) prompt -> (L, d), deterministic for fixed weights."""
        was_training = self.training
        self.eval()
        with torch.no_grad():
            out = self.forward(token_ids.unsqueeze(0))[0]
        if was_training:
            self.train()
        return out


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Standard sinusoidal timestep embedding, (b,) -> (b, dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / half)
    args = t.float().unsqueeze(1) * freqs.unsqueeze(0)
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)
