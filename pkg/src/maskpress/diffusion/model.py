"""Miniature bidirectional encoder predicting per-token distributions.

The model maps a token sequence (with MASK symbols at pruned positions) to a
probability distribution over vocabulary-plus-MASK at every position.  The
retention probability of a token is one minus the MASK probability at its
position.  Checkpoints use a small binary container with named float32
segments; round-trips are bit-exact.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from maskpress.core.types import TokenSeq
from maskpress.errors import ConfigError, ResumeError, ShapeError

CHECKPOINT_MAGIC = b"MPRS"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelArch:
    n_layers: int = 2
    d_model: int = 64
    n_heads: int = 4
    max_seq_len: int = 512

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ConfigError("d_model must divide evenly into heads")
        if min(self.n_layers, self.d_model, self.n_heads, self.max_seq_len) < 1:
            raise ConfigError("architecture fields must be positive")


class _Attention(nn.Module):
    """Full bidirectional self-attention, no causal mask, no dropout."""

    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.proj = nn.Linear(d_model, d_model)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        batch, length, d_model = h.shape
        qkv = self.qkv(h).reshape(batch, length, 3, self.n_heads, self.head_dim)
        qkv = qkv.permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        att = (q @ k.transpose(-2, -1)) / self.head_dim**0.5
        att = att.softmax(dim=-1)
        out = (att @ v).transpose(1, 2).reshape(batch, length, d_model)
        return self.proj(out)


class _Block(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(d_model)
        self.attn = _Attention(d_model, n_heads)
        self.ln2 = nn.LayerNorm(d_model)
        self.ffn = nn.Sequential(
            nn.Linear(d_model, 4 * d_model),
            nn.GELU(),
            nn.Linear(4 * d_model, d_model),
        )

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        h = h + self.attn(self.ln1(h))
        h = h + self.ffn(self.ln2(h))
        return h


class _Encoder(nn.Module):
    def __init__(self, arch: ModelArch, vocab_size: int):
        super().__init__()
        self.tok = nn.Embedding(vocab_size, arch.d_model)
        self.pos = nn.Embedding(arch.max_seq_len, arch.d_model)
        self.blocks = nn.ModuleList(
            _Block(arch.d_model, arch.n_heads) for _ in range(arch.n_layers)
        )
        self.ln_f = nn.LayerNorm(arch.d_model)
        self.head = nn.Linear(arch.d_model, vocab_size)
        # small output logits at init so distributions start near uniform
        nn.init.normal_(self.head.weight, std=0.02)
        nn.init.zeros_(self.head.bias)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        length = ids.shape[-1]
        positions = torch.arange(length, device=ids.device)
        h = (self.tok(ids) + self.pos(positions)).unsqueeze(0)
        for block in self.blocks:
            h = block(h)
        return self.head(self.ln_f(h)).squeeze(0)


class MaskModel:
    """Parameter store + architecture descriptor of the mask predictor."""

    def __init__(self, arch: ModelArch, vocab_size: int, mask_id: int, seed: int = 0):
        if not (0 <= mask_id < vocab_size):
            raise ConfigError("mask_id must be a valid vocabulary id")
        self.arch = arch
        self.vocab_size = vocab_size
        self.mask_id = mask_id
        torch.manual_seed(seed)
        self.net = _Encoder(arch, vocab_size)
        self.net.eval()

    @property
    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.net.parameters())

    def logits(self, ids: Sequence[int]) -> torch.Tensor:
        """Differentiable (L, vocab) logits; raises on overlength input."""
        if len(ids) > self.arch.max_seq_len:
            raise ShapeError(
                f"sequence of {len(ids)} exceeds max_seq_len {self.arch.max_seq_len}"
            )
        tensor = torch.as_tensor(list(ids), dtype=torch.long)
        return self.net(tensor)

    def forward_probs(self, ids: Sequence[int]) -> np.ndarray:
        """Per-position probability distributions as float64 (L, vocab)."""
        with torch.no_grad():
            logits = self.logits(ids).double()
            probs = torch.softmax(logits, dim=-1)
        return probs.numpy()

    def retention_probabilities(self, ids: Sequence[int]) -> np.ndarray:
        """r_i = 1 - p(MASK at i)."""
        return 1.0 - self.forward_probs(ids)[:, self.mask_id]

    # --- checkpoint container -------------------------------------------

    def named_segments(self) -> list[tuple[str, np.ndarray]]:
        return [
            (name, param.detach().to(torch.float32).numpy())
            for name, param in self.net.state_dict().items()
        ]

    def save_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(CHECKPOINT_MAGIC)
        buf.write(struct.pack("<I", CHECKPOINT_VERSION))
        buf.write(
            struct.pack(
                "<6I",
                self.arch.n_layers,
                self.arch.d_model,
                self.arch.n_heads,
                self.arch.max_seq_len,
                self.vocab_size,
                self.mask_id,
            )
        )
        for name, array in self.named_segments():
            encoded = name.encode("utf-8")
            buf.write(struct.pack("<H", len(encoded)))
            buf.write(encoded)
            flat = np.ascontiguousarray(array, dtype="<f4").ravel()
            buf.write(struct.pack("<Q", flat.size))
            buf.write(flat.tobytes())
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.save_bytes())

    @classmethod
    def load_bytes(cls, blob: bytes) -> "MaskModel":
        buf = io.BytesIO(blob)
        if buf.read(4) != CHECKPOINT_MAGIC:
            raise ResumeError("not a model checkpoint (bad magic)")
        (version,) = struct.unpack("<I", buf.read(4))
        if version != CHECKPOINT_VERSION:
            raise ResumeError(f"unsupported checkpoint version {version}")
        n_layers, d_model, n_heads, max_seq_len, vocab_size, mask_id = struct.unpack(
            "<6I", buf.read(24)
        )
        arch = ModelArch(n_layers, d_model, n_heads, max_seq_len)
        model = cls(arch, vocab_size, mask_id, seed=0)
        state = model.net.state_dict()
        loaded: dict[str, torch.Tensor] = {}
        while True:
            raw = buf.read(2)
            if not raw:
                break
            (name_len,) = struct.unpack("<H", raw)
            name = buf.read(name_len).decode("utf-8")
            (count,) = struct.unpack("<Q", buf.read(8))
            data = np.frombuffer(buf.read(count * 4), dtype="<f4").copy()
            if name not in state:
                raise ResumeError(f"checkpoint names unknown segment {name!r}")
            loaded[name] = torch.from_numpy(data).reshape(state[name].shape)
        if set(loaded) != set(state):
            raise ResumeError("checkpoint is missing parameter segments")
        model.net.load_state_dict(loaded)
        model.net.eval()
        return model

    @classmethod
    def load(cls, path: str | Path) -> "MaskModel":
        with open(path, "rb") as fh:
            return cls.load_bytes(fh.read())


def model_forward(model: MaskModel, x_tilde: TokenSeq) -> np.ndarray:
    """L probability distributions over vocab (incl. MASK) for a sequence."""
    return model.forward_probs(x_tilde.tokens)
