"""Post-norm transformer encoder shared by both sides of every pair."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .vocab import TokenSequence

INIT_STD = 0.02
LN_EPS = 1e-12


class VocabularyError(ValueError):
    """Token id outside the encoder's embedding table."""


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    max_len: int = 32
    num_layers: int = 2
    num_heads: int = 4
    hidden_dim: int = 64
    ffn_dim: int | None = None
    dropout_rate: float = 0.1
    share_layers: bool = False

    def __post_init__(self):
        if self.ffn_dim is None:
            object.__setattr__(self, "ffn_dim", 4 * self.hidden_dim)
        if self.hidden_dim % self.num_heads:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        for field in ("vocab_size", "max_len", "num_layers", "num_heads", "hidden_dim", "ffn_dim"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be positive")

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.num_heads

    def to_dict(self) -> dict:
        return asdict(self)

    def param_count(self) -> int:
        """Closed-form number of learnable scalars."""
        d, f = self.hidden_dim, self.ffn_dim
        per_layer = 4 * (d * d + d) + (d * f + f) + (f * d + d) + 4 * d
        stored_layers = 1 if self.share_layers else self.num_layers
        return self.vocab_size * d + self.max_len * d + stored_layers * per_layer


def _normal(rng: np.random.Generator, shape, name: str) -> Tensor:
    return Tensor(rng.normal(0.0, INIT_STD, size=shape), requires_grad=True, name=name)


def _const(value: float, shape, name: str) -> Tensor:
    return Tensor(np.full(shape, value), requires_grad=True, name=name)


class EncoderLayer:
    """Self-attention and feed-forward sublayers, each followed by residual + layer norm."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, prefix: str):
        d, f = cfg.hidden_dim, cfg.ffn_dim
        self.cfg = cfg
        self.wq = _normal(rng, (d, d), f"{prefix}.attn.wq")
        self.bq = _const(0.0, d, f"{prefix}.attn.bq")
        self.wk = _normal(rng, (d, d), f"{prefix}.attn.wk")
        self.bk = _const(0.0, d, f"{prefix}.attn.bk")
        self.wv = _normal(rng, (d, d), f"{prefix}.attn.wv")
        self.bv = _const(0.0, d, f"{prefix}.attn.bv")
        self.wo = _normal(rng, (d, d), f"{prefix}.attn.wo")
        self.bo = _const(0.0, d, f"{prefix}.attn.bo")
        self.ln1_gain = _const(1.0, d, f"{prefix}.ln1.gain")
        self.ln1_bias = _const(0.0, d, f"{prefix}.ln1.bias")
        self.w1 = _normal(rng, (d, f), f"{prefix}.ffn.w1")
        self.b1 = _const(0.0, f, f"{prefix}.ffn.b1")
        self.w2 = _normal(rng, (f, d), f"{prefix}.ffn.w2")
        self.b2 = _const(0.0, d, f"{prefix}.ffn.b2")
        self.ln2_gain = _const(1.0, d, f"{prefix}.ln2.gain")
        self.ln2_bias = _const(0.0, d, f"{prefix}.ln2.bias")

    def parameters(self) -> list[Tensor]:
        return [
            self.wq, self.bq, self.wk, self.bk, self.wv, self.bv, self.wo, self.bo,
            self.ln1_gain, self.ln1_bias,
            self.w1, self.b1, self.w2, self.b2,
            self.ln2_gain, self.ln2_bias,
        ]

    def __call__(self, x: Tensor, mask: np.ndarray, training: bool, rng) -> Tensor:
        b, n, d = x.shape
        h, dh = self.cfg.num_heads, self.cfg.head_dim
        p = self.cfg.dropout_rate
        flat = x.reshape(b * n, d)

        def heads(w, bias):
            return T.regroup(T.linear(flat, w, bias), (b, n, h, dh), (0, 2, 1, 3), (b * h, n, dh))

        q, k, v = heads(self.wq, self.bq), heads(self.wk, self.bk), heads(self.wv, self.bv)
        key_mask = np.repeat(mask, h, axis=0)[:, None, :]
        ctx = attention(q, k, v, key_mask, dropout_rate=p, training=training, rng=rng)
        ctx = T.regroup(ctx, (b, h, n, dh), (0, 2, 1, 3), (b * n, d))
        attn_out = T.dropout(T.linear(ctx, self.wo, self.bo), p, rng, training)
        flat = T.layer_norm(flat + attn_out, self.ln1_gain, self.ln1_bias, LN_EPS)

        ff = T.linear(T.gelu(T.linear(flat, self.w1, self.b1)), self.w2, self.b2)
        ff = T.dropout(ff, p, rng, training)
        flat = T.layer_norm(flat + ff, self.ln2_gain, self.ln2_bias, LN_EPS)
        return flat.reshape(b, n, d)


def attention(q: Tensor, k: Tensor, v: Tensor, key_mask=None, dropout_rate: float = 0.0,
              training: bool = False, rng=None, return_weights: bool = False):
    """Scaled dot-product attention over batched heads.

    Args:
        q, k, v: tensors of shape (batch, length, head_dim).
        key_mask: boolean array broadcastable to (batch, q_len, k_len);
            False keys get zero weight.
    """
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = T.batched_matmul(q, k, transpose_b=True) * scale
    weights = T.softmax(scores, mask=key_mask)
    out = T.batched_matmul(T.dropout(weights, dropout_rate, rng, training), v)
    return (out, weights) if return_weights else out


class Encoder:
    """Token + learned position embeddings followed by ``num_layers`` blocks."""

    def __init__(self, cfg: EncoderConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        d = cfg.hidden_dim
        self.token_emb = _normal(rng, (cfg.vocab_size, d), "embed.token")
        self.pos_emb = _normal(rng, (cfg.max_len, d), "embed.position")
        n_stored = 1 if cfg.share_layers else cfg.num_layers
        self.layers = [EncoderLayer(cfg, rng, f"layer{i}") for i in range(n_stored)]

    def parameters(self) -> list[Tensor]:
        params = [self.token_emb, self.pos_emb]
        for layer in self.layers:
            params.extend(layer.parameters())
        return params

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for p in self.parameters():
            yield p.name, p

    def _blocks(self):
        if self.cfg.share_layers:
            return [self.layers[0]] * self.cfg.num_layers
        return self.layers

    def forward(self, ids: np.ndarray, mask: np.ndarray, training: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        """Hidden states of shape (batch, length, hidden_dim) for a batch of id rows."""
        ids = np.asarray(ids, dtype=np.int64)
        mask = np.asarray(mask)
        if ids.ndim != 2 or mask.shape != ids.shape:
            raise ValueError(f"ids {ids.shape} and mask {mask.shape} must be matching 2-D arrays")
        n = ids.shape[1]
        if n > self.cfg.max_len:
            raise ValueError(f"sequence length {n} exceeds max_len {self.cfg.max_len}")
        if ids.size and (ids.min() < 0 or ids.max() >= self.cfg.vocab_size):
            bad = int(ids.max() if ids.max() >= self.cfg.vocab_size else ids.min())
            raise VocabularyError(f"token id {bad} outside vocabulary of size {self.cfg.vocab_size}")
        positions = np.broadcast_to(np.arange(n), ids.shape)
        x = T.embedding(self.token_emb, ids) + T.embedding(self.pos_emb, positions)
        x = T.dropout(x, self.cfg.dropout_rate, rng, training)
        key_mask = mask.astype(bool)
        for block in self._blocks():
            x = block(x, key_mask, training, rng)
        return x

    def encode(self, seq: TokenSequence, training: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
        """Hidden states (length x hidden_dim) for one sequence."""
        out = self.forward(np.array([seq.ids]), np.array([seq.mask]), training, rng)
        return out[0]
