"""Siamese wrapper: pooling, pair features, and the three task heads."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoder import Encoder, EncoderConfig
from .tensor import ShapeError, Tensor


class Task(str, enum.Enum):
    NLI = "nli"
    PI = "pi"
    PTC = "ptc"

    @property
    def num_classes(self) -> int:
        return 2 if self is Task.PI else 3


TASK_LABELS: dict[Task, tuple[str, ...]] = {
    Task.NLI: ("entailment", "contradiction", "neutral"),
    Task.PI: ("non-paraphrase", "paraphrase"),
    Task.PTC: ("equivalence", "entailment", "independent"),
}


class Pooling(str, enum.Enum):
    MEAN = "mean"
    MAX = "max"
    CLS = "cls"


class EmptySequenceError(ValueError):
    """Pooling over a sequence whose mask has no real positions."""


class ConfigurationError(ValueError):
    """A head received features of the wrong dimension."""


_BLOCK_ALIASES = {"u": "u", "v": "v", "|u-v|": "|u-v|", "u*v": "u*v"}


class FeatureMode:
    """An ordered concatenation of the blocks u, v, |u-v| and u*v."""

    ALLOWED = (
        ("u", "v"),
        ("|u-v|",),
        ("u*v",),
        ("u", "v", "|u-v|"),
        ("u", "v", "u*v"),
        ("|u-v|", "u*v"),
        ("u", "v", "|u-v|", "u*v"),
    )

    def __init__(self, blocks):
        blocks = tuple(blocks)
        if blocks not in self.ALLOWED:
            raise ValueError(f"unsupported feature combination {blocks}")
        self.blocks = blocks

    @classmethod
    def parse(cls, text: str) -> "FeatureMode":
        """Accept ``u,v,|u-v|`` as well as ``[u; v; |u-v|]``."""
        cleaned = text.strip().strip("[]").replace(";", ",").replace(" ", "")
        parts = [p for p in cleaned.split(",") if p]
        try:
            return cls(_BLOCK_ALIASES[p] for p in parts)
        except KeyError as exc:
            raise ValueError(f"unknown feature block {exc.args[0]!r} in {text!r}") from None

    @property
    def symmetric(self) -> bool:
        return "u" not in self.blocks and "v" not in self.blocks

    def width(self, d: int) -> int:
        return len(self.blocks) * d

    def __str__(self) -> str:
        return ",".join(self.blocks)

    def __repr__(self) -> str:
        return f"FeatureMode([{'; '.join(self.blocks)}])"

    def __eq__(self, other) -> bool:
        return isinstance(other, FeatureMode) and other.blocks == self.blocks

    def __hash__(self) -> int:
        return hash(self.blocks)


DEFAULT_FEATURES = FeatureMode(("u", "v", "|u-v|"))


def pool(hidden: Tensor, mask, strategy: Pooling | str = Pooling.MEAN) -> Tensor:
    """Reduce hidden states to one vector per sequence.

    Works on a single sequence (length x d, mask of length n) or a batch
    (batch x length x d, mask batch x length). MEAN and MAX only look at
    positions whose mask is 1; CLS takes position 0.
    """
    strategy = Pooling(strategy)
    single = hidden.ndim == 2
    if single:
        hidden = hidden.reshape(1, *hidden.shape)
    m = np.asarray(mask, dtype=np.float64).reshape(hidden.shape[:2])
    counts = m.sum(axis=1)
    if np.any(counts == 0):
        raise EmptySequenceError("cannot pool a sequence with an all-zero mask")
    if strategy is Pooling.MEAN:
        out = (hidden * m[:, :, None]).sum(axis=1) * (1.0 / counts)[:, None]
    elif strategy is Pooling.MAX:
        # masked positions are pushed far below any real activation
        shift = np.where(m[:, :, None] > 0, 0.0, -1e30)
        out = (hidden + np.broadcast_to(shift, hidden.shape)).max(axis=1)
    else:
        out = hidden[:, 0, :]
    return out[0] if single else out


def pair_features(u: Tensor, v: Tensor, mode: FeatureMode = DEFAULT_FEATURES) -> Tensor:
    """Concatenate the blocks of ``mode`` along the last axis."""
    if u.shape != v.shape:
        raise ShapeError(f"pair_features: u {u.shape} and v {v.shape} differ")
    parts = []
    for block in mode.blocks:
        if block == "u":
            parts.append(u)
        elif block == "v":
            parts.append(v)
        elif block == "|u-v|":
            parts.append((u - v).abs())
        else:
            parts.append(u * v)
    return parts[0] if len(parts) == 1 else T.concat(parts, axis=-1)


@dataclass
class TaskHead:
    """One affine map from pair features to class logits."""

    task: Task
    weight: Tensor
    bias: Tensor | None

    @classmethod
    def init(cls, task: Task, in_dim: int, rng: np.random.Generator, use_bias: bool = True):
        c = task.num_classes
        w = Tensor(rng.normal(0.0, 0.02, size=(in_dim, c)), requires_grad=True,
                   name=f"head.{task.value}.weight")
        b = Tensor(np.zeros(c), requires_grad=True, name=f"head.{task.value}.bias") if use_bias else None
        return cls(task, w, b)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    def parameters(self) -> list[Tensor]:
        return [self.weight] + ([self.bias] if self.bias is not None else [])

    def logits(self, feature: Tensor) -> Tensor:
        if feature.shape[-1] != self.in_dim:
            raise ConfigurationError(
                f"{self.task.value} head expects {self.in_dim}-dim features, got {feature.shape[-1]}"
            )
        single = feature.ndim == 1
        x = feature.reshape(1, self.in_dim) if single else feature
        out = x @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out[0] if single else out


def classify(head: TaskHead, feature: Tensor) -> Tensor:
    """Class probabilities for one feature vector or a batch of them."""
    return T.softmax(head.logits(feature))


class TwinModel:
    """Shared encoder, pooling, feature wiring, and NLI / PI / PTC heads."""

    def __init__(
        self,
        cfg: EncoderConfig,
        pooling: Pooling | str = Pooling.MEAN,
        features: FeatureMode = DEFAULT_FEATURES,
        head_bias: bool = True,
        seed: int = 0,
    ):
        self.cfg = cfg
        self.pooling = Pooling(pooling)
        self.features = features
        self.head_bias = head_bias
        self.seed = seed
        self.encoder = Encoder(cfg, seed=seed)
        head_rng = np.random.default_rng([seed, 1])
        width = features.width(cfg.hidden_dim)
        self.heads = {t: TaskHead.init(t, width, head_rng, head_bias) for t in Task}

    def parameters(self) -> list[Tensor]:
        params = self.encoder.parameters()
        for t in Task:
            params.extend(self.heads[t].parameters())
        return params

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(p.name, p) for p in self.parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def describe(self) -> dict:
        return {
            "encoder": self.cfg.to_dict(),
            "pooling": self.pooling.value,
            "features": str(self.features),
            "head_bias": self.head_bias,
            "seed": self.seed,
        }

    def embed(self, ids, mask, training: bool = False, rng=None) -> Tensor:
        """Pooled vectors (batch x d) for a batch of sequences."""
        hidden = self.encoder.forward(ids, mask, training=training, rng=rng)
        return pool(hidden, mask, self.pooling)

    def pair_logits(self, task: Task, a_ids, a_mask, b_ids, b_mask,
                    training: bool = False, rng=None) -> Tensor:
        """Each side goes through the encoder on its own; heads see only pooled vectors."""
        u = self.embed(a_ids, a_mask, training, rng)
        v = self.embed(b_ids, b_mask, training, rng)
        return self.heads[Task(task)].logits(pair_features(u, v, self.features))

    def predict_proba(self, task: Task, a_ids, a_mask, b_ids, b_mask) -> np.ndarray:
        with T.no_grad():
            return T.softmax(self.pair_logits(task, a_ids, a_mask, b_ids, b_mask)).data
