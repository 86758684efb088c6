"""Binary checkpoints: a text header followed by little-endian float64 payloads.

Layout::

    TWINREP-CHECKPOINT 1
    model <json: encoder config, pooling, features, head_bias, seed>
    vocab <sha256 of the vocabulary>
    meta <json, free-form>
    tensor <name> <dim,dim,...> <byte offset into payload>
    ...
    end
    <payload bytes>
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .encoder import EncoderConfig
from .model import FeatureMode, TwinModel
from .vocab import Vocabulary

MAGIC = "TWINREP-CHECKPOINT 1"


class CheckpointError(ValueError):
    """Malformed checkpoint or one that does not match the given vocabulary."""


def save_checkpoint(path: str | Path, model: TwinModel, vocab: Vocabulary, meta: dict | None = None) -> None:
    lines = [
        MAGIC,
        "model " + json.dumps(model.describe(), sort_keys=True),
        "vocab " + vocab.fingerprint(),
        "meta " + json.dumps(meta or {}, sort_keys=True),
    ]
    chunks = []
    offset = 0
    for name, p in model.named_parameters():
        raw = np.ascontiguousarray(p.data, dtype="<f8").tobytes()
        lines.append(f"tensor {name} {','.join(map(str, p.shape))} {offset}")
        chunks.append(raw)
        offset += len(raw)
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        for raw in chunks:
            fh.write(raw)


def read_header(path: str | Path) -> tuple[dict, str, dict, list[tuple[str, tuple[int, ...], int]], int]:
    blob = Path(path).read_bytes()
    marker = b"\nend\n"
    cut = blob.find(marker)
    if not blob.startswith(MAGIC.encode()) or cut < 0:
        raise CheckpointError(f"{path}: not a checkpoint file")
    header = blob[:cut].decode("utf-8").split("\n")
    model_desc, vocab_hash, meta = None, None, {}
    tensors = []
    for line in header[1:]:
        kind, _, rest = line.partition(" ")
        try:
            if kind == "model":
                model_desc = json.loads(rest)
            elif kind == "vocab":
                vocab_hash = rest.strip()
            elif kind == "meta":
                meta = json.loads(rest)
            elif kind == "tensor":
                name, shape, off = rest.split(" ")
                tensors.append((name, tuple(int(s) for s in shape.split(",") if s), int(off)))
            else:
                raise CheckpointError(f"{path}: unknown header line {line!r}")
        except ValueError as exc:
            if isinstance(exc, CheckpointError):
                raise
            raise CheckpointError(f"{path}: malformed header line {line!r}") from None
    if model_desc is None or vocab_hash is None:
        raise CheckpointError(f"{path}: header lacks model or vocab line")
    return model_desc, vocab_hash, meta, tensors, cut + len(marker)


def load_checkpoint(path: str | Path, vocab: Vocabulary | None = None) -> tuple[TwinModel, dict]:
    """Rebuild the model stored at ``path``.

    When ``vocab`` is given its fingerprint and size must match the
    checkpoint, otherwise :class:`CheckpointError` is raised.
    """
    desc, vocab_hash, meta, tensors, start = read_header(path)
    try:
        cfg = EncoderConfig(**desc["encoder"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: bad model description ({exc})") from None
    if vocab is not None:
        if vocab.fingerprint() != vocab_hash:
            raise CheckpointError(f"{path}: vocabulary fingerprint does not match checkpoint")
        if len(vocab) != cfg.vocab_size:
            raise CheckpointError(f"{path}: vocabulary size {len(vocab)} != {cfg.vocab_size}")
    model = TwinModel(
        cfg,
        pooling=desc["pooling"],
        features=FeatureMode.parse(desc["features"]),
        head_bias=desc["head_bias"],
        seed=desc.get("seed", 0),
    )
    params = dict(model.named_parameters())
    stored = {name for name, _, _ in tensors}
    if stored != set(params):
        missing = sorted(set(params) ^ stored)
        raise CheckpointError(f"{path}: tensor set differs from model ({missing[:3]}...)")
    blob = Path(path).read_bytes()[start:]
    for name, shape, off in tensors:
        p = params[name]
        if shape != p.shape:
            raise CheckpointError(f"{path}: {name} has shape {shape}, model expects {p.shape}")
        n = int(np.prod(shape)) if shape else 1
        if off < 0 or off + 8 * n > len(blob):
            raise CheckpointError(f"{path}: payload truncated at {name}")
        p.data[...] = np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(shape)
    return model, meta
