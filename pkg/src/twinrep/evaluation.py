"""Cosine similarity, Spearman correlation and the evaluation protocol."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .data import EvalRecord, PairExample
from .model import Task, TwinModel
from .tensor import Tensor
from .trainer import predict
from .vocab import SENTENCE_MAX_LEN, Vocabulary


class DegenerateVectorError(ValueError):
    """Cosine of a zero-norm vector."""


class UndefinedCorrelationError(ValueError):
    """Fewer than two points, or a sequence whose ranks are all tied."""


@dataclass(frozen=True)
class EvalReport:
    dataset: str
    metric: str
    value: float
    n: int


def cosine(u, v) -> float:
    u = u.data if isinstance(u, Tensor) else np.asarray(u, dtype=np.float64)
    v = v.data if isinstance(v, Tensor) else np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateVectorError("cosine undefined for a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def average_ranks(x: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties sharing the mean of the positions they span."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    sorted_x = x[order]
    ranks = np.empty(len(x))
    start = 0
    n = len(x)
    while start < n:
        end = start
        while end + 1 < n and sorted_x[end + 1] == sorted_x[start]:
            end += 1
        ranks[order[start:end + 1]] = 0.5 * (start + end) + 1.0
        start = end + 1
    return ranks


def spearman(pred: Sequence[float], gold: Sequence[float]) -> float:
    """Pearson correlation of average ranks."""
    if len(pred) != len(gold):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(gold)}")
    if len(pred) < 2:
        raise UndefinedCorrelationError("need at least two points")
    rp, rg = average_ranks(pred), average_ranks(gold)
    rp -= rp.mean()
    rg -= rg.mean()
    denom = np.sqrt(np.dot(rp, rp) * np.dot(rg, rg))
    if denom == 0.0:
        raise UndefinedCorrelationError("all values tied in at least one sequence")
    return float(np.clip(np.dot(rp, rg) / denom, -1.0, 1.0))


def embed_texts(model: TwinModel, vocab: Vocabulary, texts: Sequence[str],
                max_len: int = SENTENCE_MAX_LEN, batch_size: int = 64) -> np.ndarray:
    """Pooled eval-mode embeddings, one row per text, each encoded on its own."""
    rows = []
    with T.no_grad():
        for i in range(0, len(texts), batch_size):
            seqs = [vocab.encode(t, max_len) for t in texts[i:i + batch_size]]
            ids = np.array([s.ids for s in seqs])
            mask = np.array([s.mask for s in seqs])
            rows.append(model.embed(ids, mask, training=False).data)
    if not rows:
        return np.zeros((0, model.cfg.hidden_dim))
    return np.concatenate(rows, axis=0)


def evaluate_similarity(model: TwinModel, vocab: Vocabulary, records: Sequence[EvalRecord],
                        name: str = "similarity", max_len: int = SENTENCE_MAX_LEN) -> EvalReport:
    """Fill ``predicted_cosine`` on every record and report Spearman against gold."""
    ua = embed_texts(model, vocab, [r.text_a for r in records], max_len)
    ub = embed_texts(model, vocab, [r.text_b for r in records], max_len)
    for r, a, b in zip(records, ua, ub):
        r.predicted_cosine = cosine(a, b)
    value = spearman([r.predicted_cosine for r in records], [r.gold for r in records])
    return EvalReport(name, "spearman", value, len(records))


def evaluate_classification(model: TwinModel, vocab: Vocabulary, examples: Sequence[PairExample],
                            name: str = "classification", task: Task = Task.PI,
                            max_len: int = SENTENCE_MAX_LEN) -> EvalReport:
    """Accuracy of the task head's argmax (lower class index wins ties)."""
    task = Task(task)
    if any(e.task is not task for e in examples):
        raise ValueError(f"all examples must be {task.value} examples")
    if not examples:
        raise ValueError("no examples to evaluate")
    preds = predict(model, examples, vocab, max_len)
    gold = np.array([e.label for e in examples])
    return EvalReport(name, "accuracy", float(np.mean(preds == gold)), len(examples))


def reports_to_csv(reports: Sequence[EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("dataset", "metric", "value", "n"))
    for r in reports:
        w.writerow((r.dataset, r.metric, f"{r.value:.6f}", r.n))
    return buf.getvalue()


def reports_to_table(reports: Sequence[EvalReport]) -> str:
    rows = [("dataset", "metric", "value", "n")]
    rows += [(r.dataset, r.metric, f"{100 * r.value:.1f}", str(r.n)) for r in reports]
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = []
    for j, row in enumerate(rows):
        cells = [row[0].ljust(widths[0]), row[1].ljust(widths[1]),
                 row[2].rjust(widths[2]), row[3].rjust(widths[3])]
        lines.append("  ".join(cells))
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
