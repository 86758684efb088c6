"""Multi-task training: Adam with warmup + linear decay over a fixed task rotation."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .checkpoint import save_checkpoint
from .config import RunConfig
from .data import (EncodedBatch, PairExample, balance_select, encode_batch, load_nli, load_ppdb,
                   make_batches, negative_sample, nli_examples, preprocess_ppdb, ptc_examples)
from .model import Task, TwinModel
from .tensor import Tensor
from .vocab import Vocabulary, build_vocab

log = logging.getLogger(__name__)


class ScheduleError(ValueError):
    """Step index outside the schedule."""


class NonFiniteGradientError(FloatingPointError):
    """A parameter received a NaN or infinite gradient."""


def derive_seed(*keys: int) -> int:
    """Deterministic 32-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


def task_rotation(tasks: Sequence[Task], index: int) -> Task:
    """Task for the ``index``-th batch (0-based).

    With NLI enabled it takes every even slot and the phrase tasks share the
    odd slots in turn: NLI, PI, NLI, PTC, NLI, PI, ...
    """
    tasks = [Task(t) for t in tasks]
    if not tasks:
        raise ValueError("no tasks enabled")
    if Task.NLI not in tasks:
        return tasks[index % len(tasks)]
    others = [t for t in (Task.PI, Task.PTC) if t in tasks]
    if not others or index % 2 == 0:
        return Task.NLI
    return others[(index // 2) % len(others)]


@dataclass(frozen=True)
class Schedule:
    total_steps: int
    warmup_steps: int
    tasks: tuple[Task, ...] = (Task.NLI, Task.PI, Task.PTC)

    @classmethod
    def build(cls, total_steps: int, tasks=(Task.NLI, Task.PI, Task.PTC), warmup_fraction: float = 0.1):
        if total_steps < 1:
            raise ScheduleError("total_steps must be >= 1")
        warmup = math.ceil(warmup_fraction * total_steps)
        # keep a nonempty decay phase so the formula never divides by zero
        warmup = min(max(warmup, 1), total_steps - 1) if total_steps > 1 else 1
        return cls(total_steps, warmup, tuple(Task(t) for t in tasks))

    def task_at(self, index: int) -> Task:
        return task_rotation(self.tasks, index)


def lr_at(step: int, schedule: Schedule, base_lr: float) -> float:
    """Linear warmup to ``base_lr`` at ``warmup_steps``, then linear decay to 0 at ``total_steps``."""
    total, warm = schedule.total_steps, schedule.warmup_steps
    if not 0 <= step <= total:
        raise ScheduleError(f"step {step} outside [0, {total}]")
    if step < warm:
        return base_lr * step / warm
    if total == warm:
        return 0.0 if step == total else base_lr
    return base_lr * (total - step) / (total - warm)


@dataclass
class Adam:
    """Adam with bias correction; gradients are cleared after every update."""

    params: list[Tensor]
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in self.params]
            self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float) -> None:
        grads = []
        for p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                bad = int(np.count_nonzero(~np.isfinite(g)))
                raise NonFiniteGradientError(f"{bad} non-finite gradient entries in {p.name or p!r}")
            grads.append(g)
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.zero_grad()


def adam_step(params: Sequence[Tensor], state: Adam, lr: float) -> None:
    """Functional alias for :meth:`Adam.step` over ``state.params``."""
    if [id(p) for p in params] != [id(p) for p in state.params]:
        raise ValueError("optimizer state was built for a different parameter list")
    state.step(lr)


def batch_loss(model: TwinModel, batch: EncodedBatch, training: bool, rng=None) -> Tensor:
    logits = model.pair_logits(batch.task, batch.a_ids, batch.a_mask, batch.b_ids, batch.b_mask,
                               training=training, rng=rng)
    return T.cross_entropy(logits, batch.labels)


def train_step(model: TwinModel, batch: EncodedBatch, optimizer: Adam, lr: float,
               rng: np.random.Generator | None = None) -> float:
    """One forward/backward pass on a task-pure batch followed by one Adam update."""
    loss = batch_loss(model, batch, training=True, rng=rng)
    loss.backward()
    optimizer.step(lr)
    return loss.item()


def predict(model: TwinModel, examples: Sequence[PairExample], vocab: Vocabulary, max_len: int,
            batch_size: int = 64) -> np.ndarray:
    """Argmax class per example (ties go to the lower class index)."""
    preds = []
    for i in range(0, len(examples), batch_size):
        b = encode_batch(examples[i:i + batch_size], vocab, max_len)
        probs = model.predict_proba(b.task, b.a_ids, b.a_mask, b.b_ids, b.b_mask)
        preds.append(np.argmax(probs, axis=1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def accuracy(model: TwinModel, examples: Sequence[PairExample], vocab: Vocabulary, max_len: int) -> float:
    if not examples:
        raise ValueError("accuracy of an empty example set is undefined")
    gold = np.array([e.label for e in examples])
    return float(np.mean(predict(model, examples, vocab, max_len) == gold))


class TaskStream:
    """Endless supply of batches for one task; each exhausted epoch reshuffles.

    ``source(epoch)`` returns the examples for that epoch, which lets the
    paraphrase task draw fresh negatives per epoch.
    """

    def __init__(self, task: Task, source: Callable[[int], Sequence[PairExample]],
                 batch_size: int, seed: int):
        self.task = Task(task)
        self.source = source
        self.batch_size = batch_size
        self.seed = seed
        self.epoch = -1
        self._batches: list[list[PairExample]] = []
        self.current: Sequence[PairExample] = []

    @classmethod
    def fixed(cls, task: Task, examples: Sequence[PairExample], batch_size: int, seed: int):
        return cls(task, lambda epoch: examples, batch_size, seed)

    def next_batch(self) -> list[PairExample]:
        if not self._batches:
            self.epoch += 1
            self.current = self.source(self.epoch)
            if not self.current:
                raise ValueError(f"no examples for task {self.task.value}")
            batches = make_batches(self.current, self.batch_size,
                                   derive_seed(self.seed, self.epoch), self.task)
            self._batches = batches[::-1]
        return self._batches.pop()


def pi_stream(positives: Sequence[tuple[str, str]], k: int, batch_size: int, seed: int,
              resample: bool = True) -> TaskStream:
    if resample:
        def source(epoch):
            return negative_sample(positives, k, derive_seed(seed, 1000 + epoch))
    else:
        fixed = negative_sample(positives, k, derive_seed(seed, 1000))

        def source(epoch):
            return fixed

    return TaskStream(Task.PI, source, batch_size, derive_seed(seed, 2))


METRICS_HEADER = ("step", "task", "loss", "lr")


@dataclass
class TrainResult:
    metrics: list[tuple[int, str, float, float]]
    checkpoints: list[Path]
    best_checkpoint: Path | None = None
    best_valid_accuracy: float | None = None


def run(model: TwinModel, streams: dict[Task, TaskStream], schedule: Schedule, cfg: RunConfig,
        vocab: Vocabulary, out_dir: str | Path | None = None,
        valid_nli: Sequence[PairExample] | None = None) -> TrainResult:
    """Train for ``schedule.total_steps`` steps.

    Steps are numbered from 1; step ``s`` uses ``lr_at(s)`` and trains the
    task ``schedule.task_at(s - 1)``. When ``out_dir`` is given, the metrics
    CSV (prefixed with ``# key = value`` lines echoing ``cfg``) and
    checkpoints are written there.
    """
    missing = [t.value for t in schedule.tasks if t not in streams]
    if missing:
        raise ValueError(f"no data stream for tasks {missing}")
    max_lens = {Task.NLI: cfg.sentence_max_len, Task.PI: cfg.phrase_max_len, Task.PTC: cfg.phrase_max_len}
    optimizer = Adam(model.parameters(), cfg.beta1, cfg.beta2, cfg.eps)
    dropout_rng = np.random.default_rng(derive_seed(cfg.seed, 7))
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    result = TrainResult(metrics=[], checkpoints=[])

    def checkpoint(step: int, name: str) -> Path | None:
        if out is None:
            return None
        path = out / name
        save_checkpoint(path, model, vocab, meta={"step": step})
        result.checkpoints.append(path)
        if valid_nli:
            acc = accuracy(model, valid_nli, vocab, cfg.sentence_max_len)
            log.info("step %d: validation NLI accuracy %.4f", step, acc)
            if result.best_valid_accuracy is None or acc > result.best_valid_accuracy:
                result.best_valid_accuracy = acc
                best = out / "best.ckpt"
                save_checkpoint(best, model, vocab, meta={"step": step, "valid_nli_accuracy": acc})
                result.best_checkpoint = best
        return path

    for step in range(1, schedule.total_steps + 1):
        task = schedule.task_at(step - 1)
        lr = lr_at(step, schedule, cfg.lr)
        batch = encode_batch(streams[task].next_batch(), vocab, max_lens[task])
        loss = train_step(model, batch, optimizer, lr, dropout_rng)
        result.metrics.append((step, task.value, loss, lr))
        if cfg.checkpoint_every and step % cfg.checkpoint_every == 0 and step != schedule.total_steps:
            checkpoint(step, f"step{step:07d}.ckpt")
    checkpoint(schedule.total_steps, "final.ckpt")

    if out is not None:
        (out / "metrics.csv").write_text(format_metrics(result.metrics, cfg), encoding="utf-8")
        vocab.save(out / "vocab.txt")
    return result


def format_metrics(rows, cfg: RunConfig | None = None) -> str:
    buf = io.StringIO()
    if cfg is not None:
        for key, value in cfg.items():
            buf.write(f"# {key} = {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for step, task, loss, lr in rows:
        writer.writerow((step, task, repr(float(loss)), repr(float(lr))))
    return buf.getvalue()


def read_metrics(path: str | Path) -> list[tuple[int, str, float, float]]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    if tuple(header) != METRICS_HEADER:
        raise ValueError(f"unexpected metrics header {header}")
    return [(int(s), t, float(l), float(r)) for s, t, l, r in reader]


@dataclass
class TrainingSetup:
    model: TwinModel
    vocab: Vocabulary
    streams: dict[Task, TaskStream]
    schedule: Schedule
    valid_nli: list[PairExample]
    ptc: list[PairExample]
    positives: list[tuple[str, str]]


def build_training(cfg: RunConfig, vocab: Vocabulary | None = None) -> TrainingSetup:
    """Load and preprocess every dataset named in ``cfg`` and build the model."""
    tasks = set(cfg.tasks)
    nli, skipped = load_nli(cfg.nli_train) if cfg.nli_train else ([], 0)
    if skipped:
        log.warning("skipped %d malformed NLI rows", skipped)
    rows, skipped = load_ppdb(cfg.ppdb_train) if cfg.ppdb_train else ([], 0)
    if skipped:
        log.warning("skipped %d malformed PPDB rows", skipped)
    pairs = preprocess_ppdb(rows)
    if pairs:
        counts = {lab: sum(p.label == lab for p in pairs) for lab in set(p.label for p in pairs)}
        n = cfg.n_per_label or min(counts.values())
        pairs = balance_select(pairs, n, derive_seed(cfg.data_seed, 3))
    valid = []
    if cfg.nli_valid:
        valid_raw, _ = load_nli([cfg.nli_valid])
        valid = nli_examples(valid_raw)

    if vocab is None:
        if cfg.vocab:
            vocab = Vocabulary.load(cfg.vocab)
        else:
            texts = [t for e in nli for t in (e.premise, e.hypothesis)]
            texts += [t for r in rows for t in (r.target, r.paraphrase)]
            vocab = build_vocab(texts)

    model = TwinModel(cfg.encoder_config(len(vocab)), pooling=cfg.pooling, features=cfg.features,
                      head_bias=cfg.head_bias, seed=cfg.seed)
    streams: dict[Task, TaskStream] = {}
    ptc = ptc_examples(pairs)
    positives = [(p.target, p.paraphrase) for p in pairs]
    if Task.NLI in tasks:
        streams[Task.NLI] = TaskStream.fixed(Task.NLI, nli_examples(nli), cfg.batch_size,
                                             derive_seed(cfg.data_seed, 0))
    if Task.PTC in tasks:
        streams[Task.PTC] = TaskStream.fixed(Task.PTC, ptc, cfg.batch_size, derive_seed(cfg.data_seed, 4))
    if Task.PI in tasks:
        streams[Task.PI] = pi_stream(positives, cfg.k, cfg.batch_size, derive_seed(cfg.data_seed, 5),
                                     resample=cfg.resample_negatives)
    schedule = Schedule.build(cfg.total_steps, cfg.tasks, cfg.warmup_fraction)
    return TrainingSetup(model, vocab, streams, schedule, valid, ptc, positives)
