"""Dataset loading, PPDB preprocessing, negative sampling and batching.

File formats (UTF-8, tab-separated, no header):

* NLI: ``label  premise  hypothesis``
* PPDB: ``target  paraphrase  relation  equivalence_score``
* STS / word similarity: ``gold_score  text_a  text_b``
* classification: ``label  text_a  text_b``
"""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import TASK_LABELS, Task
from .vocab import Vocabulary

log = logging.getLogger(__name__)

NLI_LABELS = TASK_LABELS[Task.NLI]
PTC_LABELS = TASK_LABELS[Task.PTC]
PPDB_RELATIONS = (
    "Equivalence",
    "ForwardEntailment",
    "ReverseEntailment",
    "Independent",
    "Exclusion",
    "OtherRelated",
)
_RELATION_TO_LABEL = {
    "Equivalence": "equivalence",
    "ForwardEntailment": "entailment",
    "ReverseEntailment": "entailment",
    "Independent": "independent",
}
MAX_RESAMPLES = 100
FIXTURES = Path(__file__).resolve().parent / "fixtures"


class SamplingError(RuntimeError):
    """The negative pool is too small to draw a non-colliding partner."""


@dataclass(frozen=True)
class NliExample:
    premise: str
    hypothesis: str
    label: str


@dataclass(frozen=True)
class PpdbRow:
    target: str
    paraphrase: str
    relation: str
    equivalence_score: float


@dataclass(frozen=True)
class PhrasePair:
    """A PPDB pair after label merging; ``label`` is one of the PTC classes."""

    target: str
    paraphrase: str
    label: str
    equivalence_score: float


@dataclass(frozen=True)
class PairExample:
    """Two texts, a task, and an integer label (plus gold score for eval records)."""

    text_a: str
    text_b: str
    task: Task
    label: int
    gold_score: float | None = None


@dataclass
class EvalRecord:
    text_a: str
    text_b: str
    gold: float
    predicted_cosine: float | None = None


def _read_tsv(path: str | Path) -> list[list[str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [row for row in csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE) if row]


def load_nli(paths: Sequence[str | Path]) -> tuple[list[NliExample], int]:
    """Concatenate NLI files in the given order.

    Returns the examples and the number of rejected rows (wrong column
    count, empty text, or a label outside entailment/contradiction/neutral).
    """
    examples: list[NliExample] = []
    skipped = 0
    for path in paths:
        for lineno, row in enumerate(_read_tsv(path), 1):
            if len(row) != 3:
                skipped += 1
                log.warning("%s:%d: expected 3 columns, got %d", path, lineno, len(row))
                continue
            label, premise, hypothesis = (c.strip() for c in row)
            label = label.lower()
            if label not in NLI_LABELS or not premise or not hypothesis:
                skipped += 1
                log.warning("%s:%d: rejected row (label %r)", path, lineno, label)
                continue
            examples.append(NliExample(premise, hypothesis, label))
    return examples, skipped


def load_ppdb(paths: Sequence[str | Path]) -> tuple[list[PpdbRow], int]:
    rows: list[PpdbRow] = []
    skipped = 0
    for path in paths:
        for lineno, row in enumerate(_read_tsv(path), 1):
            try:
                target, paraphrase, relation, score = (c.strip() for c in row)
                score = float(score)
            except ValueError:
                skipped += 1
                log.warning("%s:%d: malformed PPDB row", path, lineno)
                continue
            if relation not in PPDB_RELATIONS or not 0.0 <= score <= 1.0 or not target or not paraphrase:
                skipped += 1
                log.warning("%s:%d: rejected PPDB row (relation %r, score %r)", path, lineno, relation, score)
                continue
            rows.append(PpdbRow(target, paraphrase, relation, score))
    return rows, skipped


def load_scored_pairs(path: str | Path) -> list[EvalRecord]:
    """STS-style ``gold  text_a  text_b`` rows."""
    records = []
    for lineno, row in enumerate(_read_tsv(path), 1):
        if len(row) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
        records.append(EvalRecord(row[1], row[2], float(row[0])))
    return records


def load_labeled_pairs(path: str | Path, task: Task = Task.PI) -> list[PairExample]:
    """``label  text_a  text_b`` rows; labels may be integers or class names."""
    names = TASK_LABELS[task]
    out = []
    for lineno, row in enumerate(_read_tsv(path), 1):
        if len(row) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
        raw = row[0].strip().lower()
        label = names.index(raw) if raw in names else int(raw)
        if not 0 <= label < task.num_classes:
            raise ValueError(f"{path}:{lineno}: label {raw!r} invalid for {task.value}")
        out.append(PairExample(row[1], row[2], task, label))
    return out


def write_tsv(path: str | Path, rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in rows:
            fh.write("\t".join(str(c) for c in row) + "\n")


def preprocess_ppdb(rows: Iterable[PpdbRow | PhrasePair]) -> list[PhrasePair]:
    """Drop Exclusion / OtherRelated rows and merge both entailment directions.

    Already-processed :class:`PhrasePair` items pass through unchanged, so
    the function is idempotent.
    """
    out = []
    for row in rows:
        if isinstance(row, PhrasePair):
            out.append(row)
            continue
        label = _RELATION_TO_LABEL.get(row.relation)
        if label is None:
            continue
        out.append(PhrasePair(row.target, row.paraphrase, label, row.equivalence_score))
    return out


def balance_select(pairs: Sequence[PhrasePair], n_per_label: int, seed: int) -> list[PhrasePair]:
    """Sample ``n_per_label`` pairs of each PTC label without replacement.

    A label with fewer pairs contributes all of them (with a warning).
    Selected pairs keep their input order.
    """
    by_label: dict[str, list[int]] = defaultdict(list)
    for i, p in enumerate(pairs):
        by_label[p.label].append(i)
    rng = np.random.default_rng(seed)
    chosen: list[int] = []
    for label in PTC_LABELS:
        idx = by_label.get(label, [])
        if len(idx) < n_per_label:
            log.warning("label %s has %d pairs, fewer than %d; taking all", label, len(idx), n_per_label)
            chosen.extend(idx)
        else:
            chosen.extend(np.asarray(idx)[rng.choice(len(idx), n_per_label, replace=False)].tolist())
    return [pairs[i] for i in sorted(chosen)]


def ptc_examples(pairs: Sequence[PhrasePair]) -> list[PairExample]:
    return [
        PairExample(p.target, p.paraphrase, Task.PTC, PTC_LABELS.index(p.label), p.equivalence_score)
        for p in pairs
    ]


def negative_sample(positives: Sequence[tuple[str, str]], k: int = 3, seed: int = 0) -> list[PairExample]:
    """Paraphrase-identification data: each positive followed by ``k`` negatives.

    Negatives pair the target with paraphrase strings drawn uniformly from
    the deduplicated paraphrase pool, redrawing any that equal the target
    or its true paraphrase.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pool = sorted({s for _, s in positives})
    if len(pool) < 2:
        raise SamplingError(f"negative pool has {len(pool)} distinct paraphrases")
    rng = np.random.default_rng(seed)
    out: list[PairExample] = []
    for target, para in positives:
        out.append(PairExample(target, para, Task.PI, 1))
        for _ in range(k):
            for _attempt in range(MAX_RESAMPLES):
                cand = pool[int(rng.integers(len(pool)))]
                if cand != target and cand != para:
                    break
            else:
                raise SamplingError(
                    f"no valid negative for {target!r} after {MAX_RESAMPLES} draws"
                )
            out.append(PairExample(target, cand, Task.PI, 0))
    return out


def nli_examples(examples: Sequence[NliExample]) -> list[PairExample]:
    return [PairExample(e.premise, e.hypothesis, Task.NLI, NLI_LABELS.index(e.label)) for e in examples]


def build_phrase_testset(rows: Iterable[PpdbRow]) -> list[EvalRecord]:
    """Keep pairs where at least one side is multi-word; gold = equivalence score."""
    return [
        EvalRecord(r.target, r.paraphrase, r.equivalence_score)
        for r in rows
        if len(r.target.split()) >= 2 or len(r.paraphrase.split()) >= 2
    ]


def make_batches(examples: Sequence[PairExample], batch_size: int, seed: int,
                 task: Task | None = None) -> list[list[PairExample]]:
    """Shuffle (seeded) and cut into batches; the last short batch is kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if task is not None:
        task = Task(task)
        wrong = [e for e in examples if e.task is not task]
        if wrong:
            raise ValueError(f"{len(wrong)} examples are not {task.value} examples")
    elif len({e.task for e in examples}) > 1:
        raise ValueError("examples span several tasks; batches must be task-pure")
    order = np.random.default_rng(seed).permutation(len(examples))
    shuffled = [examples[i] for i in order]
    return [shuffled[i:i + batch_size] for i in range(0, len(shuffled), batch_size)]


@dataclass
class EncodedBatch:
    task: Task
    a_ids: np.ndarray
    a_mask: np.ndarray
    b_ids: np.ndarray
    b_mask: np.ndarray
    labels: np.ndarray


def encode_batch(batch: Sequence[PairExample], vocab: Vocabulary, max_len: int) -> EncodedBatch:
    """Tokenize both sides of every pair into id / mask matrices."""
    tasks = {e.task for e in batch}
    if len(tasks) != 1:
        raise ValueError("batch must contain exactly one task")
    a = [vocab.encode(e.text_a, max_len) for e in batch]
    b = [vocab.encode(e.text_b, max_len) for e in batch]
    return EncodedBatch(
        task=tasks.pop(),
        a_ids=np.array([s.ids for s in a]),
        a_mask=np.array([s.mask for s in a]),
        b_ids=np.array([s.ids for s in b]),
        b_mask=np.array([s.mask for s in b]),
        labels=np.array([e.label for e in batch]),
    )
