"""Command-line entry point: ``twinrep <subcommand> ...``.

Exit codes: 0 success, 2 configuration or I/O problem, 3 checkpoint and
vocabulary incompatible, 4 an evaluation produced an undefined correlation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, RunConfig
from .data import (balance_select, build_phrase_testset, load_labeled_pairs, load_nli, load_ppdb,
                   load_scored_pairs, preprocess_ppdb, write_tsv)
from .encoder import VocabularyError
from .evaluation import (DegenerateVectorError, EvalReport, UndefinedCorrelationError, embed_texts,
                         evaluate_classification, evaluate_similarity, reports_to_csv, reports_to_table)
from .model import Task
from .trainer import build_training, derive_seed, run
from .vocab import PHRASE_MAX_LEN, SENTENCE_MAX_LEN, Vocabulary, build_vocab

log = logging.getLogger("twinrep")

EXIT_OK, EXIT_CONFIG, EXIT_CHECKPOINT, EXIT_DEGENERATE = 0, 2, 3, 4
DATASET_KINDS = ("similarity", "phrase", "ppdb", "classification")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def _read_lines(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


# ---------------------------------------------------------------- build-vocab

def cmd_build_vocab(args) -> int:
    texts: list[str] = []
    for path in args.text:
        texts += _read_lines(path)
    if args.nli:
        examples, _ = load_nli(args.nli)
        texts += [t for e in examples for t in (e.premise, e.hypothesis)]
    if args.ppdb:
        rows, _ = load_ppdb(args.ppdb)
        texts += [t for r in rows for t in (r.target, r.paraphrase)]
    if not (args.text or args.nli or args.ppdb):
        raise CliError("build-vocab: give at least one corpus (positional, --nli or --ppdb)")
    vocab = build_vocab(texts, min_count=args.min_count, max_size=args.max_size)
    vocab.save(args.out)
    print(f"wrote {len(vocab)} ids ({len(vocab.tokens)} tokens + 4 reserved) to {args.out}")
    return EXIT_OK


# --------------------------------------------------------------- prepare-ppdb

def cmd_prepare_ppdb(args) -> int:
    rows, skipped = load_ppdb(args.train)
    if skipped:
        log.warning("skipped %d malformed training rows", skipped)
    pairs = preprocess_ppdb(rows)
    if not pairs:
        raise CliError(f"prepare-ppdb: no usable pairs in {', '.join(args.train)}")
    counts = {lab: sum(p.label == lab for p in pairs) for lab in {p.label for p in pairs}}
    n = args.n_per_label or min(counts.values())
    pairs = balance_select(pairs, n, derive_seed(args.seed, 3))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_tsv(out / "ptc_train.tsv", [(p.label, p.target, p.paraphrase) for p in pairs])
    write_tsv(out / "pi_positives.tsv", [(p.target, p.paraphrase) for p in pairs])
    print(f"ptc_train.tsv: {len(pairs)} pairs ({n} per label)")
    print(f"pi_positives.tsv: {len(pairs)} positives")
    if args.test:
        test_rows, _ = load_ppdb(args.test)
        records = build_phrase_testset(test_rows)
        write_tsv(out / "phrase_test.tsv", [(repr(r.gold), r.text_a, r.text_b) for r in records])
        print(f"phrase_test.tsv: {len(records)} of {len(test_rows)} rows kept")
    return EXIT_OK


# ---------------------------------------------------------------------- train

OVERRIDES = ("tasks", "pooling", "features", "k", "n_per_label", "batch_size", "total_steps", "lr",
             "seed", "data_seed", "out_dir", "checkpoint_every", "num_layers", "num_heads",
             "hidden_dim", "ffn_dim", "dropout", "share_layers")


def load_run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(item, "expected key=value")
        cfg.set(key, value)
    for key in OVERRIDES:
        value = getattr(args, key, None)
        if value is not None:
            cfg.set(key, str(value))
    return cfg.validate()


def cmd_train(args) -> int:
    cfg = load_run_config(args)
    setup = build_training(cfg)
    result = run(setup.model, setup.streams, setup.schedule, cfg, setup.vocab, cfg.out_dir,
                 valid_nli=setup.valid_nli)
    last = result.metrics[-1]
    print(f"trained {len(result.metrics)} steps on {','.join(t.value for t in cfg.tasks)}; "
          f"last loss {last[2]:.4f}")
    print(f"wrote {Path(cfg.out_dir) / 'final.ckpt'} and {Path(cfg.out_dir) / 'metrics.csv'}")
    if result.best_valid_accuracy is not None:
        print(f"best validation NLI accuracy {result.best_valid_accuracy:.4f}")
    return EXIT_OK


# --------------------------------------------------------------------- encode

def _open_model(checkpoint: str, vocab_path: str | None):
    vocab_file = Path(vocab_path) if vocab_path else Path(checkpoint).parent / "vocab.txt"
    vocab = Vocabulary.load(vocab_file)
    model, _ = load_checkpoint(checkpoint, vocab)
    return model, vocab


def cmd_encode(args) -> int:
    model, vocab = _open_model(args.checkpoint, args.vocab)
    texts = _read_lines(args.input)
    vectors = embed_texts(model, vocab, texts, args.max_len)
    lines = ["\t".join(repr(float(x)) for x in row) for row in vectors]
    body = "".join(line + "\n" for line in lines)
    if args.out:
        Path(args.out).write_text(body, encoding="utf-8")
    else:
        sys.stdout.write(body)
    return EXIT_OK


# ----------------------------------------------------------------------- eval

def read_suite(path: str) -> list[tuple[str, str, str]]:
    """Manifest rows ``name <TAB> kind <TAB> path``; paths relative to the manifest."""
    base = Path(path).parent
    entries = []
    for lineno, raw in enumerate(_read_lines(path), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split("\t")]
        if len(parts) != 3 or parts[1] not in DATASET_KINDS:
            raise CliError(f"{path}:{lineno}: expected 'name<TAB>kind<TAB>path' with kind in "
                           f"{'/'.join(DATASET_KINDS)}")
        name, kind, target = parts
        target_path = Path(target)
        entries.append((name, kind, str(target_path if target_path.is_absolute() else base / target_path)))
    if not entries:
        raise CliError(f"{path}: empty suite")
    return entries


def evaluate_dataset(model, vocab, name: str, kind: str, path: str, max_len: int | None) -> EvalReport:
    if kind == "similarity":
        return evaluate_similarity(model, vocab, load_scored_pairs(path), name, max_len or SENTENCE_MAX_LEN)
    if kind == "phrase":
        return evaluate_similarity(model, vocab, load_scored_pairs(path), name, max_len or PHRASE_MAX_LEN)
    if kind == "ppdb":
        rows, _ = load_ppdb([path])
        return evaluate_similarity(model, vocab, build_phrase_testset(rows), name, max_len or PHRASE_MAX_LEN)
    return evaluate_classification(model, vocab, load_labeled_pairs(path, Task.PI), name, Task.PI,
                                   max_len or SENTENCE_MAX_LEN)


def cmd_eval(args) -> int:
    if bool(args.suite) == bool(args.dataset):
        raise CliError("eval: give exactly one of --dataset or --suite")
    entries = read_suite(args.suite) if args.suite else [
        (args.name or Path(args.dataset).stem, args.kind, args.dataset)]
    model, vocab = _open_model(args.checkpoint, args.vocab)
    reports, failed = [], []
    for name, kind, path in entries:
        try:
            reports.append(evaluate_dataset(model, vocab, name, kind, path, args.max_len))
        except (UndefinedCorrelationError, DegenerateVectorError) as exc:
            failed.append(name)
            print(f"twinrep: {name}: {exc}", file=sys.stderr)
    csv_text = reports_to_csv(reports)
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
    sys.stdout.write(reports_to_table(reports) if args.table else csv_text)
    return EXIT_DEGENERATE if failed else EXIT_OK


# ---------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twinrep", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-vocab", help="build a vocabulary file from corpora")
    b.add_argument("text", nargs="*", help="plain-text corpora, one text per line")
    b.add_argument("--nli", nargs="+", default=[], help="NLI TSV files (premise and hypothesis columns)")
    b.add_argument("--ppdb", nargs="+", default=[], help="PPDB TSV files (both phrase columns)")
    b.add_argument("--out", required=True)
    b.add_argument("--min-count", type=int, default=1)
    b.add_argument("--max-size", type=int, default=None)
    b.set_defaults(func=cmd_build_vocab)

    pp = sub.add_parser("prepare-ppdb", help="write PTC training, PI positive and phrase test files")
    pp.add_argument("--train", nargs="+", required=True)
    pp.add_argument("--test", nargs="+", default=[])
    pp.add_argument("--n-per-label", type=int, default=0, help="0 keeps the largest balanced size")
    pp.add_argument("--seed", type=int, default=0)
    pp.add_argument("--out-dir", required=True)
    pp.set_defaults(func=cmd_prepare_ppdb)

    t = sub.add_parser("train", help="train a model from a key = value config")
    t.add_argument("config", nargs="?", help="config file; paths inside are relative to it")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    t.add_argument("--tasks", help="comma-separated subset of nli,pi,ptc")
    t.add_argument("--pooling", choices=("mean", "max", "cls"))
    t.add_argument("--features", help='e.g. "u,v,|u-v|"')
    t.add_argument("--k", type=int)
    t.add_argument("--n-per-label", dest="n_per_label", type=int)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--total-steps", dest="total_steps", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--data-seed", dest="data_seed", type=int)
    t.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    t.add_argument("--num-layers", dest="num_layers", type=int)
    t.add_argument("--num-heads", dest="num_heads", type=int)
    t.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    t.add_argument("--ffn-dim", dest="ffn_dim", type=int)
    t.add_argument("--dropout", type=float)
    t.add_argument("--share-layers", dest="share_layers", choices=("true", "false"))
    t.add_argument("--out-dir", dest="out_dir")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("encode", help="write one pooled embedding per input line")
    e.add_argument("checkpoint")
    e.add_argument("input")
    e.add_argument("--vocab", help="defaults to vocab.txt next to the checkpoint")
    e.add_argument("--out")
    e.add_argument("--max-len", type=int, default=SENTENCE_MAX_LEN)
    e.set_defaults(func=cmd_encode)

    v = sub.add_parser("eval", help="cosine/Spearman or accuracy evaluation")
    v.add_argument("checkpoint")
    v.add_argument("--vocab", help="defaults to vocab.txt next to the checkpoint")
    v.add_argument("--dataset", help="a single dataset file")
    v.add_argument("--kind", choices=DATASET_KINDS, default="similarity")
    v.add_argument("--name")
    v.add_argument("--suite", help="manifest of name<TAB>kind<TAB>path lines")
    v.add_argument("--max-len", type=int, default=None)
    v.add_argument("--out", help="also write the CSV here")
    v.add_argument("--table", action="store_true", help="print an aligned table instead of CSV")
    v.set_defaults(func=cmd_eval)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"twinrep: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointError, VocabularyError) as exc:
        print(f"twinrep: incompatible checkpoint: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except CliError as exc:
        print(f"twinrep: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        where = exc.filename if exc.filename is not None else ""
        print(f"twinrep: cannot access {where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"twinrep: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
