"""Command-line entry point: prepare, train, eval, summarize.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Every run is deterministic under its seed, and no artifact contains
timestamps, so identical invocations produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .asts import AstError, parse_json_ast
from .checkpoint import CheckpointError
from .corpus import (AST_SPECIALS, COMMENT_SPECIALS, CorpusError, Vocab,
                     build_vocab, load_split, prepare_records, read_corpus,
                     save_split, split_dataset)
from .metrics import MetricError, evaluate_corpus
from .minilang import MiniSyntaxError, parse_mini_source
from .model import ENCODER_KINDS, ModelConfig, Summarizer
from .tensor import NonFiniteError
from .training import model_from_checkpoint, train_model

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

AST_VOCAB_FILE = "ast_vocab.txt"
COMMENT_VOCAB_FILE = "comment_vocab.txt"
SPLIT_FILES = {"train": "train.jsonl", "valid": "valid.jsonl", "test": "test.jsonl"}
PREPARE_MANIFEST = "prepare_manifest.json"

DEFAULT_BUCKETS = {
    "comment_length": [1, 5, 10, 15, 20, 30, 1000],
    "node_count": [1, 20, 40, 60, 80, 101],
    "max_degree": [0, 2, 3, 4, 6, 8, 1000],
}

DATA_ERRORS = (CorpusError, AstError, MiniSyntaxError, CheckpointError,
               MetricError, FileNotFoundError, ValueError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _parse_ratios(text: str):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise UsageError(f"--ratios wants three comma-separated numbers, got {text!r}")
    return tuple(parts)


def cmd_prepare(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    samples, drops = prepare_records(read_corpus(args.corpus),
                                     max_nodes=args.max_nodes)
    if not samples:
        raise CorpusError("no samples survived filtering")
    train, valid, test = split_dataset(samples, args.ratios, args.seed)
    if not train:
        raise CorpusError("training split is empty; adjust ratios")
    ast_vocab, comment_vocab = build_vocab(
        train, id_limit=args.id_limit, literal_limit=args.literal_limit,
        comment_limit=args.comment_limit, syntax_from=samples)
    ast_vocab.save(out / AST_VOCAB_FILE)
    comment_vocab.save(out / COMMENT_VOCAB_FILE)
    for name, split in zip(("train", "valid", "test"), (train, valid, test)):
        save_split(out / SPLIT_FILES[name], split)
    manifest = {
        "seed": args.seed,
        "ratios": list(args.ratios),
        "limits": {"max_nodes": args.max_nodes, "id_limit": args.id_limit,
                   "literal_limit": args.literal_limit,
                   "comment_limit": args.comment_limit},
        "counts": {"kept": len(samples), "train": len(train),
                   "valid": len(valid), "test": len(test)},
        "drops": drops,
        "ast_vocab_digest": ast_vocab.digest(),
        "comment_vocab_digest": comment_vocab.digest(),
    }
    _write_json(out / PREPARE_MANIFEST, manifest)
    print(f"kept {len(samples)} samples "
          f"(train {len(train)}, valid {len(valid)}, test {len(test)})")
    for reason in sorted(drops):
        print(f"dropped {drops[reason]}: {reason}")
    return EXIT_OK


def _load_config_file(path) -> dict:
    """Key=value lines; # starts a comment.  Values use the config field types."""
    out = {}
    fields = ModelConfig.__dataclass_fields__
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CorpusError(f"{path}:{line_no}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in fields:
                raise CorpusError(f"{path}:{line_no}: unknown config key {key!r}")
            kind = fields[key].type
            if kind in ("int", int):
                out[key] = int(value)
            elif kind in ("float", float):
                out[key] = float(value)
            else:
                out[key] = value
    return out


def _build_config(args) -> ModelConfig:
    values = {}
    if args.config:
        values.update(_load_config_file(args.config))
    for key in ("encoder_kind", "layers", "dim", "dropout", "lr", "batch",
                "epochs", "max_decode_len", "beam", "seed"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    cfg = ModelConfig.from_dict(values)
    return cfg


def _load_vocabs(data_dir):
    data = Path(data_dir)
    ast_vocab = Vocab.load(data / AST_VOCAB_FILE, AST_SPECIALS)
    comment_vocab = Vocab.load(data / COMMENT_VOCAB_FILE, COMMENT_SPECIALS)
    return ast_vocab, comment_vocab


def cmd_train(args) -> int:
    cfg = _build_config(args)
    ast_vocab, comment_vocab = _load_vocabs(args.data)
    train = load_split(Path(args.data) / SPLIT_FILES["train"])
    valid = load_split(Path(args.data) / SPLIT_FILES["valid"])
    if not train:
        raise CorpusError("empty training split")
    model = Summarizer(cfg, ast_vocab, comment_vocab)
    result = train_model(model, train, valid, args.out)
    last = result.epochs[-1] if result.epochs else None
    if last is not None:
        print(f"trained {len(result.epochs)} epochs, "
              f"final loss {last.train_loss:.4f}")
    if result.best_epoch is not None:
        print(f"best validation BLEU-4 {result.best_bleu4:.4f} "
              f"at epoch {result.best_epoch}")
    return EXIT_OK


def _load_buckets(path):
    if path is None:
        return DEFAULT_BUCKETS
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    unknown = set(data) - set(DEFAULT_BUCKETS)
    if unknown:
        raise CorpusError(f"unknown bucket dimensions: {sorted(unknown)}")
    return {k: [int(v) for v in vs] for k, vs in data.items()}


def _bucket_csv(path, dim, rows, config) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
        fh.write(f"{dim}_lo,{dim}_hi,count,bleu_4\n")
        for row in rows:
            score = "" if row["bleu_4"] is None else repr(row["bleu_4"])
            fh.write(f"{row['lo']},{row['hi']},{row['count']},{score}\n")


def cmd_eval(args) -> int:
    model = model_from_checkpoint(args.checkpoint)
    data_ast, data_comment = _load_vocabs(args.data)
    if data_ast.digest() != model.ast_vocab.digest():
        raise CorpusError(
            f"ast vocabulary mismatch: checkpoint {model.ast_vocab.digest()} "
            f"vs data {data_ast.digest()}")
    if data_comment.digest() != model.comment_vocab.digest():
        raise CorpusError(
            f"comment vocabulary mismatch: checkpoint "
            f"{model.comment_vocab.digest()} vs data {data_comment.digest()}")
    if args.split not in SPLIT_FILES:
        raise UsageError(f"--split must be one of {sorted(SPLIT_FILES)}")
    samples = load_split(Path(args.data) / SPLIT_FILES[args.split])
    if not samples:
        raise CorpusError(f"split {args.split!r} is empty")
    buckets = _load_buckets(args.buckets)
    beam = args.beam if args.beam is not None else model.config.beam
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cands = [model.generate(s.ast, beam=beam)[0] for s in samples]
    refs = [s.comment for s in samples]
    report = evaluate_corpus(cands, refs, sample_ids=[s.id for s in samples],
                             stats=[s.stats for s in samples],
                             bucket_edges=buckets)
    report = {"config": model.config.to_dict(), "seed": model.config.seed,
              "beam": beam, "split": args.split, **report}
    _write_json(out / "report.json", report)
    for dim, rows in report["buckets"].items():
        _bucket_csv(out / f"buckets_{dim}.csv", dim, rows, report["config"])
    for key, value in report["corpus"].items():
        shown = "n/a" if value is None else f"{value:.4f}"
        print(f"{key}: {shown}")
    return EXIT_OK


def cmd_summarize(args) -> int:
    model = model_from_checkpoint(args.checkpoint)
    beam = args.beam if args.beam is not None else model.config.beam
    max_len = args.max_len if args.max_len is not None else model.config.max_decode_len
    for name in args.files:
        path = Path(name)
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".json":
            ast = parse_json_ast(text)
        else:
            ast = parse_mini_source(text)
        words, attention, columns = model.generate(ast, max_len=max_len, beam=beam)
        print(" ".join(words))
        if args.attention:
            dump = {
                "config": model.config.to_dict(),
                "seed": model.config.seed,
                "input": str(path),
                "words": words,
                "columns": list(columns),
                "weights": [[float(w) for w in row] for row in attention],
            }
            _write_json(path.with_suffix(path.suffix + ".attention.json"), dump)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="codesumm",
                     description="tree-structured source code summarization")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="filter a raw corpus, build vocabularies and splits")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratios", type=_parse_ratios, default=(0.8, 0.1, 0.1))
    p.add_argument("--max-nodes", type=int, default=100, dest="max_nodes")
    p.add_argument("--id-limit", type=int, default=30000, dest="id_limit")
    p.add_argument("--literal-limit", type=int, default=1000, dest="literal_limit")
    p.add_argument("--comment-limit", type=int, default=30000, dest="comment_limit")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model on a prepared corpus")
    p.add_argument("--data", required=True, help="directory from prepare")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--encoder", choices=ENCODER_KINDS, dest="encoder_kind")
    p.add_argument("--layers", type=int, choices=(1, 2))
    p.add_argument("--dim", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-decode-len", type=int, dest="max_decode_len")
    p.add_argument("--beam", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--buckets", help="JSON file of bucket edges per dimension")
    p.add_argument("--beam", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("summarize", help="generate comments for source files")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--attention", action="store_true")
    p.add_argument("--beam", type=int)
    p.add_argument("--max-len", type=int, dest="max_len")
    p.add_argument("files", nargs="+", metavar="FILE")
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except DATA_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
