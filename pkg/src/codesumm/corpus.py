"""Corpus preparation: filtering, vocabularies, splits, and batches.

The raw wire format is JSON-lines, one sample per line:

    {"id": ..., "method_name": ..., "comment": ..., "ast": <json ast>}

with an optional "type_name" used for constructor detection.  Preparation
keeps a sample's first comment sentence (lowercased, word/punctuation
tokens), drops trivial methods, and caps tree size.  Prepared splits are
written back as JSON-lines with the comment already tokenized.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .asts import (Ast, AstError, AstStats, KIND_IDENT, KIND_SYNTAX,
                   UNK_BY_KIND, UNK_ID, UNK_LABELS, UNK_NUM, UNK_STR,
                   ast_from_obj, ast_stats, ast_to_obj, symbol_for)

PAD = "<pad>"
BOS = "<bos>"
EOS = "<eos>"
UNK = "<unk>"

AST_SPECIALS = (PAD, BOS, EOS, UNK_ID, UNK_STR, UNK_NUM)
COMMENT_SPECIALS = (PAD, BOS, EOS, UNK)

OPEN_SYMBOL = "("
CLOSE_SYMBOL = ")"

MAX_AST_NODES = 100

DROP_CONSTRUCTOR = "constructor"
DROP_SETTER_GETTER = "setter-getter"
DROP_TESTER = "tester"
DROP_ONE_WORD = "one-word"
DROP_TOO_LARGE = "too-large"

_STATEMENT_LABELS = frozenset(["Return", "Assign", "If", "While", "ExprStmt"])
_ACCESSOR_PREFIXES = ("set", "get", "is")


class CorpusError(ValueError):
    pass


@dataclass
class Sample:
    id: str
    ast: Ast
    comment: List[str]
    stats: AstStats


# -- comment processing -------------------------------------------------------

_SENTENCE_END = re.compile(r"[.!?](?=\s|$)")
_TOKEN = re.compile(r"\w+|[^\w\s]")
_WORD = re.compile(r"\w+")


def first_sentence(text: str) -> str:
    m = _SENTENCE_END.search(text)
    return text[:m.end()] if m else text


def tokenize_comment(text: str) -> List[str]:
    return _TOKEN.findall(text.lower())


def _word_count(tokens: Sequence[str]) -> int:
    return sum(1 for t in tokens if _WORD.fullmatch(t))


# -- filtering ----------------------------------------------------------------

def count_statements(ast: Ast) -> int:
    """Statement nodes: the mini-language statement labels plus any label
    ending in "Statement" (covers Java-style JSON trees)."""
    n = 0
    for node in ast.nodes:
        if node.kind == KIND_SYNTAX and (
                node.label in _STATEMENT_LABELS or node.label.endswith("Statement")):
            n += 1
    return n


def filter_sample(sample_id: str, ast: Ast, method_name: str, raw_comment: str,
                  type_name: Optional[str] = None,
                  max_nodes: int = MAX_AST_NODES) -> Tuple[Optional[Sample], Optional[str]]:
    """Apply the keep/drop rules; returns (sample, None) or (None, reason).

    Constructors are names equal to the enclosing type (leading-uppercase
    heuristic when no type name is known); setters/getters are set*/get*/is*
    names over bodies of at most one statement; testers are test* names.
    The kept comment is the first sentence, lowercased, split into word and
    punctuation tokens, and must contain at least two words.
    """
    if type_name is not None:
        is_ctor = method_name == type_name
    else:
        is_ctor = bool(method_name) and method_name[0].isupper()
    if is_ctor:
        return None, DROP_CONSTRUCTOR
    if method_name.startswith(_ACCESSOR_PREFIXES) and count_statements(ast) <= 1:
        return None, DROP_SETTER_GETTER
    if method_name.startswith("test"):
        return None, DROP_TESTER
    tokens = tokenize_comment(first_sentence(raw_comment))
    if _word_count(tokens) < 2:
        return None, DROP_ONE_WORD
    stats = ast_stats(ast)
    if stats.node_count > max_nodes:
        return None, DROP_TOO_LARGE
    return Sample(id=sample_id, ast=ast, comment=tokens, stats=stats), None


# -- vocabulary ---------------------------------------------------------------

def _escape(symbol: str) -> str:
    return symbol.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def _unescape(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        if text[i] == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            out.append({"\\": "\\", "t": "\t", "n": "\n"}.get(nxt, "\\" + nxt))
            i += 2
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


class Vocab:
    """Symbol/id mapping: fixed specials first, then frequency-ranked entries."""

    def __init__(self, specials: Sequence[str], entries: Sequence[Tuple[str, int]]):
        self.specials = tuple(specials)
        self.entries = list(entries)
        self.symbols = list(self.specials) + [s for s, _ in self.entries]
        self.index: Dict[str, int] = {s: i for i, s in enumerate(self.symbols)}
        if len(self.index) != len(self.symbols):
            raise CorpusError("duplicate symbols in vocabulary")

    def __len__(self) -> int:
        return len(self.symbols)

    def contains(self, symbol: str) -> bool:
        return symbol in self.index

    def id(self, symbol: str, unk: Optional[str] = None) -> int:
        i = self.index.get(symbol)
        if i is not None:
            return i
        if unk is None:
            raise CorpusError(f"symbol {symbol!r} not in vocabulary")
        return self.index[unk]

    def symbol(self, i: int) -> str:
        return self.symbols[i]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for sym, freq in self.entries:
                fh.write(f"{_escape(sym)}\t{freq}\n")

    @classmethod
    def load(cls, path, specials: Sequence[str]) -> "Vocab":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    sym, freq = line.rsplit("\t", 1)
                    entries.append((_unescape(sym), int(freq)))
                except ValueError:
                    raise CorpusError(f"{path}:{line_no}: bad vocab line {line!r}") from None
        return cls(specials, entries)

    def digest(self) -> str:
        h = hashlib.sha256()
        for sym in self.specials:
            h.update(sym.encode())
            h.update(b"\x00")
        for sym, freq in self.entries:
            h.update(sym.encode())
            h.update(str(freq).encode())
            h.update(b"\x00")
        return h.hexdigest()


def _ranked(counts: Dict[str, int]) -> List[Tuple[str, int]]:
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def build_vocab(samples: Sequence[Sample], id_limit: int = 30000,
                literal_limit: int = 1000, comment_limit: int = 30000,
                syntax_from: Optional[Sequence[Sample]] = None) -> Tuple[Vocab, Vocab]:
    """Frequency-truncated vocabularies for the tree side and the comment side.

    Syntax labels are always kept; identifiers are capped at id_limit and
    string/number literals share the literal_limit budget.  The structural
    tokens of the linearized form are always present, counted once per node.

    Open classes (identifiers, literals, comment words) are counted over
    ``samples`` (normally the training split); the closed syntax-label set
    may additionally be collected from ``syntax_from`` (normally the whole
    corpus) since grammar labels have no unknown-token class.
    """
    if not samples:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    syntax: Dict[str, int] = {}
    idents: Dict[str, int] = {}
    literals: Dict[str, int] = {}
    comment_counts: Dict[str, int] = {}
    total_nodes = 0
    for sample in samples:
        total_nodes += len(sample.ast)
        for node in sample.ast.nodes:
            if node.label in UNK_LABELS:
                continue
            sym = symbol_for(node.label, node.kind)
            if node.kind == KIND_SYNTAX:
                syntax[sym] = syntax.get(sym, 0) + 1
            elif node.kind == KIND_IDENT:
                idents[sym] = idents.get(sym, 0) + 1
            else:
                literals[sym] = literals.get(sym, 0) + 1
        for word in sample.comment:
            comment_counts[word] = comment_counts.get(word, 0) + 1
    for sample in syntax_from or ():
        for node in sample.ast.nodes:
            if node.kind == KIND_SYNTAX and node.label not in UNK_LABELS:
                sym = symbol_for(node.label, node.kind)
                if sym not in syntax:
                    syntax[sym] = 0

    kept: Dict[str, int] = dict(syntax)
    kept[OPEN_SYMBOL] = total_nodes
    kept[CLOSE_SYMBOL] = total_nodes
    for sym, freq in _ranked(idents)[:id_limit]:
        kept[sym] = freq
    for sym, freq in _ranked(literals)[:literal_limit]:
        kept[sym] = freq
    ast_vocab = Vocab(AST_SPECIALS, _ranked(kept))
    comment_vocab = Vocab(COMMENT_SPECIALS, _ranked(comment_counts)[:comment_limit])
    return ast_vocab, comment_vocab


def node_symbol_id(vocab: Vocab, label: str, kind: str) -> int:
    if kind == KIND_SYNTAX:
        return vocab.id(label)
    if label in UNK_LABELS:
        return vocab.id(label)
    return vocab.id(symbol_for(label, kind), unk=UNK_BY_KIND[kind])


def encode_comment(vocab: Vocab, words: Sequence[str]) -> List[int]:
    return [vocab.id(w, unk=UNK) for w in words]


def decode_comment(vocab: Vocab, ids: Sequence[int]) -> List[str]:
    """Ids back to words; PAD/BOS are skipped and EOS terminates."""
    out = []
    eos, pad, bos = vocab.id(EOS), vocab.id(PAD), vocab.id(BOS)
    for i in ids:
        if i == eos:
            break
        if i in (pad, bos):
            continue
        out.append(vocab.symbol(i))
    return out


# -- splits and batches ---------------------------------------------------------

def split_dataset(samples: Sequence[Sample], ratios: Sequence[float],
                  seed: int) -> Tuple[List[Sample], ...]:
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"split ratios must sum to 1, got {ratios}")
    order = np.random.default_rng(seed).permutation(len(samples))
    shuffled = [samples[i] for i in order]
    counts = [int(len(samples) * r) for r in ratios[:-1]]
    counts.append(len(samples) - sum(counts))
    out = []
    at = 0
    for c in counts:
        out.append(shuffled[at:at + c])
        at += c
    return tuple(out)


def make_batches(samples: Sequence[Sample], batch_size: int,
                 rng: np.random.Generator) -> List[List[Sample]]:
    """One epoch worth of shuffled batches; the final short batch is kept."""
    if batch_size < 1:
        raise CorpusError(f"batch_size must be >= 1, got {batch_size}")
    order = rng.permutation(len(samples))
    shuffled = [samples[i] for i in order]
    return [shuffled[i:i + batch_size] for i in range(0, len(shuffled), batch_size)]


# -- wire formats ---------------------------------------------------------------

def read_corpus(path) -> Iterable[Tuple[int, dict]]:
    """Yield (line_number, record) for a raw JSONL corpus, validating shape."""
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"line {line_no}: malformed JSON: {e}") from None
            missing = {"id", "method_name", "comment", "ast"} - set(rec)
            if missing:
                raise CorpusError(f"line {line_no}: missing keys {sorted(missing)}")
            yield line_no, rec


def prepare_records(records: Iterable[Tuple[int, dict]],
                    max_nodes: int = MAX_AST_NODES
                    ) -> Tuple[List[Sample], Dict[str, int]]:
    """Filter raw records into samples plus a drop-reason histogram."""
    kept: List[Sample] = []
    drops: Dict[str, int] = {}
    for line_no, rec in records:
        try:
            ast = ast_from_obj(rec["ast"])
        except AstError as e:
            raise CorpusError(f"line {line_no}: {e}") from None
        sample, reason = filter_sample(
            str(rec["id"]), ast, str(rec["method_name"]), str(rec["comment"]),
            type_name=rec.get("type_name"), max_nodes=max_nodes)
        if sample is None:
            drops[reason] = drops.get(reason, 0) + 1
        else:
            kept.append(sample)
    return kept, drops


def save_split(path, samples: Sequence[Sample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps({"id": s.id, "comment": s.comment,
                                 "ast": ast_to_obj(s.ast)},
                                separators=(",", ":")) + "\n")


def load_split(path) -> List[Sample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                ast = ast_from_obj(rec["ast"])
                out.append(Sample(id=str(rec["id"]), ast=ast,
                                  comment=[str(w) for w in rec["comment"]],
                                  stats=ast_stats(ast)))
            except (json.JSONDecodeError, KeyError, AstError) as e:
                raise CorpusError(f"{path}:{line_no}: {e}") from None
    return out
