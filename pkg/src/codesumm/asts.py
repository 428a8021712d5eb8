"""Ordered rooted trees of labeled nodes, plus the structure transforms.

The JSON wire schema is the nested object ``{"label": str, "kind": str,
"children": [...]}`` where kind is one of ``syntax``, ``identifier``,
``string-literal``, ``number-literal``.  Child order is significant and is
preserved by every operation here.

Vocabulary symbols namespace non-syntax labels with a kind prefix
(``id:``, ``str:``, ``num:``) so that an identifier and a syntax node with
the same spelling never collide; syntax labels are used bare.  The bare
labels ``(`` and ``)`` are reserved for the linearized form and rejected
on ingestion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple

KIND_SYNTAX = "syntax"
KIND_IDENT = "identifier"
KIND_STRING = "string-literal"
KIND_NUMBER = "number-literal"
KINDS = (KIND_SYNTAX, KIND_IDENT, KIND_STRING, KIND_NUMBER)

UNK_ID = "<unk-id>"
UNK_STR = "<unk-str>"
UNK_NUM = "<unk-num>"
UNK_BY_KIND = {KIND_IDENT: UNK_ID, KIND_STRING: UNK_STR, KIND_NUMBER: UNK_NUM}
UNK_LABELS = frozenset(UNK_BY_KIND.values())

NIL_LABEL = "<nil>"  # empty slot marker introduced by binarize

_PREFIX_BY_KIND = {KIND_IDENT: "id:", KIND_STRING: "str:", KIND_NUMBER: "num:"}
_KIND_BY_PREFIX = {v: k for k, v in _PREFIX_BY_KIND.items()}


class AstError(ValueError):
    """Malformed tree input (bad JSON, bad kind, broken structure)."""


@dataclass
class Node:
    label: str
    kind: str
    children: List[int] = field(default_factory=list)


class Ast:
    """Indexed node records with a single root; children are node indices."""

    def __init__(self, nodes: List[Node], root: int = 0):
        self.nodes = nodes
        self.root = root

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, i: int) -> Node:
        return self.nodes[i]

    def pre_order(self) -> Iterator[int]:
        stack = [self.root]
        while stack:
            i = stack.pop()
            yield i
            stack.extend(reversed(self.nodes[i].children))

    def canonical(self):
        """Nested (label, kind, children) tuples, for structural equality."""
        memo = {}
        for i in self._post_order():
            n = self.nodes[i]
            memo[i] = (n.label, n.kind, tuple(memo[c] for c in n.children))
        return memo[self.root]

    def _post_order(self) -> Iterator[int]:
        stack = [(self.root, False)]
        while stack:
            i, done = stack.pop()
            if done:
                yield i
                continue
            stack.append((i, True))
            stack.extend((c, False) for c in reversed(self.nodes[i].children))

    def __eq__(self, other) -> bool:
        return isinstance(other, Ast) and self.canonical() == other.canonical()

    def __hash__(self):
        return hash(self.canonical())

    def validate(self) -> None:
        n = len(self.nodes)
        if n == 0:
            raise AstError("empty tree")
        if not 0 <= self.root < n:
            raise AstError(f"root index {self.root} out of range")
        parent = [-1] * n
        for i, node in enumerate(self.nodes):
            for c in node.children:
                if not 0 <= c < n:
                    raise AstError(f"child index {c} out of range at node {i}")
                if parent[c] != -1:
                    raise AstError(f"node {c} has two parents ({parent[c]} and {i})")
                parent[c] = i
        if parent[self.root] != -1:
            raise AstError("root has a parent")
        seen = 0
        for i in self.pre_order():
            seen += 1
            if seen > n:
                raise AstError("cycle detected")
        if seen != n:
            raise AstError(f"{n - seen} nodes unreachable from root (or cycle)")


@dataclass
class AstStats:
    node_count: int
    max_degree: int
    depth: int


def ast_stats(ast: Ast) -> AstStats:
    max_degree = 0
    depth = 0
    stack = [(ast.root, 1)]
    while stack:
        i, d = stack.pop()
        depth = max(depth, d)
        kids = ast.nodes[i].children
        max_degree = max(max_degree, len(kids))
        stack.extend((c, d + 1) for c in kids)
    return AstStats(node_count=len(ast.nodes), max_degree=max_degree, depth=depth)


# -- JSON ingestion ----------------------------------------------------------

def _check_label(label, kind) -> None:
    if not isinstance(label, str):
        raise AstError(f"node label must be a string, got {label!r}")
    if label == "" and kind != KIND_STRING:
        raise AstError(f"empty label is only valid for string literals, not {kind}")
    if kind == KIND_SYNTAX and label in ("(", ")"):
        raise AstError(f"syntax label {label!r} is reserved")


def ast_from_obj(doc) -> Ast:
    """Build an Ast from the nested wire object; children order preserved."""
    nodes: List[Node] = []
    stack = [(doc, -1)]
    while stack:
        obj, parent = stack.pop()
        if not isinstance(obj, dict):
            raise AstError(f"node must be an object, got {type(obj).__name__}")
        missing = {"label", "kind", "children"} - set(obj)
        if missing:
            raise AstError(f"node missing keys: {sorted(missing)}")
        label, kind, children = obj["label"], obj["kind"], obj["children"]
        if kind not in KINDS:
            raise AstError(f"unknown node kind {kind!r} (expected one of {list(KINDS)})")
        _check_label(label, kind)
        if not isinstance(children, list):
            raise AstError("children must be a list")
        idx = len(nodes)
        nodes.append(Node(label=label, kind=kind, children=[]))
        if parent >= 0:
            nodes[parent].children.append(idx)
        stack.extend((ch, idx) for ch in reversed(children))
    ast = Ast(nodes, root=0)
    ast.validate()
    return ast


def parse_json_ast(text: str) -> Ast:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise AstError(f"malformed JSON: {e}") from None
    return ast_from_obj(doc)


def ast_to_obj(ast: Ast, i: Optional[int] = None) -> dict:
    objs = {}
    for j in ast._post_order():
        n = ast.nodes[j]
        objs[j] = {"label": n.label, "kind": n.kind,
                   "children": [objs[c] for c in n.children]}
    return objs[ast.root if i is None else i]


def emit_json(ast: Ast) -> str:
    return json.dumps(ast_to_obj(ast), separators=(",", ":"))


# -- vocabulary symbols ------------------------------------------------------

def symbol_for(label: str, kind: str) -> str:
    """The vocabulary symbol of a node: bare for syntax, kind-prefixed else."""
    if label in UNK_LABELS:
        return label
    if kind == KIND_SYNTAX:
        return label
    return _PREFIX_BY_KIND[kind] + label


def symbol_to_label_kind(symbol: str) -> Tuple[str, str]:
    if symbol == UNK_ID:
        return symbol, KIND_IDENT
    if symbol == UNK_STR:
        return symbol, KIND_STRING
    if symbol == UNK_NUM:
        return symbol, KIND_NUMBER
    for prefix, kind in _KIND_BY_PREFIX.items():
        if symbol.startswith(prefix):
            return symbol[len(prefix):], kind
    return symbol, KIND_SYNTAX


def normalize_labels(ast: Ast, vocab) -> Ast:
    """Replace out-of-vocabulary identifier/literal labels with UNK classes.

    Syntax labels are never replaced; the result is idempotent under a
    second pass.  ``vocab`` needs only a ``contains(symbol)`` method.
    """
    out = []
    for n in ast.nodes:
        label = n.label
        if n.kind != KIND_SYNTAX and label not in UNK_LABELS:
            if not vocab.contains(symbol_for(label, n.kind)):
                label = UNK_BY_KIND[n.kind]
        out.append(Node(label=label, kind=n.kind, children=list(n.children)))
    return Ast(out, root=ast.root)


# -- binarization (left child / right sibling) -------------------------------

def is_marker(node: Node) -> bool:
    return node.label == NIL_LABEL and node.kind == KIND_SYNTAX


def binarize(ast: Ast) -> Ast:
    """Left-child/right-sibling transform; absent slots hold marker nodes.

    Real nodes keep their original indices; markers are appended after.
    Every output node has either no children or exactly two slots.
    """
    n = len(ast.nodes)
    left = [-1] * n
    right = [-1] * n
    for i in range(n):
        kids = ast.nodes[i].children
        if kids:
            left[i] = kids[0]
        for a, b in zip(kids, kids[1:]):
            right[a] = b
    nodes = [Node(label=nd.label, kind=nd.kind, children=[]) for nd in ast.nodes]

    def slot(j: int) -> int:
        if j >= 0:
            return j
        nodes.append(Node(label=NIL_LABEL, kind=KIND_SYNTAX, children=[]))
        return len(nodes) - 1

    for i in range(n):
        if left[i] >= 0 or right[i] >= 0:
            nodes[i].children = [slot(left[i]), slot(right[i])]
    return Ast(nodes, root=ast.root)


def debinarize(ast: Ast) -> Ast:
    """Inverse of binarize; markers vanish and sibling chains flatten."""

    def slots(i: int) -> Tuple[int, int]:
        kids = ast.nodes[i].children
        if not kids:
            return -1, -1
        if len(kids) != 2:
            raise AstError(f"binarized node {i} has {len(kids)} children, expected 0 or 2")
        l, r = kids
        return (l if not is_marker(ast.nodes[l]) else -1,
                r if not is_marker(ast.nodes[r]) else -1)

    def original_children(i: int) -> List[int]:
        out = []
        c = slots(i)[0]
        while c >= 0:
            out.append(c)
            c = slots(c)[1]
        return out

    nodes: List[Node] = []
    stack = [(ast.root, -1)]
    while stack:
        i, parent = stack.pop()
        src = ast.nodes[i]
        idx = len(nodes)
        nodes.append(Node(label=src.label, kind=src.kind, children=[]))
        if parent >= 0:
            nodes[parent].children.append(idx)
        stack.extend((c, idx) for c in reversed(original_children(i)))
    return Ast(nodes, root=0)


# -- reconstructible linearization -------------------------------------------

OPEN = "("
CLOSE = ")"


def linearize(ast: Ast) -> List[str]:
    """Pre-order traversal with explicit close markers; uniquely invertible."""
    out: List[str] = []
    stack = [(ast.root, False)]
    while stack:
        i, closing = stack.pop()
        if closing:
            out.append(CLOSE)
            continue
        n = ast.nodes[i]
        out.append(OPEN)
        out.append(symbol_for(n.label, n.kind))
        stack.append((i, True))
        stack.extend((c, False) for c in reversed(n.children))
    return out


def delinearize(tokens: List[str]) -> Ast:
    nodes: List[Node] = []
    open_stack: List[int] = []
    root = -1
    pos = 0
    while pos < len(tokens):
        tok = tokens[pos]
        if tok == OPEN:
            pos += 1
            if pos >= len(tokens) or tokens[pos] in (OPEN, CLOSE):
                raise AstError(f"expected a symbol after '(' at token {pos}")
            label, kind = symbol_to_label_kind(tokens[pos])
            idx = len(nodes)
            nodes.append(Node(label=label, kind=kind, children=[]))
            if open_stack:
                nodes[open_stack[-1]].children.append(idx)
            elif root < 0:
                root = idx
            else:
                raise AstError("multiple roots in token stream")
            open_stack.append(idx)
        elif tok == CLOSE:
            if not open_stack:
                raise AstError(f"unbalanced ')' at token {pos}")
            open_stack.pop()
        else:
            raise AstError(f"unexpected token {tok!r} at position {pos}")
        pos += 1
    if open_stack:
        raise AstError("unclosed subtree at end of tokens")
    if root < 0:
        raise AstError("empty token stream")
    return Ast(nodes, root=root)
