"""Parser for the built-in mini language, used for self-contained corpora.

The grammar (also shipped in docs/mini_grammar.md):

    program   := fndef+
    fndef     := "fn" IDENT "(" [ IDENT ("," IDENT)* ] ")" block
    block     := "{" stmt* "}"
    stmt      := "if" "(" expr ")" block [ "else" (block | ifstmt) ]
               | "while" "(" expr ")" block
               | "return" [expr] ";"
               | IDENT "=" expr ";"
               | expr ";"
    expr      := orx ;  orx := andx ("||" andx)* ;  andx := cmp ("&&" cmp)*
    cmp       := add (("=="|"!="|"<="|">="|"<"|">") add)?
    add       := mul (("+"|"-") mul)* ;  mul := unary (("*"|"/"|"%") unary)*
    unary     := ("-"|"!") unary | primary
    primary   := NUMBER | STRING | IDENT [ "(" [expr ("," expr)*] ")" ]
               | "(" expr ")"

One function definition yields a FunctionDef root; several are wrapped in a
Program node.  Operator nodes carry the operator symbol as their label;
statement bodies of if/while sit inside Block nodes, while a function's
statements hang directly off its FunctionDef after the name and Params.
"""

from __future__ import annotations

import re
from typing import List, NamedTuple, Optional

from .asts import Ast, KIND_IDENT, KIND_NUMBER, KIND_STRING, KIND_SYNTAX, Node


class MiniSyntaxError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{msg} at line {line}, column {col}")
        self.line = line
        self.col = col


class Token(NamedTuple):
    type: str
    text: str
    line: int
    col: int


_KEYWORDS = {"fn", "if", "else", "while", "return"}
_PUNCT = ("==", "!=", "<=", ">=", "&&", "||",
          "(", ")", "{", "}", ",", ";", "=", "<", ">", "+", "-", "*", "/", "%", "!")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"[0-9]+")
_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


def tokenize(src: str) -> List[Token]:
    toks: List[Token] = []
    i, line, col = 0, 1, 1

    def advance(n: int):
        nonlocal i, line, col
        for _ in range(n):
            if src[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < len(src):
        ch = src[i]
        if ch in " \t\r\n":
            advance(1)
            continue
        if src.startswith("//", i):
            while i < len(src) and src[i] != "\n":
                advance(1)
            continue
        if ch == '"':
            start_line, start_col = line, col
            advance(1)
            buf = []
            while True:
                if i >= len(src) or src[i] == "\n":
                    raise MiniSyntaxError("unterminated string literal", start_line, start_col)
                if src[i] == '"':
                    advance(1)
                    break
                if src[i] == "\\":
                    if i + 1 >= len(src) or src[i + 1] not in _ESCAPES:
                        raise MiniSyntaxError("bad string escape", line, col)
                    buf.append(_ESCAPES[src[i + 1]])
                    advance(2)
                    continue
                buf.append(src[i])
                advance(1)
            toks.append(Token("string", "".join(buf), start_line, start_col))
            continue
        m = _NUMBER_RE.match(src, i)
        if m:
            toks.append(Token("number", m.group(), line, col))
            advance(len(m.group()))
            continue
        m = _IDENT_RE.match(src, i)
        if m:
            text = m.group()
            toks.append(Token(text if text in _KEYWORDS else "ident", text, line, col))
            advance(len(text))
            continue
        for p in _PUNCT:
            if src.startswith(p, i):
                toks.append(Token(p, p, line, col))
                advance(len(p))
                break
        else:
            raise MiniSyntaxError(f"unexpected character {ch!r}", line, col)
    toks.append(Token("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, toks: List[Token]):
        self.toks = toks
        self.pos = 0
        self.nodes: List[Node] = []

    def peek(self) -> Token:
        return self.toks[self.pos]

    def take(self, ttype: Optional[str] = None) -> Token:
        tok = self.toks[self.pos]
        if ttype is not None and tok.type != ttype:
            raise MiniSyntaxError(f"expected {ttype!r}, found {tok.text or 'end of input'!r}",
                                  tok.line, tok.col)
        self.pos += 1
        return tok

    def at(self, ttype: str) -> bool:
        return self.toks[self.pos].type == ttype

    def new(self, label: str, kind: str = KIND_SYNTAX, children: Optional[List[int]] = None) -> int:
        self.nodes.append(Node(label=label, kind=kind, children=children or []))
        return len(self.nodes) - 1

    # -- grammar ----------------------------------------------------------

    def program(self) -> int:
        fns = [self.fndef()]
        while not self.at("eof"):
            fns.append(self.fndef())
        if len(fns) == 1:
            return fns[0]
        return self.new("Program", children=fns)

    def fndef(self) -> int:
        self.take("fn")
        name = self.take("ident")
        children = [self.new(name.text, KIND_IDENT)]
        self.take("(")
        params = []
        if self.at("ident"):
            params.append(self.new(self.take("ident").text, KIND_IDENT))
            while self.at(","):
                self.take(",")
                params.append(self.new(self.take("ident").text, KIND_IDENT))
        self.take(")")
        children.append(self.new("Params", children=params))
        self.take("{")
        while not self.at("}"):
            children.append(self.stmt())
        self.take("}")
        return self.new("FunctionDef", children=children)

    def block(self) -> int:
        self.take("{")
        stmts = []
        while not self.at("}"):
            stmts.append(self.stmt())
        self.take("}")
        return self.new("Block", children=stmts)

    def stmt(self) -> int:
        if self.at("if"):
            return self.ifstmt()
        if self.at("while"):
            self.take("while")
            self.take("(")
            cond = self.expr()
            self.take(")")
            return self.new("While", children=[cond, self.block()])
        if self.at("return"):
            self.take("return")
            kids = [] if self.at(";") else [self.expr()]
            self.take(";")
            return self.new("Return", children=kids)
        if self.at("ident") and self.toks[self.pos + 1].type == "=":
            target = self.new(self.take("ident").text, KIND_IDENT)
            self.take("=")
            value = self.expr()
            self.take(";")
            return self.new("Assign", children=[target, value])
        e = self.expr()
        self.take(";")
        return self.new("ExprStmt", children=[e])

    def ifstmt(self) -> int:
        self.take("if")
        self.take("(")
        cond = self.expr()
        self.take(")")
        kids = [cond, self.block()]
        if self.at("else"):
            self.take("else")
            kids.append(self.ifstmt() if self.at("if") else self.block())
        return self.new("If", children=kids)

    def expr(self) -> int:
        return self._binary_chain(0)

    _LEVELS = [["||"], ["&&"], ["==", "!=", "<=", ">=", "<", ">"], ["+", "-"], ["*", "/", "%"]]

    def _binary_chain(self, level: int) -> int:
        if level == len(self._LEVELS):
            return self.unary()
        lhs = self._binary_chain(level + 1)
        ops = self._LEVELS[level]
        single = level == 2  # comparisons do not chain
        while self.peek().type in ops:
            op = self.take().text
            rhs = self._binary_chain(level + 1)
            lhs = self.new(op, children=[lhs, rhs])
            if single:
                break
        return lhs

    def unary(self) -> int:
        if self.at("-") or self.at("!"):
            op = self.take().text
            return self.new(op, children=[self.unary()])
        return self.primary()

    def primary(self) -> int:
        tok = self.peek()
        if tok.type == "number":
            self.take()
            return self.new(tok.text, KIND_NUMBER)
        if tok.type == "string":
            self.take()
            return self.new(tok.text, KIND_STRING)
        if tok.type == "ident":
            self.take()
            if self.at("("):
                self.take("(")
                args = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.at(","):
                        self.take(",")
                        args.append(self.expr())
                self.take(")")
                callee = self.new(tok.text, KIND_IDENT)
                return self.new("Call", children=[callee] + args)
            return self.new(tok.text, KIND_IDENT)
        if tok.type == "(":
            self.take("(")
            e = self.expr()
            self.take(")")
            return e
        raise MiniSyntaxError(f"expected an expression, found {tok.text or 'end of input'!r}",
                              tok.line, tok.col)


def parse_mini_source(src: str) -> Ast:
    """Parse mini-language source into an Ast; deterministic for fixed input."""
    parser = _Parser(tokenize(src))
    root = parser.program()
    tok = parser.peek()
    if tok.type != "eof":
        raise MiniSyntaxError(f"trailing input {tok.text!r}", tok.line, tok.col)
    ast = Ast(parser.nodes, root=root)
    ast.validate()
    return ast
