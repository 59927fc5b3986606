"""Lexer and recursive-descent parser for ``.flows`` workflow programs.

Grammar::

    workflow := "workflow" "{" stmt* "return" expr "}"
    stmt     := "let" IDENT "=" call | "let" IDENT "=" "[" "]" | "push" IDENT "," expr
              | "repeat" INT "{" stmt* "}"
              | "if" "test" "(" expr ")" "{" stmt* "}" "else" "{" stmt* "}"
    call     := IDENT "(" (kwarg ("," kwarg)*)? ")"
    kwarg    := IDENT "=" (STRING | IDENT | "[" IDENT ("," IDENT)* "]")
    expr     := IDENT
"""

from __future__ import annotations

from dataclasses import dataclass

from .nodes import (
    Call,
    IfTest,
    Let,
    LetEmptyList,
    ListOf,
    Push,
    Repeat,
    Span,
    Str,
    VarRef,
    Workflow,
)

KEYWORDS = frozenset({"workflow", "let", "push", "repeat", "if", "else", "return"})
PUNCT = frozenset("{}()[]=,")
MAX_DEPTH = 64
MAX_INT = 10**9


class WorkflowSyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int, expected=()):
        self.line = line
        self.col = col
        self.expected = frozenset(expected)
        detail = f"{message} at {line}:{col}"
        if self.expected:
            detail += f" (expected one of: {', '.join(sorted(self.expected))})"
        super().__init__(detail)


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT, KW, INT, STRING, PUNCT, EOF
    text: str
    line: int
    col: int

    def describe(self) -> str:
        if self.kind == "EOF":
            return "end of input"
        if self.kind == "STRING":
            return "string literal"
        return repr(self.text)


def _is_ident_start(ch: str) -> bool:
    return ch == "_" or "a" <= ch <= "z"


def _is_ident_char(ch: str) -> bool:
    return _is_ident_start(ch) or "0" <= ch <= "9"


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if ch in PUNCT:
            tokens.append(Token("PUNCT", ch, line, col))
            i += 1
            col += 1
        elif _is_ident_start(ch):
            j = i
            while j < n and _is_ident_char(text[j]):
                j += 1
            word = text[i:j]
            tokens.append(Token("KW" if word in KEYWORDS else "IDENT", word, line, col))
            col += j - i
            i = j
        elif "0" <= ch <= "9":
            j = i
            while j < n and "0" <= text[j] <= "9":
                j += 1
            if j < n and _is_ident_char(text[j]):
                raise WorkflowSyntaxError("malformed integer literal", line, col)
            tokens.append(Token("INT", text[i:j], line, col))
            col += j - i
            i = j
        elif ch == '"':
            i += 1
            col += 1
            chars = []
            while True:
                if i >= n:
                    raise WorkflowSyntaxError("unterminated string literal", start_line, start_col)
                c = text[i]
                if c == '"':
                    i += 1
                    col += 1
                    break
                if c == "\\":
                    nxt = text[i + 1] if i + 1 < n else ""
                    if nxt not in ("\\", '"'):
                        raise WorkflowSyntaxError("invalid escape sequence", line, col)
                    chars.append(nxt)
                    i += 2
                    col += 2
                    continue
                chars.append(c)
                i += 1
                if c == "\n":
                    line += 1
                    col = 1
                else:
                    col += 1
            tokens.append(Token("STRING", "".join(chars), start_line, start_col))
        else:
            raise WorkflowSyntaxError(f"unexpected character {ch!r}", line, col)
    tokens.append(Token("EOF", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0
        self.depth = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def fail(self, expected, tok: Token | None = None):
        tok = tok or self.tok
        raise WorkflowSyntaxError(f"unexpected {tok.describe()}", tok.line, tok.col, expected)

    def at(self, kind: str, text: str | None = None) -> bool:
        tok = self.tok
        return tok.kind == kind and (text is None or tok.text == text)

    def expect(self, kind: str, text: str | None = None) -> Token:
        if not self.at(kind, text):
            self.fail([text if text is not None else kind])
        tok = self.tok
        self.pos += 1
        return tok

    def ident(self) -> Token:
        return self.expect("IDENT")

    def parse_workflow(self) -> Workflow:
        self.expect("KW", "workflow")
        self.expect("PUNCT", "{")
        body = self.parse_block(("return",))
        ret_tok = self.expect("KW", "return")
        name = self.ident()
        self.expect("PUNCT", "}")
        self.expect("EOF")
        return Workflow(body, name.text, Span(ret_tok.line, ret_tok.col))

    def parse_block(self, terminators) -> tuple:
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise WorkflowSyntaxError("nesting too deep", self.tok.line, self.tok.col)
        stmts = []
        while True:
            tok = self.tok
            if tok.kind == "KW" and tok.text in ("let", "push", "repeat", "if"):
                stmts.append(self.parse_stmt())
            elif (tok.kind == "KW" and tok.text in terminators) or (
                tok.kind == "PUNCT" and tok.text in terminators
            ):
                break
            else:
                self.fail({"let", "push", "repeat", "if", *terminators})
        self.depth -= 1
        return tuple(stmts)

    def parse_stmt(self):
        tok = self.tok
        span = Span(tok.line, tok.col)
        self.pos += 1
        if tok.text == "let":
            name = self.ident().text
            self.expect("PUNCT", "=")
            if self.at("PUNCT", "["):
                self.pos += 1
                self.expect("PUNCT", "]")
                return LetEmptyList(name, span)
            if not self.at("IDENT"):
                self.fail({"IDENT", "["})
            return Let(name, self.parse_call(), span)
        if tok.text == "push":
            target = self.ident().text
            self.expect("PUNCT", ",")
            value = self.ident().text
            return Push(target, value, span)
        if tok.text == "repeat":
            count_tok = self.expect("INT")
            count = int(count_tok.text) if len(count_tok.text) <= 10 else MAX_INT + 1
            if count < 1 or count > MAX_INT:
                raise WorkflowSyntaxError(
                    "loop bound must be a positive integer", count_tok.line, count_tok.col
                )
            self.expect("PUNCT", "{")
            body = self.parse_block(("}",))
            self.expect("PUNCT", "}")
            return Repeat(count, body, span)
        # if test ( expr ) { ... } else { ... }
        self.expect("IDENT", "test")
        self.expect("PUNCT", "(")
        cond = self.ident().text
        self.expect("PUNCT", ")")
        self.expect("PUNCT", "{")
        then_body = self.parse_block(("}",))
        self.expect("PUNCT", "}")
        self.expect("KW", "else")
        self.expect("PUNCT", "{")
        else_body = self.parse_block(("}",))
        self.expect("PUNCT", "}")
        return IfTest(cond, then_body, else_body, span)

    def parse_call(self) -> Call:
        name_tok = self.ident()
        self.expect("PUNCT", "(")
        kwargs = []
        if not self.at("PUNCT", ")"):
            while True:
                key = self.ident().text
                self.expect("PUNCT", "=")
                kwargs.append((key, self.parse_arg()))
                if self.at("PUNCT", ","):
                    self.pos += 1
                    continue
                if not self.at("PUNCT", ")"):
                    self.fail({",", ")"})
                break
        self.expect("PUNCT", ")")
        return Call(name_tok.text, tuple(kwargs), Span(name_tok.line, name_tok.col))

    def parse_arg(self):
        tok = self.tok
        if tok.kind == "STRING":
            self.pos += 1
            return Str(tok.text)
        if tok.kind == "IDENT":
            self.pos += 1
            return VarRef(tok.text)
        if self.at("PUNCT", "["):
            self.pos += 1
            names = [self.ident().text]
            while self.at("PUNCT", ","):
                self.pos += 1
                names.append(self.ident().text)
            self.expect("PUNCT", "]")
            return ListOf(tuple(names))
        self.fail({"STRING", "IDENT", "["})


def parse(text: str | bytes) -> Workflow:
    """Parse one workflow program.

    Raises WorkflowSyntaxError (with line, column and expected tokens) on any
    malformed input, including bytes that are not valid UTF-8.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WorkflowSyntaxError("input is not valid UTF-8", 1, exc.start + 1) from None
    return _Parser(tokenize(text)).parse_workflow()


def split_bank_text(text: str) -> list[tuple[int, str]]:
    """Split a ``.flows`` file into (first line number, program text) chunks."""
    chunks: list[tuple[int, str]] = []
    current: list[str] = []
    start = 1
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip() == "---":
            chunks.append((start, "\n".join(current)))
            current = []
            start = lineno + 1
        else:
            current.append(line)
    chunks.append((start, "\n".join(current)))
    return [(ln, chunk) for ln, chunk in chunks if _has_code(chunk)]


def _has_code(chunk: str) -> bool:
    return any(line.strip() and not line.strip().startswith("#") for line in chunk.splitlines())
