"""Tokenizer and reader for the parenthesized notation shared by every file
format in a grammar pack (IR expressions, TGL rules, skeletons, schemata,
aggregation rules).

The reader is deliberately dumb: it produces a tree of :class:`SList` nodes
and :class:`Atom` leaves, each carrying its source position, and leaves all
interpretation to the callers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterator, Union


class ReadError(ValueError):
    """Syntax error with a 1-based line/column position."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        if line:
            message = f"{message} (line {line}, column {col})"
        super().__init__(message)


@dataclass(frozen=True)
class Atom:
    kind: str  # 'symbol' | 'keyword' | 'string' | 'int' | 'decimal'
    value: object
    line: int = 0
    col: int = 0
    quoted: bool = False


@dataclass
class SList:
    items: list
    bracket: str = "("  # '(' or '['
    line: int = 0
    col: int = 0
    quoted: bool = False

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    def __getitem__(self, i):
        return self.items[i]


Node = Union[Atom, SList]

_CLOSERS = {"(": ")", "[": "]"}

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<open>[(\[])
  | (?P<close>[)\]])
  | (?P<quote>')
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<badstring>")
  | (?P<atom>[^\s()\[\]"';]+)
    """,
    re.VERBOSE,
)

_INT = re.compile(r"[-+]?\d+\Z")
_DEC = re.compile(r"[-+]?\d+\.\d+\Z")


def _unescape(body: str) -> str:
    return re.sub(r"\\(.)", lambda m: m.group(1), body)


@dataclass
class _Pos:
    text: str
    line_starts: list = field(default_factory=list)

    def __post_init__(self):
        self.line_starts = [0] + [m.end() for m in re.finditer("\n", self.text)]

    def at(self, offset: int) -> tuple[int, int]:
        lo, hi = 0, len(self.line_starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.line_starts[mid] <= offset:
                lo = mid
            else:
                hi = mid - 1
        return lo + 1, offset - self.line_starts[lo] + 1


def _strip_comments(text: str, comment: str) -> str:
    # Blank out comments but keep offsets stable; respect string literals.
    out = []
    in_str = False
    esc = False
    skipping = False
    for ch in text:
        if skipping:
            if ch == "\n":
                skipping = False
                out.append(ch)
            else:
                out.append(" ")
            continue
        if in_str:
            out.append(ch)
            if esc:
                esc = False
            elif ch == "\\":
                esc = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
            out.append(ch)
        elif ch in comment:
            skipping = True
            out.append(" ")
        else:
            out.append(ch)
    return "".join(out)


def tokenize(text: str, comment: str = ";") -> Iterator[tuple[str, str, int, int]]:
    """Yield ``(kind, text, line, col)`` tokens; whitespace is dropped."""
    pos = _Pos(text)
    clean = _strip_comments(text, comment) if comment else text
    i = 0
    n = len(clean)
    while i < n:
        m = _TOKEN.match(clean, i)
        if m is None:  # pragma: no cover - the atom branch matches everything else
            line, col = pos.at(i)
            raise ReadError(f"unexpected character {clean[i]!r}", line, col)
        kind = m.lastgroup
        if kind != "ws":
            line, col = pos.at(i)
            if kind == "badstring":
                raise ReadError("unterminated string", line, col)
            yield kind, m.group(), line, col
        i = m.end()


def _atom(tok: str, line: int, col: int, quoted: bool) -> Atom:
    if tok.startswith('"'):
        return Atom("string", _unescape(tok[1:-1]), line, col, quoted)
    if _INT.match(tok):
        return Atom("int", int(tok), line, col, quoted)
    if _DEC.match(tok):
        return Atom("decimal", Decimal(tok), line, col, quoted)
    if tok.startswith(":") and len(tok) > 1:
        return Atom("keyword", tok[1:].upper(), line, col, quoted)
    return Atom("symbol", tok.upper(), line, col, quoted)


def read_all(text: str, comment: str = ";") -> list[Node]:
    """Read every top-level form in ``text``."""
    stack: list[SList] = []
    top: list[Node] = []
    pending_quote: tuple[int, int] | None = None

    def push(node):
        if stack:
            stack[-1].items.append(node)
        else:
            top.append(node)

    for kind, tok, line, col in tokenize(text, comment):
        if kind == "quote":
            if pending_quote is not None:
                raise ReadError("double quote mark", line, col)
            pending_quote = (line, col)
            continue
        quoted = pending_quote is not None
        pending_quote = None
        if kind == "open":
            stack.append(SList([], tok, line, col, quoted))
        elif kind == "close":
            if quoted:
                raise ReadError("quote mark before closing bracket", line, col)
            if not stack:
                raise ReadError(f"unbalanced {tok!r}", line, col)
            node = stack.pop()
            if _CLOSERS[node.bracket] != tok:
                raise ReadError(
                    f"mismatched {tok!r} closing {node.bracket!r} opened at line {node.line}",
                    line,
                    col,
                )
            push(node)
        else:
            push(_atom(tok, line, col, quoted))
    if pending_quote is not None:
        raise ReadError("dangling quote mark", *pending_quote)
    if stack:
        node = stack[-1]
        raise ReadError(f"unclosed {node.bracket!r}", node.line, node.col)
    return top


def quote_string(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'
