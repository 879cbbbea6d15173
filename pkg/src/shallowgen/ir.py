"""Feature structures: the attribute-value matrices used as intermediate
representation (IR) between text organization and realization.

Concrete syntax::

    [(COOP THRESHOLD-EXCEEDING)
     (TIME [(PRED SEASON) (NAME [(SEASON WINTER) (YEAR 1996)])])
     (SITE "Völklingen-City")]

Square brackets delimit structures, parentheses delimit ``(SLOT value)``
pairs.  Values are symbols, integers, decimals, quoted UTF-8 strings or
nested structures.  ``#`` starts a comment.

Structures are immutable; every edit returns a new structure.
"""

from __future__ import annotations

import hashlib
import re
from collections.abc import Mapping
from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable, Iterator, Union

from .sexpr import Atom, ReadError, SList, quote_string, read_all

__all__ = [
    "ABSENT",
    "UNBOUND",
    "CLASH",
    "Symbol",
    "FeatureStructure",
    "FeaturePath",
    "IRSyntaxError",
    "EditError",
    "parse_ir",
    "parse_ir_many",
    "serialize_ir",
    "get_path",
    "set_path",
    "delete_path",
    "reify",
    "raise_slot",
    "rename",
    "move",
    "edit",
    "unify_atomic",
    "canonical_hash",
    "is_atomic",
    "value_key",
    "values_equal",
]


class _Marker:
    __slots__ = ("name",)

    def __init__(self, name):
        self.name = name

    def __repr__(self):
        return self.name

    def __bool__(self):
        return False


#: Returned by :func:`get_path` when any segment is missing.
ABSENT = _Marker("ABSENT")
#: The identity element of :func:`unify_atomic`.
UNBOUND = _Marker("UNBOUND")
#: Result of unifying two distinct atoms.
CLASH = _Marker("CLASH")


class IRSyntaxError(ReadError):
    pass


class EditError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Symbol:
    name: str

    def __post_init__(self):
        if not self.name:
            raise ValueError("empty symbol")

    def __str__(self):
        return self.name

    def __repr__(self):
        return f"Symbol({self.name!r})"


Value = Union[Symbol, int, Decimal, str, "FeatureStructure"]

_SLOT_RE = re.compile(r"[A-Z][A-Z0-9_*+/<>=!?%&-]*\Z")


def _check_slot(name: str) -> str:
    if not isinstance(name, str) or not _SLOT_RE.match(name):
        raise ValueError(f"illegal slot name {name!r}")
    return name


def is_atomic(v) -> bool:
    return isinstance(v, (Symbol, str, Decimal)) or (isinstance(v, int) and not isinstance(v, bool))


def _check_value(v):
    if isinstance(v, FeatureStructure) or is_atomic(v):
        return v
    raise TypeError(f"not an IR value: {v!r}")


def value_key(v):
    """Type-tagged, slot-order-insensitive key used for equality and hashing."""
    if isinstance(v, FeatureStructure):
        return v._key()
    if isinstance(v, Symbol):
        return ("S", v.name)
    if isinstance(v, bool):
        raise TypeError("booleans are not IR values")
    if isinstance(v, int):
        return ("I", v)
    if isinstance(v, Decimal):
        return ("D", v.normalize())
    if isinstance(v, str):
        return ("T", v)
    raise TypeError(f"not an IR value: {v!r}")


def values_equal(a, b) -> bool:
    if a is ABSENT or b is ABSENT:
        return a is b
    return value_key(a) == value_key(b)


class FeatureStructure(Mapping):
    """An ordered, immutable mapping from slot names to values.

    Slot order is kept for printing but ignored by ``==`` and ``hash``.
    """

    __slots__ = ("_items", "_index", "_keycache")

    def __init__(self, items: Iterable[tuple[str, Value]] | Mapping = ()):
        if isinstance(items, Mapping):
            items = items.items()
        pairs = []
        index = {}
        for slot, value in items:
            _check_slot(slot)
            if slot in index:
                raise ValueError(f"duplicate slot {slot}")
            index[slot] = len(pairs)
            pairs.append((slot, _check_value(value)))
        self._items = tuple(pairs)
        self._index = index
        self._keycache = None

    # Mapping protocol
    def __getitem__(self, slot):
        return self._items[self._index[slot]][1]

    def __iter__(self) -> Iterator[str]:
        return (s for s, _ in self._items)

    def __len__(self):
        return len(self._items)

    def __contains__(self, slot):
        return slot in self._index

    def items(self):
        return self._items

    def _key(self):
        if self._keycache is None:
            self._keycache = ("F", tuple(sorted((s, value_key(v)) for s, v in self._items)))
        return self._keycache

    def __eq__(self, other):
        if not isinstance(other, FeatureStructure):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return f"FeatureStructure({serialize_ir(self, indent=None)})"

    def __str__(self):
        return serialize_ir(self, indent=None)

    def with_slot(self, slot: str, value) -> "FeatureStructure":
        if slot in self._index:
            i = self._index[slot]
            items = list(self._items)
            items[i] = (slot, value)
            return FeatureStructure(items)
        return FeatureStructure(self._items + ((slot, value),))

    def without(self, slot: str) -> "FeatureStructure":
        return FeatureStructure(p for p in self._items if p[0] != slot)


class FeaturePath(tuple):
    """A non-empty sequence of slot names, written ``TIME.NAME.YEAR``."""

    def __new__(cls, spec):
        if isinstance(spec, FeaturePath):
            return spec
        if isinstance(spec, Symbol):
            spec = spec.name
        if isinstance(spec, str):
            segs = tuple(spec.upper().split("."))
        else:
            segs = tuple(spec)
        if not segs:
            raise ValueError("empty feature path")
        for s in segs:
            _check_slot(s)
        return super().__new__(cls, segs)

    def __str__(self):
        return ".".join(self)

    def __repr__(self):
        return f"FeaturePath({str(self)!r})"


# ---------------------------------------------------------------------------
# Parsing and printing


def _node_to_value(node):
    if isinstance(node, SList):
        if node.bracket != "[":
            raise IRSyntaxError("expected a value, found a '(' pair", node.line, node.col)
        return _node_to_fs(node)
    if node.quoted:
        raise IRSyntaxError("quote marks are not allowed in IR", node.line, node.col)
    if node.kind == "symbol":
        return Symbol(node.value)
    if node.kind == "string":
        return node.value
    if node.kind in ("int", "decimal"):
        return node.value
    raise IRSyntaxError(f"unexpected keyword :{node.value}", node.line, node.col)


def _node_to_fs(node: SList) -> FeatureStructure:
    pairs = []
    seen = {}
    for pair in node.items:
        if not isinstance(pair, SList) or pair.bracket != "(":
            line, col = pair.line, pair.col
            raise IRSyntaxError("expected a (SLOT value) pair", line, col)
        if len(pair.items) != 2:
            raise IRSyntaxError(
                f"a pair needs exactly a slot and a value, found {len(pair.items)} items",
                pair.line,
                pair.col,
            )
        slot_node, value_node = pair.items
        if not isinstance(slot_node, Atom) or slot_node.kind != "symbol" or not _SLOT_RE.match(slot_node.value):
            raise IRSyntaxError("slot name must be a symbol", slot_node.line, slot_node.col)
        slot = slot_node.value
        if slot in seen:
            raise IRSyntaxError(f"duplicate slot {slot}", slot_node.line, slot_node.col)
        seen[slot] = True
        pairs.append((slot, _node_to_value(value_node)))
    return FeatureStructure(pairs)


def parse_ir_many(text: str) -> list[FeatureStructure]:
    """Parse a file holding zero or more IR expressions."""
    out = []
    for node in read_all(text, comment="#"):
        if not isinstance(node, SList) or node.bracket != "[":
            raise IRSyntaxError("an IR expression must start with '['", node.line, node.col)
        out.append(_node_to_fs(node))
    return out


def parse_ir(text: str) -> FeatureStructure:
    """Parse exactly one IR expression."""
    try:
        forms = parse_ir_many(text)
    except IRSyntaxError:
        raise
    except ReadError as e:
        raise IRSyntaxError(str(e).split(" (line")[0], e.line, e.col) from None
    if len(forms) != 1:
        raise IRSyntaxError(f"expected one IR expression, found {len(forms)}")
    return forms[0]


def _fmt_atom(v) -> str:
    if isinstance(v, Symbol):
        return v.name
    if isinstance(v, str):
        return quote_string(v)
    if isinstance(v, Decimal):
        s = str(v)
        if "E" in s or "e" in s or "." not in s:
            s = format(v, "f")
            if "." not in s:
                s += ".0"
        return s
    return str(v)


def serialize_ir(fs: FeatureStructure, indent: int | None = 1) -> str:
    """Print ``fs``; slots appear in stored order.

    With ``indent`` set, top-level slots go on separate lines (Figure-style
    layout); ``indent=None`` prints everything on one line.
    """

    def value(v, depth):
        if isinstance(v, FeatureStructure):
            return struct(v, depth + 1)
        return _fmt_atom(v)

    def struct(s, depth):
        if not s:
            return "[]"
        parts = [f"({k} {value(v, depth)})" for k, v in s.items()]
        if indent is None or depth > 0:
            return "[" + " ".join(parts) + "]"
        sep = "\n" + " " * indent
        return "[" + sep.join(parts) + "]"

    return struct(fs, 0)


# ---------------------------------------------------------------------------
# Paths and edits


def get_path(fs, path) -> Value:
    """Value at ``path`` or :data:`ABSENT`; never raises on missing slots."""
    cur = fs
    for seg in FeaturePath(path):
        if not isinstance(cur, FeatureStructure) or seg not in cur:
            return ABSENT
        cur = cur[seg]
    return cur


def set_path(fs: FeatureStructure, path, value) -> FeatureStructure:
    p = FeaturePath(path)
    _check_value(value)
    head, rest = p[0], p[1:]
    if not rest:
        return fs.with_slot(head, value)
    child = fs.get(head, ABSENT)
    if child is ABSENT:
        child = FeatureStructure()
    elif not isinstance(child, FeatureStructure):
        raise EditError(f"cannot descend into atomic value at {head}")
    return fs.with_slot(head, set_path(child, rest, value))


def _update_at(fs: FeatureStructure, path: FeaturePath, fn) -> FeatureStructure:
    """Rebuild the parent of ``path[-1]`` via ``fn(parent, last_slot)``."""
    if len(path) == 1:
        if path[0] not in fs:
            raise EditError(f"no slot {path[0]}")
        return fn(fs, path[0])
    head = path[0]
    child = fs.get(head, ABSENT)
    if not isinstance(child, FeatureStructure):
        raise EditError(f"path {'.'.join(path)} does not exist")
    return fs.with_slot(head, _update_at(child, FeaturePath(path[1:]), fn))


def delete_path(fs: FeatureStructure, path) -> FeatureStructure:
    p = FeaturePath(path)
    if get_path(fs, p) is ABSENT:
        raise EditError(f"cannot delete missing path {p}")
    return _update_at(fs, p, lambda parent, slot: parent.without(slot))


def reify(fs: FeatureStructure, path, new_slot: str) -> FeatureStructure:
    """Wrap the value at ``path`` into a one-slot structure ``[(new_slot v)]``."""
    p = FeaturePath(path)
    _check_slot(new_slot)
    v = get_path(fs, p)
    if v is ABSENT:
        raise EditError(f"cannot reify missing path {p}")
    return set_path(fs, p, FeatureStructure([(new_slot, v)]))


def raise_slot(fs: FeatureStructure, path) -> FeatureStructure:
    """Splice the slots of the structure at ``path`` into its parent level,
    in place of the raised slot."""
    p = FeaturePath(path)
    v = get_path(fs, p)
    if v is ABSENT:
        raise EditError(f"cannot raise missing path {p}")
    if not isinstance(v, FeatureStructure):
        raise EditError(f"cannot raise atomic value at {p}")

    def splice(parent, slot):
        out = []
        for k, val in parent.items():
            if k == slot:
                for ik, iv in v.items():
                    if ik in parent and ik != slot:
                        raise EditError(f"raising {p} collides with sibling slot {ik}")
                    out.append((ik, iv))
            else:
                out.append((k, val))
        return FeatureStructure(out)

    return _update_at(fs, p, splice)


def rename(fs: FeatureStructure, path, new_slot: str) -> FeatureStructure:
    """Rename the last segment of ``path``, keeping its position."""
    p = FeaturePath(path)
    _check_slot(new_slot)

    def ren(parent, slot):
        if new_slot != slot and new_slot in parent:
            raise EditError(f"renaming {p} collides with sibling slot {new_slot}")
        return FeatureStructure((new_slot if k == slot else k, v) for k, v in parent.items())

    return _update_at(fs, p, ren)


def move(fs: FeatureStructure, src, dst) -> FeatureStructure:
    v = get_path(fs, src)
    if v is ABSENT:
        raise EditError(f"cannot move missing path {FeaturePath(src)}")
    return set_path(delete_path(fs, src), dst, v)


_EDITS = {
    "set": set_path,
    "delete": delete_path,
    "reify": reify,
    "raise": raise_slot,
    "rename": rename,
    "move": move,
}


def edit(fs: FeatureStructure, op: tuple) -> FeatureStructure:
    """Apply one edit given as a tuple, e.g. ``("set", "A.B", 1)``,
    ``("delete", "A")``, ``("reify", "AMOUNT", "VALUE")``, ``("raise", "X")``."""
    name, *args = op
    try:
        fn = _EDITS[name.lower()]
    except KeyError:
        raise EditError(f"unknown edit operation {name!r}") from None
    return fn(fs, *args)


# ---------------------------------------------------------------------------
# Unification and hashing


def unify_atomic(a, b):
    """Unify two atoms; :data:`UNBOUND` is the identity, distinct atoms give
    :data:`CLASH`."""
    if a is UNBOUND or a is ABSENT:
        return b if b is not ABSENT else UNBOUND
    if b is UNBOUND or b is ABSENT:
        return a
    if a is CLASH or b is CLASH:
        return CLASH
    return a if values_equal(a, b) else CLASH


def _canon(v, out: list):
    # T<len>:text  S<len>:sym  I<int>;  D<normalized>;  F<n>{slot=value...}
    if isinstance(v, FeatureStructure):
        out.append(f"F{len(v)}{{")
        for slot in sorted(v):
            out.append(f"{slot}=")
            _canon(v[slot], out)
        out.append("}")
    elif isinstance(v, Symbol):
        out.append(f"S{len(v.name)}:{v.name}")
    elif isinstance(v, bool):
        raise TypeError("booleans are not IR values")
    elif isinstance(v, int):
        out.append(f"I{v};")
    elif isinstance(v, Decimal):
        n = v.normalize()
        out.append(f"D{format(n, 'f')};")
    elif isinstance(v, str):
        out.append(f"T{len(v)}:{v}")
    else:
        raise TypeError(f"not an IR value: {v!r}")


def canonical_hash(v) -> str:
    """SHA-256 hex digest of the canonical encoding of ``v``.

    The encoding sorts slots by name and tags every atom with its type, so
    it is insensitive to slot order and distinguishes ``1`` from ``1.0``
    from ``"1"``.  Atomic values are accepted too (memo keys need them).
    """
    out: list[str] = []
    _canon(v, out)
    return hashlib.sha256("".join(out).encode("utf-8")).hexdigest()
