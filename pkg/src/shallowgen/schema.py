"""BNF-style schemas over feature structures, and validation against them.

File format::

    # comment
    @root REPORT-STATEMENT
    @unknown-slots reject            # or: warn
    REPORT-STATEMENT ::= THRESHOLD-STMT | CONFIRMATION-STMT
    THRESHOLD-STMT ::= [ (COOP {THRESHOLD-EXCEEDING} REQ)
                         (TIME TIME-EXPR OPT)
                         (EXCEEDS EXCEEDS-VALUE REQ) ]
    TIME-EXPR ::= [ (PRED {SEASON} REQ) (NAME SEASON-NAME REQ) ]
                | [ (PRED {YEAR} REQ) (NAME YEAR-NAME REQ) ]

Value specs are a nonterminal name, an enumeration ``{A|B}``, ``INT``,
``DECIMAL`` (any number), ``TEXT``, or a numeric range such as ``INT[0..]``
or ``DECIMAL[0..1000]``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Union

from .ir import FeatureStructure, FeaturePath, Symbol, is_atomic

__all__ = [
    "SchemaError",
    "Finding",
    "ValidationReport",
    "NonTerminal",
    "EnumSpec",
    "NumberSpec",
    "TextSpec",
    "SlotSpec",
    "StructSpec",
    "IrSchema",
    "parse_schema",
    "validate",
]


class SchemaError(ValueError):
    def __init__(self, message, line=0):
        self.line = line
        super().__init__(f"{message} (line {line})" if line else message)


@dataclass(frozen=True)
class Finding:
    severity: str  # 'error' | 'warning'
    path: str
    message: str

    def __str__(self):
        where = self.path or "<root>"
        return f"{self.severity}: {where}: {self.message}"


@dataclass
class ValidationReport:
    findings: list = field(default_factory=list)

    @property
    def errors(self):
        return [f for f in self.findings if f.severity == "error"]

    @property
    def warnings(self):
        return [f for f in self.findings if f.severity == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self):
        return bool(self.findings)

    def __iter__(self):
        return iter(self.findings)

    def __len__(self):
        return len(self.findings)

    def extend(self, other):
        self.findings.extend(other)
        return self

    def __str__(self):
        return "\n".join(str(f) for f in self.findings)


@dataclass(frozen=True)
class NonTerminal:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class EnumSpec:
    symbols: frozenset

    def __str__(self):
        return "{" + "|".join(sorted(self.symbols)) + "}"


@dataclass(frozen=True)
class NumberSpec:
    integral: bool
    lo: Decimal | None = None
    hi: Decimal | None = None

    def __str__(self):
        base = "INT" if self.integral else "DECIMAL"
        if self.lo is None and self.hi is None:
            return base
        lo = "" if self.lo is None else str(self.lo)
        hi = "" if self.hi is None else str(self.hi)
        return f"{base}[{lo}..{hi}]"


@dataclass(frozen=True)
class TextSpec:
    def __str__(self):
        return "TEXT"


ValueSpec = Union[NonTerminal, EnumSpec, NumberSpec, TextSpec]


@dataclass(frozen=True)
class SlotSpec:
    name: str
    spec: ValueSpec
    required: bool


@dataclass(frozen=True)
class StructSpec:
    slots: tuple  # of SlotSpec

    def slot(self, name):
        for s in self.slots:
            if s.name == name:
                return s
        return None


Alternative = Union[StructSpec, ValueSpec]


@dataclass
class IrSchema:
    productions: dict  # name -> list[Alternative]
    root: str
    strict: bool = True

    def alternatives(self, name):
        return self.productions[name]

    # -- queries used by lint, textorg and the engine tests --------------

    def structures(self):
        for alts in self.productions.values():
            for a in alts:
                if isinstance(a, StructSpec):
                    yield a

    def _struct_alts(self, spec, seen=None):
        """Structure alternatives reachable from a value spec without
        descending into slots."""
        if not isinstance(spec, NonTerminal):
            return []
        seen = set() if seen is None else seen
        if spec.name in seen:
            return []
        seen.add(spec.name)
        out = []
        for a in self.productions[spec.name]:
            if isinstance(a, StructSpec):
                out.append(a)
            else:
                out.extend(self._struct_alts(a, seen))
        return out

    def root_structures(self):
        return self._struct_alts(NonTerminal(self.root))

    def path_walkable(self, path) -> bool:
        """True if ``path`` can be followed from some structure in the schema."""
        segs = FeaturePath(path)

        def walk(struct, i):
            s = struct.slot(segs[i])
            if s is None:
                return False
            if i == len(segs) - 1:
                return True
            return any(walk(sub, i + 1) for sub in self._struct_alts(s.spec))

        return any(walk(st, 0) for st in self.structures())

    def slot_enum(self, slot):
        """Union of enumeration values declared for ``slot`` in root structures."""
        vals = set()
        for st in self.root_structures():
            s = st.slot(slot)
            if s is not None and isinstance(s.spec, EnumSpec):
                vals |= s.spec.symbols
        return vals

    def required_slots(self, fs: FeatureStructure):
        """Required top-level slots of the root alternative ``fs`` matches."""
        st = self.match_structure(fs)
        return {s.name for s in st.slots if s.required} if st else set()

    def match_structure(self, fs, spec=None):
        spec = NonTerminal(self.root) if spec is None else spec
        for st in self._struct_alts(spec):
            if not _check(self, fs, st, "", set()).errors:
                return st
        return None

    def reorder(self, fs: FeatureStructure) -> FeatureStructure:
        """Return ``fs`` with slots in declaration order of its matching
        alternative (recursively); unknown slots keep relative order at the end."""

        def go(v, spec):
            if not isinstance(v, FeatureStructure):
                return v
            st = self.match_structure(v, spec) if not isinstance(spec, StructSpec) else spec
            if st is None:
                return v
            out = []
            for s in st.slots:
                if s.name in v:
                    out.append((s.name, go(v[s.name], s.spec)))
            out.extend((k, val) for k, val in v.items() if st.slot(k) is None)
            return FeatureStructure(out)

        return go(fs, NonTerminal(self.root))


# ---------------------------------------------------------------------------
# Parsing

_TOK = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\#[^\n]*)
  | (?P<directive>@[A-Za-z-]+)
  | (?P<defn>::=)
  | (?P<bar>\|)
  | (?P<lbr>\[)
  | (?P<rbr>\])
  | (?P<lp>\()
  | (?P<rp>\))
  | (?P<enum>\{[^}]*\})
  | (?P<range>(?:INT|DECIMAL)\[[^\]]*\])
  | (?P<word>[A-Za-z0-9][A-Za-z0-9_*+/<>=!?%&.-]*)
    """,
    re.VERBOSE,
)

_RANGE = re.compile(r"(INT|DECIMAL)\[\s*([-+]?\d+(?:\.\d+)?)?\s*\.\.\s*([-+]?\d+(?:\.\d+)?)?\s*\]\Z")


def _lex(text):
    line = 1
    i = 0
    out = []
    while i < len(text):
        m = _TOK.match(text, i)
        if m is None:
            raise SchemaError(f"unexpected character {text[i]!r}", line)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            out.append((kind, m.group(), line))
        line += m.group().count("\n")
        i = m.end()
    return out


def _value_spec(kind, tok, line) -> ValueSpec:
    if kind == "enum":
        syms = [s.strip().upper() for s in tok[1:-1].split("|")]
        if not syms or any(not s for s in syms):
            raise SchemaError(f"malformed enumeration {tok}", line)
        return EnumSpec(frozenset(syms))
    if kind == "range":
        m = _RANGE.match(tok)
        if not m:
            raise SchemaError(f"malformed range {tok}", line)
        lo = Decimal(m.group(2)) if m.group(2) else None
        hi = Decimal(m.group(3)) if m.group(3) else None
        return NumberSpec(m.group(1) == "INT", lo, hi)
    if kind == "word":
        up = tok.upper()
        if up == "INT":
            return NumberSpec(True)
        if up == "DECIMAL":
            return NumberSpec(False)
        if up == "TEXT":
            return TextSpec()
        return NonTerminal(up)
    raise SchemaError(f"expected a value spec, found {tok!r}", line)


def parse_schema(text: str) -> IrSchema:
    toks = _lex(text)
    productions: dict[str, list] = {}
    lines: dict[str, int] = {}
    refs: list[tuple[str, int]] = []
    root = None
    strict = True
    i = 0
    n = len(toks)

    def peek(k=0):
        return toks[i + k] if i + k < n else (None, None, toks[-1][2] if toks else 0)

    while i < n:
        kind, tok, line = toks[i]
        if kind == "directive":
            d = tok[1:].lower()
            if i + 1 >= n or toks[i + 1][0] != "word":
                raise SchemaError(f"directive {tok} needs an argument", line)
            arg = toks[i + 1][1].upper()
            if d == "root":
                if root is not None:
                    raise SchemaError("more than one @root directive", line)
                root = arg
            elif d == "unknown-slots":
                if arg not in ("REJECT", "WARN"):
                    raise SchemaError("@unknown-slots takes reject or warn", line)
                strict = arg == "REJECT"
            else:
                raise SchemaError(f"unknown directive {tok}", line)
            i += 2
            continue
        if kind != "word" or peek(1)[0] != "defn":
            raise SchemaError(f"expected 'Name ::=', found {tok!r}", line)
        name = tok.upper()
        if name in productions:
            raise SchemaError(f"nonterminal {name} defined twice", line)
        i += 2
        alts = []
        while True:
            kind, tok, line = peek()
            if kind == "lbr":
                i += 1
                slots = []
                seen = set()
                while peek()[0] == "lp":
                    _, _, pline = peek()
                    if i + 4 >= n:
                        raise SchemaError("truncated slot spec", pline)
                    (k1, slot, _), (k2, vtok, vline), (k3, flag, _), (k4, _, _) = toks[i + 1 : i + 5]
                    if k1 != "word" or k3 != "word" or k4 != "rp":
                        raise SchemaError("slot spec must be (SLOT ValueSpec REQ|OPT)", pline)
                    slot = slot.upper()
                    if slot in seen:
                        raise SchemaError(f"duplicate slot {slot} in alternative", pline)
                    seen.add(slot)
                    if flag.upper() not in ("REQ", "OPT"):
                        raise SchemaError(f"expected REQ or OPT, found {flag}", pline)
                    vs = _value_spec(k2, vtok, vline)
                    if isinstance(vs, NonTerminal):
                        refs.append((vs.name, vline))
                    slots.append(SlotSpec(slot, vs, flag.upper() == "REQ"))
                    i += 5
                kind, tok, line = peek()
                if kind != "rbr":
                    raise SchemaError(f"expected ']' or '(', found {tok!r}", line)
                i += 1
                alts.append(StructSpec(tuple(slots)))
            elif kind in ("word", "enum", "range"):
                vs = _value_spec(kind, tok, line)
                if isinstance(vs, NonTerminal):
                    refs.append((vs.name, line))
                alts.append(vs)
                i += 1
            else:
                raise SchemaError(f"expected an alternative for {name}, found {tok!r}", line)
            if peek()[0] == "bar":
                i += 1
                continue
            break
        productions[name] = alts
        lines[name] = line

    if root is None:
        raise SchemaError("missing @root directive")
    if root not in productions:
        raise SchemaError(f"root nonterminal {root} is not defined")
    for ref, line in refs:
        if ref not in productions:
            raise SchemaError(f"undefined nonterminal {ref}", line)
    schema = IrSchema(productions, root, strict)
    _check_cycles(schema)
    return schema


def _check_cycles(schema: IrSchema):
    # A ::= B, B ::= A without an intervening structure never terminates.
    state: dict[str, int] = {}

    def visit(name, trail):
        if state.get(name) == 2:
            return
        if state.get(name) == 1:
            raise SchemaError("nonterminal cycle without structure: " + " -> ".join(trail + [name]))
        state[name] = 1
        for a in schema.productions[name]:
            if isinstance(a, NonTerminal):
                visit(a.name, trail + [name])
        state[name] = 2

    for name in schema.productions:
        visit(name, [])


# ---------------------------------------------------------------------------
# Validation


def _join(path, slot):
    return f"{path}.{slot}" if path else slot


def _depth(path):
    return 0 if not path else path.count(".") + 1


def _describe(v):
    if isinstance(v, FeatureStructure):
        return "a structure"
    if isinstance(v, Symbol):
        return f"symbol {v.name}"
    if isinstance(v, str):
        return f"text {v!r}"
    return f"{type(v).__name__} {v}"


def _check(schema, v, spec, path, active) -> ValidationReport:
    rep = ValidationReport()
    err = lambda msg, p=path: rep.findings.append(Finding("error", p, msg))
    if isinstance(spec, StructSpec):
        if not isinstance(v, FeatureStructure):
            err(f"expected a structure, found {_describe(v)}")
            return rep
        for s in spec.slots:
            if s.name not in v:
                if s.required:
                    err(f"required slot {s.name} is missing", _join(path, s.name))
                continue
            rep.extend(_check(schema, v[s.name], s.spec, _join(path, s.name), active).findings)
        for k in v:
            if spec.slot(k) is None:
                sev = "error" if schema.strict else "warning"
                rep.findings.append(Finding(sev, _join(path, k), f"unknown slot {k}"))
        return rep
    if isinstance(spec, NonTerminal):
        key = (spec.name, id(v))
        if key in active:
            err(f"cyclic match of {spec.name}")
            return rep
        active = active | {key}
        best = None
        best_score = None
        for alt in schema.productions[spec.name]:
            r = _check(schema, v, alt, path, active)
            if not r.errors:
                if best is None or best.errors or len(r) < len(best):
                    best = r
                if not r.findings:
                    break
                continue
            if best is not None and not best.errors:
                continue
            deepest = max(_depth(f.path) for f in r.errors)
            score = (len(r.errors), -deepest)
            if best_score is None or score < best_score:
                best, best_score = r, score
        if best is None:
            err(f"{spec.name} has no alternatives")
            return rep
        return best
    if isinstance(spec, EnumSpec):
        if not isinstance(v, Symbol) or v.name not in spec.symbols:
            err(f"expected one of {spec}, found {_describe(v)}")
        return rep
    if isinstance(spec, NumberSpec):
        ok_type = (isinstance(v, int) and not isinstance(v, bool)) if spec.integral else (
            isinstance(v, (int, Decimal)) and not isinstance(v, bool)
        )
        if not ok_type:
            err(f"expected {'an integer' if spec.integral else 'a number'}, found {_describe(v)}")
        elif (spec.lo is not None and v < spec.lo) or (spec.hi is not None and v > spec.hi):
            err(f"{v} outside range {spec}")
        return rep
    if isinstance(spec, TextSpec):
        if not isinstance(v, str) or isinstance(v, Symbol):
            err(f"expected text, found {_describe(v)}")
        return rep
    raise TypeError(spec)  # pragma: no cover


def validate(fs, schema: IrSchema) -> ValidationReport:
    """Check ``fs`` against the schema root.

    When no alternative matches, the findings of the closest alternative
    (fewest errors, then deepest failing path) are reported.  Never raises
    on malformed input trees.
    """
    if not isinstance(fs, FeatureStructure) and not is_atomic(fs):
        return ValidationReport([Finding("error", "", f"not an IR value: {type(fs).__name__}")])
    return _check(schema, fs, NonTerminal(schema.root), "", frozenset())
