"""Text organization: turn a report request plus data bindings into a plan
of schema-valid IR statements and canned blocks.

The pipeline is instantiate -> augment -> restructure -> aggregate.  Report
skeletons, restructuring schemata and aggregation rules are declarative data
read from the grammar pack (see ``parse_skeletons``, ``parse_schemata`` and
``parse_aggregation`` for the file formats).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Union

from .ir import (
    ABSENT,
    EditError,
    FeaturePath,
    FeatureStructure,
    Symbol,
    edit,
    get_path,
    serialize_ir,
    values_equal,
)
from .schema import IrSchema, validate
from .sexpr import Atom, ReadError, SList, read_all


class OrganizerError(Exception):
    """Failure in one stage of the organizer; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"{stage}: {message}")


class MissingBinding(OrganizerError):
    def __init__(self, slot: str, binding: str):
        self.slot = slot
        self.binding = binding
        super().__init__("instantiate", f"skeleton slot {slot!r} needs binding {binding.lower()!r}")


class NoDataError(OrganizerError):
    """A statement has no data and its skeleton slot declares no fallback."""


class PackFormatError(ReadError):
    pass


# ---------------------------------------------------------------------------
# Shared reading helpers


def _value(node):
    if isinstance(node, SList):
        raise PackFormatError("expected an atomic value", node.line, node.col)
    if node.kind == "symbol":
        return Symbol(node.value)
    if node.kind == "keyword":
        raise PackFormatError(f"unexpected keyword :{node.value}", node.line, node.col)
    return node.value


def _name(node, what="name") -> str:
    if not isinstance(node, Atom) or node.kind not in ("symbol", "string"):
        raise PackFormatError(f"expected a {what}", getattr(node, "line", 0), getattr(node, "col", 0))
    return str(node.value)


def _path(node) -> FeaturePath:
    return FeaturePath(_name(node, "feature path"))


def _plist(form: SList, start: int, allowed: set) -> dict:
    out = {}
    items = form.items[start:]
    i = 0
    while i < len(items):
        k = items[i]
        if not (isinstance(k, Atom) and k.kind == "keyword"):
            raise PackFormatError("expected a :KEYWORD", getattr(k, "line", 0), getattr(k, "col", 0))
        if k.value not in allowed:
            raise PackFormatError(f"unknown option :{k.value}", k.line, k.col)
        if i + 1 >= len(items):
            raise PackFormatError(f"option :{k.value} lacks a value", k.line, k.col)
        out[k.value] = items[i + 1]
        i += 2
    return out


def _list(node, what) -> list:
    if not isinstance(node, SList):
        raise PackFormatError(f"expected a list of {what}", node.line, node.col)
    return node.items


# ---------------------------------------------------------------------------
# Conditions and edits


@dataclass(frozen=True)
class Condition:
    """``(present P)``, ``(absent P)``, ``(eq P V)``, ``(in P V...)``,
    ``(memory-eq P)`` or ``(previous-eq P)``."""

    op: str
    path: FeaturePath
    values: tuple = ()

    def holds(self, fs: FeatureStructure, memory: "DiscourseMemory | None" = None) -> bool:
        v = get_path(fs, self.path)
        if self.op == "PRESENT":
            return v is not ABSENT
        if self.op == "ABSENT":
            return v is ABSENT
        if self.op in ("EQ", "IN"):
            return v is not ABSENT and any(values_equal(v, x) for x in self.values)
        if memory is None:
            return False
        if self.op == "MEMORY-EQ":
            m = memory.recall(self.path)
            return v is not ABSENT and m is not ABSENT and values_equal(v, m)
        if self.op == "PREVIOUS-EQ":
            if memory.previous is None or v is ABSENT:
                return False
            p = get_path(memory.previous, self.path)
            return p is not ABSENT and values_equal(v, p)
        raise ValueError(self.op)


_COND_ARITY = {"PRESENT": 1, "ABSENT": 1, "EQ": 2, "IN": None, "MEMORY-EQ": 1, "PREVIOUS-EQ": 1}
_EDIT_ARITY = {"SET": 2, "DELETE": 1, "REIFY": 2, "RAISE": 1, "RENAME": 2, "MOVE": 2}


def _condition(node, allowed=_COND_ARITY) -> Condition:
    items = _list(node, "conditions")
    if not items:
        raise PackFormatError("empty condition", node.line, node.col)
    op = _name(items[0], "condition operator").upper()
    if op not in allowed:
        raise PackFormatError(f"unknown condition {op.lower()}", node.line, node.col)
    arity = allowed[op]
    args = items[1:]
    if (arity is not None and len(args) != arity) or (arity is None and len(args) < 2):
        raise PackFormatError(f"wrong number of arguments to {op.lower()}", node.line, node.col)
    return Condition(op, _path(args[0]), tuple(_value(a) for a in args[1:]))


def _edit(node) -> tuple:
    items = _list(node, "edits")
    if not items:
        raise PackFormatError("empty edit", node.line, node.col)
    op = _name(items[0], "edit operator").upper()
    if op not in _EDIT_ARITY:
        raise PackFormatError(f"unknown edit {op.lower()}", node.line, node.col)
    args = items[1:]
    if len(args) != _EDIT_ARITY[op]:
        raise PackFormatError(f"wrong number of arguments to {op.lower()}", node.line, node.col)
    path = str(_path(args[0]))
    if op == "SET":
        return ("set", path, _value(args[1]))
    if op == "MOVE":
        return ("move", path, str(_path(args[1])))
    if op in ("REIFY", "RENAME"):
        return (op.lower(), path, _name(args[1], "slot name").upper())
    return (op.lower(), path)


def edit_paths(op: tuple) -> list[FeaturePath]:
    """Every path an edit reads or writes."""
    name, *args = op
    out = [FeaturePath(args[0])]
    if name == "move":
        out.append(FeaturePath(args[1]))
    if name == "rename":
        out.append(FeaturePath(args[0])[:-1] + (args[1],))
    return out


def format_edit(op: tuple) -> str:
    name, *args = op
    return "(" + " ".join([name] + [serialize_ir(a) if isinstance(a, FeatureStructure) else str(a) for a in args]) + ")"


# ---------------------------------------------------------------------------
# Skeletons


@dataclass(frozen=True)
class StatementSlot:
    name: str
    assertion: str
    bind: tuple[tuple[str, str], ...]  # (payload slot, binding name)
    context: tuple[str, ...] = ()
    when: str | None = None
    fallback: str | None = None


@dataclass(frozen=True)
class CannedSlot:
    name: str
    key: str  # binding whose value names the canned text
    when: str | None = None


@dataclass(frozen=True)
class ReportSkeleton:
    report_type: str
    slots: tuple[Union[StatementSlot, CannedSlot], ...]


CONTEXT_NAMES = {"LANGUAGE", "SITE", "LEGISLATION", "DIAGRAMS"}
WHEN_FLAGS = {"CONFIRM", "COMPARE", "DESCRIBE-STATION", "DESCRIBE-POLLUTANT", "DIAGRAMS"}


def parse_skeletons(text: str) -> dict[str, ReportSkeleton]:
    """Read ``(SKELETON type slot...)`` forms.

    A slot is ``(STATEMENT name :TYPE t :BIND ((SLOT binding)...)
    [:CONTEXT (name...)] [:WHEN flag] [:FALLBACK t])`` or
    ``(CANNED name :KEY binding [:WHEN flag])``.
    """
    out = {}
    for form in read_all(text, comment="#"):
        items = _list(form, "skeleton forms")
        if len(items) < 2 or _name(items[0]).upper() != "SKELETON":
            raise PackFormatError("expected (SKELETON type slot...)", form.line, form.col)
        rtype = _name(items[1], "report type").upper()
        if rtype in out:
            raise PackFormatError(f"duplicate skeleton {rtype}", form.line, form.col)
        slots = []
        for s in items[2:]:
            parts = _list(s, "skeleton slots")
            if len(parts) < 2:
                raise PackFormatError("slot needs a kind and a name", s.line, s.col)
            kind = _name(parts[0]).upper()
            name = _name(parts[1]).lower()
            if kind == "STATEMENT":
                opts = _plist(s, 2, {"TYPE", "BIND", "CONTEXT", "WHEN", "FALLBACK"})
                if "TYPE" not in opts:
                    raise PackFormatError(f"statement slot {name} lacks :TYPE", s.line, s.col)
                bind = []
                for b in _list(opts.get("BIND", SList([])), "bindings"):
                    pair = _list(b, "bindings")
                    if len(pair) != 2:
                        raise PackFormatError("binding must be (SLOT name)", b.line, b.col)
                    bind.append((_name(pair[0]).upper(), _name(pair[1]).upper()))
                ctx = tuple(_name(c).upper() for c in _list(opts.get("CONTEXT", SList([])), "context names"))
                for c in ctx:
                    if c not in CONTEXT_NAMES:
                        raise PackFormatError(f"unknown context attachment {c}", s.line, s.col)
                when = _name(opts["WHEN"]).upper() if "WHEN" in opts else None
                if when is not None and when not in WHEN_FLAGS:
                    raise PackFormatError(f"unknown condition flag {when}", s.line, s.col)
                fallback = _name(opts["FALLBACK"]).upper() if "FALLBACK" in opts else None
                slots.append(StatementSlot(name, _name(opts["TYPE"]).upper(), tuple(bind), ctx, when, fallback))
            elif kind == "CANNED":
                opts = _plist(s, 2, {"KEY", "WHEN"})
                if "KEY" not in opts:
                    raise PackFormatError(f"canned slot {name} lacks :KEY", s.line, s.col)
                when = _name(opts["WHEN"]).upper() if "WHEN" in opts else None
                if when is not None and when not in WHEN_FLAGS:
                    raise PackFormatError(f"unknown condition flag {when}", s.line, s.col)
                slots.append(CannedSlot(name, _name(opts["KEY"]).upper(), when))
            else:
                raise PackFormatError(f"unknown slot kind {kind}", s.line, s.col)
        out[rtype] = ReportSkeleton(rtype, tuple(slots))
    return out


# ---------------------------------------------------------------------------
# Restructuring schemata


@dataclass(frozen=True)
class RestructuringSchema:
    name: str
    match: tuple[Condition, ...]
    edits: tuple[tuple, ...]
    output: tuple[Condition, ...] = ()

    def matches(self, fs: FeatureStructure) -> bool:
        return all(c.holds(fs) for c in self.match)


def parse_schemata(text: str) -> list[RestructuringSchema]:
    """Read ``(SCHEMA name :MATCH (cond...) :EDITS (edit...) [:OUTPUT (cond...)])``."""
    out = []
    seen = set()
    plain = {k: v for k, v in _COND_ARITY.items() if k not in ("MEMORY-EQ", "PREVIOUS-EQ")}
    for form in read_all(text, comment="#"):
        items = _list(form, "schema forms")
        if len(items) < 2 or _name(items[0]).upper() != "SCHEMA":
            raise PackFormatError("expected (SCHEMA name ...)", form.line, form.col)
        name = _name(items[1]).lower()
        if name in seen:
            raise PackFormatError(f"duplicate schema {name}", form.line, form.col)
        seen.add(name)
        opts = _plist(form, 2, {"MATCH", "EDITS", "OUTPUT"})
        if "MATCH" not in opts or "EDITS" not in opts:
            raise PackFormatError(f"schema {name} needs :MATCH and :EDITS", form.line, form.col)
        out.append(
            RestructuringSchema(
                name,
                tuple(_condition(c, plain) for c in _list(opts["MATCH"], "conditions")),
                tuple(_edit(e) for e in _list(opts["EDITS"], "edits")),
                tuple(_condition(c, plain) for c in _list(opts.get("OUTPUT", SList([])), "conditions")),
            )
        )
    return out


# ---------------------------------------------------------------------------
# Aggregation


@dataclass(frozen=True)
class AggregationRule:
    name: str
    when: tuple[Condition, ...]
    edits: tuple[tuple, ...]

    def applies(self, fs: FeatureStructure, memory: "DiscourseMemory") -> bool:
        return all(c.holds(fs, memory) for c in self.when)


@dataclass(frozen=True)
class AggregationRules:
    memory_slots: tuple[str, ...]
    rules: tuple[AggregationRule, ...]

    def __iter__(self):
        return iter(self.rules)


def parse_aggregation(text: str) -> AggregationRules:
    """Read ``(MEMORY slot...)`` plus ``(AGGREGATION name :WHEN (cond...)
    :EDITS (edit...))`` forms.  Only ``set`` and ``delete`` edits are allowed
    and neither may touch COOP."""
    memory: list[str] = []
    rules = []
    seen = set()
    for form in read_all(text, comment="#"):
        items = _list(form, "aggregation forms")
        head = _name(items[0]).upper() if items else ""
        if head == "MEMORY":
            memory.extend(_name(x).upper() for x in items[1:])
            continue
        if head != "AGGREGATION" or len(items) < 2:
            raise PackFormatError("expected (AGGREGATION name ...) or (MEMORY slot...)", form.line, form.col)
        name = _name(items[1]).lower()
        if name in seen:
            raise PackFormatError(f"duplicate aggregation rule {name}", form.line, form.col)
        seen.add(name)
        opts = _plist(form, 2, {"WHEN", "EDITS"})
        if "WHEN" not in opts or "EDITS" not in opts:
            raise PackFormatError(f"aggregation rule {name} needs :WHEN and :EDITS", form.line, form.col)
        edits = tuple(_edit(e) for e in _list(opts["EDITS"], "edits"))
        for e in edits:
            if e[0] not in ("set", "delete"):
                raise PackFormatError(f"aggregation rule {name}: only set and delete edits are allowed", form.line, form.col)
            if FeaturePath(e[1])[0] == "COOP":
                raise PackFormatError(f"aggregation rule {name} edits COOP", form.line, form.col)
        rules.append(AggregationRule(name, tuple(_condition(c) for c in _list(opts["WHEN"], "conditions")), edits))
    return AggregationRules(tuple(memory), tuple(rules))


@dataclass
class DiscourseMemory:
    """Last realized value of each designated optional constituent, plus
    the previous statement."""

    slots: tuple[str, ...] = ("TIME", "SITE")
    values: dict = field(default_factory=dict)
    previous: FeatureStructure | None = None

    def recall(self, path) -> object:
        return self.values.get(str(FeaturePath(path)), ABSENT)

    def update(self, original: FeatureStructure, realized: FeatureStructure) -> None:
        for slot in self.slots:
            v = get_path(original, slot)
            if v is not ABSENT:
                self.values[slot] = v
        self.previous = realized

    def clear(self) -> None:
        self.values.clear()
        self.previous = None


# ---------------------------------------------------------------------------
# Plan types


@dataclass(frozen=True)
class AssertionSpec:
    assertion: str
    payload: FeatureStructure
    attachments: tuple[str, ...] = ()
    slot: str = ""


@dataclass(frozen=True)
class ReportContext:
    language: str  # LANGUAGE slot value, e.g. FRENCH
    site: str | None = None  # station id
    legislation: str | None = None  # country code
    diagrams: int = 0


@dataclass(frozen=True)
class IrStatement:
    ir: FeatureStructure  # what gets realized
    basis: FeatureStructure | None = None  # the statement before aggregation
    edits: tuple = ()  # (rule name, edit) pairs applied by aggregation
    slot: str = ""

    def __post_init__(self):
        if self.basis is None:
            object.__setattr__(self, "basis", self.ir)


@dataclass(frozen=True)
class CannedBlock:
    text: str
    language: str
    slot: str = ""


PlanItem = Union[IrStatement, CannedBlock]


@dataclass(frozen=True)
class ReportPlan:
    items: tuple[PlanItem, ...]

    @property
    def statements(self) -> list[IrStatement]:
        return [i for i in self.items if isinstance(i, IrStatement)]

    def format(self) -> str:
        """Pre-aggregation IR of each statement, followed by the aggregation
        edits as comments; canned blocks appear as comments too."""
        out = []
        for item in self.items:
            if isinstance(item, CannedBlock):
                out.append(f"# canned {item.slot} ({item.language}): {item.text}")
                continue
            out.append(serialize_ir(item.basis))
            for rule, op in item.edits:
                out.append(f"# aggregation {rule}: {format_edit(op)}")
        return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Stages


def _flag_set(flag: str | None, request, context: ReportContext) -> bool:
    if flag is None:
        return True
    if flag == "COMPARE":
        return getattr(request, "compare", None) is not None
    if flag == "DIAGRAMS":
        return context.diagrams > 0
    return bool(getattr(request, flag.lower().replace("-", "_"), False))


def _norm_bindings(bindings: dict) -> dict:
    return {k.upper(): v for k, v in bindings.items()}


def instantiate(skeleton: ReportSkeleton, request, bindings: dict, context: ReportContext | None = None) -> list[AssertionSpec]:
    """One assertion spec per active statement slot of the skeleton.

    A binding whose value is an exception marks missing data: the slot falls
    back to its declared assertion type, keeping only the bindings that did
    resolve, or raises :class:`NoDataError` when it declares none.
    """
    context = context or ReportContext(language="ENGLISH")
    b = _norm_bindings(bindings)
    specs = []
    for slot in skeleton.slots:
        if not isinstance(slot, StatementSlot) or not _flag_set(slot.when, request, context):
            continue
        items = [("COOP", Symbol(slot.assertion))]
        failed = None
        for target, name in slot.bind:
            if name not in b:
                raise MissingBinding(slot.name, name)
            v = b[name]
            if isinstance(v, Exception):
                failed = v
                continue
            items.append((target, v))
        assertion, attachments = slot.assertion, slot.context
        if failed is not None:
            if slot.fallback is None:
                raise NoDataError("instantiate", f"slot {slot.name!r}: {failed}")
            assertion = slot.fallback
            items[0] = ("COOP", Symbol(assertion))
            attachments = tuple(a for a in attachments if a in ("LANGUAGE", "SITE"))
        specs.append(AssertionSpec(assertion, FeatureStructure(items), attachments, slot.name))
    return specs


def augment(spec: AssertionSpec, context: ReportContext, metadata) -> AssertionSpec:
    """Copy report-wide values in and add values entailed by the metadata."""
    fs = spec.payload
    try:
        for name in spec.attachments:
            if name == "LANGUAGE":
                fs = fs.with_slot("LANGUAGE", Symbol(context.language))
            elif name == "SITE" and context.site is not None:
                station = FeatureStructure(
                    [("ID", Symbol(context.site.upper())), ("NAME", metadata.station_name(context.site))]
                )
                fs = fs.with_slot("STATION", station)
            elif name == "DIAGRAMS":
                fs = fs.with_slot("COUNT", context.diagrams)
            elif name == "LEGISLATION" and spec.assertion == "THRESHOLD-EXCEEDING":
                if context.legislation is None:
                    raise LookupError("threshold statement without legislation")
                th = metadata.threshold(context.legislation, str(fs["POLLUTANT"]))
                for slot, value in (
                    ("AMOUNT", th.amount),
                    ("UNIT", Symbol(th.unit)),
                    ("LAW-NAME", Symbol(th.law)),
                    ("THRESHOLD-TYPE", Symbol(th.threshold_type)),
                    ("HOURS", th.hours),
                ):
                    fs = fs.with_slot(slot, value)
        if spec.assertion in ("AVERAGE", "MAXIMUM") and "AMOUNT" in fs and "UNIT" not in fs:
            fs = fs.with_slot("UNIT", Symbol(metadata.unit(str(fs["POLLUTANT"]))))
    except (LookupError, KeyError) as e:
        msg = e.args[0] if e.args else str(e)
        raise OrganizerError("augment", f"slot {spec.slot!r}: {msg}") from None
    return replace(spec, payload=fs)


def restructure(spec: AssertionSpec | FeatureStructure, schemata, schema: IrSchema | None = None) -> FeatureStructure:
    """Apply each matching schema once, in declared order, then put the slots
    in schema order and validate."""
    fs = spec.payload if isinstance(spec, AssertionSpec) else spec
    for sch in schemata:
        if not sch.matches(fs):
            continue
        try:
            for op in sch.edits:
                fs = edit(fs, op)
        except EditError as e:
            raise OrganizerError("restructure", f"schema {sch.name}: {e}") from None
        for c in sch.output:
            if not c.holds(fs):
                raise OrganizerError("restructure", f"schema {sch.name}: output condition on {c.path} fails")
    if schema is not None:
        fs = schema.reorder(fs)
        report = validate(fs, schema)
        if report.errors:
            first = report.errors[0]
            raise OrganizerError("restructure", f"invalid statement at {first.path or '<root>'}: {first.message}")
    return fs


def aggregate_with_edits(statements, rules: AggregationRules, memory: DiscourseMemory | None = None,
                         schema: IrSchema | None = None) -> list[tuple[FeatureStructure, list]]:
    memory = memory if memory is not None else DiscourseMemory(rules.memory_slots or ("TIME", "SITE"))
    out = []
    for original in statements:
        fs = original
        applied = []
        for rule in rules:
            # conditions see the statement as edited by earlier rules
            if not rule.applies(fs, memory):
                continue
            before = fs
            try:
                for op in rule.edits:
                    fs = edit(fs, op)
            except EditError as e:
                raise OrganizerError("aggregate", f"rule {rule.name}: {e}") from None
            if schema is not None and validate(fs, schema).errors:
                raise OrganizerError("aggregate", f"rule {rule.name} makes the statement invalid")
            if fs != before:
                applied.extend((rule.name, op) for op in rule.edits)
        if schema is not None:
            fs = schema.reorder(fs)
        out.append((fs, applied))
        memory.update(original, fs)
    return out


def aggregate(statements, rules: AggregationRules, memory: DiscourseMemory | None = None,
              schema: IrSchema | None = None) -> list[FeatureStructure]:
    """Elide repeated optional constituents and add cohesion markers."""
    return [fs for fs, _ in aggregate_with_edits(statements, rules, memory, schema)]


def organize_report(request, datasource, skeletons: dict, schemata, rules: AggregationRules,
                    schema: IrSchema | None = None, *, diagrams: int = 0,
                    canned_lang: str | None = None) -> ReportPlan:
    """Run the full organizer pipeline for one request.

    ``canned_lang`` selects the language of canned blocks (a two-letter
    code); it defaults to the request language.
    """
    from .tgl import language_code

    try:
        datasource.check(request)
    except (LookupError, ValueError) as e:
        raise OrganizerError("request", e.args[0] if e.args else str(e)) from None
    skeleton = skeletons.get(request.report)
    if skeleton is None:
        raise OrganizerError("instantiate", f"no skeleton for report type {request.report}")
    context = ReportContext(request.lang, request.station, request.legislation, diagrams)
    bindings = _norm_bindings(datasource.bindings(request))
    specs = instantiate(skeleton, request, bindings, context)
    augmented = [augment(s, context, datasource.metadata) for s in specs]
    structured = [restructure(s, schemata, schema) for s in augmented]
    aggregated = aggregate_with_edits(structured, rules, DiscourseMemory(rules.memory_slots or ("TIME", "SITE")), schema)
    by_slot = {s.slot: (basis, agg) for s, basis, agg in zip(specs, structured, aggregated)}

    lang = canned_lang or language_code(Symbol(request.lang))
    items: list[PlanItem] = []
    for slot in skeleton.slots:
        if not _flag_set(slot.when, request, context):
            continue
        if isinstance(slot, CannedSlot):
            if slot.key not in bindings:
                raise MissingBinding(slot.name, slot.key)
            key = str(bindings[slot.key])
            try:
                text = datasource.canned(key, lang)
            except LookupError as e:
                raise OrganizerError("canned", e.args[0]) from None
            items.append(CannedBlock(text, lang, slot.name))
        else:
            basis, (fs, edits) = by_slot[slot.name]
            items.append(IrStatement(fs, basis, tuple(edits), slot.name))
    return ReportPlan(tuple(items))
