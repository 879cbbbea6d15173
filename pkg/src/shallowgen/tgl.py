"""TGL: the production-rule grammar language.

A grammar file holds ``defproduction`` forms::

    (defproduction threshold-exceeding "WU01"
      (:PRECOND (:CAT DECL
                 :TEST ((coop-eq 'threshold-exceeding) (threshold-value-p)))
       :ACTIONS (:TEMPLATE (:OPTRULE PPtime (get-param 'time))
                           (:RULE THTYPE (self))
                           "(" (:RULE VAL (get-param 'threshold-value)) ") "
                           (:RULE EXCEEDS (get-param 'exceeds)) "."
                 :CONSTRAINTS (:GENDER (THTYPE EXCEEDS) :EQ))
       :PREF 10
       :LANG FR))

Symbols are case-insensitive and stored upper case.  ``;`` starts a comment.
Test predicates and template functions are looked up in a :class:`Registry`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Callable, Union

from .ir import ABSENT, FeaturePath, FeatureStructure, Symbol, get_path, values_equal
from .schema import Finding, IrSchema, ValidationReport
from .sexpr import Atom, ReadError, SList, quote_string, read_all

__all__ = [
    "GrammarError",
    "RegistryError",
    "UnknownPredicate",
    "Test",
    "GetParam",
    "SelfAccessor",
    "Canned",
    "RuleAction",
    "Call",
    "ConstituentRef",
    "FeatureEquation",
    "TglRule",
    "Grammar",
    "Registry",
    "Extension",
    "CallContext",
    "default_registry",
    "register_extension",
    "parse_grammar",
    "format_rule",
    "format_grammar",
    "eval_test",
    "eval_accessor",
    "lint_grammar",
    "LANGUAGE_CODES",
    "language_code",
]

ANY = "ANY"

#: IR LANGUAGE values and the rule-tag codes they select.
LANGUAGE_CODES = {"FRENCH": "FR", "GERMAN": "DE", "ENGLISH": "EN"}


def language_code(v) -> str | None:
    name = v.name if isinstance(v, Symbol) else str(v).upper() if v is not ABSENT else None
    if name is None:
        return None
    return LANGUAGE_CODES.get(name, name)


class GrammarError(ReadError):
    pass


class RegistryError(ValueError):
    pass


class UnknownPredicate(RegistryError):
    pass


# ---------------------------------------------------------------------------
# Rule data


@dataclass(frozen=True)
class Test:
    predicate: str
    args: tuple = ()


@dataclass(frozen=True)
class GetParam:
    path: FeaturePath

    def __str__(self):
        return f"(get-param '{str(self.path).lower()})"


@dataclass(frozen=True)
class SelfAccessor:
    def __str__(self):
        return "(self)"


Accessor = Union[GetParam, SelfAccessor]


@dataclass(frozen=True)
class Canned:
    text: str


@dataclass(frozen=True)
class RuleAction:
    category: str
    accessor: Accessor
    optional: bool = False


@dataclass(frozen=True)
class Call:
    function: str
    args: tuple = ()


Action = Union[Canned, RuleAction, Call]


@dataclass(frozen=True)
class ConstituentRef:
    """``CAT`` (first occurrence) or ``CAT#n``; category ``SELF`` is the rule itself."""

    category: str
    index: int = 1

    @property
    def is_self(self):
        return self.category == "SELF"

    def __str__(self):
        return self.category if self.index == 1 else f"{self.category}#{self.index}"


@dataclass(frozen=True)
class FeatureEquation:
    feature: str
    participants: tuple  # of ConstituentRef
    kind: str = "EQ"  # 'EQ' | 'VAL'
    value: object = None


@dataclass(frozen=True)
class TglRule:
    name: str
    rule_id: str
    category: str
    tests: tuple
    actions: tuple
    constraints: tuple = ()
    pref: int = 0
    lang: str = ANY
    line: int = 0

    def constituent_index(self, ref: ConstituentRef) -> int | None:
        """Position in ``actions`` of the referenced Rule/OptRule, or None."""
        seen = 0
        for i, a in enumerate(self.actions):
            if isinstance(a, RuleAction) and a.category == ref.category:
                seen += 1
                if seen == ref.index:
                    return i
        return None


@dataclass
class Grammar:
    rules: list
    registry: "Registry" = None
    by_category: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.registry is None:
            self.registry = default_registry()
        self.reindex()

    def reindex(self):
        idx: dict[str, list] = {}
        seen = set()
        for r in self.rules:
            if r.rule_id in seen:
                raise GrammarError(f"duplicate rule id {r.rule_id!r}", r.line, 0)
            seen.add(r.rule_id)
            idx.setdefault(r.category, []).append(r)
        self.by_category = idx

    def rules_for(self, category: str, lang: str | None = None):
        rs = self.by_category.get(category, [])
        if lang is None:
            return list(rs)
        return [r for r in rs if r.lang == ANY or r.lang == lang]

    @property
    def languages(self):
        return sorted({r.lang for r in self.rules if r.lang != ANY})

    def rule(self, rule_id):
        for r in self.rules:
            if r.rule_id == rule_id:
                return r
        raise KeyError(rule_id)

    def merged(self, other: "Grammar") -> "Grammar":
        return Grammar(self.rules + other.rules, self.registry)

    def with_rule(self, rule: TglRule) -> "Grammar":
        """Copy with ``rule`` replacing the rule of the same id (in place)."""
        return Grammar([rule if r.rule_id == rule.rule_id else r for r in self.rules], self.registry)


# ---------------------------------------------------------------------------
# Registry


@dataclass(frozen=True)
class Extension:
    name: str
    kind: str  # 'predicate' | 'function'
    arity: int  # -1 for variadic
    fn: Callable


@dataclass(frozen=True)
class CallContext:
    """What a template function gets to know about the run besides its arguments."""

    lang: str
    input: object = None


class Registry:
    """Name -> test predicate / template function.  Registration returns a new
    registry, so loaded grammars never see later additions."""

    def __init__(self, entries: dict | None = None):
        self._entries = dict(entries or {})

    def register(self, name: str, kind: str, arity: int, fn: Callable) -> "Registry":
        name = name.upper()
        if kind not in ("predicate", "function"):
            raise RegistryError(f"unknown extension kind {kind!r}")
        if name in self._entries:
            raise RegistryError(f"{name} is already registered")
        entries = dict(self._entries)
        entries[name] = Extension(name, kind, arity, fn)
        return Registry(entries)

    def get(self, name: str, kind: str | None = None) -> Extension | None:
        e = self._entries.get(name.upper())
        if e is None or (kind is not None and e.kind != kind):
            return None
        return e

    def __contains__(self, name):
        return name.upper() in self._entries

    def names(self, kind=None):
        return sorted(n for n, e in self._entries.items() if kind is None or e.kind == kind)


def register_extension(registry: Registry, name: str, kind: str, arity: int, fn: Callable) -> Registry:
    return registry.register(name, kind, arity, fn)


# built-in predicates ------------------------------------------------------


def _as_path(arg):
    return FeaturePath(arg.name if isinstance(arg, Symbol) else arg)


def _coop_eq(inp, sym):
    return values_equal(get_path(inp, "COOP"), Symbol(str(sym).upper()))


def _path_present(inp, path):
    return get_path(inp, _as_path(path)) is not ABSENT


def _path_absent(inp, path):
    return get_path(inp, _as_path(path)) is ABSENT


def _path_eq(inp, path, value):
    return values_equal(get_path(inp, _as_path(path)), value)


def _value_eq(inp, value):
    if isinstance(inp, FeatureStructure) or inp is ABSENT:
        return False
    return values_equal(inp, value)


def _lang_eq(inp, sym):
    return language_code(get_path(inp, "LANGUAGE")) == language_code(sym)


def _threshold_value_p(inp):
    return get_path(inp, "THRESHOLD-VALUE") is not ABSENT


def _path_gt(inp, path, value):
    v = get_path(inp, _as_path(path))
    return isinstance(v, (int, Decimal)) and not isinstance(v, bool) and v > value


# built-in template functions ----------------------------------------------

_CARDINALS = {
    "EN": ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve"],
    "FR": ["zéro", "un", "deux", "trois", "quatre", "cinq", "six", "sept", "huit", "neuf", "dix", "onze", "douze"],
    "DE": ["null", "eins", "zwei", "drei", "vier", "fünf", "sechs", "sieben", "acht", "neun", "zehn", "elf", "zwölf"],
}


def _fn_number(ctx, v):
    if isinstance(v, Decimal):
        return format(v.normalize(), "f") if v == v.to_integral_value() else format(v, "f")
    return str(v)


def _fn_decimal(ctx, v):
    # at least one fractional digit: 600 -> "600.0"
    if isinstance(v, int):
        return f"{v}.0"
    s = format(v, "f")
    return s if "." in s else s + ".0"


def _fn_cardinal(ctx, v):
    words = _CARDINALS.get(ctx.lang)
    if words and isinstance(v, int) and 0 <= v < len(words):
        return words[v]
    return _fn_number(ctx, v)


def _fn_season_year(ctx, name):
    # winter straddles the year boundary: YEAR 1996 -> "1996/97"
    year = get_path(name, "YEAR")
    season = get_path(name, "SEASON")
    if isinstance(season, Symbol) and season.name == "WINTER":
        return f"{year}/{(year + 1) % 100:02d}"
    return str(year)


def _fn_text(ctx, v):
    return v.name if isinstance(v, Symbol) else _fn_number(ctx, v) if isinstance(v, (int, Decimal)) else str(v)


def _fn_plain_name(ctx, v):
    return _fn_text(ctx, v).replace("-", " ")


def _fn_capitalized(ctx, v):
    return _fn_text(ctx, v).capitalize()


_DEFAULT = None


def default_registry() -> Registry:
    global _DEFAULT
    if _DEFAULT is None:
        r = Registry()
        for name, arity, fn in [
            ("coop-eq", 1, _coop_eq),
            ("path-present", 1, _path_present),
            ("path-absent", 1, _path_absent),
            ("path-eq", 2, _path_eq),
            ("path-gt", 2, _path_gt),
            ("value-eq", 1, _value_eq),
            ("lang-eq", 1, _lang_eq),
            ("threshold-value-p", 0, _threshold_value_p),
        ]:
            r = r.register(name, "predicate", arity, fn)
        for name, arity, fn in [
            ("number", 1, _fn_number),
            ("decimal", 1, _fn_decimal),
            ("cardinal", 1, _fn_cardinal),
            ("season-year", 1, _fn_season_year),
            ("text", 1, _fn_text),
            ("plain-name", 1, _fn_plain_name),
            ("capitalized", 1, _fn_capitalized),
        ]:
            r = r.register(name, "function", arity, fn)
        _DEFAULT = r
    return _DEFAULT


# ---------------------------------------------------------------------------
# Evaluation


def eval_test(t: Test, inp, registry: Registry) -> bool:
    ext = registry.get(t.predicate, "predicate")
    if ext is None:
        raise UnknownPredicate(f"unknown test predicate {t.predicate}")
    if ext.arity >= 0 and len(t.args) != ext.arity:
        raise RegistryError(f"{t.predicate} takes {ext.arity} argument(s), got {len(t.args)}")
    return bool(ext.fn(inp, *t.args))


def eval_accessor(a: Accessor, inp):
    if isinstance(a, SelfAccessor):
        return inp
    return get_path(inp, a.path)


# ---------------------------------------------------------------------------
# Parsing


def _err(msg, node):
    return GrammarError(msg, getattr(node, "line", 0), getattr(node, "col", 0))


def _plist(items, node, allowed):
    """Split ``:KEY v1 v2 :KEY2 ...`` into {KEY: [values]}."""
    out: dict[str, list] = {}
    key = None
    for it in items:
        if isinstance(it, Atom) and it.kind == "keyword":
            key = it.value
            if key not in allowed:
                raise _err(f"unexpected keyword :{key}", it)
            if key in out:
                raise _err(f"keyword :{key} given twice", it)
            out[key] = []
        elif key is None:
            raise _err("expected a keyword", it)
        else:
            out[key].append(it)
    return out


def _symbol(node, what):
    if not isinstance(node, Atom) or node.kind != "symbol":
        raise _err(f"expected {what}", node)
    return node.value


def _literal(node):
    if isinstance(node, SList):
        raise _err("expected a literal argument", node)
    if node.kind == "symbol":
        return Symbol(node.value)
    if node.kind == "keyword":
        raise _err("unexpected keyword", node)
    return node.value


def _accessor(node) -> Accessor:
    if not isinstance(node, SList) or not node.items:
        raise _err("expected an accessor such as (self) or (get-param 'slot)", node)
    head = _symbol(node.items[0], "an accessor name")
    if head == "SELF" and len(node.items) == 1:
        return SelfAccessor()
    if head == "GET-PARAM" and len(node.items) == 2:
        arg = node.items[1]
        if not isinstance(arg, Atom) or arg.kind != "symbol":
            raise _err("get-param takes a slot path", arg)
        try:
            return GetParam(FeaturePath(arg.value))
        except ValueError as e:
            raise _err(str(e), arg) from None
    raise _err(f"unknown accessor {head}", node)


def _action(node) -> Action:
    if isinstance(node, Atom):
        if node.kind == "string":
            return Canned(node.value)
        raise _err("template items are strings or (:RULE ...), (:OPTRULE ...), (:CALL ...)", node)
    if not node.items or not isinstance(node.items[0], Atom) or node.items[0].kind != "keyword":
        raise _err("template action must start with :RULE, :OPTRULE or :CALL", node)
    kw = node.items[0].value
    if kw in ("RULE", "OPTRULE"):
        if len(node.items) != 3:
            raise _err(f":{kw} takes a category and an accessor", node)
        cat = _symbol(node.items[1], "a category")
        return RuleAction(cat, _accessor(node.items[2]), optional=kw == "OPTRULE")
    if kw == "CALL":
        if len(node.items) < 2:
            raise _err(":CALL needs a function name", node)
        fn = _symbol(node.items[1], "a function name")
        args = []
        for a in node.items[2:]:
            args.append(_accessor(a) if isinstance(a, SList) else _literal(a))
        return Call(fn, tuple(args))
    raise _err(f"unknown action keyword :{kw}", node)


def _constituent(node) -> ConstituentRef:
    name = _symbol(node, "a constituent reference")
    if "#" in name:
        cat, _, idx = name.partition("#")
        if not idx.isdigit() or int(idx) < 1:
            raise _err(f"bad occurrence index in {name}", node)
        return ConstituentRef(cat, int(idx))
    return ConstituentRef(name)


def _equation(node) -> FeatureEquation:
    if not isinstance(node, SList) or len(node.items) < 3:
        raise _err("equation must look like (:FEATURE (CAT ...) :EQ) or (:FEATURE (CAT) :VAL value)", node)
    feat = node.items[0]
    if not isinstance(feat, Atom) or feat.kind != "keyword":
        raise _err("equation must start with a :FEATURE keyword", feat)
    parts = node.items[1]
    if not isinstance(parts, SList) or not parts.items:
        raise _err("equation needs a non-empty participant list", parts)
    refs = tuple(_constituent(p) for p in parts.items)
    kind = node.items[2]
    if not isinstance(kind, Atom) or kind.kind != "keyword" or kind.value not in ("EQ", "VAL"):
        raise _err("equation kind must be :EQ or :VAL", kind)
    if kind.value == "EQ":
        if len(node.items) != 3:
            raise _err(":EQ takes no value", node)
        return FeatureEquation(feat.value, refs, "EQ")
    if len(node.items) != 4:
        raise _err(":VAL needs exactly one value", node)
    return FeatureEquation(feat.value, refs, "VAL", _literal(node.items[3]))


def _rule(form: SList, default_lang: str) -> TglRule:
    items = form.items
    if len(items) != 4:
        raise _err('expected (defproduction name "ID" (:PRECOND ... :ACTIONS ...))', form)
    name = _symbol(items[1], "a rule name")
    rid = items[2]
    if not isinstance(rid, Atom) or rid.kind != "string" or not rid.value:
        raise _err("rule id must be a non-empty string", rid)
    body = items[3]
    if not isinstance(body, SList):
        raise _err("expected the rule body list", body)
    top = _plist(body.items, body, {"PRECOND", "ACTIONS", "PREF", "LANG"})
    if "PRECOND" not in top or len(top["PRECOND"]) != 1 or not isinstance(top["PRECOND"][0], SList):
        raise _err(":PRECOND (:CAT ...) is required", body)
    if "ACTIONS" not in top or len(top["ACTIONS"]) != 1 or not isinstance(top["ACTIONS"][0], SList):
        raise _err(":ACTIONS (:TEMPLATE ...) is required", body)
    pre = _plist(top["PRECOND"][0].items, top["PRECOND"][0], {"CAT", "TEST"})
    if len(pre.get("CAT", [])) != 1:
        raise _err(":CAT takes exactly one category", top["PRECOND"][0])
    cat = _symbol(pre["CAT"][0], "a category")
    tests = []
    for tl in pre.get("TEST", []):
        if not isinstance(tl, SList):
            raise _err(":TEST takes a list of tests", tl)
        for t in tl.items:
            if not isinstance(t, SList) or not t.items:
                raise _err("a test is (predicate args...)", t)
            pred = _symbol(t.items[0], "a predicate name")
            tests.append(Test(pred, tuple(_literal(a) for a in t.items[1:])))
    acts = _plist(top["ACTIONS"][0].items, top["ACTIONS"][0], {"TEMPLATE", "CONSTRAINTS"})
    actions = tuple(_action(a) for a in acts.get("TEMPLATE", []))
    if not actions:
        raise _err(f"rule {rid.value} has an empty :TEMPLATE", top["ACTIONS"][0])
    eqs = tuple(_equation(e) for e in acts.get("CONSTRAINTS", []))
    pref = 0
    if "PREF" in top:
        p = top["PREF"]
        if len(p) != 1 or not isinstance(p[0], Atom) or p[0].kind != "int":
            raise _err(":PREF takes one integer", body)
        pref = p[0].value
    lang = default_lang
    if "LANG" in top:
        lang = _symbol(top["LANG"][0], "a language tag") if len(top["LANG"]) == 1 else None
        if lang is None:
            raise _err(":LANG takes one symbol", body)
    return TglRule(name, rid.value, cat, tuple(tests), actions, eqs, pref, lang, form.line)


def parse_grammar(text: str, registry: Registry | None = None, default_lang: str = ANY) -> Grammar:
    """Parse a rule file.  Rules without ``:LANG`` get ``default_lang``."""
    try:
        forms = read_all(text, comment=";")
    except GrammarError:
        raise
    except ReadError as e:
        raise GrammarError(str(e).split(" (line")[0], e.line, e.col) from None
    rules = []
    seen = {}
    for f in forms:
        if not isinstance(f, SList) or not f.items or not isinstance(f.items[0], Atom) or f.items[0].value != "DEFPRODUCTION":
            raise _err("expected (defproduction ...)", f)
        r = _rule(f, default_lang.upper())
        if r.rule_id in seen:
            raise GrammarError(f"duplicate rule id {r.rule_id!r} (first at line {seen[r.rule_id]})", r.line, 0)
        seen[r.rule_id] = r.line
        rules.append(r)
    return Grammar(rules, registry or default_registry())


# ---------------------------------------------------------------------------
# Printing


def _fmt_literal(v):
    if isinstance(v, Symbol):
        return "'" + v.name.lower()
    if isinstance(v, str):
        return quote_string(v)
    return str(v)


def _fmt_action(a):
    if isinstance(a, Canned):
        return quote_string(a.text)
    if isinstance(a, RuleAction):
        return f"(:{'OPTRULE' if a.optional else 'RULE'} {a.category} {a.accessor})"
    args = " ".join(str(x) if isinstance(x, (GetParam, SelfAccessor)) else _fmt_literal(x) for x in a.args)
    return f"(:CALL {a.function.lower()}{' ' + args if args else ''})"


def _fmt_eq(e):
    parts = " ".join(str(p) for p in e.participants)
    if e.kind == "EQ":
        return f"(:{e.feature} ({parts}) :EQ)"
    return f"(:{e.feature} ({parts}) :VAL {_fmt_literal(e.value)})"


def format_rule(r: TglRule) -> str:
    tests = " ".join(
        "(" + " ".join([t.predicate.lower()] + [_fmt_literal(a) for a in t.args]) + ")" for t in r.tests
    )
    pad = "                        "
    acts = ("\n" + pad).join(_fmt_action(a) for a in r.actions)
    lines = [
        f'(defproduction {r.name.lower()} {quote_string(r.rule_id)}',
        f"  (:PRECOND (:CAT {r.category}",
        f"             :TEST ({tests}))",
        f"   :ACTIONS (:TEMPLATE {acts}",
    ]
    if r.constraints:
        lines[-1] += "\n             :CONSTRAINTS " + " ".join(_fmt_eq(e) for e in r.constraints)
    lines[-1] += ")"
    lines.append(f"   :PREF {r.pref}")
    lines.append(f"   :LANG {r.lang}))")
    return "\n".join(lines)


def format_grammar(g: Grammar) -> str:
    return "\n\n".join(format_rule(r) for r in g.rules) + "\n"


# ---------------------------------------------------------------------------
# Lint


def _rule_refs(r: TglRule):
    for a in r.actions:
        if isinstance(a, RuleAction):
            yield a


def lint_grammar(
    g: Grammar,
    schema: IrSchema | None = None,
    start: tuple = ("DECL",),
) -> ValidationReport:
    """Static checks; errors make derivation-time failures impossible for
    the checked classes (dangling categories, unknown predicates/functions)."""
    rep = ValidationReport()

    def add(sev, r, msg):
        rep.findings.append(Finding(sev, f"rule {r.rule_id}", msg))

    langs = g.languages or [ANY]
    for r in g.rules:
        check_langs = langs if r.lang == ANY else [r.lang]
        for a in _rule_refs(r):
            for lang in check_langs:
                if not g.rules_for(a.category, None if lang == ANY else lang):
                    where = "" if lang == ANY else f" for language {lang}"
                    add("error", r, f"dangling category {a.category}{where}")
                    break
        for t in r.tests:
            ext = g.registry.get(t.predicate)
            if ext is None or ext.kind != "predicate":
                add("error", r, f"unknown test predicate {t.predicate}")
            elif ext.arity >= 0 and ext.arity != len(t.args):
                add("error", r, f"{t.predicate} takes {ext.arity} argument(s), got {len(t.args)}")
        for a in r.actions:
            if isinstance(a, Call):
                ext = g.registry.get(a.function)
                if ext is None or ext.kind != "function":
                    add("error", r, f"unknown function {a.function}")
                elif ext.arity >= 0 and ext.arity != len(a.args):
                    add("error", r, f"{a.function} takes {ext.arity} argument(s), got {len(a.args)}")
        for e in r.constraints:
            for p in e.participants:
                if p.is_self:
                    if e.kind != "VAL":
                        add("error", r, f"equation on {e.feature}: SELF can only take :VAL")
                elif r.constituent_index(p) is None:
                    add("error", r, f"equation on {e.feature} names missing constituent {p}")
        if schema is not None:
            accessors = [a.accessor for a in _rule_refs(r)]
            accessors += [x for a in r.actions if isinstance(a, Call) for x in a.args if isinstance(x, GetParam)]
            for acc in accessors:
                if isinstance(acc, GetParam) and not schema.path_walkable(acc.path):
                    add("warning", r, f"accessor path {acc.path} is not defined by the IR schema")

    if start:
        reach = set()
        todo = [c.upper() for c in start]
        while todo:
            c = todo.pop()
            if c in reach:
                continue
            reach.add(c)
            for r in g.rules_for(c):
                todo.extend(a.category for a in _rule_refs(r))
        for r in g.rules:
            if r.category not in reach:
                add("warning", r, f"category {r.category} is unreachable from {', '.join(start)}")
    return rep


def rule_with(r: TglRule, **changes) -> TglRule:
    return replace(r, **changes)
