"""Production-system interpreter for TGL grammars.

The cycle for one ``(category, input)`` goal: collect the applicable rules
(category and language match, all tests true), order them by preference and
file order, then execute the chosen rule's template top-down, depth-first,
left to right.  Feature equations are checked as soon as all their
participants are bound; a clash re-enters the most recently bound
participant for its next alternative, then earlier ones, then moves on to
the next rule of the conflict set.

Alternatives for a goal are produced lazily and, with memoization on, each
goal's stream is computed once per run and shared by every consumer.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator

from .ir import ABSENT, CLASH, UNBOUND, FeatureStructure, canonical_hash, unify_atomic
from .tgl import (
    Call,
    CallContext,
    Canned,
    FeatureEquation,
    GetParam,
    Grammar,
    RegistryError,
    RuleAction,
    SelfAccessor,
    TglRule,
    eval_accessor,
    eval_test,
    language_code,
)

__all__ = [
    "DerivationError",
    "NoDerivation",
    "RequiredValueAbsent",
    "DerivationDepthError",
    "DerivationResult",
    "TraceEvent",
    "Options",
    "applicable_rules",
    "derive",
    "derive_all",
    "run_with_trace",
    "check_equations",
    "verify_constraints",
    "postprocess",
    "format_trace",
    "add_observer",
    "remove_observer",
]


class DerivationError(Exception):
    pass


class NoDerivation(DerivationError):
    def __init__(self, category, digest, trace=()):
        self.category = category
        self.digest = digest
        self.trace = list(trace)
        super().__init__(f"no derivation for category {category} on input {digest[:12]}")


class RequiredValueAbsent(DerivationError):
    def __init__(self, rule_id, category, accessor):
        self.rule_id = rule_id
        self.category = category
        super().__init__(f"rule {rule_id}: :RULE {category} {accessor} found no input")


class DerivationDepthError(DerivationError):
    pass


@dataclass(frozen=True)
class DerivationResult:
    """A realized fragment.

    ``parts`` holds one entry per template action: the canned or computed
    string, the child result, or None for a skipped optional action.
    ``text`` joins the non-empty fragments with single spaces.
    """

    text: str
    features: dict
    rule_id: str
    parts: tuple = ()
    category: str = ""

    @property
    def trail(self) -> list[str]:
        out = [self.rule_id]
        for p in self.parts:
            if isinstance(p, DerivationResult):
                out.extend(p.trail)
        return out

    def key(self):
        return (self.text, tuple(sorted((k, repr(v)) for k, v in self.features.items())))


@dataclass(frozen=True)
class TraceEvent:
    depth: int
    kind: str  # try-rule | applicable | rejected-test | constraint-clash | success | fail | memo-hit
    category: str
    rule_id: str
    digest: str

    def __str__(self):
        return f"{self.depth}\t{self.kind}\t{self.category}\t{self.rule_id or '-'}\t{self.digest[:8]}"


@dataclass
class Options:
    lang: str | None = None  # rule language tag; default from the input's LANGUAGE slot
    memo: bool = True
    max_depth: int = 64
    normalize: bool = True  # postprocess top-level texts
    trace: list | None = None


# ---------------------------------------------------------------------------
# Observers (used by the test-suite to audit every successful derivation)

_observers: list = []


def add_observer(fn):
    _observers.append(fn)


def remove_observer(fn):
    if fn in _observers:
        _observers.remove(fn)


def _notify(grammar, result):
    for fn in list(_observers):
        fn(grammar, result)


# ---------------------------------------------------------------------------
# Feature equations


def _feature(features, name):
    return features.get(name, UNBOUND) if features is not None else UNBOUND


def _apply_equation(eq: FeatureEquation, rule: TglRule, children: dict, exports: dict):
    """Check one equation; on success return updated exports, else CLASH."""
    if eq.kind == "EQ":
        v = UNBOUND
        for ref in eq.participants:
            child = children.get(rule.constituent_index(ref))
            v = unify_atomic(v, _feature(child.features if child else None, eq.feature))
            if v is CLASH:
                return CLASH
        if v is UNBOUND:
            return exports
        merged = unify_atomic(exports.get(eq.feature, UNBOUND), v)
        if merged is CLASH:
            return CLASH
        return {**exports, eq.feature: merged}
    # VAL: introduce a value at SELF (exported) or at a constituent (checked)
    out = exports
    for ref in eq.participants:
        if ref.is_self:
            merged = unify_atomic(out.get(eq.feature, UNBOUND), eq.value)
            if merged is CLASH:
                return CLASH
            out = {**out, eq.feature: merged}
        else:
            child = children.get(rule.constituent_index(ref))
            if unify_atomic(_feature(child.features if child else None, eq.feature), eq.value) is CLASH:
                return CLASH
    return out


def check_equations(rule: TglRule, children: dict):
    """Evaluate all equations of ``rule`` given the bound children
    (action index -> DerivationResult or None for skipped optionals).
    Returns the exported feature bindings, or :data:`CLASH`."""
    exports: dict = {}
    for eq in rule.constraints:
        exports = _apply_equation(eq, rule, children, exports)
        if exports is CLASH:
            return CLASH
    return exports


def _ready_points(rule: TglRule):
    """Equations grouped by the action index after which they can be checked
    (-1: before any action)."""
    points: dict[int, list] = {}
    for eq in rule.constraints:
        idx = [rule.constituent_index(p) for p in eq.participants if not p.is_self]
        idx = [i for i in idx if i is not None]
        points.setdefault(max(idx) if idx else -1, []).append(eq)
    return points


def verify_constraints(result: DerivationResult, grammar: Grammar) -> list[str]:
    """Re-check every equation along the derivation tree; returns violations."""
    problems = []

    def walk(res):
        if not res.rule_id:
            return
        rule = grammar.rule(res.rule_id)
        children = {
            i: p for i, p in enumerate(res.parts) if isinstance(rule.actions[i], RuleAction)
        }
        exports = check_equations(rule, children)
        if exports is CLASH:
            problems.append(f"{res.rule_id}: equations clash")
        elif exports != res.features:
            problems.append(f"{res.rule_id}: exported {res.features} but equations give {exports}")
        for p in res.parts:
            if isinstance(p, DerivationResult):
                walk(p)

    walk(result)
    return problems


# ---------------------------------------------------------------------------
# Post-processing

_SPACES = re.compile(r"\s+")
_BEFORE_PUNCT = re.compile(r" +([.,)])")
_AFTER_OPEN = re.compile(r"\( +")
_SENTENCE_START = re.compile(r"(^|[.!?] )(\w)")


def _cap(m):
    c = m.group(2)
    up = c.upper()
    return m.group(1) + (up if len(up) == 1 else c)


def postprocess(raw: str) -> str:
    """Normalize spacing and capitalization of realized text."""
    prev = None
    s = raw
    while s != prev:
        prev = s
        s = _SPACES.sub(" ", s)
        s = _BEFORE_PUNCT.sub(r"\1", s)
        s = _AFTER_OPEN.sub("(", s)
        s = s.strip()
        s = _SENTENCE_START.sub(_cap, s)
    return s


# ---------------------------------------------------------------------------
# The interpreter


def _digest(inp) -> str:
    if inp is ABSENT:
        return "absent"
    return canonical_hash(inp)


class _Stream:
    """Memoized lazy list of alternatives for one goal."""

    __slots__ = ("results", "gen", "done", "running", "error")

    def __init__(self, gen):
        self.results = []
        self.gen = gen
        self.done = False
        self.running = False
        self.error = None

    def __iter__(self):
        i = 0
        while True:
            if i < len(self.results):
                yield self.results[i]
                i += 1
                continue
            if self.error is not None:
                raise self.error
            if self.done:
                return
            if self.running:
                raise DerivationDepthError("cyclic derivation: goal re-entered while being expanded")
            self.running = True
            try:
                nxt = next(self.gen)
            except StopIteration:
                self.done = True
                continue
            except DerivationError as e:
                self.error = e
                raise
            finally:
                self.running = False
            self.results.append(nxt)


class _Run:
    def __init__(self, grammar: Grammar, lang: str | None, opts: Options):
        self.g = grammar
        self.lang = lang
        self.opts = opts
        self.memo: dict = {}
        self.trace = opts.trace
        self._ready = {}

    def event(self, depth, kind, cat, rule_id, digest):
        if self.trace is not None:
            self.trace.append(TraceEvent(depth, kind, cat, rule_id or "", digest))

    def ready(self, rule):
        pts = self._ready.get(rule.rule_id)
        if pts is None:
            pts = self._ready[rule.rule_id] = _ready_points(rule)
        return pts

    def conflict_set(self, cat, inp, depth, digest):
        out = []
        for r in self.g.rules_for(cat, self.lang):
            ok = all(eval_test(t, inp, self.g.registry) for t in r.tests)
            self.event(depth, "applicable" if ok else "rejected-test", cat, r.rule_id, digest)
            if ok:
                out.append(r)
        # stable sort keeps file order among equal preferences
        out.sort(key=lambda r: -r.pref)
        return out

    def solve(self, cat: str, inp, depth: int) -> Iterator[DerivationResult]:
        if depth > self.opts.max_depth:
            raise DerivationDepthError(f"derivation deeper than {self.opts.max_depth} at category {cat}")
        digest = _digest(inp)
        if not self.opts.memo:
            return self._expand(cat, inp, depth, digest)
        key = (cat, digest, self.lang)
        stream = self.memo.get(key)
        if stream is not None:
            self.event(depth, "memo-hit", cat, "", digest)
            return iter(stream)
        stream = self.memo[key] = _Stream(self._expand(cat, inp, depth, digest))
        return iter(stream)

    def _expand(self, cat, inp, depth, digest):
        any_result = False
        for rule in self.conflict_set(cat, inp, depth, digest):
            self.event(depth, "try-rule", cat, rule.rule_id, digest)
            produced = False
            for res in self._apply(rule, inp, depth, digest):
                produced = any_result = True
                self.event(depth, "success", cat, rule.rule_id, digest)
                yield res
            if not produced:
                self.event(depth, "fail", cat, rule.rule_id, digest)
        if not any_result:
            self.event(depth, "fail", cat, "", digest)

    def _apply(self, rule: TglRule, inp, depth, digest):
        ready = self.ready(rule)
        exports0: dict = {}
        for eq in ready.get(-1, ()):
            exports0 = _apply_equation(eq, rule, {}, exports0)
            if exports0 is CLASH:
                self.event(depth, "constraint-clash", rule.category, rule.rule_id, digest)
                return
        actions = rule.actions
        n = len(actions)
        ctx = CallContext(self.lang or "", inp)

        def step(i, parts, children, exports):
            if i == n:
                texts = [p.text if isinstance(p, DerivationResult) else p for p in parts]
                yield DerivationResult(
                    " ".join(t for t in texts if t),
                    exports,
                    rule.rule_id,
                    tuple(parts),
                    rule.category,
                )
                return
            a = actions[i]
            if isinstance(a, Canned):
                yield from step(i + 1, parts + [a.text], children, exports)
                return
            if isinstance(a, Call):
                yield from step(i + 1, parts + [self.call(a, inp, ctx)], children, exports)
                return
            sub = eval_accessor(a.accessor, inp)
            if sub is ABSENT:
                if not a.optional:
                    raise RequiredValueAbsent(rule.rule_id, a.category, a.accessor)
                alts = [None]
            else:
                alts = self.solve(a.category, sub, depth + 1)
            for child in alts:
                ch = {**children, i: child}
                ex = exports
                for eq in ready.get(i, ()):
                    ex = _apply_equation(eq, rule, ch, ex)
                    if ex is CLASH:
                        break
                if ex is CLASH:
                    self.event(depth, "constraint-clash", rule.category, rule.rule_id, digest)
                    continue
                yield from step(i + 1, parts + [child], ch, ex)

        yield from step(0, [], {}, exports0)

    def call(self, a: Call, inp, ctx):
        ext = self.g.registry.get(a.function, "function")
        if ext is None:
            raise RegistryError(f"unknown function {a.function}")
        args = []
        for x in a.args:
            if isinstance(x, (GetParam, SelfAccessor)):
                v = eval_accessor(x, inp)
                if v is ABSENT:
                    return ""
                args.append(v)
            else:
                args.append(x)
        out = ext.fn(ctx, *args)
        return "" if out is None else str(out)


def _run_lang(inp, opts: Options):
    if opts.lang:
        return opts.lang.upper()
    if isinstance(inp, FeatureStructure) and "LANGUAGE" in inp:
        return language_code(inp["LANGUAGE"])
    return None


def _finish(res: DerivationResult, opts: Options) -> DerivationResult:
    if opts.normalize:
        res = DerivationResult(postprocess(res.text), res.features, res.rule_id, res.parts, res.category)
    return res


def applicable_rules(g: Grammar, cat: str, inp, lang: str | None = None) -> list[TglRule]:
    """The conflict set: rules of ``cat`` for ``lang`` whose tests all hold,
    by descending preference then file order."""
    opts = Options(lang=lang)
    run = _Run(g, _run_lang(inp, opts), opts)
    return run.conflict_set(cat.upper(), inp, 0, "")


def derive(g: Grammar, cat: str, inp, options: Options | None = None) -> DerivationResult:
    """First successful derivation of ``cat`` for ``inp``."""
    opts = options or Options()
    cat = cat.upper()
    run = _Run(g, _run_lang(inp, opts), opts)
    for res in run.solve(cat, inp, 0):
        res = _finish(res, opts)
        _notify(g, res)
        return res
    raise NoDerivation(cat, _digest(inp), opts.trace or ())


def derive_all(
    g: Grammar,
    cat: str,
    inp,
    limit: int = 100,
    options: Options | None = None,
    strict: bool = False,
) -> list[DerivationResult]:
    """Distinct derivations (by text and features) in conflict order, at most ``limit``."""
    if limit < 1:
        raise ValueError("limit must be at least 1")
    opts = options or Options()
    cat = cat.upper()
    run = _Run(g, _run_lang(inp, opts), opts)
    out = []
    seen = set()
    for res in run.solve(cat, inp, 0):
        res = _finish(res, opts)
        k = res.key()
        if k in seen:
            continue
        seen.add(k)
        _notify(g, res)
        out.append(res)
        if len(out) >= limit:
            break
    if not out and strict:
        raise NoDerivation(cat, _digest(inp), opts.trace or ())
    return out


def run_with_trace(g: Grammar, cat: str, inp, options: Options | None = None):
    """Like :func:`derive` but also return the trace; errors are returned,
    not raised."""
    opts = options or Options()
    trace: list = []
    opts = Options(opts.lang, opts.memo, opts.max_depth, opts.normalize, trace)
    try:
        return derive(g, cat, inp, opts), trace
    except DerivationError as e:
        return e, trace


def format_trace(events, records: bool = False):
    """Tab-separated lines, or dicts with the same fields when ``records``."""
    if records:
        return [
            {"depth": e.depth, "kind": e.kind, "category": e.category, "rule_id": e.rule_id, "digest": e.digest[:8]}
            for e in events
        ]
    return "\n".join(str(e) for e in events)
