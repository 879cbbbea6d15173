"""Independent reference implementations used as test oracles.

Nothing here shares code with the engine beyond the rule data types, the
test predicates and template functions (which are inputs, not the thing
being checked), and the final text normalization.
"""

from __future__ import annotations

import random
from decimal import Decimal
from collections import Counter
from fractions import Fraction

from shallowgen.engine import postprocess
from shallowgen.ir import ABSENT, FeatureStructure, Symbol, get_path
from shallowgen.tgl import (
    Call,
    CallContext,
    Canned,
    GetParam,
    RuleAction,
    SelfAccessor,
    parse_grammar,
)


class OracleFailure(Exception):
    """Raised where the engine would raise a DerivationError."""


# ---------------------------------------------------------------------------
# Derivation by plain recursive expansion (no memo, no shared streams)

_UNSET = object()


def _unify(a, b):
    if a is _UNSET:
        return b
    if b is _UNSET:
        return a
    if type(a) is type(b) and a == b:
        return a
    return None  # clash


def _occurrence(rule, ref):
    n = 0
    for i, a in enumerate(rule.actions):
        if isinstance(a, RuleAction) and a.category == ref.category:
            n += 1
            if n == ref.index:
                return i
    return None


def _equation_index(rule, eq):
    idx = [_occurrence(rule, p) for p in eq.participants if p.category != "SELF"]
    idx = [i for i in idx if i is not None]
    return max(idx) if idx else -1


def _check_equation(rule, eq, bound, exports):
    """Return the new exports dict, or None on a clash."""
    if eq.kind == "EQ":
        v = _UNSET
        for ref in eq.participants:
            child = bound.get(_occurrence(rule, ref))
            f = child[1].get(eq.feature, _UNSET) if child is not None else _UNSET
            v = _unify(v, f)
            if v is None:
                return None
        if v is _UNSET:
            return exports
        m = _unify(exports.get(eq.feature, _UNSET), v)
        if m is None:
            return None
        return {**exports, eq.feature: m}
    out = dict(exports)
    for ref in eq.participants:
        if ref.category == "SELF":
            m = _unify(out.get(eq.feature, _UNSET), eq.value)
            if m is None:
                return None
            out[eq.feature] = m
        else:
            child = bound.get(_occurrence(rule, ref))
            f = child[1].get(eq.feature, _UNSET) if child is not None else _UNSET
            if _unify(f, eq.value) is None:
                return None
    return out


def _applicable(g, cat, inp, lang):
    rules = [r for r in g.rules if r.category == cat and (lang is None or r.lang in ("ANY", lang))]
    ok = []
    for r in rules:
        if all(g.registry.get(t.predicate, "predicate").fn(inp, *t.args) for t in r.tests):
            ok.append(r)
    # highest preference first; file order among ties
    return [r for _, _, r in sorted((-r.pref, i, r) for i, r in enumerate(ok))]


def _call(g, a, inp, lang):
    args = []
    for x in a.args:
        if isinstance(x, SelfAccessor):
            v = inp
        elif isinstance(x, GetParam):
            v = get_path(inp, x.path)
        else:
            v = x
        if v is ABSENT:
            return ""
        args.append(v)
    out = g.registry.get(a.function, "function").fn(CallContext(lang or "", inp), *args)
    return "" if out is None else str(out)


def expand(g, cat, inp, lang, depth=0, max_depth=64):
    """Yield (text, features) for every derivation, in engine order."""
    if depth > max_depth:
        raise OracleFailure("too deep")
    for rule in _applicable(g, cat, inp, lang):
        eqs_at: dict[int, list] = {}
        for eq in rule.constraints:
            eqs_at.setdefault(_equation_index(rule, eq), []).append(eq)
        start = {}
        for eq in eqs_at.get(-1, ()):
            start = _check_equation(rule, eq, {}, start)
            if start is None:
                break
        if start is None:
            continue
        yield from _expand_rule(g, rule, inp, lang, depth, max_depth, eqs_at, 0, [], {}, start)


def _expand_rule(g, rule, inp, lang, depth, max_depth, eqs_at, i, texts, bound, exports):
    if i == len(rule.actions):
        yield " ".join(t for t in texts if t), exports
        return
    a = rule.actions[i]
    if isinstance(a, Canned):
        yield from _expand_rule(g, rule, inp, lang, depth, max_depth, eqs_at, i + 1, texts + [a.text], bound, exports)
        return
    if isinstance(a, Call):
        yield from _expand_rule(g, rule, inp, lang, depth, max_depth, eqs_at, i + 1,
                                texts + [_call(g, a, inp, lang)], bound, exports)
        return
    sub = inp if isinstance(a.accessor, SelfAccessor) else get_path(inp, a.accessor.path)
    if sub is ABSENT:
        if not a.optional:
            raise OracleFailure(f"required value absent in {rule.rule_id}")
        children = [None]
    else:
        children = expand(g, a.category, sub, lang, depth + 1, max_depth)
    for child in children:
        b = {**bound, i: child}
        ex = exports
        for eq in eqs_at.get(i, ()):
            ex = _check_equation(rule, eq, b, ex)
            if ex is None:
                break
        if ex is None:
            continue
        t = child[0] if child is not None else None
        yield from _expand_rule(g, rule, inp, lang, depth, max_depth, eqs_at, i + 1, texts + [t], b, ex)


def _fkey(features):
    return tuple(sorted((k, repr(v)) for k, v in features.items()))


def oracle_derive_all(g, cat, inp, lang, limit=100):
    """(list of (text, features-key), failure flag) with dedup as derive_all."""
    out, seen = [], set()
    try:
        for text, feats in expand(g, cat, inp, lang):
            k = (postprocess(text), _fkey(feats))
            if k in seen:
                continue
            seen.add(k)
            out.append(k)
            if len(out) >= limit:
                break
    except OracleFailure:
        return out, True
    return out, False


def oracle_derive(g, cat, inp, lang):
    try:
        for text, feats in expand(g, cat, inp, lang):
            return (postprocess(text), _fkey(feats)), False
    except OracleFailure:
        return None, True
    return None, True


# ---------------------------------------------------------------------------
# Random grammars and inputs

SLOTS = ("A", "B", "C")
ATOMS = ("X", "Y", "Z")
FEATURES = ("GEN", "NUM")


def random_input(rng: random.Random, depth=2):
    if depth == 0 or rng.random() < 0.3:
        return Symbol(rng.choice(ATOMS))
    items = [(s, random_input(rng, depth - 1)) for s in SLOTS if rng.random() < 0.6]
    return FeatureStructure(items)


def random_grammar_text(rng: random.Random, n_cats=None, max_rules=4, max_eqs=3) -> str:
    """Layered random grammar: category Ci only calls Cj with j > i, so
    every grammar is acyclic.  C0 is the start category."""
    n = n_cats or rng.randint(2, 10)
    cats = [f"C{i}" for i in range(n)]
    forms = []
    rid = 0
    for i, cat in enumerate(cats):
        for _ in range(rng.randint(1, max_rules)):
            rid += 1
            tests = []
            roll = rng.random()
            if roll < 0.2:
                tests.append(f"(path-present '{rng.choice(SLOTS).lower()})")
            elif roll < 0.35:
                tests.append(f"(value-eq '{rng.choice(ATOMS).lower()})")
            elif roll < 0.45:
                tests.append(f"(path-absent '{rng.choice(SLOTS).lower()})")
            actions = []
            subs = []
            for _ in range(rng.randint(1, 4)):
                kind = rng.random()
                if kind < 0.35 or i == n - 1:
                    actions.append('"' + rng.choice(["a", "b", "c", "d e", ".", ","]) + '"')
                elif kind < 0.45:
                    acc = "(self)" if rng.random() < 0.5 else f"(get-param '{rng.choice(SLOTS).lower()})"
                    actions.append(f"(:CALL text {acc})")
                else:
                    sub = rng.choice(cats[i + 1:])
                    acc = "(self)" if rng.random() < 0.3 else f"(get-param '{rng.choice(SLOTS).lower()})"
                    op = ":OPTRULE" if rng.random() < 0.8 else ":RULE"
                    actions.append(f"({op} {sub} {acc})")
                    subs.append(sub)
            eqs = []
            for _ in range(rng.randint(0, max_eqs)):
                feat = rng.choice(FEATURES)
                r = rng.random()
                if r < 0.4 and len(subs) >= 2:
                    a, b = rng.sample(range(len(subs)), 2)
                    eqs.append(f"(:{feat} ({_ref(subs, a)} {_ref(subs, b)}) :EQ)")
                elif r < 0.6 and subs:
                    eqs.append(f"(:{feat} ({_ref(subs, rng.randrange(len(subs)))}) :EQ)")
                elif r < 0.8 and subs:
                    eqs.append(f"(:{feat} ({_ref(subs, rng.randrange(len(subs)))}) :VAL {rng.choice(ATOMS).lower()})")
                else:
                    eqs.append(f"(:{feat} (SELF) :VAL {rng.choice(ATOMS).lower()})")
            cons = f"\n             :CONSTRAINTS {' '.join(eqs)}" if eqs else ""
            forms.append(
                f'(defproduction r{rid} "R{rid}"\n'
                f"  (:PRECOND (:CAT {cat} :TEST ({' '.join(tests)}))\n"
                f"   :ACTIONS (:TEMPLATE {' '.join(actions)}{cons})\n"
                f"   :PREF {rng.randint(0, 2)}))"
            )
    return "\n".join(forms)


def _ref(subs, k):
    cat = subs[k]
    occ = subs[: k + 1].count(cat)
    return cat if occ == 1 else f"{cat}#{occ}"


def random_grammar(rng: random.Random, **kw):
    return parse_grammar(random_grammar_text(rng, **kw))


# ---------------------------------------------------------------------------
# Exceedances by enumerating every window


MICRO = Decimal("0.000001")


def oracle_exceedances(times, values, amount, hours, lo=None, hi=None):
    """times: list of int seconds; returns (status, count)."""
    if len(times) >= 2:
        diffs = Counter(b - a for a, b in zip(times, times[1:]))
        top = max(diffs.values())
        cadence = min(d for d, c in diffs.items() if c == top)
    else:
        cadence = 3600
    k = hours * 3600 // cadence
    # readings are decimal numbers with at most six places
    sel = [(t, Fraction(Decimal(repr(float(v))).quantize(MICRO)))
           for t, v in zip(times, values) if (lo is None or t >= lo) and (hi is None or t < hi)]
    flags = []
    for i in range(len(sel) - k + 1):
        win = sel[i:i + k]
        contiguous = all(win[j + 1][0] - win[j][0] == cadence for j in range(k - 1))
        mean = sum(v for _, v in win) / k
        flags.append(contiguous and mean > Fraction(amount))
    runs = sum(1 for i, f in enumerate(flags) if f and (i == 0 or not flags[i - 1]))
    return ("YES" if runs else "NO"), runs
