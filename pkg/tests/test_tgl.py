import pytest

from shallowgen.ir import ABSENT, Symbol, delete_path, get_path, parse_ir
from shallowgen.tgl import (
    Call,
    Canned,
    GetParam,
    GrammarError,
    RegistryError,
    RuleAction,
    SelfAccessor,
    Test as TglTest,
    default_registry,
    eval_accessor,
    eval_test,
    format_grammar,
    lint_grammar,
    parse_grammar,
    register_extension,
)


def _rule(rid, cat="DECL", template='"x"', extra=""):
    return f'(defproduction r "{rid}" (:PRECOND (:CAT {cat}) :ACTIONS (:TEMPLATE {template}{extra})))'


def test_figure2_rule_parses(fixtures_dir):
    g = parse_grammar((fixtures_dir / "figure2.tgl").read_text(encoding="utf-8"))
    assert len(g.rules) == 1
    r = g.rules[0]
    assert (r.rule_id, r.category, r.name) == ("WU01", "DECL", "THRESHOLD-EXCEEDING")
    assert [t.predicate for t in r.tests] == ["COOP-EQ", "THRESHOLD-VALUE-P"]
    assert len(r.actions) == 11
    canned = [a.text for a in r.actions if isinstance(a, Canned)]
    assert canned == ["(", ") ", "."]
    cats = [a.category for a in r.actions if isinstance(a, RuleAction)]
    assert cats == ["PPTIME", "SITEV", "THTYPE", "POLL", "DUR", "VAL", "LAW", "EXCEEDS"]
    assert [a.optional for a in r.actions if isinstance(a, RuleAction)] == [True, True, False, True, True, False, True, False]
    (eq,) = r.constraints
    assert eq.feature == "GENDER" and eq.kind == "EQ"
    assert [p.category for p in eq.participants] == ["THTYPE", "EXCEEDS"]
    assert r.pref == 0 and r.lang == "ANY"


def test_duplicate_rule_id():
    with pytest.raises(GrammarError, match="WU01"):
        parse_grammar(_rule("WU01") + _rule("WU01"))


def test_empty_template():
    with pytest.raises(GrammarError, match="empty"):
        parse_grammar(_rule("A", template=""))


@pytest.mark.parametrize(
    "text",
    [
        '(defproduction r "A" (:PRECOND (:CAT DECL) :ACTIONS (:TEMPLATE (:FOO X (self)))))',
        '(defproduction r "A" (:PRECOND (:CAT DECL) :ACTIONS (:TEMPLATE (:RULE X (other)))))',
        '(defproduction r "A" (:PRECOND (:CAT DECL) :ACTIONS (:TEMPLATE "x" :CONSTRAINTS (:G (X) :MAYBE))))',
        '(defproduction r "A" (:PRECOND (:CAT DECL) :ACTIONS (:TEMPLATE "x")) :PREF high))',
        '(defproduction r "A" (:PRECOND (:CAT DECL) :ACTIONS (:TEMPLATE "x"))',
        '(foo)',
        '(defproduction r "" (:PRECOND (:CAT DECL) :ACTIONS (:TEMPLATE "x")))',
    ],
)
def test_syntax_errors(text):
    with pytest.raises(GrammarError):
        parse_grammar(text)


def test_error_location():
    with pytest.raises(GrammarError) as e:
        parse_grammar("\n\n" + _rule("A", template="(:BAD X)"))
    assert e.value.line == 3


def test_pref_lang_and_comments():
    g = parse_grammar(
        '; comment\n(defproduction r "A" (:PRECOND (:CAT X) :ACTIONS (:TEMPLATE "a") :PREF 7 :LANG fr))'
    )
    r = g.rules[0]
    assert r.pref == 7 and r.lang == "FR"
    assert g.rules_for("X", "FR") == [r]
    assert g.rules_for("X", "DE") == []
    assert g.rules_for("X") == [r]


def test_default_lang_applies():
    g = parse_grammar(_rule("A"), default_lang="de")
    assert g.rules[0].lang == "DE"


def test_eval_test_examples(fig1):
    reg = default_registry()
    assert eval_test(TglTest("COOP-EQ", (Symbol("THRESHOLD-EXCEEDING"),)), fig1, reg)
    assert eval_test(TglTest("PATH-PRESENT", (Symbol("THRESHOLD-VALUE"),)), fig1, reg)
    no_tv = delete_path(fig1, "THRESHOLD-VALUE")
    assert not eval_test(TglTest("PATH-PRESENT", (Symbol("THRESHOLD-VALUE"),)), no_tv, reg)
    assert eval_test(TglTest("THRESHOLD-VALUE-P"), fig1, reg)
    assert not eval_test(TglTest("THRESHOLD-VALUE-P"), no_tv, reg)
    assert eval_test(TglTest("PATH-EQ", (Symbol("EXCEEDS.STATUS"), Symbol("NO"))), fig1, reg)
    assert eval_test(TglTest("LANG-EQ", (Symbol("FR"),)), fig1, reg)
    assert not eval_test(TglTest("LANG-EQ", (Symbol("DE"),)), fig1, reg)
    assert eval_test(TglTest("PATH-GT", (Symbol("THRESHOLD-VALUE.AMOUNT"), 500)), fig1, reg)


def test_unknown_predicate_raises(fig1):
    with pytest.raises(RegistryError):
        eval_test(TglTest("NO-SUCH"), fig1, default_registry())


def test_eval_accessor_examples(fig1):
    t = eval_accessor(GetParam(("TIME",)), fig1)
    assert t == parse_ir("[(PRED SEASON) (NAME [(SEASON WINTER) (YEAR 1996)])]")
    assert eval_accessor(SelfAccessor(), fig1) is fig1
    assert eval_accessor(SelfAccessor(), Symbol("Q")) == Symbol("Q")
    assert eval_accessor(GetParam(("COMPARISON",)), fig1) is ABSENT


def test_register_then_lint_clean():
    reg = register_extension(default_registry(), "season-label", "function", 1, lambda ctx, v: "s")
    g = parse_grammar(_rule("A", template="(:CALL season-label (get-param 'time))"), reg)
    assert isinstance(g.rules[0].actions[0], Call)
    assert not lint_grammar(g).errors


def test_register_duplicate():
    reg = register_extension(default_registry(), "season-label", "function", 1, lambda ctx, v: "s")
    with pytest.raises(RegistryError):
        register_extension(reg, "season-label", "function", 1, lambda ctx, v: "t")
    with pytest.raises(RegistryError):
        register_extension(default_registry(), "coop-eq", "predicate", 1, lambda i, s: True)


def test_registration_does_not_leak():
    register_extension(default_registry(), "leak", "function", 0, lambda ctx: "")
    assert "leak" not in default_registry()


def test_lint_unregistered_names_rule():
    g = parse_grammar(_rule("ZZ9", template="(:CALL no-such-fn (self))"))
    assert any(f.path == "rule ZZ9" and "NO-SUCH-FN" in f.message for f in lint_grammar(g).errors)
    g = parse_grammar('(defproduction r "ZZ8" (:PRECOND (:CAT DECL :TEST ((nope))) :ACTIONS (:TEMPLATE "x")))')
    assert any(f.path == "rule ZZ8" for f in lint_grammar(g).errors)


def test_lint_dangling_category():
    g = parse_grammar(_rule("A", template="(:RULE NOPE (self))"))
    (f,) = lint_grammar(g).errors
    assert "dangling category NOPE" in f.message


def test_lint_missing_constituent():
    g = parse_grammar(
        _rule("A", template='(:RULE EXCEEDS (self))', extra=" :CONSTRAINTS (:GENDER (THTYPE EXCEEDS) :EQ)")
        + _rule("B", cat="EXCEEDS")
    )
    errs = lint_grammar(g).errors
    assert any("missing constituent THTYPE" in f.message for f in errs)


def test_lint_schema_paths(packs):
    g = parse_grammar(_rule("A", template="(:OPTRULE X (get-param 'nowhere))") + _rule("B", cat="X"))
    rep = lint_grammar(g, packs["en"].schema)
    assert not rep.errors
    assert any("NOWHERE" in f.message for f in rep.warnings)


def test_lint_unreachable():
    g = parse_grammar(_rule("A") + _rule("B", cat="ORPHAN"))
    assert any("unreachable" in f.message for f in lint_grammar(g).warnings)


@pytest.mark.parametrize("lang", ["fr", "en", "de"])
def test_bundled_grammars_lint_clean(packs, lang):
    pack = packs[lang]
    rep = lint_grammar(pack.grammar, pack.schema)
    assert not rep.findings, str(rep)


@pytest.mark.parametrize("lang", ["fr", "en", "de"])
def test_print_parse_fixed_point(packs, lang):
    g = packs[lang].grammar
    once = format_grammar(g)
    again = format_grammar(parse_grammar(once))
    assert once == again
    assert [r.rule_id for r in parse_grammar(once).rules] == [r.rule_id for r in g.rules]


def test_eval_is_pure(fig1):
    reg = default_registry()
    t = TglTest("PATH-PRESENT", (Symbol("TIME"),))
    assert {eval_test(t, fig1, reg) for _ in range(5)} == {True}
    assert len({id(eval_accessor(GetParam(("TIME",)), fig1)) for _ in range(5)}) == 1
    assert get_path(fig1, "TIME") is eval_accessor(GetParam(("TIME",)), fig1)
