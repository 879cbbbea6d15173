"""Realize a single IR statement in three languages.

Run with ``python3 demos/01_realize_one_statement.py``.
"""

# %%
# An IR statement is an ordered feature structure.  The bundled fixture
# describes one threshold check for a winter season.
from shallowgen.engine import Options, derive, derive_all, format_trace, run_with_trace
from shallowgen.ir import delete_path, parse_ir, serialize_ir
from shallowgen.pack import bundled_pack_dir, load_pack
from shallowgen.schema import validate

FIXTURE = bundled_pack_dir("fr").parent.parent / "fixtures" / "figure1.ir"
fs = parse_ir(FIXTURE.read_text(encoding="utf-8"))
print(serialize_ir(fs))

# %%
# Each pack bundles a schema and a grammar.  Validation comes first; the
# grammar is only asked to realize well-formed input.
packs = {lang: load_pack(bundled_pack_dir(lang)) for lang in ("fr", "en", "de")}
print("schema findings:", len(validate(fs, packs["fr"].schema)))

# %%
# The realizer picks the preferred rule at each step and backtracks when a
# feature equation fails further down.
for lang, pack in packs.items():
    print(f"{lang}: {derive(pack.grammar, 'DECL', fs, Options(lang=pack.language)).text}")

# %%
# Optional constituents disappear cleanly when their slot is missing.
no_time = delete_path(fs, "TIME")
print(derive(packs["en"].grammar, "DECL", no_time, Options(lang="EN")).text)

# %%
# derive_all lists the distinct alternatives in preference order.
for r in derive_all(packs["en"].grammar, "DECL", fs, limit=5, options=Options(lang="EN")):
    print(f"[{r.rule_id}] {r.text}")

# %%
# The trace shows which rule each category tried and why it failed or won.
result, trace = run_with_trace(packs["fr"].grammar, "DECL", fs, Options(lang="FR"))
print("\n".join(format_trace(trace).splitlines()[:12]))
