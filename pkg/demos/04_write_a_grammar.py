"""Write a small grammar with a feature equation and a custom function.

Run with ``python3 demos/04_write_a_grammar.py``.
"""

# %%
from shallowgen.engine import Options, derive, derive_all
from shallowgen.ir import parse_ir
from shallowgen.tgl import default_registry, lint_grammar, parse_grammar, register_extension

# %%
# The noun and the adjective must agree in gender.  The adjective has two
# forms; the equation rejects the one that clashes with the noun.
TEXT = r'''
(defproduction sentence "S1"
  (:PRECOND (:CAT DECL :TEST ((path-present 'noun)))
   :ACTIONS (:TEMPLATE "la" (:RULE NOUN (get-param 'noun)) "est" (:RULE ADJ (self)) (:CALL today) "."
             :CONSTRAINTS (:GENDER (NOUN ADJ) :EQ))))
(defproduction noun "N1" (:PRECOND (:CAT NOUN :TEST ((value-eq 'station)))
   :ACTIONS (:TEMPLATE "station" :CONSTRAINTS (:GENDER (SELF) :VAL fem))))
(defproduction adj-m "A1" (:PRECOND (:CAT ADJ)
   :ACTIONS (:TEMPLATE "fermé" :CONSTRAINTS (:GENDER (SELF) :VAL masc)) :PREF 1))
(defproduction adj-f "A2" (:PRECOND (:CAT ADJ)
   :ACTIONS (:TEMPLATE "fermée" :CONSTRAINTS (:GENDER (SELF) :VAL fem))))
'''

# %%
# Functions called from templates live in a registry.  Registration returns
# a new registry, so the default one is never modified.
registry = register_extension(default_registry(), "today", "function", 0, lambda ctx: "aujourd'hui")
grammar = parse_grammar(TEXT, registry)
print("lint findings:", len(lint_grammar(grammar)))

# %%
# The preferred masculine adjective fails the equation, so the realizer
# falls back to the feminine one.
inp = parse_ir("[(NOUN STATION)]")
print(derive(grammar, "DECL", inp, Options(lang="FR")).text)
print([r.text for r in derive_all(grammar, "DECL", inp, options=Options(lang="FR"))])
