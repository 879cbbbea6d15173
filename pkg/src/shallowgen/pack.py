"""Grammar packs: a directory with a ``pack.manifest`` naming the IR schema,
the grammar files, report skeletons, restructuring schemata and aggregation
rules.

Manifest lines are ``key = value``; ``grammar`` may repeat and paths are
relative to the manifest.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .airquality import BINDING_NAMES, REPORT_TYPES
from .ir import FeaturePath
from .schema import Finding, IrSchema, SchemaError, ValidationReport, parse_schema
from .sexpr import ReadError
from .textorg import (
    AggregationRules,
    ReportSkeleton,
    RestructuringSchema,
    StatementSlot,
    edit_paths,
    parse_aggregation,
    parse_schemata,
    parse_skeletons,
)
from .tgl import Grammar, default_registry, lint_grammar, parse_grammar

MANIFEST = "pack.manifest"
SINGLE_KEYS = ("name", "language", "schema", "skeletons", "schemata", "aggregation")
MULTI_KEYS = ("grammar",)
REQUIRED_KEYS = ("language", "schema", "grammar", "skeletons", "schemata", "aggregation")


class PackError(Exception):
    """Malformed or incomplete pack; ``io`` marks missing/unreadable files."""

    def __init__(self, message: str, io: bool = False):
        self.io = io
        super().__init__(message)


@dataclass(frozen=True)
class PackManifest:
    root: Path
    name: str
    language: str
    schema: Path
    grammars: tuple[Path, ...]
    skeletons: Path
    schemata: Path
    aggregation: Path

    def files(self) -> list[Path]:
        return [self.schema, *self.grammars, self.skeletons, self.schemata, self.aggregation]


def read_manifest(pack_dir) -> PackManifest:
    root = Path(pack_dir)
    path = root / MANIFEST
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise PackError(f"cannot read {path}: {e.strerror}", io=True) from None
    single: dict[str, str] = {}
    multi: dict[str, list[str]] = {k: [] for k in MULTI_KEYS}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip().lower(), value.strip()
        if not sep or not value:
            raise PackError(f"{path}:{lineno}: expected key = value")
        if key in MULTI_KEYS:
            multi[key].append(value)
        elif key in SINGLE_KEYS:
            if key in single:
                raise PackError(f"{path}:{lineno}: duplicate key {key}")
            single[key] = value
        else:
            raise PackError(f"{path}:{lineno}: unknown key {key}")
    missing = [k for k in REQUIRED_KEYS if k not in single and not multi.get(k)]
    if missing:
        raise PackError(f"{path}: missing keys {', '.join(missing)}")
    rel = lambda v: (root / v).resolve()  # noqa: E731
    return PackManifest(
        root=root,
        name=single.get("name", root.name),
        language=single["language"].upper(),
        schema=rel(single["schema"]),
        grammars=tuple(rel(g) for g in multi["grammar"]),
        skeletons=rel(single["skeletons"]),
        schemata=rel(single["schemata"]),
        aggregation=rel(single["aggregation"]),
    )


@dataclass(frozen=True)
class Pack:
    manifest: PackManifest
    schema: IrSchema
    grammar: Grammar
    skeletons: dict[str, ReportSkeleton]
    schemata: list[RestructuringSchema]
    aggregation: AggregationRules

    @property
    def language(self) -> str:
        return self.manifest.language


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as e:
        raise PackError(f"cannot read {path}: {e.strerror}", io=True) from None


def load_pack(pack_dir, registry=None) -> Pack:
    """Load every file of a pack; syntax errors raise :class:`PackError`."""
    m = read_manifest(pack_dir)
    texts = {p: _read(p) for p in m.files()}
    try:
        schema = parse_schema(texts[m.schema])
    except SchemaError as e:
        raise PackError(f"{m.schema}: {e}") from None
    grammar = None
    for gpath in m.grammars:
        # files without an explicit :LANG default to the pack language,
        # except shared files outside the pack directory
        lang = m.language if gpath.parent == m.root.resolve() else "ANY"
        try:
            g = parse_grammar(texts[gpath], registry or default_registry(), default_lang=lang)
        except ReadError as e:
            raise PackError(f"{gpath}: {e}") from None
        try:
            grammar = g if grammar is None else grammar.merged(g)
        except ValueError as e:
            raise PackError(f"{gpath}: {e}") from None
    parsed = {}
    for key, path, fn in (
        ("skeletons", m.skeletons, parse_skeletons),
        ("schemata", m.schemata, parse_schemata),
        ("aggregation", m.aggregation, parse_aggregation),
    ):
        try:
            parsed[key] = fn(texts[path])
        except (ReadError, ValueError) as e:
            raise PackError(f"{path}: {e}") from None
    return Pack(m, schema, grammar, parsed["skeletons"], parsed["schemata"], parsed["aggregation"])


def lint_pack(pack: Pack) -> ValidationReport:
    """Grammar lint plus consistency of skeletons, schemata and aggregation
    rules with the IR schema."""
    rep = ValidationReport()
    rep.extend(lint_grammar(pack.grammar, pack.schema))
    coops = {str(s) for s in pack.schema.slot_enum("COOP")}

    def add(where, msg, sev="error"):
        rep.findings.append(Finding(sev, where, msg))

    for rtype in REPORT_TYPES:
        if rtype not in pack.skeletons:
            add("skeletons", f"no skeleton for report type {rtype}")
    for rtype, sk in pack.skeletons.items():
        for slot in sk.slots:
            where = f"skeleton {rtype}/{slot.name}"
            if isinstance(slot, StatementSlot):
                for t in filter(None, (slot.assertion, slot.fallback)):
                    if t not in coops:
                        add(where, f"assertion type {t} is not a COOP value of the schema")
                names = [b for _, b in slot.bind]
            else:
                names = [slot.key]
            for b in names:
                if b not in BINDING_NAMES:
                    add(where, f"binding {b.lower()} is not produced by the datasource")
    for sch in pack.schemata:
        for op in sch.edits:
            if not op[1]:
                add(f"schema {sch.name}", "empty edit path")
    for rule in pack.aggregation:
        for op in rule.edits:
            for p in edit_paths(op):
                if not pack.schema.path_walkable(p):
                    add(f"aggregation {rule.name}", f"path {p} is not defined by the IR schema")
            if op[0] == "delete":
                p = FeaturePath(op[1])
                for st in pack.schema.root_structures():
                    s = st.slot(p[0])
                    if len(p) == 1 and s is not None and s.required:
                        add(f"aggregation {rule.name}", f"deletes required slot {p}")
                        break
    return rep


def bundled_pack_dir(lang: str) -> Path:
    """Directory of a bundled pack (``fr``, ``en`` or ``de``)."""
    return Path(str(resources.files("shallowgen") / "data" / "packs" / lang.lower()))


def bundled_data_dir() -> Path:
    return Path(str(resources.files("shallowgen") / "data" / "temsis"))
