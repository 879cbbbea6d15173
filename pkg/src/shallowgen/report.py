"""End-to-end report generation: organize a request into a plan, then
realize each IR statement with a pack grammar."""

from __future__ import annotations

from .engine import Options, derive
from .textorg import CannedBlock, ReportPlan, organize_report


def realize_plan(plan: ReportPlan, grammar, lang: str, options: Options | None = None,
                 category: str = "DECL") -> list[str]:
    """Paragraphs of text: adjacent statements share a paragraph, each
    canned block stands alone."""
    opts = options or Options(lang=lang)
    if opts.lang is None:
        opts = Options(lang=lang, memo=opts.memo, max_depth=opts.max_depth,
                       normalize=opts.normalize, trace=opts.trace)
    paragraphs: list[str] = []
    current: list[str] = []
    for item in plan.items:
        if isinstance(item, CannedBlock):
            if current:
                paragraphs.append(" ".join(current))
                current = []
            paragraphs.append(item.text)
        else:
            current.append(derive(grammar, category, item.ir, opts).text)
    if current:
        paragraphs.append(" ".join(current))
    return paragraphs


def generate_report(pack, datasource, request, *, diagrams: int = 0,
                    options: Options | None = None) -> tuple[ReportPlan, str]:
    """Plan and text for ``request``.  Canned blocks and grammar use the pack
    language; IR statements carry the requested language."""
    plan = organize_report(
        request,
        datasource,
        pack.skeletons,
        pack.schemata,
        pack.aggregation,
        pack.schema,
        diagrams=diagrams,
        canned_lang=pack.language,
    )
    text = "\n\n".join(realize_plan(plan, pack.grammar, pack.language, options))
    return plan, text
