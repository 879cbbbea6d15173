"""Command-line interface.

Exit codes: 0 success, 1 invalid input (IR, request, data or pack findings),
2 no derivation, 3 file not found or unreadable, 4 no data and no fallback,
64 command-line usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .airquality import DataError, RequestError, load_datasource, parse_request
from .engine import DerivationError, Options, derive_all, format_trace, run_with_trace
from .ir import IRSyntaxError, canonical_hash, parse_ir
from .pack import PackError, lint_pack, load_pack
from .schema import validate
from .textorg import NoDataError, OrganizerError
from .tgl import LANGUAGE_CODES, language_code
from .report import generate_report

EXIT_OK, EXIT_INVALID, EXIT_NODERIV, EXIT_IO, EXIT_NODATA, EXIT_USAGE = 0, 1, 2, 3, 4, 64


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise _Fail(EXIT_IO, f"cannot read {path}: {e.strerror}") from None


def _load_pack(path):
    try:
        return load_pack(path)
    except PackError as e:
        raise _Fail(EXIT_IO if e.io else EXIT_INVALID, str(e)) from None


def _lang(value: str | None, pack) -> str:
    if value is None:
        return pack.language
    code = language_code(value)
    known = set(LANGUAGE_CODES.values()) | {r.lang for r in pack.grammar.rules}
    if code not in known - {"ANY"}:
        raise _Fail(EXIT_USAGE, f"unknown language {value}")
    return code


def _load_ir(path, pack, err):
    try:
        fs = parse_ir(_read_text(path))
    except IRSyntaxError as e:
        raise _Fail(EXIT_INVALID, f"{path}: {e}") from None
    report = validate(fs, pack.schema)
    for f in report.warnings:
        print(f"{path}: {f}", file=err)
    if report.errors:
        raise _Fail(EXIT_INVALID, "\n".join(f"{path}: {f}" for f in report.errors))
    return fs


def cmd_realize(args, out, err) -> int:
    pack = _load_pack(args.pack)
    fs = _load_ir(args.ir, pack, err)
    lang = _lang(args.lang, pack)
    if args.all is not None:
        trace: list = []
        try:
            results = derive_all(pack.grammar, args.cat, fs, limit=args.all,
                                 options=Options(lang=lang, trace=trace if args.trace else None))
        except DerivationError as e:
            if args.trace:
                print(format_trace(trace), file=err)
            raise _Fail(EXIT_NODERIV, str(e)) from None
        if args.trace:
            print(format_trace(trace), file=err)
        for r in results:
            print(r.text, file=out)
        return EXIT_OK
    result, trace = run_with_trace(pack.grammar, args.cat, fs, Options(lang=lang))
    if args.trace:
        print(format_trace(trace), file=err)
    if isinstance(result, Exception):
        raise _Fail(EXIT_NODERIV, str(result))
    print(result.text, file=out)
    return EXIT_OK


def cmd_report(args, out, err) -> int:
    pack = _load_pack(args.pack)
    data = Path(args.data)
    for name in ("measurements.csv", "metadata.json"):
        if not (data / name).is_file():
            raise _Fail(EXIT_IO, f"missing {data / name}")
    try:
        request = parse_request(_read_text(args.request))
        datasource = load_datasource(data)
    except (RequestError, DataError) as e:
        raise _Fail(EXIT_INVALID, str(e)) from None
    try:
        plan, text = generate_report(pack, datasource, request)
    except NoDataError as e:
        raise _Fail(EXIT_NODATA, str(e)) from None
    except OrganizerError as e:
        raise _Fail(EXIT_INVALID, str(e)) from None
    except DerivationError as e:
        raise _Fail(EXIT_NODERIV, str(e)) from None
    if args.plan:
        out.write(plan.format())
    else:
        print(text, file=out)
    return EXIT_OK


def cmd_validate(args, out, err) -> int:
    pack = _load_pack(args.pack)
    report = lint_pack(pack)
    for f in report:
        print(f, file=out)
    if len(report):
        return EXIT_INVALID
    print(f"{pack.manifest.name}: clean ({len(pack.grammar.rules)} rules)", file=out)
    return EXIT_OK


def enumerate_corpus(pack, corpus, lang: str, cat: str = "DECL", limit: int = 10000, err=None):
    """Distinct (IR, output) pairs per corpus file, plus per-file errors."""
    listing = []
    errors = []
    seen = set()
    for path in sorted(Path(corpus).glob("*.ir")):
        try:
            fs = parse_ir(path.read_text(encoding="utf-8"))
        except (OSError, IRSyntaxError) as e:
            errors.append((path, EXIT_INVALID, str(e)))
            continue
        rep = validate(fs, pack.schema)
        if rep.errors:
            errors.append((path, EXIT_INVALID, str(rep.errors[0])))
            continue
        try:
            results = derive_all(pack.grammar, cat, fs, limit=limit, options=Options(lang=lang))
        except DerivationError as e:
            errors.append((path, EXIT_NODERIV, str(e)))
            continue
        key = canonical_hash(fs)
        texts = {r.text for r in results}
        fresh = {t for t in texts if (key, t) not in seen}
        seen |= {(key, t) for t in texts}
        listing.append((path.name, len(fresh)))
    return listing, len(seen), errors


def cmd_enumerate(args, out, err) -> int:
    pack = _load_pack(args.pack)
    if not Path(args.corpus).is_dir():
        raise _Fail(EXIT_IO, f"no corpus directory {args.corpus}")
    listing, total, errors = enumerate_corpus(pack, args.corpus, _lang(args.lang, pack), args.cat)
    for name, n in listing:
        print(f"{name}\t{n}", file=out)
    for path, _code, msg in errors:
        print(f"{path.name}: {msg}", file=err)
    print(f"total\t{total}", file=out)
    return errors[0][1] if errors else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    version = f"%(prog)s {__version__}"
    p = _Parser(prog="shallowgen", description="Template-based text generation from feature-structure IR.")
    p.add_argument("--version", action="version", version=version)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("realize", help="realize one IR expression")
    r.add_argument("--pack", required=True, help="grammar pack directory")
    r.add_argument("--ir", required=True, help="IR file")
    r.add_argument("--lang", help="output language (default: pack language)")
    r.add_argument("--cat", default="DECL", help="start category (default: DECL)")
    r.add_argument("--trace", action="store_true", help="print the derivation trace to standard error")
    r.add_argument("--all", type=int, metavar="N", help="print up to N distinct realizations")
    r.set_defaults(fn=cmd_realize)

    g = sub.add_parser("report", help="generate a report from a request")
    g.add_argument("--pack", required=True, help="grammar pack directory")
    g.add_argument("--data", required=True, help="directory with measurements.csv and metadata.json")
    g.add_argument("--request", required=True, help="request file")
    g.add_argument("--plan", action="store_true", help="print the report plan instead of text")
    g.set_defaults(fn=cmd_report)

    v = sub.add_parser("validate", help="check a grammar pack")
    v.add_argument("--pack", required=True, help="grammar pack directory")
    v.set_defaults(fn=cmd_validate)

    e = sub.add_parser("enumerate", help="count distinct realizations over a corpus")
    e.add_argument("--pack", required=True, help="grammar pack directory")
    e.add_argument("--lang", help="output language (default: pack language)")
    e.add_argument("--cat", default="DECL", help="start category (default: DECL)")
    e.add_argument("--corpus", required=True, help="directory of .ir files")
    e.set_defaults(fn=cmd_enumerate)

    for sp in (r, g, v, e):
        sp.add_argument("--version", action="version", version=version)
    return p


def main(argv=None, stdout=None, stderr=None) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else int(e.code)
    try:
        return args.fn(args, out, err)
    except _Fail as e:
        print(f"error: {e}", file=err)
        return e.code


def run() -> None:
    for stream in (sys.stdout, sys.stderr):
        try:
            stream.reconfigure(encoding="utf-8")
        except (AttributeError, ValueError):
            pass
    sys.exit(main())


if __name__ == "__main__":
    run()
