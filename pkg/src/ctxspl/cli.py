"""Command-line driver.

Exit status: 0 on success, 1 on a domain error (category printed on stderr),
2 on a usage error.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path
from xml.sax.saxutils import quoteattr

from ctxspl import fixtures
from ctxspl.broker import run_session
from ctxspl.context import parse_context, parse_requirements, snapshot_to_observations
from ctxspl.cscafm import derive, load_offers
from ctxspl.errors import SemanticError, SplError
from ctxspl.fmxml import (
    descriptor_for,
    parse_feature_model,
    parse_product,
    serialize_feature_model,
    serialize_product,
)
from ctxspl.model import count_products, enumerate_products, format_number
from ctxspl.preprocessor import preprocess_tree
from ctxspl.session import format_trace, parse_script


def _fraction(text: str) -> Fraction:
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxspl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def fmt(p):
        p.add_argument("--format", choices=("text", "xml"), default="text")

    p = sub.add_parser("validate", help="check a feature model file")
    p.add_argument("model", type=Path)
    fmt(p)

    p = sub.add_parser("products", help="list or count the products of a feature model")
    p.add_argument("model", type=Path)
    p.add_argument("--count", action="store_true", help="print only the number of products")
    p.add_argument("--limit", type=_positive, default=10000)
    fmt(p)

    p = sub.add_parser("derive", help="derive the cheapest context-aware service configuration")
    p.add_argument("--context", type=Path, required=True, help="consumer context file")
    p.add_argument("--requirements", type=Path, required=True, help="requirements file")
    p.add_argument("--offers", type=Path, required=True, help="directory of <provider>/*.fm.xml offers")
    p.add_argument("--qoc-threshold", type=_fraction, default=Fraction(0))
    p.add_argument("--context-model", type=Path, help="consumer context feature model (default: bundled CC_SPL)")
    p.add_argument("--aspects", type=Path, help="product descriptor supplying pointcuts and bindings")
    p.add_argument("--out", type=Path, help="write the product descriptor here")
    fmt(p)

    p = sub.add_parser("broker-sim", help="replay a broker session script and print the trace")
    p.add_argument("--script", type=Path, required=True)

    p = sub.add_parser("preprocess", help="materialize a product from annotated sources")
    p.add_argument("--config", type=Path, required=True, help="product descriptor naming the selected features")
    p.add_argument("--in", dest="src", type=Path, required=True)
    p.add_argument("--out", dest="dst", type=Path, required=True)
    return parser


def _validate(args, out) -> int:
    try:
        fm = parse_feature_model(args.model.read_bytes())
    except SemanticError as exc:
        for err in exc.errors:
            print(f"{err.category}: {err.feature}{': ' + err.message if err.message else ''}", file=out)
        raise
    if args.format == "xml":
        out.write(serialize_feature_model(fm).decode("utf-8"))
    else:
        print(f"ok: {fm.name} ({len(fm)} features)", file=out)
    return 0


def _products(args, out) -> int:
    fm = parse_feature_model(args.model.read_bytes())
    if args.count:
        print(count_products(fm), file=out)
        return 0
    products = enumerate_products(fm, args.limit)
    if args.format == "xml":
        attrs = f'model={quoteattr(fm.name)} count="{products.total}"'
        if products.truncated:
            attrs += ' truncated="true"'
        print(f"<products {attrs}>", file=out)
        for cfg in products:
            doc = serialize_product(cfg, descriptor_for(fm, cfg)).decode("utf-8")
            out.write("".join("  " + line + "\n" for line in doc.splitlines()))
        print("</products>", file=out)
        return 0
    for cfg in products:
        print(", ".join(cfg.sorted()), file=out)
    if products.truncated:
        print(f"... truncated: {len(products)} of {products.total} products shown", file=out)
    return 0


def _derive(args, out) -> int:
    context_model = parse_feature_model(
        args.context_model.read_bytes() if args.context_model else fixtures.read_bytes("cc_spl.fm.xml")
    )
    snapshot = parse_context(args.context.read_text(encoding="utf-8"))
    reqs = parse_requirements(args.requirements.read_text(encoding="utf-8"))
    offers = load_offers(args.offers)
    result = derive(context_model, snapshot_to_observations(snapshot), offers, reqs, args.qoc_threshold)
    template = parse_product(args.aspects.read_bytes()) if args.aspects else None
    descriptor = descriptor_for(result.offer.model, result.configuration, template)
    doc = serialize_product(result.configuration, descriptor)
    if args.out:
        args.out.write_bytes(doc)
    if args.format == "xml":
        out.write(doc.decode("utf-8"))
        return 0
    print(f"service = {result.service_id}", file=out)
    print(f"provider = {result.provider_id}", file=out)
    print(f"total_cost = {format_number(result.total_cost)}", file=out)
    print(f"achieved_qoc = {format_number(result.achieved_qoc)}", file=out)
    print(f"configuration = {', '.join(result.configuration.sorted())}", file=out)
    print("bound_properties:", file=out)
    for prop in result.bound_properties:
        print(f"  {prop.name} = {prop.value}", file=out)
    return 0


def _broker_sim(args, out) -> int:
    state, messages = parse_script(args.script.read_text(encoding="utf-8"), args.script.parent)
    _, trace = run_session(state, messages)
    out.write(format_trace(trace))
    return 0


def _preprocess(args, out) -> int:
    selected = parse_product(args.config.read_bytes()).names()
    for rel in preprocess_tree(args.src, args.dst, selected):
        print(rel.as_posix(), file=out)
    return 0


_COMMANDS = {
    "validate": _validate,
    "products": _products,
    "derive": _derive,
    "broker-sim": _broker_sim,
    "preprocess": _preprocess,
}


def run(argv: list[str] | None = None, stdout=None, stderr=None) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        return _COMMANDS[args.command](args, out)
    except SplError as exc:
        print(f"error: {exc.category}: {exc.message}", file=err)
        return 1
    except OSError as exc:
        print(f"error: io-error: {exc}", file=err)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
