"""Line-based conditional compilation with ``//#if``, ``//#else`` and ``//#endif``.

A directive is a line whose first non-blank characters are ``//#if NAME``,
``//#else`` or ``//#endif``.  Other ``//#`` lines (``//#ifdef``,
``//#define`` ...) are ordinary text.  Detection is purely textual, so a
directive inside a string literal still counts.
"""

from __future__ import annotations

import re
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

from ctxspl.errors import DirectiveError

UNBALANCED_ENDIF = "unbalanced-endif"
UNTERMINATED_IF = "unterminated-if"
ELSE_WITHOUT_IF = "else-without-if"
MALFORMED_DIRECTIVE = "malformed-directive"

_LINES = re.compile(r"[^\n]*\n|[^\n]+$")
_DIRECTIVE = re.compile(r"^[ \t]*//#(if|else|endif)(?![A-Za-z0-9_])(.*)$")


@dataclass(frozen=True)
class DirectiveLine:
    kind: str
    raw: str
    line_number: int
    feature: str = ""

    def __post_init__(self):
        if self.kind == "if" and not self.feature:
            raise ValueError("an if directive needs a feature name")


def _classify(raw: str, number: int) -> DirectiveLine:
    m = _DIRECTIVE.match(raw.rstrip("\r\n"))
    if not m:
        return DirectiveLine("plain", raw, number)
    kind, rest = m.group(1), m.group(2).strip()
    if kind == "if":
        if len(rest.split()) != 1 or not m.group(2)[:1].isspace():
            raise DirectiveError(MALFORMED_DIRECTIVE, number, f"line {number}: expected '//#if <feature>'")
        return DirectiveLine("if", raw, number, rest)
    if rest:
        raise DirectiveError(MALFORMED_DIRECTIVE, number, f"line {number}: //#{kind} takes no argument")
    return DirectiveLine(kind, raw, number)


def scan_directives(source: str) -> list[DirectiveLine]:
    """Classify every line; raise on unbalanced nesting.

    ``raw`` keeps the original line ending so plain lines can be re-emitted
    byte for byte.
    """
    lines = [_classify(raw, n) for n, raw in enumerate(_LINES.findall(source), 1)]
    stack: list[tuple[int, bool]] = []  # (opening line, else seen)
    for d in lines:
        if d.kind == "if":
            stack.append((d.line_number, False))
        elif d.kind == "else":
            if not stack or stack[-1][1]:
                raise DirectiveError(ELSE_WITHOUT_IF, d.line_number, f"line {d.line_number}: //#else without //#if")
            stack[-1] = (stack[-1][0], True)
        elif d.kind == "endif":
            if not stack:
                raise DirectiveError(UNBALANCED_ENDIF, d.line_number, f"line {d.line_number}: //#endif without //#if")
            stack.pop()
    if stack:
        opened = stack[-1][0]
        raise DirectiveError(UNTERMINATED_IF, opened, f"line {opened}: //#if is never closed")
    return lines


def preprocess(source: str, selected: Iterable[str]) -> str:
    selected = set(selected)
    out = []
    stack: list[bool] = []  # truth of each enclosing block
    for d in scan_directives(source):
        if d.kind == "if":
            stack.append(d.feature in selected)
        elif d.kind == "else":
            stack[-1] = not stack[-1]
        elif d.kind == "endif":
            stack.pop()
        elif all(stack):
            out.append(d.raw)
    return "".join(out)


def excluded_file(source: str, selected: Iterable[str]) -> bool:
    """True when the whole file is one ``//#if F`` block with F unselected.

    The block must open on the first line and its ``//#endif`` must be the
    last non-blank line, with no ``//#else`` at the outer level.
    """
    lines = scan_directives(source)
    if not lines or lines[0].kind != "if" or lines[0].feature in set(selected):
        return False
    depth = 0
    for i, d in enumerate(lines):
        if d.kind == "if":
            depth += 1
        elif d.kind == "else" and depth == 1:
            return False
        elif d.kind == "endif":
            depth -= 1
            if depth == 0:
                return all(not rest.raw.strip() for rest in lines[i + 1:])
    return False


def preprocess_tree(src: str | Path, dst: str | Path, selected: Iterable[str]) -> list[Path]:
    """Materialize a product from a source tree; returns written paths relative to ``dst``.

    Files that are not UTF-8 are copied unchanged.
    """
    src, dst = Path(src), Path(dst)
    selected = set(selected)
    written = []
    for path in sorted(p for p in src.rglob("*") if p.is_file()):
        rel = path.relative_to(src)
        data = path.read_bytes()
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError:
            out = data
        else:
            try:
                if excluded_file(text, selected):
                    continue
                out = preprocess(text, selected).encode("utf-8")
            except DirectiveError as exc:
                raise DirectiveError(exc.category, exc.line_number, f"{rel}: {exc.message}") from None
        target = dst / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(out)
        written.append(rel)
    return written
