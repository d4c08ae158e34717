"""Text notation for broker sessions and traces.

One message per line, shell-style tokens::

    KIND sender key=value req:Feature=Value ...

Tokens per kind:

=========================  ==================================================
GetContextAwareService     ``id=`` ``threshold=`` ``qoc=p,c,t,r,u``
                           ``who= where= when= what= why= device= security=``
                           ``pref.NAME=`` ``req:Feature=Child``
NotifyQoSChange            ``service=`` ``set:key=value`` (``set:Small.cost=3``)
NotifyQoCChange            ``obs:Feature=Value`` ``qoc=p,c,t,r,u``
FindServiceContext         ``service=``
ReserveResources           ``id=`` ``provider=`` ``ram_gb=`` ...
ReleaseResources           ``id=``
=========================  ==================================================

Scripts may also hold setup lines, resolved relative to the script file::

    %context cc_spl.fm.xml
    %provider cloudA offer=offers/cloudA/csc_spl.fm.xml capacity:ram_gb=8

``offer=`` takes comma-separated files or directories of ``*.fm.xml``.

A trace has one line per handled message: the logical clock, the input,
``=>``, then the outputs separated by ``;``.
"""

from __future__ import annotations

import shlex
from collections.abc import Sequence
from fractions import Fraction
from pathlib import Path

from ctxspl.broker import (
    BROKER,
    ERROR,
    FIND,
    FIND_REPLY,
    GET,
    MESSAGE_KINDS,
    NOTIFY_QOC,
    NOTIFY_QOS,
    RELEASE,
    RESERVE,
    SEND,
    BrokerMessage,
    BrokerState,
    QoCChange,
    QoSChange,
    Release,
    Reservation,
    ServiceQuery,
    ServiceRequest,
    register_provider,
)
from ctxspl.context import PERFECT_QOC, ContextObservation, ContextSnapshot, QoCMetrics
from ctxspl.cscafm import ServiceOffer, check_offer
from ctxspl.errors import FormatError, InvalidOfferError
from ctxspl.fmxml import parse_feature_model
from ctxspl.model import PropertyTriple, RequirementTriple, format_number

_SNAPSHOT_FIELDS = ("who", "where", "when", "what", "why", "device", "security")


def _num(value) -> str:
    return format_number(value)


def _qoc_token(q: QoCMetrics) -> list[str]:
    if q == PERFECT_QOC:
        return []
    return ["qoc=" + ",".join(_num(v) for v in q.values())]


def format_message(msg: BrokerMessage) -> str:
    p = msg.payload
    tokens = [msg.kind, msg.sender]
    if msg.recipient:
        tokens.append(f"to={msg.recipient}")
    if msg.kind == GET:
        tokens.append(f"id={p.request_id}")
        s = p.snapshot
        if s.who != p.consumer_id:
            tokens.append(f"who={s.who}")
        for key in _SNAPSHOT_FIELDS[1:]:
            value = getattr(s, key)
            if value not in ("", 0):
                tokens.append(f"{key}={value}")
        tokens.extend(f"pref.{t.name}={t.value}" for t in s.preferences)
        if p.qoc_threshold:
            tokens.append(f"threshold={_num(p.qoc_threshold)}")
        tokens.extend(_qoc_token(p.qoc))
        tokens.extend(f"req:{r.feature}={r.value}" for r in p.requirements)
    elif msg.kind == NOTIFY_QOS:
        tokens.append(f"service={p.service_id}")
        tokens.extend(f"set:{k}={_num(v)}" for k, v in sorted(p.attributes.items()))
    elif msg.kind == NOTIFY_QOC:
        tokens.extend(f"obs:{o.feature}={o.value}" for o in p.observations)
        qocs = {o.qoc for o in p.observations}
        if len(qocs) == 1:
            tokens.extend(_qoc_token(qocs.pop()))
    elif msg.kind == FIND:
        tokens.append(f"service={p.service_id}")
    elif msg.kind == FIND_REPLY:
        tokens += [f"service={p.service_id}", f"provider={p.provider_id}"]
        tokens.extend(f"attr:{k}={_num(v)}" for k, v in sorted(p.attributes.items()))
    elif msg.kind == SEND:
        r = p.result
        tokens += [
            f"id={p.request_id}",
            f"service={r.service_id}",
            f"provider={r.provider_id}",
            f"cost={_num(r.total_cost)}",
            f"qoc={_num(r.achieved_qoc)}",
            "config=" + ",".join(r.configuration.sorted()),
        ]
        tokens.extend(f"bind:{t.name}={t.value}" for t in r.bound_properties)
    elif msg.kind == ERROR:
        if p.request_id:
            tokens.append(f"id={p.request_id}")
        tokens.append(f"error={p.category}")
        if p.detail:
            tokens.append(f"detail={p.detail}")
    elif msg.kind == RESERVE:
        tokens += [f"id={p.request_id}", f"provider={p.provider_id}"]
        tokens.extend(f"{k}={_num(v)}" for k, v in sorted(p.demand.items()))
    elif msg.kind == RELEASE:
        tokens.append(f"id={p.request_id}")
    return shlex.join(tokens)


def _rational(text: str, line: int | None) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise FormatError(f"{text!r} is not a number", line=line) from None


def _qoc(text: str, line: int | None) -> QoCMetrics:
    parts = text.split(",")
    if len(parts) != 5:
        raise FormatError("qoc takes five comma-separated values", line=line)
    try:
        return QoCMetrics(*(_rational(v, line) for v in parts))
    except ValueError as exc:
        raise FormatError(str(exc), line=line) from None


def _split(tokens: Sequence[str], line: int | None):
    plain: dict[str, str] = {}
    tagged: list[tuple[str, str, str]] = []  # (prefix, key, value)
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or not key:
            raise FormatError(f"expected key=value, got {tok!r}", line=line)
        prefix, colon, rest = key.partition(":")
        if colon:
            name, eq, val = f"{rest}={value}".partition("=")
            if not name or not val:
                raise FormatError(f"bad token {tok!r}", line=line)
            tagged.append((prefix, name, val))
        else:
            if key in plain:
                raise FormatError(f"repeated key {key!r}", line=line)
            plain[key] = value
    return plain, tagged


def _need(plain: dict[str, str], key: str, line: int | None) -> str:
    value = plain.pop(key, "")
    if not value:
        raise FormatError(f"missing {key}=", line=line)
    return value


def _no_extra(plain, tagged, allowed_tags, line) -> None:
    if plain:
        raise FormatError(f"unexpected key(s) {', '.join(sorted(plain))}", line=line)
    bad = sorted({p for p, _, _ in tagged if p not in allowed_tags})
    if bad:
        raise FormatError(f"unexpected token prefix(es) {', '.join(bad)}", line=line)


def parse_message(text: str, line: int | None = None) -> BrokerMessage:
    """Parse one input message line (output-only kinds are rejected)."""
    try:
        tokens = shlex.split(text, comments=True)
    except ValueError as exc:
        raise FormatError(str(exc), line=line) from None
    if len(tokens) < 2:
        raise FormatError("expected 'KIND sender ...'", line=line)
    kind, sender, rest = tokens[0], tokens[1], tokens[2:]
    if kind not in MESSAGE_KINDS:
        raise FormatError(f"unknown message kind {kind!r}", line=line)
    if kind in (SEND, ERROR, FIND_REPLY):
        raise FormatError(f"{kind} is emitted by the broker, not sent to it", line=line)
    plain, tagged = _split(rest, line)
    try:
        if kind == GET:
            rid = _need(plain, "id", line)
            threshold = _rational(plain.pop("threshold", "0"), line)
            qoc = _qoc(plain.pop("qoc"), line) if "qoc" in plain else PERFECT_QOC
            prefs = [PropertyTriple(k[5:], "string", plain.pop(k)) for k in sorted(plain) if k.startswith("pref.")]
            snap = {k: plain.pop(k) for k in _SNAPSHOT_FIELDS if k in plain}
            when = snap.pop("when", "0")
            if not when.isdigit():
                raise FormatError("when= must be whole seconds", line=line)
            _no_extra(plain, tagged, {"req"}, line)
            snapshot = ContextSnapshot(
                who=snap.pop("who", sender), when=int(when), preferences=tuple(prefs), **snap
            )
            reqs = tuple(RequirementTriple(k, v) for _, k, v in tagged)
            payload = ServiceRequest(rid, sender, reqs, snapshot, threshold, qoc)
        elif kind == NOTIFY_QOS:
            service = _need(plain, "service", line)
            _no_extra(plain, tagged, {"set"}, line)
            payload = QoSChange(service, {k: _rational(v, line) for _, k, v in tagged})
        elif kind == NOTIFY_QOC:
            qoc = _qoc(plain.pop("qoc"), line) if "qoc" in plain else PERFECT_QOC
            _no_extra(plain, tagged, {"obs"}, line)
            payload = QoCChange(sender, tuple(ContextObservation(k, v, qoc) for _, k, v in tagged))
        elif kind == FIND:
            service = _need(plain, "service", line)
            _no_extra(plain, tagged, set(), line)
            payload = ServiceQuery(service)
        elif kind == RESERVE:
            rid = _need(plain, "id", line)
            provider = _need(plain, "provider", line)
            demand = {k: _rational(v, line) for k, v in plain.items()}
            _no_extra({}, tagged, set(), line)
            payload = Reservation(rid, provider, demand)
        else:
            rid = _need(plain, "id", line)
            _no_extra(plain, tagged, set(), line)
            payload = Release(rid)
        return BrokerMessage(kind, sender, payload)
    except (ValueError, TypeError) as exc:
        raise FormatError(str(exc), line=line) from None


def _load_offers(path: Path, provider: str) -> list[ServiceOffer]:
    files = sorted(path.rglob("*.fm.xml")) if path.is_dir() else [path]
    return [
        check_offer(ServiceOffer((m := parse_feature_model(f.read_bytes())).name, provider, m)) for f in files
    ]


def parse_script(text: str, base: str | Path = ".") -> tuple[BrokerState, list[BrokerMessage]]:
    """Build the initial state from setup lines and parse the message lines."""
    base = Path(base)
    context = None
    providers: list[tuple[str, list[ServiceOffer], dict[str, Fraction], int]] = []
    messages: list[BrokerMessage] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not line.startswith("%"):
            messages.append(parse_message(line, lineno))
            continue
        try:
            tokens = shlex.split(line[1:], comments=True)
        except ValueError as exc:
            raise FormatError(str(exc), line=lineno) from None
        if tokens[:1] == ["context"] and len(tokens) == 2:
            context = parse_feature_model((base / tokens[1]).read_bytes())
        elif tokens[:1] == ["provider"] and len(tokens) >= 2:
            plain, tagged = _split(tokens[2:], lineno)
            offers = []
            for path in filter(None, plain.pop("offer", "").split(",")):
                offers.extend(_load_offers(base / path, tokens[1]))
            capacity = {k: _rational(v, lineno) for p, k, v in tagged if p == "capacity"}
            _no_extra(plain, tagged, {"capacity"}, lineno)
            providers.append((tokens[1], offers, capacity, lineno))
        else:
            raise FormatError(f"unknown setup line {raw!r}", line=lineno)
    if context is None:
        raise FormatError("script has no '%context' line")
    state = BrokerState(context)
    for provider, offers, capacity, lineno in providers:
        try:
            state = register_provider(state, provider, offers, capacity)
        except InvalidOfferError as exc:
            raise InvalidOfferError(f"line {lineno}: {exc.message}") from None
    return state, messages


def format_trace(trace, start_clock: int = 0) -> str:
    lines = []
    for clock, (msg, out) in enumerate(trace, start_clock + 1):
        parts = [str(clock), format_message(msg), "=>"]
        if out:
            parts.append(" ; ".join(format_message(m) for m in out))
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


__all__ = ["BROKER", "format_message", "format_trace", "parse_message", "parse_script"]
