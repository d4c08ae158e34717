"""Context broker as a pure, message-driven state machine.

``handle_message(state, msg)`` returns a new state and the messages the
broker emits.  Nothing is mutated in place and time is a logical clock, so a
session replays identically.  Failures never escape as exceptions; they
come back as ``ErrorReply`` messages carrying the error category.

Resource capacity is stored per provider as a fixed total; what remains is
the total minus live reservations.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from fractions import Fraction

from ctxspl.context import (
    PERFECT_QOC,
    ContextObservation,
    ContextSnapshot,
    QoCMetrics,
    snapshot_to_observations,
)
from ctxspl.cscafm import (
    DerivationResult,
    ServiceOffer,
    check_offer,
    derive,
    resource_demand,
)
from ctxspl.errors import InvalidOfferError, SplError
from ctxspl.fmxml import ProductDescriptor, descriptor_for
from ctxspl.model import Feature, FeatureModel, RequirementTriple, to_rational

BROKER = "broker"

GET = "GetContextAwareService"
FIND = "FindServiceContext"
FIND_REPLY = "ServiceContextReply"
NOTIFY_QOS = "NotifyQoSChange"
NOTIFY_QOC = "NotifyQoCChange"
SEND = "SendContextAwareService"
ERROR = "ErrorReply"
RESERVE = "ReserveResources"
RELEASE = "ReleaseResources"

MESSAGE_KINDS = (GET, FIND, FIND_REPLY, NOTIFY_QOS, NOTIFY_QOC, SEND, ERROR, RESERVE, RELEASE)

UNKNOWN_ID = "unknown-id"
DUPLICATE_REQUEST = "duplicate-request"
INSUFFICIENT_RESOURCES = "insufficient-resources"
UNEXPECTED_MESSAGE = "unexpected-message"


# -- payloads -----------------------------------------------------------------


@dataclass(frozen=True)
class ServiceRequest:
    request_id: str
    consumer_id: str
    requirements: tuple[RequirementTriple, ...]
    snapshot: ContextSnapshot
    qoc_threshold: Fraction = Fraction(0)
    qoc: QoCMetrics = PERFECT_QOC

    def __post_init__(self):
        if not self.request_id or not self.consumer_id:
            raise ValueError("a request needs an id and a consumer")
        object.__setattr__(self, "requirements", tuple(self.requirements))
        object.__setattr__(self, "qoc_threshold", to_rational(self.qoc_threshold))


@dataclass(frozen=True)
class QoSChange:
    """New attribute values for an offer.

    Plain keys (``cost``) target the root feature; ``Feature.key`` targets
    the named feature.
    """

    service_id: str
    attributes: Mapping[str, Fraction]

    def __post_init__(self):
        object.__setattr__(self, "attributes", {k: to_rational(v) for k, v in self.attributes.items()})


@dataclass(frozen=True)
class QoCChange:
    consumer_id: str
    observations: tuple[ContextObservation, ...]

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(self.observations))


@dataclass(frozen=True)
class ServiceQuery:
    service_id: str


@dataclass(frozen=True)
class ServiceContext:
    service_id: str
    provider_id: str
    attributes: Mapping[str, Fraction]


@dataclass(frozen=True)
class Delivery:
    request_id: str
    result: DerivationResult
    product: ProductDescriptor


@dataclass(frozen=True)
class ErrorInfo:
    category: str
    detail: str = ""
    request_id: str = ""


@dataclass(frozen=True)
class Reservation:
    request_id: str
    provider_id: str
    demand: Mapping[str, Fraction]

    def __post_init__(self):
        object.__setattr__(self, "demand", {k: to_rational(v) for k, v in self.demand.items()})


@dataclass(frozen=True)
class Release:
    request_id: str


_PAYLOADS = {
    GET: ServiceRequest,
    FIND: ServiceQuery,
    FIND_REPLY: ServiceContext,
    NOTIFY_QOS: QoSChange,
    NOTIFY_QOC: QoCChange,
    SEND: Delivery,
    ERROR: ErrorInfo,
    RESERVE: Reservation,
    RELEASE: Release,
}


@dataclass(frozen=True)
class BrokerMessage:
    kind: str
    sender: str
    payload: object
    recipient: str = ""

    def __post_init__(self):
        if self.kind not in _PAYLOADS:
            raise ValueError(f"unknown message kind {self.kind!r}")
        if not self.sender:
            raise ValueError("message sender must be non-empty")
        if not isinstance(self.payload, _PAYLOADS[self.kind]):
            raise TypeError(f"{self.kind} carries {_PAYLOADS[self.kind].__name__}, got {type(self.payload).__name__}")

    @property
    def request_id(self) -> str:
        return getattr(self.payload, "request_id", "")


# -- state --------------------------------------------------------------------


@dataclass(frozen=True)
class RegistryEntry:
    request_id: str
    result: DerivationResult
    timestamp: int


@dataclass(frozen=True)
class LiveRequest:
    request: ServiceRequest
    observations: tuple[ContextObservation, ...]
    result: DerivationResult


@dataclass(frozen=True)
class BrokerState:
    context_model: FeatureModel
    providers: Mapping[str, tuple[ServiceOffer, ...]] = field(default_factory=dict)
    capacity: Mapping[str, Mapping[str, Fraction]] = field(default_factory=dict)
    registry: tuple[RegistryEntry, ...] = ()
    reservations: Mapping[str, tuple[str, Mapping[str, Fraction]]] = field(default_factory=dict)
    pending: Mapping[str, LiveRequest] = field(default_factory=dict)
    logical_clock: int = 0

    def offers(self) -> list[ServiceOffer]:
        return [o for p in sorted(self.providers) for o in self.providers[p]]

    def find_offer(self, service_id: str) -> ServiceOffer | None:
        for offer in self.offers():
            if offer.service_id == service_id:
                return offer
        return None

    def reserved(self, provider_id: str) -> dict[str, Fraction]:
        total: dict[str, Fraction] = {}
        for provider, demand in self.reservations.values():
            if provider == provider_id:
                for k, v in demand.items():
                    total[k] = total.get(k, Fraction(0)) + v
        return total

    def remaining(self, provider_id: str) -> dict[str, Fraction]:
        """Free capacity per resource key; keys without a limit are absent."""
        used = self.reserved(provider_id)
        return {k: v - used.get(k, Fraction(0)) for k, v in self.capacity.get(provider_id, {}).items()}

    def known_request(self, request_id: str) -> bool:
        return (
            request_id in self.pending
            or request_id in self.reservations
            or any(e.request_id == request_id for e in self.registry)
        )


def register_provider(
    state: BrokerState,
    provider_id: str,
    offers: Sequence[ServiceOffer],
    capacity: Mapping[str, Fraction] | None = None,
) -> BrokerState:
    """Add or replace a provider's offer list and capacity."""
    if not provider_id:
        raise InvalidOfferError("provider id must be non-empty")
    capacity = {k: to_rational(v) for k, v in (capacity or {}).items()}
    for offer in offers:
        check_offer(offer)
        if offer.provider_id != provider_id:
            raise InvalidOfferError(f"{offer.service_id} belongs to {offer.provider_id}, not {provider_id}")
    ids = [o.service_id for o in offers]
    taken = {o.service_id for p, lst in state.providers.items() if p != provider_id for o in lst}
    clash = sorted(set(ids) & taken | {i for i in ids if ids.count(i) > 1})
    if clash:
        raise InvalidOfferError(f"service id(s) already registered: {', '.join(clash)}")
    for key, value in capacity.items():
        if isinstance(value, float) or value < 0:
            raise InvalidOfferError(f"capacity {key} must be a nonnegative number")
    used = state.reserved(provider_id)
    short = sorted(k for k, v in capacity.items() if used.get(k, Fraction(0)) > v)
    if short:
        raise InvalidOfferError(f"capacity below live reservations for {', '.join(short)}")
    providers = dict(state.providers)
    providers[provider_id] = tuple(offers)
    caps = dict(state.capacity)
    caps[provider_id] = capacity
    return replace(state, providers=providers, capacity=caps)


# -- transitions --------------------------------------------------------------


class _Txn:
    """Working copy of the mutable parts of a state during one transition."""

    def __init__(self, state: BrokerState):
        self.state = state
        self.providers = dict(state.providers)
        self.registry = list(state.registry)
        self.reservations = dict(state.reservations)
        self.pending = dict(state.pending)
        self.clock = state.logical_clock + 1
        self.out: list[BrokerMessage] = []

    def view(self) -> BrokerState:
        return replace(
            self.state,
            providers=self.providers,
            registry=tuple(self.registry),
            reservations=self.reservations,
            pending=self.pending,
            logical_clock=self.clock,
        )

    def error(self, to: str, category: str, detail: str = "", request_id: str = "") -> None:
        self.out.append(BrokerMessage(ERROR, BROKER, ErrorInfo(category, detail, request_id), to))

    def fits(self, provider_id: str, demand: Mapping[str, Fraction]) -> bool:
        free = self.view().remaining(provider_id)
        return all(demand.get(k, Fraction(0)) <= v for k, v in free.items())

    def deliver(self, live: LiveRequest) -> bool:
        """Reserve, register and send ``live.result``; on shortage reply with an error."""
        req, result = live.request, live.result
        demand = resource_demand(result.offer.model, result.configuration)
        if not self.fits(result.provider_id, demand):
            self.error(
                req.consumer_id,
                INSUFFICIENT_RESOURCES,
                f"{result.provider_id} cannot host {result.service_id}",
                req.request_id,
            )
            return False
        self.reservations[req.request_id] = (result.provider_id, demand)
        self.pending[req.request_id] = live
        self.registry.append(RegistryEntry(req.request_id, result, self.clock))
        product = descriptor_for(result.offer.model, result.configuration)
        self.out.append(BrokerMessage(SEND, BROKER, Delivery(req.request_id, result, product), req.consumer_id))
        return True

    def drop(self, request_id: str) -> None:
        self.pending.pop(request_id, None)
        self.reservations.pop(request_id, None)

    def rederive(self, request_ids: Sequence[str]) -> None:
        for rid in request_ids:
            live = self.pending[rid]
            req = live.request
            try:
                result = derive(
                    self.state.context_model,
                    live.observations,
                    self.view().offers(),
                    req.requirements,
                    req.qoc_threshold,
                )
            except SplError as exc:
                self.drop(rid)
                self.error(req.consumer_id, exc.category, exc.message, rid)
                continue
            old = live.result
            if (result.service_id, result.configuration) == (old.service_id, old.configuration):
                self.pending[rid] = replace(live, result=result)
                continue
            self.drop(rid)
            self.deliver(replace(live, result=result))


def _on_get(tx: _Txn, msg: BrokerMessage) -> None:
    req: ServiceRequest = msg.payload
    if tx.state.known_request(req.request_id):
        tx.error(msg.sender, DUPLICATE_REQUEST, f"request id {req.request_id} already used", req.request_id)
        return
    observations = tuple(snapshot_to_observations(req.snapshot, req.qoc))
    try:
        result = derive(tx.state.context_model, observations, tx.state.offers(), req.requirements, req.qoc_threshold)
    except SplError as exc:
        tx.error(req.consumer_id, exc.category, exc.message, req.request_id)
        return
    tx.deliver(LiveRequest(req, observations, result))


def _updated_model(model: FeatureModel, attributes: Mapping[str, Fraction]) -> FeatureModel:
    per_feature: dict[str, dict[str, Fraction]] = {}
    for key, value in attributes.items():
        name, _, attr = key.rpartition(".")
        per_feature.setdefault(name or model.root.name, {})[attr] = value
    for name in per_feature:
        model.feature(name)

    def rebuild(f: Feature) -> Feature:
        attrs = {**f.attributes, **per_feature.get(f.name, {})}
        return replace(f, attributes=attrs, children=tuple(rebuild(c) for c in f.children))

    return replace(model, root=rebuild(model.root))


def _on_qos(tx: _Txn, msg: BrokerMessage) -> None:
    change: QoSChange = msg.payload
    offer = tx.state.find_offer(change.service_id)
    if offer is None:
        tx.error(msg.sender, UNKNOWN_ID, f"no service {change.service_id}")
        return
    try:
        updated = check_offer(replace(offer, model=_updated_model(offer.model, change.attributes)))
    except SplError as exc:
        tx.error(msg.sender, exc.category, exc.message)
        return
    tx.providers[offer.provider_id] = tuple(
        updated if o.service_id == offer.service_id else o for o in tx.providers[offer.provider_id]
    )
    tx.rederive(list(tx.pending))


def _merge(old: Sequence[ContextObservation], new: Sequence[ContextObservation]):
    fresh = {o.feature for o in new}
    return tuple(o for o in old if o.feature not in fresh) + tuple(new)


def _on_qoc(tx: _Txn, msg: BrokerMessage) -> None:
    change: QoCChange = msg.payload
    mine = [rid for rid, live in tx.pending.items() if live.request.consumer_id == change.consumer_id]
    if not mine:
        tx.error(msg.sender, UNKNOWN_ID, f"no live request for consumer {change.consumer_id}")
        return
    for rid in mine:
        live = tx.pending[rid]
        tx.pending[rid] = replace(live, observations=_merge(live.observations, change.observations))
    tx.rederive(mine)


def _on_find(tx: _Txn, msg: BrokerMessage) -> None:
    query: ServiceQuery = msg.payload
    offer = tx.state.find_offer(query.service_id)
    if offer is None:
        tx.error(msg.sender, UNKNOWN_ID, f"no service {query.service_id}")
        return
    info = ServiceContext(offer.service_id, offer.provider_id, dict(offer.model.root.attributes))
    tx.out.append(BrokerMessage(FIND_REPLY, BROKER, info, msg.sender))


def _on_reserve(tx: _Txn, msg: BrokerMessage) -> None:
    r: Reservation = msg.payload
    if tx.state.known_request(r.request_id):
        tx.error(msg.sender, DUPLICATE_REQUEST, f"request id {r.request_id} already used", r.request_id)
    elif r.provider_id not in tx.state.providers:
        tx.error(msg.sender, UNKNOWN_ID, f"no provider {r.provider_id}", r.request_id)
    elif not tx.fits(r.provider_id, r.demand):
        tx.error(msg.sender, INSUFFICIENT_RESOURCES, f"{r.provider_id} lacks capacity", r.request_id)
    else:
        tx.reservations[r.request_id] = (r.provider_id, dict(r.demand))


def _on_release(tx: _Txn, msg: BrokerMessage) -> None:
    rid = msg.payload.request_id
    if rid not in tx.reservations:
        tx.error(msg.sender, UNKNOWN_ID, f"no reservation {rid}", rid)
        return
    tx.drop(rid)


_HANDLERS = {
    GET: _on_get,
    NOTIFY_QOS: _on_qos,
    NOTIFY_QOC: _on_qoc,
    FIND: _on_find,
    RESERVE: _on_reserve,
    RELEASE: _on_release,
}


def handle_message(state: BrokerState, msg: BrokerMessage) -> tuple[BrokerState, list[BrokerMessage]]:
    tx = _Txn(state)
    handler = _HANDLERS.get(msg.kind)
    if handler is None:
        tx.error(msg.sender, UNEXPECTED_MESSAGE, f"the broker does not accept {msg.kind}", msg.request_id)
    else:
        handler(tx, msg)
    return tx.view(), tx.out


def run_session(
    initial: BrokerState, script: Sequence[BrokerMessage]
) -> tuple[BrokerState, list[tuple[BrokerMessage, list[BrokerMessage]]]]:
    state = initial
    trace = []
    for msg in script:
        state, out = handle_message(state, msg)
        trace.append((msg, out))
    return state, trace
