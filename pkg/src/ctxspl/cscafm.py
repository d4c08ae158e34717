"""Context-specific service derivation over attributed feature models.

Pipeline for one request:

1. detect the consumer context configuration;
2. annotate every offer's root children with the quality of context their
   mandatory sub-features demand (bottom-up sum of ``min_qoc``);
3. drop offers whose ``qoc_capacity`` is below that demand or below the
   consumer's threshold;
4. resolve requirements plus context-driven triples against each remaining
   offer and complete them to valid configurations;
5. pick the cheapest (sum of ``cost`` attributes), breaking ties by
   canonical configuration order and then ``service_id``.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from ctxspl.context import ContextObservation, context_triples, detect_consumer_context
from ctxspl.errors import (
    InvalidOfferError,
    NoMatchingServiceError,
    NoSuchFeatureError,
    NoSuchValueError,
    QocUnsatisfiableError,
)
from ctxspl.model import (
    BAD_ATTRIBUTE_RANGE,
    Configuration,
    Feature,
    FeatureModel,
    ModelError,
    PropertyTriple,
    RequirementTriple,
    canonical_key,
    complete_configuration,
    format_number,
    resolve_requirements,
    validate_model,
)

RESOURCE_KEYS = ("ram_gb", "storage_gb", "power_units")
NONNEGATIVE_KEYS = ("cost", "response_time", "qoc_capacity") + RESOURCE_KEYS

ZERO = Fraction(0)


@dataclass(frozen=True)
class ServiceOffer:
    service_id: str
    provider_id: str
    model: FeatureModel

    def _root(self, key: str, default: Fraction = ZERO) -> Fraction:
        return self.model.root.attributes.get(key, default)

    @property
    def cost(self) -> Fraction:
        return self._root("cost")

    @property
    def response_time(self) -> Fraction:
        return self._root("response_time")

    @property
    def qos_level(self) -> Fraction:
        return self._root("qos_level")

    @property
    def qoc_capacity(self) -> Fraction:
        return self._root("qoc_capacity")

    @property
    def resources(self) -> dict[str, Fraction]:
        return {k: self._root(k) for k in RESOURCE_KEYS if k in self.model.root.attributes}


def validate_offer(offer: ServiceOffer) -> list[ModelError]:
    errors = validate_model(offer.model)
    if not offer.service_id or not offer.provider_id:
        errors.append(ModelError("bad-identity", offer.model.root.name, "offer needs service and provider ids"))
    for f in offer.model.features():
        for key in NONNEGATIVE_KEYS:
            value = f.attributes.get(key)
            if isinstance(value, Fraction) and value < 0:
                errors.append(ModelError(BAD_ATTRIBUTE_RANGE, f.name, f"{key} must be >= 0"))
    qos = offer.model.root.attributes.get("qos_level")
    if isinstance(qos, Fraction) and not 0 <= qos <= 1:
        errors.append(ModelError(BAD_ATTRIBUTE_RANGE, offer.model.root.name, "qos_level outside [0, 1]"))
    return errors


def check_offer(offer: ServiceOffer) -> ServiceOffer:
    errors = validate_offer(offer)
    if errors:
        raise InvalidOfferError(f"{offer.service_id}: " + "; ".join(map(str, errors)))
    return offer


@dataclass(frozen=True)
class AnnotatedFeature:
    name: str
    required_qoc: Fraction
    children: tuple[AnnotatedFeature, ...] = ()


@dataclass(frozen=True)
class DerivationResult:
    configuration: Configuration
    offer: ServiceOffer
    total_cost: Fraction
    achieved_qoc: Fraction
    bound_properties: tuple[PropertyTriple, ...] = ()

    @property
    def service_id(self) -> str:
        return self.offer.service_id

    @property
    def provider_id(self) -> str:
        return self.offer.provider_id


def calculate_min_qoc_required(f: Feature) -> Fraction:
    return f.attributes.get("min_qoc", ZERO)


def aggregate_required_qoc(f: Feature) -> AnnotatedFeature:
    children = tuple(aggregate_required_qoc(c) for c in f.children)
    total = ZERO
    if f.group == "and":
        for child, annotated in zip(f.children, children):
            if child.mandatory:
                total += calculate_min_qoc_required(child) + annotated.required_qoc
    return AnnotatedFeature(f.name, total, children)


def annotate_service(model: FeatureModel) -> list[AnnotatedFeature]:
    """One annotated subtree per child of the service root."""
    return [aggregate_required_qoc(c) for c in model.root.children]


def required_qoc(model: FeatureModel) -> Fraction:
    return max((a.required_qoc for a in annotate_service(model)), default=ZERO)


def total_cost(model: FeatureModel, cfg: Configuration) -> Fraction:
    return sum((f.attributes.get("cost", ZERO) for f in model.features() if f.name in cfg), ZERO)


def resource_demand(model: FeatureModel, cfg: Configuration) -> dict[str, Fraction]:
    demand = dict.fromkeys(RESOURCE_KEYS, ZERO)
    for f in model.features():
        if f.name in cfg:
            for key in RESOURCE_KEYS:
                demand[key] += f.attributes.get(key, ZERO)
    return demand


def check_resources(offer: ServiceOffer, cfg: Configuration, available: Mapping[str, Fraction]) -> bool:
    """Whether the configuration's summed demand fits; absent keys are unlimited."""
    demand = resource_demand(offer.model, cfg)
    return all(demand[k] <= available[k] for k in demand if k in available)


def bound_properties(model: FeatureModel, cfg: Configuration) -> tuple[PropertyTriple, ...]:
    return tuple(p for f in model.features() if f.name in cfg for p in f.properties)


def _applicable(model: FeatureModel, triples, explicit: set[str]) -> list[RequirementTriple]:
    out = []
    for t in triples:
        if t.feature in explicit or t.feature not in model:
            continue
        if t.value in {c.name for c in model.feature(t.feature).children}:
            out.append(t)
    return out


def derive(
    context_fm: FeatureModel,
    observations: Sequence[ContextObservation],
    offers: Sequence[ServiceOffer],
    reqs: Sequence[RequirementTriple],
    qoc_threshold: Fraction | int = 0,
) -> DerivationResult:
    """Cheapest context-aware configuration over all offers.

    Explicit requirements win over context-driven triples on the same
    feature.  Raises :class:`NoMatchingServiceError` when no offer has a
    configuration meeting the requirements, and
    :class:`QocUnsatisfiableError` when some do but all fail the QoC gate.
    """
    qoc_threshold = Fraction(qoc_threshold)
    ctx_cfg, _ = detect_consumer_context(context_fm, observations)
    ctx = context_triples(context_fm, ctx_cfg)
    explicit = {r.feature for r in reqs}

    best = None
    best_key = None
    gated = False
    for offer in offers:
        model = offer.model
        try:
            partial = resolve_requirements(model, [*reqs, *_applicable(model, ctx, explicit)])
        except (NoSuchFeatureError, NoSuchValueError):
            continue
        candidates = complete_configuration(model, partial)
        if not candidates:
            continue
        capacity = offer.qoc_capacity
        if capacity < required_qoc(model) or capacity < qoc_threshold:
            gated = True
            continue
        for cfg in candidates:
            cost = total_cost(model, cfg)
            key = (cost, canonical_key(cfg), offer.service_id)
            if best_key is None or key < best_key:
                best_key, best = key, (offer, cfg, cost)

    if best is None:
        if gated:
            raise QocUnsatisfiableError(f"no offer reaches the required quality of context ({format_number(qoc_threshold)})")
        raise NoMatchingServiceError("no offer satisfies the requirements")
    offer, cfg, cost = best
    return DerivationResult(cfg, offer, cost, offer.qoc_capacity, bound_properties(offer.model, cfg))


def load_offers(directory: str | Path) -> list[ServiceOffer]:
    """Read ``<dir>/<provider>/*.fm.xml``; files directly in ``dir`` are their own provider.

    The service id is the model name.
    """
    from ctxspl.fmxml import parse_feature_model

    directory = Path(directory)
    offers = []
    for path in sorted(directory.rglob("*.fm.xml")):
        rel = path.relative_to(directory)
        model = parse_feature_model(path.read_bytes())
        provider = rel.parts[0] if len(rel.parts) > 1 else model.name
        offers.append(check_offer(ServiceOffer(model.name, provider, model)))
    ids = [o.service_id for o in offers]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise InvalidOfferError(f"duplicate service id(s): {', '.join(dupes)}")
    return offers
