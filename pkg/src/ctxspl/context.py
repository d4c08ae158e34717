"""Consumer context: 5WH snapshots, quality-of-context metrics and detection.

Detection walks the consumer context model in pre-order.  Each observation
``(feature, value)`` pins the path from the root down to the descendant
named ``value``; mandatory children of selected and-parents are pulled in as
the walk descends.  The visit order is returned alongside the selection.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, fields
from fractions import Fraction

from ctxspl.errors import ContradictoryObservationsError, FormatError, UnknownFeatureError
from ctxspl.model import (
    Configuration,
    FeatureModel,
    PropertyTriple,
    RequirementTriple,
    to_rational,
)

SNAPSHOT_KEYS = ("who", "where", "when", "what", "why", "device", "security")

# snapshot field -> consumer context feature it binds
FIELD_FEATURES = (("where", "Geolocation"), ("security", "Security"), ("device", "MobileDevice"))


@dataclass(frozen=True)
class QoCMetrics:
    precision: Fraction = Fraction(1)
    probability_of_correctness: Fraction = Fraction(1)
    trustworthiness: Fraction = Fraction(1)
    resolution: Fraction = Fraction(1)
    up_to_dateness: Fraction = Fraction(1)

    def __post_init__(self):
        for f in fields(self):
            value = to_rational(getattr(self, f.name))
            if isinstance(value, float) or not 0 <= value <= 1:
                raise ValueError(f"{f.name} must lie in [0, 1], got {value}")
            object.__setattr__(self, f.name, value)

    def values(self) -> tuple[Fraction, ...]:
        return tuple(getattr(self, f.name) for f in fields(self))


PERFECT_QOC = QoCMetrics()


@dataclass(frozen=True)
class ContextSnapshot:
    who: str
    where: str = ""
    when: int = 0
    what: str = ""
    why: str = ""
    device: str = ""
    preferences: tuple[PropertyTriple, ...] = ()
    security: str = ""

    def __post_init__(self):
        if not self.who:
            raise ValueError("snapshot needs a consumer identifier")
        if self.when < 0:
            raise ValueError("snapshot time must be >= 0")
        object.__setattr__(self, "preferences", tuple(self.preferences))


@dataclass(frozen=True)
class ContextObservation:
    feature: str
    value: str
    qoc: QoCMetrics = PERFECT_QOC

    def __post_init__(self):
        if not self.feature:
            raise ValueError("observation needs a feature name")


def scalar_qoc(m: QoCMetrics) -> Fraction:
    """Weakest of the five quality dimensions."""
    return min(m.values())


def snapshot_to_observations(s: ContextSnapshot, qoc: QoCMetrics = PERFECT_QOC) -> list[ContextObservation]:
    out = [ContextObservation(feature, getattr(s, attr), qoc) for attr, feature in FIELD_FEATURES if getattr(s, attr)]
    out.extend(ContextObservation(p.name, p.value, qoc) for p in s.preferences)
    return out


def _check_observations(fm: FeatureModel, observations: Sequence[ContextObservation]) -> set[str]:
    bound: dict[str, str] = {}
    marked: set[str] = set()
    for obs in observations:
        previous = bound.setdefault(obs.feature, obs.value)
        if previous != obs.value:
            raise ContradictoryObservationsError(
                f"{obs.feature} observed as both {previous!r} and {obs.value!r}"
            )
        if obs.feature not in fm:
            raise UnknownFeatureError(f"observation names unknown feature {obs.feature!r}")
        if obs.value not in fm or obs.feature not in fm.path_to(obs.value)[:-1]:
            raise UnknownFeatureError(f"{obs.value!r} is not a feature below {obs.feature!r}")
        marked.update(fm.path_to(obs.value))
    return marked


def detect_consumer_context(
    fm: FeatureModel, observations: Sequence[ContextObservation]
) -> tuple[Configuration, list[str]]:
    marked = _check_observations(fm, observations)
    selected: set[str] = set()
    order: list[str] = []

    def visit(f, forced: bool):
        order.append(f.name)
        if forced or f.name in marked:
            selected.add(f.name)
        on = f.name in selected
        hits = 0
        for child in f.children:
            visit(child, on and f.group == "and" and child.mandatory)
            hits += child.name in selected
        if f.group == "alternative" and hits > 1:
            picked = [c.name for c in f.children if c.name in selected]
            raise ContradictoryObservationsError(f"{f.name} allows one of {picked}")

    visit(fm.root, True)
    return Configuration(frozenset(selected)), order


def context_triples(fm: FeatureModel, cfg: Configuration) -> list[RequirementTriple]:
    """Every selected (parent, child) edge of a context configuration."""
    out = []
    for f in fm.features():
        if f.name in cfg:
            out.extend(RequirementTriple(f.name, c.name) for c in f.children if c.name in cfg)
    return out


# -- line-oriented files ------------------------------------------------------


def _key_values(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise FormatError(f"expected 'key = value', got {raw!r}", line=lineno)
        yield lineno, key, value


def parse_context(text: str) -> ContextSnapshot:
    values: dict[str, str] = {}
    prefs: list[PropertyTriple] = []
    for lineno, key, value in _key_values(text):
        if key.startswith("pref."):
            name = key[len("pref."):]
            if not name or any(p.name == name for p in prefs):
                raise FormatError(f"bad or repeated preference {key!r}", line=lineno)
            prefs.append(PropertyTriple(name, "string", value))
        elif key in SNAPSHOT_KEYS:
            if key in values:
                raise FormatError(f"repeated key {key!r}", line=lineno)
            values[key] = value
        else:
            raise FormatError(f"unknown context key {key!r}", line=lineno)
    if "who" not in values:
        raise FormatError("context file lacks 'who'")
    try:
        when = int(values.pop("when", "0"))
    except ValueError:
        raise FormatError("'when' must be whole seconds since the epoch") from None
    try:
        return ContextSnapshot(when=when, preferences=tuple(prefs), **values)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def format_context(s: ContextSnapshot) -> str:
    lines = [f"{k} = {getattr(s, k)}" for k in SNAPSHOT_KEYS if getattr(s, k) not in ("",)]
    lines.extend(f"pref.{p.name} = {p.value}" for p in s.preferences)
    return "\n".join(lines) + "\n"


def parse_requirements(text: str) -> list[RequirementTriple]:
    return [RequirementTriple(key, value) for _, key, value in _key_values(text)]
