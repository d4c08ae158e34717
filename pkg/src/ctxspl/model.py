"""Attributed feature models: domain types, validity and product enumeration.

A model is a tree of :class:`Feature` values.  Group kind belongs to the
parent: an ``and`` parent has children flagged mandatory/optional, while
``alternative`` (exactly one) and ``or`` (at least one) parents ignore the
children's flags.  Cross-tree ``requires``/``excludes`` constraints are
checked after the tree rules.

Exhaustive operations work on bitmasks indexed by pre-order position and are
capped at :data:`MAX_FEATURES` features.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import product as _cartesian

from ctxspl.errors import (
    NoSuchFeatureError,
    NoSuchValueError,
    TooLargeError,
    UnknownFeatureError,
)

MAX_FEATURES = 24

GROUPS = ("and", "alternative", "or")
PROPERTY_TYPES = ("string", "number", "boolean")
CONSTRAINT_KINDS = ("requires", "excludes")

# ModelError categories
DUPLICATE_NAME = "duplicate-name"
UNDERSIZED_GROUP = "undersized-group"
DANGLING_CONSTRAINT = "dangling-constraint"
BAD_ATTRIBUTE_RANGE = "bad-attribute-range"
EMPTY_NAME = "empty-name"
SELF_CONSTRAINT = "self-constraint"
BAD_PROPERTY = "bad-property"

Number = int | float | Fraction | str


def to_rational(value: Number) -> Fraction | float:
    """Coerce to an exact rational.

    Floats go through their shortest repr so ``0.1`` becomes ``1/10``.
    Non-finite floats are kept as floats so :func:`validate_model` can
    report them.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("attribute values must be numbers, not bool")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            return value
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot use {type(value).__name__} as an attribute value")


def format_number(value: Fraction | float | int) -> str:
    """Shortest exact text for a rational: ``2``, ``0.25``, ``1/3``."""
    if isinstance(value, float):
        return repr(value)
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    den = value.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{value.numerator}/{value.denominator}"
    digits = max(twos, fives)
    scaled = abs(value.numerator) * (10**digits // value.denominator)
    sign = "-" if value < 0 else ""
    text = str(scaled).rjust(digits + 1, "0")
    return f"{sign}{text[:-digits]}.{text[-digits:]}"


@dataclass(frozen=True)
class PropertyTriple:
    name: str
    type: str
    value: str

    def __post_init__(self):
        if self.type not in PROPERTY_TYPES:
            raise ValueError(f"property type must be one of {PROPERTY_TYPES}, got {self.type!r}")

    def value_ok(self) -> bool:
        if self.type == "string":
            return True
        if self.type == "boolean":
            return self.value in ("true", "false")
        try:
            Fraction(self.value)
        except (ValueError, ZeroDivisionError):
            return False
        return True

    def __str__(self) -> str:
        return f"{self.name} = {self.value}"


@dataclass(frozen=True)
class Feature:
    name: str
    mandatory: bool = False
    group: str = "and"
    children: tuple[Feature, ...] = ()
    attributes: Mapping[str, Fraction] = field(default_factory=dict)
    properties: tuple[PropertyTriple, ...] = ()

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValueError(f"group must be one of {GROUPS}, got {self.group!r}")
        object.__setattr__(self, "children", tuple(self.children))
        object.__setattr__(self, "properties", tuple(self.properties))
        object.__setattr__(
            self, "attributes", {k: to_rational(v) for k, v in dict(self.attributes).items()}
        )

    def walk(self) -> Iterator[Feature]:
        """Pre-order traversal of this subtree."""
        yield self
        for child in self.children:
            yield from child.walk()

    def attribute(self, key: str, default=Fraction(0)):
        return self.attributes.get(key, default)


@dataclass(frozen=True)
class CrossTreeConstraint:
    kind: str
    source: str
    target: str

    def __post_init__(self):
        if self.kind not in CONSTRAINT_KINDS:
            raise ValueError(f"constraint kind must be one of {CONSTRAINT_KINDS}")


@dataclass(frozen=True)
class ModelError:
    category: str
    feature: str
    message: str = ""

    def __str__(self) -> str:
        return f"{self.category}({self.feature}){': ' + self.message if self.message else ''}"


@dataclass(frozen=True)
class Configuration:
    selected: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "selected", frozenset(self.selected))

    def __contains__(self, name) -> bool:
        return name in self.selected

    def __iter__(self):
        return iter(self.sorted())

    def __len__(self) -> int:
        return len(self.selected)

    def sorted(self) -> tuple[str, ...]:
        return tuple(sorted(self.selected))

    def __str__(self) -> str:
        return ", ".join(self.sorted())


def canonical_key(cfg: Configuration) -> tuple[str, ...]:
    """Sort key for the canonical product order (lexicographic sorted names)."""
    return cfg.sorted()


@dataclass(frozen=True)
class RequirementTriple:
    feature: str
    value: str

    def __post_init__(self):
        if not self.feature or not self.value:
            raise ValueError("requirement feature and value must be non-empty")


@dataclass(frozen=True)
class FeatureModel:
    name: str
    root: Feature
    constraints: tuple[CrossTreeConstraint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))

    @cached_property
    def _index(self) -> tuple[dict[str, Feature], dict[str, str | None], list[str]]:
        features: dict[str, Feature] = {}
        parents: dict[str, str | None] = {}
        order: list[str] = []

        def visit(f: Feature, parent: str | None):
            features.setdefault(f.name, f)
            parents.setdefault(f.name, parent)
            order.append(f.name)
            for c in f.children:
                visit(c, f.name)

        visit(self.root, None)
        return features, parents, order

    def __contains__(self, name) -> bool:
        return name in self._index[0]

    def __len__(self) -> int:
        return len(self._index[2])

    def feature(self, name: str) -> Feature:
        try:
            return self._index[0][name]
        except KeyError:
            raise UnknownFeatureError(f"no feature named {name!r} in {self.name}") from None

    def parent_of(self, name: str) -> str | None:
        self.feature(name)
        return self._index[1][name]

    def names(self) -> list[str]:
        """Feature names in pre-order."""
        return list(self._index[2])

    def features(self) -> Iterator[Feature]:
        return self.root.walk()

    def path_to(self, name: str) -> list[str]:
        """Names from the root down to ``name`` inclusive."""
        path = [name]
        parent = self.parent_of(name)
        while parent is not None:
            path.append(parent)
            parent = self._index[1][parent]
        return path[::-1]

    @cached_property
    def _compiled(self) -> _Compiled:
        return _Compiled(self)


def validate_model(fm: FeatureModel) -> list[ModelError]:
    errors: list[ModelError] = []
    seen: set[str] = set()
    for f in fm.features():
        if not f.name:
            errors.append(ModelError(EMPTY_NAME, f.name, "feature name is empty"))
        elif f.name in seen:
            errors.append(ModelError(DUPLICATE_NAME, f.name))
        seen.add(f.name)
        if f.group != "and" and len(f.children) < 2:
            errors.append(
                ModelError(UNDERSIZED_GROUP, f.name, f"{f.group} group has {len(f.children)} child(ren)")
            )
        for key, value in sorted(f.attributes.items()):
            if isinstance(value, float):
                errors.append(ModelError(BAD_ATTRIBUTE_RANGE, f.name, f"{key} is not finite"))
            elif key == "min_qoc" and not 0 <= value <= 1:
                errors.append(
                    ModelError(BAD_ATTRIBUTE_RANGE, f.name, f"min_qoc={format_number(value)} outside [0, 1]")
                )
        for prop in f.properties:
            if not prop.name or not prop.value_ok():
                errors.append(
                    ModelError(BAD_PROPERTY, f.name, f"property {prop.name!r} does not parse as {prop.type}")
                )
    for c in fm.constraints:
        for end in (c.source, c.target):
            if end not in seen:
                errors.append(ModelError(DANGLING_CONSTRAINT, end, f"{c.kind} {c.source} -> {c.target}"))
        if c.source == c.target:
            errors.append(ModelError(SELF_CONSTRAINT, c.source, f"{c.kind} on itself"))
    return errors


def _as_names(cfg: Configuration | Iterable[str]) -> frozenset[str]:
    if isinstance(cfg, Configuration):
        return cfg.selected
    return frozenset(cfg)


def _check_known(fm: FeatureModel, names: Iterable[str]) -> None:
    unknown = sorted(n for n in names if n not in fm)
    if unknown:
        raise UnknownFeatureError(f"unknown feature(s) {', '.join(unknown)} in {fm.name}")


def is_valid_configuration(fm: FeatureModel, cfg: Configuration | Iterable[str]) -> bool:
    sel = _as_names(cfg)
    _check_known(fm, sel)
    if fm.root.name not in sel:
        return False
    for f in fm.features():
        chosen = [c for c in f.children if c.name in sel]
        if f.name not in sel:
            if chosen:
                return False
            continue
        if f.group == "and":
            if any(c.mandatory and c.name not in sel for c in f.children):
                return False
        elif f.group == "alternative":
            if len(chosen) != 1:
                return False
        elif not chosen:
            return False
    for c in fm.constraints:
        if c.kind == "requires" and c.source in sel and c.target not in sel:
            return False
        if c.kind == "excludes" and c.source in sel and c.target in sel:
            return False
    return True


class _Compiled:
    """Bitmask view of a model for the exhaustive operations."""

    def __init__(self, fm: FeatureModel):
        self.names = fm.names()
        self.bit = {n: 1 << i for i, n in enumerate(self.names)}
        self.feature = [fm.feature(n) for n in self.names]
        self.children = [[self.names.index(c.name) for c in f.children] for f in self.feature]
        self.subtree = [0] * len(self.names)
        for i in reversed(range(len(self.names))):
            mask = 1 << i
            for c in self.children[i]:
                mask |= self.subtree[c]
            self.subtree[i] = mask
        self.constraints = [(c.kind, self.bit[c.source], self.bit[c.target]) for c in fm.constraints]

    def selections(self, i: int, forced: int) -> list[int]:
        """All valid subtree selections of feature ``i`` given it is selected.

        Every bit of ``forced`` inside the subtree must end up selected.
        """
        f = self.feature[i]
        base = 1 << i
        kids = self.children[i]
        if not kids:
            return [base]
        if f.group == "alternative":
            hit = [c for c in kids if forced & self.subtree[c]]
            if len(hit) > 1:
                return []
            return [base | s for c in (hit or kids) for s in self.selections(c, forced)]
        options = []
        for c in kids:
            sub = self.selections(c, forced)
            required = bool(forced & self.subtree[c]) or (f.group == "and" and self.feature[c].mandatory)
            options.append(sub if required else [0] + sub)
        out = []
        for combo in _cartesian(*options):
            mask = base
            for part in combo:
                mask |= part
            if f.group == "or" and mask == base:
                continue
            out.append(mask)
        return out

    def satisfies_constraints(self, mask: int) -> bool:
        for kind, a, b in self.constraints:
            if kind == "requires" and mask & a and not mask & b:
                return False
            if kind == "excludes" and mask & a and mask & b:
                return False
        return True

    def to_config(self, mask: int) -> Configuration:
        return Configuration(frozenset(n for n, b in self.bit.items() if mask & b))


class ProductList(list):
    """A list of configurations that may have been cut short.

    ``truncated`` is the explicit overflow marker; ``total`` is the full count.
    """

    def __init__(self, items=(), truncated: bool = False, total: int | None = None):
        super().__init__(items)
        self.truncated = truncated
        self.total = len(self) if total is None else total


def _require_small(fm: FeatureModel) -> None:
    if len(fm) > MAX_FEATURES:
        raise TooLargeError(f"{fm.name} has {len(fm)} features; exhaustive analysis is capped at {MAX_FEATURES}")


def _canonical(comp: _Compiled, masks: Iterable[int]) -> list[Configuration]:
    configs = [comp.to_config(m) for m in masks]
    configs.sort(key=canonical_key)
    return configs


def enumerate_products(fm: FeatureModel, limit: int | None = None) -> ProductList:
    """Every valid configuration, in canonical order.

    When there are more than ``limit`` products the result holds the first
    ``limit`` and has ``truncated`` set.  ``None`` means no limit.
    """
    if limit is not None and limit < 1:
        raise ValueError("limit must be a positive integer")
    _require_small(fm)
    comp = fm._compiled
    masks = [m for m in comp.selections(0, 0) if comp.satisfies_constraints(m)]
    configs = _canonical(comp, masks)
    if limit is not None and len(configs) > limit:
        return ProductList(configs[:limit], truncated=True, total=len(configs))
    return ProductList(configs)


def _count_tree(f: Feature) -> int:
    if not f.children:
        return 1
    counts = [_count_tree(c) for c in f.children]
    if f.group == "alternative":
        return sum(counts)
    if f.group == "or":
        return math.prod(n + 1 for n in counts) - 1
    return math.prod(n if c.mandatory else n + 1 for c, n in zip(f.children, counts))


def count_products(fm: FeatureModel) -> int:
    _require_small(fm)
    if not fm.constraints:
        return _count_tree(fm.root)
    comp = fm._compiled
    return sum(1 for m in comp.selections(0, 0) if comp.satisfies_constraints(m))


def resolve_requirements(fm: FeatureModel, reqs: Sequence[RequirementTriple]) -> Configuration:
    selected = {fm.root.name}
    for req in reqs:
        if req.feature not in fm:
            raise NoSuchFeatureError(f"{req.feature!r} is not a feature of {fm.name}")
        parent = fm.feature(req.feature)
        if req.value not in {c.name for c in parent.children}:
            raise NoSuchValueError(f"{req.feature!r} has no child named {req.value!r}")
        selected.update(fm.path_to(req.value))
    return Configuration(frozenset(selected))


def complete_configuration(fm: FeatureModel, partial: Configuration | Iterable[str]) -> list[Configuration]:
    """All valid supersets of ``partial`` in canonical order.

    Selected features pin their whole root path; the search then only
    branches where the model leaves a choice.  An unsatisfiable partial
    yields an empty list.
    """
    sel = _as_names(partial)
    _check_known(fm, sel)
    comp = fm._compiled
    forced = 0
    for name in sel:
        for step in fm.path_to(name):
            forced |= comp.bit[step]
    masks = [m for m in comp.selections(0, forced) if comp.satisfies_constraints(m)]
    return _canonical(comp, masks)
