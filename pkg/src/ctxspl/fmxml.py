"""XML formats: feature models (``*.fm.xml``) and product descriptors (``*.product.xml``).

Feature model schema::

    <featureModel name="M" version="1">
      <feature name="Root" group="and|alternative|or">
        <attribute name="cost" value="3/2"/>
        <property name="unit" type="string" value="Euro/hour"/>
        <feature name="Child" mandatory="true"/>
      </feature>
      <constraints>
        <requires from="A" to="B"/>
        <excludes from="A" to="C"/>
      </constraints>
    </featureModel>

Product descriptor schema::

    <product version="1">
      <feature name="Geolocation">
        <pointcuts>
          <pointcut name="GeoPointcut">execution(...)</pointcut>
        </pointcuts>
        <bindings>
          <before pointcut="GeoPointcut" aspect="..." name="..."/>
        </bindings>
      </feature>
    </product>

Pointcut expressions and aspect names are opaque text.  Serializers emit a
canonical byte form (2-space indent, defaults omitted, attributes sorted by
name) so ``serialize(parse(serialize(x))) == serialize(x)``.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from fractions import Fraction

from ctxspl.errors import SchemaError, SemanticError, UnselectedFeatureError, XmlSyntaxError
from ctxspl.model import (
    GROUPS,
    PROPERTY_TYPES,
    Configuration,
    CrossTreeConstraint,
    Feature,
    FeatureModel,
    PropertyTriple,
    format_number,
    validate_model,
)

FORMAT_VERSION = "1"
POSITIONS = ("before", "after", "around")


@dataclass(frozen=True)
class Pointcut:
    name: str
    expression: str

    def __post_init__(self):
        object.__setattr__(self, "expression", self.expression.strip())


@dataclass(frozen=True)
class Binding:
    position: str
    pointcut: str
    aspect: str
    name: str

    def __post_init__(self):
        if self.position not in POSITIONS:
            raise ValueError(f"binding position must be one of {POSITIONS}")


@dataclass(frozen=True)
class ProductFeatureEntry:
    name: str
    pointcuts: tuple[Pointcut, ...] = ()
    bindings: tuple[Binding, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "pointcuts", tuple(self.pointcuts))
        object.__setattr__(self, "bindings", tuple(self.bindings))
        declared = {p.name for p in self.pointcuts}
        for b in self.bindings:
            if b.pointcut and b.pointcut not in declared:
                raise ValueError(f"binding {b.name!r} references undeclared pointcut {b.pointcut!r}")


@dataclass(frozen=True)
class ProductDescriptor:
    features: tuple[ProductFeatureEntry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        names = [e.name for e in self.features]
        if len(names) != len(set(names)):
            raise ValueError("feature names in a product descriptor must be unique")

    def names(self) -> list[str]:
        return [e.name for e in self.features]


# -- shared helpers -----------------------------------------------------------

_ATTR_ESCAPES = {'"': "&quot;", "\n": "&#10;", "\r": "&#13;", "\t": "&#9;"}


def _attr(value: str) -> str:
    value = value.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    for raw, ent in _ATTR_ESCAPES.items():
        value = value.replace(raw, ent)
    return f'"{value}"'


def _text(value: str) -> str:
    return (
        value.replace("&", "&amp;").replace("<", "&lt;").replace("]]>", "]]&gt;").replace("\r", "&#13;")
    )


def _open(tag: str, attrs: Sequence[tuple[str, str]]) -> str:
    return tag + "".join(f" {k}={_attr(v)}" for k, v in attrs)


def _parse_bytes(data: bytes | str) -> ET.Element:
    if isinstance(data, str):
        data = data.encode("utf-8")
    try:
        data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise XmlSyntaxError(f"input is not UTF-8: {exc}") from None
    try:
        return ET.fromstring(data)
    except ET.ParseError as exc:
        line = exc.position[0] if getattr(exc, "position", None) else None
        raise XmlSyntaxError(str(exc), line=line) from None


def _check_attrs(el: ET.Element, allowed: Iterable[str], required: Iterable[str] = ()) -> None:
    allowed = set(allowed)
    for key in el.attrib:
        if key not in allowed:
            raise SchemaError(f"unknown attribute {key!r} on <{el.tag}>", element=el.tag)
    for key in required:
        if not el.get(key):
            raise SchemaError(f"<{el.tag}> is missing {key!r}", element=el.tag)


def _check_no_text(el: ET.Element) -> None:
    if el.text and el.text.strip():
        raise SchemaError(f"unexpected text inside <{el.tag}>", element=el.tag)
    for child in el:
        if child.tail and child.tail.strip():
            raise SchemaError(f"unexpected text after <{child.tag}>", element=el.tag)


def _check_version(el: ET.Element) -> None:
    version = el.get("version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise SchemaError(f"unsupported {el.tag} version {version!r}", element=el.tag)


# -- feature models -----------------------------------------------------------


def _parse_feature(el: ET.Element) -> Feature:
    _check_attrs(el, ("name", "mandatory", "group"), required=("name",))
    _check_no_text(el)
    mandatory = el.get("mandatory", "false")
    if mandatory not in ("true", "false"):
        raise SchemaError(f"mandatory must be true or false on feature {el.get('name')!r}", element="feature")
    group = el.get("group", "and")
    if group not in GROUPS:
        raise SchemaError(f"group {group!r} on feature {el.get('name')!r} is not one of {GROUPS}", element="feature")
    attributes: dict[str, Fraction] = {}
    properties: list[PropertyTriple] = []
    children: list[Feature] = []
    for child in el:
        if child.tag == "attribute":
            _check_attrs(child, ("name", "value"), required=("name", "value"))
            _check_no_text(child)
            key = child.get("name")
            if key in attributes:
                raise SchemaError(f"duplicate attribute {key!r} on feature {el.get('name')!r}", element="attribute")
            try:
                attributes[key] = Fraction(child.get("value").strip())
            except (ValueError, ZeroDivisionError):
                raise SchemaError(
                    f"attribute {key!r} value {child.get('value')!r} is not a rational number", element="attribute"
                ) from None
        elif child.tag == "property":
            _check_attrs(child, ("name", "type", "value"), required=("name", "type"))
            _check_no_text(child)
            if child.get("type") not in PROPERTY_TYPES:
                raise SchemaError(f"property type {child.get('type')!r} is not one of {PROPERTY_TYPES}", element="property")
            properties.append(PropertyTriple(child.get("name"), child.get("type"), child.get("value", "")))
        elif child.tag == "feature":
            children.append(_parse_feature(child))
        else:
            raise SchemaError(f"unknown element <{child.tag}> inside <feature>", element=child.tag)
    return Feature(
        name=el.get("name"),
        mandatory=mandatory == "true",
        group=group,
        children=tuple(children),
        attributes=attributes,
        properties=tuple(properties),
    )


def _parse_constraints(el: ET.Element) -> list[CrossTreeConstraint]:
    _check_attrs(el, ())
    _check_no_text(el)
    out = []
    for child in el:
        if child.tag not in ("requires", "excludes"):
            raise SchemaError(f"unknown element <{child.tag}> inside <constraints>", element=child.tag)
        _check_attrs(child, ("from", "to"), required=("from", "to"))
        _check_no_text(child)
        out.append(CrossTreeConstraint(child.tag, child.get("from"), child.get("to")))
    return out


def parse_feature_model(data: bytes | str) -> FeatureModel:
    top = _parse_bytes(data)
    if top.tag != "featureModel":
        raise SchemaError(f"expected <featureModel>, found <{top.tag}>", element=top.tag)
    _check_attrs(top, ("name", "version"), required=("name",))
    _check_version(top)
    _check_no_text(top)
    roots = []
    constraints = None
    for child in top:
        if child.tag == "feature":
            roots.append(_parse_feature(child))
        elif child.tag == "constraints":
            if constraints is not None:
                raise SchemaError("more than one <constraints> element", element="constraints")
            constraints = _parse_constraints(child)
        else:
            raise SchemaError(f"unknown element <{child.tag}> inside <featureModel>", element=child.tag)
    if len(roots) != 1:
        raise SchemaError(f"<featureModel> needs exactly one root <feature>, found {len(roots)}", element="featureModel")
    fm = FeatureModel(top.get("name"), roots[0], tuple(constraints or ()))
    errors = validate_model(fm)
    if errors:
        raise SemanticError(errors)
    return fm


def _feature_lines(f: Feature, depth: int, out: list[str]) -> None:
    pad = "  " * depth
    attrs = [("name", f.name)]
    if f.mandatory:
        attrs.append(("mandatory", "true"))
    if f.group != "and":
        attrs.append(("group", f.group))
    head = _open("feature", attrs)
    if not (f.attributes or f.properties or f.children):
        out.append(f"{pad}<{head}/>")
        return
    out.append(f"{pad}<{head}>")
    inner = "  " * (depth + 1)
    for key in sorted(f.attributes):
        out.append(f"{inner}<{_open('attribute', [('name', key), ('value', format_number(f.attributes[key]))])}/>")
    for p in f.properties:
        out.append(f"{inner}<{_open('property', [('name', p.name), ('type', p.type), ('value', p.value)])}/>")
    for c in f.children:
        _feature_lines(c, depth + 1, out)
    out.append(f"{pad}</feature>")


def serialize_feature_model(fm: FeatureModel) -> bytes:
    lines = [f"<{_open('featureModel', [('name', fm.name), ('version', FORMAT_VERSION)])}>"]
    _feature_lines(fm.root, 1, lines)
    if fm.constraints:
        lines.append("  <constraints>")
        for c in fm.constraints:
            lines.append(f"    <{_open(c.kind, [('from', c.source), ('to', c.target)])}/>")
        lines.append("  </constraints>")
    lines.append("</featureModel>")
    return ("\n".join(lines) + "\n").encode("utf-8")


# -- product descriptors ------------------------------------------------------


def _parse_entry(el: ET.Element) -> ProductFeatureEntry:
    _check_attrs(el, ("name",), required=("name",))
    _check_no_text(el)
    name = el.get("name")
    pointcuts: list[Pointcut] = []
    bindings: list[Binding] = []
    seen_sections = set()
    for section in el:
        if section.tag not in ("pointcuts", "bindings") or section.tag in seen_sections:
            raise SchemaError(f"unexpected <{section.tag}> in product feature {name!r}", element=section.tag)
        seen_sections.add(section.tag)
        _check_attrs(section, ())
        _check_no_text(section)
        for item in section:
            if section.tag == "pointcuts":
                if item.tag != "pointcut":
                    raise SchemaError(f"unknown element <{item.tag}> inside <pointcuts>", element=item.tag)
                _check_attrs(item, ("name",), required=("name",))
                if len(item):
                    raise SchemaError("<pointcut> holds text only", element="pointcut")
                pointcuts.append(Pointcut(item.get("name"), item.text or ""))
            else:
                if item.tag not in POSITIONS:
                    raise SchemaError(f"unknown binding position <{item.tag}>", element=item.tag)
                _check_attrs(item, ("pointcut", "aspect", "name"), required=("aspect", "name"))
                _check_no_text(item)
                if len(item):
                    raise SchemaError(f"<{item.tag}> must be empty", element=item.tag)
                bindings.append(Binding(item.tag, item.get("pointcut", ""), item.get("aspect"), item.get("name")))
    declared = [p.name for p in pointcuts]
    if len(declared) != len(set(declared)):
        raise SchemaError(f"duplicate pointcut name in product feature {name!r}", element="pointcut")
    for b in bindings:
        if b.pointcut and b.pointcut not in declared:
            raise SchemaError(
                f"binding {b.name!r} references undeclared pointcut {b.pointcut!r}", element=b.position
            )
    return ProductFeatureEntry(name, tuple(pointcuts), tuple(bindings))


def parse_product(data: bytes | str) -> ProductDescriptor:
    top = _parse_bytes(data)
    if top.tag != "product":
        raise SchemaError(f"expected <product>, found <{top.tag}>", element=top.tag)
    _check_attrs(top, ("version",))
    _check_version(top)
    _check_no_text(top)
    entries = []
    for child in top:
        if child.tag != "feature":
            raise SchemaError(f"unknown element <{child.tag}> inside <product>", element=child.tag)
        entries.append(_parse_entry(child))
    names = [e.name for e in entries]
    if len(names) != len(set(names)):
        raise SchemaError("duplicate feature in product descriptor", element="feature")
    return ProductDescriptor(tuple(entries))


def _product_lines(pd: ProductDescriptor) -> list[str]:
    head = _open("product", [("version", FORMAT_VERSION)])
    if not pd.features:
        return [f"<{head}/>"]
    lines = [f"<{head}>"]
    for e in pd.features:
        fhead = _open("feature", [("name", e.name)])
        if not (e.pointcuts or e.bindings):
            lines.append(f"  <{fhead}/>")
            continue
        lines.append(f"  <{fhead}>")
        if e.pointcuts:
            lines.append("    <pointcuts>")
            for p in e.pointcuts:
                lines.append(f"      <{_open('pointcut', [('name', p.name)])}>{_text(p.expression)}</pointcut>")
            lines.append("    </pointcuts>")
        if e.bindings:
            lines.append("    <bindings>")
            for b in e.bindings:
                attrs = [("pointcut", b.pointcut), ("aspect", b.aspect), ("name", b.name)]
                lines.append(f"      <{_open(b.position, attrs)}/>")
            lines.append("    </bindings>")
        lines.append("  </feature>")
    lines.append("</product>")
    return lines


def serialize_product(cfg: Configuration | None, pd: ProductDescriptor) -> bytes:
    """Emit ``pd`` as a product document.

    Every entry must name a feature selected in ``cfg``; pass ``None`` to
    skip that check when re-emitting a stored descriptor.
    """
    if cfg is not None:
        missing = [n for n in pd.names() if n not in cfg]
        if missing:
            raise UnselectedFeatureError(f"descriptor names unselected feature(s): {', '.join(missing)}")
    return ("\n".join(_product_lines(pd)) + "\n").encode("utf-8")


def descriptor_for(
    fm: FeatureModel, cfg: Configuration, template: ProductDescriptor | None = None
) -> ProductDescriptor:
    """Descriptor listing every selected feature in model order.

    Entries found in ``template`` keep their pointcuts and bindings; the rest
    are bare.  Template entries for unselected features are dropped.
    """
    known = {e.name: e for e in template.features} if template else {}
    return ProductDescriptor(
        tuple(known.get(n, ProductFeatureEntry(n)) for n in fm.names() if n in cfg)
    )
