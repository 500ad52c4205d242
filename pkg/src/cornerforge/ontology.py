"""Compact ontology model: class forest, named value ranges, scene descriptions
and the corner-case meta links added on top of them.

The on-disk form is ``ontology.json``::

    {
      "version": "1",
      "classes": [{"name": "Truck", "parent": "Vehicle"}, ...],
      "ranges":  [{"name": "MotionSpeed_Zero", "attribute": "speed",
                   "min": 0, "max": 0.54, "unit": "km/h"}, ...],
      "scenes":  [{"name": "TrafficJam", "predicates": [...]}, ...],
      "meta":    [{"cause_class": ..., "corner_case_id": 2, ...}, ...]
    }

Predicates are tagged objects (``"kind"``), see :func:`predicate_from_json`.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from decimal import Decimal
from functools import cached_property
from typing import Iterable, Optional, Union

from . import jsonio
from .errors import (
    CyclicSubclass,
    DanglingReference,
    DuplicateConflict,
    MalformedDocument,
    MalformedRange,
    UnknownClass,
    UnresolvedSceneRef,
)
from .registry import CornerCaseSpec
from .taxonomy import Classification, FusionStage, SensorSources, parse_fusion, parse_sources

DEFAULT_NEGATION_TOKENS = ("no", "not", "without")
DEFAULT_NEGATION_WINDOW = 2


class Unit(enum.Enum):
    KMH = "km/h"
    MPS = "m/s"
    METER = "m"
    COUNT = "count"
    RAD = "rad"
    UNITLESS = "unitless"

    def __str__(self) -> str:
        return self.value

    @property
    def base(self) -> "Unit":
        return Unit.MPS if self is Unit.KMH else self

    def to_base(self, value: Optional[float]) -> Optional[float]:
        if value is None or self is not Unit.KMH:
            return value
        # decimal division keeps terminating decimals exact, e.g. 0.54 -> 0.15
        return float(Decimal(repr(float(value))) / Decimal("3.6"))


def parse_unit(text) -> Unit:
    try:
        return Unit(text)
    except ValueError:
        raise MalformedRange(f"unknown unit {text!r}") from None


def _number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedRange(f"{what} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise MalformedRange(f"{what} must be finite")
    return float(value)


@dataclass(frozen=True)
class NamedRange:
    name: str
    attribute: str
    min: float
    max: float
    unit: Unit

    def __post_init__(self):
        if self.min > self.max:
            raise MalformedRange(f"range {self.name}: min {self.min} > max {self.max}")

    def contains(self, value: float) -> bool:
        return self.min <= value <= self.max

    def in_base_units(self) -> "NamedRange":
        return NamedRange(self.name, self.attribute, self.unit.to_base(self.min),
                          self.unit.to_base(self.max), self.unit.base)

    def to_json(self) -> dict:
        return {"name": self.name, "attribute": self.attribute, "min": self.min,
                "max": self.max, "unit": str(self.unit)}

    @classmethod
    def from_json(cls, doc: dict) -> "NamedRange":
        what = f"range {doc.get('name')!r}" if isinstance(doc, dict) else "range"
        if not isinstance(doc, dict):
            raise MalformedRange(f"{what}: expected an object")
        try:
            name, attribute = doc["name"], doc["attribute"]
            lo, hi, unit = doc["min"], doc["max"], doc["unit"]
        except KeyError as exc:
            raise MalformedRange(f"{what}: missing {exc.args[0]!r}") from None
        return cls(name, attribute, _number(lo, f"{what} min"), _number(hi, f"{what} max"), parse_unit(unit))


# ---------------------------------------------------------------- filters


@dataclass(frozen=True)
class AttributeRange:
    attribute: str
    min: float
    max: float
    unit: Unit = Unit.UNITLESS

    kind = "attribute_range"

    def __post_init__(self):
        if self.min > self.max:
            raise MalformedRange(f"attribute filter on {self.attribute}: min > max")

    def to_json(self) -> dict:
        return {"kind": self.kind, "attribute": self.attribute, "min": self.min,
                "max": self.max, "unit": str(self.unit)}


@dataclass(frozen=True)
class RelativeHeading:
    """Heading difference to the ego vehicle, |delta| in [min_abs_delta, max_abs_delta]."""

    max_abs_delta: float
    min_abs_delta: float = 0.0

    kind = "relative_heading"

    def __post_init__(self):
        if not 0.0 <= self.min_abs_delta <= self.max_abs_delta <= math.pi:
            raise MalformedRange(
                f"relative heading bounds must satisfy 0 <= min <= max <= pi, "
                f"got [{self.min_abs_delta}, {self.max_abs_delta}]"
            )

    def to_json(self) -> dict:
        return {"kind": self.kind, "max_abs_delta": self.max_abs_delta,
                "min_abs_delta": self.min_abs_delta}


Filter = Union[AttributeRange, RelativeHeading]


def filter_from_json(doc: dict) -> Filter:
    if not isinstance(doc, dict):
        raise MalformedDocument("filter must be an object")
    kind = doc.get("kind")
    if kind == AttributeRange.kind:
        return AttributeRange(
            jsonio.field(doc, "attribute", "attribute_range filter", str),
            _number(doc.get("min"), "filter min"),
            _number(doc.get("max"), "filter max"),
            parse_unit(doc.get("unit", "unitless")),
        )
    if kind == RelativeHeading.kind:
        return RelativeHeading(
            _number(doc.get("max_abs_delta"), "max_abs_delta"),
            _number(doc.get("min_abs_delta", 0.0), "min_abs_delta"),
        )
    raise MalformedDocument(f"unknown filter kind {kind!r}")


# ------------------------------------------------------------- predicates


def _check_count(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise MalformedDocument(f"{what} must be a positive integer, got {value!r}")
    return value


@dataclass(frozen=True)
class ClassPresence:
    """Objects of ``cls`` (optionally filtered) present in the sample; targets those annotations."""

    cls: str
    min_count: int = 1
    filters: tuple = ()

    kind = "class_presence"

    def __post_init__(self):
        _check_count(self.min_count, "class_presence min_count")

    def to_json(self) -> dict:
        return {"kind": self.kind, "class": self.cls, "min_count": self.min_count,
                "filters": [f.to_json() for f in self.filters]}


@dataclass(frozen=True)
class CountWithFilter:
    cls: str
    filters: tuple = ()
    min_count: int = 1
    max_count: Optional[int] = None

    kind = "count_with_filter"

    def __post_init__(self):
        _check_count(self.min_count, "count_with_filter min_count")
        if self.max_count is not None:
            if isinstance(self.max_count, bool) or not isinstance(self.max_count, int):
                raise MalformedDocument("count_with_filter max_count must be an integer")
            if self.max_count < self.min_count:
                raise MalformedDocument("count_with_filter max_count < min_count")

    def to_json(self) -> dict:
        return {"kind": self.kind, "class": self.cls, "filters": [f.to_json() for f in self.filters],
                "min_count": self.min_count, "max_count": self.max_count}


@dataclass(frozen=True)
class EgoAttributeRange:
    range: NamedRange
    ref: Optional[str] = None  # name of the ontology range this came from, if any

    kind = "ego_attribute_range"

    def to_json(self) -> dict:
        if self.ref is not None:
            return {"kind": self.kind, "range": self.ref}
        return {"kind": self.kind, "range": self.range.to_json()}


@dataclass(frozen=True)
class SceneTextKeyword:
    keywords: tuple
    max_edit_distance: int = 1
    negation_window: int = DEFAULT_NEGATION_WINDOW
    negation_tokens: tuple = DEFAULT_NEGATION_TOKENS

    kind = "scene_text_keyword"

    def __post_init__(self):
        if not self.keywords:
            raise MalformedDocument("scene_text_keyword needs at least one keyword")
        for kw in self.keywords:
            if not isinstance(kw, str) or not kw or kw != kw.lower():
                raise MalformedDocument(f"keyword {kw!r} must be a non-empty lowercase string")
        for value, what in ((self.max_edit_distance, "max_edit_distance"), (self.negation_window, "negation_window")):
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise MalformedDocument(f"{what} must be a non-negative integer")

    def to_json(self) -> dict:
        return {"kind": self.kind, "keywords": list(self.keywords),
                "max_edit_distance": self.max_edit_distance,
                "negation_window": self.negation_window,
                "negation_tokens": list(self.negation_tokens)}


Predicate = Union[ClassPresence, CountWithFilter, EgoAttributeRange, SceneTextKeyword]


def predicate_from_json(doc: dict, ranges: Optional[dict] = None) -> Predicate:
    """Parse a predicate object; ``ranges`` resolves named range references."""
    if not isinstance(doc, dict):
        raise MalformedDocument("predicate must be an object")
    kind = doc.get("kind")
    if kind == ClassPresence.kind:
        return ClassPresence(
            jsonio.field(doc, "class", kind, str),
            doc.get("min_count", 1),
            tuple(filter_from_json(f) for f in doc.get("filters", [])),
        )
    if kind == CountWithFilter.kind:
        return CountWithFilter(
            jsonio.field(doc, "class", kind, str),
            tuple(filter_from_json(f) for f in doc.get("filters", [])),
            doc.get("min_count", 1),
            doc.get("max_count"),
        )
    if kind == EgoAttributeRange.kind:
        ref = jsonio.field(doc, "range", kind)
        if isinstance(ref, str):
            if ranges is None or ref not in ranges:
                raise DanglingReference(f"predicate references unknown range {ref!r}")
            return EgoAttributeRange(ranges[ref], ref)
        return EgoAttributeRange(NamedRange.from_json(ref))
    if kind == SceneTextKeyword.kind:
        keywords = jsonio.field(doc, "keywords", kind, list)
        return SceneTextKeyword(
            tuple(keywords),
            doc.get("max_edit_distance", 1),
            doc.get("negation_window", DEFAULT_NEGATION_WINDOW),
            tuple(doc.get("negation_tokens", DEFAULT_NEGATION_TOKENS)),
        )
    raise MalformedDocument(f"unknown predicate kind {kind!r}")


def predicate_classes(predicates: Iterable[Predicate]) -> set:
    return {p.cls for p in predicates if isinstance(p, (ClassPresence, CountWithFilter))}


@dataclass(frozen=True)
class SceneDescription:
    name: str
    predicates: tuple

    def __post_init__(self):
        if not self.predicates:
            raise MalformedDocument(f"scene {self.name!r} has no predicates")

    def to_json(self) -> dict:
        return {"name": self.name, "predicates": [p.to_json() for p in self.predicates]}


# -------------------------------------------------------------- meta model


@dataclass(frozen=True)
class OntologyClass:
    name: str
    parent: Optional[str] = None

    def to_json(self) -> dict:
        doc = {"name": self.name}
        if self.parent is not None:
            doc["parent"] = self.parent
        return doc


@dataclass(frozen=True)
class MetaLink:
    """A cause-class and the corner-case meta information attached to it."""

    cause_class: str
    corner_case_id: int
    description: str
    cause: str
    classifications: frozenset
    sources: SensorSources
    fusion: FusionStage
    scene: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "cause_class": self.cause_class,
            "corner_case_id": self.corner_case_id,
            "description": self.description,
            "cause": self.cause,
            "classifications": [c.to_json() for c in sorted(self.classifications, key=Classification.sort_key)],
            "sources": str(self.sources),
            "fusion": str(self.fusion),
            "scene": self.scene,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MetaLink":
        what = "meta link"
        classifications = jsonio.field(doc, "classifications", what, list)
        return cls(
            jsonio.field(doc, "cause_class", what, str),
            jsonio.field(doc, "corner_case_id", what, int),
            jsonio.field(doc, "description", what, str),
            jsonio.field(doc, "cause", what, str),
            frozenset(Classification.from_json(c) for c in classifications),
            parse_sources(jsonio.field(doc, "sources", what, str)),
            parse_fusion(jsonio.field(doc, "fusion", what, str)),
            doc.get("scene"),
        )


META_ROOT = "CornerCaseMeta"
CAUSE_ROOT = "CornerCaseCause"

_SENSOR_CLASS = {"R": "Radar", "V": "Video", "L": "Lidar"}


def _camel(text: str) -> str:
    return "".join(w[:1].upper() + w[1:] for w in re.findall(r"[A-Za-z0-9]+", text))


def meta_class_hierarchy() -> list:
    """The taxonomy sub-ontology: layer/level/sublevel, sensor source and fusion classes."""
    pairs = [
        (META_ROOT, None),
        ("CornerCaseLayer", META_ROOT),
        ("SensorLayer", "CornerCaseLayer"),
        ("ContentLayer", "CornerCaseLayer"),
        ("CornerCaseLevel", META_ROOT),
        ("PhysicalLevel", "CornerCaseLevel"),
        ("HardwareLevel", "CornerCaseLevel"),
        ("DomainLevel", "CornerCaseLevel"),
        ("ObjectLevel", "CornerCaseLevel"),
        ("SceneLevel", "CornerCaseLevel"),
        ("CornerCaseSubLevel", META_ROOT),
        ("GlobalOutlier", "CornerCaseSubLevel"),
        ("LocalOutlier", "CornerCaseSubLevel"),
        ("Collective", "CornerCaseSubLevel"),
        ("Contextual", "CornerCaseSubLevel"),
        ("SensorSource", META_ROOT),
        ("Radar", "SensorSource"),
        ("Video", "SensorSource"),
        ("Lidar", "SensorSource"),
        ("FusionOption", META_ROOT),
        ("SingleSource", "FusionOption"),
        ("MultiSource", "FusionOption"),
        (CAUSE_ROOT, META_ROOT),
    ]
    return [OntologyClass(n, p) for n, p in pairs]


def meta_classes_of(link: MetaLink) -> set:
    """Names of the taxonomy classes a meta link points at."""
    names = {f"{link.fusion}Source"}
    names.update(_SENSOR_CLASS[s.value] for s in link.sources)
    for c in link.classifications:
        names.add(f"{c.layer}Layer")
        names.add(f"{c.level}Level")
        if c.sublevel is not None:
            names.add(_camel(str(c.sublevel)))
    return names


def cause_class_name(spec_id: int, cause_text: str) -> str:
    return f"CornerCase{spec_id}_{_camel(cause_text) or 'Cause'}"


# ---------------------------------------------------------------- ontology


@dataclass(frozen=True)
class CornerCaseOntology:
    classes: tuple = ()
    ranges: tuple = ()
    scenes: tuple = ()
    meta: tuple = ()

    @cached_property
    def parents(self) -> dict:
        return {c.name: c.parent for c in self.classes}

    @cached_property
    def children(self) -> dict:
        out = {c.name: [] for c in self.classes}
        for c in self.classes:
            if c.parent is not None:
                out[c.parent].append(c.name)
        return out

    @cached_property
    def range_by_name(self) -> dict:
        return {r.name: r for r in self.ranges}

    @cached_property
    def scene_by_name(self) -> dict:
        return {s.name: s for s in self.scenes}

    def has_class(self, name: str) -> bool:
        return name in self.parents

    def ancestors(self, name: str) -> list:
        """Proper ancestors, nearest first."""
        if name not in self.parents:
            raise UnknownClass(f"unknown ontology class {name!r}")
        out = []
        p = self.parents[name]
        while p is not None:
            out.append(p)
            p = self.parents[p]
        return out

    def to_json(self) -> dict:
        return {
            "version": jsonio.SCHEMA_VERSION,
            "classes": [c.to_json() for c in self.classes],
            "ranges": [r.to_json() for r in self.ranges],
            "scenes": [s.to_json() for s in self.scenes],
            "meta": [m.to_json() for m in self.meta],
        }


def _build(classes, ranges, scenes, meta) -> CornerCaseOntology:
    ont = CornerCaseOntology(
        tuple(sorted(classes, key=lambda c: c.name)),
        tuple(sorted(ranges, key=lambda r: r.name)),
        tuple(sorted(scenes, key=lambda s: s.name)),
        tuple(sorted(meta, key=lambda m: (m.corner_case_id, m.cause))),
    )
    _validate(ont)
    return ont


def _validate(ont: CornerCaseOntology) -> None:
    names = [c.name for c in ont.classes]
    if len(set(names)) != len(names):
        raise MalformedDocument("duplicate class names in ontology")
    parents = ont.parents
    for c in ont.classes:
        if c.parent is not None and c.parent not in parents:
            raise DanglingReference(f"class {c.name!r} has unknown parent {c.parent!r}")
    for c in ont.classes:
        seen = {c.name}
        p = c.parent
        while p is not None:
            if p in seen:
                raise CyclicSubclass(f"subclass cycle through {c.name!r}")
            seen.add(p)
            p = parents[p]

    if len({r.name for r in ont.ranges}) != len(ont.ranges):
        raise MalformedDocument("duplicate range names in ontology")
    if len({s.name for s in ont.scenes}) != len(ont.scenes):
        raise MalformedDocument("duplicate scene names in ontology")
    for scene in ont.scenes:
        for cls in predicate_classes(scene.predicates):
            if cls not in parents:
                raise DanglingReference(f"scene {scene.name!r} references unknown class {cls!r}")
        for p in scene.predicates:
            if isinstance(p, EgoAttributeRange) and p.ref is not None and ont.range_by_name.get(p.ref) != p.range:
                raise DanglingReference(f"scene {scene.name!r} references unknown range {p.ref!r}")

    if len({m.cause_class for m in ont.meta}) != len(ont.meta):
        raise MalformedDocument("duplicate cause classes in meta links")
    if len({(m.corner_case_id, m.cause) for m in ont.meta}) != len(ont.meta):
        raise MalformedDocument("a registry cause has more than one cause class")
    for m in ont.meta:
        if m.cause_class not in parents:
            raise DanglingReference(f"meta link names unknown cause class {m.cause_class!r}")
        missing = sorted(n for n in meta_classes_of(m) if n not in parents)
        if missing:
            raise DanglingReference(f"meta link {m.cause_class!r} references missing meta classes {missing}")
        if m.scene is not None and m.scene not in ont.scene_by_name:
            raise UnresolvedSceneRef(f"meta link {m.cause_class!r} references unknown scene {m.scene!r}")


def load_ontology(doc: dict) -> CornerCaseOntology:
    """Build and validate an ontology from its parsed JSON document."""
    jsonio.check_version(doc, "ontology", required=False)
    classes = []
    for c in doc.get("classes", []):
        if not isinstance(c, dict) or not isinstance(c.get("name"), str):
            raise MalformedDocument("ontology class entries need a string 'name'")
        classes.append(OntologyClass(c["name"], c.get("parent")))
    ranges = [NamedRange.from_json(r) for r in doc.get("ranges", [])]
    range_map = {r.name: r for r in ranges}
    scenes = []
    for s in doc.get("scenes", []):
        name = jsonio.field(s, "name", "scene", str)
        preds = jsonio.field(s, "predicates", f"scene {name!r}", list)
        scenes.append(SceneDescription(name, tuple(predicate_from_json(p, range_map) for p in preds)))
    meta = [MetaLink.from_json(m) for m in doc.get("meta", [])]
    return _build(classes, ranges, scenes, meta)


def read_ontology(path) -> CornerCaseOntology:
    return load_ontology(jsonio.read_json(path, "ontology"))


def write_ontology(ont: CornerCaseOntology, path) -> None:
    jsonio.write_json(path, ont.to_json())


def inject_meta_classes(ont: CornerCaseOntology, specs: Iterable[CornerCaseSpec]) -> CornerCaseOntology:
    """Add the taxonomy sub-ontology and one cause class per (corner case, cause).

    Existing classes are kept untouched; re-running with the same specs gives
    an equal ontology. A meta link for a cause class that already exists is
    replaced by the one derived from ``specs``.
    """
    classes = {c.name: c for c in ont.classes}

    def add(cls: OntologyClass) -> None:
        existing = classes.get(cls.name)
        if existing is None:
            classes[cls.name] = cls
        elif existing.parent != cls.parent:
            raise DuplicateConflict(
                f"class {cls.name!r} already exists with parent {existing.parent!r}, "
                f"cannot re-parent it under {cls.parent!r}"
            )

    for cls in meta_class_hierarchy():
        add(cls)

    links = {m.cause_class: m for m in ont.meta}
    for spec in specs:
        for cause in spec.causes:
            if cause.scene_ref is not None and cause.scene_ref not in ont.scene_by_name:
                raise UnresolvedSceneRef(
                    f"corner case {spec.id}: cause {cause.text!r} references unknown scene {cause.scene_ref!r}"
                )
            name = cause_class_name(spec.id, cause.text)
            if name in links and (links[name].corner_case_id, links[name].cause) != (spec.id, cause.text):
                raise DuplicateConflict(f"cause class name collision on {name!r}")
            add(OntologyClass(name, CAUSE_ROOT))
            links[name] = MetaLink(
                name, spec.id, spec.description, cause.text, spec.classifications,
                spec.sources, spec.fusion, cause.scene_ref,
            )
    return _build(classes.values(), ont.ranges, ont.scenes, links.values())


def descendants(ont: CornerCaseOntology, name: str) -> set:
    """Transitive subclass closure of ``name``, including itself."""
    if not ont.has_class(name):
        raise UnknownClass(f"unknown ontology class {name!r}")
    out = set()
    stack = [name]
    while stack:
        n = stack.pop()
        if n not in out:
            out.add(n)
            stack.extend(ont.children[n])
    return out


def meta_link_for(ont: CornerCaseOntology, spec_id: int, cause_text: str) -> MetaLink:
    for m in ont.meta:
        if m.corner_case_id == spec_id and m.cause == cause_text:
            return m
    raise DanglingReference(
        f"no cause class for corner case {spec_id} cause {cause_text!r}; run ingest first"
    )


def with_scenes(ont: CornerCaseOntology, scenes: Iterable[SceneDescription]) -> CornerCaseOntology:
    """Copy of ``ont`` with extra (or replaced) scene descriptions."""
    merged = {s.name: s for s in ont.scenes}
    merged.update((s.name, s) for s in scenes)
    return _build(ont.classes, ont.ranges, merged.values(), ont.meta)

