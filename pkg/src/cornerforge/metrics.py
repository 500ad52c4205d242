"""Compile ontology scene descriptions into executable metrics (``metrics.json``).

A compiled metric is one (corner case, cause) pair with its meta information
and a predicate program whose ranges are all in base units (m/s, m, rad,
count), so the extraction engine never converts units.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable

from . import jsonio
from .errors import DuplicateConflict, MalformedDocument, OverrideError, UnitMismatch, UnresolvedSceneRef
from .ontology import (
    AttributeRange,
    ClassPresence,
    CornerCaseOntology,
    CountWithFilter,
    EgoAttributeRange,
    NamedRange,
    meta_link_for,
    parse_unit,
    predicate_classes,
    predicate_from_json,
)
from .registry import Cause, CornerCaseSpec
from .taxonomy import Classification, FusionStage, SensorSources, parse_fusion, parse_sources


class HitMode(enum.Enum):
    ANNOTATION_TARGETED = "AnnotationTargeted"
    SCENE_WIDE = "SceneWide"

    def __str__(self) -> str:
        return self.value


def hit_mode_for(predicates) -> HitMode:
    if any(isinstance(p, ClassPresence) for p in predicates):
        return HitMode.ANNOTATION_TARGETED
    return HitMode.SCENE_WIDE


@dataclass(frozen=True)
class CompiledMetric:
    corner_case_id: int
    cause: str
    cause_class: str
    description: str
    scene: str
    classifications: frozenset
    sources: SensorSources
    fusion: FusionStage
    predicates: tuple

    def __post_init__(self):
        if not self.predicates:
            raise MalformedDocument(f"metric {self.key} has no predicates")

    @property
    def key(self) -> tuple:
        return (self.corner_case_id, self.cause)

    @property
    def hit_mode(self) -> HitMode:
        return hit_mode_for(self.predicates)

    @property
    def required_classes(self) -> set:
        return predicate_classes(self.predicates)

    def to_json(self) -> dict:
        return {
            "corner_case_id": self.corner_case_id,
            "cause": self.cause,
            "cause_class": self.cause_class,
            "description": self.description,
            "scene": self.scene,
            "classifications": [c.to_json() for c in sorted(self.classifications, key=Classification.sort_key)],
            "sources": str(self.sources),
            "fusion": str(self.fusion),
            "hit_mode": str(self.hit_mode),
            "predicates": [p.to_json() for p in self.predicates],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CompiledMetric":
        what = "metric"
        preds = tuple(predicate_from_json(p) for p in jsonio.field(doc, "predicates", what, list))
        for p in preds:
            if isinstance(p, EgoAttributeRange) and p.range.unit.base is not p.range.unit:
                raise MalformedDocument(f"compiled range {p.range.name!r} is not in base units")
        metric = cls(
            jsonio.field(doc, "corner_case_id", what, int),
            jsonio.field(doc, "cause", what, str),
            jsonio.field(doc, "cause_class", what, str),
            jsonio.field(doc, "description", what, str),
            jsonio.field(doc, "scene", what, str),
            frozenset(Classification.from_json(c) for c in jsonio.field(doc, "classifications", what, list)),
            parse_sources(jsonio.field(doc, "sources", what, str)),
            parse_fusion(jsonio.field(doc, "fusion", what, str)),
            preds,
        )
        if "hit_mode" in doc and doc["hit_mode"] != str(metric.hit_mode):
            raise MalformedDocument(
                f"metric {metric.key}: hit_mode {doc['hit_mode']!r} disagrees with its predicates"
            )
        return metric


@dataclass(frozen=True)
class MetricsFile:
    metrics: tuple = ()
    version: str = jsonio.SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "metrics", tuple(sorted(self.metrics, key=lambda m: m.key)))
        keys = [m.key for m in self.metrics]
        if len(set(keys)) != len(keys):
            dupes = sorted({k for k in keys if keys.count(k) > 1})
            raise DuplicateConflict(f"duplicate (corner_case_id, cause) in metrics: {dupes}")

    @property
    def required_classes(self) -> set:
        out = set()
        for m in self.metrics:
            out |= m.required_classes
        return out

    def to_json(self) -> dict:
        return {"version": self.version, "metrics": [m.to_json() for m in self.metrics]}


def _apply_override(pred, override):
    """Return (new predicate, hit) after replacing bounds for ``override.attribute``."""
    if isinstance(pred, EgoAttributeRange) and pred.range.attribute == override.attribute:
        r = pred.range
        _check_unit(override, r.unit)
        lo = r.min if override.min is None else override.min
        hi = r.max if override.max is None else override.max
        return EgoAttributeRange(NamedRange(r.name, r.attribute, lo, hi, r.unit)), True
    if isinstance(pred, (ClassPresence, CountWithFilter)):
        hit = False
        filters = []
        for f in pred.filters:
            if isinstance(f, AttributeRange) and f.attribute == override.attribute:
                _check_unit(override, f.unit)
                lo = f.min if override.min is None else override.min
                hi = f.max if override.max is None else override.max
                f = AttributeRange(f.attribute, lo, hi, f.unit)
                hit = True
            filters.append(f)
        return replace(pred, filters=tuple(filters)), hit
    return pred, False


def _check_unit(override, unit) -> None:
    if override.unit is not None and parse_unit(override.unit) is not unit:
        raise UnitMismatch(
            f"override for {override.attribute!r} is in {override.unit} but the range is in {unit}"
        )


def _to_base(pred):
    if isinstance(pred, EgoAttributeRange):
        return EgoAttributeRange(pred.range.in_base_units())
    if isinstance(pred, (ClassPresence, CountWithFilter)):
        filters = []
        for f in pred.filters:
            if isinstance(f, AttributeRange):
                f = AttributeRange(f.attribute, f.unit.to_base(f.min), f.unit.to_base(f.max), f.unit.base)
            filters.append(f)
        return replace(pred, filters=tuple(filters))
    return pred


def compile_cause(ontology: CornerCaseOntology, spec: CornerCaseSpec, cause: Cause):
    """Compile one cause; ``None`` when the cause has no scene description."""
    link = meta_link_for(ontology, spec.id, cause.text)
    if (link.classifications, link.sources, link.fusion, link.scene) != (
        spec.classifications, spec.sources, spec.fusion, cause.scene_ref
    ):
        raise DuplicateConflict(
            f"ontology meta information for corner case {spec.id} is out of date with the registry; re-run ingest"
        )
    if link.scene is None:
        return None
    scene = ontology.scene_by_name.get(link.scene)
    if scene is None:
        raise UnresolvedSceneRef(f"corner case {spec.id}: unknown scene {link.scene!r}")

    preds = list(scene.predicates)
    for override in cause.overrides:
        applied = False
        for i, p in enumerate(preds):
            preds[i], hit = _apply_override(p, override)
            applied = applied or hit
        if not applied:
            raise OverrideError(
                f"corner case {spec.id}: override attribute {override.attribute!r} "
                f"matches no range in scene {scene.name!r}"
            )
    return CompiledMetric(
        spec.id, cause.text, link.cause_class, spec.description, scene.name,
        spec.classifications, spec.sources, spec.fusion,
        tuple(_to_base(p) for p in preds),
    )


def compile_metrics(ontology: CornerCaseOntology, specs: Iterable[CornerCaseSpec]) -> MetricsFile:
    """One compiled metric per cause that has a scene description, sorted by (id, cause)."""
    out = []
    for spec in specs:
        for cause in spec.causes:
            metric = compile_cause(ontology, spec, cause)
            if metric is not None:
                out.append(metric)
    return MetricsFile(tuple(out))


def load_metrics(doc: dict) -> MetricsFile:
    jsonio.check_version(doc, "metrics file")
    metrics = tuple(CompiledMetric.from_json(m) for m in jsonio.field(doc, "metrics", "metrics file", list))
    return MetricsFile(metrics, str(doc["version"]))


def read_metrics(path) -> MetricsFile:
    return load_metrics(jsonio.read_json(path, "metrics file"))


def write_metrics(metrics: MetricsFile, path) -> None:
    jsonio.write_json(path, metrics.to_json())

