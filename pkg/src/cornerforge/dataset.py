"""Normalized perception dataset (scenes, samples, annotations) and label mapping.

``dataset.json`` layout::

    {"version": "1",
     "scenes":      [{"id", "description", "split"}],
     "samples":     [{"id", "scene_id", "timestamp", "ego": {"speed", "heading", ...}}],
     "annotations": [{"id", "sample_id", "label", "center": [x, y, z],
                      "size": [w, l, h], "heading", "attributes": {}}]}

Speeds are m/s, angles radians, distances meters, timestamps microseconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional

from . import jsonio
from .errors import (
    DanglingReference,
    DuplicateId,
    MalformedDocument,
    MissingMapping,
    NonMonotonicTimestamps,
    UnknownClass,
)
from .ontology import CornerCaseOntology

SPLITS = ("train", "val")


def _num(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise MalformedDocument(f"{what} must be a finite number, got {value!r}")
    return float(value)


def _triple(value, what: str) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise MalformedDocument(f"{what} must be a list of three numbers")
    return tuple(_num(v, what) for v in value)


@dataclass(frozen=True)
class Scene:
    id: str
    description: str = ""
    split: str = "val"

    def to_json(self) -> dict:
        return {"id": self.id, "description": self.description, "split": self.split}


@dataclass(frozen=True)
class Sample:
    id: str
    scene_id: str
    timestamp: int
    speed: float
    heading: float
    extra: tuple = ()  # additional numeric ego attributes as sorted (name, value) pairs

    def ego_attribute(self, name: str) -> Optional[float]:
        if name == "speed":
            return self.speed
        if name == "heading":
            return self.heading
        return dict(self.extra).get(name)

    def to_json(self) -> dict:
        ego = {"speed": self.speed, "heading": self.heading}
        ego.update(self.extra)
        return {"id": self.id, "scene_id": self.scene_id, "timestamp": self.timestamp, "ego": ego}


@dataclass(frozen=True)
class Annotation:
    id: str
    sample_id: str
    label: str
    center: tuple
    size: tuple
    heading: float
    attributes: tuple = ()  # sorted (name, value) string pairs

    def __post_init__(self):
        if any(s <= 0 for s in self.size):
            raise MalformedDocument(f"annotation {self.id}: box size must be strictly positive")

    @property
    def attribute_map(self) -> dict:
        return dict(self.attributes)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "sample_id": self.sample_id,
            "label": self.label,
            "center": list(self.center),
            "size": list(self.size),
            "heading": self.heading,
            "attributes": dict(self.attributes),
        }


@dataclass(frozen=True)
class DatasetIndex:
    scenes: tuple
    samples: tuple
    annotations: tuple

    @cached_property
    def scene_by_id(self) -> dict:
        return {s.id: s for s in self.scenes}

    @cached_property
    def sample_by_id(self) -> dict:
        return {s.id: s for s in self.samples}

    @cached_property
    def annotation_by_id(self) -> dict:
        return {a.id: a for a in self.annotations}

    @cached_property
    def samples_of_scene(self) -> dict:
        out = {s.id: [] for s in self.scenes}
        for s in self.samples:
            out[s.scene_id].append(s)
        return {k: tuple(sorted(v, key=lambda s: (s.timestamp, s.id))) for k, v in out.items()}

    @cached_property
    def annotations_of_sample(self) -> dict:
        out = {s.id: [] for s in self.samples}
        for a in self.annotations:
            out[a.sample_id].append(a)
        return {k: tuple(sorted(v, key=lambda a: a.id)) for k, v in out.items()}

    def scene_of_sample(self, sample_id: str) -> str:
        return self.sample_by_id[sample_id].scene_id

    def to_json(self) -> dict:
        return {
            "version": jsonio.SCHEMA_VERSION,
            "scenes": [s.to_json() for s in self.scenes],
            "samples": [s.to_json() for s in self.samples],
            "annotations": [a.to_json() for a in self.annotations],
        }


def _unique(items, what: str) -> None:
    seen = set()
    for item in items:
        if item.id in seen:
            raise DuplicateId(f"duplicate {what} id {item.id!r}")
        seen.add(item.id)


def build_index(scenes: Iterable[Scene], samples: Iterable[Sample], annotations: Iterable[Annotation]) -> DatasetIndex:
    """Validate referential integrity and return an index sorted by id."""
    scenes = tuple(sorted(scenes, key=lambda s: s.id))
    samples = tuple(sorted(samples, key=lambda s: s.id))
    annotations = tuple(sorted(annotations, key=lambda a: a.id))
    _unique(scenes, "scene")
    _unique(samples, "sample")
    _unique(annotations, "annotation")
    scene_ids = {s.id for s in scenes}
    sample_ids = {s.id for s in samples}
    for s in samples:
        if s.scene_id not in scene_ids:
            raise DanglingReference(f"sample {s.id!r} references missing scene {s.scene_id!r}")
    for a in annotations:
        if a.sample_id not in sample_ids:
            raise DanglingReference(f"annotation {a.id!r} references missing sample {a.sample_id!r}")
    index = DatasetIndex(scenes, samples, annotations)
    for scene_id, children in index.samples_of_scene.items():
        stamps = [s.timestamp for s in children]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise NonMonotonicTimestamps(f"scene {scene_id!r} has repeated or out-of-order sample timestamps")
    return index


def _scene(doc) -> Scene:
    what = "scene"
    split = doc.get("split", "val") if isinstance(doc, dict) else None
    if split not in SPLITS:
        raise MalformedDocument(f"scene split must be one of {SPLITS}, got {split!r}")
    return Scene(jsonio.field(doc, "id", what, str), doc.get("description") or "", split)


def _sample(doc) -> Sample:
    what = f"sample {doc.get('id')!r}" if isinstance(doc, dict) else "sample"
    ts = jsonio.field(doc, "timestamp", what)
    if isinstance(ts, bool) or not isinstance(ts, int):
        raise MalformedDocument(f"{what}: timestamp must be integer microseconds")
    ego = jsonio.field(doc, "ego", what, dict)
    speed = _num(jsonio.field(ego, "speed", what), f"{what} ego speed")
    heading = _num(jsonio.field(ego, "heading", what), f"{what} ego heading")
    if speed < 0:
        raise MalformedDocument(f"{what}: ego speed must be non-negative")
    if not -math.pi < heading <= math.pi:
        raise MalformedDocument(f"{what}: ego heading must lie in (-pi, pi]")
    extra = tuple(sorted((k, _num(v, f"{what} ego {k}")) for k, v in ego.items() if k not in ("speed", "heading")))
    return Sample(jsonio.field(doc, "id", what, str), jsonio.field(doc, "scene_id", what, str), ts, speed, heading, extra)


def _annotation(doc) -> Annotation:
    what = f"annotation {doc.get('id')!r}" if isinstance(doc, dict) else "annotation"
    attrs = doc.get("attributes") or {}
    if not isinstance(attrs, dict):
        raise MalformedDocument(f"{what}: attributes must be an object")
    return Annotation(
        jsonio.field(doc, "id", what, str),
        jsonio.field(doc, "sample_id", what, str),
        jsonio.field(doc, "label", what, str),
        _triple(jsonio.field(doc, "center", what), f"{what} center"),
        _triple(jsonio.field(doc, "size", what), f"{what} size"),
        _num(jsonio.field(doc, "heading", what), f"{what} heading"),
        tuple(sorted((str(k), str(v)) for k, v in attrs.items())),
    )


def load_dataset(doc: dict) -> DatasetIndex:
    jsonio.check_version(doc, "dataset")
    return build_index(
        (_scene(s) for s in jsonio.field(doc, "scenes", "dataset", list)),
        (_sample(s) for s in jsonio.field(doc, "samples", "dataset", list)),
        (_annotation(a) for a in jsonio.field(doc, "annotations", "dataset", list)),
    )


def read_dataset(path) -> DatasetIndex:
    return load_dataset(jsonio.read_json(path, "dataset"))


def write_dataset(index: DatasetIndex, path) -> None:
    jsonio.write_json(path, index.to_json())


# ------------------------------------------------------------ label mapping


@dataclass(frozen=True)
class LabelMapping:
    """Ontology class -> dataset labels, resolved through the class forest.

    ``direct`` holds the user's entries; ``parents`` is the ontology's
    subclass edges so unmapped classes inherit their nearest mapped ancestor.
    """

    direct: tuple
    parents: tuple
    attributes: tuple = ()

    @cached_property
    def _direct(self) -> dict:
        return {k: v for k, v in self.direct}

    @cached_property
    def _parents(self) -> dict:
        return dict(self.parents)

    def resolve(self, ontology_class: str) -> frozenset:
        return resolve_labels(self, ontology_class)

    def dataset_attribute(self, name: str) -> str:
        return dict(self.attributes).get(name, name)

    def to_json(self) -> dict:
        return {
            "version": jsonio.SCHEMA_VERSION,
            "classes": {k: sorted(v) for k, v in self.direct},
            "attributes": dict(self.attributes),
        }


def resolve_labels(mapping: LabelMapping, ontology_class: str) -> frozenset:
    """Direct entry if present, else the nearest mapped ancestor's; empty if neither."""
    parents = mapping._parents
    if ontology_class not in parents:
        raise UnknownClass(f"unknown ontology class {ontology_class!r}")
    node = ontology_class
    while node is not None:
        if node in mapping._direct:
            return mapping._direct[node]
        node = parents[node]
    return frozenset()


def load_mapping(doc: dict, ontology: CornerCaseOntology, metrics=()) -> LabelMapping:
    """Validate a mapping document against the ontology and the classes metrics need.

    ``metrics`` is a :class:`~cornerforge.metrics.MetricsFile` or an iterable
    of required ontology class names.
    """
    required = getattr(metrics, "required_classes", metrics)
    jsonio.check_version(doc, "mapping")
    classes = jsonio.field(doc, "classes", "mapping", dict)
    direct = []
    for name, labels in sorted(classes.items()):
        if not ontology.has_class(name):
            raise UnknownClass(f"mapping names unknown ontology class {name!r}")
        if isinstance(labels, str):
            labels = [labels]
        if not isinstance(labels, list) or not labels or not all(isinstance(x, str) and x for x in labels):
            raise MalformedDocument(f"mapping for {name!r} must be a non-empty list of labels")
        direct.append((name, frozenset(labels)))
    attrs = doc.get("attributes") or {}
    if not isinstance(attrs, dict) or not all(isinstance(v, str) for v in attrs.values()):
        raise MalformedDocument("mapping 'attributes' must map names to names")
    mapping = LabelMapping(
        tuple(direct),
        tuple(sorted((c.name, c.parent) for c in ontology.classes)),
        tuple(sorted(attrs.items())),
    )
    missing = set()
    for cls in required:
        if not ontology.has_class(cls):
            raise UnknownClass(f"metric requires unknown ontology class {cls!r}")
        if not resolve_labels(mapping, cls):
            missing.add(cls)
    if missing:
        raise MissingMapping(missing)
    return mapping


def read_mapping(path, ontology: CornerCaseOntology, metrics=()) -> LabelMapping:
    return load_mapping(jsonio.read_json(path, "mapping"), ontology, metrics)


def wrap_angle(angle: float) -> float:
    """Wrap into (-pi, pi]."""
    wrapped = math.fmod(angle + math.pi, 2 * math.pi)
    if wrapped <= 0:
        wrapped += 2 * math.pi
    return wrapped - math.pi

