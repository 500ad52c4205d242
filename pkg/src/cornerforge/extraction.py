"""Run compiled metrics over a dataset and collect a-priori corner-case hits."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from . import jsonio
from .dataset import Annotation, DatasetIndex, LabelMapping, Sample, Scene, resolve_labels, wrap_angle
from .errors import IdMismatch, MalformedDocument, MissingAttribute
from .metrics import CompiledMetric, HitMode, MetricsFile
from .ontology import (
    AttributeRange,
    ClassPresence,
    CountWithFilter,
    EgoAttributeRange,
    RelativeHeading,
    SceneTextKeyword,
)
from .textsearch import keyword_match, tokenize

log = logging.getLogger(__name__)

_GEOMETRY = {
    "x": lambda a: a.center[0],
    "y": lambda a: a.center[1],
    "z": lambda a: a.center[2],
    "width": lambda a: a.size[0],
    "length": lambda a: a.size[1],
    "height": lambda a: a.size[2],
    "heading": lambda a: a.heading,
}


@dataclass(frozen=True)
class HitSet:
    corner_case_id: int
    cause: str
    scene_ids: frozenset = frozenset()
    sample_ids: frozenset = frozenset()
    annotation_ids: frozenset = frozenset()

    @property
    def key(self) -> tuple:
        return (self.corner_case_id, self.cause)

    def check_closure(self, dataset: DatasetIndex) -> None:
        """Raise :class:`IdMismatch` unless every id exists and parents are included."""
        for sid in self.sample_ids:
            sample = dataset.sample_by_id.get(sid)
            if sample is None or sample.scene_id not in self.scene_ids:
                raise IdMismatch(f"hit {self.key}: sample {sid!r} unknown or its scene is not a hit")
        for aid in self.annotation_ids:
            ann = dataset.annotation_by_id.get(aid)
            if ann is None or ann.sample_id not in self.sample_ids:
                raise IdMismatch(f"hit {self.key}: annotation {aid!r} unknown or its sample is not a hit")
        for scid in self.scene_ids:
            if scid not in dataset.scene_by_id:
                raise IdMismatch(f"hit {self.key}: unknown scene {scid!r}")

    def to_json(self) -> dict:
        return {
            "corner_case_id": self.corner_case_id,
            "cause": self.cause,
            "scene_ids": sorted(self.scene_ids),
            "sample_ids": sorted(self.sample_ids),
            "annotation_ids": sorted(self.annotation_ids),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "HitSet":
        what = "hit set"
        return cls(
            jsonio.field(doc, "corner_case_id", what, int),
            jsonio.field(doc, "cause", what, str),
            frozenset(jsonio.field(doc, "scene_ids", what, list)),
            frozenset(jsonio.field(doc, "sample_ids", what, list)),
            frozenset(jsonio.field(doc, "annotation_ids", what, list)),
        )


@dataclass(frozen=True)
class ExtractionResult:
    hits: tuple
    total_annotations: int
    total_samples: int
    total_scenes: int

    def __post_init__(self):
        object.__setattr__(self, "hits", tuple(sorted(self.hits, key=lambda h: h.key)))

    def hit(self, corner_case_id: int, cause: str) -> HitSet:
        for h in self.hits:
            if h.key == (corner_case_id, cause):
                return h
        raise KeyError((corner_case_id, cause))

    def union(self, attr: str) -> frozenset:
        out = set()
        for h in self.hits:
            out |= getattr(h, attr)
        return frozenset(out)

    @property
    def coverage(self) -> dict:
        def frac(n, total):
            return n / total if total else 0.0

        return {
            "annotations": frac(len(self.union("annotation_ids")), self.total_annotations),
            "samples": frac(len(self.union("sample_ids")), self.total_samples),
            "scenes": frac(len(self.union("scene_ids")), self.total_scenes),
        }

    def to_json(self) -> dict:
        return {
            "version": jsonio.SCHEMA_VERSION,
            "totals": {
                "annotations": self.total_annotations,
                "samples": self.total_samples,
                "scenes": self.total_scenes,
            },
            "coverage": self.coverage,
            "hits": [h.to_json() for h in self.hits],
        }


def load_hits(doc: dict) -> ExtractionResult:
    jsonio.check_version(doc, "hits file")
    totals = jsonio.field(doc, "totals", "hits file", dict)
    hits = [HitSet.from_json(h) for h in jsonio.field(doc, "hits", "hits file", list)]
    if len({h.key for h in hits}) != len(hits):
        raise MalformedDocument("hits file has duplicate (corner_case_id, cause) entries")
    return ExtractionResult(
        tuple(hits),
        jsonio.field(totals, "annotations", "hits totals", int),
        jsonio.field(totals, "samples", "hits totals", int),
        jsonio.field(totals, "scenes", "hits totals", int),
    )


def read_hits(path) -> ExtractionResult:
    return load_hits(jsonio.read_json(path, "hits file"))


def write_hits(result: ExtractionResult, path) -> None:
    jsonio.write_json(path, result.to_json())


# ------------------------------------------------------------- evaluation


def annotation_attribute(ann: Annotation, name: str, mapping: LabelMapping) -> float:
    key = mapping.dataset_attribute(name)
    if key in _GEOMETRY:
        return _GEOMETRY[key](ann)
    raw = ann.attribute_map.get(key)
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise MissingAttribute(f"annotation {ann.id!r} has no numeric attribute {key!r}") from None
    if not math.isfinite(value):
        raise MissingAttribute(f"annotation {ann.id!r} attribute {key!r} is not finite")
    return value


def ego_attribute(sample: Sample, name: str, mapping: LabelMapping) -> float:
    key = mapping.dataset_attribute(name)
    value = sample.ego_attribute(key)
    if value is None:
        raise MissingAttribute(f"sample {sample.id!r} has no ego attribute {key!r}")
    return value


def passes_filter(flt, ann: Annotation, sample: Sample, mapping: LabelMapping) -> bool:
    if isinstance(flt, RelativeHeading):
        delta = abs(wrap_angle(ann.heading - sample.heading))
        return flt.min_abs_delta <= delta <= flt.max_abs_delta
    if isinstance(flt, AttributeRange):
        return flt.min <= annotation_attribute(ann, flt.attribute, mapping) <= flt.max
    raise TypeError(f"unsupported filter {flt!r}")


def _matching_annotations(pred, sample, dataset, mapping, labels=None):
    if labels is None:
        labels = resolve_labels(mapping, pred.cls)
    out = []
    for ann in dataset.annotations_of_sample[sample.id]:
        if ann.label in labels and all(passes_filter(f, ann, sample, mapping) for f in pred.filters):
            out.append(ann.id)
    return out


def is_scene_level(pred) -> bool:
    return isinstance(pred, SceneTextKeyword)


def scene_text_matches(pred: SceneTextKeyword, scene: Scene) -> bool:
    tokens = tokenize(scene.description)
    return any(
        keyword_match(tokens, kw, pred.max_edit_distance, window=pred.negation_window, negations=pred.negation_tokens)
        for kw in pred.keywords
    )


def evaluate_predicate(pred, sample: Sample, scene: Scene, dataset: DatasetIndex, mapping: LabelMapping, labels=None):
    """Evaluate one resolved predicate.

    Returns a bool, except for :class:`ClassPresence`, which returns the
    frozenset of matching annotation ids (empty when fewer than ``min_count``).
    """
    if isinstance(pred, SceneTextKeyword):
        return scene_text_matches(pred, scene)
    if isinstance(pred, EgoAttributeRange):
        return pred.range.contains(ego_attribute(sample, pred.range.attribute, mapping))
    if isinstance(pred, CountWithFilter):
        n = len(_matching_annotations(pred, sample, dataset, mapping, labels))
        return n >= pred.min_count and (pred.max_count is None or n <= pred.max_count)
    if isinstance(pred, ClassPresence):
        ids = _matching_annotations(pred, sample, dataset, mapping, labels)
        return frozenset(ids) if len(ids) >= pred.min_count else frozenset()
    raise TypeError(f"unsupported predicate {pred!r}")


def evaluate_metric(metric: CompiledMetric, dataset: DatasetIndex, mapping: LabelMapping) -> HitSet:
    scene_preds = [p for p in metric.predicates if is_scene_level(p)]
    sample_preds = [p for p in metric.predicates if not is_scene_level(p)]
    labels = {p.cls: resolve_labels(mapping, p.cls) for p in sample_preds if hasattr(p, "cls")}
    scene_wide = metric.hit_mode is HitMode.SCENE_WIDE

    scenes, samples, annotations = set(), set(), set()
    for scene in dataset.scenes:
        if not all(scene_text_matches(p, scene) for p in scene_preds):
            continue
        for sample in dataset.samples_of_scene[scene.id]:
            targeted = set()
            for p in sample_preds:
                result = evaluate_predicate(p, sample, scene, dataset, mapping, labels.get(getattr(p, "cls", None)))
                if not result:
                    break
                if isinstance(result, frozenset):
                    targeted |= result
            else:
                samples.add(sample.id)
                scenes.add(scene.id)
                if scene_wide:
                    annotations.update(a.id for a in dataset.annotations_of_sample[sample.id])
                else:
                    annotations |= targeted
    hits = HitSet(metric.corner_case_id, metric.cause, frozenset(scenes), frozenset(samples), frozenset(annotations))
    hits.check_closure(dataset)
    return hits


def extract_all(metrics: MetricsFile, dataset: DatasetIndex, mapping: LabelMapping, jobs: int = 1) -> ExtractionResult:
    """Evaluate every metric; ``jobs > 1`` evaluates metrics concurrently with identical output."""
    if jobs > 1 and len(metrics.metrics) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            hits = list(pool.map(lambda m: evaluate_metric(m, dataset, mapping), metrics.metrics))
    else:
        hits = [evaluate_metric(m, dataset, mapping) for m in metrics.metrics]
    for h in hits:
        log.info("corner case %s (%s): %d scenes, %d samples, %d annotations",
                 h.corner_case_id, h.cause, len(h.scene_ids), len(h.sample_ids), len(h.annotation_ids))
    return ExtractionResult(tuple(hits), len(dataset.annotations), len(dataset.samples), len(dataset.scenes))
