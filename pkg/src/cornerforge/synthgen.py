"""Seeded generator for desk-scale datasets with planted corner cases and detector outputs.

Every planted scenario is logged in a :class:`PlantLog`, which is what the
end-to-end tests compare extraction results against. Generation is single
threaded and uses one :class:`random.Random` stream, so identical specs give
byte-identical files.
"""

from __future__ import annotations

import math
import os
import random
from dataclasses import dataclass, field
from fractions import Fraction

from . import jsonio
from .dataset import Annotation, Sample, Scene, build_index, wrap_angle
from .errors import InfeasibleSpec, MalformedDocument
from .matching import DEFAULT_THRESHOLD_M, Detection, detections_to_json

KINDS = ("traffic_jam", "rain_text", "rain_misspelled", "negated_rain", "night_oncoming", "traffic_cones")
DETECTORS = ("perfect", "null", "degraded")

VEHICLE_LABELS = ("car", "truck", "bus")
BACKGROUND_LABELS = ("car", "car", "car", "truck", "bus", "pedestrian", "pedestrian", "bicycle",
                     "motorcycle", "barrier")
SIZES = {
    "car": (1.9, 4.6, 1.7),
    "truck": (2.5, 7.5, 3.2),
    "bus": (2.9, 11.0, 3.4),
    "pedestrian": (0.7, 0.7, 1.75),
    "bicycle": (0.6, 1.8, 1.3),
    "motorcycle": (0.8, 2.1, 1.5),
    "barrier": (2.2, 0.5, 1.0),
    "traffic_cone": (0.4, 0.4, 0.9),
}
MAX_BACKGROUND_VEHICLES = 6  # keeps ordinary samples well below the ten-vehicle jam threshold

# none of these tokens may fuzzy-match the fixture keywords ("rain", "night")
BACKGROUND_PHRASES = (
    "clear sky", "sunny", "daytime", "parking lot", "intersection", "pedestrians crossing",
    "overtaking bus", "wide street", "turn left", "busy market", "dry asphalt", "cloudy",
    "trucks parked", "bicycle lane", "peds waiting", "lane change", "bus stop", "city center",
)
SCENARIO_PHRASES = {
    "rain_text": ("heavy rain, wet road", "rain at intersection", "light rain in the city"),
    "rain_misspelled": ("heavy raim, wet road", "raim near bus stop"),
    "negated_rain": ("no rain, clear sky", "dry, no rain today"),
    "night_oncoming": ("night, oncoming traffic", "driving at night, headlights"),
    "traffic_jam": ("traffic jam on highway", "rush hour, stop and go"),
    "traffic_cones": ("construction zone with cones", "lane closed by cones"),
}

GRID_CELL_M = 4.0
GRID_HALF_CELLS = 10
CELL_JITTER_M = 1.0  # objects within one sample stay >= 2 m apart


@dataclass
class DetectorSpec:
    kind: str = "perfect"
    drop_fraction: float = 0.0
    jitter_max_m: float = 0.0

    def __post_init__(self):
        if self.kind not in DETECTORS:
            raise MalformedDocument(f"detector kind must be one of {DETECTORS}")
        if not 0.0 <= self.drop_fraction <= 1.0:
            raise MalformedDocument("drop_fraction must lie in [0, 1]")
        if not 0.0 <= self.jitter_max_m < DEFAULT_THRESHOLD_M:
            raise InfeasibleSpec(f"jitter_max_m must lie in [0, {DEFAULT_THRESHOLD_M}) to stay inside the gate")


@dataclass
class SynthSpec:
    seed: int = 42
    n_scenes: int = 50
    samples_per_scene: int = 4
    background_per_sample: int = 9
    planted: dict = field(default_factory=dict)
    detector: DetectorSpec = field(default_factory=DetectorSpec)

    def __post_init__(self):
        unknown = set(self.planted) - set(KINDS)
        if unknown:
            raise MalformedDocument(f"unknown planted kinds: {sorted(unknown)}")
        for k in KINDS:
            self.planted.setdefault(k, 0)
            if self.planted[k] < 0:
                raise MalformedDocument(f"planted count for {k} is negative")
        if self.n_scenes < 0 or self.samples_per_scene < 1 or self.background_per_sample < 0:
            raise MalformedDocument("scene/sample/background counts must be non-negative (samples >= 1)")
        if sum(self.planted.values()) > self.n_scenes:
            raise InfeasibleSpec(
                f"{sum(self.planted.values())} planted scenes requested but only {self.n_scenes} scenes"
            )
        cells = (2 * GRID_HALF_CELLS) ** 2
        if self.background_per_sample + 20 > cells:
            raise InfeasibleSpec("too many objects per sample for the placement grid")

    @classmethod
    def from_json(cls, doc: dict) -> "SynthSpec":
        if not isinstance(doc, dict):
            raise MalformedDocument("synth spec must be an object")
        det = doc.get("detector", {})
        return cls(
            seed=int(doc.get("seed", 42)),
            n_scenes=int(doc.get("n_scenes", 50)),
            samples_per_scene=int(doc.get("samples_per_scene", 4)),
            background_per_sample=int(doc.get("background_per_sample", 9)),
            planted=dict(doc.get("planted", {})),
            detector=DetectorSpec(det.get("kind", "perfect"), float(det.get("drop_fraction", 0.0)),
                                  float(det.get("jitter_max_m", 0.0))),
        )

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "n_scenes": self.n_scenes,
            "samples_per_scene": self.samples_per_scene,
            "background_per_sample": self.background_per_sample,
            "planted": dict(self.planted),
            "detector": {"kind": self.detector.kind, "drop_fraction": self.detector.drop_fraction,
                         "jitter_max_m": self.detector.jitter_max_m},
        }


def acceptance_spec(detector: str = "perfect", drop_fraction: float = 0.0, jitter_max_m: float = 0.0,
                    seed: int = 42) -> SynthSpec:
    """The 50-scene layout used by the end-to-end checks."""
    return SynthSpec(
        seed=seed,
        n_scenes=50,
        planted={"traffic_jam": 5, "rain_text": 3, "rain_misspelled": 2, "negated_rain": 1,
                 "traffic_cones": 4, "night_oncoming": 3},
        detector=DetectorSpec(detector, drop_fraction, jitter_max_m),
    )


@dataclass
class PlantLog:
    planted: dict = field(default_factory=dict)  # kind -> {"scene_ids", "sample_ids", "annotation_ids"}
    detector: str = "perfect"
    dropped: frozenset = frozenset()

    def ids(self, kind: str, what: str) -> frozenset:
        return frozenset(self.planted[kind][what])

    def to_json(self) -> dict:
        return {
            "version": jsonio.SCHEMA_VERSION,
            "detector": self.detector,
            "dropped_annotation_ids": sorted(self.dropped),
            "planted": {k: {w: sorted(v) for w, v in d.items()} for k, d in sorted(self.planted.items())},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PlantLog":
        jsonio.check_version(doc, "plant log")
        planted = {k: {w: set(v) for w, v in d.items()} for k, d in doc["planted"].items()}
        return cls(planted, doc["detector"], frozenset(doc["dropped_annotation_ids"]))


class _Sampler:
    """Places objects of one sample on distinct grid cells."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        cells = [(i, j) for i in range(-GRID_HALF_CELLS, GRID_HALF_CELLS) for j in range(-GRID_HALF_CELLS, GRID_HALF_CELLS)]
        self.cells = rng.sample(cells, len(cells))

    def position(self) -> tuple:
        i, j = self.cells.pop()
        x = (i + 0.5) * GRID_CELL_M + self.rng.uniform(-CELL_JITTER_M, CELL_JITTER_M)
        y = (j + 0.5) * GRID_CELL_M + self.rng.uniform(-CELL_JITTER_M, CELL_JITTER_M)
        return (x, y, self.rng.uniform(0.0, 1.0))


def _heading(rng: random.Random) -> float:
    # (-pi, pi]
    h = rng.uniform(-math.pi, math.pi)
    return math.pi if h <= -math.pi else h


def _sample_objects(rng, spec: SynthSpec, kind: str, ego_heading: float):
    """Return a list of (label, relative heading or None, planted tag) for one sample."""
    objects = []
    vehicles = 0
    for _ in range(spec.background_per_sample):
        label = rng.choice(BACKGROUND_LABELS)
        if label in VEHICLE_LABELS:
            if vehicles >= MAX_BACKGROUND_VEHICLES:
                label = "pedestrian"
            else:
                vehicles += 1
        if label in VEHICLE_LABELS:
            objects.append((label, rng.uniform(-math.pi / 8, math.pi / 8), None))
        else:
            objects.append((label, None, None))

    if kind == "traffic_jam":
        extra = 10 - vehicles + rng.randint(0, 3)
        objects += [(rng.choice(VEHICLE_LABELS), rng.uniform(-math.pi / 8, math.pi / 8), "jam") for _ in range(extra)]
        objects += [("car", math.pi + rng.uniform(-0.2, 0.2), "jam") for _ in range(3)]
    elif kind == "night_oncoming":
        objects += [(rng.choice(("car", "truck")), math.pi + rng.uniform(-0.3, 0.3), "oncoming")
                    for _ in range(rng.randint(1, 2))]
    elif kind == "traffic_cones":
        objects += [("traffic_cone", None, "cone") for _ in range(rng.randint(2, 5))]
    return objects


def _description(rng, kind: str) -> str:
    parts = rng.sample(BACKGROUND_PHRASES, 2)
    if kind in SCENARIO_PHRASES:
        parts.insert(rng.randint(0, len(parts)), rng.choice(SCENARIO_PHRASES[kind]))
    return ", ".join(parts).capitalize() + "."


def generate(spec: SynthSpec):
    """Return ``(dataset document, detections document, PlantLog)``."""
    rng = random.Random(spec.seed)

    order = list(range(spec.n_scenes))
    rng.shuffle(order)
    kind_of = {}
    cursor = 0
    for kind in KINDS:
        for idx in order[cursor:cursor + spec.planted[kind]]:
            kind_of[idx] = kind
        cursor += spec.planted[kind]

    scenes, samples, annotations = [], [], []
    log = {k: {"scene_ids": set(), "sample_ids": set(), "annotation_ids": set()} for k in KINDS if spec.planted[k]}

    for i in range(spec.n_scenes):
        kind = kind_of.get(i)
        scene_id = f"scene-{i:04d}"
        scenes.append(Scene(scene_id, _description(rng, kind), "val"))
        if kind:
            log[kind]["scene_ids"].add(scene_id)
        t0 = 1_500_000_000_000_000 + i * 20_000_000
        for k in range(spec.samples_per_scene):
            sample_id = f"sample-{i:04d}-{k:02d}"
            ego_heading = _heading(rng)
            speed = rng.uniform(0.0, 4.5) if kind == "traffic_jam" else rng.uniform(8.0, 16.0)
            samples.append(Sample(sample_id, scene_id, t0 + k * 500_000, speed, ego_heading))
            placer = _Sampler(rng)
            sample_anns = []
            for j, (label, rel, tag) in enumerate(_sample_objects(rng, spec, kind, ego_heading)):
                heading = _heading(rng) if rel is None else wrap_angle(ego_heading + rel)
                ann = Annotation(f"{sample_id}-a{j:02d}", sample_id, label, placer.position(), SIZES[label], heading)
                sample_anns.append(ann)
                if tag in ("oncoming", "cone"):
                    log[kind]["annotation_ids"].add(ann.id)
                    log[kind]["sample_ids"].add(sample_id)
            annotations.extend(sample_anns)
            if kind in ("traffic_jam", "rain_text", "rain_misspelled", "negated_rain"):
                log[kind]["sample_ids"].add(sample_id)
                log[kind]["annotation_ids"].update(a.id for a in sample_anns)

    index = build_index(scenes, samples, annotations)
    detections, dropped = _detect(rng, index.annotations, spec.detector)
    plant = PlantLog(log, spec.detector.kind, frozenset(dropped))
    return index.to_json(), detections_to_json(detections), plant


def exact_drop_count(fraction: float, n: int) -> int:
    """floor(fraction * n) computed on the decimal value of ``fraction``."""
    return math.floor(Fraction(repr(float(fraction))) * n)


def degrade(rng: random.Random, annotations, drop_fraction: float, jitter_max_m: float):
    """Drop exactly floor(p * n) annotations (seeded shuffle) and jitter the rest in an xy disc."""
    anns = sorted(annotations, key=lambda a: a.id)
    order = [a.id for a in anns]
    rng.shuffle(order)
    dropped = set(order[:exact_drop_count(drop_fraction, len(anns))])
    dets = []
    for a in anns:
        if a.id in dropped:
            continue
        r = jitter_max_m * math.sqrt(rng.random())
        theta = rng.uniform(0.0, 2 * math.pi)
        center = (a.center[0] + r * math.cos(theta), a.center[1] + r * math.sin(theta), a.center[2])
        dets.append(Detection(f"det-{a.id}", a.sample_id, a.label, center, round(rng.uniform(0.3, 1.0), 4)))
    return dets, dropped


def _detect(rng, annotations, det: DetectorSpec):
    if det.kind == "null":
        return [], set(a.id for a in annotations)
    if det.kind == "perfect":
        return [Detection(f"det-{a.id}", a.sample_id, a.label, a.center, 1.0) for a in annotations], set()
    return degrade(rng, annotations, det.drop_fraction, det.jitter_max_m)


def write_outputs(spec: SynthSpec, out_dir) -> None:
    dataset, detections, plant = generate(spec)
    jsonio.write_json(os.path.join(out_dir, "dataset.json"), dataset)
    jsonio.write_json(os.path.join(out_dir, "detections.json"), detections)
    jsonio.write_json(os.path.join(out_dir, "plantlog.json"), plant.to_json())
