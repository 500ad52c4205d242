"""Corner-case classification vocabulary: layers, levels, sublevels, sensor sources."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, Optional

from .errors import EmptySet, IllegalCombination, OutOfScopeLayer, UnknownToken

_OUT_OF_SCOPE = {"temporal": "Temporal", "method": "Method"}
_OUT_OF_SCOPE_LEVELS = {"scenario": "Scenario"}


def _key(text: str) -> str:
    return re.sub(r"[\s_\-]+", "", text).lower()


class _Token(enum.Enum):
    """Enum whose canonical text form is its value."""

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str):
        k = _key(text)
        for member in cls:
            if _key(member.value) == k or member.name.lower() == k:
                return member
        raise UnknownToken(f"unknown {cls.__name__.lower()} {text!r}")


class Layer(_Token):
    SENSOR = "Sensor"
    CONTENT = "Content"

    @classmethod
    def parse(cls, text: str) -> "Layer":
        name = _OUT_OF_SCOPE.get(_key(text))
        if name:
            raise OutOfScopeLayer(f"the {name} layer is out of scope for this pipeline")
        return super().parse(text)


class Level(_Token):
    PHYSICAL = "Physical"
    HARDWARE = "Hardware"
    DOMAIN = "Domain"
    OBJECT = "Object"
    SCENE = "Scene"

    @property
    def layer(self) -> Layer:
        if self in (Level.PHYSICAL, Level.HARDWARE):
            return Layer.SENSOR
        return Layer.CONTENT

    @classmethod
    def parse(cls, text: str) -> "Level":
        name = _OUT_OF_SCOPE_LEVELS.get(_key(text))
        if name:
            raise OutOfScopeLayer(f"the {name} level (Temporal layer) is out of scope")
        return super().parse(text)


class SubLevel(_Token):
    GLOBAL_OUTLIER = "Global Outlier"
    LOCAL_OUTLIER = "Local Outlier"
    COLLECTIVE = "Collective"
    CONTEXTUAL = "Contextual"


_LEGAL_SUBLEVELS = {
    Level.PHYSICAL: {SubLevel.GLOBAL_OUTLIER, SubLevel.LOCAL_OUTLIER},
    Level.HARDWARE: {SubLevel.GLOBAL_OUTLIER, SubLevel.LOCAL_OUTLIER},
    Level.DOMAIN: set(),
    Level.OBJECT: set(),
    Level.SCENE: {SubLevel.COLLECTIVE, SubLevel.CONTEXTUAL},
}


class Sensor(_Token):
    RADAR = "R"
    VIDEO = "V"
    LIDAR = "L"


class FusionStage(_Token):
    SINGLE = "Single"
    MULTI = "Multi"


@dataclass(frozen=True)
class Classification:
    layer: Layer
    level: Level
    sublevel: Optional[SubLevel] = None

    def __post_init__(self):
        if self.level.layer is not self.layer:
            raise IllegalCombination(f"level {self.level} does not belong to layer {self.layer}")
        if self.sublevel is not None and self.sublevel not in _LEGAL_SUBLEVELS[self.level]:
            raise IllegalCombination(f"sublevel {self.sublevel} is not legal under level {self.level}")

    def __lt__(self, other):  # enums are not orderable; sort on canonical text
        return self.sort_key() < other.sort_key()

    def sort_key(self) -> tuple:
        return (str(self.layer), str(self.level), str(self.sublevel or ""))

    @property
    def level_text(self) -> str:
        if self.sublevel is None:
            return str(self.level)
        return f"{self.level} - {self.sublevel}"

    def __str__(self) -> str:
        return f"{self.layer}/{self.level_text}"

    def to_json(self) -> dict:
        return {"layer": str(self.layer), "level": self.level_text}

    @classmethod
    def from_json(cls, doc: dict) -> "Classification":
        return parse_classification(doc["layer"], doc["level"])


def parse_classification(layer_text: str, level_text: str) -> Classification:
    """Parse a layer cell and a level cell such as ``"Physical - Global Outlier"``."""
    if not layer_text or not layer_text.strip():
        raise UnknownToken("empty layer")
    if not level_text or not level_text.strip():
        raise UnknownToken("empty level")
    layer = Layer.parse(layer_text.strip())
    head, sep, tail = level_text.partition(" - ")
    level = Level.parse(head.strip())
    sublevel = SubLevel.parse(tail.strip()) if sep else None
    return Classification(layer, level, sublevel)


_SENSOR_ORDER = {Sensor.RADAR: 0, Sensor.VIDEO: 1, Sensor.LIDAR: 2}


@dataclass(frozen=True)
class SensorSources:
    """Non-empty subset of {Radar, Video, Lidar} ("RaVioLi")."""

    members: frozenset

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(self.members))
        if not self.members:
            raise EmptySet("sensor source set is empty")

    @classmethod
    def of(cls, *sensors: Sensor) -> "SensorSources":
        return cls(frozenset(sensors))

    def __iter__(self):
        return iter(sorted(self.members, key=_SENSOR_ORDER.__getitem__))

    def __contains__(self, item) -> bool:
        return item in self.members

    def __len__(self) -> int:
        return len(self.members)

    def __str__(self) -> str:
        return "/".join(s.value for s in self)


def parse_sources(text: str) -> SensorSources:
    parts = [p.strip() for p in (text or "").split("/")]
    parts = [p for p in parts if p]
    if not parts:
        raise EmptySet(f"no sensor sources in {text!r}")
    return SensorSources(frozenset(Sensor.parse(p.upper()) for p in parts))


def parse_fusion(text: str) -> FusionStage:
    return FusionStage.parse(text.strip())


def sorted_classifications(items: Iterable[Classification]) -> list:
    return sorted(items, key=Classification.sort_key)
