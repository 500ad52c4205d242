"""Load the a-priori corner-case sheet (CSV) into :class:`CornerCaseSpec` records.

One CSV row describes one (corner case, cause, classification) combination;
rows sharing an ``id`` are merged.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .errors import DuplicateConflict, MalformedDocument, MissingColumn
from .taxonomy import (
    FusionStage,
    SensorSources,
    parse_classification,
    parse_fusion,
    parse_sources,
)

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("id", "description", "cause", "ravioli", "source", "layer", "level")
OPTIONAL_COLUMNS = ("scene_ref", "override_attr", "override_min", "override_max", "override_unit")


@dataclass(frozen=True)
class RangeOverride:
    """Sheet-supplied bounds that replace an ontology range for one attribute."""

    attribute: str
    min: Optional[float] = None
    max: Optional[float] = None
    unit: Optional[str] = None

    def to_json(self) -> dict:
        return {"attribute": self.attribute, "min": self.min, "max": self.max, "unit": self.unit}

    @classmethod
    def from_json(cls, doc: dict) -> "RangeOverride":
        return cls(doc["attribute"], doc.get("min"), doc.get("max"), doc.get("unit"))


@dataclass(frozen=True)
class Cause:
    text: str
    scene_ref: Optional[str] = None
    overrides: tuple = ()

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise MalformedDocument("cause text is empty")


@dataclass(frozen=True)
class CornerCaseSpec:
    id: int
    description: str
    causes: tuple
    sources: SensorSources
    fusion: FusionStage
    classifications: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.id <= 0:
            raise MalformedDocument(f"corner case id must be positive, got {self.id}")
        if not self.causes:
            raise MalformedDocument(f"corner case {self.id} has no causes")
        if not self.classifications:
            raise MalformedDocument(f"corner case {self.id} has no classifications")

    def cause(self, text: str) -> Cause:
        for c in self.causes:
            if c.text == text:
                return c
        raise KeyError(text)


@dataclass(frozen=True)
class Diagnostic:
    corner_case_id: int
    cause: str
    message: str

    def __str__(self) -> str:
        return f"corner case {self.corner_case_id} ({self.cause!r}): {self.message}"


def _read_text(source) -> str:
    if hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    with open(os.fspath(source), encoding="utf-8", newline="") as fh:
        return fh.read()


def _opt_float(row: dict, key: str, line: int) -> Optional[float]:
    raw = (row.get(key) or "").strip()
    if not raw:
        return None
    try:
        return float(raw)
    except ValueError:
        raise MalformedDocument(f"line {line}: {key} is not a number: {raw!r}") from None


def _parse_override(row: dict, line: int) -> Optional[RangeOverride]:
    attr = (row.get("override_attr") or "").strip()
    lo = _opt_float(row, "override_min", line)
    hi = _opt_float(row, "override_max", line)
    unit = (row.get("override_unit") or "").strip() or None
    if not attr:
        if lo is not None or hi is not None or unit:
            raise MalformedDocument(f"line {line}: override values given without override_attr")
        return None
    if lo is None and hi is None:
        raise MalformedDocument(f"line {line}: override_attr {attr!r} has no bounds")
    if lo is not None and hi is not None and lo > hi:
        raise MalformedDocument(f"line {line}: override_min > override_max")
    return RangeOverride(attr, lo, hi, unit)


def load_registry(source: Union[str, os.PathLike, io.IOBase]) -> list:
    """Parse a registry CSV (path or open file) into specs sorted by id."""
    text = _read_text(source)
    reader = csv.DictReader(io.StringIO(text))
    header = [h.strip() for h in (reader.fieldnames or [])]
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise MissingColumn("registry is missing column(s): " + ", ".join(missing))
    reader.fieldnames = header

    groups: dict = {}
    for line, row in enumerate(reader, start=2):
        row = {k: (v or "").strip() for k, v in row.items() if k is not None}
        try:
            cc_id = int(row["id"])
        except ValueError:
            raise MalformedDocument(f"line {line}: id is not an integer: {row['id']!r}") from None
        head = (row["description"], parse_sources(row["ravioli"]), parse_fusion(row["source"]))
        g = groups.setdefault(cc_id, {"head": head, "causes": {}, "classes": set()})
        if g["head"] != head:
            raise DuplicateConflict(
                f"line {line}: corner case {cc_id} disagrees with an earlier row on "
                "description, sensor sources or fusion stage"
            )
        g["classes"].add(parse_classification(row["layer"], row["level"]))

        cause_text = row["cause"]
        scene_ref = row.get("scene_ref") or None
        override = _parse_override(row, line)
        entry = g["causes"].setdefault(cause_text, {"scene_ref": scene_ref, "overrides": set()})
        if entry["scene_ref"] != scene_ref:
            if entry["scene_ref"] is None or scene_ref is None:
                entry["scene_ref"] = entry["scene_ref"] or scene_ref
            else:
                raise DuplicateConflict(
                    f"line {line}: cause {cause_text!r} of corner case {cc_id} "
                    f"links to both {entry['scene_ref']!r} and {scene_ref!r}"
                )
        if override is not None:
            entry["overrides"].add(override)

    specs = []
    for cc_id in sorted(groups):
        g = groups[cc_id]
        description, sources, fusion = g["head"]
        causes = []
        for text in sorted(g["causes"]):
            entry = g["causes"][text]
            overrides = sorted(entry["overrides"], key=lambda o: o.attribute)
            attrs = [o.attribute for o in overrides]
            if len(set(attrs)) != len(attrs):
                raise DuplicateConflict(
                    f"corner case {cc_id}, cause {text!r}: conflicting overrides for one attribute"
                )
            causes.append(Cause(text, entry["scene_ref"], tuple(overrides)))
        specs.append(
            CornerCaseSpec(cc_id, description, tuple(causes), sources, fusion, frozenset(g["classes"]))
        )
    log.debug("loaded %d corner cases", len(specs))
    return specs


def validate_registry(specs: Iterable[CornerCaseSpec]) -> list:
    """Return diagnostics for causes that cannot be compiled (no scene_ref)."""
    out = []
    for spec in specs:
        for cause in spec.causes:
            if cause.scene_ref is None:
                out.append(
                    Diagnostic(spec.id, cause.text, "cause has no scene_ref; it will be reported but not searched")
                )
    return out
