"""A-posteriori corner cases and per-corner-case / per-layer statistics.

An a-priori hit annotation becomes an a-posteriori corner case when the
detector missed it (false negative). Scenes count as a-posteriori when any of
their a-priori annotations is a false negative.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Optional

from . import jsonio
from .errors import IdMismatch, MalformedDocument, UnsupportedFormat
from .extraction import ExtractionResult
from .matching import Enrichment
from .registry import CornerCaseSpec

CSV_HEADER = ("scope", "key", "a_priori", "a_posteriori", "ratio")
SCOPES = ("corner_case", "layer", "level")


@dataclass(frozen=True)
class APosterioriEntry:
    corner_case_id: int
    cause: str
    a_priori_annotations: frozenset
    a_posteriori_annotations: frozenset
    a_priori_scenes: frozenset
    a_posteriori_scenes: frozenset

    def __post_init__(self):
        if not self.a_posteriori_annotations <= self.a_priori_annotations:
            raise IdMismatch(f"a-posteriori annotations of {self.key} are not a subset of its hits")
        if not self.a_posteriori_scenes <= self.a_priori_scenes:
            raise IdMismatch(f"a-posteriori scenes of {self.key} are not a subset of its hit scenes")

    @property
    def key(self) -> tuple:
        return (self.corner_case_id, self.cause)

    def to_json(self) -> dict:
        return {
            "corner_case_id": self.corner_case_id,
            "cause": self.cause,
            "a_priori_annotations": sorted(self.a_priori_annotations),
            "a_posteriori_annotations": sorted(self.a_posteriori_annotations),
            "a_priori_scenes": sorted(self.a_priori_scenes),
            "a_posteriori_scenes": sorted(self.a_posteriori_scenes),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "APosterioriEntry":
        what = "a-posteriori entry"
        return cls(
            jsonio.field(doc, "corner_case_id", what, int),
            jsonio.field(doc, "cause", what, str),
            *(frozenset(jsonio.field(doc, k, what, list)) for k in (
                "a_priori_annotations", "a_posteriori_annotations", "a_priori_scenes", "a_posteriori_scenes")),
        )


@dataclass(frozen=True)
class APosterioriResult:
    entries: tuple
    summary: tuple = ()  # sorted (name, value) pairs with dataset and detector totals

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(sorted(self.entries, key=lambda e: e.key)))

    def to_json(self) -> dict:
        return {
            "version": jsonio.SCHEMA_VERSION,
            "summary": dict(self.summary),
            "entries": [e.to_json() for e in self.entries],
        }


def load_aposteriori(doc: dict) -> APosterioriResult:
    jsonio.check_version(doc, "a-posteriori file")
    summary = jsonio.field(doc, "summary", "a-posteriori file", dict)
    entries = [APosterioriEntry.from_json(e) for e in jsonio.field(doc, "entries", "a-posteriori file", list)]
    return APosterioriResult(tuple(entries), tuple(sorted(summary.items())))


def read_aposteriori(path) -> APosterioriResult:
    return load_aposteriori(jsonio.read_json(path, "a-posteriori file"))


def write_aposteriori(result: APosterioriResult, path) -> None:
    jsonio.write_json(path, result.to_json())


def derive_a_posteriori(hits: ExtractionResult, enrichment: Enrichment) -> APosterioriResult:
    """Intersect every hit set with the detector's false negatives."""
    known = enrichment.annotation_ids
    if len(known) != hits.total_annotations:
        raise IdMismatch(
            f"hits were computed over {hits.total_annotations} annotations but the enriched "
            f"results cover {len(known)}; were they produced from the same dataset?"
        )
    fn = enrichment.fn_ids
    scene_of = {}
    for o in enrichment.outcomes:
        for a in o.fn | o.tp_annotations:
            scene_of[a] = o.scene_id

    entries = []
    for h in hits.hits:
        unknown = h.annotation_ids - known
        if unknown:
            raise IdMismatch(f"hit {h.key} names {len(unknown)} annotation(s) absent from the enriched results, "
                             f"e.g. {sorted(unknown)[0]!r}")
        missed = h.annotation_ids & fn
        entries.append(APosterioriEntry(
            h.corner_case_id, h.cause, h.annotation_ids, frozenset(missed),
            h.scene_ids, frozenset(scene_of[a] for a in missed),
        ))
    totals = enrichment.totals
    summary = {
        "annotations": hits.total_annotations,
        "samples": hits.total_samples,
        "scenes": hits.total_scenes,
        "detections": totals["detections"],
        "tp": totals["tp"],
        "fn": totals["fn"],
        "fp": totals["fp"],
        "threshold_m": enrichment.threshold_m,
        "coverage_annotations": hits.coverage["annotations"],
    }
    return APosterioriResult(tuple(entries), tuple(sorted(summary.items())))


# ------------------------------------------------------------------ report


@dataclass(frozen=True)
class ReportRow:
    """One row of the report.

    ``a_priori``/``a_posteriori`` count each annotation once per (corner case,
    classification) contribution; the ``*_unique`` fields count distinct
    annotation ids in the row. For corner-case rows the two coincide.
    """

    scope: str
    key: str
    a_priori: int
    a_posteriori: int
    a_priori_unique: int
    a_posteriori_unique: int
    a_priori_scenes: int
    a_posteriori_scenes: int
    label: str = ""
    compiled: bool = True

    @property
    def ratio(self) -> Optional[float]:
        return self.a_posteriori / self.a_priori if self.a_priori else None

    def to_json(self) -> dict:
        doc = {
            "scope": self.scope,
            "key": self.key,
            "label": self.label,
            "compiled": self.compiled,
            "a_priori": self.a_priori,
            "a_posteriori": self.a_posteriori,
            "a_priori_unique": self.a_priori_unique,
            "a_posteriori_unique": self.a_posteriori_unique,
            "a_priori_scenes": self.a_priori_scenes,
            "a_posteriori_scenes": self.a_posteriori_scenes,
        }
        if self.ratio is not None:
            doc["ratio"] = self.ratio
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ReportRow":
        what = "report row"
        row = cls(
            jsonio.field(doc, "scope", what, str),
            jsonio.field(doc, "key", what, str),
            *(jsonio.field(doc, k, what, int) for k in (
                "a_priori", "a_posteriori", "a_priori_unique", "a_posteriori_unique",
                "a_priori_scenes", "a_posteriori_scenes")),
            label=doc.get("label", ""),
            compiled=bool(doc.get("compiled", True)),
        )
        if row.scope not in SCOPES:
            raise MalformedDocument(f"unknown report scope {row.scope!r}")
        return row


def _row_order(row: ReportRow) -> tuple:
    key = (0, int(row.key), "") if row.scope == "corner_case" else (1, 0, row.key)
    return (SCOPES.index(row.scope),) + key


@dataclass(frozen=True)
class CornerCaseReport:
    rows: tuple
    summary: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(sorted(self.rows, key=_row_order)))

    def row(self, scope: str, key) -> ReportRow:
        for r in self.rows:
            if r.scope == scope and r.key == str(key):
                return r
        raise KeyError((scope, key))

    def scope(self, scope: str) -> list:
        return [r for r in self.rows if r.scope == scope]

    def to_json(self) -> dict:
        return {
            "version": jsonio.SCHEMA_VERSION,
            "summary": dict(self.summary),
            "rows": [r.to_json() for r in self.rows],
        }


def _grouped_row(scope, key, members) -> ReportRow:
    """``members``: list of (a_priori ids, a_posteriori ids, a_priori scenes, a_posteriori scenes)."""
    pri, post, spri, spost = set(), set(), set(), set()
    n_pri = n_post = 0
    for a, b, sa, sb in members:
        n_pri += len(a)
        n_post += len(b)
        pri |= a
        post |= b
        spri |= sa
        spost |= sb
    return ReportRow(scope, key, n_pri, n_post, len(pri), len(post), len(spri), len(spost))


def aggregate(result: APosterioriResult, specs: Iterable[CornerCaseSpec]) -> CornerCaseReport:
    """Per corner case, per layer and per (layer, level, sublevel) counts.

    Every registry corner case gets a row, including those with no hits or no
    compiled metric. Multi-classified corner cases contribute to every layer
    and level they carry.
    """
    specs = list(specs)
    by_id = {}
    for e in result.entries:
        by_id.setdefault(e.corner_case_id, []).append(e)
    unknown = set(by_id) - {s.id for s in specs}
    if unknown:
        raise IdMismatch(f"a-posteriori results reference corner cases missing from the registry: {sorted(unknown)}")

    rows = []
    per_spec = {}
    for spec in specs:
        entries = by_id.get(spec.id, [])
        sets = (
            frozenset().union(*(e.a_priori_annotations for e in entries)),
            frozenset().union(*(e.a_posteriori_annotations for e in entries)),
            frozenset().union(*(e.a_priori_scenes for e in entries)),
            frozenset().union(*(e.a_posteriori_scenes for e in entries)),
        )
        per_spec[spec.id] = sets
        a, b, sa, sb = sets
        rows.append(ReportRow("corner_case", str(spec.id), len(a), len(b), len(a), len(b), len(sa), len(sb),
                              label=spec.description, compiled=bool(entries)))

    layers, levels = {}, {}
    for spec in specs:
        for cls in spec.classifications:
            layers.setdefault(str(cls.layer), []).append(per_spec[spec.id])
            levels.setdefault(str(cls), []).append(per_spec[spec.id])
    rows.extend(_grouped_row("layer", k, v) for k, v in layers.items())
    rows.extend(_grouped_row("level", k, v) for k, v in levels.items())
    return CornerCaseReport(tuple(rows), result.summary)


def load_report(doc: dict) -> CornerCaseReport:
    jsonio.check_version(doc, "report")
    summary = jsonio.field(doc, "summary", "report", dict)
    rows = tuple(ReportRow.from_json(r) for r in jsonio.field(doc, "rows", "report", list))
    return CornerCaseReport(rows, tuple(sorted(summary.items())))


def _ratio_text(ratio: Optional[float]) -> str:
    return "" if ratio is None else repr(ratio)


def write_report(report: CornerCaseReport, fmt: str = "json") -> str:
    """Render the report as ``json`` (full) or ``csv`` (flat rows)."""
    if fmt == "json":
        return jsonio.dumps(report.to_json())
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in report.rows:
            writer.writerow([r.scope, r.key, r.a_priori, r.a_posteriori, _ratio_text(r.ratio)])
        return buf.getvalue()
    raise UnsupportedFormat(f"unsupported report format {fmt!r} (use json or csv)")
