"""Class-wise center-distance matching of detections to ground truth.

Ground truth and detections of one sample are grouped by label, paired by a
minimum-cost assignment on xy center distance, and pairs farther apart than
the gate are split back into a false negative and a false positive.
"""

from __future__ import annotations

import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from . import jsonio
from .dataset import Annotation, DatasetIndex
from .errors import MalformedDocument, NonFiniteCost, UnknownSample

DEFAULT_THRESHOLD_M = 0.5


# ------------------------------------------------------------- assignment


def _hungarian(cost: list) -> tuple:
    """Square minimum-cost assignment by shortest augmenting paths with potentials.

    Returns ``(row_to_col, u, v)`` where ``u``/``v`` are optimal dual
    potentials: ``cost[i][j] - u[i] - v[j] >= 0`` everywhere and ``== 0`` on
    the returned assignment.
    """
    n = len(cost)
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    owner = [0] * (n + 1)  # owner[j]: 1-based row assigned to column j, 0 = free
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = owner[j0]
            row = cost[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[owner[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    row_to_col = [0] * n
    for j in range(1, n + 1):
        row_to_col[owner[j] - 1] = j - 1
    return row_to_col, u[1:], v[1:]


def _lexicographic_min(tight: list, row_to_col: list) -> list:
    """Smallest perfect matching (row by row, lowest column first) inside ``tight``.

    ``row_to_col`` must already be a perfect matching using only tight edges.
    """
    n = len(tight)
    match = list(row_to_col)
    owner = [0] * n
    for r, c in enumerate(match):
        owner[c] = r
    fixed_col = [False] * n

    def reroute(r: int, target: int, seen: list) -> bool:
        # alternating path from row r to the freed column `target`, rows/cols beyond the fixed prefix only
        for c in tight[r]:
            if fixed_col[c] or seen[c]:
                continue
            seen[c] = True
            if c == target or reroute(owner[c], target, seen):
                match[r] = c
                owner[c] = r
                return True
        return False

    for i in range(n):
        for c in tight[i]:
            if fixed_col[c]:
                continue
            if match[i] == c:
                break
            freed = match[i]
            displaced = owner[c]
            seen = [False] * n
            seen[c] = True
            saved = (list(match), list(owner))
            fixed_col[c] = True  # c is taken by row i for the duration of the search
            if reroute(displaced, freed, seen):
                match[i] = c
                owner[c] = i
                fixed_col[c] = False
                break
            fixed_col[c] = False
            match[:], owner[:] = saved
        fixed_col[match[i]] = True
    return match


def solve_assignment(cost) -> list:
    """Minimum-cost maximum matching of an n x m cost matrix.

    Returns ``min(n, m)`` ``(row, col)`` pairs sorted by row. Among equal-cost
    optima the lexicographically smallest pair list is returned, so results
    do not depend on solver internals.
    """
    arr = np.asarray(cost, dtype=float)
    if arr.size == 0:
        return []
    if arr.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteCost("cost matrix contains NaN or infinite entries")
    n, m = arr.shape
    k = max(n, m)
    scale = max(1.0, float(np.abs(arr).max()))
    pad = float(arr.max()) + scale  # strictly larger than any real entry
    square = np.full((k, k), pad)
    square[:n, :m] = arr
    rows = square.tolist()

    row_to_col, u, v = _hungarian(rows)
    eps = 1e-9 * scale
    tight = [[j for j in range(k) if rows[i][j] - u[i] - v[j] <= eps] for i in range(k)]
    best = _lexicographic_min(tight, row_to_col)

    def total(assign):
        return math.fsum(rows[i][assign[i]] for i in range(k))

    if total(best) > total(row_to_col) + k * eps:  # guard against tolerance drift
        best = row_to_col
    return [(i, best[i]) for i in range(n) if best[i] < m]


def assignment_cost(cost, pairs) -> float:
    arr = np.asarray(cost, dtype=float)
    return math.fsum(arr[i, j] for i, j in pairs)


# --------------------------------------------------------------- matching


@dataclass(frozen=True)
class Detection:
    id: str
    sample_id: str
    label: str
    center: tuple
    score: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise MalformedDocument(f"detection {self.id}: score must lie in [0, 1]")

    def to_json(self) -> dict:
        return {"id": self.id, "sample_id": self.sample_id, "label": self.label,
                "center": list(self.center), "score": self.score}

    @classmethod
    def from_json(cls, doc: dict) -> "Detection":
        what = f"detection {doc.get('id')!r}" if isinstance(doc, dict) else "detection"
        center = jsonio.field(doc, "center", what, list)
        if len(center) != 3 or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in center):
            raise MalformedDocument(f"{what}: center must be three numbers")
        score = doc.get("score", 1.0)
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            raise MalformedDocument(f"{what}: score must be a number")
        return cls(
            jsonio.field(doc, "id", what, str),
            jsonio.field(doc, "sample_id", what, str),
            jsonio.field(doc, "label", what, str),
            tuple(float(c) for c in center),
            float(score),
        )


def load_detections(doc: dict) -> list:
    jsonio.check_version(doc, "detections")
    dets = [Detection.from_json(d) for d in jsonio.field(doc, "detections", "detections", list)]
    ids = [d.id for d in dets]
    if len(set(ids)) != len(ids):
        raise MalformedDocument("duplicate detection ids")
    return sorted(dets, key=lambda d: d.id)


def read_detections(path) -> list:
    return load_detections(jsonio.read_json(path, "detections"))


def detections_to_json(dets: Iterable[Detection]) -> dict:
    return {"version": jsonio.SCHEMA_VERSION, "detections": [d.to_json() for d in sorted(dets, key=lambda d: d.id)]}


@dataclass(frozen=True)
class MatchOutcome:
    sample_id: str
    tp: tuple = ()  # (annotation_id, detection_id, distance_m), sorted
    fn: frozenset = frozenset()
    fp: frozenset = frozenset()
    scene_id: str = ""

    @property
    def tp_annotations(self) -> frozenset:
        return frozenset(a for a, _, _ in self.tp)

    @property
    def tp_detections(self) -> frozenset:
        return frozenset(d for _, d, _ in self.tp)

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "scene_id": self.scene_id,
            "tp": [[a, d, dist] for a, d, dist in self.tp],
            "fn": sorted(self.fn),
            "fp": sorted(self.fp),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MatchOutcome":
        what = "sample outcome"
        tp = []
        for entry in jsonio.field(doc, "tp", what, list):
            if not isinstance(entry, list) or len(entry) != 3:
                raise MalformedDocument(f"{what}: tp entries are [annotation_id, detection_id, distance]")
            tp.append((str(entry[0]), str(entry[1]), float(entry[2])))
        return cls(
            jsonio.field(doc, "sample_id", what, str),
            tuple(sorted(tp)),
            frozenset(jsonio.field(doc, "fn", what, list)),
            frozenset(jsonio.field(doc, "fp", what, list)),
            str(doc.get("scene_id", "")),
        )


def xy_distance(a_center: Sequence[float], b_center: Sequence[float]) -> float:
    return math.hypot(a_center[0] - b_center[0], a_center[1] - b_center[1])


def match_sample(gts: Sequence[Annotation], dets: Sequence[Detection], threshold_m: float = DEFAULT_THRESHOLD_M,
                 sample_id: Optional[str] = None) -> MatchOutcome:
    """Match one sample's ground truth against its detections.

    Assignment is solved per label over all pairs first; pairs farther than
    ``threshold_m`` (closed gate) are then discarded.
    """
    if not threshold_m > 0:
        raise ValueError("threshold_m must be positive")
    if sample_id is None:
        ids = {a.sample_id for a in gts} | {d.sample_id for d in dets}
        sample_id = ids.pop() if len(ids) == 1 else ""
    gt_by_label = defaultdict(list)
    det_by_label = defaultdict(list)
    for a in sorted(gts, key=lambda a: a.id):
        gt_by_label[a.label].append(a)
    for d in sorted(dets, key=lambda d: d.id):
        det_by_label[d.label].append(d)

    tp, fn, fp = [], set(), set()
    for label in sorted(set(gt_by_label) | set(det_by_label)):
        rows, cols = gt_by_label.get(label, []), det_by_label.get(label, [])
        matched_rows, matched_cols = set(), set()
        if rows and cols:
            dist = [[xy_distance(a.center, d.center) for d in cols] for a in rows]
            for i, j in solve_assignment(dist):
                if dist[i][j] <= threshold_m:
                    tp.append((rows[i].id, cols[j].id, dist[i][j]))
                    matched_rows.add(i)
                    matched_cols.add(j)
        fn.update(a.id for i, a in enumerate(rows) if i not in matched_rows)
        fp.update(d.id for j, d in enumerate(cols) if j not in matched_cols)
    return MatchOutcome(sample_id, tuple(sorted(tp)), frozenset(fn), frozenset(fp))


# -------------------------------------------------------------- enrichment


@dataclass(frozen=True)
class EnrichedAnnotation:
    annotation: Annotation
    scene_id: str
    outcome: str  # "TP" or "FN"
    detection_id: Optional[str] = None
    score: Optional[float] = None
    distance: Optional[float] = None

    def to_json(self) -> dict:
        doc = self.annotation.to_json()
        doc.update(scene_id=self.scene_id, outcome=self.outcome, detection_id=self.detection_id,
                   score=self.score, distance=self.distance)
        return doc


@dataclass(frozen=True)
class EnrichedDetection:
    detection: Detection
    outcome: str  # "TP" or "FP"
    annotation_id: Optional[str] = None

    def to_json(self) -> dict:
        doc = self.detection.to_json()
        doc.update(outcome=self.outcome, annotation_id=self.annotation_id)
        return doc


@dataclass(frozen=True)
class Enrichment:
    threshold_m: float
    outcomes: tuple
    annotations: tuple = ()
    detections: tuple = ()

    @property
    def totals(self) -> dict:
        tp = sum(len(o.tp) for o in self.outcomes)
        fn = sum(len(o.fn) for o in self.outcomes)
        fp = sum(len(o.fp) for o in self.outcomes)
        return {"tp": tp, "fn": fn, "fp": fp, "annotations": tp + fn, "detections": tp + fp}

    @property
    def fn_ids(self) -> frozenset:
        out = set()
        for o in self.outcomes:
            out |= o.fn
        return frozenset(out)

    @property
    def annotation_ids(self) -> frozenset:
        out = set()
        for o in self.outcomes:
            out |= o.fn | o.tp_annotations
        return frozenset(out)

    def to_json(self) -> dict:
        return {
            "version": jsonio.SCHEMA_VERSION,
            "threshold_m": self.threshold_m,
            "totals": self.totals,
            "samples": [o.to_json() for o in self.outcomes],
            "annotations": [a.to_json() for a in self.annotations],
            "detections": [d.to_json() for d in self.detections],
        }


def enrich(dataset: DatasetIndex, detections: Iterable[Detection], threshold_m: float = DEFAULT_THRESHOLD_M,
           jobs: int = 1) -> Enrichment:
    """Match every sample and flag every annotation (TP/FN) and detection (TP/FP)."""
    dets_by_sample = defaultdict(list)
    for d in detections:
        if d.sample_id not in dataset.sample_by_id:
            raise UnknownSample(f"detection {d.id!r} references unknown sample {d.sample_id!r}")
        dets_by_sample[d.sample_id].append(d)

    samples = [s.id for s in dataset.samples]

    def run(sid):
        outcome = match_sample(dataset.annotations_of_sample[sid], dets_by_sample.get(sid, []), threshold_m, sid)
        return replace(outcome, scene_id=dataset.scene_of_sample(sid))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run, samples))
    else:
        outcomes = [run(sid) for sid in samples]

    det_by_id = {d.id: d for ds in dets_by_sample.values() for d in ds}
    enriched_anns, enriched_dets = [], []
    for outcome in outcomes:
        pairs = {a: (d, dist) for a, d, dist in outcome.tp}
        back = {d: a for a, d, _ in outcome.tp}
        scene_id = outcome.scene_id
        for ann in dataset.annotations_of_sample[outcome.sample_id]:
            if ann.id in pairs:
                d, dist = pairs[ann.id]
                enriched_anns.append(EnrichedAnnotation(ann, scene_id, "TP", d, det_by_id[d].score, dist))
            else:
                enriched_anns.append(EnrichedAnnotation(ann, scene_id, "FN"))
        for d in sorted(dets_by_sample.get(outcome.sample_id, []), key=lambda d: d.id):
            if d.id in back:
                enriched_dets.append(EnrichedDetection(d, "TP", back[d.id]))
            else:
                enriched_dets.append(EnrichedDetection(d, "FP"))
    return Enrichment(threshold_m, tuple(outcomes), tuple(enriched_anns), tuple(enriched_dets))


def write_enriched(enrichment: Enrichment, path) -> None:
    jsonio.write_json(path, enrichment.to_json())


def load_enriched(doc: dict) -> Enrichment:
    """Read back the per-sample outcomes (the flat enriched rows are not re-parsed)."""
    jsonio.check_version(doc, "enriched file")
    threshold = jsonio.field(doc, "threshold_m", "enriched file")
    outcomes = tuple(MatchOutcome.from_json(o) for o in jsonio.field(doc, "samples", "enriched file", list))
    return Enrichment(float(threshold), tuple(sorted(outcomes, key=lambda o: o.sample_id)))


def read_enriched(path) -> Enrichment:
    return load_enriched(jsonio.read_json(path, "enriched file"))
