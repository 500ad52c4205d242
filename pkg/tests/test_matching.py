import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cornerforge.dataset import Annotation
from cornerforge.errors import NonFiniteCost, UnknownSample
from cornerforge.matching import (
    Detection, assignment_cost, enrich, load_detections, detections_to_json, load_enriched, match_sample,
    solve_assignment,
)

from conftest import pipeline


def brute_force(cost):
    """Minimum total over all injective maps of the smaller side; returns (cost, lexicographically first pairs)."""
    n, m = len(cost), len(cost[0]) if cost else 0
    best = None
    if n <= m:
        for cols in itertools.permutations(range(m), n):
            pairs = list(enumerate(cols))
            key = (math.fsum(cost[i][j] for i, j in pairs), pairs)
            best = key if best is None or key < best else best
    else:
        for rows in itertools.permutations(range(n), m):
            pairs = sorted((r, j) for j, r in enumerate(rows))
            key = (math.fsum(cost[i][j] for i, j in pairs), pairs)
            best = key if best is None or key < best else best
    return best


def gt(id_, x, y=0.0, label="car", sample="s"):
    return Annotation(id_, sample, label, (x, y, 0.0), (1.0, 1.0, 1.0), 0.0)


def det(id_, x, y=0.0, label="car", sample="s"):
    return Detection(id_, sample, label, (x, y, 0.0), 0.9)


def test_trivial():
    assert solve_assignment([[0]]) == [(0, 0)]
    assert solve_assignment([]) == []


def test_three_by_three():
    cost = [[4, 1, 3], [2, 0, 5], [3, 2, 2]]
    pairs = solve_assignment(cost)
    assert pairs == [(0, 1), (1, 0), (2, 2)]
    assert assignment_cost(cost, pairs) == 5 == brute_force(cost)[0]


def test_tall_matrix_leaves_row_unassigned():
    cost = [[1, 2], [2, 1], [3, 3]]
    pairs = solve_assignment(cost)
    assert pairs == [(0, 0), (1, 1)]
    assert assignment_cost(cost, pairs) == 2


def test_non_finite():
    with pytest.raises(NonFiniteCost):
        solve_assignment([[1.0, float("nan")]])
    with pytest.raises(NonFiniteCost):
        solve_assignment([[float("inf")]])


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.data())
def test_optimal_and_lexicographic(n, m, data):
    cost = data.draw(st.lists(st.lists(st.integers(0, 4), min_size=m, max_size=m), min_size=n, max_size=n))
    pairs = solve_assignment(cost)
    best_cost, best_pairs = brute_force(cost)
    assert len(pairs) == min(n, m)
    assert len({i for i, _ in pairs}) == len({j for _, j in pairs}) == len(pairs)
    assert assignment_cost(cost, pairs) == best_cost
    assert pairs == best_pairs


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
def test_agrees_with_scipy(n, m, seed):
    scipy_opt = pytest.importorskip("scipy.optimize")
    cost = np.random.default_rng(seed).normal(size=(n, m)) * 100
    r, c = scipy_opt.linear_sum_assignment(cost)
    assert abs(assignment_cost(cost, solve_assignment(cost)) - cost[r, c].sum()) <= 1e-9


def test_gate_pass():
    out = match_sample([gt("g", 0)], [det("d", 0.3)])
    assert out.tp == (("g", "d", pytest.approx(0.3)),)
    assert out.fn == out.fp == frozenset()


def test_gate_fail():
    out = match_sample([gt("g", 0)], [det("d", 1.0)])
    assert out.tp == () and out.fn == {"g"} and out.fp == {"d"}


def test_class_mismatch():
    out = match_sample([gt("g", 0)], [det("d", 0.1, label="pedestrian")])
    assert out.tp == () and out.fn == {"g"} and out.fp == {"d"}


def test_nearest_assignment():
    gts = [gt("g0", 0.0), gt("g1", 0.6)]
    out = match_sample(gts, [det("d", 0.35)])
    # brute force over both pairings: |0.35-0|=0.35 vs |0.6-0.35|=0.25
    assert out.tp_annotations == {"g1"} and out.fn == {"g0"} and out.fp == frozenset()


def test_gate_is_closed():
    out = match_sample([gt("g", 0)], [det("d", 0.5)])
    assert out.tp_annotations == {"g"}
    assert match_sample([gt("g", 0)], [det("d", 0.5000001)]).fn == {"g"}


def test_gate_after_assignment():
    # g1-d1 is part of the optimal assignment but lies outside the gate
    gts = [gt("g0", 0.0), gt("g1", 1.0)]
    dets = [det("d0", 0.4), det("d1", 5.0)]
    out = match_sample(gts, dets)
    assert out.tp_annotations == {"g0"}
    assert out.fn == {"g1"} and out.fp == {"d1"}


scene_objects = st.lists(
    st.tuples(st.sampled_from(["car", "pedestrian"]), st.floats(-5, 5), st.floats(-5, 5)), max_size=6)


@settings(max_examples=200, deadline=None)
@given(scene_objects, scene_objects, st.floats(0.1, 2.0))
def test_conservation(gobjs, dobjs, thr):
    gts = [gt(f"g{i}", x, y, lab) for i, (lab, x, y) in enumerate(gobjs)]
    dets = [det(f"d{i}", x, y, lab) for i, (lab, x, y) in enumerate(dobjs)]
    out = match_sample(gts, dets, thr)
    assert len(gts) == len(out.tp) + len(out.fn)
    assert len(dets) == len(out.tp) + len(out.fp)
    assert all(dist <= thr for _, _, dist in out.tp)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 6), st.integers(0, 6), st.floats(-100, 100), st.floats(-100, 100))
def test_translation_and_relabeling(seed, n_gt, n_det, dx, dy):
    # continuous positions: distinct assignment costs tie with probability zero
    rng = random.Random(seed)
    labels = ("car", "pedestrian")
    gobjs = [(rng.choice(labels), rng.uniform(-2, 2), rng.uniform(-2, 2)) for _ in range(n_gt)]
    dobjs = [(rng.choice(labels), rng.uniform(-2, 2), rng.uniform(-2, 2)) for _ in range(n_det)]
    gts = [gt(f"g{i}", x, y, lab) for i, (lab, x, y) in enumerate(gobjs)]
    dets = [det(f"d{i}", x, y, lab) for i, (lab, x, y) in enumerate(dobjs)]
    base = match_sample(gts, dets)
    pairs = {(a, d) for a, d, _ in base.tp}

    moved = match_sample([gt(a.id, a.center[0] + dx, a.center[1] + dy, a.label) for a in gts],
                         [det(d.id, d.center[0] + dx, d.center[1] + dy, d.label) for d in dets])
    assert {(a, d) for a, d, _ in moved.tp} == pairs

    gperm, dperm = list(range(n_gt)), list(range(n_det))
    rng.shuffle(gperm)
    rng.shuffle(dperm)
    gname = {f"g{i}": f"h{gperm[i]}" for i in range(n_gt)}
    dname = {f"d{i}": f"e{dperm[i]}" for i in range(n_det)}
    renamed = match_sample([gt(gname[a.id], a.center[0], a.center[1], a.label) for a in gts],
                           [det(dname[d.id], d.center[0], d.center[1], d.label) for d in dets])
    assert {(a, d) for a, d, _ in renamed.tp} == {(gname[a], dname[d]) for a, d in pairs}
    assert renamed.fn == {gname[a] for a in base.fn}
    assert renamed.fp == {dname[d] for d in base.fp}


def test_exact_ties_follow_lexicographic_rule():
    # three optimal assignments of total 2; the smallest (row, col) pair list wins
    gts = [gt("g0", 0.0), gt("g1", 0.0), gt("g2", -1.0)]
    dets = [det("d0", 0.0), det("d1", -1.0), det("d2", -2.0)]
    out = match_sample(gts, dets)
    assert [(a, d) for a, d, _ in out.tp] == [("g0", "d0")]
    assert out.fn == {"g1", "g2"}
    assert match_sample(gts, dets) == out


def test_perfect_and_empty_detections():
    p = pipeline()
    totals = p["enrichment"].totals
    n = len(p["dataset"].annotations)
    assert totals == {"tp": n, "fn": 0, "fp": 0, "annotations": n, "detections": n}
    empty = enrich(p["dataset"], [])
    assert empty.fn_ids == {a.id for a in p["dataset"].annotations}


def test_degraded_fn_equals_drop_log():
    p = pipeline("degraded", 0.3, 0.2)
    n = len(p["dataset"].annotations)
    assert p["enrichment"].fn_ids == p["plant"].dropped
    assert len(p["plant"].dropped) == math.floor(0.3 * n)
    assert p["enrichment"].totals["fp"] == 0


def test_unknown_sample_rejected():
    p = pipeline()
    with pytest.raises(UnknownSample):
        enrich(p["dataset"], [Detection("x", "nope", "car", (0, 0, 0), 0.5)])


def test_jobs_and_round_trip():
    p = pipeline("degraded", 0.3, 0.2)
    dets = load_detections(p["detections_doc"])
    assert detections_to_json(dets) == p["detections_doc"]
    assert enrich(p["dataset"], dets, jobs=4).to_json() == p["enrichment"].to_json()
    again = load_enriched(p["enrichment"].to_json())
    assert again.outcomes == p["enrichment"].outcomes
