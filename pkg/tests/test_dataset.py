import math

import pytest
from hypothesis import given, strategies as st

from cornerforge import jsonio
from cornerforge.dataset import load_dataset, load_mapping, resolve_labels, wrap_angle, write_dataset, read_dataset
from cornerforge.errors import (
    DanglingReference, DuplicateId, MalformedDocument, MissingMapping, NonMonotonicTimestamps, UnknownClass,
)

from conftest import MAPPING, base_ontology


def fixture_doc():
    doc = {"version": "1", "scenes": [], "samples": [], "annotations": []}
    for s in range(2):
        doc["scenes"].append({"id": f"s{s}", "description": "", "split": "train"})
        for k in range(2):
            sid = f"s{s}-{k}"
            doc["samples"].append({"id": sid, "scene_id": f"s{s}", "timestamp": k * 10, "ego": {"speed": 1.0, "heading": 0.0}})
    for n, sid in enumerate(["s0-0", "s0-0", "s0-1", "s1-0", "s1-1", "s1-1"]):
        doc["annotations"].append({"id": f"a{n}", "sample_id": sid, "label": "car",
                                   "center": [n, 0, 0], "size": [1, 1, 1], "heading": 0.0})
    return doc


def test_counts():
    idx = load_dataset(fixture_doc())
    assert (len(idx.scenes), len(idx.samples), len(idx.annotations)) == (2, 4, 6)
    assert [a.id for a in idx.annotations_of_sample["s1-1"]] == ["a4", "a5"]
    assert idx.scene_of_sample("s1-0") == "s1"


def test_dangling_annotation():
    doc = fixture_doc()
    doc["annotations"][0]["sample_id"] = "nope"
    with pytest.raises(DanglingReference):
        load_dataset(doc)


def test_dangling_sample():
    doc = fixture_doc()
    doc["samples"][0]["scene_id"] = "nope"
    with pytest.raises(DanglingReference):
        load_dataset(doc)


def test_timestamps_out_of_order():
    doc = fixture_doc()
    doc["samples"][1]["timestamp"] = 0
    with pytest.raises(NonMonotonicTimestamps):
        load_dataset(doc)


def test_duplicate_ids():
    doc = fixture_doc()
    doc["annotations"][1]["id"] = "a0"
    with pytest.raises(DuplicateId):
        load_dataset(doc)


@pytest.mark.parametrize("path,value", [
    (("samples", 0, "ego", "speed"), -1.0),
    (("samples", 0, "ego", "heading"), -math.pi),
    (("samples", 0, "timestamp"), 1.5),
    (("scenes", 0, "split"), "test"),
    (("annotations", 0, "size"), [1, 0, 1]),
])
def test_field_validation(path, value):
    doc = fixture_doc()
    target = doc
    for key in path[:-1]:
        target = target[key]
    target[path[-1]] = value
    with pytest.raises(MalformedDocument):
        load_dataset(doc)


def test_write_read_round_trip(tmp_path):
    idx = load_dataset(fixture_doc())
    write_dataset(idx, tmp_path / "d.json")
    assert read_dataset(tmp_path / "d.json") == idx


@given(st.randoms(use_true_random=False))
def test_input_order_irrelevant(rnd):
    doc = fixture_doc()
    for key in ("scenes", "samples", "annotations"):
        rnd.shuffle(doc[key])
    assert load_dataset(doc) == load_dataset(fixture_doc())


def test_truck_variants_share_label(ontology, metrics):
    m = load_mapping(jsonio.read_json(MAPPING), ontology, metrics)
    for cls in ("FoodTruck", "HeavyTransport", "PostVehicle"):
        assert resolve_labels(m, cls) == {"truck"}


def test_missing_mapping_names_class(ontology):
    doc = jsonio.read_json(MAPPING)
    del doc["classes"]["TrafficCone"]
    with pytest.raises(MissingMapping) as err:
        load_mapping(doc, ontology, ["TrafficCone"])
    assert "TrafficCone" in str(err.value)


def test_child_resolves_via_parent():
    ont = base_ontology()
    m = load_mapping({"version": "1", "classes": {"Vehicle": ["car", "truck", "bus"]}}, ont, ["Truck"])
    assert resolve_labels(m, "Truck") == {"car", "truck", "bus"}
    assert resolve_labels(m, "Pedestrian") == frozenset()


def test_unknown_classes():
    ont = base_ontology()
    with pytest.raises(UnknownClass):
        load_mapping({"version": "1", "classes": {"Ufo": ["x"]}}, ont)
    m = load_mapping({"version": "1", "classes": {}}, ont)
    with pytest.raises(UnknownClass):
        resolve_labels(m, "Ufo")


@given(st.data())
def test_resolution_is_idempotent_and_nearest(data):
    ont = base_ontology()
    m = load_mapping(jsonio.read_json(MAPPING), ont)
    cls = data.draw(st.sampled_from([c.name for c in ont.classes]))
    first = resolve_labels(m, cls)
    assert resolve_labels(m, cls) == first
    direct = dict(m.direct)
    chain = [cls, *ont.ancestors(cls)]
    nearest = next((direct[c] for c in chain if c in direct), frozenset())
    assert first == nearest


@given(st.floats(-50, 50, allow_nan=False))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)
