import copy
import math

import pytest
from hypothesis import given, strategies as st

from cornerforge import jsonio
from cornerforge.errors import (
    CyclicSubclass, DanglingReference, DuplicateConflict, MalformedRange, UnknownClass, UnresolvedSceneRef,
)
from cornerforge.ontology import (
    CAUSE_ROOT, NamedRange, RelativeHeading, SceneDescription, Unit, descendants, inject_meta_classes,
    load_ontology, meta_link_for, with_scenes, ClassPresence,
)
from cornerforge.registry import Cause, CornerCaseSpec
from cornerforge.taxonomy import parse_classification, parse_fusion, parse_sources

from conftest import ONTOLOGY, base_ontology


def base_doc():
    return jsonio.read_json(ONTOLOGY)


def test_motion_speed_zero_loads():
    r = base_ontology().range_by_name["MotionSpeed_Zero"]
    assert (r.attribute, r.min, r.max, r.unit) == ("speed", 0.0, 0.54, Unit.KMH)


def test_self_parent_is_cyclic():
    with pytest.raises(CyclicSubclass):
        load_ontology({"classes": [{"name": "A", "parent": "A"}]})


def test_longer_cycle():
    with pytest.raises(CyclicSubclass):
        load_ontology({"classes": [{"name": "A", "parent": "B"}, {"name": "B", "parent": "A"}]})


def test_scene_with_unknown_class():
    doc = {"classes": [], "scenes": [{"name": "S", "predicates": [{"kind": "class_presence", "class": "Vehicle"}]}]}
    with pytest.raises(DanglingReference):
        load_ontology(doc)


def test_unknown_parent():
    with pytest.raises(DanglingReference):
        load_ontology({"classes": [{"name": "A", "parent": "Nope"}]})


def test_bad_range():
    with pytest.raises(MalformedRange):
        NamedRange("R", "speed", 2, 1, Unit.MPS)
    with pytest.raises(MalformedRange):
        RelativeHeading(4.0)


def test_inject_links_spec_one(specs):
    ont = inject_meta_classes(base_ontology(), specs)
    link = meta_link_for(ont, 1, "light of oncoming traffic at night")
    assert link.scene == "NightOncomingTraffic"
    assert link.classifications == {parse_classification("Sensor", "Physical - Global Outlier")}
    assert link.sources == parse_sources("V")
    assert link.fusion is parse_fusion("Single")
    assert ont.parents[link.cause_class] == CAUSE_ROOT


def test_inject_multi_classification(specs):
    ont = inject_meta_classes(base_ontology(), specs)
    assert len(meta_link_for(ont, 5, "rain").classifications) == 2
    assert len(ont.meta) == 7


def test_inject_is_idempotent(specs):
    once = inject_meta_classes(base_ontology(), specs)
    assert inject_meta_classes(once, specs) == once
    assert load_ontology(once.to_json()) == once


def test_inject_preserves_existing_classes(specs):
    base = base_ontology()
    new = inject_meta_classes(base, specs)
    assert set(base.classes) <= set(new.classes)
    assert set(base.ranges) == set(new.ranges)
    assert set(base.scenes) == set(new.scenes)


def test_inject_unknown_scene():
    spec = CornerCaseSpec(9, "d", (Cause("c", "NoSuchScene"),), parse_sources("V"), parse_fusion("Single"),
                          frozenset({parse_classification("Content", "Object")}))
    with pytest.raises(UnresolvedSceneRef):
        inject_meta_classes(base_ontology(), [spec])


def test_inject_refuses_reparent(specs):
    doc = base_doc()
    doc["classes"].append({"name": "Radar", "parent": "Vehicle"})
    with pytest.raises(DuplicateConflict):
        inject_meta_classes(load_ontology(doc), specs)


def test_descendants_examples():
    ont = base_ontology()
    assert descendants(ont, "Bicycle") == {"Bicycle"}
    assert descendants(ont, "Truck") == {"Truck", "FoodTruck", "HeavyTransport", "PostVehicle"}
    with pytest.raises(UnknownClass):
        descendants(ont, "Spaceship")


@given(st.data())
def test_descendant_closure_is_monotone(data):
    ont = base_ontology()
    child = data.draw(st.sampled_from([c.name for c in ont.classes if c.parent is not None]))
    parent = ont.parents[child]
    assert descendants(ont, parent) >= descendants(ont, child) | {parent}


def test_with_scenes_validates():
    ont = base_ontology()
    extra = SceneDescription("Bikes", (ClassPresence("Bicycle"),))
    assert "Bikes" in with_scenes(ont, [extra]).scene_by_name
    with pytest.raises(DanglingReference):
        with_scenes(ont, [SceneDescription("Bad", (ClassPresence("Ufo"),))])


def test_night_scene_requires_oncoming_heading():
    scene = base_ontology().scene_by_name["NightOncomingTraffic"]
    [presence] = [p for p in scene.predicates if isinstance(p, ClassPresence)]
    [flt] = presence.filters
    assert math.isclose(flt.min_abs_delta, 3 * math.pi / 4)
    assert flt.max_abs_delta == pytest.approx(math.pi)


def test_round_trip_document():
    doc = base_doc()
    again = load_ontology(copy.deepcopy(doc)).to_json()
    assert load_ontology(again) == load_ontology(doc)
