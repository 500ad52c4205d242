import pytest
from hypothesis import given, strategies as st

from cornerforge.errors import EmptySet, IllegalCombination, OutOfScopeLayer, UnknownToken
from cornerforge.taxonomy import (
    Classification, FusionStage, Layer, Level, Sensor, SensorSources, SubLevel,
    parse_classification, parse_fusion, parse_sources,
)

LEGAL = [
    Classification(Layer.SENSOR, lvl, sub)
    for lvl in (Level.PHYSICAL, Level.HARDWARE)
    for sub in (None, SubLevel.GLOBAL_OUTLIER, SubLevel.LOCAL_OUTLIER)
] + [
    Classification(Layer.CONTENT, Level.DOMAIN),
    Classification(Layer.CONTENT, Level.OBJECT),
] + [Classification(Layer.CONTENT, Level.SCENE, s) for s in (None, SubLevel.COLLECTIVE, SubLevel.CONTEXTUAL)]


def test_physical_global_outlier():
    c = parse_classification("Sensor", "Physical - Global Outlier")
    assert (c.layer, c.level, c.sublevel) == (Layer.SENSOR, Level.PHYSICAL, SubLevel.GLOBAL_OUTLIER)


def test_content_object_has_no_sublevel():
    c = parse_classification("Content", "Object")
    assert (c.layer, c.level, c.sublevel) == (Layer.CONTENT, Level.OBJECT, None)


def test_domain_under_sensor_is_illegal():
    with pytest.raises(IllegalCombination):
        parse_classification("Sensor", "Domain")


@pytest.mark.parametrize("layer,level", [("Temporal", "Scenario"), ("Method", "Object"), ("Content", "Scenario")])
def test_out_of_scope_layers(layer, level):
    with pytest.raises(OutOfScopeLayer):
        parse_classification(layer, level)


@pytest.mark.parametrize("layer,level", [("Sensorz", "Physical"), ("Content", "Blob"), ("Content", "Object - Foo"), ("", "Object")])
def test_unknown_tokens(layer, level):
    with pytest.raises(UnknownToken):
        parse_classification(layer, level)


def test_sublevel_legality():
    with pytest.raises(IllegalCombination):
        Classification(Layer.CONTENT, Level.OBJECT, SubLevel.COLLECTIVE)
    with pytest.raises(IllegalCombination):
        Classification(Layer.SENSOR, Level.PHYSICAL, SubLevel.CONTEXTUAL)


@pytest.mark.parametrize("text,expected", [
    ("R/V/L", {Sensor.RADAR, Sensor.VIDEO, Sensor.LIDAR}),
    ("V", {Sensor.VIDEO}),
    ("v/r", {Sensor.VIDEO, Sensor.RADAR}),
])
def test_parse_sources(text, expected):
    assert set(parse_sources(text)) == expected


def test_sources_canonical_order_and_errors():
    assert str(parse_sources("l/v/r")) == "R/V/L"
    with pytest.raises(EmptySet):
        parse_sources("")
    with pytest.raises(UnknownToken):
        parse_sources("R/X")


def test_parse_fusion():
    assert parse_fusion("single") is FusionStage.SINGLE
    assert parse_fusion(" Multi ") is FusionStage.MULTI
    with pytest.raises(UnknownToken):
        parse_fusion("Both")


@given(st.sampled_from(list(Layer)), st.sampled_from(list(Level)), st.sampled_from([None, *SubLevel]))
def test_every_constructible_classification_is_legal(layer, level, sub):
    try:
        c = Classification(layer, level, sub)
    except IllegalCombination:
        return
    assert c in LEGAL
    assert not (c.layer is Layer.SENSOR and c.level in (Level.DOMAIN, Level.OBJECT, Level.SCENE))
    assert not (c.layer is Layer.CONTENT and c.level in (Level.PHYSICAL, Level.HARDWARE))
    assert not (c.level in (Level.DOMAIN, Level.OBJECT) and c.sublevel is not None)


@given(st.sampled_from(LEGAL))
def test_classification_round_trip(c):
    assert parse_classification(str(c.layer), c.level_text) == c
    assert Classification.from_json(c.to_json()) == c


@given(st.sets(st.sampled_from(list(Sensor)), min_size=1))
def test_sources_round_trip(members):
    src = SensorSources(frozenset(members))
    assert parse_sources(str(src)) == src
