import functools
import sys
from importlib import resources

import pytest

from cornerforge import jsonio
from cornerforge.dataset import load_dataset, load_mapping
from cornerforge.extraction import extract_all
from cornerforge.matching import enrich, load_detections
from cornerforge.metrics import compile_metrics
from cornerforge.ontology import inject_meta_classes, load_ontology
from cornerforge.registry import load_registry
from cornerforge.synthgen import acceptance_spec, generate

DATA = resources.files("cornerforge") / "data"
REGISTRY = str(DATA / "registry.csv")
ONTOLOGY = str(DATA / "ontology.json")
MAPPING = str(DATA / "mapping.json")


def base_ontology():
    return load_ontology(jsonio.read_json(ONTOLOGY))


@functools.lru_cache(maxsize=None)
def pipeline(detector="perfect", drop=0.0, jitter=0.0, seed=42):
    """Everything downstream of one synthetic acceptance dataset, cached per detector."""
    specs = load_registry(REGISTRY)
    ont = inject_meta_classes(base_ontology(), specs)
    metrics = compile_metrics(ont, specs)
    ds_doc, det_doc, plant = generate(acceptance_spec(detector, drop, jitter, seed))
    dataset = load_dataset(ds_doc)
    mapping = load_mapping(jsonio.read_json(MAPPING), ont, metrics)
    hits = extract_all(metrics, dataset, mapping)
    enrichment = enrich(dataset, load_detections(det_doc))
    return {
        "specs": specs, "ontology": ont, "metrics": metrics, "dataset": dataset, "mapping": mapping,
        "hits": hits, "enrichment": enrichment, "plant": plant, "dataset_doc": ds_doc, "detections_doc": det_doc,
    }


@pytest.fixture
def specs():
    return load_registry(REGISTRY)


@pytest.fixture
def ontology(specs):
    return inject_meta_classes(base_ontology(), specs)


@pytest.fixture
def metrics(ontology, specs):
    return compile_metrics(ontology, specs)


def mini_dataset(samples, scene_text="", heading=0.0, speed=10.0):
    """Dataset doc from ``{sample_id: [(label, x, y, heading), ...]}`` in one scene."""
    doc = {"version": "1", "scenes": [{"id": "sc", "description": scene_text, "split": "val"}],
           "samples": [], "annotations": []}
    for k, (sid, objs) in enumerate(sorted(samples.items())):
        doc["samples"].append({"id": sid, "scene_id": "sc", "timestamp": k, "ego": {"speed": speed, "heading": heading}})
        for j, (label, x, y, h) in enumerate(objs):
            doc["annotations"].append({"id": f"{sid}-a{j:02d}", "sample_id": sid, "label": label,
                                       "center": [x, y, 0.0], "size": [1.0, 1.0, 1.0], "heading": h})
    return doc


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(acceptance.RESULTS):
        title, ok, detail = acceptance.RESULTS[number]
        terminalreporter.write_line(acceptance.format_line(number, title, ok, detail))
