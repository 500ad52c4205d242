"""Command line entry point.

Each subcommand is one pipeline stage reading and writing files::

    ingest   registry + base ontology        -> ontology.json
    compile  registry + ontology              -> metrics.json
    extract  metrics + dataset + mapping      -> hits.json
    enrich   dataset + detections             -> enriched.json
    evaluate hits + enriched                  -> aposteriori.json
    report   aposteriori + registry           -> report.json / report.csv
    synth    synthspec.json                   -> dataset.json, detections.json, plantlog.json
    run-all  everything from ingest to report

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import jsonio
from .dataset import read_dataset, read_mapping
from .errors import CornerForgeError
from .evaluation import aggregate, derive_a_posteriori, read_aposteriori, write_aposteriori, write_report
from .extraction import extract_all, read_hits, write_hits
from .matching import DEFAULT_THRESHOLD_M, enrich, read_detections, read_enriched, write_enriched
from .metrics import compile_metrics, read_metrics, write_metrics
from .ontology import inject_meta_classes, read_ontology, write_ontology
from .registry import load_registry, validate_registry
from .synthgen import SynthSpec, write_outputs

log = logging.getLogger("cornerforge")

OUTPUT_NAMES = {
    "ontology": "ontology.json",
    "metrics": "metrics.json",
    "hits": "hits.json",
    "enriched": "enriched.json",
    "aposteriori": "aposteriori.json",
}


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise _UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


class _UsageError(CornerForgeError):
    pass


def _path(args, name: str) -> str:
    """Explicit flag value, else the stage's default file in --out."""
    value = getattr(args, name, None)
    return value if value is not None else os.path.join(args.out, OUTPUT_NAMES[name])


def _out(args, name: str) -> str:
    return os.path.join(args.out, OUTPUT_NAMES[name])


def cmd_ingest(args) -> None:
    _require(args, "registry", "ontology")
    specs = load_registry(args.registry)
    for diag in validate_registry(specs):
        log.warning("%s", diag)
    ont = inject_meta_classes(read_ontology(args.ontology), specs)
    write_ontology(ont, _out(args, "ontology"))
    log.info("wrote %s with %d meta links", _out(args, "ontology"), len(ont.meta))


def cmd_compile(args) -> None:
    _require(args, "registry")
    specs = load_registry(args.registry)
    metrics = compile_metrics(read_ontology(_path(args, "ontology")), specs)
    write_metrics(metrics, _out(args, "metrics"))
    log.info("compiled %d metrics", len(metrics.metrics))


def _mapping(args, metrics):
    _require(args, "mapping")
    return read_mapping(args.mapping, read_ontology(_path(args, "ontology")), metrics)


def cmd_extract(args) -> None:
    _require(args, "dataset")
    metrics = read_metrics(_path(args, "metrics"))
    mapping = _mapping(args, metrics)
    result = extract_all(metrics, read_dataset(args.dataset), mapping, jobs=args.jobs)
    write_hits(result, _out(args, "hits"))


def cmd_enrich(args) -> None:
    _require(args, "dataset", "detections")
    enrichment = enrich(read_dataset(args.dataset), read_detections(args.detections), args.threshold_m, jobs=args.jobs)
    write_enriched(enrichment, _out(args, "enriched"))
    log.info("TP/FN/FP totals: %s", enrichment.totals)


def cmd_evaluate(args) -> None:
    result = derive_a_posteriori(read_hits(_path(args, "hits")), read_enriched(_path(args, "enriched")))
    write_aposteriori(result, _out(args, "aposteriori"))


def cmd_report(args) -> None:
    _require(args, "registry")
    report = aggregate(read_aposteriori(_path(args, "aposteriori")), load_registry(args.registry))
    formats = ("json", "csv") if args.format == "both" else (args.format,)
    for fmt in formats:
        text = write_report(report, fmt)
        path = os.path.join(args.out, f"report.{fmt}")
        os.makedirs(args.out, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        log.info("wrote %s", path)


def cmd_synth(args) -> None:
    _require(args, "spec")
    write_outputs(SynthSpec.from_json(jsonio.read_json(args.spec, "synth spec")), args.out)


def cmd_run_all(args) -> None:
    _require(args, "registry", "ontology", "mapping", "dataset", "detections")
    base = args.ontology
    cmd_ingest(args)
    args.ontology = None  # later stages read the enriched ontology from --out
    try:
        cmd_compile(args)
        cmd_extract(args)
        cmd_enrich(args)
        cmd_evaluate(args)
        cmd_report(args)
    finally:
        args.ontology = base


COMMANDS = {
    "ingest": cmd_ingest,
    "compile": cmd_compile,
    "extract": cmd_extract,
    "enrich": cmd_enrich,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "synth": cmd_synth,
    "run-all": cmd_run_all,
}


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--registry", help="corner-case registry CSV")
    common.add_argument("--ontology", help="ontology JSON (base for ingest, enriched otherwise; default <out>/ontology.json)")
    common.add_argument("--mapping", help="ontology-to-dataset label mapping JSON")
    common.add_argument("--dataset", help="dataset JSON")
    common.add_argument("--detections", help="detections JSON")
    common.add_argument("--metrics", help="compiled metrics JSON (default <out>/metrics.json)")
    common.add_argument("--hits", help="extraction hits JSON (default <out>/hits.json)")
    common.add_argument("--enriched", help="enriched matching JSON (default <out>/enriched.json)")
    common.add_argument("--aposteriori", help="a-posteriori JSON (default <out>/aposteriori.json)")
    common.add_argument("--spec", help="synthetic data spec JSON (synth only)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--threshold-m", type=_positive_float, default=DEFAULT_THRESHOLD_M,
                        help="matching gate in meters (default 0.5)")
    common.add_argument("--jobs", type=_positive_int, default=1, help="worker threads for extract/enrich")
    common.add_argument("--format", choices=("json", "csv", "both"), default="both", help="report format")

    parser = argparse.ArgumentParser(prog="cornerforge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("CORNERFORGE_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except CornerForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        name = exc.filename or ""
        print(f"error: cannot access {name}: {exc.strerror or exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
