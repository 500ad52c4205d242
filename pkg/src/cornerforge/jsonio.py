"""Canonical JSON reading and writing shared by every file format."""

from __future__ import annotations

import json
import os

from .errors import MalformedDocument, VersionMismatch

SCHEMA_VERSION = "1"


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(path, doc) -> None:
    path = os.fspath(path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(doc))


def loads(text: str, what: str = "document"):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"{what} is not valid JSON: {exc}") from None


def read_json(path, what: str = None):
    path = os.fspath(path)
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), what or path)


def check_version(doc, what: str, required: bool = True) -> None:
    if not isinstance(doc, dict):
        raise MalformedDocument(f"{what}: top level must be an object")
    if "version" not in doc:
        if required:
            raise MalformedDocument(f"{what}: missing 'version'")
        return
    if str(doc["version"]) != SCHEMA_VERSION:
        raise VersionMismatch(f"{what}: unsupported version {doc['version']!r} (expected {SCHEMA_VERSION!r})")


def field(doc: dict, key: str, what: str, kind=None):
    """Fetch a required key, raising :class:`MalformedDocument` with context."""
    try:
        value = doc[key]
    except (KeyError, TypeError):
        raise MalformedDocument(f"{what}: missing {key!r}") from None
    if kind is not None and not isinstance(value, kind):
        raise MalformedDocument(f"{what}: {key!r} has the wrong type")
    return value
