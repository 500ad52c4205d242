"""Exception hierarchy.

Everything derived from :class:`CornerForgeError` is a validation failure
(CLI exit code 1). I/O problems surface as plain :class:`OSError` (exit 2).
"""

from __future__ import annotations


class CornerForgeError(Exception):
    """Base class for all validation errors raised by the pipeline."""


class UnknownToken(CornerForgeError):
    pass


class IllegalCombination(CornerForgeError):
    pass


class OutOfScopeLayer(UnknownToken):
    """Temporal and Method layers are recognised but deliberately unsupported."""


class EmptySet(CornerForgeError):
    pass


class MissingColumn(CornerForgeError):
    pass


class DuplicateConflict(CornerForgeError):
    pass


class MalformedDocument(CornerForgeError):
    pass


class VersionMismatch(MalformedDocument):
    pass


class DanglingReference(CornerForgeError):
    pass


class CyclicSubclass(CornerForgeError):
    pass


class MalformedRange(CornerForgeError):
    pass


class UnresolvedSceneRef(CornerForgeError):
    pass


class UnknownClass(CornerForgeError):
    pass


class UnitMismatch(CornerForgeError):
    pass


class OverrideError(CornerForgeError):
    pass


class DuplicateId(CornerForgeError):
    pass


class NonMonotonicTimestamps(CornerForgeError):
    pass


class MissingMapping(CornerForgeError):
    def __init__(self, classes):
        self.classes = sorted(classes)
        super().__init__("no label mapping for: " + ", ".join(self.classes))


class MissingAttribute(CornerForgeError):
    pass


class UnknownSample(CornerForgeError):
    pass


class NonFiniteCost(CornerForgeError):
    pass


class IdMismatch(CornerForgeError):
    pass


class UnsupportedFormat(CornerForgeError):
    pass


class InfeasibleSpec(CornerForgeError):
    pass
