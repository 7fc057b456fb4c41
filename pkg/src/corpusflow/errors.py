"""Engine error hierarchy.

Every error carries a stable machine-readable ``code`` (the class name) so the
service layer and the CLI's --json-errors mode can surface them verbatim.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine-level failures."""

    @property
    def code(self) -> str:
        return type(self).__name__

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self)}


# corpus
class DuplicateId(EngineError):
    pass


class MissingField(EngineError):
    pass


class MalformedRecord(EngineError):
    pass


class NotFound(EngineError):
    pass


# embedding
class EmptyText(EngineError):
    pass


class DimMismatch(EngineError):
    pass


class ProviderUnavailable(EngineError):
    pass


class EmptyControl(EngineError):
    pass


class DegenerateMean(EngineError):
    pass


# query
class ParseError(EngineError):
    def __init__(self, message: str, position: int, expected: tuple[str, ...] = ()):
        super().__init__(message)
        self.position = position
        self.expected = expected

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["position"] = self.position
        d["expected"] = list(self.expected)
        return d


class PureNegation(EngineError):
    pass


# graph
class InvalidConfig(EngineError):
    pass


class WouldCycle(EngineError):
    pass


class IllegalPort(EngineError):
    pass


class DuplicateEdge(EngineError):
    pass


class AlreadyMember(EngineError):
    pass


class UpstreamError(EngineError):
    pass


# operators / projection
class ArityError(EngineError):
    pass


class TooFewDocs(EngineError):
    pass


class Cancelled(EngineError):
    """A background job was superseded before it could commit."""


# provenance
class NothingToUndo(EngineError):
    pass


class NothingToRedo(EngineError):
    pass


class CorruptLog(EngineError):
    def __init__(self, message: str, last_good_seq: int, good_events: list | None = None):
        super().__init__(message)
        self.last_good_seq = last_good_seq
        self.good_events = good_events if good_events is not None else []

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["last_good_seq"] = self.last_good_seq
        return d


class StorageFailure(EngineError):
    pass


# cli / workflow
class SchemaError(EngineError):
    pass
