"""Exception hierarchy shared by all engine modules.

Every error carries a stable kebab-case ``code`` (used in API error bodies)
and an optional ``stage`` tag set by pipeline drivers so callers can see
where a multi-stage operation failed.
"""

from __future__ import annotations

import re

_CAMEL_SPLIT = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")


class CounselGraphError(Exception):
    """Base class for all engine errors."""

    stage: str | None

    def __init__(self, message: str = "", *, stage: str | None = None):
        super().__init__(message)
        self.stage = stage

    @property
    def code(self) -> str:
        return _CAMEL_SPLIT.sub("-", type(self).__name__).lower()


def tag_stage(err: CounselGraphError, stage: str) -> CounselGraphError:
    """Attach a pipeline stage name to an error, keeping its type."""
    if err.stage is None:
        err.stage = stage
    return err


# --- graph ------------------------------------------------------------------

class DuplicateId(CounselGraphError):
    pass


class EmptyText(CounselGraphError):
    pass


class UnknownEndpoint(CounselGraphError):
    pass


class KindMismatch(CounselGraphError):
    pass


class CausalCycle(CounselGraphError):
    pass


class DuplicateEdge(CounselGraphError):
    pass


class UnknownNode(CounselGraphError):
    pass


class MalformedFile(CounselGraphError):
    pass


class SchemaVersionMismatch(CounselGraphError):
    pass


# --- vector index / embeddings ----------------------------------------------

class DimensionMismatch(CounselGraphError):
    pass


class ZeroVector(CounselGraphError):
    pass


class MixedKinds(CounselGraphError):
    pass


class EmbedderFailure(CounselGraphError):
    pass


# --- providers ---------------------------------------------------------------

class ProviderUnavailable(CounselGraphError):
    pass


class RateLimited(ProviderUnavailable):
    pass


# --- construction ------------------------------------------------------------

class UnparseableLine(CounselGraphError):
    def __init__(self, message: str = "", *, line_number: int | None = None,
                 stage: str | None = None):
        super().__init__(message, stage=stage)
        self.line_number = line_number


class TooFewTurns(CounselGraphError):
    pass


class ExtractionParseError(CounselGraphError):
    pass


class MalformedCorpusFile(CounselGraphError):
    pass


# --- retrieval / generation --------------------------------------------------

class AllCandidatesEmpty(CounselGraphError):
    pass


# --- evaluation ---------------------------------------------------------------

class JudgeParseError(CounselGraphError):
    pass


class EmptyInput(CounselGraphError):
    pass
