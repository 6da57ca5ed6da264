"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: DataError -> 2, JudgeError -> 3.
"""

from __future__ import annotations


class ArbiterError(Exception):
    """Base class for all toolkit errors."""


class DataError(ArbiterError):
    """Invalid, inconsistent, or insufficient input data."""


class IngestError(DataError):
    """A dataset file could not be parsed or violates schema constraints."""


class InsufficientSamplesError(DataError):
    """Curation left fewer samples than the policy requires."""

    def __init__(self, kept: int, min_samples: int):
        super().__init__(f"curation kept {kept} samples, policy requires at least {min_samples}")
        self.kept = kept
        self.min_samples = min_samples


class ArtifactCollisionError(DataError):
    """An artifact name is already present in the run manifest."""


class IntegrityError(DataError):
    """A stored artifact does not match its recorded content hash."""


class JudgeError(ArbiterError):
    """Base class for judge request/response failures."""


class ArityError(JudgeError):
    """Candidate count does not match the evaluation mode."""


class VerdictParseError(JudgeError):
    """The judge reply could not be parsed into a structured verdict."""


class IncompleteRankingError(VerdictParseError):
    """A listwise reply is not a complete permutation of the presented labels."""


class UnknownLabelError(VerdictParseError):
    """The judge reply references a label that was never presented."""


class ScoreOutOfRangeError(VerdictParseError):
    """A pointwise score falls outside the [0, 1] scale."""


class JudgeBackendError(JudgeError):
    """Transport-level failure talking to a judge backend."""
