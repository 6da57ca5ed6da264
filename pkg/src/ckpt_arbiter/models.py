"""Domain types shared across the pipeline.

All types are immutable value objects; instances validate their invariants
on construction and are safe to share between concurrent tasks. Every type
round-trips through ``to_dict`` / ``from_dict`` without loss.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError

# Checkpoint identifiers are opaque strings; step counts are never parsed.
CheckpointId = str


class OcrQuality(str, enum.Enum):
    READABLE = "readable"
    AMBIGUOUS = "ambiguous"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class EvaluationSample:
    """One multimodal test item: an image locator, a query, and a quality label."""

    sample_id: str
    image_ref: str
    query: str
    ocr_quality: OcrQuality
    language_tag: str | None = None
    tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.sample_id:
            raise DataError("sample_id must be non-empty")
        if not self.query:
            raise DataError("query must be non-empty")
        if not isinstance(self.ocr_quality, OcrQuality):
            object.__setattr__(self, "ocr_quality", OcrQuality(self.ocr_quality))
        if not isinstance(self.tags, tuple):
            object.__setattr__(self, "tags", tuple(self.tags))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "sample_id": self.sample_id,
            "image_ref": self.image_ref,
            "query": self.query,
            "ocr_quality": self.ocr_quality.value,
        }
        if self.language_tag is not None:
            out["language_tag"] = self.language_tag
        if self.tags:
            out["tags"] = list(self.tags)
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> EvaluationSample:
        return cls(
            sample_id=data["sample_id"],
            image_ref=data["image_ref"],
            query=data["query"],
            ocr_quality=OcrQuality(data["ocr_quality"]),
            language_tag=data.get("language_tag"),
            tags=tuple(data.get("tags", ())),
        )


@dataclass(frozen=True)
class CandidateResponse:
    """One checkpoint's answer text for one sample. Empty text is legal."""

    sample_id: str
    checkpoint_id: CheckpointId
    text: str

    def __post_init__(self) -> None:
        if not self.sample_id:
            raise DataError("sample_id must be non-empty")
        if not self.checkpoint_id:
            raise DataError("checkpoint_id must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "checkpoint_id": self.checkpoint_id,
            "text": self.text,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> CandidateResponse:
        return cls(data["sample_id"], data["checkpoint_id"], data["text"])


@dataclass(frozen=True)
class PointwiseVerdict:
    """Absolute score for one (sample, checkpoint) response on the [0, 1] scale."""

    sample_id: str
    checkpoint_id: CheckpointId
    score: float
    rationale: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise DataError(f"score {self.score} outside [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "sample_id": self.sample_id,
            "checkpoint_id": self.checkpoint_id,
            "score": self.score,
        }
        if self.rationale is not None:
            out["rationale"] = self.rationale
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PointwiseVerdict:
        return cls(data["sample_id"], data["checkpoint_id"], data["score"], data.get("rationale"))


def rank_scores_for_ordering(ordering: Sequence[CheckpointId]) -> dict[CheckpointId, float]:
    """Map an ordering (best first) to points: best gets K-1, worst gets 0."""
    k = len(ordering)
    return {c: float(k - pos) for pos, c in enumerate(ordering, start=1)}


@dataclass(frozen=True)
class ListwiseVerdict:
    """A complete joint ordering of the candidates shown for one sample.

    ``rank_scores`` always follows the K - rank convention derived from
    ``ordering``; a verdict over K candidates distributes K(K-1)/2 points.
    """

    sample_id: str
    ordering: tuple[CheckpointId, ...]
    presented_order: tuple[CheckpointId, ...]
    rank_scores: Mapping[CheckpointId, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "ordering", tuple(self.ordering))
        object.__setattr__(self, "presented_order", tuple(self.presented_order))
        if len(self.ordering) < 2:
            raise DataError("listwise ordering needs at least 2 candidates")
        if sorted(self.ordering) != sorted(self.presented_order):
            raise DataError("ordering must be a permutation of presented_order")
        if len(set(self.ordering)) != len(self.ordering):
            raise DataError("ordering contains duplicate checkpoint ids")
        expected = rank_scores_for_ordering(self.ordering)
        if not self.rank_scores:
            object.__setattr__(self, "rank_scores", expected)
        elif dict(self.rank_scores) != expected:
            raise DataError("rank_scores must equal K - rank for the given ordering")

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "ordering": list(self.ordering),
            "presented_order": list(self.presented_order),
            "rank_scores": dict(self.rank_scores),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ListwiseVerdict:
        return cls(
            sample_id=data["sample_id"],
            ordering=tuple(data["ordering"]),
            presented_order=tuple(data["presented_order"]),
            rank_scores=dict(data.get("rank_scores", {})),
        )


class PairwiseWinner(str, enum.Enum):
    A = "a"
    B = "b"
    TIE = "tie"


@dataclass(frozen=True)
class PairwiseVerdict:
    """Head-to-head preference between two checkpoints for one sample."""

    sample_id: str
    a: CheckpointId
    b: CheckpointId
    winner: PairwiseWinner
    presented_first: PairwiseWinner = PairwiseWinner.A
    source: str = "judge"
    reviewer_id: str | None = None

    def __post_init__(self) -> None:
        if self.a == self.b:
            raise DataError("pairwise verdict requires two distinct checkpoints")
        if not isinstance(self.winner, PairwiseWinner):
            object.__setattr__(self, "winner", PairwiseWinner(self.winner))
        if not isinstance(self.presented_first, PairwiseWinner):
            object.__setattr__(self, "presented_first", PairwiseWinner(self.presented_first))
        if self.presented_first is PairwiseWinner.TIE:
            raise DataError("presented_first must be 'a' or 'b'")

    def winner_id(self) -> CheckpointId | None:
        """The winning checkpoint id, or None on a tie."""
        if self.winner is PairwiseWinner.A:
            return self.a
        if self.winner is PairwiseWinner.B:
            return self.b
        return None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "sample_id": self.sample_id,
            "a": self.a,
            "b": self.b,
            "winner": self.winner.value,
            "presented_first": self.presented_first.value,
            "source": self.source,
        }
        if self.reviewer_id is not None:
            out["reviewer_id"] = self.reviewer_id
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PairwiseVerdict:
        return cls(
            sample_id=data["sample_id"],
            a=data["a"],
            b=data["b"],
            winner=PairwiseWinner(data["winner"]),
            presented_first=PairwiseWinner(data.get("presented_first", "a")),
            source=data.get("source", "judge"),
            reviewer_id=data.get("reviewer_id"),
        )


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Dense checkpoints x samples score matrix with an explicit missing mask.

    Missing cells are never imputed; aggregation operations define their own
    missing-data policy. Arrays are frozen (read-only) after construction.
    """

    checkpoints: tuple[CheckpointId, ...]
    sample_ids: tuple[str, ...]
    scores: np.ndarray
    missing: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "checkpoints", tuple(self.checkpoints))
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        scores = np.asarray(self.scores, dtype=np.float64)
        missing = np.asarray(self.missing, dtype=bool)
        shape = (len(self.checkpoints), len(self.sample_ids))
        if scores.shape != shape or missing.shape != shape:
            raise DataError(
                f"matrix shape mismatch: scores {scores.shape}, missing {missing.shape}, "
                f"expected {shape}"
            )
        present = scores[~missing]
        if present.size and (np.min(present) < 0.0 or np.max(present) > 1.0):
            raise DataError("non-missing scores must lie in [0, 1]")
        scores = scores.copy()
        missing = missing.copy()
        scores.setflags(write=False)
        missing.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "missing", missing)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ScoreMatrix):
            return NotImplemented
        return (
            self.checkpoints == other.checkpoints
            and self.sample_ids == other.sample_ids
            and np.array_equal(self.missing, other.missing)
            and np.array_equal(self.scores[~self.missing], other.scores[~other.missing])
        )

    def __hash__(self) -> int:
        return hash((self.checkpoints, self.sample_ids))

    def row(self, checkpoint: CheckpointId) -> tuple[np.ndarray, np.ndarray]:
        """Return (scores, missing) for one checkpoint row."""
        try:
            idx = self.checkpoints.index(checkpoint)
        except ValueError:
            raise DataError(f"unknown checkpoint {checkpoint!r}") from None
        return self.scores[idx], self.missing[idx]

    def present_scores(self, checkpoint: CheckpointId) -> np.ndarray:
        scores, missing = self.row(checkpoint)
        return scores[~missing]

    @classmethod
    def from_verdicts(
        cls,
        checkpoints: Sequence[CheckpointId],
        sample_ids: Sequence[str],
        verdicts: Iterable[PointwiseVerdict],
    ) -> ScoreMatrix:
        """Assemble a matrix from pointwise verdicts; absent cells stay missing."""
        ckpt_idx = {c: i for i, c in enumerate(checkpoints)}
        samp_idx = {s: i for i, s in enumerate(sample_ids)}
        scores = np.zeros((len(checkpoints), len(sample_ids)))
        missing = np.ones((len(checkpoints), len(sample_ids)), dtype=bool)
        for v in verdicts:
            if v.checkpoint_id not in ckpt_idx or v.sample_id not in samp_idx:
                raise DataError(
                    f"verdict references unknown cell ({v.sample_id!r}, {v.checkpoint_id!r})"
                )
            i, j = ckpt_idx[v.checkpoint_id], samp_idx[v.sample_id]
            scores[i, j] = v.score
            missing[i, j] = False
        return cls(tuple(checkpoints), tuple(sample_ids), scores, missing)

    def to_dict(self) -> dict[str, Any]:
        return {
            "checkpoints": list(self.checkpoints),
            "sample_ids": list(self.sample_ids),
            "scores": self.scores.tolist(),
            "missing": self.missing.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ScoreMatrix:
        return cls(
            checkpoints=tuple(data["checkpoints"]),
            sample_ids=tuple(data["sample_ids"]),
            scores=np.asarray(data["scores"], dtype=np.float64),
            missing=np.asarray(data["missing"], dtype=bool),
        )


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of dataset validation; callers decide whether to abort."""

    complete: bool
    duplicate_sample_ids: tuple[str, ...]
    duplicate_response_keys: tuple[tuple[str, CheckpointId], ...]
    dangling_responses: tuple[tuple[str, CheckpointId], ...]
    missing_pairs: tuple[tuple[str, CheckpointId], ...]
    coverage: Mapping[CheckpointId, int]

    @property
    def issues(self) -> int:
        return (
            len(self.duplicate_sample_ids)
            + len(self.duplicate_response_keys)
            + len(self.dangling_responses)
            + len(self.missing_pairs)
        )


def validate_dataset(
    samples: Iterable[EvaluationSample],
    responses: Iterable[CandidateResponse],
) -> ValidationReport:
    """Cross-check samples against responses.

    The dataset is complete iff every (sample, checkpoint) pair has exactly
    one response. Order of the input records never affects the report.
    """
    samples = list(samples)
    responses = list(responses)

    seen_samples: set[str] = set()
    dup_samples: set[str] = set()
    for s in samples:
        if s.sample_id in seen_samples:
            dup_samples.add(s.sample_id)
        seen_samples.add(s.sample_id)

    checkpoints = sorted({r.checkpoint_id for r in responses})
    seen_keys: set[tuple[str, CheckpointId]] = set()
    dup_keys: set[tuple[str, CheckpointId]] = set()
    dangling: set[tuple[str, CheckpointId]] = set()
    for r in responses:
        key = (r.sample_id, r.checkpoint_id)
        if key in seen_keys:
            dup_keys.add(key)
        seen_keys.add(key)
        if r.sample_id not in seen_samples:
            dangling.add(key)

    missing = {
        (s.sample_id, c)
        for s in samples
        for c in checkpoints
        if (s.sample_id, c) not in seen_keys
    }
    coverage = {
        c: sum(1 for key in seen_keys if key[1] == c and key[0] in seen_samples)
        for c in checkpoints
    }
    complete = not missing and not dup_keys and not dangling and bool(samples) and bool(responses)
    return ValidationReport(
        complete=complete,
        duplicate_sample_ids=tuple(sorted(dup_samples)),
        duplicate_response_keys=tuple(sorted(dup_keys)),
        dangling_responses=tuple(sorted(dangling)),
        missing_pairs=tuple(sorted(missing)),
        coverage=coverage,
    )
