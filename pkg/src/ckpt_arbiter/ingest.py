"""Line-delimited dataset loading and quality-aware curation.

Quality labels come in with the data; this module never inspects pixels.
Curation keeps hard-but-evaluable samples and excludes the rest with an
auditable per-sample reason.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError, IngestError, InsufficientSamplesError
from .models import CandidateResponse, EvaluationSample, OcrQuality

_SAMPLE_FIELDS = ("sample_id", "image_ref", "query", "ocr_quality")
_RESPONSE_FIELDS = ("sample_id", "checkpoint_id", "text")


def _read_records(path: str | Path, required: Sequence[str]) -> list[tuple[int, dict]]:
    path = Path(path)
    if not path.exists():
        raise IngestError(f"no such file: {path}")
    records: list[tuple[int, dict]] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise IngestError(f"line {lineno}: expected a JSON object")
            for name in required:
                if name not in record:
                    raise IngestError(f"line {lineno}: missing field {name}")
            records.append((lineno, record))
    return records


def ingest_samples(path: str | Path) -> list[EvaluationSample]:
    """Load evaluation samples from a JSONL file.

    Raises IngestError naming the offending line on any malformed record,
    and on duplicate sample ids.
    """
    samples: list[EvaluationSample] = []
    seen: set[str] = set()
    for lineno, record in _read_records(path, _SAMPLE_FIELDS):
        quality = record["ocr_quality"]
        try:
            OcrQuality(quality)
        except ValueError:
            raise IngestError(f"line {lineno}: invalid ocr_quality {quality!r}") from None
        try:
            sample = EvaluationSample.from_dict(record)
        except DataError as exc:
            raise IngestError(f"line {lineno}: {exc}") from exc
        if sample.sample_id in seen:
            raise IngestError(f"line {lineno}: duplicate sample_id {sample.sample_id!r}")
        seen.add(sample.sample_id)
        samples.append(sample)
    return samples


def ingest_responses(path: str | Path) -> list[CandidateResponse]:
    """Load candidate responses from a JSONL file, keyed on (sample, checkpoint)."""
    responses: list[CandidateResponse] = []
    seen: set[tuple[str, str]] = set()
    for lineno, record in _read_records(path, _RESPONSE_FIELDS):
        try:
            response = CandidateResponse.from_dict(record)
        except DataError as exc:
            raise IngestError(f"line {lineno}: {exc}") from exc
        key = (response.sample_id, response.checkpoint_id)
        if key in seen:
            raise IngestError(f"line {lineno}: duplicate response for pair {key!r}")
        seen.add(key)
        responses.append(response)
    return responses


@dataclass(frozen=True)
class CurationPolicy:
    """Which quality tiers and tags survive curation, and how many must remain."""

    allowed_qualities: frozenset[OcrQuality] = frozenset({OcrQuality.READABLE})
    min_samples: int = 0
    required_tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        qualities = frozenset(OcrQuality(q) for q in self.allowed_qualities)
        if not qualities:
            raise DataError("allowed_qualities must be non-empty")
        object.__setattr__(self, "allowed_qualities", qualities)
        object.__setattr__(self, "required_tags", tuple(self.required_tags))
        if self.min_samples < 0:
            raise DataError("min_samples must be non-negative")


@dataclass(frozen=True)
class CurationResult:
    """Partition of the input into kept samples and excluded samples with reasons."""

    kept: tuple[EvaluationSample, ...]
    excluded: tuple[EvaluationSample, ...] = ()
    reasons: dict[str, str] = field(default_factory=dict)


def curate(samples: Iterable[EvaluationSample], policy: CurationPolicy) -> CurationResult:
    """Partition samples by the policy; never mutates the input.

    kept and excluded are disjoint and together cover the input exactly.
    Raises InsufficientSamplesError when fewer than ``min_samples`` survive.
    """
    kept: list[EvaluationSample] = []
    excluded: list[EvaluationSample] = []
    reasons: dict[str, str] = {}
    required = set(policy.required_tags)
    for sample in samples:
        if sample.ocr_quality not in policy.allowed_qualities:
            excluded.append(sample)
            reasons[sample.sample_id] = "ocr_quality"
        elif not required.issubset(sample.tags):
            excluded.append(sample)
            reasons[sample.sample_id] = "missing_tags"
        else:
            kept.append(sample)
    if len(kept) < policy.min_samples:
        raise InsufficientSamplesError(len(kept), policy.min_samples)
    return CurationResult(kept=tuple(kept), excluded=tuple(excluded), reasons=reasons)
