"""Judge request construction, submission, and verdict parsing.

Requests blind the judge: candidates appear only as "Response A",
"Response B", ... in a seed-deterministic order, and no checkpoint id ever
reaches a prompt. The caller keeps the label map to translate verdicts
back. Replies must contain a single JSON object; one repair re-prompt is
attempted before a parse failure is surfaced.
"""

from __future__ import annotations

import json
import os
import random
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

from .errors import (
    ArityError,
    DataError,
    IncompleteRankingError,
    JudgeBackendError,
    ScoreOutOfRangeError,
    UnknownLabelError,
    VerdictParseError,
)
from .models import (
    CandidateResponse,
    CheckpointId,
    EvaluationSample,
    ListwiseVerdict,
    PairwiseVerdict,
    PairwiseWinner,
    PointwiseVerdict,
)
from .seeding import derive_seed

JUDGE_TOKEN_ENV = "CKPT_ARBITER_JUDGE_TOKEN"

MODE_POINTWISE = "pointwise"
MODE_LISTWISE = "listwise"
MODE_PAIRWISE = "pairwise"

_MODE_ARITY = {MODE_POINTWISE: (1, 1), MODE_PAIRWISE: (2, 2), MODE_LISTWISE: (2, 8)}

_LABELS = "ABCDEFGH"

DEFAULT_DIMENSIONS = (
    ("content_relevance", "Understanding of the content and relevance to the query", 0.2),
    ("visual_grounding", "Factual accuracy and grounding in the visual evidence", 0.2),
    ("clarity_completeness", "Clarity and completeness of the response", 0.2),
    ("unsupported_requests", "Appropriate handling of requests the input cannot support", 0.2),
    ("hallucination_detection", "Explicit detection of hallucinated or erroneous content", 0.2),
)


@dataclass(frozen=True)
class RubricDimension:
    name: str
    description: str
    weight: float

    def __post_init__(self) -> None:
        if self.weight < 0:
            raise DataError(f"dimension weight must be non-negative: {self.name}")


@dataclass(frozen=True)
class Rubric:
    """Weighted judging dimensions plus the grounding-over-style rule."""

    dimensions: tuple[RubricDimension, ...] = tuple(
        RubricDimension(*d) for d in DEFAULT_DIMENSIONS
    )
    grounding_priority: bool = True
    output_schema_version: str = "1"

    def __post_init__(self) -> None:
        if self.dimensions:
            total = sum(d.weight for d in self.dimensions)
            if abs(total - 1.0) > 1e-9:
                raise DataError(f"dimension weights sum to {total}, expected 1")


@dataclass(frozen=True)
class JudgeRequest:
    """A fully blinded judging task. Serializations never contain checkpoint ids."""

    mode: str
    sample: EvaluationSample
    candidates: tuple[tuple[str, str], ...]
    rubric: Rubric
    nonce: str

    def __post_init__(self) -> None:
        lo, hi = _MODE_ARITY[self.mode]
        if not lo <= len(self.candidates) <= hi:
            raise ArityError(
                f"{self.mode} mode takes {lo}..{hi} candidates, got {len(self.candidates)}"
            )

    @property
    def prompt_text(self) -> str:
        return render_prompt(self)


@dataclass(frozen=True)
class JudgeBackendConfig:
    endpoint: str = ""
    model_name: str = "judge"
    max_retries: int = 2
    timeout: float = 30.0
    batch_size: int = 4
    temperature: float = 0.0
    backoff_base: float = 0.1

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise DataError("batch_size must be at least 1")
        if self.max_retries < 0:
            raise DataError("max_retries must be non-negative")
        if self.temperature < 0:
            raise DataError("temperature must be non-negative")


class JudgeBackend(Protocol):
    """Anything that can answer one judging request with raw reply text."""

    def submit(self, request: JudgeRequest, config: JudgeBackendConfig) -> str: ...


def build_request(
    mode: str,
    sample: EvaluationSample,
    responses: Sequence[CandidateResponse],
    rubric: Rubric,
    seed: int,
) -> tuple[JudgeRequest, dict[str, CheckpointId]]:
    """Blind and order candidates, returning the request and its label map.

    The presentation order is a uniform permutation determined entirely by
    ``seed``, so identical inputs always produce identical request bytes.
    """
    return _build_ordered(mode, sample, _permuted(responses, seed), rubric, seed)


def _permuted(responses: Sequence[CandidateResponse], seed: int) -> list[CandidateResponse]:
    ordered = list(responses)
    random.Random(seed).shuffle(ordered)
    return ordered


def _build_ordered(
    mode: str,
    sample: EvaluationSample,
    ordered: Sequence[CandidateResponse],
    rubric: Rubric,
    seed: int,
) -> tuple[JudgeRequest, dict[str, CheckpointId]]:
    lo, hi = _MODE_ARITY[mode]
    if not lo <= len(ordered) <= hi:
        raise ArityError(f"{mode} mode takes {lo}..{hi} candidates, got {len(ordered)}")
    for r in ordered:
        if r.sample_id != sample.sample_id:
            raise DataError(
                f"response for sample {r.sample_id!r} does not match {sample.sample_id!r}"
            )
    seen = {r.checkpoint_id for r in ordered}
    if len(seen) != len(ordered):
        raise DataError("candidates must come from distinct checkpoints")
    label_map = {_LABELS[i]: r.checkpoint_id for i, r in enumerate(ordered)}
    candidates = tuple((_LABELS[i], r.text) for i, r in enumerate(ordered))
    nonce = format(
        derive_seed(mode, sample.sample_id, rubric.output_schema_version, seed,
                    *(text for _, text in candidates)),
        "016x",
    )
    request = JudgeRequest(
        mode=mode, sample=sample, candidates=candidates, rubric=rubric, nonce=nonce
    )
    return request, label_map


def pairwise_both_orders(
    sample: EvaluationSample,
    resp_a: CandidateResponse,
    resp_b: CandidateResponse,
    rubric: Rubric,
    seed: int,
) -> tuple[
    tuple[JudgeRequest, dict[str, CheckpointId]],
    tuple[JudgeRequest, dict[str, CheckpointId]],
]:
    """Two pairwise requests differing only in presentation order.

    Judging each pair in both orders lets position bias cancel when the two
    verdicts are averaged downstream.
    """
    if resp_a.checkpoint_id == resp_b.checkpoint_id:
        raise DataError("pairwise comparison needs two distinct checkpoints")
    first = _build_ordered(MODE_PAIRWISE, sample, [resp_a, resp_b], rubric, seed)
    second = _build_ordered(MODE_PAIRWISE, sample, [resp_b, resp_a], rubric, seed)
    return first, second


def render_prompt(request: JudgeRequest) -> str:
    """Deterministic prompt text embedding the rubric and all candidates."""
    lines = [
        "You are evaluating anonymous model responses for a visual question answering task.",
        "",
        f"Image: {request.sample.image_ref}",
        f"Query: {request.sample.query}",
        "",
        "Judge every response against these dimensions:",
    ]
    for dim in request.rubric.dimensions:
        lines.append(f"- {dim.name} (weight {dim.weight:g}): {dim.description}")
    if request.rubric.grounding_priority:
        lines.append(
            "Groundedness outranks style: when responses are otherwise comparable, "
            "prefer the one better supported by the visual evidence."
        )
    lines.append("")
    for label, text in request.candidates:
        lines.append(f"Response {label}:")
        lines.append(text)
        lines.append("")
    lines.append(_reply_instruction(request.mode))
    return "\n".join(lines)


def _reply_instruction(mode: str) -> str:
    if mode == MODE_POINTWISE:
        return (
            'Reply with exactly one JSON object: {"score": <number in [0, 1]>, '
            '"rationale": "<one sentence>"}.'
        )
    if mode == MODE_LISTWISE:
        return (
            'Reply with exactly one JSON object: {"ranking": [<labels best first>]}, '
            "listing every response label exactly once."
        )
    return 'Reply with exactly one JSON object: {"winner": "A" | "B" | "tie"}.'


_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def _extract_json(raw: str) -> dict:
    text = raw.strip()
    fence = _FENCE_RE.search(text)
    if fence:
        text = fence.group(1).strip()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        start, end = text.find("{"), text.rfind("}")
        if start < 0 or end <= start:
            raise VerdictParseError(f"no JSON object in reply: {raw[:120]!r}") from None
        try:
            obj = json.loads(text[start : end + 1])
        except json.JSONDecodeError as exc:
            raise VerdictParseError(f"unparseable reply: {raw[:120]!r}") from exc
    if not isinstance(obj, dict):
        raise VerdictParseError("judge reply is not a JSON object")
    return obj


def _normalize_label(label: object) -> str:
    text = str(label).strip()
    if text.lower().startswith("response "):
        text = text[len("response ") :]
    return text.strip().upper()


def parse_verdict(
    raw: str,
    request: JudgeRequest,
    label_map: dict[str, CheckpointId],
):
    """Translate a raw judge reply into the mode-matched verdict.

    Each failure mode raises a distinct error type so callers can decide
    what to retry: VerdictParseError, IncompleteRankingError,
    UnknownLabelError, ScoreOutOfRangeError.
    """
    obj = _extract_json(raw)
    sample_id = request.sample.sample_id
    if request.mode == MODE_POINTWISE:
        if "score" not in obj or not isinstance(obj["score"], (int, float)):
            raise VerdictParseError("pointwise reply missing numeric 'score'")
        score = float(obj["score"])
        if not 0.0 <= score <= 1.0:
            raise ScoreOutOfRangeError(f"score {score} outside [0, 1]")
        (checkpoint,) = label_map.values()
        rationale = obj.get("rationale")
        return PointwiseVerdict(sample_id, checkpoint, score, rationale)

    if request.mode == MODE_LISTWISE:
        ranking = obj.get("ranking")
        if not isinstance(ranking, list):
            raise VerdictParseError("listwise reply missing 'ranking' list")
        labels = [_normalize_label(v) for v in ranking]
        for label in labels:
            if label not in label_map:
                raise UnknownLabelError(f"unknown label {label!r} in ranking")
        if sorted(labels) != sorted(label_map):
            raise IncompleteRankingError(
                f"ranking {labels} is not a permutation of {sorted(label_map)}"
            )
        ordering = tuple(label_map[label] for label in labels)
        presented = tuple(label_map.values())
        return ListwiseVerdict(sample_id, ordering, presented)

    winner_raw = obj.get("winner")
    if winner_raw is None:
        raise VerdictParseError("pairwise reply missing 'winner'")
    winner_label = _normalize_label(winner_raw)
    first_id, second_id = label_map[_LABELS[0]], label_map[_LABELS[1]]
    # Canonical orientation: a is the lexicographically smaller id.
    a, b = sorted((first_id, second_id))
    presented_first = PairwiseWinner.A if first_id == a else PairwiseWinner.B
    if winner_label == "TIE":
        winner = PairwiseWinner.TIE
    elif winner_label in label_map:
        winner = PairwiseWinner.A if label_map[winner_label] == a else PairwiseWinner.B
    else:
        raise UnknownLabelError(f"unknown winner label {winner_raw!r}")
    return PairwiseVerdict(sample_id, a, b, winner, presented_first)


@dataclass
class BatchOutcome:
    """Per-request result of a batch submission, in input order."""

    nonce: str
    reply: str | None = None
    error: str | None = None
    attempts: int = 0

    @property
    def ok(self) -> bool:
        return self.reply is not None


def submit_batch(
    backend: JudgeBackend,
    config: JudgeBackendConfig,
    requests: Sequence[JudgeRequest],
) -> list[BatchOutcome]:
    """Submit requests with retries; always returns one outcome per request.

    Requests are dispatched up to ``batch_size`` at a time; failures are
    recorded per request, never raised.
    """

    def attempt(request: JudgeRequest) -> BatchOutcome:
        outcome = BatchOutcome(nonce=request.nonce)
        for attempt_no in range(1 + config.max_retries):
            outcome.attempts = attempt_no + 1
            try:
                outcome.reply = backend.submit(request, config)
                outcome.error = None
                return outcome
            except Exception as exc:
                outcome.error = str(exc)
                if attempt_no < config.max_retries and config.backoff_base > 0:
                    time.sleep(config.backoff_base * (2**attempt_no))
        return outcome

    if config.batch_size == 1 or len(requests) <= 1:
        return [attempt(r) for r in requests]
    with ThreadPoolExecutor(max_workers=config.batch_size) as pool:
        return list(pool.map(attempt, requests))


REPAIR_SUFFIX = (
    "\n\nYour previous reply could not be parsed. "
    "Reply again with exactly one JSON object and nothing else."
)


@dataclass
class JudgedItem:
    """Parsed verdict or terminal failure for one request."""

    request: JudgeRequest
    verdict: object | None = None
    error: str | None = None
    attempts: int = 0


def evaluate_requests(
    backend: JudgeBackend,
    config: JudgeBackendConfig,
    items: Sequence[tuple[JudgeRequest, dict[str, CheckpointId]]],
) -> list[JudgedItem]:
    """Submit, parse, and repair-once a batch of (request, label_map) pairs."""
    requests = [request for request, _ in items]
    outcomes = submit_batch(backend, config, requests)
    results: list[JudgedItem] = []
    repair_queue: list[int] = []
    for i, ((request, label_map), outcome) in enumerate(zip(items, outcomes)):
        item = JudgedItem(request=request, attempts=outcome.attempts)
        if not outcome.ok:
            item.error = outcome.error
        else:
            try:
                item.verdict = parse_verdict(outcome.reply, request, label_map)
            except VerdictParseError as exc:
                item.error = f"{type(exc).__name__}: {exc}"
                repair_queue.append(i)
        results.append(item)

    if repair_queue:
        repairs = [_repair_request(items[i][0]) for i in repair_queue]
        outcomes = submit_batch(backend, config, repairs)
        for i, repair, outcome in zip(repair_queue, repairs, outcomes):
            results[i].attempts += outcome.attempts
            if not outcome.ok:
                continue
            try:
                results[i].verdict = parse_verdict(outcome.reply, repair, items[i][1])
                results[i].error = None
            except VerdictParseError as exc:
                results[i].error = f"{type(exc).__name__}: {exc}"
    return results


def _repair_request(request: JudgeRequest) -> JudgeRequest:
    sample = request.sample
    repaired = EvaluationSample(
        sample_id=sample.sample_id,
        image_ref=sample.image_ref,
        query=sample.query + REPAIR_SUFFIX,
        ocr_quality=sample.ocr_quality,
        language_tag=sample.language_tag,
        tags=sample.tags,
    )
    return JudgeRequest(
        mode=request.mode,
        sample=repaired,
        candidates=request.candidates,
        rubric=request.rubric,
        nonce=request.nonce + "-repair",
    )


class HttpJudgeBackend:
    """POSTs {model_name, prompt_text, nonce} to a remote judge endpoint.

    The bearer token is read from the CKPT_ARBITER_JUDGE_TOKEN environment
    variable when present.
    """

    def __init__(self, client=None):
        if client is None:
            import httpx

            client = httpx.Client()
        self._client = client

    def submit(self, request: JudgeRequest, config: JudgeBackendConfig) -> str:
        headers = {}
        token = os.environ.get(JUDGE_TOKEN_ENV)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        payload = {
            "model_name": config.model_name,
            "prompt_text": request.prompt_text,
            "nonce": request.nonce,
            "temperature": config.temperature,
        }
        try:
            response = self._client.post(
                config.endpoint, json=payload, headers=headers, timeout=config.timeout
            )
        except Exception as exc:
            raise JudgeBackendError(f"transport failure: {exc}") from exc
        if response.status_code != 200:
            raise JudgeBackendError(f"judge endpoint returned {response.status_code}")
        return response.text


def blinding_leak(request: JudgeRequest, checkpoint_ids: Iterable[CheckpointId]) -> bool:
    """True if any checkpoint id appears in the serialized request."""
    serialized = json.dumps(
        {
            "mode": request.mode,
            "sample": request.sample.to_dict(),
            "candidates": list(request.candidates),
            "nonce": request.nonce,
            "prompt": request.prompt_text,
        }
    )
    return any(ckpt in serialized for ckpt in checkpoint_ids)
