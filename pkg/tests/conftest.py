from __future__ import annotations

import pytest

from ckpt_arbiter.models import (
    CandidateResponse,
    EvaluationSample,
    OcrQuality,
)

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def record_criterion(name: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.append((name, ok, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if ok else "FAIL"
        suffix = f" ({detail})" if detail else ""
        terminalreporter.write_line(f"{status}: {name}{suffix}")


@pytest.fixture
def sample():
    return EvaluationSample(
        sample_id="s001",
        image_ref="images/s001.png",
        query="What does the sign say?",
        ocr_quality=OcrQuality.READABLE,
    )


def make_sample(sample_id: str, quality: OcrQuality = OcrQuality.READABLE, tags=()):
    return EvaluationSample(
        sample_id=sample_id,
        image_ref=f"images/{sample_id}.png",
        query=f"What does the text say in {sample_id}?",
        ocr_quality=quality,
        tags=tuple(tags),
    )


def make_response(sample_id: str, checkpoint_id: str, text: str | None = None):
    return CandidateResponse(
        sample_id=sample_id,
        checkpoint_id=checkpoint_id,
        text=text if text is not None else f"{checkpoint_id} answer for {sample_id}",
    )
