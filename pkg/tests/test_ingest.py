from __future__ import annotations

import json

import pytest

from ckpt_arbiter.errors import IngestError, InsufficientSamplesError
from ckpt_arbiter.ingest import CurationPolicy, curate, ingest_responses, ingest_samples
from ckpt_arbiter.models import OcrQuality

from conftest import make_sample


def _write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


SAMPLE_RECORD = {
    "sample_id": "s1",
    "image_ref": "images/s1.png",
    "query": "what text?",
    "ocr_quality": "readable",
}


def test_ingest_samples_happy_path(tmp_path):
    path = tmp_path / "samples.jsonl"
    records = [
        {**SAMPLE_RECORD, "sample_id": f"s{i}"} for i in range(3)
    ]
    _write_jsonl(path, records)
    samples = ingest_samples(path)
    assert len(samples) == 3
    assert samples[0].ocr_quality is OcrQuality.READABLE


def test_ingest_samples_missing_field_names_line(tmp_path):
    path = tmp_path / "samples.jsonl"
    bad = {k: v for k, v in SAMPLE_RECORD.items() if k != "query"}
    _write_jsonl(path, [SAMPLE_RECORD, {**bad, "sample_id": "s2"}])
    with pytest.raises(IngestError, match="line 2: missing field query"):
        ingest_samples(path)


def test_ingest_samples_invalid_quality(tmp_path):
    path = tmp_path / "samples.jsonl"
    _write_jsonl(path, [{**SAMPLE_RECORD, "ocr_quality": "blurry"}])
    with pytest.raises(IngestError, match="line 1: invalid ocr_quality"):
        ingest_samples(path)


def test_ingest_samples_duplicate_id(tmp_path):
    path = tmp_path / "samples.jsonl"
    _write_jsonl(path, [SAMPLE_RECORD, SAMPLE_RECORD])
    with pytest.raises(IngestError, match="duplicate sample_id 's1'"):
        ingest_samples(path)


def test_ingest_samples_malformed_line(tmp_path):
    path = tmp_path / "samples.jsonl"
    path.write_text(json.dumps(SAMPLE_RECORD) + "\n{not json\n")
    with pytest.raises(IngestError, match="line 2"):
        ingest_samples(path)


def test_ingest_deterministic(tmp_path):
    path = tmp_path / "samples.jsonl"
    _write_jsonl(path, [{**SAMPLE_RECORD, "sample_id": f"s{i}"} for i in range(5)])
    assert ingest_samples(path) == ingest_samples(path)


def test_ingest_responses_happy_and_empty_text(tmp_path):
    path = tmp_path / "responses.jsonl"
    records = [
        {"sample_id": s, "checkpoint_id": c, "text": "" if c == "ckpt_a" else "hi"}
        for s in ("s1", "s2")
        for c in ("ckpt_a", "ckpt_b")
    ]
    _write_jsonl(path, records)
    responses = ingest_responses(path)
    assert len(responses) == 4
    assert responses[0].text == ""


def test_ingest_responses_duplicate_pair(tmp_path):
    path = tmp_path / "responses.jsonl"
    record = {"sample_id": "s1", "checkpoint_id": "ckpt_a", "text": "x"}
    _write_jsonl(path, [record, record])
    with pytest.raises(IngestError, match=r"duplicate response for pair \('s1', 'ckpt_a'\)"):
        ingest_responses(path)


def _ten_samples():
    readable = [make_sample(f"r{i}") for i in range(6)]
    ambiguous = [make_sample(f"a{i}", OcrQuality.AMBIGUOUS) for i in range(4)]
    return readable + ambiguous


def test_curate_filters_by_quality():
    result = curate(_ten_samples(), CurationPolicy(allowed_qualities={OcrQuality.READABLE}))
    assert len(result.kept) == 6
    assert len(result.excluded) == 4
    assert all(result.reasons[s.sample_id] == "ocr_quality" for s in result.excluded)


def test_curate_identity_policy():
    samples = _ten_samples()
    result = curate(
        samples,
        CurationPolicy(allowed_qualities=set(OcrQuality)),
    )
    assert list(result.kept) == samples
    assert result.excluded == ()


def test_curate_insufficient_samples():
    with pytest.raises(InsufficientSamplesError) as excinfo:
        curate(
            _ten_samples(),
            CurationPolicy(allowed_qualities={OcrQuality.READABLE}, min_samples=7),
        )
    assert excinfo.value.kept == 6
    assert excinfo.value.min_samples == 7


def test_curate_partition_invariant():
    samples = _ten_samples()
    result = curate(samples, CurationPolicy(allowed_qualities={OcrQuality.READABLE}))
    kept_ids = {s.sample_id for s in result.kept}
    excluded_ids = {s.sample_id for s in result.excluded}
    assert kept_ids | excluded_ids == {s.sample_id for s in samples}
    assert kept_ids & excluded_ids == set()


def test_curate_required_tags():
    tagged = make_sample("t1", tags=("menu",))
    untagged = make_sample("t2")
    result = curate(
        [tagged, untagged],
        CurationPolicy(allowed_qualities=set(OcrQuality), required_tags=("menu",)),
    )
    assert result.kept == (tagged,)
    assert result.reasons["t2"] == "missing_tags"


def test_curation_policy_requires_nonempty_qualities():
    from ckpt_arbiter.errors import DataError

    with pytest.raises(DataError):
        CurationPolicy(allowed_qualities=frozenset())
