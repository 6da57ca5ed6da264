from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from ckpt_arbiter.adjudication import AdjudicationQueue
from ckpt_arbiter.server import REVIEW_TOKEN_ENV, create_app
from ckpt_arbiter.store import RunStore

from conftest import make_response, make_sample


@pytest.fixture
def queue(tmp_path):
    store = RunStore.create(tmp_path, "run1")
    return AdjudicationQueue(store, seed=1)


@pytest.fixture
def client(queue):
    return TestClient(create_app(queue))


def enqueue_cases(queue, n: int, image_ref: str | None = None):
    cases = []
    for i in range(n):
        sample = make_sample(f"s{i:03d}")
        if image_ref is not None:
            object.__setattr__(sample, "image_ref", image_ref)
        cases.append(
            (sample, make_response(sample.sample_id, "ckpt_x", text=f"left answer {i}"),
             make_response(sample.sample_id, "ckpt_y", text=f"right answer {i}"))
        )
    return queue.enqueue(cases)


def test_next_returns_204_when_empty(client):
    response = client.get("/api/queue/next?reviewer=alice")
    assert response.status_code == 204


def test_next_requires_reviewer(client):
    assert client.get("/api/queue/next").status_code == 400


def test_next_returns_blinded_ticket(queue, client):
    enqueue_cases(queue, 2)
    response = client.get("/api/queue/next?reviewer=alice")
    assert response.status_code == 200
    body = response.json()
    assert body["schema_version"] == "1"
    ticket = body["ticket"]
    assert set(ticket) == {
        "ticket_id", "image_url", "query", "left_text", "right_text", "queue_depth",
    }
    assert "ckpt_x" not in str(body)
    assert "ckpt_y" not in str(body)


def test_submit_verdict_roundtrip(queue, client):
    (tid, _) = enqueue_cases(queue, 2)
    response = client.post(
        "/api/verdicts",
        json={"ticket_id": tid, "reviewer_id": "alice", "choice": "left"},
    )
    assert response.status_code == 200
    assert response.json()["accepted"] is True
    assert queue.verdict_count(tid) == 1


def test_submit_conflict_is_409(queue, client):
    (tid,) = enqueue_cases(queue, 1)
    body = {"ticket_id": tid, "reviewer_id": "alice", "choice": "left"}
    assert client.post("/api/verdicts", json=body).status_code == 200
    assert client.post("/api/verdicts", json=body).status_code == 409


def test_submit_unknown_ticket_is_404(client):
    response = client.post(
        "/api/verdicts",
        json={"ticket_id": "feedbeef", "reviewer_id": "alice", "choice": "left"},
    )
    assert response.status_code == 404


def test_submit_bad_choice_is_400(queue, client):
    (tid,) = enqueue_cases(queue, 1)
    response = client.post(
        "/api/verdicts",
        json={"ticket_id": tid, "reviewer_id": "alice", "choice": "coinflip"},
    )
    assert response.status_code == 400


def test_status_counts(queue, client):
    ids = enqueue_cases(queue, 3)
    queue.close_ticket(ids[0])
    body = client.get("/api/status").json()
    assert body["tickets"] == {"pending": 2, "answered": 1, "expired": 0}
    assert body["verdicts"] == 0


def test_ticket_image_local_file(queue, client, tmp_path):
    image = tmp_path / "img.png"
    image.write_bytes(b"\x89PNG fake")
    (tid,) = enqueue_cases(queue, 1, image_ref=str(image))
    response = client.get(f"/api/ticket/{tid}/image")
    assert response.status_code == 200
    assert response.content == b"\x89PNG fake"


def test_ticket_image_redirects_urls(queue, client):
    (tid,) = enqueue_cases(queue, 1, image_ref="https://example.test/i.png")
    response = client.get(f"/api/ticket/{tid}/image", follow_redirects=False)
    assert response.status_code in (302, 307)
    assert response.headers["location"] == "https://example.test/i.png"


def test_ticket_image_missing_file_404(queue, client):
    (tid,) = enqueue_cases(queue, 1, image_ref="images/does-not-exist.png")
    assert client.get(f"/api/ticket/{tid}/image").status_code == 404


def test_bearer_token_enforced(queue, monkeypatch):
    monkeypatch.setenv(REVIEW_TOKEN_ENV, "sekret")
    client = TestClient(create_app(queue))
    assert client.get("/api/status").status_code == 401
    ok = client.get("/api/status", headers={"Authorization": "Bearer sekret"})
    assert ok.status_code == 200


def test_serves_static_ui_when_present(queue, tmp_path):
    ui_dir = tmp_path / "dist"
    ui_dir.mkdir()
    (ui_dir / "index.html").write_text("<!doctype html><title>review</title>")
    client = TestClient(create_app(queue, static_dir=ui_dir))
    response = client.get("/")
    assert response.status_code == 200
    assert "review" in response.text
    # API routes still take precedence over the static mount.
    assert client.get("/api/status").status_code == 200
