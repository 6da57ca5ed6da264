"""Human adjudication queue.

Low-confidence pairwise cases become blinded tickets: reviewers see two
response texts labeled left/right with the side assignment randomized per
ticket, and never a checkpoint id. The queue persists to append-only JSONL
files inside the run directory, so a service restart replays to the exact
same state. Multiple reviewers may answer the same ticket; the orchestrator
decides when a ticket is closed.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from .errors import DataError
from .models import (
    CandidateResponse,
    CheckpointId,
    EvaluationSample,
    PairwiseVerdict,
    PairwiseWinner,
)
from .seeding import derive_seed
from .store import RunStore

STATUS_PENDING = "pending"
STATUS_ANSWERED = "answered"
STATUS_EXPIRED = "expired"

CHOICES = ("left", "right", "tie")


class ConflictError(DataError):
    """A reviewer already answered this ticket."""


def ticket_id_for(sample_id: str, a: CheckpointId, b: CheckpointId) -> str:
    """Deterministic ticket id for a (sample, pair) case; enqueue is idempotent."""
    x, y = sorted((a, b))
    return format(derive_seed("ticket", sample_id, x, y), "016x")


@dataclass
class AdjudicationTicket:
    ticket_id: str
    sample: EvaluationSample
    left_text: str
    right_text: str
    hidden_map: dict[str, CheckpointId]
    status: str = STATUS_PENDING
    created_at: float = 0.0
    sequence: int = 0

    def client_view(self, queue_depth: int) -> dict[str, Any]:
        """What a reviewer is allowed to see: no checkpoint identities."""
        return {
            "ticket_id": self.ticket_id,
            "image_url": f"/api/ticket/{self.ticket_id}/image",
            "query": self.sample.query,
            "left_text": self.left_text,
            "right_text": self.right_text,
            "queue_depth": queue_depth,
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "ticket_id": self.ticket_id,
            "sample": self.sample.to_dict(),
            "left_text": self.left_text,
            "right_text": self.right_text,
            "hidden_map": dict(self.hidden_map),
            "status": self.status,
            "created_at": self.created_at,
            "sequence": self.sequence,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> AdjudicationTicket:
        return cls(
            ticket_id=data["ticket_id"],
            sample=EvaluationSample.from_dict(data["sample"]),
            left_text=data["left_text"],
            right_text=data["right_text"],
            hidden_map=dict(data["hidden_map"]),
            status=data.get("status", STATUS_PENDING),
            created_at=data.get("created_at", 0.0),
            sequence=data.get("sequence", 0),
        )


class AdjudicationQueue:
    """RunStore-backed ticket queue with durable verdicts."""

    TICKETS_FILE = "tickets.jsonl"
    VERDICTS_FILE = "human_verdicts.jsonl"

    def __init__(self, store: RunStore, seed: int = 0, expiry_seconds: float | None = None):
        self.store = store
        self.seed = seed
        self.expiry_seconds = expiry_seconds
        self.tickets: dict[str, AdjudicationTicket] = {}
        self.verdicts: list[PairwiseVerdict] = []
        self._answered_by: dict[str, set[str]] = {}
        self._ticket_verdicts: dict[str, int] = {}
        self._replay()

    # -- persistence ---------------------------------------------------------

    def _tickets_path(self):
        return self.store.run_dir / self.TICKETS_FILE

    def _verdicts_path(self):
        return self.store.run_dir / self.VERDICTS_FILE

    def _replay(self) -> None:
        if self._tickets_path().exists():
            with self._tickets_path().open(encoding="utf-8") as fh:
                for line in fh:
                    record = json.loads(line)
                    if record.get("kind") == "status":
                        ticket = self.tickets.get(record["ticket_id"])
                        if ticket:
                            ticket.status = record["status"]
                        continue
                    ticket = AdjudicationTicket.from_dict(record)
                    self.tickets[ticket.ticket_id] = ticket
        if self._verdicts_path().exists():
            with self._verdicts_path().open(encoding="utf-8") as fh:
                for line in fh:
                    record = json.loads(line)
                    verdict = PairwiseVerdict.from_dict(record["verdict"])
                    self._record_verdict(record["ticket_id"], verdict)

    def _append(self, path, record: dict) -> None:
        self.store.run_dir.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def _record_verdict(self, ticket_id: str, verdict: PairwiseVerdict) -> None:
        self.verdicts.append(verdict)
        self._answered_by.setdefault(ticket_id, set()).add(verdict.reviewer_id or "")
        self._ticket_verdicts[ticket_id] = self._ticket_verdicts.get(ticket_id, 0) + 1

    # -- operations ----------------------------------------------------------

    def enqueue(
        self,
        cases: Iterable[tuple[EvaluationSample, CandidateResponse, CandidateResponse]],
    ) -> list[str]:
        """Create one blinded ticket per (sample, response, response) case.

        Re-enqueueing an identical case returns the existing ticket id.
        """
        ids = []
        for sample, resp_a, resp_b in cases:
            if resp_a.sample_id != sample.sample_id or resp_b.sample_id != sample.sample_id:
                raise DataError("responses must belong to the ticket's sample")
            if resp_a.checkpoint_id == resp_b.checkpoint_id:
                raise DataError("a ticket needs two distinct checkpoints")
            tid = ticket_id_for(sample.sample_id, resp_a.checkpoint_id, resp_b.checkpoint_id)
            if tid in self.tickets:
                ids.append(tid)
                continue
            # Left/right assignment is deterministic per (queue seed, ticket).
            left_is_a = derive_seed(self.seed, "side", tid) % 2 == 0
            left, right = (resp_a, resp_b) if left_is_a else (resp_b, resp_a)
            ticket = AdjudicationTicket(
                ticket_id=tid,
                sample=sample,
                left_text=left.text,
                right_text=right.text,
                hidden_map={"left": left.checkpoint_id, "right": right.checkpoint_id},
                status=STATUS_PENDING,
                created_at=time.time(),
                sequence=len(self.tickets),
            )
            self.tickets[tid] = ticket
            self._append(self._tickets_path(), ticket.to_dict())
            ids.append(tid)
        return ids

    def _expire_stale(self) -> None:
        if self.expiry_seconds is None:
            return
        cutoff = time.time() - self.expiry_seconds
        for ticket in self.tickets.values():
            if ticket.status == STATUS_PENDING and ticket.created_at < cutoff:
                self._set_status(ticket.ticket_id, STATUS_EXPIRED)

    def pending(self) -> list[AdjudicationTicket]:
        self._expire_stale()
        return sorted(
            (t for t in self.tickets.values() if t.status == STATUS_PENDING),
            key=lambda t: t.sequence,
        )

    def next_ticket(self, reviewer_id: str) -> AdjudicationTicket | None:
        """Oldest pending ticket this reviewer has not answered, if any."""
        answered = {
            tid for tid, reviewers in self._answered_by.items() if reviewer_id in reviewers
        }
        for ticket in self.pending():
            if ticket.ticket_id not in answered:
                return ticket
        return None

    def queue_depth(self) -> int:
        return len(self.pending())

    def submit_verdict(
        self, ticket_id: str, reviewer_id: str, choice: str
    ) -> PairwiseVerdict:
        """Unblind a left/right/tie choice into a stored PairwiseVerdict."""
        if choice not in CHOICES:
            raise DataError(f"choice must be one of {CHOICES}, got {choice!r}")
        ticket = self.tickets.get(ticket_id)
        if ticket is None:
            raise DataError(f"unknown ticket {ticket_id!r}")
        if not reviewer_id:
            raise DataError("reviewer_id must be non-empty")
        if reviewer_id in self._answered_by.get(ticket_id, set()):
            raise ConflictError(f"reviewer {reviewer_id!r} already answered {ticket_id!r}")

        left = ticket.hidden_map["left"]
        right = ticket.hidden_map["right"]
        a, b = sorted((left, right))
        if choice == "tie":
            winner = PairwiseWinner.TIE
        else:
            chosen = left if choice == "left" else right
            winner = PairwiseWinner.A if chosen == a else PairwiseWinner.B
        presented_first = PairwiseWinner.A if left == a else PairwiseWinner.B
        verdict = PairwiseVerdict(
            sample_id=ticket.sample.sample_id,
            a=a,
            b=b,
            winner=winner,
            presented_first=presented_first,
            source="human",
            reviewer_id=reviewer_id,
        )
        self._record_verdict(ticket_id, verdict)
        self._append(self._verdicts_path(), {"ticket_id": ticket_id, "verdict": verdict.to_dict()})
        return verdict

    def verdict_count(self, ticket_id: str) -> int:
        return self._ticket_verdicts.get(ticket_id, 0)

    def _set_status(self, ticket_id: str, status: str) -> None:
        self.tickets[ticket_id].status = status
        self._append(
            self._tickets_path(),
            {"kind": "status", "ticket_id": ticket_id, "status": status},
        )

    def close_ticket(self, ticket_id: str) -> None:
        if ticket_id not in self.tickets:
            raise DataError(f"unknown ticket {ticket_id!r}")
        self._set_status(ticket_id, STATUS_ANSWERED)

    def close_tickets(self, ticket_ids: Sequence[str]) -> None:
        for tid in ticket_ids:
            self.close_ticket(tid)

    def status_counts(self) -> dict[str, int]:
        self._expire_stale()
        counts = {STATUS_PENDING: 0, STATUS_ANSWERED: 0, STATUS_EXPIRED: 0}
        for ticket in self.tickets.values():
            counts[ticket.status] += 1
        return counts
