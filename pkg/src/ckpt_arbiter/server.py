"""HTTP surface for the adjudication queue.

JSON endpoints, all carrying a schema_version field:

    GET  /api/queue/next?reviewer=<id>   next pending ticket view, or 204
    POST /api/verdicts                   {ticket_id, reviewer_id, choice}
    GET  /api/status                     ticket counts by status
    GET  /api/ticket/<id>/image          streams or redirects the sample image

When CKPT_ARBITER_REVIEW_TOKEN is set, every /api request must carry it as
a bearer token. A built reviewer UI directory can be mounted at the root.
"""

from __future__ import annotations

import os
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import FileResponse, JSONResponse, RedirectResponse
from fastapi.staticfiles import StaticFiles

from .adjudication import AdjudicationQueue, ConflictError
from .errors import DataError

SCHEMA_VERSION = "1"
REVIEW_TOKEN_ENV = "CKPT_ARBITER_REVIEW_TOKEN"


def _json(payload: dict, status_code: int = 200) -> JSONResponse:
    return JSONResponse({**payload, "schema_version": SCHEMA_VERSION}, status_code=status_code)


def create_app(queue: AdjudicationQueue, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="ckpt-arbiter adjudication")

    @app.middleware("http")
    async def check_token(request: Request, call_next):
        token = os.environ.get(REVIEW_TOKEN_ENV)
        if token and request.url.path.startswith("/api"):
            header = request.headers.get("authorization", "")
            if header != f"Bearer {token}":
                return _json({"error": "unauthorized"}, status_code=401)
        return await call_next(request)

    @app.get("/api/queue/next")
    def next_ticket(reviewer: str = "") -> Response:
        if not reviewer:
            return _json({"error": "reviewer query parameter is required"}, status_code=400)
        ticket = queue.next_ticket(reviewer)
        if ticket is None:
            return Response(status_code=204)
        return _json({"ticket": ticket.client_view(queue.queue_depth())})

    @app.post("/api/verdicts")
    async def submit_verdict(request: Request) -> Response:
        body = await request.json()
        ticket_id = body.get("ticket_id", "")
        reviewer_id = body.get("reviewer_id", "")
        choice = body.get("choice", "")
        try:
            queue.submit_verdict(ticket_id, reviewer_id, choice)
        except ConflictError as exc:
            return _json({"error": str(exc)}, status_code=409)
        except DataError as exc:
            status = 404 if "unknown ticket" in str(exc) else 400
            return _json({"error": str(exc)}, status_code=status)
        return _json({"accepted": True, "ticket_id": ticket_id})

    @app.get("/api/status")
    def status() -> Response:
        return _json(
            {
                "tickets": queue.status_counts(),
                "verdicts": len(queue.verdicts),
            }
        )

    @app.get("/api/ticket/{ticket_id}/image")
    def ticket_image(ticket_id: str) -> Response:
        ticket = queue.tickets.get(ticket_id)
        if ticket is None:
            return _json({"error": f"unknown ticket {ticket_id!r}"}, status_code=404)
        ref = ticket.sample.image_ref
        if ref.startswith("http://") or ref.startswith("https://"):
            return RedirectResponse(ref)
        path = Path(ref)
        if path.exists() and path.is_file():
            return FileResponse(path)
        return _json({"error": f"image not available: {ref}"}, status_code=404)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def serve(queue: AdjudicationQueue, host: str = "127.0.0.1", port: int = 8651,
          static_dir: str | Path | None = None) -> None:
    import uvicorn

    uvicorn.run(create_app(queue, static_dir), host=host, port=port, log_level="info")
