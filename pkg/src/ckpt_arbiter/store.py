"""Content-addressed run directory.

Layout: ``<root>/<run_id>/manifest.json`` plus one JSON file per artifact.
Artifacts are write-once; every load re-verifies the recorded SHA-256, so
silent corruption is always detected. Adjacent mutable queue files (see the
adjudication module) live in the same directory but outside the manifest.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

from .errors import ArtifactCollisionError, DataError, IntegrityError

ARTIFACT_NAMES = (
    "samples",
    "responses",
    "verdicts_pointwise",
    "verdicts_listwise",
    "verdicts_pairwise",
    "score_matrix",
    "selection_report",
)


def _encode(payload: Any) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class RunStore:
    """Single-writer artifact store for one run. Reads are safe concurrently."""

    def __init__(self, root_path: str | Path, run_id: str):
        if not run_id:
            raise DataError("run_id must be non-empty")
        self.root_path = Path(root_path)
        self.run_id = run_id
        self.manifest: dict[str, dict[str, str]] = {}

    @property
    def run_dir(self) -> Path:
        return self.root_path / self.run_id

    @property
    def manifest_path(self) -> Path:
        return self.run_dir / "manifest.json"

    @classmethod
    def create(cls, root_path: str | Path, run_id: str) -> RunStore:
        store = cls(root_path, run_id)
        store.run_dir.mkdir(parents=True, exist_ok=True)
        store._write_manifest()
        return store

    @classmethod
    def open(cls, root_path: str | Path, run_id: str) -> RunStore:
        """Open an existing run, verifying that every manifest entry resolves."""
        store = cls(root_path, run_id)
        if not store.manifest_path.exists():
            raise DataError(f"no manifest for run {run_id!r} under {root_path}")
        store.manifest = json.loads(store.manifest_path.read_text(encoding="utf-8"))
        for name, entry in store.manifest.items():
            target = store.run_dir / entry["path"]
            if not target.exists():
                raise IntegrityError(f"artifact {name!r} missing on disk: {target}")
        return store

    def _write_manifest(self) -> None:
        self.manifest_path.write_text(
            json.dumps(self.manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    def persist_artifact(self, name: str, payload: Any) -> Path:
        """Write a JSON-encodable payload and record its content hash."""
        if name in self.manifest:
            raise ArtifactCollisionError(f"artifact {name!r} already persisted")
        data = _encode(payload)
        rel_path = f"{name}.json"
        target = self.run_dir / rel_path
        self.run_dir.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
        self.manifest[name] = {"path": rel_path, "sha256": _sha256(data)}
        self._write_manifest()
        return target

    def load_artifact(self, name: str) -> Any:
        """Load a payload, raising IntegrityError on any hash mismatch."""
        if name not in self.manifest:
            raise DataError(f"unknown artifact {name!r}")
        entry = self.manifest[name]
        data = (self.run_dir / entry["path"]).read_bytes()
        digest = _sha256(data)
        if digest != entry["sha256"]:
            raise IntegrityError(
                f"artifact {name!r} hash mismatch: stored {entry['sha256'][:12]}, "
                f"actual {digest[:12]}"
            )
        return json.loads(data.decode("utf-8"))

    def has_artifact(self, name: str) -> bool:
        return name in self.manifest

    def artifact_hash(self, name: str) -> str:
        if name not in self.manifest:
            raise DataError(f"unknown artifact {name!r}")
        return self.manifest[name]["sha256"]
