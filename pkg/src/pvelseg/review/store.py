"""Filesystem-backed annotation store with optimistic concurrency.

Layout under the store root: records/<image_id>.json (one record per file,
written via temp-file rename so readers never see partial writes),
images/<image_id>.png (the source rasters served to reviewers), audit.log
(append-only JSONL of every accepted mutation), manifest.json (free-form
metadata such as pipeline timings).
"""

from __future__ import annotations

import json
import logging
import os
import re
import tempfile
import threading
import time
from collections import defaultdict
from pathlib import Path

from ..annotate import AnnotationRecord, is_valid_transition, utc_now

log = logging.getLogger(__name__)

_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")


class UnknownImageError(KeyError):
    """The store has no record with the requested id."""


class ConflictError(Exception):
    """The record changed since the client read it."""

    def __init__(self, image_id: str, expected: int, actual: int):
        super().__init__(f"{image_id}: expected version {expected}, store has {actual}")
        self.image_id = image_id
        self.expected = expected
        self.actual = actual


class TransitionError(ValueError):
    """The requested status change is not allowed."""

    def __init__(self, image_id: str, old: str, new: str):
        super().__init__(f"{image_id}: cannot move from {old!r} to {new!r}")
        self.old = old
        self.new = new


def _check_id(image_id: str) -> str:
    if not _ID_RE.match(image_id):
        raise ValueError(f"invalid image id {image_id!r}")
    return image_id


class AnnotationStore:
    """Annotation records plus source images, safe for concurrent writers."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.records_dir = self.root / "records"
        self.images_dir = self.root / "images"
        self.audit_path = self.root / "audit.log"
        self.manifest_path = self.root / "manifest.json"
        self.records_dir.mkdir(parents=True, exist_ok=True)
        self.images_dir.mkdir(parents=True, exist_ok=True)
        self._mutex = threading.Lock()
        self._record_locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        # wall-clock of the last fetch per record, for revision-time stats
        self._fetch_times: dict[str, float] = {}
        self._revision_seconds: list[float] = []

    def _lock_for(self, image_id: str) -> threading.Lock:
        with self._mutex:
            return self._record_locks[image_id]

    def _record_path(self, image_id: str) -> Path:
        return self.records_dir / f"{_check_id(image_id)}.json"

    def _write_json(self, path: Path, payload: dict) -> None:
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, sort_keys=True, indent=1)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def _audit(self, event: dict) -> None:
        event = {"ts": utc_now(), **event}
        with self._mutex:
            with open(self.audit_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")

    # -- loading -----------------------------------------------------------

    def list_ids(self) -> list[str]:
        return sorted(p.stem for p in self.records_dir.glob("*.json"))

    def get(self, image_id: str, track_fetch: bool = False) -> AnnotationRecord:
        path = self._record_path(image_id)
        if not path.exists():
            raise UnknownImageError(image_id)
        record = AnnotationRecord.from_dict(json.loads(path.read_text(encoding="utf-8")))
        if track_fetch:
            with self._mutex:
                self._fetch_times[image_id] = time.perf_counter()
        return record

    def image_path(self, image_id: str) -> Path:
        path = self.images_dir / f"{_check_id(image_id)}.png"
        if not path.exists():
            raise UnknownImageError(image_id)
        return path

    # -- writing -----------------------------------------------------------

    def add(self, record: AnnotationRecord, image_png: bytes | None = None) -> None:
        """Insert a fresh (normally silver) record; refuses to overwrite."""
        path = self._record_path(record.image_id)
        with self._lock_for(record.image_id):
            if path.exists():
                raise ValueError(f"record {record.image_id!r} already exists")
            self._write_json(path, record.to_dict())
            if image_png is not None:
                image_file = self.images_dir / f"{record.image_id}.png"
                image_file.write_bytes(image_png)
        self._audit({"event": "add", "image_id": record.image_id,
                     "status": record.status, "version": record.version})

    def update(self, image_id: str, polygons, degenerates, status: str,
               reviewer_note: str, expected_version: int) -> AnnotationRecord:
        """Replace the editable fields of a record, guarded by its version.

        Raises ConflictError when expected_version is stale, TransitionError
        for a disallowed status change, ValueError for malformed content.
        """
        with self._lock_for(image_id):
            current = self.get(image_id)
            if current.version != expected_version:
                raise ConflictError(image_id, expected_version, current.version)
            if not is_valid_transition(current.status, status):
                raise TransitionError(image_id, current.status, status)
            updated = AnnotationRecord(
                image_id=current.image_id,
                source_path=current.source_path,
                width=current.width,
                height=current.height,
                polygons=polygons,
                degenerates=degenerates,
                status=status,
                reviewer_note=reviewer_note,
                created_at=current.created_at,
                updated_at=utc_now(),
                version=current.version + 1,
            )
            self._write_json(self._record_path(image_id), updated.to_dict())
        revision_seconds = None
        with self._mutex:
            fetched = self._fetch_times.pop(image_id, None)
            if fetched is not None:
                revision_seconds = time.perf_counter() - fetched
                self._revision_seconds.append(revision_seconds)
        self._audit({"event": "update", "image_id": image_id,
                     "from_status": current.status, "to_status": status,
                     "from_version": current.version, "to_version": updated.version,
                     "revision_seconds": revision_seconds})
        return updated

    # -- aggregate views ----------------------------------------------------

    def records(self, status: str | None = None) -> list[AnnotationRecord]:
        out = [self.get(i) for i in self.list_ids()]
        if status is not None:
            out = [r for r in out if r.status == status]
        return out

    def write_manifest_meta(self, meta: dict) -> None:
        self._write_json(self.manifest_path, {"meta": meta})

    def manifest_meta(self) -> dict:
        if not self.manifest_path.exists():
            return {}
        return json.loads(self.manifest_path.read_text(encoding="utf-8")).get("meta", {})

    def stats(self) -> dict:
        counts = {"silver": 0, "gold": 0, "rejected": 0}
        total_polygons = 0
        for rec in self.records():
            counts[rec.status] += 1
            total_polygons += len(rec.polygons)
        with self._mutex:
            revisions = list(self._revision_seconds)
        meta = self.manifest_meta()
        stats = {
            "counts": counts,
            "total_images": sum(counts.values()),
            "total_polygons": total_polygons,
            "revisions_tracked": len(revisions),
            "mean_revision_seconds": float(sum(revisions) / len(revisions))
            if revisions else None,
            "meta": meta,
        }
        t_inf = meta.get("t_inference_mean")
        t_tuning = meta.get("t_tuning")
        n = stats["total_images"]
        if t_inf is not None and t_tuning is not None and n > 0 \
                and stats["mean_revision_seconds"] is not None:
            stats["cost_per_image_seconds"] = (
                float(t_inf) + stats["mean_revision_seconds"] + float(t_tuning) / n)
        return stats
