"""HTTP review service over an AnnotationStore.

Endpoints (JSON unless noted):
  GET  /api/images                 image listing with status and version
  GET  /api/images/{id}            source raster (PNG)
  GET  /api/annotations/{id}       one record; marks the fetch for timing
  PUT  /api/annotations/{id}       update with optimistic version check
  GET  /api/export/coco            COCO document (gold records by default)
  GET  /api/stats                  status counts, revision timing, cost
Errors carry {"code": ..., "message": ...} with 404/409/422 as appropriate.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from ..annotate import DegenerateShape, VALID_STATUSES, to_coco
from ..geometry import Polygon
from .store import AnnotationStore, ConflictError, TransitionError, UnknownImageError

log = logging.getLogger(__name__)


def _error(status_code: int, code: str, message: str, **extra) -> JSONResponse:
    return JSONResponse(status_code=status_code,
                        content={"code": code, "message": message, **extra})


def _parse_polygons(raw) -> list[Polygon]:
    if not isinstance(raw, list):
        raise ValueError("polygons must be a list of vertex lists")
    return [Polygon(np.asarray(verts, dtype=np.float64)) for verts in raw]


def _parse_degenerates(raw) -> list[DegenerateShape]:
    if not isinstance(raw, list):
        raise ValueError("degenerates must be a list")
    return [DegenerateShape(kind=d["kind"], points=d["points"]) for d in raw]


def create_app(store: AnnotationStore, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="pvelseg review", docs_url=None, redoc_url=None)

    @app.get("/api/images")
    def list_images():
        rows = []
        for image_id in store.list_ids():
            rec = store.get(image_id)
            rows.append({
                "image_id": rec.image_id,
                "status": rec.status,
                "version": rec.version,
                "width": rec.width,
                "height": rec.height,
                "n_polygons": len(rec.polygons),
                "n_degenerates": len(rec.degenerates),
            })
        return {"images": rows}

    @app.get("/api/images/{image_id}")
    def get_image(image_id: str):
        try:
            return FileResponse(store.image_path(image_id), media_type="image/png")
        except (UnknownImageError, ValueError):
            return _error(404, "unknown_image", f"no image {image_id!r}")

    @app.get("/api/annotations/{image_id}")
    def get_annotation(image_id: str):
        try:
            return store.get(image_id, track_fetch=True).to_dict()
        except (UnknownImageError, ValueError):
            return _error(404, "unknown_image", f"no record {image_id!r}")

    @app.put("/api/annotations/{image_id}")
    async def put_annotation(image_id: str, request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(422, "invalid_body", "request body must be JSON")
        if not isinstance(body, dict) or "expected_version" not in body:
            return _error(422, "invalid_body", "body needs expected_version")
        record_part = body.get("record", {})
        status = record_part.get("status")
        if status not in VALID_STATUSES:
            return _error(422, "invalid_status",
                          f"status must be one of {list(VALID_STATUSES)}")
        try:
            expected = int(body["expected_version"])
            polygons = _parse_polygons(record_part.get("polygons", []))
            degenerates = _parse_degenerates(record_part.get("degenerates", []))
            note = str(record_part.get("reviewer_note", ""))
        except (ValueError, TypeError, KeyError) as exc:
            return _error(422, "invalid_record", str(exc))
        try:
            updated = store.update(image_id, polygons, degenerates, status,
                                   note, expected)
        except UnknownImageError:
            return _error(404, "unknown_image", f"no record {image_id!r}")
        except ConflictError as exc:
            return _error(409, "version_conflict", str(exc),
                          expected=exc.expected, actual=exc.actual)
        except TransitionError as exc:
            return _error(422, "invalid_transition", str(exc))
        except ValueError as exc:
            return _error(422, "invalid_record", str(exc))
        return updated.to_dict()

    @app.get("/api/export/coco")
    def export_coco(status: str = "gold"):
        if status not in VALID_STATUSES and status != "all":
            return _error(422, "invalid_status", f"unknown status filter {status!r}")
        records = store.records(None if status == "all" else status)
        return PlainTextResponse(to_coco(records), media_type="application/json")

    @app.get("/api/stats")
    def get_stats():
        return store.stats()

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:
        @app.get("/")
        def index():
            return {"service": "pvelseg review", "endpoints": [
                "/api/images", "/api/images/{id}", "/api/annotations/{id}",
                "/api/export/coco", "/api/stats"]}

    return app


def serve(store_dir: str | Path, host: str = "127.0.0.1", port: int = 8008,
          ui_dir: str | Path | None = None) -> None:
    """Run the review service until interrupted."""
    import uvicorn

    app = create_app(AnnotationStore(store_dir), ui_dir=ui_dir)
    log.info("review service on http://%s:%d (store: %s)", host, port, store_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
