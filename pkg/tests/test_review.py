"""Annotation store semantics and the HTTP review service."""
import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from fastapi.testclient import TestClient

from pvelseg import images
from pvelseg.annotate import AnnotationRecord
from pvelseg.geometry import Polygon
from pvelseg.review import (AnnotationStore, ConflictError, TransitionError,
                            UnknownImageError, create_app)


def _square(x0, y0, side):
    return Polygon(np.array([[x0, y0], [x0 + side, y0],
                             [x0 + side, y0 + side], [x0, y0 + side]], float))


def _record(image_id: str, n_polygons: int = 1) -> AnnotationRecord:
    polys = [_square(2 + 8 * i, 2, 5) for i in range(n_polygons)]
    return AnnotationRecord(image_id=image_id, source_path=f"images/{image_id}.png",
                            width=64, height=64, polygons=polys)


@pytest.fixture()
def store(tmp_path):
    return AnnotationStore(tmp_path / "store")


def test_add_get_roundtrip(store):
    rec = _record("cell_001", n_polygons=2)
    store.add(rec)
    back = store.get("cell_001")
    assert back.to_dict() == rec.to_dict()
    assert store.list_ids() == ["cell_001"]


def test_add_refuses_overwrite(store):
    store.add(_record("cell_001"))
    with pytest.raises(ValueError, match="already exists"):
        store.add(_record("cell_001"))


def test_unknown_and_invalid_ids(store):
    with pytest.raises(UnknownImageError):
        store.get("nope")
    with pytest.raises(UnknownImageError):
        store.image_path("nope")
    with pytest.raises(ValueError, match="invalid image id"):
        store.get("../escape")


def test_update_bumps_version_and_transitions(store):
    store.add(_record("cell_001"))
    updated = store.update("cell_001", [_square(4, 4, 6)], [], "gold",
                           "tightened the outline", expected_version=1)
    assert updated.version == 2
    assert updated.status == "gold"
    back = store.get("cell_001")
    assert back.version == 2
    assert back.polygons[0].vertices.tolist() == [[4, 4], [10, 4], [10, 10], [4, 10]]
    assert back.reviewer_note == "tightened the outline"


def test_stale_version_conflicts(store):
    store.add(_record("cell_001"))
    store.update("cell_001", [], [], "gold", "", expected_version=1)
    with pytest.raises(ConflictError) as err:
        store.update("cell_001", [], [], "gold", "", expected_version=1)
    assert err.value.expected == 1
    assert err.value.actual == 2


def test_disallowed_transitions(store):
    store.add(_record("cell_001"))
    with pytest.raises(TransitionError):
        store.update("cell_001", [], [], "silver", "", expected_version=1)
    store.update("cell_001", [], [], "rejected", "noise", expected_version=1)
    with pytest.raises(TransitionError):
        store.update("cell_001", [], [], "gold", "", expected_version=2)


def test_audit_log_records_mutations(store):
    store.add(_record("cell_001"))
    store.update("cell_001", [], [], "gold", "", expected_version=1)
    lines = store.audit_path.read_text().strip().splitlines()
    events = [json.loads(line) for line in lines]
    assert [e["event"] for e in events] == ["add", "update"]
    assert events[1]["from_version"] == 1
    assert events[1]["to_version"] == 2
    assert all("ts" in e for e in events)


def test_fetch_tracking_feeds_revision_stats(store):
    store.add(_record("cell_001"))
    store.get("cell_001", track_fetch=True)
    store.update("cell_001", [], [], "gold", "", expected_version=1)
    stats = store.stats()
    assert stats["revisions_tracked"] == 1
    assert stats["mean_revision_seconds"] >= 0.0
    assert stats["counts"] == {"silver": 0, "gold": 1, "rejected": 0}


def test_records_filter_and_stats_cost(store):
    store.add(_record("cell_001"))
    store.add(_record("cell_002", n_polygons=3))
    store.get("cell_001", track_fetch=True)
    store.update("cell_001", [], [], "gold", "", expected_version=1)
    assert [r.image_id for r in store.records("silver")] == ["cell_002"]
    store.write_manifest_meta({"t_inference_mean": 2.0, "t_tuning": 10.0})
    stats = store.stats()
    assert stats["total_images"] == 2
    assert stats["total_polygons"] == 3
    expected = 2.0 + stats["mean_revision_seconds"] + 10.0 / 2
    assert stats["cost_per_image_seconds"] == pytest.approx(expected)


# -- HTTP service ------------------------------------------------------------


@pytest.fixture()
def client(tmp_path):
    store = AnnotationStore(tmp_path / "store")
    cell = np.full((64, 64), 0.5)
    png_path = tmp_path / "cell.png"
    images.save_png(cell, png_path)
    store.add(_record("cell_001", n_polygons=2), image_png=png_path.read_bytes())
    store.add(_record("cell_002"))
    return TestClient(create_app(store))


def test_scripted_review_session(client):
    listing = client.get("/api/images").json()["images"]
    assert [row["image_id"] for row in listing] == ["cell_001", "cell_002"]
    assert listing[0]["n_polygons"] == 2
    assert listing[0]["status"] == "silver"

    png = client.get("/api/images/cell_001")
    assert png.status_code == 200
    assert png.content.startswith(b"\x89PNG")

    record = client.get("/api/annotations/cell_001").json()
    assert record["version"] == 1
    edited = record["polygons"]
    edited[0][0] = [3.0, 3.0]  # reviewer drags one vertex

    put = client.put("/api/annotations/cell_001", json={
        "expected_version": record["version"],
        "record": {"polygons": edited, "degenerates": [],
                   "status": "gold", "reviewer_note": "moved a corner"},
    })
    assert put.status_code == 200
    body = put.json()
    assert body["version"] == 2
    assert body["status"] == "gold"
    assert body["polygons"][0][0] == [3.0, 3.0]

    export = client.get("/api/export/coco")
    assert export.status_code == 200
    doc = json.loads(export.text)
    assert [img["file_name"] for img in doc["images"]] == ["images/cell_001.png"]
    assert len(doc["annotations"]) == 2

    stats = client.get("/api/stats").json()
    assert stats["counts"]["gold"] == 1
    assert stats["revisions_tracked"] == 1


def test_http_error_shapes(client):
    missing = client.get("/api/annotations/ghost")
    assert missing.status_code == 404
    assert missing.json()["code"] == "unknown_image"
    assert client.get("/api/images/ghost").status_code == 404

    stale = client.put("/api/annotations/cell_001", json={
        "expected_version": 7,
        "record": {"polygons": [], "degenerates": [], "status": "gold"},
    })
    assert stale.status_code == 409
    body = stale.json()
    assert body["code"] == "version_conflict"
    assert (body["expected"], body["actual"]) == (7, 1)

    bad_status = client.put("/api/annotations/cell_001", json={
        "expected_version": 1,
        "record": {"polygons": [], "degenerates": [], "status": "bronze"},
    })
    assert bad_status.status_code == 422
    assert bad_status.json()["code"] == "invalid_status"

    demote = client.put("/api/annotations/cell_001", json={
        "expected_version": 1,
        "record": {"polygons": [], "degenerates": [], "status": "silver"},
    })
    assert demote.status_code == 422
    assert demote.json()["code"] == "invalid_transition"

    no_version = client.put("/api/annotations/cell_001",
                            json={"record": {"status": "gold"}})
    assert no_version.status_code == 422
    assert no_version.json()["code"] == "invalid_body"

    not_json = client.put("/api/annotations/cell_001", content=b"not json",
                          headers={"content-type": "application/json"})
    assert not_json.status_code == 422

    bad_filter = client.get("/api/export/coco", params={"status": "platinum"})
    assert bad_filter.status_code == 422


def test_concurrent_updates_have_one_winner(client):
    def attempt(note):
        return client.put("/api/annotations/cell_002", json={
            "expected_version": 1,
            "record": {"polygons": [], "degenerates": [],
                       "status": "gold", "reviewer_note": note},
        })

    with ThreadPoolExecutor(max_workers=2) as pool:
        results = list(pool.map(attempt, ["first reviewer", "second reviewer"]))
    assert sorted(r.status_code for r in results) == [200, 409]
    final = client.get("/api/annotations/cell_002").json()
    assert final["version"] == 2
    winner = next(r for r in results if r.status_code == 200)
    assert final["reviewer_note"] == winner.json()["reviewer_note"]
