import { describe, expect, it } from "vitest";

import { ApiError, ConflictError, ReviewApi } from "../src/api.js";
import { StubServer } from "./stub-server.js";

const RING = [
  [1, 1],
  [5, 1],
  [5, 5],
];

describe("ReviewApi", () => {
  it("lists images with status and geometry counts", async () => {
    const stub = new StubServer();
    stub.addRecord("cell_001", [RING]);
    stub.addRecord("cell_002", [], "gold");
    const api = new ReviewApi("", stub.fetch);

    const rows = await api.listImages();
    expect(rows.map((r) => r.image_id)).toEqual(["cell_001", "cell_002"]);
    expect(rows[0]).toMatchObject({ status: "silver", version: 1, n_polygons: 1 });
    expect(rows[1]).toMatchObject({ status: "gold", n_polygons: 0 });
  });

  it("fetches a record with its version token", async () => {
    const stub = new StubServer();
    stub.addRecord("cell_001", [RING]);
    const api = new ReviewApi("", stub.fetch);

    const rec = await api.getRecord("cell_001");
    expect(rec.version).toBe(1);
    expect(rec.polygons).toEqual([RING]);
  });

  it("PUT sends expected_version plus the record body and returns the save", async () => {
    const stub = new StubServer();
    stub.addRecord("cell_001", [RING]);
    const api = new ReviewApi("", stub.fetch);

    const saved = await api.putRecord("cell_001", 1, {
      polygons: [RING],
      degenerates: [],
      status: "gold",
      reviewer_note: "ok",
    });
    expect(saved.version).toBe(2);
    expect(saved.status).toBe("gold");
    expect(stub.puts).toHaveLength(1);
    expect(stub.puts[0].expectedVersion).toBe(1);
    expect(stub.puts[0].record.reviewer_note).toBe("ok");
  });

  it("maps 409 to ConflictError carrying both versions", async () => {
    const stub = new StubServer();
    stub.addRecord("cell_001", [RING]);
    stub.externalUpdate("cell_001", [RING]);
    const api = new ReviewApi("", stub.fetch);

    const attempt = api.putRecord("cell_001", 1, {
      polygons: [],
      degenerates: [],
      status: "gold",
      reviewer_note: "",
    });
    await expect(attempt).rejects.toBeInstanceOf(ConflictError);
    const err = (await attempt.catch((e: unknown) => e)) as ConflictError;
    expect(err.expected).toBe(1);
    expect(err.actual).toBe(2);
  });

  it("maps other errors to ApiError with the service code", async () => {
    const stub = new StubServer();
    const api = new ReviewApi("", stub.fetch);

    const err = (await api.getRecord("missing").catch((e: unknown) => e)) as ApiError;
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(404);
    expect(err.code).toBe("unknown_image");
  });

  it("rejects transitions the service refuses", async () => {
    const stub = new StubServer();
    stub.addRecord("cell_001", [RING], "gold");
    const api = new ReviewApi("", stub.fetch);

    const err = (await api
      .putRecord("cell_001", 1, {
        polygons: [],
        degenerates: [],
        status: "rejected",
        reviewer_note: "",
      })
      .catch((e: unknown) => e)) as ApiError;
    expect(err.status).toBe(422);
    expect(err.code).toBe("invalid_transition");
  });

  it("builds image pixel URLs without fetching them", () => {
    const api = new ReviewApi("http://host:9000", (() => {
      throw new Error("must not fetch");
    }) as never);
    expect(api.imageUrl("cell 1")).toBe("http://host:9000/api/images/cell%201");
  });
});
